# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels. Operation-for-operation mirror of ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, sqrt, INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()

BACKEND = "cython"

cdef int MAX_STRAT = 8
# most-negative entering rule for this many pivots per node, then Bland's rule
cdef int PIVOT_CAP_PER_NODE = 50


cdef struct Workspace:
    int cap_m
    int cap_n
    double* cost
    double* flow
    char* basic
    double* a
    double* b
    double* u
    double* v
    int* parent
    char* seen
    int* stack
    int* path_r
    int* path_c


cdef int ws_init(Workspace* ws, int m, int n) except -1:
    cdef int nodes = m + n
    ws.cap_m = m
    ws.cap_n = n
    ws.cost = <double*> malloc(m * n * sizeof(double))
    ws.flow = <double*> malloc(m * n * sizeof(double))
    ws.basic = <char*> malloc(m * n * sizeof(char))
    ws.a = <double*> malloc(m * sizeof(double))
    ws.b = <double*> malloc(n * sizeof(double))
    ws.u = <double*> malloc(m * sizeof(double))
    ws.v = <double*> malloc(n * sizeof(double))
    ws.parent = <int*> malloc(nodes * sizeof(int))
    ws.seen = <char*> malloc(nodes * sizeof(char))
    ws.stack = <int*> malloc(nodes * sizeof(int))
    ws.path_r = <int*> malloc(nodes * sizeof(int))
    ws.path_c = <int*> malloc(nodes * sizeof(int))
    if (ws.cost == NULL or ws.flow == NULL or ws.basic == NULL or ws.a == NULL
            or ws.b == NULL or ws.u == NULL or ws.v == NULL or ws.parent == NULL
            or ws.seen == NULL or ws.stack == NULL or ws.path_r == NULL or ws.path_c == NULL):
        ws_free(ws)
        raise MemoryError()
    return 0


cdef void ws_free(Workspace* ws) noexcept:
    free(ws.cost); free(ws.flow); free(ws.basic); free(ws.a); free(ws.b)
    free(ws.u); free(ws.v); free(ws.parent); free(ws.seen); free(ws.stack)
    free(ws.path_r); free(ws.path_c)
    ws.cost = NULL


cdef double _transport(int m, int n, const double* mu, const double* nu, Workspace* ws) noexcept nogil:
    """Transportation simplex; cost must already sit in ws.cost (row-major m x n)."""
    cdef double* cost = ws.cost
    cdef double* flow = ws.flow
    cdef char* basic = ws.basic
    cdef double* a = ws.a
    cdef double* b = ws.b
    cdef double* u = ws.u
    cdef double* v = ws.v
    cdef int* parent = ws.parent
    cdef char* seen = ws.seen
    cdef int* stack = ws.stack
    cdef int* path_r = ws.path_r
    cdef int* path_c = ws.path_c
    cdef int i, j, r, c, k, node, other, top, nodes = m + n, target, prev, plen
    cdef int enter_i, enter_j, leave_r, leave_c
    cdef double x, cmax, tol, theta, f, value, best
    cdef int pivots = 0, pivot_cap = PIVOT_CAP_PER_NODE * (m + n)

    for k in range(m * n):
        flow[k] = 0.0
        basic[k] = 0
    for k in range(m):
        a[k] = mu[k]
    for k in range(n):
        b[k] = nu[k]
    i = 0
    j = 0
    while True:
        x = a[i] if a[i] < b[j] else b[j]
        flow[i * n + j] = x
        basic[i * n + j] = 1
        a[i] -= x
        b[j] -= x
        if i == m - 1 and j == n - 1:
            break
        if i == m - 1:
            j += 1
        elif j == n - 1:
            i += 1
        elif a[i] <= b[j]:
            i += 1
        else:
            j += 1

    cmax = 0.0
    for k in range(m * n):
        if cost[k] > cmax:
            cmax = cost[k]
    tol = 1e-12 * (1.0 + cmax)
    for k in range(m):
        u[k] = 0.0
    for k in range(n):
        v[k] = 0.0

    while True:
        for k in range(nodes):
            seen[k] = 0
        seen[0] = 1
        u[0] = 0.0
        top = 0
        stack[top] = 0
        top += 1
        while top > 0:
            top -= 1
            node = stack[top]
            if node < m:
                for c in range(n):
                    if basic[node * n + c] and not seen[m + c]:
                        seen[m + c] = 1
                        v[c] = cost[node * n + c] - u[node]
                        stack[top] = m + c
                        top += 1
            else:
                c = node - m
                for r in range(m):
                    if basic[r * n + c] and not seen[r]:
                        seen[r] = 1
                        u[r] = cost[r * n + c] - v[c]
                        stack[top] = r
                        top += 1

        enter_i = -1
        enter_j = -1
        if pivots < pivot_cap:
            best = -tol
            for r in range(m):
                for c in range(n):
                    if not basic[r * n + c]:
                        x = cost[r * n + c] - u[r] - v[c]
                        if x < best:
                            best = x
                            enter_i = r
                            enter_j = c
        else:
            for r in range(m):
                for c in range(n):
                    if not basic[r * n + c] and cost[r * n + c] - u[r] - v[c] < -tol:
                        enter_i = r
                        enter_j = c
                        break
                if enter_i >= 0:
                    break
        if enter_i < 0:
            break
        pivots += 1

        for k in range(nodes):
            seen[k] = 0
            parent[k] = -1
        seen[enter_i] = 1
        top = 0
        stack[top] = enter_i
        top += 1
        target = m + enter_j
        while top > 0:
            top -= 1
            node = stack[top]
            if node == target:
                break
            if node < m:
                for c in range(n):
                    if basic[node * n + c] and not seen[m + c]:
                        seen[m + c] = 1
                        parent[m + c] = node
                        stack[top] = m + c
                        top += 1
            else:
                c = node - m
                for r in range(m):
                    if basic[r * n + c] and not seen[r]:
                        seen[r] = 1
                        parent[r] = node
                        stack[top] = r
                        top += 1
        # path edges collected from the column end, then read in reverse
        plen = 0
        node = target
        while node != enter_i:
            prev = parent[node]
            if prev < m:
                path_r[plen] = prev
                path_c[plen] = node - m
            else:
                path_r[plen] = node
                path_c[plen] = prev - m
            plen += 1
            node = prev

        theta = INFINITY
        leave_r = -1
        leave_c = -1
        k = 0
        while k < plen:
            r = path_r[plen - 1 - k]
            c = path_c[plen - 1 - k]
            f = flow[r * n + c]
            if f < theta or (f == theta and (r * n + c) < (leave_r * n + leave_c)):
                theta = f
                leave_r = r
                leave_c = c
            k += 2
        flow[enter_i * n + enter_j] = theta
        for k in range(plen):
            r = path_r[plen - 1 - k]
            c = path_c[plen - 1 - k]
            if k % 2 == 0:
                flow[r * n + c] -= theta
            else:
                flow[r * n + c] += theta
        basic[enter_i * n + enter_j] = 1
        basic[leave_r * n + leave_c] = 0
        flow[leave_r * n + leave_c] = 0.0

    value = 0.0
    for k in range(m * n):
        if basic[k]:
            value += flow[k] * cost[k]
    return value


def transport(mu, nu, cost):
    """Exact optimal transport on strictly positive marginals -> (value, plan, u, v)."""
    cdef double[::1] mu_v = np.ascontiguousarray(mu, dtype=np.float64)
    cdef double[::1] nu_v = np.ascontiguousarray(nu, dtype=np.float64)
    cdef double[:, ::1] cost_v = np.ascontiguousarray(cost, dtype=np.float64)
    cdef int m = mu_v.shape[0], n = nu_v.shape[0], k
    cdef Workspace ws
    cdef double value
    ws_init(&ws, m, n)
    try:
        for k in range(m * n):
            ws.cost[k] = cost_v[k // n, k % n]
        value = _transport(m, n, &mu_v[0], &nu_v[0], &ws)
        plan = np.array([ws.flow[k] for k in range(m * n)], dtype=np.float64).reshape(m, n)
        u = np.array([ws.u[k] for k in range(m)], dtype=np.float64)
        v = np.array([ws.v[k] for k in range(n)], dtype=np.float64)
    finally:
        ws_free(&ws)
    return value, plan, u, v


def bisim_sweep(double[:, ::1] dprime,
                const long long[::1] src_ptr, const long long[::1] src_idx,
                const double[::1] src_p, const double[::1] src_r,
                const long long[::1] tgt_ptr, const long long[::1] tgt_idx,
                const double[::1] tgt_p, const double[::1] tgt_r,
                double c_r, double c_t, double[:, :, ::1] out):
    """One Jacobi sweep of the restricted lax-bisimulation operator into ``out``."""
    cdef Py_ssize_t S1 = out.shape[0], S2 = out.shape[1], A2 = out.shape[2]
    cdef Py_ssize_t s1, kk, k, l, m, n, b1, b2
    cdef int max_m = 1, max_n = 1
    cdef double val, r1, total
    cdef Workspace ws
    for s1 in range(S1):
        if src_ptr[s1 + 1] - src_ptr[s1] > max_m:
            max_m = <int>(src_ptr[s1 + 1] - src_ptr[s1])
    for kk in range(S2 * A2):
        if tgt_ptr[kk + 1] - tgt_ptr[kk] > max_n:
            max_n = <int>(tgt_ptr[kk + 1] - tgt_ptr[kk])
    ws_init(&ws, max_m, max_n)
    try:
        with nogil:
            for s1 in range(S1):
                b1 = src_ptr[s1]
                m = src_ptr[s1 + 1] - b1
                r1 = src_r[s1]
                for kk in range(S2 * A2):
                    val = c_r * fabs(r1 - tgt_r[kk])
                    if c_t != 0.0:
                        b2 = tgt_ptr[kk]
                        n = tgt_ptr[kk + 1] - b2
                        if m == 1:
                            total = 0.0
                            for l in range(n):
                                total += tgt_p[b2 + l] * dprime[src_idx[b1], tgt_idx[b2 + l]]
                        elif n == 1:
                            total = 0.0
                            for k in range(m):
                                total += src_p[b1 + k] * dprime[src_idx[b1 + k], tgt_idx[b2]]
                        else:
                            for k in range(m):
                                for l in range(n):
                                    ws.cost[k * n + l] = dprime[src_idx[b1 + k], tgt_idx[b2 + l]]
                            total = _transport(<int>m, <int>n, &src_p[b1], &tgt_p[b2], &ws)
                        val += c_t * total
                    out[s1, kk // A2, kk % A2] = val
    finally:
        ws_free(&ws)


# -- Q-learning ------------------------------------------------------------------

cdef inline Py_ssize_t _draw(const double[::1] cum, double u, Py_ssize_t lo, Py_ssize_t hi) noexcept nogil:
    cdef Py_ssize_t top = hi, mid
    while lo < hi:
        mid = (lo + hi) // 2
        if u < cum[mid]:
            hi = mid
        else:
            lo = mid + 1
    return lo if lo < top else top - 1


cdef inline int _greedy(double[:, ::1] q, Py_ssize_t s) noexcept nogil:
    cdef int best = 0, k
    for k in range(1, q.shape[1]):
        if q[s, k] > q[s, best]:
            best = k
    return best


cdef int _softmax_sample(double[:, ::1] values, Py_ssize_t s, double temperature, double u, double* weights) noexcept nogil:
    cdef int A = <int>values.shape[1], k
    cdef double mx = values[s, 0], w, total = 0.0, threshold, acc = 0.0
    for k in range(1, A):
        if values[s, k] > mx:
            mx = values[s, k]
    for k in range(A):
        w = exp((values[s, k] - mx) / temperature)
        weights[k] = w
        total += w
    threshold = u * total
    for k in range(A):
        acc += weights[k]
        if threshold < acc:
            return k
    return A - 1


cdef int _sample_probs(double[:, ::1] probs, Py_ssize_t s, double u) noexcept nogil:
    cdef int A = <int>probs.shape[1], k
    cdef double total = 0.0, threshold, acc = 0.0
    for k in range(A):
        total += probs[s, k]
    threshold = u * total
    for k in range(A):
        acc += probs[s, k]
        if threshold < acc:
            return k
    return A - 1


cdef void _pursuit_update(double[:, ::1] pi, Py_ssize_t s, int greedy, double beta) noexcept nogil:
    cdef int k
    for k in range(pi.shape[1]):
        if k == greedy:
            pi[s, k] += beta * (1.0 - pi[s, k])
        else:
            pi[s, k] += beta * (0.0 - pi[s, k])


def train_segment(double[:, ::1] q, long long[:, ::1] counts, double[:, ::1] pursuit,
                  double[:, ::1] adv, const double[:, ::1] uniforms, long long state,
                  long long episode_step, long long episode_limit, long long step0,
                  const long long[::1] succ_ptr, const long long[::1] succ_idx, const double[::1] succ_cum,
                  const double[:, ::1] reward, const unsigned char[::1] terminal,
                  const long long[::1] init_idx, const double[::1] init_cum,
                  int code, double epsilon, double epsilon_bisim, double temperature,
                  double pursuit_beta, double mbie_beta, double lr, double gamma,
                  double tau0, double alpha, int anneal):
    """Run ``len(uniforms)`` Q-learning steps in place; returns ``(state, episode_step)``."""
    cdef Py_ssize_t A = q.shape[1], T = uniforms.shape[0], t, s = state, row, nxt, k
    cdef long long ep = episode_step
    cdef int a
    cdef double u0, u1, u2, u3, u4, tau = tau0, r, target, best
    cdef bint uses_extra = code >= 4
    cdef double* weights
    cdef long long n
    if code < 0 or code > MAX_STRAT:
        raise ValueError(f"unknown strategy code {code}")
    weights = <double*> malloc(A * sizeof(double))
    if weights == NULL:
        raise MemoryError()
    with nogil:
        for t in range(T):
            u0 = uniforms[t, 0]
            u1 = uniforms[t, 1]
            u2 = uniforms[t, 2]
            u3 = uniforms[t, 3]
            u4 = uniforms[t, 4]
            n = step0 + t
            if uses_extra:
                if anneal:
                    tau = tau0 * (1.0 + alpha * <double>n)
                else:
                    tau = tau0
            if code == 0 or code == 2:
                if u0 < epsilon:
                    a = <int>(u2 * A)
                    if a >= A:
                        a = <int>A - 1
                else:
                    a = _greedy(q, s)
            elif code == 1:
                a = _softmax_sample(q, s, temperature, u2, weights)
            elif code == 3:
                a = _sample_probs(pursuit, s, u2)
            elif code == 4 or code == 8:
                if u0 < epsilon:
                    a = _softmax_sample(adv, s, tau, u2, weights)
                else:
                    a = _greedy(q, s)
            elif code == 5:
                if u0 < epsilon:
                    if u1 < epsilon_bisim:
                        a = _softmax_sample(adv, s, tau, u2, weights)
                    else:
                        a = <int>(u2 * A)
                        if a >= A:
                            a = <int>A - 1
                else:
                    a = _greedy(q, s)
            elif code == 6:
                if u0 < epsilon:
                    a = _softmax_sample(adv, s, tau, u2, weights)
                else:
                    a = _softmax_sample(q, s, temperature, u2, weights)
            else:
                if u0 < epsilon:
                    a = _softmax_sample(adv, s, tau, u2, weights)
                else:
                    _pursuit_update(pursuit, s, _greedy(q, s), pursuit_beta)
                    a = _sample_probs(pursuit, s, u2)

            row = s * A + a
            nxt = succ_idx[_draw(succ_cum, u3, succ_ptr[row], succ_ptr[row + 1])]
            r = reward[s, a]
            counts[s, a] += 1
            if code == 2 or code == 8:
                r += mbie_beta / sqrt(<double>counts[s, a])
            if terminal[nxt]:
                target = r
            else:
                best = q[nxt, 0]
                for k in range(1, A):
                    if q[nxt, k] > best:
                        best = q[nxt, k]
                target = r + gamma * best
            q[s, a] += lr * (target - q[s, a])
            if code == 3:
                _pursuit_update(pursuit, s, _greedy(q, s), pursuit_beta)
            ep += 1
            if terminal[nxt] or ep == episode_limit:
                s = init_idx[_draw(init_cum, u4, 0, init_cum.shape[0])]
                ep = 0
            else:
                s = nxt
    free(weights)
    return s, ep


def rollout_averages(const long long[::1] policy, const double[:, ::1] uniforms,
                     const long long[::1] succ_ptr, const long long[::1] succ_idx,
                     const double[::1] succ_cum, const double[:, ::1] reward,
                     const unsigned char[::1] terminal,
                     const long long[::1] init_idx, const double[::1] init_cum):
    """Per-rollout average reward of a deterministic policy."""
    cdef Py_ssize_t N = uniforms.shape[0], horizon = uniforms.shape[1] - 1
    cdef Py_ssize_t A = reward.shape[1], i, t, s, a, row, steps
    cdef double total
    out = np.empty(N, dtype=np.float64)
    cdef double[::1] out_v = out
    with nogil:
        for i in range(N):
            s = init_idx[_draw(init_cum, uniforms[i, 0], 0, init_cum.shape[0])]
            total = 0.0
            steps = 0
            for t in range(horizon):
                a = policy[s]
                total += reward[s, a]
                steps += 1
                row = s * A + a
                s = succ_idx[_draw(succ_cum, uniforms[i, t + 1], succ_ptr[row], succ_ptr[row + 1])]
                if terminal[s]:
                    break
            out_v[i] = total / steps
    return out
