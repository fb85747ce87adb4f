"""Pure-Python kernels; the compiled ``_ckernels`` module mirrors these exactly.

Both backends perform the same floating-point operations in the same order,
so they return bit-identical results for identical inputs.
"""

import math
from bisect import bisect_right

import numpy as np

# strategy codes shared with _ckernels.pyx
EPS_GREEDY = 0
BOLTZMANN = 1
MBIE_EB = 2
PURSUIT = 3
EXTRA_EPS_GREEDY = 4
EXTRA_PLUS_UNIFORM = 5
EXTRA_PLUS_SOFTMAX = 6
EXTRA_PLUS_PURSUIT = 7
EXTRA_PLUS_MBIE = 8

BACKEND = "python"
PIVOT_CAP_PER_NODE = 50


def _transport(mu, nu, cost, m, n):
    """Transportation simplex on dense lists. Returns (value, flow, u, v).

    Northwest-corner start. The entering cell has the most negative reduced
    cost; after ``PIVOT_CAP_PER_NODE * (m + n)`` pivots the rule switches to
    Bland's (first eligible cell), which cannot cycle on degenerate bases.
    The leaving cell is always the lowest-index blocking one.
    """
    flow = [[0.0] * n for _ in range(m)]
    basic = [[False] * n for _ in range(m)]
    a = list(mu)
    b = list(nu)
    i = j = 0
    while True:
        x = a[i] if a[i] < b[j] else b[j]
        flow[i][j] = x
        basic[i][j] = True
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
    for row in cost:
        for c in row:
            if c > cmax:
                cmax = c
    tol = 1e-12 * (1.0 + cmax)
    u = [0.0] * m
    v = [0.0] * n
    nodes = m + n
    pivots = 0
    pivot_cap = PIVOT_CAP_PER_NODE * nodes
    while True:
        # duals from the basis tree, rooted at row 0
        adj = [[] for _ in range(nodes)]
        for r in range(m):
            for c in range(n):
                if basic[r][c]:
                    adj[r].append(m + c)
                    adj[m + c].append(r)
        seen = [False] * nodes
        seen[0] = True
        u[0] = 0.0
        stack = [0]
        while stack:
            node = stack.pop()
            for other in adj[node]:
                if not seen[other]:
                    seen[other] = True
                    if node < m:
                        v[other - m] = cost[node][other - m] - u[node]
                    else:
                        u[other] = cost[other][node - m] - v[node - m]
                    stack.append(other)
        enter_i = enter_j = -1
        if pivots < pivot_cap:
            best = -tol
            for r in range(m):
                for c in range(n):
                    if not basic[r][c]:
                        x = cost[r][c] - u[r] - v[c]
                        if x < best:
                            best = x
                            enter_i, enter_j = r, c
        else:
            for r in range(m):
                for c in range(n):
                    if not basic[r][c] and cost[r][c] - u[r] - v[c] < -tol:
                        enter_i, enter_j = r, c
                        break
                if enter_i >= 0:
                    break
        if enter_i < 0:
            break
        pivots += 1
        # tree path from row enter_i to column enter_j
        parent = [-1] * nodes
        seen = [False] * nodes
        seen[enter_i] = True
        stack = [enter_i]
        target = m + enter_j
        while stack:
            node = stack.pop()
            if node == target:
                break
            for other in adj[node]:
                if not seen[other]:
                    seen[other] = True
                    parent[other] = node
                    stack.append(other)
        path = []
        node = target
        while node != enter_i:
            prev = parent[node]
            path.append((prev, node - m) if prev < m else (node, prev - m))
            node = prev
        path.reverse()
        # edges alternate -, +, -, ... starting at row enter_i
        theta = math.inf
        leave = None
        for k in range(0, len(path), 2):
            r, c = path[k]
            f = flow[r][c]
            if f < theta or (f == theta and (r * n + c) < (leave[0] * n + leave[1])):
                theta = f
                leave = (r, c)
        flow[enter_i][enter_j] = theta
        for k, (r, c) in enumerate(path):
            if k % 2 == 0:
                flow[r][c] -= theta
            else:
                flow[r][c] += theta
        basic[enter_i][enter_j] = True
        basic[leave[0]][leave[1]] = False
        flow[leave[0]][leave[1]] = 0.0

    value = 0.0
    for r in range(m):
        for c in range(n):
            if basic[r][c]:
                value += flow[r][c] * cost[r][c]
    return value, flow, u, v


def transport(mu, nu, cost):
    """Exact optimal transport on strictly positive marginals.

    Returns ``(value, plan, u, v)`` with dual potentials from the optimal basis.
    """
    mu = [float(x) for x in mu]
    nu = [float(x) for x in nu]
    m, n = len(mu), len(nu)
    cost = [[float(c) for c in row] for row in np.asarray(cost)]
    value, flow, u, v = _transport(mu, nu, cost, m, n)
    return value, np.array(flow, dtype=np.float64).reshape(m, n), np.array(u), np.array(v)


def _ot_value(p1, idx1, p2, idx2, dprime):
    m, n = len(p1), len(p2)
    if m == 1:
        row = dprime[idx1[0]]
        total = 0.0
        for l in range(n):
            total += p2[l] * row[idx2[l]]
        return total
    if n == 1:
        col = idx2[0]
        total = 0.0
        for k in range(m):
            total += p1[k] * dprime[idx1[k]][col]
        return total
    cost = [[dprime[x][y] for y in idx2] for x in idx1]
    return _transport(p1, p2, cost, m, n)[0]


def bisim_sweep(dprime, src_ptr, src_idx, src_p, src_r, tgt_ptr, tgt_idx, tgt_p, tgt_r, c_r, c_t, out):
    """One Jacobi sweep of the restricted lax-bisimulation operator into ``out``.

    ``out[s1, s2, a2] = c_r |R1 - R2| + c_t * W(dprime)(P1(s1), P2(s2, a2))``,
    with target rows flattened as ``s2 * A2 + a2``.
    """
    S1, S2, A2 = out.shape
    dp = dprime.tolist()
    sp, si, spp, sr = src_ptr.tolist(), src_idx.tolist(), src_p.tolist(), src_r.tolist()
    tp, ti, tpp, tr = tgt_ptr.tolist(), tgt_idx.tolist(), tgt_p.tolist(), tgt_r.tolist()
    tgt_rows = [(ti[tp[k]:tp[k + 1]], tpp[tp[k]:tp[k + 1]]) for k in range(S2 * A2)]
    result = [0.0] * (S1 * S2 * A2)
    pos = 0
    for s1 in range(S1):
        idx1 = si[sp[s1]:sp[s1 + 1]]
        p1 = spp[sp[s1]:sp[s1 + 1]]
        r1 = sr[s1]
        for k in range(S2 * A2):
            val = c_r * abs(r1 - tr[k])
            if c_t != 0.0:
                idx2, p2 = tgt_rows[k]
                val += c_t * _ot_value(p1, idx1, p2, idx2, dp)
            result[pos] = val
            pos += 1
    out[...] = np.array(result).reshape(S1, S2, A2)


# -- Q-learning ----------------------------------------------------------------


def _draw(cum, u, lo, hi):
    """Index into a CSR cumulative row; clamps rounding overflow to the last entry."""
    k = bisect_right(cum, u, lo, hi)
    return k if k < hi else hi - 1


def _greedy(row):
    best = 0
    for k in range(1, len(row)):
        if row[k] > row[best]:
            best = k
    return best


def _softmax_sample(values, temperature, u):
    A = len(values)
    mx = values[0]
    for k in range(1, A):
        if values[k] > mx:
            mx = values[k]
    weights = [0.0] * A
    total = 0.0
    for k in range(A):
        w = math.exp((values[k] - mx) / temperature)
        weights[k] = w
        total += w
    threshold = u * total
    acc = 0.0
    for k in range(A):
        acc += weights[k]
        if threshold < acc:
            return k
    return A - 1


def _sample_probs(probs, u):
    A = len(probs)
    total = 0.0
    for k in range(A):
        total += probs[k]
    threshold = u * total
    acc = 0.0
    for k in range(A):
        acc += probs[k]
        if threshold < acc:
            return k
    return A - 1


def _pursuit_update(row, greedy, beta):
    for k in range(len(row)):
        if k == greedy:
            row[k] += beta * (1.0 - row[k])
        else:
            row[k] += beta * (0.0 - row[k])


def train_segment(
    q, counts, pursuit, adv, uniforms, state, episode_step, episode_limit, step0,
    succ_ptr, succ_idx, succ_cum, reward, terminal, init_idx, init_cum,
    code, epsilon, epsilon_bisim, temperature, pursuit_beta, mbie_beta,
    lr, gamma, tau0, alpha, anneal,
):
    """Run ``len(uniforms)`` Q-learning steps in place.

    Each step consumes one row of five uniforms:
    (branch, nested branch, action draw, transition draw, reset draw).
    An episode also restarts after ``episode_limit`` steps (0 disables this);
    a time-out keeps the bootstrap term. Returns ``(state, episode_step)``.
    """
    S, A = q.shape
    Q = q.tolist()
    N = counts.tolist()
    PI = pursuit.tolist()
    ADV = adv.tolist()
    U = uniforms.tolist()
    sp, sidx, scum = succ_ptr.tolist(), succ_idx.tolist(), succ_cum.tolist()
    R = reward.tolist()
    term = terminal.tolist()
    iidx, icum = init_idx.tolist(), init_cum.tolist()
    s = int(state)
    ep = int(episode_step)
    uses_extra = code >= EXTRA_EPS_GREEDY
    for t in range(len(U)):
        u0, u1, u2, u3, u4 = U[t]
        n = step0 + t
        if uses_extra:
            tau = tau0 * (1.0 + alpha * n) if anneal else tau0
        qs = Q[s]
        if code == EPS_GREEDY or code == MBIE_EB:
            if u0 < epsilon:
                a = int(u2 * A)
                if a >= A:
                    a = A - 1
            else:
                a = _greedy(qs)
        elif code == BOLTZMANN:
            a = _softmax_sample(qs, temperature, u2)
        elif code == PURSUIT:
            a = _sample_probs(PI[s], u2)
        elif code == EXTRA_EPS_GREEDY or code == EXTRA_PLUS_MBIE:
            if u0 < epsilon:
                a = _softmax_sample(ADV[s], tau, u2)
            else:
                a = _greedy(qs)
        elif code == EXTRA_PLUS_UNIFORM:
            if u0 < epsilon:
                if u1 < epsilon_bisim:
                    a = _softmax_sample(ADV[s], tau, u2)
                else:
                    a = int(u2 * A)
                    if a >= A:
                        a = A - 1
            else:
                a = _greedy(qs)
        elif code == EXTRA_PLUS_SOFTMAX:
            if u0 < epsilon:
                a = _softmax_sample(ADV[s], tau, u2)
            else:
                a = _softmax_sample(qs, temperature, u2)
        elif code == EXTRA_PLUS_PURSUIT:
            if u0 < epsilon:
                a = _softmax_sample(ADV[s], tau, u2)
            else:
                _pursuit_update(PI[s], _greedy(qs), pursuit_beta)
                a = _sample_probs(PI[s], u2)
        else:
            raise ValueError(f"unknown strategy code {code}")

        row = s * A + a
        nxt = sidx[_draw(scum, u3, sp[row], sp[row + 1])]
        r = R[s][a]
        N[s][a] += 1
        if code == MBIE_EB or code == EXTRA_PLUS_MBIE:
            r += mbie_beta / math.sqrt(N[s][a])
        if term[nxt]:
            target = r
        else:
            qn = Q[nxt]
            best = qn[0]
            for k in range(1, A):
                if qn[k] > best:
                    best = qn[k]
            target = r + gamma * best
        qs[a] += lr * (target - qs[a])
        if code == PURSUIT:
            _pursuit_update(PI[s], _greedy(qs), pursuit_beta)
        ep += 1
        if term[nxt] or ep == episode_limit:
            s = iidx[_draw(icum, u4, 0, len(icum))]
            ep = 0
        else:
            s = nxt
    q[...] = Q
    counts[...] = N
    pursuit[...] = PI
    return s, ep


def rollout_averages(policy, uniforms, succ_ptr, succ_idx, succ_cum, reward, terminal, init_idx, init_cum):
    """Per-rollout average reward of a deterministic policy.

    Row ``i`` of ``uniforms`` holds the start-state draw followed by one draw per
    step; a rollout stops at a terminal state or after ``uniforms.shape[1] - 1`` steps.
    """
    N, width = uniforms.shape
    horizon = width - 1
    pol = policy.tolist()
    U = uniforms.tolist()
    sp, sidx, scum = succ_ptr.tolist(), succ_idx.tolist(), succ_cum.tolist()
    R = reward.tolist()
    term = terminal.tolist()
    iidx, icum = init_idx.tolist(), init_cum.tolist()
    A = len(R[0])
    out = np.empty(N)
    for i in range(N):
        Ui = U[i]
        s = iidx[_draw(icum, Ui[0], 0, len(icum))]
        total = 0.0
        steps = 0
        for t in range(horizon):
            a = pol[s]
            total += R[s][a]
            steps += 1
            row = s * A + a
            s = sidx[_draw(scum, Ui[t + 1], sp[row], sp[row + 1])]
            if term[s]:
                break
        out[i] = total / steps
    return out
