"""Compiled hot path of the chained local-search solver.

Everything here is numba-jitted and deterministic: randomness comes from
an explicit splitmix64 state threaded through the calls, so results are
a pure function of the inputs on any machine.

Tour representation: ``order`` is the city sequence, ``pos`` maps city ->
index in ``order``. A 2-opt move is a segment flip; the improvement
search chains depth-limited sequential flips guided by nearest-neighbor
candidate lists, with a per-level backtracking breadth vector.
"""

import numpy as np
from numba import njit

GAIN_EPS = 1e-12  # relative positive-gain threshold; avoids cycling on ties


@njit(cache=True)
def gain_threshold(scale):
    """Absolute gain cutoff for a tour of the given length scale.

    Scaled by the tour length so it stays well above the rounding noise
    of the 4-term gain expression at large coordinate magnitudes.
    """
    return GAIN_EPS * max(1.0, scale)


@njit(cache=True, inline="always")
def _rng_next(state):
    # splitmix64
    state[0] = state[0] + np.uint64(0x9E3779B97F4A7C15)
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def _rng_below(state, bound):
    # modulo bias is irrelevant at tour sizes
    return np.int64(_rng_next(state) % np.uint64(bound))


@njit(cache=True)
def tour_length(order, D):
    n = order.shape[0]
    total = 0.0
    for i in range(n):
        total += D[order[i], order[(i + 1) % n]]
    return total


@njit(cache=True)
def _flip(order, pos, a, b):
    # Reverse the forward segment a..b (inclusive), wrapping if needed.
    n = order.shape[0]
    ia = pos[a]
    ib = pos[b]
    if ia == ib:
        return
    seg = ib - ia + 1 if ia <= ib else (n - ia) + ib + 1
    for i in range(seg // 2):
        li = ia + i
        if li >= n:
            li -= n
        ri = ib - i
        if ri < 0:
            ri += n
        cl = order[li]
        cr = order[ri]
        order[li] = cr
        order[ri] = cl
        pos[cr] = li
        pos[cl] = ri


@njit(cache=True)
def _try_improve(base, order, pos, D, neigh, width, depth, bt, eps):
    """Depth-first search for an improving chain of sequential 2-opt flips
    anchored at ``base``. Applies the chain and returns its gain, or
    returns 0.0 leaving the tour untouched."""
    n = order.shape[0]
    max_cand = width
    # per-level candidate buffers
    cand_y = np.empty((depth, max_cand), dtype=np.int64)
    cand_t3 = np.empty((depth, max_cand), dtype=np.int64)
    cand_gain = np.empty((depth, max_cand), dtype=np.float64)
    count = np.zeros(depth, dtype=np.int64)
    idx = np.zeros(depth, dtype=np.int64)
    flip_a = np.empty(depth, dtype=np.int64)
    flip_b = np.empty(depth, dtype=np.int64)
    delta = np.zeros(depth + 1, dtype=np.float64)

    level = 0
    _gen_candidates(level, base, order, pos, D, neigh, width, bt,
                    cand_y, cand_t3, cand_gain, count, delta, eps)
    idx[0] = 0
    while level >= 0:
        advanced = False
        while idx[level] < count[level]:
            j = idx[level]
            idx[level] += 1
            y = cand_y[level, j]
            t3 = cand_t3[level, j]
            s1 = order[(pos[base] + 1) % n]
            gain = delta[level] + (D[base, s1] + D[t3, y]
                                   - D[s1, y] - D[t3, base])
            _flip(order, pos, s1, t3)
            flip_a[level] = s1
            flip_b[level] = t3
            if gain > eps:
                return gain
            if level + 1 < depth:
                delta[level + 1] = gain
                level += 1
                _gen_candidates(level, base, order, pos, D, neigh, width, bt,
                                cand_y, cand_t3, cand_gain, count, delta, eps)
                idx[level] = 0
                advanced = True
                break
            _flip(order, pos, t3, s1)
        if not advanced:
            level -= 1
            if level >= 0:
                _flip(order, pos, flip_b[level], flip_a[level])
    return 0.0


@njit(cache=True)
def _gen_candidates(level, base, order, pos, D, neigh, width, bt,
                    cand_y, cand_t3, cand_gain, count, delta, eps):
    """Fill the candidate buffer for the current level.

    A candidate y (drawn from the ``width`` nearest neighbors of s1) must
    satisfy the sequential positive-gain criterion; candidates are kept
    sorted by closing gain, truncated to the level's backtracking breadth.
    """
    n = order.shape[0]
    s1 = order[(pos[base] + 1) % n]
    s1_next = order[(pos[s1] + 1) % n]
    breadth = bt[level] if level < bt.shape[0] else 1
    k = 0
    for c in range(width):
        y = neigh[s1, c]
        if y == base or y == s1 or y == s1_next:
            continue
        g1 = D[base, s1] - D[s1, y]
        if delta[level] + g1 <= eps:
            continue
        t3 = order[(pos[y] - 1) % n]
        if t3 == base:
            continue
        close_gain = delta[level] + g1 + (D[t3, y] - D[t3, base])
        # insertion sort by descending closing gain, capacity = breadth
        if k < breadth:
            i = k
            while i > 0 and cand_gain[level, i - 1] < close_gain:
                cand_gain[level, i] = cand_gain[level, i - 1]
                cand_y[level, i] = cand_y[level, i - 1]
                cand_t3[level, i] = cand_t3[level, i - 1]
                i -= 1
            cand_gain[level, i] = close_gain
            cand_y[level, i] = y
            cand_t3[level, i] = t3
            k += 1
        elif close_gain > cand_gain[level, k - 1]:
            i = k - 1
            while i > 0 and cand_gain[level, i - 1] < close_gain:
                cand_gain[level, i] = cand_gain[level, i - 1]
                cand_y[level, i] = cand_y[level, i - 1]
                cand_t3[level, i] = cand_t3[level, i - 1]
                i -= 1
            cand_gain[level, i] = close_gain
            cand_y[level, i] = y
            cand_t3[level, i] = t3
    count[level] = k


@njit(cache=True)
def local_search(order, pos, D, neigh, width, depth, bt, length, eps):
    """Run chained-flip improvement to a local optimum; returns new length."""
    n = order.shape[0]
    improved = True
    while improved:
        improved = False
        for base in range(n):
            gain = _try_improve(base, order, pos, D, neigh, width, depth, bt,
                                eps)
            if gain > eps:
                length -= gain
                improved = True
    return length


@njit(cache=True)
def _perturb(order, pos, kind, state):
    """Apply the configured perturbation in place (needs n >= 4)."""
    n = order.shape[0]
    if kind == 0:
        # double bridge with balanced segments: rotate randomly, then cut
        # at quarter points and reconnect A C B D
        shift = _rng_below(state, n)
        tmp = np.empty(n, dtype=order.dtype)
        for i in range(n):
            tmp[i] = order[(i + shift) % n]
        p1 = n // 4
        p2 = n // 2
        p3 = (3 * n) // 4
        if p1 == 0:
            p1 = 1
        _reassemble_double_bridge(order, pos, tmp, p1, p2, p3)
    elif kind == 1:
        # random segment reversal
        i = 1 + _rng_below(state, n - 1)
        j = 1 + _rng_below(state, n - 1)
        if i > j:
            i, j = j, i
        a = order[i]
        b = order[j]
        _flip(order, pos, a, b)
    elif kind == 2:
        # random 3-city rotation
        i = _rng_below(state, n)
        j = _rng_below(state, n)
        k = _rng_below(state, n)
        if i != j and j != k and i != k:
            ci = order[i]
            cj = order[j]
            ck = order[k]
            order[i] = ck
            order[j] = ci
            order[k] = cj
            pos[ck] = i
            pos[ci] = j
            pos[cj] = k
    else:
        # double bridge with uniformly random cut points
        tmp = order.copy()
        p1 = 1 + _rng_below(state, n - 3)
        p2 = p1 + 1 + _rng_below(state, n - p1 - 2)
        p3 = p2 + 1 + _rng_below(state, n - p2 - 1)
        _reassemble_double_bridge(order, pos, tmp, p1, p2, p3)


@njit(cache=True)
def _reassemble_double_bridge(order, pos, src, p1, p2, p3):
    # src = A|B|C|D at cuts p1 < p2 < p3; result is A C B D
    n = src.shape[0]
    w = 0
    for i in range(p1):
        order[w] = src[i]
        w += 1
    for i in range(p2, p3):
        order[w] = src[i]
        w += 1
    for i in range(p1, p2):
        order[w] = src[i]
        w += 1
    for i in range(p3, n):
        order[w] = src[i]
        w += 1
    for i in range(n):
        pos[order[i]] = i


@njit(cache=True)
def chain_solve(init_order, D, neigh, width, depth, bt, perturb_kind,
                steps, seed):
    """Run the chained search under a budget of improvement attempts.

    One step is a single improvement attempt (one ``_try_improve`` call at
    the next anchor city). When a full pass of anchors yields no gain the
    tour is a local optimum of the move neighborhood; it is then perturbed
    and the chain continues. Returns the best tour seen and its length.

    Because the search trajectory does not depend on ``steps``, a larger
    budget explores a strict superset of tours: the result never worsens
    as the budget grows (for fixed config, instance and seed).
    """
    n = init_order.shape[0]
    state = np.empty(1, dtype=np.uint64)
    state[0] = np.uint64(seed) ^ np.uint64(0xD1B54A32D192ED03)
    order = init_order.copy()
    pos = np.empty(n, dtype=np.int64)
    for i in range(n):
        pos[order[i]] = i
    eps = gain_threshold(tour_length(order, D))
    best_order = order.copy()
    best_length = tour_length(order, D)
    base = 0
    stalled = 0  # consecutive anchors with no improving chain
    for _ in range(steps):
        gain = _try_improve(base, order, pos, D, neigh, width, depth, bt, eps)
        base = (base + 1) % n
        if gain > eps:
            stalled = 0
            cur = tour_length(order, D)
            if cur < best_length:
                best_length = cur
                best_order[:] = order
        else:
            stalled += 1
            if stalled >= n:
                _perturb(order, pos, perturb_kind, state)
                stalled = 0
                cur = tour_length(order, D)
                if cur < best_length:
                    best_length = cur
                    best_order[:] = order
    return best_order, tour_length(best_order, D)
