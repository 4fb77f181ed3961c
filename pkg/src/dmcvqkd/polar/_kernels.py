"""Numba kernels for the polar codec.

Index convention: natural order, ``x = u F^{(x)n}`` with ``F = [[1, 0], [1, 1]]``.
Layer ``lam`` of the decoding tree holds arrays of ``N >> lam`` entries; layer 0
is the channel and layer ``n`` the leaves.  LLRs are positive for bit 0.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def polar_transform_inplace(x):
    n = x.size
    half = 1
    while half < n:
        step = 2 * half
        for i in range(0, n, step):
            for j in range(i, i + half):
                x[j] ^= x[j + half]
        half = step


@njit(cache=True)
def crc_remainder(bits, poly, length):
    """Remainder of ``bits(x) * x^length`` modulo ``poly`` (bit list MSB first)."""
    mask = (1 << length) - 1
    top = 1 << (length - 1)
    reg = 0
    for k in range(bits.size):
        fb = ((reg & top) != 0) ^ (bits[k] != 0)
        reg = (reg << 1) & mask
        if fb:
            reg ^= poly & mask
    out = np.zeros(length, np.uint8)
    for k in range(length):
        out[k] = (reg >> (length - 1 - k)) & 1
    return out


@njit(cache=True, inline="always")
def _f_minsum(a, b):
    m = min(abs(a), abs(b))
    if (a < 0.0) != (b < 0.0):
        return -m
    return m


@njit(cache=True, inline="always")
def _f_exact(a, b):
    m = min(abs(a), abs(b))
    if (a < 0.0) != (b < 0.0):
        m = -m
    return m + math.log1p(math.exp(-abs(a + b))) - math.log1p(math.exp(-abs(a - b)))


@njit(cache=True, inline="always")
def _penalty(llr, bit, exact):
    # path-metric increment for deciding ``bit`` against evidence ``llr``
    s = llr if bit == 0 else -llr
    if exact:
        if s > 0.0:
            return math.log1p(math.exp(-s))
        return -s + math.log1p(math.exp(s))
    if s < 0.0:
        return -s
    return 0.0


@njit(cache=True)
def genie_accumulate(errors, llr_mag, exact, soft_acc, hard_acc, llr_acc):
    """Genie-aided SC over the all-zero word; accumulates per-index statistics.

    ``errors`` is a (trials, N) boolean array of channel flips.  For each trial the
    leaf LLR of every bit channel is computed with all earlier bits known (the
    partial sums are zero), so ``g`` reduces to a plain sum.
    """
    trials, n = errors.shape
    x = np.empty(n, np.float64)
    for t in range(trials):
        for k in range(n):
            x[k] = -llr_mag if errors[t, k] else llr_mag
        block = n
        while block >= 2:
            h = block // 2
            for i in range(0, n, block):
                for j in range(i, i + h):
                    a = x[j]
                    b = x[j + h]
                    if exact:
                        x[j] = _f_exact(a, b)
                    else:
                        x[j] = _f_minsum(a, b)
                    x[j + h] = a + b
            block = h
        for k in range(n):
            v = x[k]
            if v > 0.0:
                soft_acc[k] += math.exp(-v) / (1.0 + math.exp(-v))
            else:
                soft_acc[k] += 1.0 / (1.0 + math.exp(v))
            if v < 0.0:
                hard_acc[k] += 1.0
            elif v == 0.0:
                hard_acc[k] += 0.5
            llr_acc[k] += v


@njit(cache=True)
def _get_array(lam, l, size, base, p2a, ref, inact, inact_top, P, C):
    # copy-on-write access to the layer-``lam`` arrays of path ``l``
    s = p2a[lam, l]
    if ref[lam, s] == 1:
        return s
    inact_top[lam] -= 1
    s2 = inact[lam, inact_top[lam]]
    for b in range(size):
        P[s2, base + b] = P[s, base + b]
        C[s2, 0, base + b] = C[s, 0, base + b]
        C[s2, 1, base + b] = C[s, 1, base + b]
    ref[lam, s] -= 1
    ref[lam, s2] = 1
    p2a[lam, l] = s2
    return s2


@njit(cache=True)
def _update_c(lam, ph, n, off, L, active, p2a, ref, inact, inact_top, P, C):
    # fold finished sibling pairs upward, starting from an odd node at ``lam``
    while True:
        psi = ph >> 1
        size = n >> lam
        bc = off[lam]
        bp = off[lam - 1]
        c2 = psi & 1
        for l in range(L):
            if not active[l]:
                continue
            sc = p2a[lam, l]
            sp = _get_array(lam - 1, l, 2 * size, bp, p2a, ref, inact, inact_top, P, C)
            for b in range(size):
                left = C[sc, 0, bc + b]
                right = C[sc, 1, bc + b]
                C[sp, c2, bp + b] = left ^ right
                C[sp, c2, bp + b + size] = right
        if c2 == 1 and lam - 1 >= 1:
            lam -= 1
            ph = psi
        else:
            break


@njit(cache=True)
def rate0_layers(frozen):
    """For each leaf, the shallowest layer whose node starts there and is all frozen.

    Zero means no such node (the leaf itself is handled bit by bit).
    """
    n = frozen.size
    m = 0
    while (1 << m) < n:
        m += 1
    info_prefix = np.zeros(n + 1, np.int64)
    for i in range(n):
        info_prefix[i + 1] = info_prefix[i] + (0 if frozen[i] else 1)
    out = np.zeros(n, np.int64)
    for phi in range(n):
        for lam in range(1, m + 1):
            size = n >> lam
            if phi % size == 0 and info_prefix[phi + size] - info_prefix[phi] == 0:
                out[phi] = lam
                break
    return out


@njit(cache=True)
def scl_decode(llr, frozen, frozen_values, list_size, crc_poly, crc_len, crc_ref, exact, fast):
    """CRC-aided successive-cancellation list decoding (lazy-copy LLR form).

    With ``fast`` set, all-frozen subtrees are resolved in one step: their known
    codeword is written directly and the path metric grows by the node-level
    penalty, which coincides with the leaf-by-leaf min-sum metric.

    Returns ``(x_hat, found, n_candidates)`` where ``x_hat`` is the codeword of the
    selected path.  ``found`` is True when a surviving path matches ``crc_ref``
    (always True when ``crc_len == 0``, in which case the best metric wins).
    """
    n = llr.size
    m = 0
    while (1 << m) < n:
        m += 1
    L = list_size
    off = np.zeros(m + 2, np.int64)
    for lam in range(m + 1):
        off[lam + 1] = off[lam] + (n >> lam)
    total = off[m + 1]

    P = np.zeros((L, total), np.float64)
    C = np.zeros((L, 2, total), np.uint8)
    p2a = np.zeros((m + 1, L), np.int64)
    ref = np.zeros((m + 1, L), np.int64)
    inact = np.empty((m + 1, L), np.int64)
    inact_top = np.empty(m + 1, np.int64)
    for lam in range(m + 1):
        for s in range(L):
            inact[lam, s] = L - 1 - s
        inact_top[lam] = L
    active = np.zeros(L, np.bool_)
    free_paths = np.empty(L, np.int64)
    for s in range(L):
        free_paths[s] = L - 1 - s
    free_top = L
    PM = np.zeros(L, np.float64)

    free_top -= 1
    l0 = free_paths[free_top]
    active[l0] = True
    for lam in range(m + 1):
        inact_top[lam] -= 1
        s = inact[lam, inact_top[lam]]
        p2a[lam, l0] = s
        ref[lam, s] = 1
    s0 = p2a[0, l0]
    for b in range(n):
        P[s0, b] = llr[b]

    cand = np.empty(2 * L, np.float64)
    keep = np.zeros((L, 2), np.bool_)
    snap = np.zeros(L, np.bool_)
    node_bits = np.empty(n, np.uint8)
    if fast and not exact:
        skip = rate0_layers(frozen)
    else:
        skip = np.zeros(n, np.int64)

    phi = 0
    while phi < n:
        lam_leaf = m if skip[phi] == 0 else skip[phi]
        if phi == 0:
            lam_start = 1
        else:
            tz = 0
            while ((phi >> tz) & 1) == 0:
                tz += 1
            lam_start = max(1, m - tz)
        for lam in range(lam_start, lam_leaf + 1):
            ph = phi >> (m - lam)
            size = n >> lam
            bd = off[lam]
            br = off[lam - 1]
            for l in range(L):
                if not active[l]:
                    continue
                sd = _get_array(lam, l, size, bd, p2a, ref, inact, inact_top, P, C)
                sr = p2a[lam - 1, l]
                if ph % 2 == 0:
                    if exact:
                        for b in range(size):
                            P[sd, bd + b] = _f_exact(P[sr, br + b], P[sr, br + b + size])
                    else:
                        for b in range(size):
                            P[sd, bd + b] = _f_minsum(P[sr, br + b], P[sr, br + b + size])
                else:
                    for b in range(size):
                        a = P[sr, br + b]
                        c = P[sr, br + b + size]
                        if C[sd, 0, bd + b] == 0:
                            P[sd, bd + b] = c + a
                        else:
                            P[sd, bd + b] = c - a

        if lam_leaf < m:
            size = n >> lam_leaf
            for b in range(size):
                node_bits[b] = frozen_values[phi + b]
            polar_transform_inplace(node_bits[:size])
            ph = phi >> (m - lam_leaf)
            col = ph & 1
            bd = off[lam_leaf]
            for l in range(L):
                if not active[l]:
                    continue
                s = _get_array(lam_leaf, l, size, bd, p2a, ref, inact, inact_top, P, C)
                acc = 0.0
                for b in range(size):
                    acc += _penalty(P[s, bd + b], node_bits[b], False)
                    C[s, col, bd + b] = node_bits[b]
                PM[l] += acc
            if col == 1:
                _update_c(lam_leaf, ph, n, off, L, active, p2a, ref, inact, inact_top, P, C)
            phi += size
            continue

        bm = off[m]
        col = phi % 2
        if frozen[phi]:
            v = frozen_values[phi]
            for l in range(L):
                if not active[l]:
                    continue
                s = _get_array(m, l, 1, bm, p2a, ref, inact, inact_top, P, C)
                PM[l] += _penalty(P[s, bm], v, exact)
                C[s, col, bm] = v
        else:
            n_act = 0
            for l in range(L):
                if active[l]:
                    n_act += 1
                    lv = P[p2a[m, l], bm]
                    cand[2 * l] = PM[l] + _penalty(lv, 0, exact)
                    cand[2 * l + 1] = PM[l] + _penalty(lv, 1, exact)
                else:
                    cand[2 * l] = np.inf
                    cand[2 * l + 1] = np.inf
            for l in range(L):
                keep[l, 0] = False
                keep[l, 1] = False
            if 2 * n_act <= L:
                for l in range(L):
                    if active[l]:
                        keep[l, 0] = True
                        keep[l, 1] = True
            else:
                order = np.argsort(cand, kind="mergesort")
                for r in range(L):
                    k = order[r]
                    keep[k // 2, k % 2] = True
            for l in range(L):
                if active[l] and not keep[l, 0] and not keep[l, 1]:
                    active[l] = False
                    free_paths[free_top] = l
                    free_top += 1
                    for lam in range(m + 1):
                        s = p2a[lam, l]
                        ref[lam, s] -= 1
                        if ref[lam, s] == 0:
                            inact[lam, inact_top[lam]] = s
                            inact_top[lam] += 1
            for l in range(L):
                snap[l] = active[l]
            for l in range(L):
                if not snap[l]:
                    continue
                if keep[l, 0] and keep[l, 1]:
                    free_top -= 1
                    l2 = free_paths[free_top]
                    active[l2] = True
                    for lam in range(m + 1):
                        s = p2a[lam, l]
                        p2a[lam, l2] = s
                        ref[lam, s] += 1
                    s = _get_array(m, l, 1, bm, p2a, ref, inact, inact_top, P, C)
                    C[s, col, bm] = 0
                    s = _get_array(m, l2, 1, bm, p2a, ref, inact, inact_top, P, C)
                    C[s, col, bm] = 1
                    PM[l2] = cand[2 * l + 1]
                    PM[l] = cand[2 * l]
                else:
                    bit = 0 if keep[l, 0] else 1
                    s = _get_array(m, l, 1, bm, p2a, ref, inact, inact_top, P, C)
                    C[s, col, bm] = bit
                    PM[l] = cand[2 * l + bit]
        if col == 1:
            _update_c(m, phi, n, off, L, active, p2a, ref, inact, inact_top, P, C)
        phi += 1

    # rank survivors, then take the first with a matching CRC
    n_act = 0
    for l in range(L):
        if active[l]:
            n_act += 1
    idx = np.empty(n_act, np.int64)
    met = np.empty(n_act, np.float64)
    k = 0
    for l in range(L):
        if active[l]:
            idx[k] = l
            met[k] = PM[l]
            k += 1
    order = np.argsort(met, kind="mergesort")
    x_hat = np.empty(n, np.uint8)
    for r in range(n_act):
        s = p2a[0, idx[order[r]]]
        for b in range(n):
            x_hat[b] = C[s, 0, b]
        if crc_len == 0:
            return x_hat, True, n_act
        rem = crc_remainder(x_hat, crc_poly, crc_len)
        ok = True
        for b in range(crc_len):
            if rem[b] != crc_ref[b]:
                ok = False
                break
        if ok:
            return x_hat, True, n_act
    s = p2a[0, idx[order[0]]]
    for b in range(n):
        x_hat[b] = C[s, 0, b]
    return x_hat, False, n_act
