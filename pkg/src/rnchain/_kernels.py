"""Hot inner loops, compiled with numba when available.

Set ``RNCHAIN_DISABLE_NUMBA=1`` to force the pure-numpy implementations.
Both paths are always importable under their explicit names so tests and the
benchmark can compare them directly.
"""
from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("RNCHAIN_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f


BACKEND = "numba" if HAVE_NUMBA else "numpy"


# -- Gram matrix of the Stinespring form ------------------------------------
#
# Symbol basis E_ij (.) e_p is indexed row-major by (i, j, p).
# G[(i,j,p),(k,l,q)] = <E_ij (.) e_p, E_kl (.) e_q> = delta_ik * T(E_jl)[p, q]
#                    = delta_ik * sum_r K_r[p, j] * conj(K_r[q, l])

@njit(cache=True)
def _gram_numba(kraus):
    r, m, n = kraus.shape
    nm = n * m
    size = n * nm
    g = np.zeros((size, size), dtype=np.complex128)
    block = np.zeros((nm, nm), dtype=np.complex128)
    for j in range(n):
        for p in range(m):
            row = j * m + p
            for l in range(n):
                for q in range(m):
                    acc = 0j
                    for s in range(r):
                        acc += kraus[s, p, j] * np.conj(kraus[s, q, l])
                    block[row, l * m + q] = acc
    for i in range(n):
        off = i * nm
        for a in range(nm):
            for b in range(nm):
                g[off + a, off + b] = block[a, b]
    return g


def _gram_numpy(kraus):
    r, m, n = kraus.shape
    block = np.einsum("spj,sql->jplq", kraus, kraus.conj()).reshape(n * m, n * m)
    return np.kron(np.eye(n), block)


def gram_matrix(kraus: np.ndarray) -> np.ndarray:
    kraus = np.ascontiguousarray(kraus, dtype=np.complex128)
    if HAVE_NUMBA:
        return _gram_numba(kraus)
    return _gram_numpy(kraus)


# -- exhaustive search over deterministic strategies ------------------------
#
# A deterministic strategy is one digit per (player, input) in base |O_player|.
# Digits are enumerated as an odometer with the last digit fastest, i.e. in
# lexicographic order of the digit tuple; only strict improvements replace the
# incumbent, so ties resolve to the lexicographically first strategy.

@njit(cache=True)
def _classical_numba(weights, x_players, digit_offset, out_sizes, out_strides, total):
    nx, k = x_players.shape
    ndig = digit_offset[k]
    base = np.empty(ndig, dtype=np.int64)
    for i in range(k):
        for t in range(digit_offset[i], digit_offset[i + 1]):
            base[t] = out_sizes[i]
    digits = np.zeros(ndig, dtype=np.int64)
    best = -1.0
    best_idx = 0
    for s in range(total):
        val = 0.0
        for x in range(nx):
            a = 0
            for i in range(k):
                a += digits[digit_offset[i] + x_players[x, i]] * out_strides[i]
            val += weights[a, x]
        if val > best:
            best = val
            best_idx = s
        t = ndig - 1
        while t >= 0:
            digits[t] += 1
            if digits[t] < base[t]:
                break
            digits[t] = 0
            t -= 1
    return best, best_idx


def _classical_numpy(weights, x_players, digit_offset, out_sizes, out_strides, total, chunk=1 << 16):
    nx, k = x_players.shape
    ndig = int(digit_offset[k])
    base = np.empty(ndig, dtype=np.int64)
    for i in range(k):
        base[digit_offset[i]:digit_offset[i + 1]] = out_sizes[i]
    # place value of each digit (last digit fastest)
    place = np.ones(ndig, dtype=np.int64)
    for t in range(ndig - 2, -1, -1):
        place[t] = place[t + 1] * base[t + 1]
    best, best_idx = -1.0, 0
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        digits = (idx[:, None] // place[None, :]) % base[None, :]
        a = np.zeros((idx.size, nx), dtype=np.int64)
        for i in range(k):
            a += digits[:, digit_offset[i] + x_players[:, i]] * out_strides[i]
        vals = np.zeros(idx.size)
        for x in range(nx):
            vals += weights[a[:, x], x]
        j = int(np.argmax(vals))
        if vals[j] > best:
            best, best_idx = float(vals[j]), int(idx[j])
    return best, best_idx


def classical_search(weights, x_players, digit_offset, out_sizes, out_strides, total):
    args = (
        np.ascontiguousarray(weights, dtype=np.float64),
        np.ascontiguousarray(x_players, dtype=np.int64),
        np.ascontiguousarray(digit_offset, dtype=np.int64),
        np.ascontiguousarray(out_sizes, dtype=np.int64),
        np.ascontiguousarray(out_strides, dtype=np.int64),
        int(total),
    )
    if HAVE_NUMBA:
        best, idx = _classical_numba(*args)
        return float(best), int(idx)
    return _classical_numpy(*args)
