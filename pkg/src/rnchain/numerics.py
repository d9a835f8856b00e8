"""Dense complex linear algebra with an explicit tolerance policy.

Matrices are plain ``numpy`` complex arrays.  Nothing here mutates its
arguments; every predicate (Hermitian, PSD, unitary) is evaluated against a
:class:`Tolerance` rather than assumed.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, NotHermitian, ShapeMismatch, ValidationError


@dataclass(frozen=True)
class Tolerance:
    """Thresholds used by every numeric predicate in the package.

    abs_eq:    entrywise equality threshold.
    psd_floor: most negative eigenvalue still accepted as PSD roundoff.
    rank_cut:  relative eigenvalue cutoff for null-space truncation.
    """

    abs_eq: float = 1e-9
    psd_floor: float = 1e-9
    rank_cut: float = 1e-10

    def __post_init__(self):
        for name in ("abs_eq", "psd_floor", "rank_cut"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise ValidationError(f"tolerance {name} must be positive, got {val!r}")
        if self.psd_floor > self.abs_eq:
            raise ValidationError("tolerance psd_floor must not exceed abs_eq")


DEFAULT_TOL = Tolerance()


def as_cmatrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D complex128 array and reject non-finite entries."""
    arr = np.asarray(a, dtype=np.complex128)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} has non-finite entries")
    return arr


def dag(a: np.ndarray) -> np.ndarray:
    return np.conjugate(np.swapaxes(a, -1, -2))


def max_abs(a) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def op_norm(a) -> float:
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


def hermitian_defect(a: np.ndarray) -> float:
    return max_abs(a - dag(a))


def hermitize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + dag(a))


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def kron(a, b) -> np.ndarray:
    """Tensor product; ``kron(a, [[1]])`` returns ``a`` unchanged."""
    return np.kron(np.asarray(a, dtype=np.complex128), np.asarray(b, dtype=np.complex128))


def kron_all(mats: Sequence[np.ndarray]) -> np.ndarray:
    return reduce(kron, mats, np.ones((1, 1), dtype=np.complex128))


def _phase_fix(vecs: np.ndarray, thresh: float) -> np.ndarray:
    out = vecs.copy()
    for k in range(out.shape[1]):
        col = out[:, k]
        nz = np.flatnonzero(np.abs(col) > thresh)
        if nz.size:
            ph = col[nz[0]] / abs(col[nz[0]])
            out[:, k] = col / ph
    return out


def eig_hermitian(a, tol: Tolerance = DEFAULT_TOL):
    """Eigen-decomposition of a Hermitian matrix, eigenvalues descending.

    Eigenvectors are phase fixed (first non-negligible component real positive).
    Eigenvalues closer than ``abs_eq`` count as tied; ties are ordered by the
    lexicographic order of the phase-fixed eigenvectors so output does not
    depend on the LAPACK build.
    """
    a = as_cmatrix(a)
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"eig_hermitian needs a square matrix, got {a.shape}")
    defect = hermitian_defect(a)
    if defect > tol.abs_eq:
        raise NotHermitian(f"symmetry defect {defect:.3e} exceeds {tol.abs_eq:.1e}")
    n = a.shape[0]
    if n == 0:
        return np.zeros(0), np.zeros((0, 0), dtype=np.complex128)
    w, v = np.linalg.eigh(hermitize(a))
    w = w[::-1]
    v = _phase_fix(v[:, ::-1], tol.abs_eq)

    order = []
    start = 0
    while start < n:
        stop = start + 1
        while stop < n and w[start] - w[stop] <= tol.abs_eq:
            stop += 1
        group = list(range(start, stop))
        if len(group) > 1:
            keys = {k: tuple(np.round(np.concatenate([v[:, k].real, v[:, k].imag]), 12))
                    for k in group}
            group.sort(key=lambda k: tuple(-x for x in keys[k]))
        order.extend(group)
        start = stop
    order = np.asarray(order)
    return w[order], v[:, order]


def eigvalsh(a) -> np.ndarray:
    """Ascending eigenvalues of the Hermitian part of ``a``."""
    return np.linalg.eigvalsh(hermitize(np.asarray(a, dtype=np.complex128)))


def min_eig(a) -> float:
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    return float(eigvalsh(a)[0])


def is_psd(a, tol: Tolerance = DEFAULT_TOL) -> bool:
    a = as_cmatrix(a)
    return hermitian_defect(a) <= tol.abs_eq and min_eig(a) >= -tol.psd_floor


def is_unitary(u, tol: Tolerance = DEFAULT_TOL) -> bool:
    u = as_cmatrix(u)
    if u.shape[0] != u.shape[1]:
        return False
    return max_abs(dag(u) @ u - np.eye(u.shape[0])) <= tol.abs_eq


def psd_sqrt(a) -> np.ndarray:
    """Square root of the PSD part of a Hermitian matrix (negative eigenvalues clipped)."""
    w, v = np.linalg.eigh(hermitize(np.asarray(a, dtype=np.complex128)))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ dag(v)


def pinv(a, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Moore-Penrose inverse; singular values below ``rank_cut * s_max`` count as zero."""
    a = as_cmatrix(a)
    if a.size == 0:
        return np.zeros((a.shape[1], a.shape[0]), dtype=np.complex128)
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    keep = s > tol.rank_cut * s[0] if s.size and s[0] > 0 else np.zeros_like(s, dtype=bool)
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    return (dag(vh) * inv) @ dag(u)


def numerical_rank(a, tol: Tolerance = DEFAULT_TOL) -> int:
    """Rank under the relative ``rank_cut`` applied to eigenvalues of ``a a*``."""
    a = np.asarray(a, dtype=np.complex128)
    if a.size == 0:
        return 0
    gram = a @ dag(a)
    w = eigvalsh(gram)
    if w[-1] <= 0:
        return 0
    return int(np.sum(w > tol.rank_cut * w[-1]))


def partial_trace(a, dims: Sequence[int], keep) -> np.ndarray:
    """Trace out every tensor factor whose index is not in ``keep``."""
    a = as_cmatrix(a)
    dims = [int(d) for d in dims]
    total = int(np.prod(dims)) if dims else 1
    if a.shape != (total, total):
        raise DimensionMismatch(f"matrix shape {a.shape} does not match dims {dims}")
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= len(dims) for k in keep):
        raise DimensionMismatch(f"keep indices {keep} out of range for {len(dims)} factors")
    nf = len(dims)
    t = a.reshape(dims + dims)
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = list(letters[:nf])
    col = list(letters[nf:2 * nf])
    for f in range(nf):
        if f not in keep:
            col[f] = row[f]
    out = "".join(row[f] for f in keep) + "".join(col[f] for f in keep)
    res = np.einsum("".join(row) + "".join(col) + "->" + out, t)
    dk = int(np.prod([dims[f] for f in keep])) if keep else 1
    return res.reshape(dk, dk)


def commutant_basis(ops: Sequence[np.ndarray], tol: Tolerance = DEFAULT_TOL) -> list:
    """Orthonormal (Hilbert-Schmidt) basis of {X : [X, A] = 0 for all A in ops}.

    Solved as the null space of the stacked linear map X -> (A X - X A).
    """
    ops = [as_cmatrix(o) for o in ops]
    d = ops[0].shape[0]
    eye = np.eye(d)
    # row-major vec: vec(A X) = (A kron I) vec X, vec(X A) = (I kron A^T) vec X
    blocks = [np.kron(o, eye) - np.kron(eye, o.T) for o in ops]
    big = np.vstack(blocks)
    _, s, vh = np.linalg.svd(big)
    smax = s[0] if s.size and s[0] > 0 else 1.0
    rank = int(np.sum(s > np.sqrt(tol.rank_cut) * smax))
    null = vh[rank:].conj()
    return [row.reshape(d, d) for row in null]


# -- JSON -------------------------------------------------------------------

def matrix_to_json(a) -> dict:
    a = as_cmatrix(a)
    flat = a.reshape(-1)
    return {
        "rows": int(a.shape[0]),
        "cols": int(a.shape[1]),
        "re": [float(x) for x in flat.real],
        "im": [float(x) for x in flat.imag],
    }


def matrix_from_json(obj, where: str = "matrix") -> np.ndarray:
    try:
        rows, cols = int(obj["rows"]), int(obj["cols"])
        re = np.asarray(obj["re"], dtype=float)
        im = np.asarray(obj.get("im", [0.0] * (rows * cols)), dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{where}: malformed matrix object ({exc})") from exc
    if re.size != rows * cols or im.size != rows * cols:
        raise ShapeMismatch(f"{where}: expected {rows * cols} entries, got re={re.size} im={im.size}")
    return as_cmatrix((re + 1j * im).reshape(rows, cols), where)
