"""Completely positive maps between full matrix algebras.

A :class:`CpMap` ``T: M_n -> M_m`` is stored as Kraus operators ``K_r`` of
shape ``(m, n)`` acting by ``T(a) = sum_r K_r a K_r^*``.  The Choi matrix
``sum_ij E_ij (x) T(E_ij)`` is computed lazily and cached.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping

import numpy as np

from .errors import DimensionMismatch, NotContraction, NotCP, NotUnitary, ValidationError
from .numerics import (
    DEFAULT_TOL,
    Tolerance,
    as_cmatrix,
    dag,
    hermitize,
    is_unitary,
    matrix_from_json,
    matrix_to_json,
    max_abs,
    min_eig,
    op_norm,
    psd_sqrt,
)


@dataclass(frozen=True, eq=False)
class CpMap:
    in_dim: int
    out_dim: int
    kraus: np.ndarray = field(repr=False)

    def __post_init__(self):
        k = np.asarray(self.kraus, dtype=np.complex128)
        if k.ndim == 2:
            k = k[None]
        if k.size == 0:
            k = np.zeros((0, self.out_dim, self.in_dim), dtype=np.complex128)
        if k.ndim != 3 or k.shape[1:] != (self.out_dim, self.in_dim):
            raise DimensionMismatch(
                f"Kraus operators must be {self.out_dim}x{self.in_dim}, got array of shape {k.shape}")
        if not np.all(np.isfinite(k)):
            raise ValidationError("Kraus operators have non-finite entries")
        k.setflags(write=False)
        object.__setattr__(self, "kraus", k)

    # -- constructors ------------------------------------------------------
    @classmethod
    def from_kraus(cls, kraus) -> "CpMap":
        ks = [as_cmatrix(k, "Kraus operator") for k in kraus]
        if not ks:
            raise ValidationError("at least one Kraus operator is required")
        m, n = ks[0].shape
        return cls(n, m, np.stack(ks))

    @classmethod
    def identity(cls, n: int) -> "CpMap":
        return cls(n, n, np.eye(n, dtype=np.complex128)[None])

    @classmethod
    def unitary(cls, u) -> "CpMap":
        u = as_cmatrix(u)
        return cls(u.shape[1], u.shape[0], u[None])

    @classmethod
    def zero(cls, in_dim: int, out_dim: int) -> "CpMap":
        return cls(in_dim, out_dim, np.zeros((1, out_dim, in_dim), dtype=np.complex128))

    @classmethod
    def from_choi(cls, choi, in_dim: int, out_dim: int, tol: Tolerance = DEFAULT_TOL) -> "CpMap":
        """Kraus form from a Choi matrix.

        Eigenvalues in ``(-psd_floor, 0)`` are dropped as roundoff; anything
        more negative raises :class:`NotCP`.
        """
        choi = as_cmatrix(choi, "Choi matrix")
        size = in_dim * out_dim
        if choi.shape != (size, size):
            raise DimensionMismatch(f"Choi matrix must be {size}x{size}, got {choi.shape}")
        w, v = np.linalg.eigh(hermitize(choi))
        if w.size and w[0] < -tol.psd_floor:
            raise NotCP(f"Choi matrix has eigenvalue {w[0]:.3e} below -{tol.psd_floor:.1e}")
        wmax = w[-1] if w.size else 0.0
        keep = w > max(tol.rank_cut * wmax, 0.0)
        if not np.any(keep):
            return cls.zero(in_dim, out_dim)
        # row-major Choi index (i, p) <-> K[p, i]
        vecs = v[:, keep] * np.sqrt(w[keep])
        kraus = vecs.T.reshape(-1, in_dim, out_dim).transpose(0, 2, 1)
        return cls(in_dim, out_dim, kraus[::-1].copy())

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], in_dim: int, out_dim: int,
                      tol: Tolerance = DEFAULT_TOL) -> "CpMap":
        """Build from the action of a linear map on matrix units."""
        choi = np.zeros((in_dim * out_dim, in_dim * out_dim), dtype=np.complex128)
        for i in range(in_dim):
            for j in range(in_dim):
                e = np.zeros((in_dim, in_dim), dtype=np.complex128)
                e[i, j] = 1.0
                img = as_cmatrix(fn(e))
                if img.shape != (out_dim, out_dim):
                    raise DimensionMismatch(f"image has shape {img.shape}, expected {(out_dim, out_dim)}")
                choi[i * out_dim:(i + 1) * out_dim, j * out_dim:(j + 1) * out_dim] = img
        return cls.from_choi(choi, in_dim, out_dim, tol)

    # -- derived data ------------------------------------------------------
    @cached_property
    def choi(self) -> np.ndarray:
        vecs = self.kraus.transpose(0, 2, 1).reshape(self.kraus.shape[0], -1)
        c = vecs.T @ vecs.conj()
        c.setflags(write=False)
        return c

    @property
    def rank(self) -> int:
        return self.kraus.shape[0]

    def __call__(self, a) -> np.ndarray:
        return apply(self, a)

    def scaled(self, c: float) -> "CpMap":
        if c < 0:
            raise NotCP("negative multiples of a CP map are not CP")
        return CpMap(self.in_dim, self.out_dim, self.kraus * np.sqrt(c))

    def __add__(self, other: "CpMap") -> "CpMap":
        _same_dims(self, other)
        return CpMap(self.in_dim, self.out_dim, np.concatenate([self.kraus, other.kraus]))

    def compressed(self, tol: Tolerance = DEFAULT_TOL) -> "CpMap":
        """Same map with a minimal Kraus list (rank of the Choi matrix)."""
        return CpMap.from_choi(self.choi, self.in_dim, self.out_dim, tol)

    def to_json(self) -> dict:
        return {"in_dim": self.in_dim, "out_dim": self.out_dim,
                "kraus": [matrix_to_json(k) for k in self.kraus]}

    @classmethod
    def from_json(cls, obj, where: str = "cpmap") -> "CpMap":
        try:
            n, m = int(obj["in_dim"]), int(obj["out_dim"])
            ks = [matrix_from_json(k, f"{where}.kraus[{i}]") for i, k in enumerate(obj["kraus"])]
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"{where}: malformed CP map ({exc})") from exc
        if not ks:
            return cls.zero(n, m)
        return cls(n, m, np.stack(ks))


def _same_dims(a: CpMap, b: CpMap):
    if (a.in_dim, a.out_dim) != (b.in_dim, b.out_dim):
        raise DimensionMismatch(
            f"maps differ in shape: {a.in_dim}->{a.out_dim} vs {b.in_dim}->{b.out_dim}")


def apply(t: CpMap, a) -> np.ndarray:
    a = as_cmatrix(a)
    if a.shape != (t.in_dim, t.in_dim):
        raise DimensionMismatch(f"input must be {t.in_dim}x{t.in_dim}, got {a.shape}")
    return np.einsum("rij,jk,rlk->il", t.kraus, a, t.kraus.conj())


def adjoint(t: CpMap) -> CpMap:
    """Dual map with respect to the trace pairing: tr(T*(m) rho) = tr(m T(rho))."""
    return CpMap(t.out_dim, t.in_dim, dag(t.kraus))


def compose(s1: CpMap, s2: CpMap) -> CpMap:
    """``s1 o s2``: apply ``s2`` first.  Kraus list is all pairwise products."""
    if s2.out_dim != s1.in_dim:
        raise DimensionMismatch(f"cannot compose: s2 maps into M_{s2.out_dim}, s1 acts on M_{s1.in_dim}")
    prods = np.einsum("aij,bjk->abik", s1.kraus, s2.kraus)
    return CpMap(s2.in_dim, s1.out_dim, prods.reshape(-1, s1.out_dim, s2.in_dim))


def sum_maps(maps) -> CpMap:
    maps = list(maps)
    if not maps:
        raise ValidationError("cannot sum an empty family of maps")
    out = maps[0]
    for m in maps[1:]:
        out = out + m
    return out


def domination_gap(r: CpMap, s: CpMap) -> float:
    """Smallest eigenvalue of ``choi(r) - choi(s)``; non-negative iff ``s <= r``."""
    _same_dims(r, s)
    return min_eig(r.choi - s.choi)


def dominates(r: CpMap, s: CpMap, tol: Tolerance = DEFAULT_TOL) -> bool:
    """True iff ``r - s`` is completely positive within ``psd_floor``."""
    return domination_gap(r, s) >= -tol.psd_floor


def choi_distance(a: CpMap, b: CpMap) -> float:
    _same_dims(a, b)
    return max_abs(a.choi - b.choi)


def wittstock_decompose(l, r):
    """Four conjugation factors with ``l* B r = 1/4 sum_j i^j V_j* B V_j``.

    ``V_1 = l - i r``, ``V_2 = l - r``, ``V_3 = l + i r``, ``V_4 = l + r``.
    """
    l, r = as_cmatrix(l), as_cmatrix(r)
    if l.shape != r.shape:
        raise DimensionMismatch(f"factor shapes differ: {l.shape} vs {r.shape}")
    return l - 1j * r, l - r, l + 1j * r, l + r


def wittstock_reconstruct(vs, b) -> np.ndarray:
    b = as_cmatrix(b)
    return 0.25 * sum((1j ** j) * (dag(v) @ b @ v) for j, v in enumerate(vs, start=1))


def egervary_unitary_dilation(d, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Unitary ``[[d, sqrt(1 - d d*)], [sqrt(1 - d* d), -d*]]`` with ``d`` in the corner."""
    d = as_cmatrix(d)
    if d.shape[0] != d.shape[1]:
        raise DimensionMismatch(f"contraction must be square, got {d.shape}")
    nrm = op_norm(d)
    if nrm > 1 + tol.abs_eq:
        raise NotContraction(f"operator norm {nrm:.6g} exceeds 1")
    n = d.shape[0]
    eye = np.eye(n)
    top = psd_sqrt(eye - d @ dag(d))
    bottom = psd_sqrt(eye - dag(d) @ d)
    return np.block([[d, top], [bottom, -dag(d)]])


# -- instruments ---------------------------------------------------------------

def _sort_key(label):
    return (0, label, "") if isinstance(label, (int, np.integer)) else (1, 0, str(label))


@dataclass(frozen=True, eq=False)
class Instrument:
    """Outcome-labelled CP maps whose sum is trace preserving."""

    arms: Mapping
    tol: Tolerance = DEFAULT_TOL

    def __post_init__(self):
        if not self.arms:
            raise ValidationError("an instrument needs at least one arm")
        arms = dict(sorted(self.arms.items(), key=lambda kv: _sort_key(kv[0])))
        first = next(iter(arms.values()))
        for lab, arm in arms.items():
            if not isinstance(arm, CpMap):
                raise ValidationError(f"arm {lab!r} is not a CpMap")
            _same_dims(first, arm)
        object.__setattr__(self, "arms", arms)
        defect = self.tp_defect()
        if defect > self.tol.abs_eq:
            raise ValidationError(f"instrument arms do not sum to a trace-preserving map (defect {defect:.3e})")

    @property
    def labels(self) -> list:
        return list(self.arms)

    @property
    def in_dim(self) -> int:
        return next(iter(self.arms.values())).in_dim

    @property
    def out_dim(self) -> int:
        return next(iter(self.arms.values())).out_dim

    def total(self) -> CpMap:
        return sum_maps(self.arms.values())

    def tp_defect(self) -> float:
        t = self.total()
        return max_abs(np.einsum("rji,rjk->ik", t.kraus.conj(), t.kraus) - np.eye(t.in_dim))

    def __getitem__(self, label) -> CpMap:
        return self.arms[label]

    def to_json(self) -> dict:
        return {str(k): v.to_json() for k, v in self.arms.items()}


def instrument_from_circuit(u, outcome_dim: int, correction: Mapping, tol: Tolerance = DEFAULT_TOL) -> Instrument:
    """Measure-and-correct instrument realised by a unitary circuit.

    ``u`` acts on ``C^outcome_dim (x) C^d``; the first factor is the ancilla
    register (prepared in ``|0>`` by the caller) that gets measured in the
    computational basis, after which ``correction[a]`` is applied to the
    remaining register.  Arm ``a`` has the single Kraus operator
    ``(<a| (x) V_a) U`` from the full input space to ``C^d``, so its adjoint
    ``M -> U*(|a><a| (x) V_a* M V_a)U`` is a *-homomorphism.

    Use :func:`with_fresh_ancilla` to get the ``d -> d`` instrument on the
    system alone.
    """
    u = as_cmatrix(u, "circuit unitary")
    if not is_unitary(u, tol):
        raise NotUnitary("circuit matrix is not unitary")
    total = u.shape[0]
    if total % outcome_dim:
        raise DimensionMismatch(f"dimension {total} is not a multiple of outcome_dim={outcome_dim}")
    d = total // outcome_dim
    arms = {}
    for a in range(outcome_dim):
        va = as_cmatrix(correction.get(a, np.eye(d)), f"correction[{a}]")
        if va.shape != (d, d):
            raise DimensionMismatch(f"correction[{a}] must be {d}x{d}")
        if not is_unitary(va, tol):
            raise NotUnitary(f"correction[{a}] is not unitary")
        bra = np.zeros((1, outcome_dim))
        bra[0, a] = 1.0
        arms[a] = CpMap(total, d, (np.kron(bra, va) @ u)[None])
    return Instrument(arms, tol)


def with_fresh_ancilla(inst: Instrument, outcome_dim: int) -> Instrument:
    """Precompose every arm with ``rho -> |0><0| (x) rho``."""
    d = inst.in_dim // outcome_dim
    ket0 = np.zeros((outcome_dim, 1))
    ket0[0, 0] = 1.0
    prep = CpMap(d, inst.in_dim, np.kron(ket0, np.eye(d))[None])
    return Instrument({a: compose(arm, prep) for a, arm in inst.arms.items()}, inst.tol)
