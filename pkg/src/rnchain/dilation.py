"""Minimal Stinespring and GNS dilations built from the Gram form.

For ``T: M_n -> M_m`` the formal tensors ``E_ij (.) e_p`` span a space of
dimension ``n^2 m`` carrying the positive semidefinite form
``<a (.) h, b (.) g> = <h, T(a* b) g>``.  Its Gram matrix is diagonalised,
null directions are discarded, and the surviving eigenvectors, scaled by
``sqrt(eigenvalue)``, give isometric coordinates on the quotient.  The
representation acts by left multiplication on the algebra slot, and
``V h`` is the class of ``1 (.) h``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .cpmaps import CpMap, apply
from .errors import NotCP, NotState, ValidationError
from .numerics import (
    DEFAULT_TOL,
    Tolerance,
    as_cmatrix,
    dag,
    hermitian_defect,
    hermitize,
    matrix_from_json,
    matrix_to_json,
    max_abs,
    min_eig,
    numerical_rank,
    op_norm,
)


@dataclass(frozen=True, eq=False)
class Dilation:
    """Stinespring triple ``(K, pi, V)`` of ``source``.

    ``units[i, j]`` is ``pi(E_ij)``.  ``embed`` (``K x n^2 m``) maps symbol
    vectors to quotient coordinates and ``embed_pinv`` is its right inverse on
    the retained subspace; both are ``None`` for hand-built dilations.
    """

    dil_dim: int
    units: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    source: CpMap | None = field(default=None, repr=False)
    embed: np.ndarray | None = field(default=None, repr=False)
    embed_pinv: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.units.shape[0]

    @property
    def rep(self) -> dict:
        n = self.n
        return {(i, j): self.units[i, j] for i in range(n) for j in range(n)}

    def pi(self, a) -> np.ndarray:
        """Image of an arbitrary ``a`` in ``M_n`` under the linear extension."""
        a = as_cmatrix(a)
        return np.einsum("ij,ijkl->kl", a, self.units)

    def to_json(self) -> dict:
        return {
            "dil_dim": self.dil_dim,
            "rep": {f"{i},{j}": matrix_to_json(m) for (i, j), m in self.rep.items()},
            "v": matrix_to_json(self.v),
        }

    @classmethod
    def from_json(cls, obj, source: CpMap | None = None) -> "Dilation":
        try:
            k = int(obj["dil_dim"])
            rep = {tuple(int(t) for t in key.split(",")): matrix_from_json(val, f"rep[{key}]")
                   for key, val in obj["rep"].items()}
            v = matrix_from_json(obj["v"], "v")
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise ValidationError(f"malformed dilation ({exc})") from exc
        n = int(round(np.sqrt(len(rep))))
        units = np.zeros((n, n, k, k), dtype=np.complex128)
        for (i, j), m in rep.items():
            units[i, j] = m
        return cls(k, units, v, source)


def _quotient(gram: np.ndarray, tol: Tolerance):
    w, u = np.linalg.eigh(hermitize(gram))
    wmax = w[-1] if w.size else 0.0
    if wmax <= 0:
        return np.zeros((0, gram.shape[0]), dtype=np.complex128), np.zeros((gram.shape[0], 0), dtype=np.complex128)
    keep = w > tol.rank_cut * wmax
    w, u = w[keep][::-1], u[:, keep][:, ::-1]
    sq = np.sqrt(w)
    embed = sq[:, None] * dag(u)
    embed_pinv = u / sq[None, :]
    return embed, embed_pinv


def stinespring_minimal(t: CpMap, tol: Tolerance = DEFAULT_TOL, perm=None) -> Dilation:
    """Minimal Stinespring dilation of ``t`` via the quotient of the Gram form.

    ``perm`` optionally reorders the symbol basis; the result is then unitarily
    equivalent to the default one.
    """
    gap = min_eig(t.choi) if t.choi.size else 0.0
    if gap < -tol.psd_floor:
        raise NotCP(f"map is not completely positive (Choi eigenvalue {gap:.3e})")
    n, m = t.in_dim, t.out_dim
    size = n * n * m
    gram = _kernels.gram_matrix(t.kraus)
    if perm is not None:
        perm = np.asarray(perm)
        if sorted(perm.tolist()) != list(range(size)):
            raise ValidationError("perm must be a permutation of the symbol basis")
        gram = gram[np.ix_(perm, perm)]
    embed, embed_pinv = _quotient(gram, tol)
    if perm is not None:
        # back to the canonical symbol ordering
        inv = np.argsort(perm)
        embed = embed[:, inv]
        embed_pinv = embed_pinv[inv, :]
    k = embed.shape[0]
    nm = n * m
    blocks = embed.reshape(k, n, nm)
    pblocks = embed_pinv.reshape(n, nm, k)
    # pi(E_ij) sends E_jl (.) h to E_il (.) h: left block i times right block j
    units = np.einsum("kia,jal->ijkl", blocks, pblocks)
    diag_idx = [(i * n + i) * m for i in range(n)]
    v = sum(embed[:, s:s + m] for s in diag_idx)
    return Dilation(k, units, v, t, embed, embed_pinv)


def state_map(rho, tol: Tolerance = DEFAULT_TOL) -> CpMap:
    """The functional ``a -> tr(rho a)`` as a CP map into ``M_1``."""
    rho = as_cmatrix(rho, "density matrix")
    if rho.shape[0] != rho.shape[1]:
        raise NotState("density matrix must be square")
    if hermitian_defect(rho) > tol.abs_eq or min_eig(rho) < -tol.psd_floor:
        raise NotState("density matrix is not positive semidefinite")
    w, u = np.linalg.eigh(hermitize(rho))
    keep = w > tol.rank_cut * max(w[-1], 0.0)
    if not np.any(keep):
        return CpMap.zero(rho.shape[0], 1)
    vecs = u[:, keep] * np.sqrt(w[keep])
    return CpMap(rho.shape[0], 1, dag(vecs.T[:, :, None]))


def gns(rho, tol: Tolerance = DEFAULT_TOL) -> Dilation:
    """GNS triple of the state ``a -> tr(rho a)``; ``v`` is the cyclic unit vector."""
    rho = as_cmatrix(rho, "density matrix")
    tr = np.trace(rho)
    if abs(tr - 1) > tol.abs_eq:
        raise NotState(f"trace is {tr.real:.6g}, expected 1")
    return stinespring_minimal(state_map(rho, tol), tol)


def verify_dilation(d: Dilation, tol: Tolerance = DEFAULT_TOL, source: CpMap | None = None) -> dict:
    """Residuals of every dilation invariant (all should be ~0)."""
    src = source if source is not None else d.source
    n, k = d.n, d.dil_dim
    units = d.units
    hom = 0.0
    star = 0.0
    for i in range(n):
        for j in range(n):
            star = max(star, max_abs(dag(units[i, j]) - units[j, i]))
            for l in range(n):
                prod = np.einsum("ab,mbc->mac", units[i, j], units[:, l])
                expect = np.zeros_like(prod)
                expect[j] = units[i, l]
                hom = max(hom, max_abs(prod - expect))
    recon = 0.0
    norm_res = 0.0
    if src is not None:
        for i in range(n):
            for j in range(n):
                e = np.zeros((n, n))
                e[i, j] = 1.0
                recon = max(recon, max_abs(dag(d.v) @ units[i, j] @ d.v - apply(src, e)))
        norm_res = abs(op_norm(d.v) ** 2 - op_norm(apply(src, np.eye(n))))
    span = np.concatenate([units[i, j] @ d.v for i in range(n) for j in range(n)], axis=1) if k else np.zeros((0, 0))
    rank = numerical_rank(span, tol) if k else 0
    return {
        "homomorphism": hom,
        "star": star,
        "reconstruction": recon,
        "minimality_defect": int(k - rank),
        "norm": norm_res,
    }


def intertwiner(d1: Dilation, d2: Dilation, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Operator ``W`` with ``W pi1(a) V1 = pi2(a) V2`` on the spanning vectors."""
    from .numerics import pinv

    s1 = np.concatenate([d1.units[i, j] @ d1.v for i in range(d1.n) for j in range(d1.n)], axis=1)
    s2 = np.concatenate([d2.units[i, j] @ d2.v for i in range(d2.n) for j in range(d2.n)], axis=1)
    return s2 @ pinv(s1, tol)


def kraus_dilation(t: CpMap) -> Dilation:
    """Textbook dilation ``K = C^n (x) C^r``, ``pi(a) = a (x) 1``, ``V = sum_r K_r* (x) e_r``.

    Independent of the Gram construction; used as a cross-check.
    """
    n, r = t.in_dim, t.rank
    units = np.zeros((n, n, n * r, n * r), dtype=np.complex128)
    for i in range(n):
        for j in range(n):
            e = np.zeros((n, n))
            e[i, j] = 1.0
            units[i, j] = np.kron(e, np.eye(r))
    v = sum(np.kron(dag(t.kraus[s]), np.eye(r)[:, [s]]) for s in range(r))
    return Dilation(n * r, units, v, t)
