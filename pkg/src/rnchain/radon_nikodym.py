"""Radon-Nikodym derivatives of dominated CP maps, lifting through dilations,
and the chain rule that turns a sequence of dominated maps into commuting
operators on a single dilation space.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Mapping, Sequence

import numpy as np

from . import _kernels
from .cpmaps import CpMap, apply, dominates, domination_gap, sum_maps
from .dilation import Dilation, stinespring_minimal
from .errors import DimensionMismatch, NotDominated, NotInCommutant, RangeViolation, SumMismatch, ValidationError
from .numerics import (
    DEFAULT_TOL,
    Tolerance,
    as_cmatrix,
    commutator,
    dag,
    hermitize,
    matrix_from_json,
    matrix_to_json,
    max_abs,
)

#: commutant membership is tested against images that already carry
#: accumulated roundoff, so the threshold is looser than ``abs_eq``
COMMUTANT_SLACK = 100.0


@dataclass(frozen=True, eq=False)
class RnDerivative:
    d: np.ndarray = field(repr=False)
    dilation: Dilation = field(repr=False)


def _require_quotient(dil: Dilation):
    if dil.embed is None or dil.embed_pinv is None or dil.source is None:
        raise ValidationError("dilation lacks quotient coordinates; build it with stinespring_minimal")


def rn_derivative(s: CpMap, dil: Dilation, tol: Tolerance = DEFAULT_TOL) -> RnDerivative:
    """Derivative ``D`` in the commutant of ``pi`` with ``s(a) = V* D pi(a) V``.

    The columns of ``dil.embed`` are the quotient coordinates of the spanning
    vectors ``pi(E_ij) V e_p``; the pairings ``<pi(E_ij)V e_p, D pi(E_kl)V e_q>``
    equal the Gram matrix of ``s``, so ``D = (W*)^+ G_s W^+``.
    """
    _require_quotient(dil)
    r = dil.source
    if (s.in_dim, s.out_dim) != (r.in_dim, r.out_dim):
        raise DimensionMismatch("dominated map and dilation source differ in shape")
    gap = domination_gap(r, s)
    if gap < -tol.psd_floor:
        raise NotDominated(f"map is not dominated by the dilation source (gap {gap:.3e})")
    wp = dil.embed_pinv
    d = hermitize(dag(wp) @ _kernels.gram_matrix(s.kraus) @ wp)
    w, u = np.linalg.eigh(d)
    if w.size and (w[0] < -tol.psd_floor or w[-1] > 1 + tol.psd_floor):
        raise RangeViolation(f"derivative spectrum [{w[0]:.3e}, {w[-1]:.6g}] escapes [0, 1]")
    d = (u * np.clip(w, 0.0, 1.0)) @ dag(u)
    return RnDerivative(d, dil)


def rn_decomposition(parts: Sequence[CpMap], dil: Dilation, tol: Tolerance = DEFAULT_TOL) -> list:
    """Derivatives of a finite decomposition of the dilated map; they sum to the identity."""
    _require_quotient(dil)
    parts = list(parts)
    total = sum_maps(parts)
    if (total.in_dim, total.out_dim) != (dil.source.in_dim, dil.source.out_dim):
        raise DimensionMismatch("parts and dilation source differ in shape")
    mismatch = max_abs(total.choi - dil.source.choi)
    if mismatch > tol.abs_eq:
        raise SumMismatch(f"parts do not sum to the dilated map (Choi defect {mismatch:.3e})")
    return [rn_derivative(p, dil, tol) for p in parts]


def commutant_defect(m: np.ndarray, t: CpMap) -> float:
    """max over matrix units of ``|[m, T(E_ij)]|`` and ``|[m, T(E_ij)*]|``."""
    n = t.in_dim
    worst = 0.0
    for i in range(n):
        for j in range(n):
            e = np.zeros((n, n))
            e[i, j] = 1.0
            img = apply(t, e)
            worst = max(worst, max_abs(commutator(m, img)), max_abs(commutator(m, dag(img))))
    return worst


def lift(m, dil: Dilation, tol: Tolerance = DEFAULT_TOL, check: bool = True) -> np.ndarray:
    """Lift ``m`` from the input space of ``V`` to the dilation space.

    Acts on representatives as ``a (.) h -> a (.) m h`` and re-embeds in the
    quotient coordinates, so the lift is fixed on the whole space rather than
    only on the range of ``V``.
    """
    _require_quotient(dil)
    m = as_cmatrix(m)
    src = dil.source
    if m.shape != (src.out_dim, src.out_dim):
        raise DimensionMismatch(f"operator must be {src.out_dim}x{src.out_dim}, got {m.shape}")
    if check:
        defect = commutant_defect(m, src)
        if defect > COMMUTANT_SLACK * tol.abs_eq:
            raise NotInCommutant(f"operator fails to commute with the map's image (defect {defect:.3e})")
    k = dil.dil_dim
    left = np.einsum("kbq,qp->kbp", dil.embed.reshape(k, -1, src.out_dim), m).reshape(k, -1)
    return left @ dil.embed_pinv


# -- chain rule --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Stage:
    """One link of the chain.

    ``maps[x][a]`` is the dominated map for input ``x`` and outcome ``a``.
    ``dominant`` is the dominating map (default: input-average of the outcome
    sums).  For the generalized chain rule it may instead be a callable
    receiving the previous stage's :class:`Dilation` and returning a CP map
    into the operators on that dilation space.
    """

    maps: Mapping
    dominant: CpMap | Callable | None = None

    def dominant_map(self) -> CpMap:
        if isinstance(self.dominant, CpMap):
            return self.dominant
        sums = [sum_maps(arms.values()) for arms in self.maps.values()]
        n = len(sums)
        return CpMap(sums[0].in_dim, sums[0].out_dim,
                     np.concatenate([s.kraus for s in sums]) / np.sqrt(n))


@dataclass(frozen=True, eq=False)
class CommutingRepresentation:
    dim_k: int
    units: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    families: list = field(repr=False)
    dilations: list = field(default_factory=list, repr=False)

    def pi(self, a) -> np.ndarray:
        return np.einsum("ij,ijkl->kl", as_cmatrix(a), self.units)

    def to_json(self) -> dict:
        n = self.units.shape[0]
        return {
            "dim_k": self.dim_k,
            "rep": {f"{i},{j}": matrix_to_json(self.units[i, j]) for i in range(n) for j in range(n)},
            "v": matrix_to_json(self.v),
            "families": [
                {str(x): {str(a): matrix_to_json(op) for a, op in arms.items()} for x, arms in fam.items()}
                for fam in self.families
            ],
        }

    @classmethod
    def from_json(cls, obj) -> "CommutingRepresentation":
        try:
            k = int(obj["dim_k"])
            rep = {tuple(int(t) for t in key.split(",")): matrix_from_json(val) for key, val in obj["rep"].items()}
            v = matrix_from_json(obj["v"], "v")
            fams = [{_label(x): {_label(a): matrix_from_json(op) for a, op in arms.items()}
                     for x, arms in fam.items()} for fam in obj["families"]]
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise ValidationError(f"malformed commuting representation ({exc})") from exc
        n = int(round(np.sqrt(len(rep))))
        units = np.zeros((n, n, k, k), dtype=np.complex128)
        for (i, j), m in rep.items():
            units[i, j] = m
        return cls(k, units, v, fams)


def _label(s: str):
    try:
        return int(s)
    except ValueError:
        return s


def pushforward(dil: Dilation, t: CpMap, tol: Tolerance = DEFAULT_TOL) -> CpMap:
    """The CP map ``pi o t`` into the operators on the dilation space."""
    if t.out_dim != dil.n:
        raise DimensionMismatch(f"map lands in M_{t.out_dim} but the representation is of M_{dil.n}")
    return CpMap.from_function(lambda e: dil.pi(apply(t, e)), t.in_dim, dil.dil_dim, tol)


def _check_dominated(maps: Mapping, dom: CpMap, tol: Tolerance, stage: int):
    for x, arms in maps.items():
        for a, s in arms.items():
            gap = domination_gap(dom, s)
            if gap < -tol.psd_floor:
                raise NotDominated(f"stage {stage}, input {x!r}, outcome {a!r}: not dominated (gap {gap:.3e})")


def chain_k(stages: Sequence[Stage], tol: Tolerance = DEFAULT_TOL, generalized: bool = False) -> CommutingRepresentation:
    """Commuting operators ``F`` on one space with
    ``S1 o ... o Sk(a) = V* F1 ... Fk pi(a) V``.

    Dilate the first dominant map and take derivatives; for every later stage
    dilate ``pi_prev o R``, take derivatives of ``pi_prev o S`` and lift every
    accumulated operator through the new dilation.
    """
    stages = list(stages)
    if not stages:
        raise ValidationError("chain needs at least one stage")
    first = stages[0]
    dom = first.dominant_map()
    _check_dominated(first.maps, dom, tol, 1)
    cur = stinespring_minimal(dom, tol)
    families = [{x: {a: rn_derivative(s, cur, tol).d for a, s in arms.items()}
                 for x, arms in first.maps.items()}]
    v = cur.v
    dils = [cur]
    for idx, st in enumerate(stages[1:], start=2):
        spi = {x: {a: pushforward(cur, s, tol) for a, s in arms.items()} for x, arms in st.maps.items()}
        if generalized and callable(st.dominant) and not isinstance(st.dominant, CpMap):
            rpi = st.dominant(cur)
        else:
            rpi = pushforward(cur, st.dominant_map(), tol)
        _check_dominated(spi, rpi, tol, idx)
        new = stinespring_minimal(rpi, tol)
        families = [{x: {a: lift(op, new, tol) for a, op in arms.items()} for x, arms in fam.items()}
                    for fam in families]
        families.append({x: {a: rn_derivative(s, new, tol).d for a, s in arms.items()}
                         for x, arms in spi.items()})
        v = new.v @ v
        cur = new
        dils.append(new)
    return CommutingRepresentation(cur.dil_dim, cur.units, v, families, dils)


def chain2(stage1: Stage, stage2: Stage, tol: Tolerance = DEFAULT_TOL, generalized: bool = False) -> CommutingRepresentation:
    return chain_k([stage1, stage2], tol, generalized)


def _composed_image(stages: Sequence[Stage], labels, e: np.ndarray) -> np.ndarray:
    img = e
    for st, (x, a) in zip(reversed(stages), reversed(labels)):
        img = apply(st.maps[x][a], img)
    return img


def chain_residuals(rep: CommutingRepresentation, stages: Sequence[Stage] | None = None) -> dict:
    """Named residuals of every commuting-representation invariant."""
    ops_by_stage = [[op for arms in fam.values() for op in arms.values()] for fam in rep.families]
    n = rep.units.shape[0]
    units = [rep.units[i, j] for i in range(n) for j in range(n)]
    eye = np.eye(rep.dim_k)
    closure = 0.0
    positivity = 0.0
    for fam in rep.families:
        for arms in fam.values():
            closure = max(closure, max_abs(sum(arms.values()) - eye))
            for op in arms.values():
                positivity = max(positivity, max(0.0, -float(np.linalg.eigvalsh(hermitize(op))[0])))
    cross = 0.0
    for s1 in range(len(ops_by_stage)):
        for s2 in range(s1 + 1, len(ops_by_stage)):
            for a in ops_by_stage[s1]:
                for b in ops_by_stage[s2]:
                    cross = max(cross, max_abs(commutator(a, b)))
    with_rep = 0.0
    for ops in ops_by_stage:
        for a in ops:
            for u in units:
                with_rep = max(with_rep, max_abs(commutator(a, u)))
    out = {
        "povm_closure": closure,
        "positivity": positivity,
        "cross_commutator": cross,
        "rep_commutator": with_rep,
        "v_norm_sq": float(np.linalg.norm(rep.v, 2) ** 2),
    }
    if stages is not None:
        recon = 0.0
        label_sets = [[(x, a) for x, arms in st.maps.items() for a in arms] for st in stages]
        for labels in product(*label_sets):
            f = eye
            for fam, (x, a) in zip(rep.families, labels):
                f = f @ fam[x][a]
            for i in range(n):
                for j in range(n):
                    e = np.zeros((n, n))
                    e[i, j] = 1.0
                    lhs = dag(rep.v) @ f @ rep.units[i, j] @ rep.v
                    recon = max(recon, max_abs(lhs - _composed_image(stages, labels, e)))
        out["reconstruction"] = recon
    return out
