"""Sequential strategies (assemblage, instruments, final measurement) and their
conversion to commuting-operator strategies through the chain rule.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .cpmaps import CpMap, Instrument, adjoint, apply, sum_maps
from .dilation import Dilation, state_map
from .errors import DimensionMismatch, InvalidStrategy, NotOns, ValidationError
from .games import CommutingStrategy, Correlation, random_povm
from .numerics import (
    DEFAULT_TOL,
    Tolerance,
    dag,
    hermitian_defect,
    hermitize,
    matrix_from_json,
    matrix_to_json,
    max_abs,
    min_eig,
    partial_trace,
)
from .radon_nikodym import CommutingRepresentation, Stage, chain_k, pushforward

ONS_SLACK = 100.0


def _check_labels(labels, what: str) -> list:
    labels = sorted(labels)
    if labels != list(range(len(labels))):
        raise InvalidStrategy(f"{what} labels must be 0..n-1, got {labels}")
    return labels


@dataclass(frozen=True, eq=False)
class SequentialStrategy:
    """``assemblage[x][a]`` is ``sigma_{a|x}``; ``instruments[i][y]`` is an
    :class:`Instrument` with outcome labels ``b``; ``final_povm[z][c]`` is ``C_{c|z}``.

    Labels are the integers ``0..n-1``.  Instrument arms may change the
    dimension as long as consecutive stages fit together.
    """

    dim: int
    assemblage: Mapping = field(repr=False)
    instruments: list = field(default_factory=list, repr=False)
    final_povm: Mapping = field(default_factory=dict, repr=False)
    tol: Tolerance = field(default=DEFAULT_TOL, repr=False)

    def __post_init__(self):
        tol = self.tol
        d = int(self.dim)
        object.__setattr__(self, "dim", d)
        asm = {x: {a: np.asarray(m, dtype=np.complex128) for a, m in arms.items()}
               for x, arms in self.assemblage.items()}
        _check_labels(asm, "assemblage input")
        n_out = None
        for x, arms in asm.items():
            if n_out is None:
                n_out = _check_labels(arms, "assemblage outcome")
            elif sorted(arms) != n_out:
                raise InvalidStrategy("every assemblage input needs the same outcome labels")
            for a, m in arms.items():
                if m.shape != (d, d):
                    raise DimensionMismatch(f"sigma[{a}|{x}] must be {d}x{d}")
                if hermitian_defect(m) > tol.abs_eq or min_eig(m) < -tol.psd_floor:
                    raise InvalidStrategy(f"sigma[{a}|{x}] is not positive semidefinite")
            tr = np.trace(sum(arms.values())).real
            if abs(tr - 1) > tol.abs_eq:
                raise InvalidStrategy(f"assemblage for input {x} has total trace {tr:.6g}, expected 1")
        object.__setattr__(self, "assemblage", asm)

        cur = d
        insts = []
        for i, stage in enumerate(self.instruments):
            _check_labels(stage, f"instrument {i + 2} input")
            fixed = {}
            for y, inst in stage.items():
                if not isinstance(inst, Instrument):
                    inst = Instrument(inst, tol)
                _check_labels(inst.labels, f"instrument {i + 2} outcome")
                if inst.in_dim != cur:
                    raise DimensionMismatch(f"instrument {i + 2} acts on M_{inst.in_dim}, previous stage outputs M_{cur}")
                fixed[y] = inst
            outs = {inst.out_dim for inst in fixed.values()}
            if len(outs) != 1:
                raise DimensionMismatch(f"instrument {i + 2}: inputs disagree on the output dimension")
            cur = outs.pop()
            insts.append(fixed)
        object.__setattr__(self, "instruments", insts)

        povm = {z: {c: np.asarray(m, dtype=np.complex128) for c, m in arms.items()}
                for z, arms in self.final_povm.items()}
        if not povm:
            raise InvalidStrategy("final measurement is missing")
        _check_labels(povm, "final input")
        for z, arms in povm.items():
            _check_labels(arms, "final outcome")
            for c, m in arms.items():
                if m.shape != (cur, cur):
                    raise DimensionMismatch(f"C[{c}|{z}] must be {cur}x{cur}")
                if hermitian_defect(m) > tol.abs_eq or min_eig(m) < -tol.psd_floor:
                    raise InvalidStrategy(f"C[{c}|{z}] is not positive semidefinite")
            if max_abs(sum(arms.values()) - np.eye(cur)) > tol.abs_eq:
                raise InvalidStrategy(f"final POVM for input {z} does not sum to the identity")
        object.__setattr__(self, "final_povm", povm)

    @property
    def players(self) -> int:
        return 2 + len(self.instruments)

    @property
    def final_dim(self) -> int:
        return next(iter(next(iter(self.final_povm.values())).values())).shape[0]

    def shapes(self):
        ins = [len(self.assemblage)] + [len(st) for st in self.instruments] + [len(self.final_povm)]
        outs = ([len(next(iter(self.assemblage.values())))]
                + [len(next(iter(st.values())).labels) for st in self.instruments]
                + [len(next(iter(self.final_povm.values())))])
        return tuple(outs), tuple(ins)

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "assemblage": {f"{a},{x}": matrix_to_json(m) for x, arms in self.assemblage.items()
                           for a, m in arms.items()},
            "instruments": [{str(y): inst.to_json() for y, inst in st.items()} for st in self.instruments],
            "final_povm": {str(z): {str(c): matrix_to_json(m) for c, m in arms.items()}
                           for z, arms in self.final_povm.items()},
        }

    @classmethod
    def from_json(cls, obj, tol: Tolerance = DEFAULT_TOL) -> "SequentialStrategy":
        try:
            asm: dict = {}
            for key, m in obj["assemblage"].items():
                a, x = (int(t) for t in key.split(","))
                asm.setdefault(x, {})[a] = matrix_from_json(m, f"assemblage[{key}]")
            insts = [{int(y): Instrument({int(b): CpMap.from_json(cm, f"instruments[{i}][{y}][{b}]")
                                          for b, cm in arms.items()}, tol)
                      for y, arms in st.items()} for i, st in enumerate(obj.get("instruments", []))]
            povm = {int(z): {int(c): matrix_from_json(m, f"final_povm[{z}][{c}]") for c, m in arms.items()}
                    for z, arms in obj["final_povm"].items()}
            d = int(obj["dim"])
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise ValidationError(f"malformed sequential strategy ({exc})") from exc
        return cls(d, asm, insts, povm, tol)


def eval_sequential(s: SequentialStrategy) -> Correlation:
    """``p = tr[C_{c|z} I_{b|y}(...(sigma_{a|x}))]`` for every label tuple."""
    outs, ins = s.shapes()
    k = s.players
    p = np.zeros(outs + ins)
    # states[(a-prefix, x-prefix)] = unnormalized conditional state
    states = {((a,), (x,)): sig for x, arms in s.assemblage.items() for a, sig in arms.items()}
    for st in s.instruments:
        nxt = {}
        for (a_pre, x_pre), rho in states.items():
            for y, inst in st.items():
                for b, arm in inst.arms.items():
                    nxt[(a_pre + (b,), x_pre + (y,))] = apply(arm, rho)
        states = nxt
    for (a_pre, x_pre), rho in states.items():
        for z, arms in s.final_povm.items():
            for c, m in arms.items():
                p[a_pre + (c,) + x_pre + (z,)] = np.trace(m @ rho).real
    sums = p.sum(axis=tuple(range(k)), keepdims=True)
    return Correlation(k, p / np.where(sums > 0, sums, 1.0))


@dataclass(frozen=True)
class OnsReport:
    state_defect: float
    instrument_defects: tuple
    pass_threshold: float

    @property
    def passed(self) -> bool:
        return self.state_defect <= self.pass_threshold and all(
            d <= self.pass_threshold for d in self.instrument_defects)

    def to_json(self) -> dict:
        return {"state_defect": self.state_defect, "instrument_defects": list(self.instrument_defects),
                "pass_threshold": self.pass_threshold, "passed": self.passed}


def _spread(mats) -> float:
    mats = list(mats)
    return max((max_abs(m - mats[0]) for m in mats[1:]), default=0.0)


def ons_check(s: SequentialStrategy, eps: float = 1e-9) -> OnsReport:
    """Largest input dependence of the outcome-summed state and of each summed instrument.

    Differences against the first input bound the pairwise spread within a
    factor two; the pairwise maximum is computed exactly.
    """
    sums = [sum(arms.values()) for arms in s.assemblage.values()]
    state = max((max_abs(a - b) for a in sums for b in sums), default=0.0)
    inst = []
    for st in s.instruments:
        chois = [inst_.total().choi for inst_ in st.values()]
        inst.append(float(max((max_abs(a - b) for a in chois for b in chois), default=0.0)))
    return OnsReport(float(state), tuple(inst), float(eps))


@dataclass(frozen=True, eq=False)
class Conversion:
    strategy: CommutingStrategy
    representation: CommutingRepresentation
    stages: list = field(repr=False)
    ons: OnsReport | None = None


def _stages(s: SequentialStrategy, tol: Tolerance, generalized: bool) -> list:
    first = Stage({x: {a: state_map(sig, tol) for a, sig in arms.items()} for x, arms in s.assemblage.items()},
                  state_map(hermitize(sum(sum(arms.values()) for arms in s.assemblage.values())
                                      / len(s.assemblage)), tol))
    stages = [first]
    for st in s.instruments:
        maps = {y: {b: adjoint(arm) for b, arm in inst.arms.items()} for y, inst in st.items()}
        if generalized:
            def dominant(dil: Dilation, maps=maps):
                pushed = [pushforward(dil, sum_maps(arms.values()), tol) for arms in maps.values()]
                return CpMap(pushed[0].in_dim, pushed[0].out_dim,
                             np.concatenate([p.kraus for p in pushed]) / np.sqrt(len(pushed)))
            stages.append(Stage(maps, dominant))
        else:
            totals = [adjoint(inst.total()) for inst in st.values()]
            avg = CpMap(totals[0].in_dim, totals[0].out_dim,
                        np.concatenate([t.kraus for t in totals]) / np.sqrt(len(totals)))
            stages.append(Stage(maps, avg))
    return stages


def convert(s: SequentialStrategy, tol: Tolerance = DEFAULT_TOL, generalized: bool = False) -> Conversion:
    """Commuting-operator realization plus the chain data it was built from.

    Without ``generalized`` the strategy must be operationally non-signalling
    at ``100 * abs_eq``.  With it only the state condition is enforced up
    front; the instrument condition is replaced by domination checked on the
    dilated representatives.
    """
    thresh = ONS_SLACK * tol.abs_eq
    report = ons_check(s, thresh)
    bad = report.state_defect > thresh or (not generalized and not report.passed)
    if bad:
        raise NotOns(f"strategy signals: state defect {report.state_defect:.3e}, "
                     f"instrument defects {[f'{d:.3e}' for d in report.instrument_defects]}", report=report)
    stages = _stages(s, tol, generalized)
    rep = chain_k(stages, tol, generalized=generalized)
    povms = []
    for fam in rep.families:
        povms.append(np.array([[hermitize(fam[x][a]) for a in sorted(fam[x])] for x in sorted(fam)]))
    povms.append(np.array([[hermitize(rep.pi(s.final_povm[z][c])) for c in sorted(s.final_povm[z])]
                           for z in sorted(s.final_povm)]))
    psi = rep.v[:, 0]
    strat = CommutingStrategy(rep.dim_k, povms, psi, tol)
    return Conversion(strat, rep, stages, report)


def to_commuting(s: SequentialStrategy, tol: Tolerance = DEFAULT_TOL, generalized: bool = False) -> CommutingStrategy:
    return convert(s, tol, generalized).strategy


# -- constructions -------------------------------------------------------------

def _proj(obs):
    d = obs.shape[0]
    return np.stack([(np.eye(d) + obs) / 2, (np.eye(d) - obs) / 2])


def steering_assemblage(rho, povms) -> dict:
    """``sigma_{a|x} = tr_1[(M_{a|x} (x) 1) rho]`` for the first tensor factor."""
    povms = np.asarray(povms)
    dA = povms.shape[-1]
    dB = rho.shape[0] // dA
    return {x: {a: partial_trace(np.kron(povms[x, a], np.eye(dB)) @ rho, [dA, dB], [1])
                for a in range(povms.shape[1])} for x in range(povms.shape[0])}


def chsh_steering_strategy() -> SequentialStrategy:
    """Optimal CHSH strategy in steering form: Alice's measurement prepares Bob's assemblage."""
    z = np.diag([1.0, -1.0])
    xm = np.array([[0.0, 1.0], [1.0, 0.0]])
    psi = np.array([1, 0, 0, 1]) / np.sqrt(2)
    asm = steering_assemblage(np.outer(psi, psi), [_proj(z), _proj(xm)])
    bob = {0: dict(enumerate(_proj((z + xm) / np.sqrt(2)))), 1: dict(enumerate(_proj((z - xm) / np.sqrt(2))))}
    return SequentialStrategy(2, asm, [], bob)


def mermin_sequential_strategy() -> SequentialStrategy:
    """GHZ strategy made sequential: player 2 measures its qubit and resets it to ``|0>``."""
    xm = np.array([[0, 1], [1, 0]], dtype=complex)
    ym = np.array([[0, -1j], [1j, 0]])
    local = [_proj(xm), _proj(ym)]
    psi = np.zeros(8)
    psi[0] = psi[7] = 1 / np.sqrt(2)
    asm = steering_assemblage(np.outer(psi, psi), local)
    ket0 = np.array([[1.0], [0.0]])
    stage2 = {}
    for y in range(2):
        arms = {}
        for b in range(2):
            kraus = [np.kron(ket0 @ np.eye(2)[[j]] @ local[y][b], np.eye(2)) for j in range(2)]
            arms[b] = CpMap.from_kraus(kraus)
        stage2[y] = Instrument(arms)
    final = {z: {c: np.kron(np.eye(2), local[z][c]) for c in range(2)} for z in range(2)}
    return SequentialStrategy(4, asm, [stage2], final)


def uniform_strategy(players: int = 3, dim: int = 2, n_in: int = 2, n_out: int = 2) -> SequentialStrategy:
    """Every stage splits uniformly; the resulting correlation is uniform."""
    half = CpMap.identity(dim).scaled(1.0 / n_out)
    asm = {x: {a: np.eye(dim) / (dim * n_out) for a in range(n_out)} for x in range(n_in)}
    insts = [{y: Instrument({b: half for b in range(n_out)}) for y in range(n_in)} for _ in range(players - 2)]
    final = {z: {c: np.eye(dim) / n_out for c in range(n_out)} for z in range(n_in)}
    return SequentialStrategy(dim, asm, insts, final)


def signalling_strategy() -> SequentialStrategy:
    """Player 1's input moves the steered state between ``|0>`` and ``|1>``."""
    e0, e1 = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
    asm = {0: {0: e0, 1: np.zeros((2, 2))}, 1: {0: e1, 1: np.zeros((2, 2))}}
    final = {0: {0: e0, 1: e1}}
    return SequentialStrategy(2, asm, [], final)


def _random_state(rng, d: int) -> np.ndarray:
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


def random_ons_instrument(rng, d: int, n_in: int = 2, n_out: int = 2, env: int = 2) -> dict:
    """``I_{b|y}(rho) = tr_E[(1 (x) N_{b|y}) W rho W*]`` for one fixed isometry ``W``.

    The outcome sum is ``tr_E[W rho W*]`` whatever ``y`` is, so the family is
    operationally non-signalling by construction.
    """
    from scipy.stats import unitary_group

    w = unitary_group.rvs(d * env, random_state=rng)[:, :d]
    env_povm = random_povm(rng, n_in, n_out, env)
    out = {}
    for y in range(n_in):
        arms = {}
        for b in range(n_out):
            ev, eu = np.linalg.eigh(hermitize(env_povm[y, b]))
            root = (eu * np.sqrt(np.clip(ev, 0, None))) @ dag(eu)
            kraus = [np.kron(np.eye(d), np.eye(env)[[l]] @ root) @ w for l in range(env)]
            arms[b] = CpMap.from_kraus(kraus)
        out[y] = Instrument(arms)
    return out


def random_ons_strategy(rng, players: int = 3, dim: int = 2, n_in: int = 2, n_out: int = 2) -> SequentialStrategy:
    """Seeded random ONS strategy: steering from a random entangled state, random
    Stinespring instruments, random final POVM."""
    rng = np.random.default_rng(rng)
    psi = _random_state(rng, dim * dim)
    asm = steering_assemblage(np.outer(psi, psi.conj()), random_povm(rng, n_in, n_out, dim))
    insts = [random_ons_instrument(rng, dim, n_in, n_out) for _ in range(players - 2)]
    final_arr = random_povm(rng, n_in, n_out, dim)
    final = {z: {c: final_arr[z, c] for c in range(n_out)} for z in range(n_in)}
    return SequentialStrategy(dim, asm, insts, final)
