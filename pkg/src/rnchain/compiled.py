"""Exact simulator of the compiled (encrypted-rounds) protocol with toy encryption.

Rounds ``1..k-1`` send an encrypted question and receive an encrypted answer;
round ``k`` is in the clear.  The prover is a quantum program: one
:class:`Instrument` per (round, received label) acting on its memory.  Every
branch (questions, keys, encryption randomness, measurement outcomes) is
enumerated, so correlations are exact.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import product
from math import lcm, prod
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import unitary_group

from .cpmaps import CpMap, Instrument, apply
from .errors import DimensionMismatch, InvalidStrategy, TooLarge, ValidationError
from .games import Correlation, Game, ns_check, score
from .numerics import DEFAULT_TOL, Tolerance, hermitize, matrix_from_json, matrix_to_json, max_abs
from .sequential import SequentialStrategy

BRANCH_CAP = 1 << 16


# -- schemes -------------------------------------------------------------------

class EncryptionScheme:
    """Key distribution, randomness, and enc/dec on labels ``0..n-1``.

    ``n_in``/``n_out`` are the question and answer alphabet sizes of the round.
    """

    name = "abstract"

    def keys(self, n_in: int, n_out: int) -> list:
        raise NotImplementedError

    def randomness(self, n_in: int) -> list:
        return [0]

    def enc(self, key, x: int, r, n: int) -> int:
        raise NotImplementedError

    def dec(self, key, c: int, n: int) -> int:
        raise NotImplementedError

    def ciphertext_space(self, n: int) -> list:
        return list(range(n))


class IdentityScheme(EncryptionScheme):
    """Ciphertext equals plaintext."""

    name = "identity"

    def keys(self, n_in, n_out):
        return [(0, 1.0)]

    def enc(self, key, x, r, n):
        return int(x)

    def dec(self, key, c, n):
        return int(c)


class XorPad(EncryptionScheme):
    """Fresh uniform additive pad per round.

    The pad lives in ``Z_L`` with ``L = lcm(|I|, |O|)`` so that it is uniform
    modulo both alphabet sizes; on bits this is the one-time pad.  Perfectly
    secret per round, not homomorphic.
    """

    name = "xorpad"

    def keys(self, n_in, n_out):
        m = lcm(n_in, n_out)
        return [(k, 1.0 / m) for k in range(m)]

    def enc(self, key, x, r, n):
        return (int(x) + key) % n

    def dec(self, key, c, n):
        return (int(c) - key) % n


SCHEMES = {"identity": IdentityScheme, "xorpad": XorPad}


def scheme_by_name(name: str) -> EncryptionScheme:
    try:
        return SCHEMES[name]()
    except KeyError:
        raise ValidationError(f"unknown scheme {name!r}; expected one of {sorted(SCHEMES)}") from None


# -- prover --------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ProverProgram:
    """``rounds[i][label]`` is the instrument applied on receiving ``label`` in round ``i``.

    Outcome labels of the instrument are the (encrypted, except in the last
    round) answers.
    """

    initial_state: np.ndarray = field(repr=False)
    rounds: list = field(repr=False)
    tol: Tolerance = field(default=DEFAULT_TOL, repr=False)

    def __post_init__(self):
        rho = np.asarray(self.initial_state, dtype=np.complex128)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise InvalidStrategy("initial state must be a square matrix")
        if abs(np.trace(rho) - 1) > self.tol.abs_eq or np.linalg.eigvalsh(hermitize(rho))[0] < -self.tol.psd_floor:
            raise InvalidStrategy("initial state is not a density matrix")
        rounds = []
        for i, rnd in enumerate(self.rounds):
            fixed = {}
            for lab, inst in rnd.items():
                if not isinstance(inst, Instrument):
                    inst = Instrument(inst, self.tol)
                fixed[int(lab)] = inst
            rounds.append(fixed)
        object.__setattr__(self, "initial_state", rho)
        object.__setattr__(self, "rounds", rounds)

    def to_json(self) -> dict:
        return {"initial_state": matrix_to_json(self.initial_state),
                "rounds": [{str(lab): inst.to_json() for lab, inst in rnd.items()} for rnd in self.rounds]}

    @classmethod
    def from_json(cls, obj, tol: Tolerance = DEFAULT_TOL) -> "ProverProgram":
        try:
            rho = matrix_from_json(obj["initial_state"], "initial_state")
            rounds = [{int(lab): Instrument({int(b): CpMap.from_json(cm, f"rounds[{i}][{lab}][{b}]")
                                             for b, cm in arms.items()}, tol)
                       for lab, arms in rnd.items()} for i, rnd in enumerate(obj["rounds"])]
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise ValidationError(f"malformed prover program ({exc})") from exc
        return cls(rho, rounds, tol)


@dataclass(frozen=True)
class Transcript:
    x: tuple
    ciphertexts: tuple
    keys: tuple
    answers: tuple
    weight: float

    def to_json(self) -> dict:
        return {"x": list(self.x), "ciphertexts": list(self.ciphertexts), "keys": list(self.keys),
                "answers": list(self.answers), "weight": self.weight}


def run_protocol(g: Game, p: ProverProgram, e: EncryptionScheme, cap: int = BRANCH_CAP) -> list:
    """Every branch of the protocol with its probability weight.

    Weights include a uniform ``1/#questions`` factor so a full enumeration sums
    to one; the game's own question distribution enters only through scoring.
    """
    k = g.players
    if len(p.rounds) != k:
        raise ValidationError(f"prover has {len(p.rounds)} rounds, game has {k} players")
    per_round = []
    for i in range(k):
        n_in, n_out = g.inputs[i], g.outputs[i]
        if i < k - 1:
            keys = e.keys(n_in, n_out)
            rand = e.randomness(n_in)
            labels = e.ciphertext_space(n_in)
        else:
            keys, rand, labels = [(None, 1.0)], [0], list(range(n_in))
        missing = [c for c in labels if c not in p.rounds[i]]
        if missing:
            raise ValidationError(f"prover round {i + 1} has no instrument for labels {missing}")
        outs = max(len(p.rounds[i][c].labels) for c in labels)
        per_round.append((keys, rand, outs))
    branches = prod(g.inputs) * prod(len(kk) * len(rr) * o for kk, rr, o in per_round)
    if branches > cap:
        raise TooLarge(f"{branches} protocol branches exceed the cap {cap}")

    out = []
    base = 1.0 / prod(g.inputs)

    def walk(i, xs, rho, w, cts, ks, ans):
        if i == k:
            weight = base * w * float(np.trace(rho).real)
            if weight > 0:
                out.append(Transcript(xs, tuple(cts), tuple(ks), tuple(ans), weight))
            return
        keys, rand, _ = per_round[i]
        for key, pk in keys:
            for r in rand:
                if i < k - 1:
                    c = e.enc(key, xs[i], r, g.inputs[i])
                    pr = pk / len(rand)
                else:
                    c, pr = xs[i], 1.0
                inst = p.rounds[i][c]
                if inst.in_dim != rho.shape[0]:
                    raise DimensionMismatch(f"round {i + 1}: instrument acts on M_{inst.in_dim}, "
                                            f"prover memory is M_{rho.shape[0]}")
                for b, arm in inst.arms.items():
                    walk(i + 1, xs, apply(arm, rho), w * pr, cts + [c], ks + [key], ans + [b])

    for xs in np.ndindex(*g.inputs):
        walk(0, tuple(int(v) for v in xs), p.initial_state, 1.0, [], [], [])
    return out


def decrypted_correlation(ts: Sequence[Transcript], e: EncryptionScheme, g: Game) -> Correlation:
    """Average over keys/randomness of the decrypted answers, normalized per question tuple."""
    k = g.players
    p = np.zeros(g.outputs + g.inputs)
    for t in ts:
        a = tuple(e.dec(t.keys[i], t.answers[i], g.outputs[i]) if i < k - 1 else t.answers[i] for i in range(k))
        if any(not 0 <= a[i] < g.outputs[i] for i in range(k)):
            raise ValidationError(f"answer {a} falls outside the game's output alphabet")
        p[a + t.x] += t.weight
    sums = p.sum(axis=tuple(range(k)), keepdims=True)
    return Correlation(k, p / np.where(sums > 0, sums, 1.0))


def compiled_score(g: Game, c: Correlation) -> float:
    return score(g, c)


# -- auditing ------------------------------------------------------------------

def _subset_defect(c: Correlation, i: int, keep: Sequence[int]) -> float:
    """Dependence on ``x_i`` of the joint marginal of players ``keep``."""
    k = c.players
    if not keep:
        return 0.0
    drop = tuple(j for j in range(k) if j not in keep)
    marg = c.p.sum(axis=drop)
    xi = len(keep) + i
    if marg.shape[xi] < 2:
        return 0.0
    return max_abs(marg - np.take(marg, [0], axis=xi))


@dataclass(frozen=True)
class AuditReport:
    defects: tuple
    forward: tuple
    backward: tuple
    eps: float

    @property
    def passed(self) -> bool:
        return all(d <= self.eps for d in self.defects)

    def to_json(self) -> dict:
        return {"defects": list(self.defects), "forward": list(self.forward), "backward": list(self.backward),
                "eps": self.eps, "passed": self.passed}


def eps_ns_audit(c: Correlation, eps: float = 1e-9) -> AuditReport:
    """No-signalling defects per player, also split by causal direction.

    ``forward[i]``: effect of player ``i``'s question on the answers of later
    players.  ``backward[i]``: effect on earlier players, which the round
    structure forces to zero.
    """
    k = c.players
    ns = ns_check(c, eps)
    fwd = tuple(float(_subset_defect(c, i, list(range(i + 1, k)))) for i in range(k))
    bwd = tuple(float(_subset_defect(c, i, list(range(i)))) for i in range(k))
    return AuditReport(ns.defects, fwd, bwd, float(eps))


# -- prover builders -----------------------------------------------------------

def _prep_arm(sigma) -> CpMap:
    """``c -> c * sigma`` as a map ``M_1 -> M_d``."""
    w, u = np.linalg.eigh(hermitize(np.asarray(sigma, dtype=np.complex128)))
    keep = w > 0
    if not np.any(keep):
        return CpMap.zero(1, sigma.shape[0])
    cols = u[:, keep] * np.sqrt(w[keep])
    return CpMap(1, sigma.shape[0], cols.T[:, :, None])


def _measure_arm(effect) -> CpMap:
    """``rho -> tr(C rho)`` as a map ``M_d -> M_1``."""
    w, u = np.linalg.eigh(hermitize(np.asarray(effect, dtype=np.complex128)))
    keep = w > 0
    if not np.any(keep):
        return CpMap.zero(effect.shape[0], 1)
    rows = (u[:, keep] * np.sqrt(w[keep])).conj().T
    return CpMap(effect.shape[0], 1, rows[:, None, :])


def honest_prover(s: SequentialStrategy) -> ProverProgram:
    """The prover that plays ``s`` round by round on its own memory."""
    first = {x: Instrument({a: _prep_arm(sig) for a, sig in arms.items()}) for x, arms in s.assemblage.items()}
    last = {z: Instrument({c: _measure_arm(m) for c, m in arms.items()}) for z, arms in s.final_povm.items()}
    return ProverProgram(np.ones((1, 1)), [first] + list(s.instruments) + [last])


def _memory_prover(g: Game, store_round: int) -> ProverProgram:
    """Answers 0 in encrypted rounds, stores the label received in ``store_round``
    (reduced modulo the last answer alphabet) and announces it in the clear at the end."""
    k = g.players
    n = g.outputs[-1]
    basis = np.eye(n)
    rounds = []
    for i in range(k - 1):
        if i < store_round:
            arm = lambda c: CpMap.identity(1)
        elif i == store_round:
            arm = lambda c: CpMap(1, n, basis[:, [c % n]][None])
        else:
            arm = lambda c: CpMap.identity(n)
        rounds.append({c: Instrument({0: arm(c)}) for c in range(g.inputs[i])})
    rounds.append({z: Instrument({c: CpMap(n, 1, basis[[c]][None]) for c in range(n)}) for z in range(g.inputs[-1])})
    return ProverProgram(np.ones((1, 1)), rounds)


def echo_prover(g: Game) -> ProverProgram:
    """Answers 0 while encrypted, then repeats the last ciphertext as its final answer."""
    if g.players < 2:
        raise ValidationError("echo prover needs at least two players")
    return _memory_prover(g, g.players - 2)


def copying_prover(g: Game) -> ProverProgram:
    """Carries the first received label to the final answer; signals under the identity scheme."""
    if g.players < 2:
        raise ValidationError("copying prover needs at least two players")
    return _memory_prover(g, 0)


def random_instrument(rng, d_in: int, d_out: int, n_out: int, env: int = 2) -> Instrument:
    """Haar isometry ``C^d_in -> C^n_out (x) C^d_out (x) C^env`` cut into arms."""
    total = n_out * d_out * env
    w = unitary_group.rvs(total, random_state=rng)[:, :d_in] if total > 1 else np.ones((1, 1))
    blocks = w.reshape(n_out, d_out, env, d_in)
    return Instrument({a: CpMap(d_in, d_out, np.transpose(blocks[a], (1, 0, 2))) for a in range(n_out)})


def random_prover(g: Game, rng, dim: int = 2) -> ProverProgram:
    """Seeded prover with a Haar-random instrument for every (round, label)."""
    rng = np.random.default_rng(rng)
    k = g.players
    dims = [1] + [dim] * (k - 1) + [1]
    rounds = [{c: random_instrument(rng, dims[i], dims[i + 1], g.outputs[i]) for c in range(g.inputs[i])}
              for i in range(k)]
    return ProverProgram(np.ones((1, 1)), rounds)


# -- run descriptors -----------------------------------------------------------

def transcripts_jsonl(ts: Sequence[Transcript]) -> str:
    return "".join(json.dumps(t.to_json(), sort_keys=True) + "\n" for t in ts)


def simulate(g: Game, p: ProverProgram, scheme: EncryptionScheme, eps: float = 1e-9, cap: int = BRANCH_CAP) -> dict:
    ts = run_protocol(g, p, scheme, cap)
    corr = decrypted_correlation(ts, scheme, g)
    return {
        "scheme": scheme.name,
        "score": compiled_score(g, corr),
        "correlation": corr.to_json(),
        "audit": eps_ns_audit(corr, eps).to_json(),
        "transcripts": len(ts),
    }
