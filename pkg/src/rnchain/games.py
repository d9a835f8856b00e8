"""k-player nonlocal games, correlations and strategy evaluation.

Tables use row-major layout with all output axes first, then all input axes:
``predicate[a1, ..., ak, x1, ..., xk]`` and ``p[a1, ..., ak, x1, ..., xk]``.
``q`` has shape ``(|I_1|, ..., |I_k|)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from math import prod
from typing import Sequence

import numpy as np
from scipy.stats import unitary_group

from . import _kernels
from .errors import InvalidStrategy, NotCommuting, ShapeMismatch, TooLarge, ValidationError
from .numerics import DEFAULT_TOL, Tolerance, commutator, dag, hermitize, matrix_from_json, matrix_to_json, max_abs

CLASSICAL_CAP = 1 << 24


@dataclass(frozen=True, eq=False)
class Game:
    players: int
    inputs: tuple
    outputs: tuple
    q: np.ndarray = field(repr=False)
    predicate: np.ndarray = field(repr=False)

    def __post_init__(self):
        k = int(self.players)
        ins, outs = tuple(int(v) for v in self.inputs), tuple(int(v) for v in self.outputs)
        if k < 1 or len(ins) != k or len(outs) != k or min(ins + outs) < 1:
            raise ValidationError("players, inputs and outputs are inconsistent")
        q = np.asarray(self.q, dtype=float).reshape(ins)
        pred = np.asarray(self.predicate, dtype=float).reshape(outs + ins)
        if np.any(q < 0) or abs(q.sum() - 1) > DEFAULT_TOL.abs_eq:
            raise ValidationError("q must be a probability distribution")
        if not np.all((pred == 0) | (pred == 1)):
            raise ValidationError("predicate entries must be 0 or 1")
        object.__setattr__(self, "players", k)
        object.__setattr__(self, "inputs", ins)
        object.__setattr__(self, "outputs", outs)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "predicate", pred)

    @property
    def weights(self) -> np.ndarray:
        """``q(x) V(a|x)`` in the correlation layout."""
        return self.predicate * self.q

    def to_json(self) -> dict:
        return {
            "players": self.players,
            "inputs": list(self.inputs),
            "outputs": list(self.outputs),
            "q": [float(v) for v in self.q.reshape(-1)],
            "predicate": [int(v) for v in self.predicate.reshape(-1)],
        }

    @classmethod
    def from_json(cls, obj) -> "Game":
        try:
            ins, outs = obj["inputs"], obj["outputs"]
            q, pred = obj["q"], obj["predicate"]
            k = obj["players"]
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"game: missing field {exc}") from exc
        if len(q) != prod(ins):
            raise ShapeMismatch(f"game.q: expected {prod(ins)} entries, got {len(q)}")
        if len(pred) != prod(outs) * prod(ins):
            raise ShapeMismatch(f"game.predicate: expected {prod(outs) * prod(ins)} entries, got {len(pred)}")
        return cls(k, ins, outs, q, pred)


def load_game(path) -> Game:
    with open(path) as fh:
        return Game.from_json(json.load(fh))


def bundled(name: str) -> dict:
    """Parsed JSON of a bundled data file."""
    return json.loads(resources.files("rnchain.data").joinpath(name).read_text())


def chsh() -> Game:
    a, b, x, y = np.indices((2, 2, 2, 2))
    pred = ((a ^ b) == (x & y)).astype(float)
    return Game(2, (2, 2), (2, 2), np.full((2, 2), 0.25), pred)


def mermin_ghz() -> Game:
    a, b, c, x, y, z = np.indices((2,) * 6)
    pred = ((a ^ b ^ c) == (x | y | z)).astype(float)
    q = np.zeros((2, 2, 2))
    for t in [(0, 0, 0), (0, 1, 1), (1, 0, 1), (1, 1, 0)]:
        q[t] = 0.25
    return Game(3, (2, 2, 2), (2, 2, 2), q, pred)


@dataclass(frozen=True, eq=False)
class Correlation:
    players: int
    p: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 2 * self.players:
            raise ShapeMismatch(f"correlation for {self.players} players needs {2 * self.players} axes")
        object.__setattr__(self, "p", p)

    @property
    def outputs(self) -> tuple:
        return self.p.shape[:self.players]

    @property
    def inputs(self) -> tuple:
        return self.p.shape[self.players:]

    def validate(self, tol: Tolerance = DEFAULT_TOL) -> "Correlation":
        if self.p.min() < -tol.abs_eq or self.p.max() > 1 + tol.abs_eq:
            raise InvalidStrategy("correlation entries leave [0, 1]")
        sums = self.p.sum(axis=tuple(range(self.players)))
        if max_abs(sums - 1) > tol.abs_eq:
            raise InvalidStrategy("correlation is not normalized for every input tuple")
        return self

    def to_json(self) -> dict:
        return {"players": self.players, "outputs": list(self.outputs), "inputs": list(self.inputs),
                "p": [float(v) for v in self.p.reshape(-1)]}

    @classmethod
    def from_json(cls, obj) -> "Correlation":
        try:
            shape = tuple(obj["outputs"]) + tuple(obj["inputs"])
            return cls(int(obj["players"]), np.asarray(obj["p"], dtype=float).reshape(shape))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed correlation ({exc})") from exc


def score(g: Game, c: Correlation) -> float:
    if c.p.shape != g.predicate.shape:
        raise ShapeMismatch(f"correlation shape {c.p.shape} does not match game {g.predicate.shape}")
    return float(np.sum(g.weights * c.p))


def deterministic_correlation(g: Game, assignment: Sequence[Sequence[int]]) -> Correlation:
    """Correlation of the strategy where player ``i`` answers ``assignment[i][x_i]``."""
    p = np.zeros(g.outputs + g.inputs)
    for xs in np.ndindex(*g.inputs):
        a = tuple(assignment[i][x] for i, x in enumerate(xs))
        p[a + xs] = 1.0
    return Correlation(g.players, p)


def classical_value(g: Game, cap: int = CLASSICAL_CAP):
    """Exact classical value by exhaustive search over deterministic strategies.

    Returns ``(value, assignment)``; ties go to the lexicographically first
    assignment (player 1's answers most significant).
    """
    k = g.players
    total = prod(o ** i for o, i in zip(g.outputs, g.inputs))
    if total > cap:
        raise TooLarge(f"{total} deterministic strategies exceed the cap {cap}")
    nx = prod(g.inputs)
    weights = g.weights.reshape(prod(g.outputs), nx)
    x_players = np.array(list(np.ndindex(*g.inputs)), dtype=np.int64).reshape(nx, k)
    digit_offset = np.concatenate([[0], np.cumsum(g.inputs)])
    out_strides = np.array([prod(g.outputs[i + 1:]) for i in range(k)])
    best, idx = _kernels.classical_search(weights, x_players, digit_offset, g.outputs, out_strides, total)
    digits = []
    for i in reversed(range(k)):
        for _ in range(g.inputs[i]):
            digits.append(idx % g.outputs[i])
            idx //= g.outputs[i]
    digits = digits[::-1]
    assignment = [digits[digit_offset[i]:digit_offset[i + 1]] for i in range(k)]
    return best, [[int(v) for v in row] for row in assignment]


# -- strategies ----------------------------------------------------------------

def _check_povms(povms: Sequence[np.ndarray], dims: Sequence[int], tol: Tolerance):
    out = []
    for i, (m, d) in enumerate(zip(povms, dims)):
        m = np.asarray(m, dtype=np.complex128)
        if m.ndim != 4 or m.shape[2:] != (d, d):
            raise InvalidStrategy(f"player {i + 1}: POVM array must have shape (inputs, outputs, {d}, {d})")
        closure = max_abs(m.sum(axis=1) - np.eye(d))
        if closure > tol.abs_eq:
            raise InvalidStrategy(f"player {i + 1}: POVM elements do not sum to the identity ({closure:.3e})")
        if max_abs(m - dag(m)) > tol.abs_eq:
            raise InvalidStrategy(f"player {i + 1}: POVM elements are not Hermitian")
        if np.linalg.eigvalsh(hermitize(m)).min() < -tol.psd_floor:
            raise InvalidStrategy(f"player {i + 1}: POVM element is not PSD")
        out.append(m)
    return out


def _unit(psi, dim: int, tol: Tolerance) -> np.ndarray:
    psi = np.asarray(psi, dtype=np.complex128).reshape(-1)
    if psi.size != dim:
        raise InvalidStrategy(f"state has {psi.size} entries, expected {dim}")
    if abs(np.linalg.norm(psi) - 1) > tol.abs_eq:
        raise InvalidStrategy("state vector is not normalized")
    return psi


def _povms_json(povms) -> list:
    return [[[matrix_to_json(m[x, a]) for a in range(m.shape[1])] for x in range(m.shape[0])] for m in povms]


def _povms_from_json(obj) -> list:
    return [np.array([[matrix_from_json(e) for e in row] for row in player]) for player in obj]


def _vec_json(v) -> dict:
    return matrix_to_json(np.asarray(v).reshape(-1, 1))


@dataclass(frozen=True, eq=False)
class TensorStrategy:
    """``povms[i]`` has shape ``(|I_i|, |O_i|, d_i, d_i)``; ``psi`` lives on the tensor product."""

    dims: tuple
    povms: list = field(repr=False)
    psi: np.ndarray = field(repr=False)
    tol: Tolerance = field(default=DEFAULT_TOL, repr=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "povms", _check_povms(self.povms, dims, self.tol))
        object.__setattr__(self, "psi", _unit(self.psi, prod(dims), self.tol))

    def to_json(self) -> dict:
        return {"dims": list(self.dims), "povms": _povms_json(self.povms), "psi": _vec_json(self.psi)}

    @classmethod
    def from_json(cls, obj) -> "TensorStrategy":
        return cls(obj["dims"], _povms_from_json(obj["povms"]), matrix_from_json(obj["psi"]))


def _tensor_table(povms, rho_t, k: int, skip: int | None = None) -> np.ndarray:
    """Contract ``rho`` (axes rows 0..k-1, cols k..2k-1) with every player's POVM.

    With ``skip`` set, that player's slot stays open and the result has axes
    ``(a..., x..., row_skip, col_skip)`` with the skipped player's a/x absent.
    """
    operands = [rho_t, list(range(2 * k))]
    a_ids = [2 * k + i for i in range(k)]
    x_ids = [3 * k + i for i in range(k)]
    for i, m in enumerate(povms):
        if i == skip:
            continue
        # M[j, l] pairs with rho[l, j]
        operands += [m, [x_ids[i], a_ids[i], k + i, i]]
    out = [a for i, a in enumerate(a_ids) if i != skip] + [x for i, x in enumerate(x_ids) if i != skip]
    if skip is not None:
        out += [skip, k + skip]
    return np.einsum(*operands, out, optimize=True)


def eval_tensor(s: TensorStrategy) -> Correlation:
    k = len(s.dims)
    rho = np.outer(s.psi, s.psi.conj()).reshape(s.dims + s.dims)
    p = _tensor_table(s.povms, rho, k).real
    return Correlation(k, _normalize(p, k))


def _normalize(p: np.ndarray, k: int) -> np.ndarray:
    sums = p.sum(axis=tuple(range(k)), keepdims=True)
    return p / np.where(sums > 0, sums, 1.0)


@dataclass(frozen=True, eq=False)
class CommutingStrategy:
    """Every player's POVMs act on one space of dimension ``dim``."""

    dim: int
    povms: list = field(repr=False)
    psi: np.ndarray = field(repr=False)
    tol: Tolerance = field(default=DEFAULT_TOL, repr=False)

    def __post_init__(self):
        d = int(self.dim)
        object.__setattr__(self, "dim", d)
        object.__setattr__(self, "povms", _check_povms(self.povms, [d] * len(self.povms), self.tol))
        object.__setattr__(self, "psi", _unit(self.psi, d, self.tol))

    def commutator_defect(self) -> float:
        worst = 0.0
        for i in range(len(self.povms)):
            for j in range(i + 1, len(self.povms)):
                for a in self.povms[i].reshape(-1, self.dim, self.dim):
                    for b in self.povms[j].reshape(-1, self.dim, self.dim):
                        worst = max(worst, max_abs(commutator(a, b)))
        return worst

    def to_json(self) -> dict:
        return {"dim": self.dim, "povms": _povms_json(self.povms), "psi": _vec_json(self.psi)}

    @classmethod
    def from_json(cls, obj) -> "CommutingStrategy":
        return cls(obj["dim"], _povms_from_json(obj["povms"]), matrix_from_json(obj["psi"]))


def eval_commuting(s: CommutingStrategy, order: Sequence[int] | None = None,
                   commute_tol: float | None = None) -> Correlation:
    """``p(a|x) = <psi| M^(1) ... M^(k) |psi>`` with the product taken in ``order``."""
    k = len(s.povms)
    thresh = 100 * s.tol.abs_eq if commute_tol is None else commute_tol
    defect = s.commutator_defect()
    if defect > thresh:
        raise NotCommuting(f"operators of different players fail to commute ({defect:.3e})")
    order = list(range(k)) if order is None else list(order)
    # build M_{order[0]} ... M_{order[-1]} psi, rightmost first; axes stay (x_i, a_i) pairs
    vec = s.psi
    axes = []
    for i in reversed(order):
        vec = np.einsum("xaij,...j->xa...i", s.povms[i], vec)
        axes = [("x", i), ("a", i)] + axes
    amp = np.einsum("i,...i->...", s.psi.conj(), vec).real
    perm = [axes.index(("a", i)) for i in range(k)] + [axes.index(("x", i)) for i in range(k)]
    return Correlation(k, _normalize(np.transpose(amp, perm), k))


# -- seesaw --------------------------------------------------------------------

def random_povm(rng: np.random.Generator, n_in: int, n_out: int, d: int) -> np.ndarray:
    """Haar-random POVMs: ``M_a = W_a* W_a`` for the blocks of a Haar isometry."""
    out = np.empty((n_in, n_out, d, d), dtype=np.complex128)
    for x in range(n_in):
        if n_out * d == 1:
            w = np.ones((1, 1), dtype=np.complex128)
        else:
            w = unitary_group.rvs(n_out * d, random_state=rng)[:, :d]
        blocks = w.reshape(n_out, d, d)
        out[x] = np.einsum("aji,ajk->aik", blocks.conj(), blocks)
    return out


def _pos_projector(h: np.ndarray) -> np.ndarray:
    w, u = np.linalg.eigh(hermitize(h))
    keep = u[:, w > 0]
    return keep @ dag(keep)


def _improve_povm(m: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Raise ``sum_a tr(M_a B_a)`` for one input; never lowers it.

    Two outcomes: the exact optimum, the projector onto the positive part of
    ``B_0 - B_1``.  More outcomes: optimal re-split of each pair ``M_a + M_b``.
    """
    n_out = m.shape[0]
    if n_out == 1:
        return m
    if n_out == 2:
        p = _pos_projector(b[0] - b[1])
        return np.stack([p, np.eye(p.shape[0]) - p])
    m = m.copy()
    for a in range(n_out):
        for c in range(a + 1, n_out):
            s = hermitize(m[a] + m[c])
            w, u = np.linalg.eigh(s)
            root = (u * np.sqrt(np.clip(w, 0, None))) @ dag(u)
            x = _pos_projector(root @ (b[a] - b[c]) @ root)
            m[a] = root @ x @ root
            m[c] = s - m[a]
    return m


def _game_operator(g: Game, povms) -> np.ndarray:
    k = g.players
    operands = [g.weights, [2 * k + i for i in range(k)] + [3 * k + i for i in range(k)]]
    for i, m in enumerate(povms):
        operands += [m, [3 * k + i, 2 * k + i, i, k + i]]
    dims = [m.shape[2] for m in povms]
    op = np.einsum(*operands, list(range(2 * k)), optimize=True)
    return hermitize(op.reshape(prod(dims), prod(dims)))


def _seesaw_run(g: Game, dims, rng, max_sweeps: int, gain_tol: float):
    k = g.players
    povms = [random_povm(rng, g.inputs[i], g.outputs[i], dims[i]) for i in range(k)]
    psi = np.linalg.eigh(_game_operator(g, povms))[1][:, -1]
    value = float(np.real(psi.conj() @ _game_operator(g, povms) @ psi))
    for _ in range(max_sweeps):
        prev = value
        rho = np.outer(psi, psi.conj()).reshape(tuple(dims) * 2)
        for i in range(k):
            eff = _tensor_table(povms, rho, k, skip=i)
            # eff axes: (a_-i, x_-i, row_i, col_i); contract with weights
            w = np.moveaxis(g.weights, [i, k + i], [0, 1])  # (a_i, x_i, a_-i..., x_-i...)
            b = np.tensordot(w, eff, axes=(list(range(2, 2 * k)), list(range(2 * k - 2))))
            # b[a_i, x_i, row, col] = B_{a|x}[row, col] with tr(M B) = sum M[j,l] B[l,j]
            b = np.swapaxes(b, 0, 1)
            new = np.array([_improve_povm(povms[i][x], b[x]) for x in range(g.inputs[i])])
            povms[i] = 0.5 * (new + dag(new))
        op = _game_operator(g, povms)
        w, u = np.linalg.eigh(op)
        psi = u[:, -1]
        value = float(w[-1])
        if value - prev < gain_tol:
            break
    return value, povms, psi


def seesaw_quantum_value(g: Game, dims: Sequence[int], restarts: int = 10, rng_seed: int = 0,
                         max_sweeps: int = 500, gain_tol: float = 1e-10):
    """Lower bound on the tensor-product quantum value by alternating optimisation.

    Each restart draws its own stream from ``SeedSequence(rng_seed)``; the
    player updates and the state update each never decrease the score.
    """
    dims = tuple(int(d) for d in dims)
    if len(dims) != g.players or min(dims) < 1:
        raise ValidationError("need one positive local dimension per player")
    best = None
    for child in np.random.SeedSequence(rng_seed).spawn(max(1, int(restarts))):
        run = _seesaw_run(g, dims, np.random.default_rng(child), max_sweeps, gain_tol)
        if best is None or run[0] > best[0]:
            best = run
    value, povms, psi = best
    strat = TensorStrategy(dims, povms, psi)
    return min(score(g, eval_tensor(strat)), 1.0), strat


# -- no-signalling -----------------------------------------------------------

@dataclass(frozen=True)
class NsReport:
    defects: tuple
    eps: float

    @property
    def passed(self) -> bool:
        return all(d <= self.eps for d in self.defects)

    def to_json(self) -> dict:
        return {"defects": list(self.defects), "eps": self.eps, "passed": self.passed}


def marginal_defect(c: Correlation, i: int) -> float:
    """How much player ``i``'s input moves the joint marginal of the others."""
    k = c.players
    marg = c.p.sum(axis=i)  # drops a_i; x_i now sits at axis k - 1 + i
    xi = k - 1 + i
    ref = np.take(marg, [0], axis=xi)
    return max_abs(marg - ref) if marg.shape[xi] > 1 else 0.0


def ns_check(c: Correlation, eps: float = 1e-9) -> NsReport:
    return NsReport(tuple(float(marginal_defect(c, i)) for i in range(c.players)), float(eps))


# -- explicit optimal strategies ---------------------------------------------

def chsh_optimal_strategy() -> TensorStrategy:
    """Bell pair; Alice measures Z / X, Bob measures (Z +- X)/sqrt 2."""
    z = np.diag([1.0, -1.0])
    xm = np.array([[0.0, 1.0], [1.0, 0.0]])

    def proj(obs):
        return np.stack([(np.eye(2) + obs) / 2, (np.eye(2) - obs) / 2])

    alice = np.stack([proj(z), proj(xm)])
    bob = np.stack([proj((z + xm) / np.sqrt(2)), proj((z - xm) / np.sqrt(2))])
    psi = np.array([1, 0, 0, 1]) / np.sqrt(2)
    return TensorStrategy((2, 2), [alice, bob], psi)


def ghz_mermin_strategy() -> TensorStrategy:
    """GHZ state; input 0 measures X, input 1 measures Y."""
    xm = np.array([[0, 1], [1, 0]], dtype=complex)
    ym = np.array([[0, -1j], [1j, 0]])

    def proj(obs):
        return np.stack([(np.eye(2) + obs) / 2, (np.eye(2) - obs) / 2])

    local = np.stack([proj(xm), proj(ym)])
    psi = np.zeros(8)
    psi[0] = psi[7] = 1 / np.sqrt(2)
    return TensorStrategy((2, 2, 2), [local] * 3, psi)
