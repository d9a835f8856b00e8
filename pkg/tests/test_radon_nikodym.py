import numpy as np
import pytest
from hypothesis import given, strategies as st

from rnchain.cpmaps import CpMap, Instrument, adjoint, apply
from rnchain.dilation import intertwiner, kraus_dilation, state_map, stinespring_minimal
from rnchain.errors import NotDominated, NotInCommutant, RangeViolation, SumMismatch
from rnchain.numerics import Tolerance, dag, hermitize, max_abs, op_norm
from rnchain.radon_nikodym import (
    CommutingRepresentation, Stage, chain2, chain_k, chain_residuals, lift, pushforward, rn_decomposition,
    rn_derivative,
)

from conftest import random_cp, random_matrix, unit

seeds = st.integers(0, 2**32 - 1)


def depolarizing():
    return CpMap.from_function(lambda a: np.trace(a) / 2 * np.eye(2), 2, 2)


def commutant_projector(dil, rng):
    """Random projector in the commutant, transported from the textbook dilation
    where the commutant is ``1 (x) M_r``."""
    ref = kraus_dilation(dil.source.compressed())
    w = intertwiner(dil, ref)
    r = ref.dil_dim // dil.n
    g = random_matrix(rng, r, int(rng.integers(0, r + 1)))
    q = g @ np.linalg.pinv(g) if g.size else np.zeros((r, r))
    return dag(w) @ np.kron(np.eye(dil.n), q) @ w


def compressed_map(dil, op):
    return CpMap.from_function(lambda a: dag(dil.v) @ op @ dil.pi(a) @ dil.v, dil.n, dil.v.shape[1])


def hidden_commutant_case(rng, n=2, m1=2, k=2):
    """T(a) = U (phi(a) (x) 1_k) U*, whose commutant contains U (1 (x) M_k) U*."""
    phi = random_cp(rng, n, m1)
    u = np.linalg.qr(random_matrix(rng, m1 * k))[0]
    t = CpMap.from_function(lambda a: u @ np.kron(phi(a), np.eye(k)) @ dag(u), n, m1 * k)

    def element(y):
        return u @ np.kron(np.eye(m1), y) @ dag(u)

    return t, element


@pytest.mark.parametrize("t", [0.0, 0.3, 1.0])
def test_scalar_derivatives(rng, t):
    r = random_cp(rng, 2, 3)
    dil = stinespring_minimal(r)
    d = rn_derivative(r.scaled(t), dil).d
    assert max_abs(d - t * np.eye(dil.dil_dim)) < 1e-9


@given(st.integers(1, 3), st.integers(1, 3), seeds)
def test_construct_then_recover(n, m, seed):
    rng = np.random.default_rng(seed)
    dil = stinespring_minimal(random_cp(rng, n, m))
    p = commutant_projector(dil, rng)
    d = rn_derivative(compressed_map(dil, p), dil).d
    assert max_abs(d - p) < 1e-7
    w = np.linalg.eigvalsh(d)
    assert w[0] >= -1e-12 and w[-1] <= 1 + 1e-12
    for i in range(n):
        for j in range(n):
            assert max_abs(d @ dil.units[i, j] - dil.units[i, j] @ d) < 1e-8


def test_derivative_reconstructs_part_and_is_unique(rng):
    r = random_cp(rng, 2, 2, r=3)
    s = CpMap(2, 2, r.kraus[:2])
    dil = stinespring_minimal(r)
    d1, d2 = rn_derivative(s, dil).d, rn_derivative(s, dil).d
    assert max_abs(d1 - d2) <= 1e-8
    for i in range(2):
        for j in range(2):
            assert max_abs(dag(dil.v) @ d1 @ dil.units[i, j] @ dil.v - s(unit(2, i, j))) < 1e-9


def test_not_dominated_and_range_violation():
    dil = stinespring_minimal(depolarizing())
    with pytest.raises(NotDominated):
        rn_derivative(CpMap.identity(2), dil)
    # loose floor lets the domination test pass while D = 1.01 escapes [0, 1 + floor]
    loose = Tolerance(abs_eq=1e-3, psd_floor=1e-3)
    r = CpMap.identity(2).scaled(0.01)
    with pytest.raises(RangeViolation):
        rn_derivative(r.scaled(1.01), stinespring_minimal(r, loose), loose)


def test_decomposition_convex_split(rng):
    r = random_cp(rng, 2, 2)
    dil = stinespring_minimal(r)
    ds = rn_decomposition([r.scaled(0.25), r.scaled(0.75)], dil)
    assert max_abs(ds[0].d - 0.25 * np.eye(dil.dil_dim)) < 1e-9
    assert max_abs(ds[1].d - 0.75 * np.eye(dil.dil_dim)) < 1e-9
    (single,) = rn_decomposition([r], dil)
    assert max_abs(single.d - np.eye(dil.dil_dim)) < 1e-9
    with pytest.raises(SumMismatch):
        rn_decomposition([r.scaled(0.5)], dil)


def test_decomposition_of_random_instrument(rng):
    from rnchain.compiled import random_instrument

    inst = random_instrument(rng, 2, 2, 2)
    dil = stinespring_minimal(inst.total())
    ds = rn_decomposition(list(inst.arms.values()), dil)
    assert max_abs(sum(d.d for d in ds) - np.eye(dil.dil_dim)) < 1e-9
    for d, arm in zip(ds, inst.arms.values()):
        for i in range(2):
            for j in range(2):
                assert max_abs(dag(dil.v) @ d.d @ dil.units[i, j] @ dil.v - arm(unit(2, i, j))) < 1e-8


def test_lift_scalars_and_identity(rng):
    dil = stinespring_minimal(random_cp(rng, 2, 3))
    assert max_abs(lift(np.eye(3), dil) - np.eye(dil.dil_dim)) < 1e-12
    assert max_abs(lift(0.4 * np.eye(3), dil) - 0.4 * np.eye(dil.dil_dim)) < 1e-12


def test_lift_on_embedding_is_ancilla_action(rng):
    emb = CpMap.from_function(lambda a: np.kron(a, np.eye(2)), 2, 4)
    dil = stinespring_minimal(emb)
    assert dil.dil_dim == 4
    x = random_matrix(rng, 2)
    m = np.kron(np.eye(2), x)
    # V is unitary here, so the canonical coordinates are V-conjugated
    assert max_abs(lift(m, dil) - dil.v @ m @ dag(dil.v)) < 1e-9


def test_lift_rejects_non_commutant(rng):
    dil = stinespring_minimal(random_cp(rng, 2, 2))
    with pytest.raises(NotInCommutant):
        lift(np.diag([1.0, 0.0]), dil)


@given(seeds)
def test_lift_properties(seed):
    rng = np.random.default_rng(seed)
    t, element = hidden_commutant_case(rng)
    dil = stinespring_minimal(t)
    y1, y2 = random_matrix(rng, 2), random_matrix(rng, 2)
    m1, m2 = element(y1), element(y2)
    l1, l2 = lift(m1, dil), lift(m2, dil)
    assert max_abs(dil.v @ m1 - l1 @ dil.v) < 1e-9
    assert abs(op_norm(l1) - op_norm(m1)) < 1e-8
    assert max_abs(lift(m1 @ m2, dil) - l1 @ l2) < 1e-8
    assert max_abs(lift(dag(m1), dil) - dag(l1)) < 1e-8
    for i in range(2):
        for j in range(2):
            assert max_abs(l1 @ dil.units[i, j] - dil.units[i, j] @ l1) < 1e-8
    pos = element(y1 @ dag(y1))
    assert np.linalg.eigvalsh(hermitize(lift(pos, dil)))[0] > -1e-9
    neg = element(np.diag([1.0, -1.0]))
    assert np.linalg.eigvalsh(hermitize(lift(neg, dil)))[0] < -0.5


def test_lifted_povm_closes(rng):
    t, element = hidden_commutant_case(rng)
    dil = stinespring_minimal(t)
    w, u = np.linalg.eigh(hermitize(random_matrix(rng, 2)))
    e0 = u @ np.diag([0.3, 0.9]) @ dag(u)
    lifted = [lift(element(e0), dil), lift(element(np.eye(2) - e0), dil)]
    assert max_abs(sum(lifted) - np.eye(dil.dil_dim)) < 1e-9


def _uniform_stage(n=2, outcomes=2):
    part = CpMap.identity(n).scaled(1 / outcomes)
    return Stage({0: {a: part for a in range(outcomes)}}, CpMap.identity(n))


def test_uniform_chain2():
    rep = chain2(_uniform_stage(), _uniform_stage())
    for fam in rep.families:
        for op in fam[0].values():
            assert max_abs(op - np.eye(rep.dim_k) / 2) < 1e-12
    f = rep.families[0][0][0] @ rep.families[1][0][1]
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert max_abs(dag(rep.v) @ f @ rep.pi(a) @ rep.v - a / 4) < 1e-12


def test_uniform_chain3_commutes_exactly():
    stages = [_uniform_stage(outcomes=3)] * 3
    rep = chain_k(stages)
    res = chain_residuals(rep, stages)
    assert res["cross_commutator"] == 0.0 and res["rep_commutator"] == 0.0
    assert res["reconstruction"] < 1e-12


def test_functional_first_stage_gives_unit_vector(rng):
    from conftest import random_density

    rho = random_density(rng, 2)
    half = state_map(rho / 2)
    stage1 = Stage({0: {0: half, 1: half}}, state_map(rho))
    rep = chain2(stage1, _uniform_stage())
    assert rep.v.shape[1] == 1
    assert abs(np.linalg.norm(rep.v) - 1) < 1e-12
    assert rep.dim_k == rep.dilations[-1].dil_dim


def test_chain_k_with_two_stages_matches_chain2(rng):
    r = random_cp(rng, 2, 2)
    s1 = Stage({0: {0: r.scaled(0.3), 1: r.scaled(0.7)}}, r)
    ch = adjoint(random_cp(rng, 2, 2))
    s2 = Stage({0: {0: ch.scaled(0.5), 1: ch.scaled(0.5)}}, ch)
    a, b = chain2(s1, s2), chain_k([s1, s2])
    assert chain_residuals(a, [s1, s2]) == chain_residuals(b, [s1, s2])


def test_random_instrument_chain_reconstructs(rng):
    from rnchain.compiled import random_instrument

    i1, i2 = random_instrument(rng, 2, 2, 2), random_instrument(rng, 2, 2, 3)
    stages = [Stage({0: {a: adjoint(arm) for a, arm in i.arms.items()}}, adjoint(i.total())) for i in (i1, i2)]
    rep = chain_k(stages)
    res = chain_residuals(rep, stages)
    assert res["reconstruction"] < 1e-8
    assert res["cross_commutator"] < 1e-8 and res["rep_commutator"] < 1e-8
    assert res["povm_closure"] < 1e-9
    # unital dominants: V is an isometry
    assert abs(res["v_norm_sq"] - 1) < 1e-9


def test_stage_two_domination_is_checked(rng):
    r = random_cp(rng, 2, 2)
    s1 = Stage({0: {0: r}}, r)
    bad = Stage({0: {0: CpMap.identity(2)}}, depolarizing())
    with pytest.raises(NotDominated):
        chain2(s1, bad)


def test_generalized_dominant_callable(rng):
    r = random_cp(rng, 2, 2)
    s1 = Stage({0: {0: r.scaled(0.5), 1: r.scaled(0.5)}}, r)
    dep = depolarizing()
    s2 = Stage({0: {0: dep.scaled(0.5), 1: dep.scaled(0.5)}}, lambda dil: pushforward(dil, dep))
    rep = chain2(s1, s2, generalized=True)
    assert chain_residuals(rep, [s1, s2])["reconstruction"] < 1e-9


def test_representation_json_roundtrip():
    rep = chain2(_uniform_stage(), _uniform_stage())
    back = CommutingRepresentation.from_json(rep.to_json())
    assert back.dim_k == rep.dim_k
    assert np.array_equal(back.v, rep.v)
    assert np.array_equal(back.families[1][0][1], rep.families[1][0][1])
