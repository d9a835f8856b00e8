import numpy as np
import pytest
from hypothesis import given, strategies as st

from rnchain.cpmaps import (
    CpMap, Instrument, adjoint, apply, choi_distance, compose, domination_gap, dominates,
    egervary_unitary_dilation, instrument_from_circuit, sum_maps, with_fresh_ancilla,
    wittstock_decompose, wittstock_reconstruct,
)
from rnchain.errors import DimensionMismatch, NotContraction, NotCP, NotUnitary, ValidationError
from rnchain.numerics import is_unitary, max_abs

from conftest import random_cp, random_matrix, unit

seeds = st.integers(0, 2**32 - 1)
dims = st.integers(1, 3)


def depolarizing():
    return CpMap.from_function(lambda a: np.trace(a) / 2 * np.eye(2), 2, 2)


def test_choi_of_identity_is_unnormalized_bell_projector():
    expected = np.array([[1, 0, 0, 1], [0, 0, 0, 0], [0, 0, 0, 0], [1, 0, 0, 1]])
    assert np.array_equal(CpMap.identity(2).choi, expected)


def test_choi_blocks_are_images_of_matrix_units(rng):
    t = random_cp(rng, 3, 2)
    for i in range(3):
        for j in range(3):
            assert max_abs(t.choi[2 * i:2 * i + 2, 2 * j:2 * j + 2] - t(unit(3, i, j))) < 1e-12


def test_transpose_is_not_cp():
    with pytest.raises(NotCP):
        CpMap.from_function(lambda a: a.T, 2, 2)


def test_from_choi_roundtrip_and_compression(rng):
    t = random_cp(rng, 2, 3, r=6)
    back = CpMap.from_choi(t.choi, 2, 3)
    assert choi_distance(t, back) < 1e-12
    assert back.rank == 6
    low = CpMap(2, 2, np.stack([np.eye(2), np.eye(2)]))
    assert low.compressed().rank == 1


@given(dims, dims, seeds)
def test_adjoint_duality(n, m, seed):
    rng = np.random.default_rng(seed)
    t = random_cp(rng, n, m)
    rho, x = random_matrix(rng, n), random_matrix(rng, m)
    assert abs(np.trace(adjoint(t)(x) @ rho) - np.trace(x @ t(rho))) < 1e-10


@given(dims, dims, dims, seeds)
def test_compose_is_sequential_application(n, m, p, seed):
    rng = np.random.default_rng(seed)
    s2, s1 = random_cp(rng, n, m), random_cp(rng, m, p)
    a = random_matrix(rng, n)
    assert max_abs(compose(s1, s2)(a) - s1(s2(a))) < 1e-10
    with pytest.raises(DimensionMismatch):
        compose(s1, random_cp(rng, n, m + 1))


@given(dims, dims, seeds, st.floats(0, 1))
def test_scaled_maps_are_dominated(n, m, seed, t):
    r = random_cp(np.random.default_rng(seed), n, m)
    assert dominates(r, r.scaled(t))
    assert dominates(r + r, r)


def test_identity_not_dominated_by_depolarizing():
    # Choi(dep) = I/2 while Choi(id) has eigenvalue 2: gap = 1/2 - 2
    assert abs(domination_gap(depolarizing(), CpMap.identity(2)) - (-1.5)) < 1e-12
    assert not dominates(depolarizing(), CpMap.identity(2))
    with pytest.raises(NotCP):
        CpMap.identity(2).scaled(-1)


def test_sum_and_unitary_maps(rng):
    u = np.linalg.qr(random_matrix(rng, 3))[0]
    t = CpMap.unitary(u)
    a = random_matrix(rng, 3)
    assert max_abs(t(a) - u @ a @ u.conj().T) < 1e-12
    assert max_abs(sum_maps([t, t])(a) - 2 * t(a)) < 1e-12
    with pytest.raises(ValidationError):
        sum_maps([])


def test_cpmap_json_roundtrip(rng):
    t = random_cp(rng, 2, 3)
    back = CpMap.from_json(t.to_json())
    assert np.array_equal(back.kraus, t.kraus)
    with pytest.raises(ValidationError):
        CpMap.from_json({"in_dim": 2})


@given(st.integers(1, 4), seeds)
def test_wittstock_polarization(n, seed):
    rng = np.random.default_rng(seed)
    l, r, b = random_matrix(rng, n), random_matrix(rng, n), random_matrix(rng, n)
    vs = wittstock_decompose(l, r)
    assert max_abs(wittstock_reconstruct(vs, b) - l.conj().T @ b @ r) < 1e-12


def test_egervary_fixed_points():
    z = np.zeros((2, 2))
    w0 = egervary_unitary_dilation(z)
    assert np.allclose(w0, np.block([[z, np.eye(2)], [np.eye(2), z]]))
    w1 = egervary_unitary_dilation(np.eye(2))
    assert np.allclose(w1, np.diag([1, 1, -1, -1]))
    with pytest.raises(NotContraction):
        egervary_unitary_dilation(2 * np.eye(2))


@given(st.integers(1, 4), seeds)
def test_egervary_is_unitary_with_exact_corner(n, seed):
    rng = np.random.default_rng(seed)
    d = random_matrix(rng, n)
    d = d / (np.linalg.norm(d, 2) * (1 + rng.random()))
    w = egervary_unitary_dilation(d)
    assert max_abs(w.conj().T @ w - np.eye(2 * n)) < 1e-12
    assert np.array_equal(w[:n, :n], d.astype(complex))


def _cnot_anc_target():
    # ancilla first; flips the ancilla when the system is |1>
    u = np.zeros((4, 4))
    for s in range(2):
        for a in range(2):
            u[(a ^ s) * 2 + s, a * 2 + s] = 1
    return u


def test_instrument_from_circuit_is_luders_measurement(rng):
    inst = with_fresh_ancilla(instrument_from_circuit(_cnot_anc_target(), 2, {}), 2)
    rho = rng.normal(size=(2, 2))
    for a in range(2):
        p = np.diag(np.eye(2)[a])
        assert max_abs(inst[a](rho) - p @ rho @ p) < 1e-12
    assert inst.tp_defect() < 1e-12


def test_circuit_arm_adjoints_are_multiplicative(rng):
    u = np.linalg.qr(random_matrix(rng, 4))[0]
    inst = instrument_from_circuit(u, 2, {1: np.array([[0, 1], [1, 0]])})
    for arm in inst.arms.values():
        dual = adjoint(arm)
        x, y = random_matrix(rng, 2), random_matrix(rng, 2)
        assert max_abs(dual(x @ y) - dual(x) @ dual(y)) < 1e-10
    with pytest.raises(NotUnitary):
        instrument_from_circuit(np.eye(4) * 2, 2, {})


def test_instrument_validation():
    half = CpMap.identity(2).scaled(0.5)
    inst = Instrument({1: half, 0: half})
    assert inst.labels == [0, 1]
    assert max_abs(inst.total().choi - CpMap.identity(2).choi) < 1e-12
    with pytest.raises(ValidationError):
        Instrument({0: half})
    with pytest.raises(ValidationError):
        Instrument({})
