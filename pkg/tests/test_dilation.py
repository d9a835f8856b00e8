import numpy as np
import pytest
from hypothesis import given, strategies as st

from rnchain.cpmaps import CpMap
from rnchain.dilation import Dilation, gns, intertwiner, kraus_dilation, state_map, stinespring_minimal, verify_dilation
from rnchain.errors import NotState
from rnchain.numerics import max_abs, numerical_rank

from conftest import random_cp, random_density, unit


def depolarizing():
    return CpMap.from_function(lambda a: np.trace(a) / 2 * np.eye(2), 2, 2)


@given(st.integers(1, 3), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_minimal_dilation_invariants(n, m, seed):
    t = random_cp(np.random.default_rng(seed), n, m)
    d = stinespring_minimal(t)
    res = verify_dilation(d)
    assert res["homomorphism"] < 1e-9 and res["star"] < 1e-9
    assert res["reconstruction"] < 1e-9 and res["norm"] < 1e-9
    assert res["minimality_defect"] == 0
    assert d.dil_dim == n * numerical_rank(t.choi)


@pytest.mark.parametrize("t, dim", [
    (depolarizing(), 8),
    (CpMap.identity(3), 3),
    (CpMap.from_function(lambda a: np.kron(a, np.eye(2)), 2, 4), 4),
    (CpMap.zero(2, 2), 0),
], ids=["depolarizing", "identity", "embedding", "zero"])
def test_dilation_dimensions(t, dim):
    assert stinespring_minimal(t).dil_dim == dim


def test_gns_dimensions_and_cyclic_vector():
    mixed = gns(np.eye(2) / 2)
    pure = gns(np.diag([1.0, 0.0]))
    assert (mixed.dil_dim, pure.dil_dim) == (4, 2)
    for d in (mixed, pure):
        assert abs(np.linalg.norm(d.v) - 1) < 1e-12
        assert verify_dilation(d)["minimality_defect"] == 0
    with pytest.raises(NotState):
        gns(np.eye(2))
    with pytest.raises(NotState):
        state_map(np.diag([1.0, -0.5]))


def test_gns_reproduces_expectations(rng):
    rho = random_density(rng, 3, rank=2)
    d = gns(rho)
    assert d.dil_dim == 6
    a = rng.normal(size=(3, 3))
    omega = d.v[:, 0]
    assert abs(omega.conj() @ d.pi(a) @ omega - np.trace(rho @ a)) < 1e-10


def test_basis_permutation_gives_equivalent_dilation(rng):
    t = random_cp(rng, 2, 2, r=2)
    d1 = stinespring_minimal(t)
    d2 = stinespring_minimal(t, perm=rng.permutation(8))
    w = intertwiner(d1, d2)
    assert max_abs(w.conj().T @ w - np.eye(d1.dil_dim)) < 1e-9
    assert max_abs(w @ d1.v - d2.v) < 1e-9
    for i in range(2):
        for j in range(2):
            assert max_abs(w @ d1.units[i, j] @ w.conj().T - d2.units[i, j]) < 1e-9


def test_textbook_dilation_agrees(rng):
    t = random_cp(rng, 2, 3, r=3)
    ref = kraus_dilation(t)
    assert verify_dilation(ref)["reconstruction"] < 1e-12
    mini = stinespring_minimal(t)
    w = intertwiner(mini, ref)
    # the minimal space embeds isometrically into the Kraus-form space
    assert max_abs(w.conj().T @ w - np.eye(mini.dil_dim)) < 1e-9
    for i in range(2):
        for j in range(2):
            assert max_abs(w @ mini.units[i, j] - ref.units[i, j] @ w) < 1e-9


def test_pi_is_linear_extension(rng):
    t = random_cp(rng, 3, 2)
    d = stinespring_minimal(t)
    a, b = rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
    assert max_abs(d.pi(a @ b) - d.pi(a) @ d.pi(b)) < 1e-9
    assert max_abs(d.pi(np.eye(3)) - np.eye(d.dil_dim)) < 1e-9
    assert max_abs(d.pi(unit(3, 0, 1)) - d.units[0, 1]) == 0


def test_dilation_json_roundtrip(rng):
    d = stinespring_minimal(random_cp(rng, 2, 2))
    back = Dilation.from_json(d.to_json(), d.source)
    assert np.array_equal(back.units, d.units) and np.array_equal(back.v, d.v)
    assert verify_dilation(back)["reconstruction"] < 1e-9
