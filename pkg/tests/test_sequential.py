import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rnchain.cpmaps import CpMap, Instrument
from rnchain.errors import DimensionMismatch, InvalidStrategy, NotOns
from rnchain.games import chsh, eval_commuting, eval_tensor, chsh_optimal_strategy, mermin_ghz, score
from rnchain.numerics import max_abs
from rnchain.radon_nikodym import chain_residuals
from rnchain.sequential import (
    SequentialStrategy, chsh_steering_strategy, convert, eval_sequential, mermin_sequential_strategy,
    ons_check, random_ons_strategy, signalling_strategy, to_commuting, uniform_strategy,
)

TSIRELSON = 0.8535533905932737


def test_two_player_born_rule():
    psi = np.array([np.cos(0.3), np.sin(0.3)])
    sig = np.outer(psi, psi)
    s = SequentialStrategy(2, {0: {0: sig, 1: np.zeros((2, 2))}}, [],
                           {0: {0: np.diag([1.0, 0.0]), 1: np.diag([0.0, 1.0])}})
    p = eval_sequential(s).p
    assert abs(p[0, 0, 0, 0] - np.cos(0.3) ** 2) < 1e-12
    assert abs(p[0, 1, 0, 0] - np.sin(0.3) ** 2) < 1e-12


def test_identity_instrument_inserts_deterministic_outcome():
    base = chsh_steering_strategy()
    ident = {0: Instrument({0: CpMap.identity(2)})}
    s3 = SequentialStrategy(2, base.assemblage, [ident], base.final_povm)
    p2, p3 = eval_sequential(base).p, eval_sequential(s3).p
    assert max_abs(p3[:, 0, :, :, 0, :] - p2) < 1e-12


def test_steering_chsh_matches_tensor_form():
    s = chsh_steering_strategy()
    assert abs(score(chsh(), eval_sequential(s)) - TSIRELSON) < 1e-12
    assert max_abs(eval_sequential(s).p - eval_tensor(chsh_optimal_strategy()).p) < 1e-12
    rep = ons_check(s)
    assert rep.state_defect <= 1e-12 and rep.passed


def test_ons_check_defects():
    assert ons_check(uniform_strategy()).state_defect == 0.0
    assert ons_check(uniform_strategy()).instrument_defects == (0.0,)
    rep = ons_check(signalling_strategy(), eps=1e-9)
    assert rep.state_defect == 1.0 and not rep.passed


def test_signalling_instrument_detected():
    s = uniform_strategy()
    z = {b: CpMap(2, 2, np.diag(np.eye(2)[b])[None]) for b in range(2)}
    reset = {b: CpMap(2, 2, (np.eye(2)[:, [0]] @ np.eye(2)[[b]])[None]) for b in range(2)}
    insts = [{0: Instrument(z), 1: Instrument(reset)}]
    bad = SequentialStrategy(2, s.assemblage, insts, s.final_povm)
    assert ons_check(bad).instrument_defects[0] > 0.5
    with pytest.raises(NotOns) as err:
        to_commuting(bad)
    assert err.value.report.instrument_defects[0] > 0.5


def test_validation_errors():
    s = chsh_steering_strategy()
    with pytest.raises(InvalidStrategy):
        SequentialStrategy(2, {0: {0: np.eye(2)}}, [], s.final_povm)
    with pytest.raises(DimensionMismatch):
        SequentialStrategy(2, s.assemblage, [], {0: {0: np.eye(3)}})
    with pytest.raises(InvalidStrategy):
        SequentialStrategy(2, s.assemblage, [], {0: {0: np.eye(2) / 2}})


def test_json_roundtrip():
    s = mermin_sequential_strategy()
    back = SequentialStrategy.from_json(s.to_json())
    assert max_abs(eval_sequential(back).p - eval_sequential(s).p) == 0


def test_two_player_conversion_is_steering_realization():
    s = chsh_steering_strategy()
    conv = convert(s)
    assert abs(np.linalg.norm(conv.strategy.psi) - 1) < 1e-12
    assert max_abs(eval_commuting(conv.strategy).p - eval_sequential(s).p) < 1e-9


def test_uniform_three_player_conversion():
    conv = convert(uniform_strategy())
    res = chain_residuals(conv.representation, conv.stages)
    assert res["cross_commutator"] == 0.0
    assert np.allclose(eval_commuting(conv.strategy).p, 1 / 8)
    for fam in conv.representation.families:
        for arms in fam.values():
            for op in arms.values():
                assert max_abs(op - np.eye(conv.strategy.dim) / 2) < 1e-12


def test_mermin_conversion_keeps_perfect_score():
    s = mermin_sequential_strategy()
    cs = to_commuting(s)
    assert abs(score(mermin_ghz(), eval_commuting(cs)) - 1.0) < 1e-9


@settings(max_examples=15)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 3, 4]))
def test_round_trip_fidelity(seed, k):
    s = random_ons_strategy(seed, players=k)
    conv = convert(s)
    assert max_abs(eval_commuting(conv.strategy).p - eval_sequential(s).p) <= 1e-7
    res = chain_residuals(conv.representation, conv.stages)
    assert res["cross_commutator"] <= 1e-8 and res["rep_commutator"] <= 1e-8
    assert res["povm_closure"] <= 1e-9 and res["reconstruction"] <= 1e-8
    assert conv.strategy.commutator_defect() <= 1e-8


def test_dimension_changing_instrument():
    # player 2 measures its qubit and discards it: arms map M_4 -> M_2
    s = mermin_sequential_strategy()
    stage = {}
    for y in range(2):
        arms = {}
        for b in range(2):
            arms[b] = CpMap.from_kraus([np.kron(np.eye(2)[[j]] @ _local(y, b), np.eye(2)) for j in range(2)])
        stage[y] = Instrument(arms)
    final = {z: {c: _local(z, c) for c in range(2)} for z in range(2)}
    small = SequentialStrategy(4, s.assemblage, [stage], final)
    assert small.final_dim == 2
    assert max_abs(eval_sequential(small).p - eval_sequential(s).p) < 1e-12
    cs = to_commuting(small)
    assert max_abs(eval_commuting(cs).p - eval_sequential(small).p) < 1e-9


def _local(z, c):
    obs = np.array([[0, 1], [1, 0]], dtype=complex) if z == 0 else np.array([[0, -1j], [1j, 0]])
    return (np.eye(2) + (-1) ** c * obs) / 2


def test_generalized_mode_checks_representatives():
    s = random_ons_strategy(3, players=3)
    conv = convert(s, generalized=True)
    assert max_abs(eval_commuting(conv.strategy).p - eval_sequential(s).p) < 1e-7
    with pytest.raises(NotOns):
        convert(signalling_strategy(), generalized=True)
