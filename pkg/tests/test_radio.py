import math

import pytest
from hypothesis import given, strategies as st

from cevsim.radio import (
    BeyondCeModeA,
    Coverage,
    InvalidRepetition,
    LinkBudgetConfig,
    RadioError,
    ce_gain_db,
    coverage_state,
    evaluate_transmission,
    required_repetitions,
)

CFG = LinkBudgetConfig()


def scan_required(excess, cfg=CFG):
    """Exhaustive oracle: evaluate every set member's gain from first principles."""
    gains = {r: cfg.gain_per_doubling * math.log(r, 2) for r in cfg.repetition_set}
    for r in sorted(gains):
        if gains[r] >= max(excess, 0.0):
            return r
    return None


def test_defaults():
    assert CFG.normal_mcl == 140.7
    assert CFG.gain_per_doubling == 2.0
    assert CFG.repetition_set == (1, 2, 4, 8, 16, 32)
    assert CFG.hysteresis == 3.0


@pytest.mark.parametrize("reps, expected", [(32, 10.0), (1, 0.0), (8, 6.0)])
def test_ce_gain_examples(reps, expected):
    assert ce_gain_db(reps) == pytest.approx(expected, abs=1e-12)


def test_ce_gain_rejects_foreign_reps():
    with pytest.raises(InvalidRepetition):
        ce_gain_db(3)
    with pytest.raises(InvalidRepetition):
        ce_gain_db(64)


def test_ce_gain_monotone():
    gains = [ce_gain_db(r) for r in CFG.repetition_set]
    assert gains == sorted(gains)
    assert gains[0] == 0.0


@pytest.mark.parametrize("excess, expected", [(0.0, 1), (5.0, 8), (-3.0, 1), (10.0, 32), (9.0, 32), (8.0, 16)])
def test_required_repetitions_examples(excess, expected):
    assert scan_required(excess) == expected
    assert required_repetitions(excess) == expected


def test_required_repetitions_beyond_mode_a():
    assert scan_required(10.5) is None
    with pytest.raises(BeyondCeModeA):
        required_repetitions(10.5)


def test_required_repetitions_rejects_nan():
    with pytest.raises(RadioError):
        required_repetitions(float("nan"))


@given(st.floats(min_value=-20, max_value=20, allow_nan=False))
def test_required_repetitions_minimal(excess):
    expected = scan_required(excess)
    if expected is None:
        with pytest.raises(BeyondCeModeA):
            required_repetitions(excess)
        return
    r = required_repetitions(excess)
    assert r == expected
    assert ce_gain_db(r) >= excess
    assert all(ce_gain_db(s) < excess for s in CFG.repetition_set if s < r)


def test_evaluate_transmission_examples():
    out = evaluate_transmission(CFG.normal_mcl + 9.9, 32, 1)
    assert out.delivered and out.subframes == 32 and out.reps_used == 32
    out = evaluate_transmission(CFG.normal_mcl + 9.9, 1, 1)
    assert not out.delivered and out.subframes == 1
    out = evaluate_transmission(CFG.normal_mcl, 1, 4)
    assert out.delivered and out.subframes == 4


def test_evaluate_transmission_rejects_bad_input():
    with pytest.raises(RadioError):
        evaluate_transmission(130.0, 1, 0)
    with pytest.raises(RadioError):
        evaluate_transmission(-1.0, 1, 1)
    with pytest.raises(InvalidRepetition):
        evaluate_transmission(130.0, 5, 1)


@given(
    st.floats(min_value=0, max_value=200, allow_nan=False),
    st.sampled_from(CFG.repetition_set),
    st.integers(min_value=1, max_value=50),
)
def test_cost_linear(loss, reps, payload):
    out = evaluate_transmission(loss, reps, payload)
    assert out.subframes == reps * payload
    assert out.delivered == (loss <= CFG.normal_mcl + ce_gain_db(reps))


@given(st.floats(min_value=0.001, max_value=10.0))
def test_round_trip_delivery(excess):
    loss = CFG.normal_mcl + excess
    assert evaluate_transmission(loss, required_repetitions(loss - CFG.normal_mcl), 1).delivered


def test_coverage_state_examples():
    assert coverage_state(CFG.normal_mcl + CFG.hysteresis + 0.1, Coverage.NORMAL) is Coverage.EXTENDED
    assert coverage_state(CFG.normal_mcl, Coverage.EXTENDED) is Coverage.EXTENDED
    assert coverage_state(CFG.normal_mcl, Coverage.NORMAL) is Coverage.NORMAL
    assert coverage_state(0.0, Coverage.EXTENDED) is Coverage.NORMAL


@given(st.floats(min_value=-3.0, max_value=3.0), st.sampled_from(list(Coverage)))
def test_hysteresis_band_holds_state(offset, prev):
    assert coverage_state(CFG.normal_mcl + offset, prev) is prev


@pytest.mark.parametrize(
    "kwargs",
    [
        {"repetition_set": (2, 4)},
        {"repetition_set": (1, 4, 2)},
        {"repetition_set": (1, 2, 64)},
        {"gain_per_doubling": 0.0},
        {"hysteresis": -1.0},
    ],
)
def test_config_invariants(kwargs):
    with pytest.raises(RadioError):
        LinkBudgetConfig(**kwargs)


def test_custom_config():
    cfg = LinkBudgetConfig(normal_mcl=100.0, gain_per_doubling=3.0, repetition_set=(1, 4, 16))
    assert ce_gain_db(16, cfg) == pytest.approx(12.0)
    assert required_repetitions(5.0, cfg) == 4
