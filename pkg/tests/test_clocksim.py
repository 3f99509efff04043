import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import allan_streaming
from qclock.clocksim import (
    RunRecord,
    SimConfig,
    allan_curve,
    allan_variance,
    compare_protocols,
    compute_metrics,
    run_clock,
    run_protocol,
    sample_truth,
    square_freq_error,
)
from qclock.noise import NoiseModel
from qclock.timing import TimingConfig
from qclock.tracker import TrackerConfig

SMALL = dict(atoms=1, noise=NoiseModel.brownian(0.03), interrogations=12, runs=3, seed=7,
             tracker=TrackerConfig(P=15))


def test_allan_golden_values():
    assert allan_variance(np.full(10, 3.2), 1) == 0.0
    assert allan_variance([0.0, 1.0, 0.0], 1) == pytest.approx(0.5)
    # m=2 on (0,0,1,1): single pair of averages 0 and 1
    assert allan_variance([0.0, 0.0, 1.0, 1.0], 2) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        allan_variance([1.0, 2.0, 3.0], 2)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=40))
def test_allan_matches_streaming_oracle(y):
    for m in range(1, len(y) // 2 + 1):
        assert allan_variance(y, m) == pytest.approx(allan_streaming(y, m), rel=1e-12, abs=1e-12)


def test_allan_curve_length():
    assert allan_curve(np.arange(11.0)).shape == (5,)


def test_square_freq_error_formula():
    truth = np.array([1.0, 2.0, 3.0])
    est = np.array([1.5, 2.0, 2.0])
    rec = RunRecord("ramsey", 0, truth, est, est, np.zeros(3, int), truth, truth, np.ones(3), np.zeros(3),
                    np.zeros(3), np.zeros(3, bool))
    expected = [(0.5 / 1) ** 2, (0.5 / 2) ** 2, (-0.5 / 3) ** 2]
    assert np.allclose(square_freq_error(rec), expected)


def test_record_length_check():
    with pytest.raises(ValueError):
        RunRecord("ramsey", 0, np.zeros(3), np.zeros(2), np.zeros(3), np.zeros(3, int), np.zeros(3), np.zeros(3),
                  np.zeros(3), np.zeros(3), np.zeros(3), np.zeros(3, bool))


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(protocol="nope", **SMALL)
    with pytest.raises(ValueError):
        SimConfig(protocol="ramsey", **{**SMALL, "atoms": 0})
    cfg = SimConfig(protocol="ramsey", T=2.0, **SMALL)
    assert cfg.tracker.T == 2.0


@pytest.mark.parametrize("protocol", ["adaptive", "ramsey", "buzek"])
def test_run_deterministic_and_round_trips(protocol):
    cfg = SimConfig(protocol=protocol, **SMALL)
    a = run_clock(cfg, 1)
    b = run_clock(cfg, 1)
    for name in RunRecord._ARRAYS:
        x, y = getattr(a, name), getattr(b, name)
        assert (x is None and y is None) or np.array_equal(x, y)
    back = RunRecord.from_dict(json.loads(json.dumps(a.to_dict())))
    for name in RunRecord._ARRAYS:
        x, y = getattr(a, name), getattr(back, name)
        assert (x is None and y is None) or np.array_equal(x, y)
    assert np.all(a.phase_variances >= 0)


def test_truth_shared_across_protocols():
    a = sample_truth(SimConfig(protocol="adaptive", **SMALL), 2)
    b = sample_truth(SimConfig(protocol="buzek", **SMALL), 2)
    c = sample_truth(SimConfig(protocol="buzek", **SMALL), 3)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_adaptive_step_cost_is_its_delta_v():
    rec = run_clock(SimConfig(protocol="adaptive", **SMALL), 0)
    assert np.allclose(rec.expected_costs, rec.delta_v, atol=1e-9)


def test_vanishing_noise_keeps_clock_on_time():
    cfg = SimConfig(protocol="ramsey", **{**SMALL, "noise": NoiseModel.brownian(1e-12)})
    rec = run_clock(cfg, 0)
    assert np.max(np.abs(rec.true_omegas)) < 1e-4
    assert np.max(np.abs(rec.estimates)) < 1e-3
    assert not rec.phase_slips.any()


def test_self_comparison_is_zero():
    recs = run_protocol(SimConfig(protocol="ramsey", **SMALL))
    for imp in compare_protocols(recs, recs, last=5, bootstrap=20):
        assert imp.percent == pytest.approx(0.0, abs=1e-12)
        assert imp.stderr == pytest.approx(0.0, abs=1e-12)


def test_compare_pairs_by_run_index():
    cfg = SimConfig(protocol="ramsey", **SMALL)
    recs = run_protocol(cfg)
    with pytest.raises(ValueError):
        compare_protocols(recs[:1], run_protocol(cfg, [2]))
    imps = compare_protocols(recs, list(reversed(recs)), last=5, bootstrap=5)
    assert all(abs(i.percent) < 1e-12 for i in imps)


def test_metrics_shapes():
    recs = run_protocol(SimConfig(protocol="buzek", **SMALL))
    m = compute_metrics(recs)
    assert m.sq_freq_error.shape == (12,) and m.allan.shape == (6,) and m.runs == 3
    with pytest.raises(ValueError):
        compute_metrics([])


def test_timing_mode_runs_and_records_durations():
    cfg = SimConfig(protocol="ramsey", timing=TimingConfig(1e3, jitter=0.01), **SMALL)
    rec = run_clock(cfg, 0)
    assert rec.durations is not None and np.all(np.abs(rec.durations - 1.0) <= 0.03 + 1e-12)
    rep = run_clock(replace(cfg, timing=TimingConfig(1e3, jitter=0.01, reparameterize=True)), 0)
    assert np.all(np.isfinite(rep.estimates))
