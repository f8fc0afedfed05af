#!/usr/bin/env python3
"""
Tests for the phase-space primitives and the reproducible shot generator
"""

import math
import sys

import numpy as np
import pytest

from phase_space import (
    BinningScheme,
    GaussianModeState,
    SplitScenario,
    measure,
    ou_coefficient,
    quantize,
    quantize_array,
    run_shot,
    sample_thermal_displacement,
    sample_thermal_displacement_correlated,
    split_thermal,
)
from shot_generator import (
    SHOT_DUMP_DTYPE,
    SHOTS_PER_BLOCK,
    block_layout,
    draw_normals,
    dump_records,
    generate_shots,
    shot_stream,
)


def test_default_binning_covers_plus_minus_twenty():
    scheme = BinningScheme()
    assert scheme.lower_edge == -20.0
    assert scheme.upper_edge == 20.0
    assert scheme.bits == 8
    assert len(scheme.edges()) == 257
    assert len(scheme.inner_edges()) == 255


def test_quantize_edges_and_clamping():
    scheme = BinningScheme()
    assert quantize(0.0, scheme) == 128
    assert quantize(-1e-12, scheme) == 127
    assert quantize(-0.15625, scheme) == 127
    assert quantize(0.15625, scheme) == 129
    assert quantize(-20.0, scheme) == 0
    assert quantize(20.0, scheme) == 255
    assert quantize(-1e9, scheme) == 0
    assert quantize(1e9, scheme) == 255


def test_quantize_saturates_on_infinities():
    scheme = BinningScheme()
    assert quantize(math.inf, scheme) == 255
    assert quantize(-math.inf, scheme) == 0
    assert quantize_array(np.array([-math.inf, math.inf]), scheme).tolist() == [0, 255]


def test_quantize_rejects_nan():
    with pytest.raises(ValueError):
        quantize(float("nan"), BinningScheme())


def test_quantize_array_matches_scalar():
    scheme = BinningScheme()
    values = np.concatenate([np.linspace(-25, 25, 2001), scheme.edges()])
    expected = [quantize(float(v), scheme) for v in values]
    assert quantize_array(values, scheme).tolist() == expected


def test_invalid_binning_rejected():
    with pytest.raises(ValueError):
        BinningScheme(bin_width=0.0)
    with pytest.raises(ValueError):
        BinningScheme(bin_count=255)


def test_gaussian_mode_states():
    vacuum = GaussianModeState.vacuum()
    assert vacuum.photon_number == 0.0
    thermal = GaussianModeState.thermal(2.0)
    assert thermal.photon_number == pytest.approx(2.0)
    assert thermal.husimi_variance == (3.0, 3.0)
    assert thermal.quadrature_variance(0.7) == pytest.approx(2.5)
    with pytest.raises(ValueError):
        GaussianModeState(var_x=0.3)
    with pytest.raises(ValueError):
        GaussianModeState.thermal(-1.0)


def test_scenario_from_photon_numbers():
    scenario = SplitScenario.from_photon_numbers(7.09, 2.28)
    assert scenario.n_eve == pytest.approx(7.09)
    assert scenario.n_alice == pytest.approx(2.28)
    assert scenario.ratio == pytest.approx(7.09 / 2.28)
    assert scenario.r ** 2 + scenario.t ** 2 == pytest.approx(1.0)
    alice, eve = split_thermal(scenario)
    assert alice.photon_number == pytest.approx(2.28)
    assert eve.photon_number == pytest.approx(7.09)


def test_vacuum_scenario():
    scenario = SplitScenario.from_photon_numbers(0.0, 0.0)
    assert scenario.n_total == 0.0
    assert scenario.alice_variance == 0.5
    assert scenario.independent_shots


def test_invalid_scenarios_rejected():
    with pytest.raises(ValueError):
        SplitScenario(n_total=1.0, t_sq=1.5)
    with pytest.raises(ValueError):
        SplitScenario(n_total=-1.0, t_sq=0.5)
    with pytest.raises(ValueError):
        SplitScenario(n_total=1.0, t_sq=0.5, electronic_noise_factor=0.9)
    with pytest.raises(ValueError):
        SplitScenario(n_total=1.0, t_sq=0.5, shots=0)
    with pytest.raises(ValueError):
        SplitScenario(n_total=1.0, t_sq=0.5, coherence_ratio=-1.0)


def test_measure_without_noise():
    scenario = SplitScenario(n_total=10.0, t_sq=0.5)
    alice, eve_x, eve_p = measure(scenario, 2.0, -1.0, 0.0, 0.0, 0.0)
    assert alice == pytest.approx(math.sqrt(0.5) * 2.0)
    assert eve_x == pytest.approx(-math.sqrt(0.5) * 2.0)
    assert eve_p == pytest.approx(math.sqrt(0.5))

    rotated = SplitScenario(n_total=10.0, t_sq=0.5, alice_phase=math.pi / 2)
    alice, _, _ = measure(rotated, 2.0, -1.0, 0.0, 0.0, 0.0)
    assert alice == pytest.approx(-math.sqrt(0.5))


def test_thermal_displacement_statistics():
    rng = np.random.default_rng(11)
    draws = np.array([sample_thermal_displacement(3.0, rng) for _ in range(20000)])
    assert draws.mean(axis=0) == pytest.approx([0.0, 0.0], abs=0.06)
    assert draws.var(axis=0) == pytest.approx([3.0, 3.0], rel=0.05)


def test_correlated_sampler_limits():
    rng = np.random.default_rng(3)
    assert sample_thermal_displacement_correlated(4.0, 0.0, (1.5, -0.5), rng) == (1.5, -0.5)
    assert ou_coefficient(math.inf) == 0.0


def test_run_shot_is_reproducible():
    scenario = SplitScenario.from_photon_numbers(5.0, 5.0)
    first = run_shot(scenario, (0.3, -0.2), shot_stream(9, 4))
    second = run_shot(scenario, (0.3, -0.2), shot_stream(9, 4))
    assert first == second
    assert first.alice_bin == quantize(first.alice_raw, scenario.binning)


def test_block_layout():
    assert block_layout(10) == [(0, 10)]
    assert block_layout(SHOTS_PER_BLOCK + 1) == [(0, SHOTS_PER_BLOCK), (1, 1)]


def test_shot_draws_do_not_depend_on_run_length():
    short = draw_normals(5, 1000)
    long = draw_normals(5, 5000)
    np.testing.assert_array_equal(short, long[:, :1000])


def test_generation_is_identical_across_worker_counts():
    scenario = SplitScenario.from_photon_numbers(5.58, 5.12, shots=2 * SHOTS_PER_BLOCK + 17, seed=42)
    single = generate_shots(scenario, workers=1)
    pooled = generate_shots(scenario, workers=3)
    np.testing.assert_array_equal(single.alice_raw, pooled.alice_raw)
    np.testing.assert_array_equal(single.eve_x, pooled.eve_x)
    np.testing.assert_array_equal(single.alice_bin, pooled.alice_bin)


def test_shot_variances_match_the_model():
    scenario = SplitScenario.from_photon_numbers(7.09, 2.28, shots=200_000, seed=1)
    batch = generate_shots(scenario)
    assert np.var(batch.alice_raw) == pytest.approx(scenario.alice_variance, rel=0.02)
    assert np.var(batch.eve_x) == pytest.approx(scenario.eve_variance, rel=0.02)
    assert np.var(batch.eve_p) == pytest.approx(scenario.eve_variance, rel=0.02)
    # Alice and Eve share the thermal displacement with opposite signs
    covariance = np.cov(batch.alice_raw, batch.eve_x)[0, 1]
    assert covariance == pytest.approx(-scenario.r * scenario.t * scenario.n_total, rel=0.03)


def test_alice_statistics_do_not_depend_on_the_phase():
    variances = []
    for phase in (0.0, math.pi / 4, math.pi / 2):
        scenario = SplitScenario.from_photon_numbers(5.02, 6.24, shots=200_000, seed=13, alice_phase=phase)
        batch = generate_shots(scenario)
        variances.append(np.var(batch.alice_raw))
        eve_projection = batch.eve_x * math.cos(phase) + batch.eve_p * math.sin(phase)
        covariance = np.cov(batch.alice_raw, eve_projection)[0, 1]
        assert covariance == pytest.approx(-scenario.r * scenario.t * scenario.n_total, rel=0.03)
    assert variances == pytest.approx([scenario.alice_variance] * 3, rel=0.02)


def test_correlated_shots_follow_the_lag_one_coefficient():
    scenario = SplitScenario.from_photon_numbers(2.0, 2.0, shots=100_000, seed=8, coherence_ratio=0.5)
    batch = generate_shots(scenario)
    x = batch.signal_x
    assert np.var(x) == pytest.approx(4.0, rel=0.05)
    lag_one = np.corrcoef(x[:-1], x[1:])[0, 1]
    assert lag_one == pytest.approx(math.exp(-0.5), abs=0.02)


def test_independent_shots_are_uncorrelated():
    scenario = SplitScenario.from_photon_numbers(2.0, 2.0, shots=100_000, seed=8)
    x = generate_shots(scenario).signal_x
    assert abs(np.corrcoef(x[:-1], x[1:])[0, 1]) < 0.015


def test_batch_records_and_dump_layout():
    scenario = SplitScenario.from_photon_numbers(1.0, 1.0, shots=50, seed=2)
    batch = generate_shots(scenario)
    record = batch.record(7)
    assert record.alice_raw == batch.alice_raw[7]
    assert record.alice_bin == quantize(record.alice_raw, scenario.binning)
    assert len(list(batch.records())) == 50

    ranks = np.arange(1, 51)
    dump = dump_records(batch, ranks)
    assert SHOT_DUMP_DTYPE.itemsize == 35
    assert dump.tobytes()[:8] == (0).to_bytes(8, "little")
    assert dump["rank"].tolist() == ranks.tolist()
    assert dump["alice_bin"].tolist() == batch.alice_bin.tolist()


if __name__ == "__main__":
    tests = [(name, fn) for name, fn in sorted(globals().items()) if name.startswith("test_") and callable(fn)]
    failed = 0
    for name, fn in tests:
        try:
            fn()
            print(f"✅ {name}")
        except Exception as e:
            failed += 1
            print(f"❌ {name}: {e}")
    print(f"\n📊 {len(tests) - failed}/{len(tests)} passed")
    sys.exit(1 if failed else 0)
