#!/usr/bin/env python3
"""
Tests for the statistical battery, checked against published reference vectors
"""

import math
import sys

import numpy as np
import pytest
from scipy.stats import kstest

from nist_battery import (
    FAILED,
    PASSED,
    SKIPPED,
    approximate_entropy_block_length,
    approximate_entropy_test,
    battery_passed,
    block_frequency_test,
    cumulative_sums_test,
    frequency_test,
    longest_run_test,
    run_battery,
    runs_test,
    serial_block_length,
    serial_test,
)

# first 100 binary digits of pi's expansion used in the reference examples
PI_100 = ("1100100100001111110110101010001000100001011010001100001000110100"
          "110001001100011001100010100010111000")

LONGEST_RUN_128 = ("11001100000101010110110001001100111000000000001001001101010100010001"
                   "001111010110100000001101011111001100111001101101100010110010")


def as_bits(text: str) -> np.ndarray:
    return np.array([int(c) for c in text], dtype=np.uint8)


def test_reference_vector_shapes():
    assert len(PI_100) == 100 and PI_100.count("1") == 42
    assert len(LONGEST_RUN_128) == 128


def test_frequency_reference_value():
    report = frequency_test(as_bits(PI_100))
    assert report.p_value == pytest.approx(0.109599, abs=1e-6)
    assert report.passed and report.status == PASSED
    assert report.bits_consumed == 100


def test_block_frequency_reference_value():
    report = block_frequency_test(as_bits(PI_100), block_size=10)
    assert report.p_value == pytest.approx(0.706438, abs=1e-6)
    assert report.passed


def test_runs_reference_value():
    report = runs_test(as_bits(PI_100))
    assert report.p_value == pytest.approx(0.500798, abs=1e-6)


def test_cumulative_sums_reference_values():
    report = cumulative_sums_test(as_bits(PI_100))
    forward, backward = report.p_values
    assert forward == pytest.approx(0.219194, abs=1e-6)
    assert backward == pytest.approx(0.114866, abs=1e-6)
    assert report.p_value == pytest.approx((forward + backward) / 2)
    assert report.passed


def test_longest_run_reference_value():
    report = longest_run_test(as_bits(LONGEST_RUN_128))
    assert report.p_value == pytest.approx(0.1806, abs=1e-4)
    assert report.bits_consumed == 128


def test_block_lengths():
    assert serial_block_length(1_000_000) == 16
    assert serial_block_length(100) == 3
    assert approximate_entropy_block_length(1_000_000) == 10
    assert approximate_entropy_block_length(256) == 2


def test_all_zeros_fail_frequency():
    report = frequency_test(np.zeros(10_000, dtype=np.uint8))
    assert not report.passed
    assert report.status == FAILED
    assert report.p_value < 1e-10


def test_alternating_stream_fails_runs_but_not_frequency():
    bits = (np.arange(10_000) % 2).astype(np.uint8)
    assert frequency_test(bits).passed
    assert not runs_test(bits).passed


def test_runs_prerequisite_forces_failure():
    bits = np.ones(1000, dtype=np.uint8)
    bits[:300] = 0
    report = runs_test(bits)
    assert report.p_value == 0.0
    assert not report.passed


def test_short_stream_is_skipped_everywhere():
    bits = np.random.default_rng(1).integers(0, 2, size=50).astype(np.uint8)
    reports = run_battery(bits)
    assert len(reports) == 7
    for report in reports:
        assert report.status == SKIPPED
        assert not report.passed
        assert math.isnan(report.p_value)
        assert report.to_dict()["p_value"] is None
    assert not battery_passed(reports)


def test_minimums_per_test():
    bits = np.random.default_rng(2).integers(0, 2, size=127).astype(np.uint8)
    assert frequency_test(bits).status != SKIPPED
    assert longest_run_test(bits).status == SKIPPED
    assert block_frequency_test(bits).status == SKIPPED
    assert approximate_entropy_test(bits).status == SKIPPED
    assert serial_test(bits).status != SKIPPED


def test_good_generator_passes_the_battery():
    outcomes = []
    for seed in (11, 12, 13):
        bits = np.random.default_rng(seed).integers(0, 2, size=1_000_000).astype(np.uint8)
        reports = run_battery(bits)
        assert all(r.status != SKIPPED for r in reports)
        outcomes.append(battery_passed(reports))
    assert sum(outcomes) >= 2


def test_p_values_are_uniform_for_a_good_generator():
    rng = np.random.default_rng(2024)
    streams = [rng.integers(0, 2, size=20_000).astype(np.uint8) for _ in range(200)]
    single = (frequency_test, block_frequency_test, runs_test, longest_run_test, approximate_entropy_test)
    for test in single:
        p_values = [test(bits).p_value for bits in streams]
        assert kstest(p_values, "uniform").pvalue > 0.01, test.__name__
    # the mean of two p-values is not uniform; check the first statistic of each
    for test in (cumulative_sums_test, serial_test):
        p_values = [test(bits).p_values[0] for bits in streams]
        assert kstest(p_values, "uniform").pvalue > 0.01, test.__name__


def test_battery_is_deterministic_across_workers():
    bits = np.random.default_rng(5).integers(0, 2, size=200_000).astype(np.uint8)
    single = run_battery(bits, workers=1)
    pooled = run_battery(bits, workers=4)
    assert [r.test_name for r in single] == [r.test_name for r in pooled]
    assert [r.p_value for r in single] == [r.p_value for r in pooled]


def test_battery_input_validation():
    with pytest.raises(ValueError):
        run_battery(np.zeros(200, dtype=np.uint8), significance=0.0)
    with pytest.raises(ValueError):
        run_battery(np.array([0, 1, 2] * 100))


def test_report_dict():
    report = frequency_test(as_bits(PI_100)).to_dict()
    assert report["test_name"] == "Frequency"
    assert report["status"] == PASSED
    assert report["p_values"] == []
    serial = serial_test(np.random.default_rng(3).integers(0, 2, size=4096).astype(np.uint8)).to_dict()
    assert len(serial["p_values"]) == 2


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
