"""
Health-check battery for extracted bitstreams.

Seven tests of the NIST SP 800-22 family: Frequency, BlockFrequency, Runs,
LongestRun, CumulativeSums, Serial and ApproximateEntropy. Bits are numpy
arrays of 0/1 values; every test returns a TestReport, and streams shorter
than a test's minimum are reported as skipped instead of passing.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.special import erfc, gammaincc
from scipy.stats import norm

logger = logging.getLogger(__name__)

DEFAULT_SIGNIFICANCE = 0.01
BLOCK_FREQUENCY_M = 128

# LongestRun parameters: (min length, block size, class lower bound, class probabilities)
LONGEST_RUN_TABLES = [
    (750_000, 10_000, 10, [0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727]),
    (6_272, 128, 4, [0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124]),
    (128, 8, 1, [0.2148, 0.3672, 0.2305, 0.1875]),
]

PASSED = "passed"
FAILED = "failed"
SKIPPED = "skipped"


@dataclass(frozen=True)
class TestReport:
    """
    Outcome of one statistical test.

    p_value is NaN for skipped tests; multi-statistic tests report the mean
    of their p-values and keep the individual ones in p_values.
    """
    __test__ = False

    test_name: str
    p_value: float
    passed: bool
    bits_consumed: int
    status: str = PASSED
    p_values: Tuple[float, ...] = field(default_factory=tuple)
    reason: Optional[str] = None

    def to_dict(self) -> Dict:
        return {
            "test_name": self.test_name,
            "p_value": None if math.isnan(self.p_value) else self.p_value,
            "passed": self.passed,
            "status": self.status,
            "bits_consumed": self.bits_consumed,
            "p_values": list(self.p_values),
            "reason": self.reason,
        }


def _verdict(name: str, p_values: List[float], consumed: int, significance: float) -> TestReport:
    p_values = [float(min(max(p, 0.0), 1.0)) for p in p_values]
    p = float(np.mean(p_values))
    passed = p >= significance
    return TestReport(test_name=name, p_value=p, passed=passed, bits_consumed=consumed,
                      status=PASSED if passed else FAILED,
                      p_values=tuple(p_values) if len(p_values) > 1 else ())


def _skipped(name: str, n: int, minimum: int) -> TestReport:
    return TestReport(test_name=name, p_value=float("nan"), passed=False, bits_consumed=0,
                      status=SKIPPED, reason=f"needs at least {minimum} bits, got {n}")


def _as_bits(bits) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    if np.any(bits > 1):
        raise ValueError("bitstream must contain only 0 and 1")
    return bits


def frequency_test(bits: np.ndarray, significance: float = DEFAULT_SIGNIFICANCE) -> TestReport:
    """Monobit test: proportion of ones."""
    n = bits.size
    if n < 100:
        return _skipped("Frequency", n, 100)
    s = 2 * int(bits.sum()) - n
    return _verdict("Frequency", [erfc(abs(s) / math.sqrt(2 * n))], n, significance)


def block_frequency_test(bits: np.ndarray, significance: float = DEFAULT_SIGNIFICANCE,
                         block_size: int = BLOCK_FREQUENCY_M) -> TestReport:
    """Proportion of ones inside non-overlapping blocks."""
    n = bits.size
    if n < block_size:
        return _skipped("BlockFrequency", n, block_size)
    blocks = n // block_size
    proportions = bits[:blocks * block_size].reshape(blocks, block_size).mean(axis=1)
    chi2 = 4.0 * block_size * float(np.sum((proportions - 0.5) ** 2))
    return _verdict("BlockFrequency", [gammaincc(blocks / 2.0, chi2 / 2.0)], blocks * block_size, significance)


def runs_test(bits: np.ndarray, significance: float = DEFAULT_SIGNIFICANCE) -> TestReport:
    """Number of uninterrupted runs; fails outright when the frequency prerequisite does."""
    n = bits.size
    if n < 100:
        return _skipped("Runs", n, 100)
    pi = float(bits.mean())
    if abs(pi - 0.5) >= 2.0 / math.sqrt(n):
        return _verdict("Runs", [0.0], n, significance)
    runs = 1 + int(np.count_nonzero(bits[1:] != bits[:-1]))
    expected = 2.0 * n * pi * (1 - pi)
    p = erfc(abs(runs - expected) / (2.0 * math.sqrt(2.0 * n) * pi * (1 - pi)))
    return _verdict("Runs", [p], n, significance)


def _longest_runs(blocks: np.ndarray) -> np.ndarray:
    """Longest run of ones in every row."""
    longest = np.zeros(blocks.shape[0], dtype=np.int64)
    current = np.zeros(blocks.shape[0], dtype=np.int64)
    for column in blocks.T:
        current = (current + 1) * column
        np.maximum(longest, current, out=longest)
    return longest


def longest_run_test(bits: np.ndarray, significance: float = DEFAULT_SIGNIFICANCE) -> TestReport:
    """Longest run of ones within blocks against the tabulated class probabilities."""
    n = bits.size
    table = next((t for t in LONGEST_RUN_TABLES if n >= t[0]), None)
    if table is None:
        return _skipped("LongestRun", n, LONGEST_RUN_TABLES[-1][0])
    _, block_size, lowest, probabilities = table
    blocks = n // block_size
    longest = _longest_runs(bits[:blocks * block_size].reshape(blocks, block_size))
    classes = np.clip(longest, lowest, lowest + len(probabilities) - 1) - lowest
    counts = np.bincount(classes, minlength=len(probabilities))
    expected = blocks * np.asarray(probabilities)
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    p = gammaincc((len(probabilities) - 1) / 2.0, chi2 / 2.0)
    return _verdict("LongestRun", [p], blocks * block_size, significance)


def _trunc_div(a: int, b: int) -> int:
    """Integer division rounding toward zero."""
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def _cusum_p_value(n: int, z: int) -> float:
    sqrt_n = math.sqrt(n)
    k1 = np.arange(_trunc_div(_trunc_div(-n, z) + 1, 4), _trunc_div(_trunc_div(n, z) - 1, 4) + 1)
    k2 = np.arange(_trunc_div(_trunc_div(-n, z) - 3, 4), _trunc_div(_trunc_div(n, z) - 1, 4) + 1)
    sum1 = np.sum(norm.cdf((4 * k1 + 1) * z / sqrt_n) - norm.cdf((4 * k1 - 1) * z / sqrt_n))
    sum2 = np.sum(norm.cdf((4 * k2 + 3) * z / sqrt_n) - norm.cdf((4 * k2 + 1) * z / sqrt_n))
    return float(1.0 - sum1 + sum2)


def cumulative_sums_test(bits: np.ndarray, significance: float = DEFAULT_SIGNIFICANCE) -> TestReport:
    """Maximal excursion of the +-1 random walk, forward and backward."""
    n = bits.size
    if n < 100:
        return _skipped("CumulativeSums", n, 100)
    steps = 2 * bits.astype(np.int64) - 1
    forward = int(np.max(np.abs(np.cumsum(steps))))
    backward = int(np.max(np.abs(np.cumsum(steps[::-1]))))
    return _verdict("CumulativeSums", [_cusum_p_value(n, forward), _cusum_p_value(n, backward)], n, significance)


def _pattern_counts(bits: np.ndarray, m: int) -> np.ndarray:
    """Counts of all overlapping m-bit patterns, wrapping around the end."""
    if m == 0:
        return np.array([bits.size])
    n = bits.size
    augmented = np.concatenate([bits, bits[:m - 1]]).astype(np.int64)
    values = np.zeros(n, dtype=np.int64)
    for j in range(m):
        values = (values << 1) | augmented[j:j + n]
    return np.bincount(values, minlength=2 ** m)


def _psi_squared(bits: np.ndarray, m: int) -> float:
    if m <= 0:
        return 0.0
    n = bits.size
    counts = _pattern_counts(bits, m).astype(float)
    return float((2 ** m) / n * np.sum(counts ** 2) - n)


def serial_block_length(n: int) -> int:
    return min(16, int(math.floor(math.log2(n))) - 3)


def serial_test(bits: np.ndarray, significance: float = DEFAULT_SIGNIFICANCE,
                m: Optional[int] = None) -> TestReport:
    """Frequency of all overlapping m-bit patterns; reports the mean of its two p-values."""
    n = bits.size
    if n < 100:
        return _skipped("Serial", n, 100)
    m = m or serial_block_length(n)
    psi_m, psi_m1, psi_m2 = (_psi_squared(bits, m - d) for d in range(3))
    delta1 = psi_m - psi_m1
    delta2 = psi_m - 2 * psi_m1 + psi_m2
    p1 = gammaincc(2 ** (m - 2), delta1 / 2.0)
    p2 = gammaincc(2 ** (m - 3), delta2 / 2.0)
    return _verdict("Serial", [p1, p2], n, significance)


def approximate_entropy_block_length(n: int) -> int:
    return min(10, int(math.floor(math.log2(n))) - 6)


def _phi(bits: np.ndarray, m: int) -> float:
    counts = _pattern_counts(bits, m).astype(float)
    c = counts[counts > 0] / bits.size
    return float(np.sum(c * np.log(c)))


def approximate_entropy_test(bits: np.ndarray, significance: float = DEFAULT_SIGNIFICANCE,
                             m: Optional[int] = None) -> TestReport:
    """Frequency of overlapping m- and (m+1)-bit patterns compared with a random stream."""
    n = bits.size
    if n < 256:
        return _skipped("ApproximateEntropy", n, 256)
    m = m or approximate_entropy_block_length(n)
    ap_en = _phi(bits, m) - _phi(bits, m + 1)
    chi2 = 2.0 * n * (math.log(2) - ap_en)
    p = gammaincc(2 ** (m - 1), chi2 / 2.0)
    return _verdict("ApproximateEntropy", [p], n, significance)


BATTERY: List[Tuple[str, Callable[..., TestReport]]] = [
    ("Frequency", frequency_test),
    ("BlockFrequency", block_frequency_test),
    ("Runs", runs_test),
    ("LongestRun", longest_run_test),
    ("CumulativeSums", cumulative_sums_test),
    ("Serial", serial_test),
    ("ApproximateEntropy", approximate_entropy_test),
]


def run_battery(bits, significance: float = DEFAULT_SIGNIFICANCE, workers: int = 4) -> List[TestReport]:
    """
    Run every implemented test over the same stream.

    Args:
        bits: 0/1 values
        significance: Pass threshold on the reported p-value
        workers: Threads used to run tests side by side

    Returns:
        List of TestReport in battery order
    """
    if not 0 < significance < 1:
        raise ValueError(f"significance must lie in (0, 1), got {significance}")
    stream = _as_bits(bits)
    stream.setflags(write=False)
    logger.info(f"🔧 Running {len(BATTERY)} tests over {stream.size} bits")

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        reports = list(pool.map(lambda entry: entry[1](stream, significance), BATTERY))

    for report in reports:
        if report.status == SKIPPED:
            logger.warning(f"⚠️ {report.test_name} skipped: {report.reason}")
        elif report.passed:
            logger.info(f"✅ {report.test_name}: p={report.p_value:.4f}")
        else:
            logger.warning(f"❌ {report.test_name}: p={report.p_value:.4f}")
    return reports


def battery_passed(reports: List[TestReport]) -> bool:
    """True when every test ran and passed."""
    return all(r.status == PASSED for r in reports)
