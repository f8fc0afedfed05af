"""
Randomness measures: min-entropy, expected guesswork and their conditional
versions, Renyi guesswork exponents, iid baselines, and the analytic binned
Gaussian used as an oracle for every Gaussian marginal.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
from scipy.special import ndtr
from scipy.stats import norm

from phase_space import BinningScheme

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DiscreteDistribution:
    """Probability vector over bin indices."""
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size == 0:
            raise ValueError("distribution needs a non-empty 1-D probability vector")
        if np.any(probs < 0):
            raise ValueError("probabilities must be non-negative")
        if abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {probs.sum():.12f}, expected 1")
        object.__setattr__(self, "probs", probs)

    def __len__(self) -> int:
        return self.probs.size

    @classmethod
    def uniform(cls, size: int) -> "DiscreteDistribution":
        return cls(np.full(size, 1.0 / size))

    @classmethod
    def point_mass(cls, size: int, index: int) -> "DiscreteDistribution":
        probs = np.zeros(size)
        probs[index] = 1.0
        return cls(probs)


def _cell_probabilities(means: np.ndarray, sd: float, scheme: BinningScheme) -> np.ndarray:
    """Row-wise binned Gaussian; the first and last bins absorb the tails."""
    z = (scheme.inner_edges()[None, :] - means[:, None]) / sd
    lower = ndtr(z)
    # upper tail through ndtr(-z) keeps precision far above the mean
    upper = ndtr(-z)
    rows = means.shape[0]
    probs = np.empty((rows, scheme.bin_count))
    probs[:, 0] = lower[:, 0]
    probs[:, -1] = upper[:, -1]
    probs[:, 1:-1] = np.where(z[:, 1:] <= 0, lower[:, 1:] - lower[:, :-1], upper[:, :-1] - upper[:, 1:])
    return probs


def binned_gaussian_rows(means: np.ndarray, variance: float, scheme: BinningScheme) -> np.ndarray:
    """
    Binned Gaussians sharing one variance, one row per mean.

    Args:
        means: 1-D array of means
        variance: Common variance (> 0)
        scheme: Binning

    Returns:
        numpy.ndarray of shape (len(means), bin_count)
    """
    if not variance > 0:
        raise ValueError(f"variance must be positive, got {variance}")
    means = np.atleast_1d(np.asarray(means, dtype=float))
    return _cell_probabilities(means, math.sqrt(variance), scheme)


def binned_gaussian(mean: float, variance: float, scheme: BinningScheme) -> DiscreteDistribution:
    """Exact bin probabilities of N(mean, variance) under the saturating quantizer."""
    probs = binned_gaussian_rows(np.array([mean]), variance, scheme)[0]
    return DiscreteDistribution(probs / probs.sum())


def min_entropy(d: DiscreteDistribution) -> float:
    """H_min = -log2 of the most probable outcome."""
    return float(-math.log2(d.probs.max()))


def shannon_entropy(d: DiscreteDistribution) -> float:
    p = d.probs[d.probs > 0]
    return float(-(p * np.log2(p)).sum())


def guess_order(probs: np.ndarray) -> np.ndarray:
    """Bin indices from most to least probable; ties go to the lower index."""
    return np.argsort(-np.asarray(probs), kind="stable")


def rank_table(probs: np.ndarray) -> np.ndarray:
    """rank_table[bin] is the 1-based guess number at which `bin` is tried."""
    order = guess_order(probs)
    ranks = np.empty(order.size, dtype=np.int64)
    ranks[order] = np.arange(1, order.size + 1)
    return ranks


def expected_guesswork(d: DiscreteDistribution) -> float:
    """Mean number of guesses for an attacker guessing in descending-probability order."""
    ordered = d.probs[guess_order(d.probs)]
    return float(np.dot(np.arange(1, ordered.size + 1), ordered))


def massey_lower_bound(d: DiscreteDistribution) -> Optional[float]:
    """Shannon-entropy lower bound on expected guesswork, valid when H >= 2 bits."""
    h = shannon_entropy(d)
    if h < 2:
        return None
    return 2 ** (h - 2) + 1


def renyi_guesswork_exponent(d: DiscreteDistribution, alpha: float) -> float:
    """
    Asymptotic growth rate of the alpha-th guesswork moment per symbol.

    Returns (1 + alpha) * log2 sum_x p(x)^(1 / (1 + alpha)).
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    p = d.probs[d.probs > 0]
    return float((1 + alpha) * math.log2(np.sum(p ** (1.0 / (1.0 + alpha)))))


def iid_guesswork(beta: float) -> float:
    """Expected guesses for a uniform beta-bit number: 2^(beta-1) + 0.5."""
    if beta < 0:
        raise ValueError(f"beta must be non-negative, got {beta}")
    return 2 ** (beta - 1) + 0.5


@dataclass(frozen=True)
class MinEntropyEstimate:
    bits: float
    ci_low: float
    ci_high: float
    censored: bool = False


def wilson_interval(hits: int, trials: int, confidence: float = 0.95):
    """Wilson score interval for a binomial proportion."""
    z = norm.ppf(0.5 + confidence / 2)
    phat = hits / trials
    denom = 1 + z * z / trials
    centre = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def min_entropy_from_hits(hits: int, trials: int) -> MinEntropyEstimate:
    """
    Frequentist min-entropy from first-guess successes.

    With zero hits the point estimate is the bound -log2(1/trials), flagged
    as censored.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    low_rate, high_rate = wilson_interval(hits, trials)
    if hits == 0:
        bound = math.log2(trials)
        return MinEntropyEstimate(bits=bound, ci_low=-math.log2(high_rate), ci_high=math.inf, censored=True)
    return MinEntropyEstimate(
        bits=-math.log2(hits / trials),
        ci_low=-math.log2(high_rate),
        ci_high=-math.log2(low_rate) if low_rate > 0 else math.inf,
    )


@dataclass
class AttackTally:
    """
    Mergeable partial sums of an attack; combining tallies in any grouping
    gives the same totals.
    """
    bin_count: int
    shots: int = 0
    first_guess_hits: int = 0
    rank_sum: int = 0
    unconditional_hits: int = 0
    unconditional_rank_sum: int = 0
    max_prob_sum: float = 0.0
    rank_histogram: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.rank_histogram is None:
            self.rank_histogram = np.zeros(self.bin_count, dtype=np.int64)

    @classmethod
    def from_ranks(cls, bin_count: int, ranks: np.ndarray,
                   unconditional_ranks: Optional[np.ndarray] = None,
                   max_probs: Optional[np.ndarray] = None) -> "AttackTally":
        ranks = np.asarray(ranks, dtype=np.int64)
        tally = cls(bin_count=bin_count)
        tally.shots = int(ranks.size)
        tally.first_guess_hits = int(np.count_nonzero(ranks == 1))
        tally.rank_sum = int(ranks.sum())
        tally.rank_histogram = np.bincount(ranks - 1, minlength=bin_count).astype(np.int64)
        if unconditional_ranks is not None:
            unconditional_ranks = np.asarray(unconditional_ranks, dtype=np.int64)
            tally.unconditional_hits = int(np.count_nonzero(unconditional_ranks == 1))
            tally.unconditional_rank_sum = int(unconditional_ranks.sum())
        if max_probs is not None:
            tally.max_prob_sum = float(np.sum(max_probs))
        return tally

    def merge(self, other: "AttackTally") -> "AttackTally":
        if other.bin_count != self.bin_count:
            raise ValueError("cannot merge tallies with different bin counts")
        return AttackTally(
            bin_count=self.bin_count,
            shots=self.shots + other.shots,
            first_guess_hits=self.first_guess_hits + other.first_guess_hits,
            rank_sum=self.rank_sum + other.rank_sum,
            unconditional_hits=self.unconditional_hits + other.unconditional_hits,
            unconditional_rank_sum=self.unconditional_rank_sum + other.unconditional_rank_sum,
            max_prob_sum=self.max_prob_sum + other.max_prob_sum,
            rank_histogram=self.rank_histogram + other.rank_histogram,
        )

    def summary(self) -> "AttackSummary":
        if self.shots < 1:
            raise ValueError("empty tally")
        conditional = min_entropy_from_hits(self.first_guess_hits, self.shots)
        unconditional = min_entropy_from_hits(self.unconditional_hits, self.shots)
        return AttackSummary(
            shots=self.shots,
            first_guess_hits=self.first_guess_hits,
            mean_rank=self.rank_sum / self.shots,
            rank_histogram=self.rank_histogram.copy(),
            h_min_unconditional=unconditional.bits,
            h_min_conditional=conditional.bits,
            guesswork_unconditional=self.unconditional_rank_sum / self.shots,
            guesswork_conditional=self.rank_sum / self.shots,
            mean_max_probability=self.max_prob_sum / self.shots,
            conditional_estimate=conditional,
        )


@dataclass(frozen=True)
class AttackSummary:
    shots: int
    first_guess_hits: int
    mean_rank: float
    rank_histogram: np.ndarray
    h_min_unconditional: float
    h_min_conditional: float
    guesswork_unconditional: float
    guesswork_conditional: float
    mean_max_probability: float = float("nan")
    conditional_estimate: Optional[MinEntropyEstimate] = None


def conditional_min_entropy_empirical(summary: AttackSummary) -> MinEntropyEstimate:
    """
    Conditional min-entropy from Eve's first-guess hit rate, with a 95 %
    Wilson interval; zero hits yields a censored bound instead of an error.
    """
    return min_entropy_from_hits(summary.first_guess_hits, summary.shots)


def conditional_expected_guesswork(records: Iterable) -> float:
    """Arithmetic mean of the ranks in a stream of GuessRecords."""
    total = 0
    count = 0
    for record in records:
        total += record.rank
        count += 1
    if count == 0:
        raise ValueError("conditional guesswork needs at least one record")
    return total / count


def majorizes(d1: DiscreteDistribution, d2: DiscreteDistribution) -> bool:
    """True when the sorted partial sums of d1 dominate those of d2."""
    a = np.cumsum(np.sort(d1.probs)[::-1])
    b = np.cumsum(np.sort(d2.probs)[::-1])
    size = max(a.size, b.size)
    a = np.pad(a, (0, size - a.size), constant_values=1.0)
    b = np.pad(b, (0, size - b.size), constant_values=1.0)
    return bool(np.all(a >= b - 1e-12))
