"""
Eve's heterodyne side-information attack.

For every heterodyne pair Eve conditions the joint Husimi function of the two
splitter outputs on her outcome, deconvolves the conditional Husimi function
of Alice's mode to a conditional Wigner function, projects it on Alice's
homodyne axis and guesses bins in order of decreasing probability.
"""
import logging
import math
from dataclasses import dataclass
from typing import Iterator, Optional, Tuple

import numpy as np
from scipy.stats import norm

from entropy_metrics import (
    AttackTally,
    binned_gaussian,
    binned_gaussian_rows,
    expected_guesswork,
    min_entropy,
    rank_table,
)
from phase_space import VACUUM_VARIANCE, SplitScenario, describe, replace_scenario
from shot_generator import ShotBatch, generate_shots

logger = logging.getLogger(__name__)

# Shots per pmf matrix; bounds memory at chunk x bin_count floats
RANK_CHUNK = 8192


class ContractViolation(ValueError):
    """A caller broke an operation's precondition."""


@dataclass(frozen=True)
class ConditionalPrediction:
    mean_x: float
    mean_p: float
    var_c: float
    projected_mean: float
    pmf: np.ndarray


@dataclass(frozen=True)
class GuessRecord:
    shot_index: int
    actual_bin: int
    rank: int
    first_guess_correct: bool


def conditioning_coefficient(scenario: SplitScenario) -> float:
    """Factor mapping Eve's heterodyne pair onto the conditional mean of Alice's mode."""
    denominator = scenario.n_eve + scenario.electronic_noise_factor
    if denominator <= 0:
        raise ValueError("Eve's heterodyne variance must be positive")
    return -scenario.r * scenario.t * scenario.n_total / denominator


def conditional_husimi_variance(scenario: SplitScenario) -> float:
    """Per-quadrature variance of Alice's conditional Husimi function."""
    f = scenario.electronic_noise_factor
    denominator = scenario.n_eve + f
    if denominator <= 0:
        raise ValueError("Eve's heterodyne variance must be positive")
    return scenario.n_alice * f / denominator + VACUUM_VARIANCE * f + VACUUM_VARIANCE


def conditional_variance(scenario: SplitScenario) -> float:
    """
    Conditional Wigner variance after Gaussian deconvolution.

    Deconvolving the vacuum Gaussian subtracts its variance (0.5). At unit
    noise factor this equals n_alice + 0.5 - n_alice * n_eve / (n_eve + 1).
    """
    return conditional_husimi_variance(scenario) - VACUUM_VARIANCE


def condition(scenario: SplitScenario, eve_x: float, eve_p: float) -> ConditionalPrediction:
    """
    Eve's prediction for Alice's next outcome given one heterodyne pair.

    Args:
        scenario: Split configuration known to Eve
        eve_x: Eve's X outcome
        eve_p: Eve's P outcome

    Returns:
        ConditionalPrediction with the binned projection onto Alice's axis
    """
    gain = conditioning_coefficient(scenario)
    mean_x, mean_p = gain * eve_x, gain * eve_p
    phi = scenario.alice_phase
    projected = mean_x * math.cos(phi) + mean_p * math.sin(phi)
    var_c = conditional_variance(scenario)
    pmf = binned_gaussian(projected, var_c, scenario.binning).probs
    return ConditionalPrediction(mean_x=mean_x, mean_p=mean_p, var_c=var_c,
                                 projected_mean=projected, pmf=pmf)


def predict_batch(scenario: SplitScenario, eve_x: np.ndarray, eve_p: np.ndarray) -> np.ndarray:
    """Projected conditional means for a vector of heterodyne pairs."""
    gain = conditioning_coefficient(scenario)
    phi = scenario.alice_phase
    return gain * (eve_x * math.cos(phi) + eve_p * math.sin(phi))


def rank_batch(pmfs: np.ndarray, actual_bins: np.ndarray) -> np.ndarray:
    """
    Guess numbers of the actual bins, one pmf row per shot.

    rank = 1 + (# bins strictly more probable) + (# equally probable bins with a lower index).
    """
    actual_bins = np.asarray(actual_bins, dtype=np.int64)
    rows = np.arange(pmfs.shape[0])
    target = pmfs[rows, actual_bins][:, None]
    higher = np.count_nonzero(pmfs > target, axis=1)
    lower_index = np.arange(pmfs.shape[1])[None, :] < actual_bins[:, None]
    ties = np.count_nonzero((pmfs == target) & lower_index, axis=1)
    return 1 + higher + ties


def guess_rank(prediction: ConditionalPrediction, actual_bin: int) -> Tuple[int, bool]:
    """Rank of `actual_bin` in Eve's guess order and whether her first guess hits."""
    if not 0 <= actual_bin < prediction.pmf.size:
        raise ContractViolation(f"bin {actual_bin} outside [0, {prediction.pmf.size})")
    rank = int(rank_batch(prediction.pmf[None, :], np.array([actual_bin]))[0])
    return rank, rank == 1


@dataclass(frozen=True)
class AttackResult:
    """Per-shot outcome of a full attack run."""
    scenario: SplitScenario
    batch: ShotBatch
    projected_means: np.ndarray
    ranks: np.ndarray
    unconditional_ranks: np.ndarray
    max_probs: np.ndarray

    def tally(self) -> AttackTally:
        return AttackTally.from_ranks(self.scenario.binning.bin_count, self.ranks,
                                      self.unconditional_ranks, self.max_probs)

    def records(self) -> Iterator[GuessRecord]:
        for index, (actual, rank) in enumerate(zip(self.batch.alice_bin, self.ranks)):
            yield GuessRecord(shot_index=index, actual_bin=int(actual), rank=int(rank),
                              first_guess_correct=bool(rank == 1))


def unconditional_marginal(scenario: SplitScenario):
    """Distribution of Alice's bins without side information."""
    return binned_gaussian(0.0, scenario.alice_variance, scenario.binning)


def run_attack(scenario: SplitScenario, workers: int = 1,
               batch: Optional[ShotBatch] = None) -> AttackResult:
    """
    Generate the shots of a scenario and rank every outcome, with and
    without Eve's side information.

    Args:
        scenario: Split configuration
        workers: Process count for shot generation
        batch: Pre-generated shots (skips generation)

    Returns:
        AttackResult
    """
    logger.info(f"Attacking {describe(scenario)}")
    if batch is None:
        batch = generate_shots(scenario, workers)

    means = predict_batch(scenario, batch.eve_x, batch.eve_p)
    var_c = conditional_variance(scenario)
    ranks = np.empty(len(batch), dtype=np.int64)
    max_probs = np.empty(len(batch))
    for start in range(0, len(batch), RANK_CHUNK):
        stop = min(start + RANK_CHUNK, len(batch))
        pmfs = binned_gaussian_rows(means[start:stop], var_c, scenario.binning)
        ranks[start:stop] = rank_batch(pmfs, batch.alice_bin[start:stop])
        max_probs[start:stop] = pmfs.max(axis=1)

    marginal = binned_gaussian_rows(np.zeros(1), scenario.alice_variance, scenario.binning)[0]
    unconditional_ranks = rank_table(marginal)[batch.alice_bin]
    logger.debug(f"var_c={var_c:.5f} first-guess rate={np.mean(ranks == 1):.5f}")
    return AttackResult(scenario=scenario, batch=batch, projected_means=means, ranks=ranks,
                        unconditional_ranks=unconditional_ranks, max_probs=max_probs)


def attack_stream(scenario: SplitScenario, shots: Optional[int] = None,
                  workers: int = 1) -> Iterator[GuessRecord]:
    """Stream of GuessRecords; `shots` overrides the scenario's shot count."""
    if shots is not None and shots != scenario.shots:
        scenario = replace_scenario(scenario, shots=shots)
    yield from run_attack(scenario, workers).records()


def theoretical_conditional(scenario: SplitScenario, points: int = 4001) -> Tuple[float, float]:
    """
    Analytic conditional min-entropy and guesswork.

    Averages max(pmf) and the guesswork of the conditional pmf over the
    Gaussian distribution of the projected mean. max(pmf) has a kink every
    bin width, so a dense grid over +-8 sigma is used instead of
    Gauss-Hermite nodes.

    Returns:
        Tuple of (h_min bits, expected guesswork)
    """
    var_c = conditional_variance(scenario)
    # law of total variance: Var(alice_raw) = var_c + Var(projected mean)
    spread = max(scenario.alice_variance - var_c, 0.0)
    if spread < 1e-15:
        d = binned_gaussian(0.0, var_c, scenario.binning)
        return min_entropy(d), expected_guesswork(d)

    sd = math.sqrt(spread)
    means = np.linspace(-8 * sd, 8 * sd, points)
    weights = norm.pdf(means, scale=sd)
    weights /= weights.sum()
    pmfs = binned_gaussian_rows(means, var_c, scenario.binning)
    pmfs /= pmfs.sum(axis=1, keepdims=True)
    p_guess = float(np.dot(weights, pmfs.max(axis=1)))
    ordered = -np.sort(-pmfs, axis=1)
    guesswork_rows = ordered @ np.arange(1, pmfs.shape[1] + 1)
    return -math.log2(p_guess), float(np.dot(weights, guesswork_rows))
