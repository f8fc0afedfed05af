"""
Randomness extraction by two-universal hashing over GF(2).

Biased 8-bit bins are multiplied by a seeded random binary matrix; the
default 4x8 matrix turns every sample into a 4-bit nibble, block matrices
(4k x 8k) hash k consecutive samples at once at the same rate. Two
consecutive nibbles are merged into one output byte, high nibble first.
"""
import logging
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from eavesdropper import AttackResult, ConditionalPrediction, ContractViolation, conditional_variance
from entropy_metrics import binned_gaussian_rows

logger = logging.getLogger(__name__)

SAMPLE_BITS = 8
NIBBLE_BITS = 4


def gf2_rank(bits: np.ndarray) -> int:
    """Rank of a binary matrix over GF(2) by Gaussian elimination."""
    matrix = (np.array(bits, dtype=np.uint8) & 1).copy()
    rows, cols = matrix.shape
    rank = 0
    for col in range(cols):
        pivot = None
        for r in range(rank, rows):
            if matrix[r, col]:
                pivot = r
                break
        if pivot is None:
            continue
        if pivot != rank:
            matrix[[rank, pivot]] = matrix[[pivot, rank]]
        for r in range(rows):
            if r != rank and matrix[r, col]:
                matrix[r] ^= matrix[rank]
        rank += 1
        if rank == rows:
            break
    return rank


@dataclass(frozen=True)
class HashMatrix:
    """Row-major GF(2) matrix; input and output bits are most significant first."""
    rows: int
    cols: int
    bits: np.ndarray
    seed: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"matrix dimensions must be positive, got {self.rows}x{self.cols}")
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.shape != (self.rows, self.cols):
            raise ValueError(f"bit array has shape {bits.shape}, expected {(self.rows, self.cols)}")
        if np.any(bits > 1):
            raise ValueError("matrix entries must be 0 or 1")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def random(cls, seed: int, rows: int = 4, cols: int = 8) -> "HashMatrix":
        """
        Uniformly drawn full-rank matrix from a seeded stream.

        Draws are repeated until the rank is min(rows, cols); a rank-deficient
        map cannot reach all outputs.
        """
        rng = np.random.default_rng(seed)
        attempts = 0
        while True:
            attempts += 1
            bits = rng.integers(0, 2, size=(rows, cols), dtype=np.uint8)
            if gf2_rank(bits) == min(rows, cols):
                break
        if attempts > 1:
            logger.debug(f"Hash matrix seed {seed}: full rank after {attempts} draws")
        return cls(rows=rows, cols=cols, bits=bits, seed=seed)

    @property
    def samples_per_block(self) -> int:
        return self.cols // SAMPLE_BITS

    def to_dict(self) -> Dict:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "seed": self.seed,
            "bits": ["".join(str(int(b)) for b in row) for row in self.bits],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "HashMatrix":
        bits = np.array([[int(c) for c in row] for row in data["bits"]], dtype=np.uint8)
        return cls(rows=int(data["rows"]), cols=int(data["cols"]), bits=bits, seed=int(data["seed"]))


def _to_bits(values: np.ndarray, width: int) -> np.ndarray:
    shifts = np.arange(width - 1, -1, -1, dtype=np.uint64)
    return ((values.astype(np.uint64)[:, None] >> shifts) & 1).astype(np.uint8)


def _from_bits(bits: np.ndarray) -> np.ndarray:
    weights = np.uint64(1) << np.arange(bits.shape[1] - 1, -1, -1, dtype=np.uint64)
    return (bits.astype(np.uint64) * weights).sum(axis=1)


def hash_words(words: np.ndarray, m: HashMatrix) -> np.ndarray:
    """GF(2) product of the matrix with each cols-bit input word."""
    words = np.asarray(words, dtype=np.uint64)
    if m.cols > 64 or np.any(words >> np.uint64(m.cols) if m.cols < 64 else False):
        raise ContractViolation(f"input words do not fit into {m.cols} bits")
    products = (_to_bits(words, m.cols).astype(np.int64) @ m.bits.T.astype(np.int64)) & 1
    return _from_bits(products)


def hash_sample(value: int, m: HashMatrix) -> int:
    """
    Hash one 8-bit sample with a 4x8 matrix.

    Args:
        value: Biased bin index in [0, 256)
        m: 4x8 hash matrix

    Returns:
        int: 4-bit output
    """
    if (m.rows, m.cols) != (NIBBLE_BITS, SAMPLE_BITS):
        raise ContractViolation(f"hash_sample needs a 4x8 matrix, got {m.rows}x{m.cols}")
    if not 0 <= value < 2 ** SAMPLE_BITS:
        raise ContractViolation(f"sample {value} is not an 8-bit value")
    return int(hash_words(np.array([value]), m)[0])


def extract_nibbles(bins: np.ndarray, m: HashMatrix) -> np.ndarray:
    """
    Hash a stream of 8-bit samples into one nibble per sample.

    A 4k x 8k matrix consumes k samples per block (first sample in the most
    significant byte) and its 4k output bits are split into k nibbles;
    a trailing partial block is dropped.
    """
    k = m.samples_per_block
    if m.cols != SAMPLE_BITS * k or m.rows != NIBBLE_BITS * k or k < 1:
        raise ContractViolation(f"matrix {m.rows}x{m.cols} is not a 4k x 8k block matrix")
    bins = np.asarray(bins, dtype=np.uint64)
    if np.any(bins >= 2 ** SAMPLE_BITS):
        raise ContractViolation("samples must be 8-bit values")
    usable = (bins.size // k) * k
    blocks = bins[:usable].reshape(-1, k)
    words = np.zeros(blocks.shape[0], dtype=np.uint64)
    for column in range(k):
        words = (words << np.uint64(SAMPLE_BITS)) | blocks[:, column]
    hashed = hash_words(words, m)
    shifts = np.arange(k - 1, -1, -1, dtype=np.uint64) * np.uint64(NIBBLE_BITS)
    nibbles = (hashed[:, None] >> shifts) & np.uint64(0xF)
    return nibbles.reshape(-1).astype(np.uint8)


def merge_pair(h1: int, h2: int) -> int:
    """Merge two nibbles into a byte, h1 in the high nibble."""
    return ((h1 & 0xF) << NIBBLE_BITS) | (h2 & 0xF)


def merge_nibbles(nibbles: np.ndarray) -> np.ndarray:
    """Pairwise merge (2k, 2k+1) -> byte k; an odd trailing nibble is dropped."""
    nibbles = np.asarray(nibbles, dtype=np.uint8)
    usable = (nibbles.size // 2) * 2
    pairs = nibbles[:usable].reshape(-1, 2)
    return ((pairs[:, 0] << NIBBLE_BITS) | pairs[:, 1]).astype(np.uint8)


def to_bits(data: np.ndarray) -> np.ndarray:
    """Unpack bytes into bits, most significant bit first."""
    return np.unpackbits(np.asarray(data, dtype=np.uint8))


def pair_rank(p1: np.ndarray, p2: np.ndarray, actual: Tuple[int, int]) -> int:
    """
    Rank of a bin pair when all pairs are guessed by descending joint probability.

    Ties are broken by the lexicographic index pair (bin1, bin2).
    """
    b1, b2 = actual
    if not (0 <= b1 < p1.size and 0 <= b2 < p2.size):
        raise ContractViolation(f"pair {actual} outside the bin range")
    joint = np.multiply.outer(p1, p2).ravel()
    flat = b1 * p2.size + b2
    target = joint[flat]
    higher = np.count_nonzero(joint > target)
    ties = np.count_nonzero(joint[:flat] == target)
    return int(1 + higher + ties)


def attack_merged(pred1: ConditionalPrediction, pred2: ConditionalPrediction,
                  actual_pair: Tuple[int, int], m: HashMatrix) -> Tuple[int, int]:
    """
    Compare Eve's two strategies against one merged output byte.

    Args:
        pred1: Eve's prediction for the first shot
        pred2: Eve's prediction for the second shot
        actual_pair: The two biased bins Alice measured
        m: 4x8 hash matrix

    Returns:
        Tuple of (g_ind_rank, g_merged_rank); the merged rank is the
        ascending brute-force guess number, merged value + 1
    """
    g_ind = pair_rank(pred1.pmf, pred2.pmf, actual_pair)
    merged = merge_pair(hash_sample(actual_pair[0], m), hash_sample(actual_pair[1], m))
    return g_ind, merged + 1


def _first_reaching(q: np.ndarray, ascending: np.ndarray, target: np.ndarray, strict: bool) -> np.ndarray:
    """
    For every (pair, row), the first index j with q * ascending[j] above (or at) the target.

    Rounded multiplication by a non-negative q is monotone, so the exact
    products along a row are sorted and a bisection on them finds the boundary.
    """
    size = ascending.shape[1]
    low = np.zeros(q.shape, dtype=np.int64)
    high = np.full(q.shape, size, dtype=np.int64)
    bound = target[:, None]
    while True:
        open_cells = low < high
        if not open_cells.any():
            return low
        mid = (low + high) // 2
        products = q * np.take_along_axis(ascending, np.minimum(mid, size - 1), axis=1)
        reached = products > bound if strict else products >= bound
        high = np.where(open_cells & reached, mid, high)
        low = np.where(open_cells & ~reached, mid + 1, low)


def fast_pair_ranks(p1: np.ndarray, p2: np.ndarray, actual: np.ndarray) -> np.ndarray:
    """
    pair_rank() for many pairs at once.

    Each row of the sorted joint table is bisected on the same products
    pair_rank() compares, once for the products above the target and once
    for the run equal to it. Ties are split by the lexicographic index pair.
    A zero target falls back to pair_rank().
    """
    count, size = p1.shape
    index = np.arange(count)
    b1 = actual[:, 0].astype(np.int64)
    b2 = actual[:, 1].astype(np.int64)
    target = p1[index, b1] * p2[index, b2]

    order = np.argsort(p2, axis=1, kind="stable")
    ascending = np.take_along_axis(p2, order, axis=1)
    first_tie = _first_reaching(p1, ascending, target, strict=False)
    first_above = _first_reaching(p1, ascending, target, strict=True)

    greater = (size - first_above).sum(axis=1)
    earlier_rows = np.arange(size)[None, :] < b1[:, None]
    ties = np.where(earlier_rows, first_above - first_tie, 0).sum(axis=1)
    # within row b1 only columns before b2 come earlier
    position = np.arange(size)[None, :]
    own_run = (position >= first_tie[index, b1][:, None]) & (position < first_above[index, b1][:, None])
    ties += np.count_nonzero(own_run & (order < b2[:, None]), axis=1)

    ranks = (1 + greater + ties).astype(np.int64)
    for k in np.nonzero(target == 0.0)[0]:
        ranks[k] = pair_rank(p1[k], p2[k], (int(b1[k]), int(b2[k])))
    return ranks


@dataclass(frozen=True)
class MergedGuessSummary:
    g_ind: float
    g_merged: float
    pairs: int


def merged_attack(result: AttackResult, m: HashMatrix) -> MergedGuessSummary:
    """
    Joint-guess comparison over consecutive shot pairs (2k, 2k+1).

    g_ind uses Eve's conditional pmfs to guess both biased bins jointly;
    g_merged brute-forces the extracted byte in ascending order.
    """
    scenario = result.scenario
    if scenario.binning.bin_count != 2 ** SAMPLE_BITS:
        raise ContractViolation("merged attack needs 8-bit samples")
    bins = result.batch.alice_bin
    pairs = bins.size // 2
    if pairs < 1:
        raise ValueError("merged attack needs at least two shots")

    merged = merge_nibbles(extract_nibbles(bins, m)).astype(np.int64)
    merged_pairs = merged.size
    var_c = conditional_variance(scenario)
    actual = bins[:2 * pairs].reshape(-1, 2)
    means = result.projected_means[:2 * pairs].reshape(-1, 2)
    rank_sum = 0
    chunk = 4096
    for start in range(0, pairs, chunk):
        stop = min(start + chunk, pairs)
        p1 = binned_gaussian_rows(means[start:stop, 0], var_c, scenario.binning)
        p2 = binned_gaussian_rows(means[start:stop, 1], var_c, scenario.binning)
        rank_sum += int(fast_pair_ranks(p1, p2, actual[start:stop]).sum())

    summary = MergedGuessSummary(
        g_ind=rank_sum / pairs,
        g_merged=float(np.mean(merged + 1)) if merged_pairs else float("nan"),
        pairs=pairs,
    )
    logger.info(f"Merged attack over {pairs} pairs: g_ind={summary.g_ind:.2f} g_merged={summary.g_merged:.2f}")
    return summary
