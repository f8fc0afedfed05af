"""
Reproducible shot generation.

Randomness comes from counter-based streams: block b of a run draws from a
Philox generator keyed by the master seed with b in the counter, so every
shot depends only on (seed, shot index) and the output is identical for any
number of workers.
"""
import logging
import math
from dataclasses import dataclass
from multiprocessing import Pool
from typing import Iterator, List, Tuple

import numpy as np
from scipy.signal import lfilter

from phase_space import ShotRecord, SplitScenario, measure, ou_coefficient, quantize_array

logger = logging.getLogger(__name__)

SHOTS_PER_BLOCK = 65536

# Standard normals per shot: signal x, signal p, Alice's noise, Eve's x and p noise
NORMALS_PER_SHOT = 5

SHOT_DUMP_DTYPE = np.dtype([
    ("shot_index", "<u8"),
    ("alice_raw", "<f8"),
    ("eve_x", "<f8"),
    ("eve_p", "<f8"),
    ("alice_bin", "u1"),
    ("rank", "<u2"),
])


def block_stream(seed: int, block_index: int) -> np.random.Generator:
    """Generator for one block of the shot stream."""
    bit_generator = np.random.Philox(key=seed, counter=[0, 0, block_index, 0])
    return np.random.Generator(bit_generator)


def shot_stream(seed: int, shot_index: int) -> np.random.Generator:
    """Generator owned by a single shot, for the scalar run_shot path."""
    bit_generator = np.random.Philox(key=seed, counter=[0, 0, shot_index, 1])
    return np.random.Generator(bit_generator)


def _draw_block(args: Tuple[int, int, int]) -> np.ndarray:
    seed, block_index, size = args
    # shot-major draw so a shot's normals do not depend on the block size
    return block_stream(seed, block_index).standard_normal((size, NORMALS_PER_SHOT)).T


def block_layout(shots: int) -> List[Tuple[int, int]]:
    """(block_index, size) pairs covering `shots` shots."""
    blocks = math.ceil(shots / SHOTS_PER_BLOCK)
    return [(b, min(SHOTS_PER_BLOCK, shots - b * SHOTS_PER_BLOCK)) for b in range(blocks)]


def draw_normals(seed: int, shots: int, workers: int = 1) -> np.ndarray:
    """
    All standard normals of a run, shape (5, shots).

    Args:
        seed: Master seed
        shots: Number of shots
        workers: Process count; does not change the result

    Returns:
        numpy.ndarray of draws in shot order
    """
    tasks = [(seed, b, size) for b, size in block_layout(shots)]
    if workers > 1 and len(tasks) > 1:
        with Pool(processes=min(workers, len(tasks))) as pool:
            blocks = pool.map(_draw_block, tasks)
    else:
        blocks = [_draw_block(task) for task in tasks]
    logger.debug(f"Drew {len(tasks)} blocks for {shots} shots with {workers} worker(s)")
    return np.concatenate(blocks, axis=1)


def ou_path(n: float, coherence_ratio: float, innovations: np.ndarray) -> np.ndarray:
    """
    Correlated displacements from standard-normal innovations.

    The first value is drawn from the stationary distribution; later values
    follow x_k = rho * x_{k-1} + sqrt(n (1 - rho^2)) * xi_k.
    """
    rho = ou_coefficient(coherence_ratio)
    drive = math.sqrt(n * (1.0 - rho * rho)) * innovations
    drive[0] = math.sqrt(n) * innovations[0]
    return lfilter([1.0], [1.0, -rho], drive)


@dataclass(frozen=True)
class ShotBatch:
    """Column-oriented ShotRecords of one run."""
    signal_x: np.ndarray
    signal_p: np.ndarray
    alice_raw: np.ndarray
    alice_bin: np.ndarray
    eve_x: np.ndarray
    eve_p: np.ndarray

    def __len__(self) -> int:
        return len(self.alice_raw)

    def record(self, index: int) -> ShotRecord:
        return ShotRecord(
            signal_x=float(self.signal_x[index]),
            signal_p=float(self.signal_p[index]),
            alice_raw=float(self.alice_raw[index]),
            alice_bin=int(self.alice_bin[index]),
            eve_x=float(self.eve_x[index]),
            eve_p=float(self.eve_p[index]),
        )

    def records(self) -> Iterator[ShotRecord]:
        for index in range(len(self)):
            yield self.record(index)


def generate_shots(scenario: SplitScenario, workers: int = 1) -> ShotBatch:
    """
    Simulate every shot of a scenario.

    Args:
        scenario: Split configuration (shots and seed included)
        workers: Process count for drawing the random blocks

    Returns:
        ShotBatch in shot order
    """
    normals = draw_normals(scenario.seed, scenario.shots, workers)
    n = scenario.n_total
    if scenario.independent_shots:
        scale = math.sqrt(n)
        x, p = scale * normals[0], scale * normals[1]
    else:
        x = ou_path(n, scenario.coherence_ratio, normals[0].copy())
        p = ou_path(n, scenario.coherence_ratio, normals[1].copy())

    alice_raw, eve_x, eve_p = measure(scenario, x, p, normals[2], normals[3], normals[4])
    return ShotBatch(
        signal_x=x,
        signal_p=p,
        alice_raw=alice_raw,
        alice_bin=quantize_array(alice_raw, scenario.binning),
        eve_x=eve_x,
        eve_p=eve_p,
    )


def dump_records(batch: ShotBatch, ranks: np.ndarray) -> np.ndarray:
    """Pack shots into the little-endian raw dump layout."""
    if batch.alice_bin.max(initial=0) > 255:
        raise ValueError("raw dump stores bins as u8; bin_count must be <= 256")
    out = np.empty(len(batch), dtype=SHOT_DUMP_DTYPE)
    out["shot_index"] = np.arange(len(batch), dtype=np.uint64)
    out["alice_raw"] = batch.alice_raw
    out["eve_x"] = batch.eve_x
    out["eve_p"] = batch.eve_p
    out["alice_bin"] = batch.alice_bin
    out["rank"] = np.minimum(ranks, np.iinfo(np.uint16).max)
    return out
