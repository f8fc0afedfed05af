"""
Phase-space primitives for the thermal-light QRNG simulation.

Quadrature convention used everywhere in this project: the vacuum state has
zero mean and Wigner variance 0.5 per quadrature, a thermal state with mean
photon number n has Wigner variance n + 0.5. Heterodyne outcomes sample the
Husimi function, whose variance is the Wigner variance plus 0.5.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

VACUUM_VARIANCE = 0.5

ArrayOrFloat = Union[float, np.ndarray]


@dataclass(frozen=True)
class BinningScheme:
    """
    Maps real quadratures onto discrete random numbers.

    Bins are half-open [edge, edge + bin_width); values outside the covered
    range saturate into the first or last bin, like an ADC.
    """
    bin_width: float = 0.15625
    bin_count: int = 256
    center: float = 0.0

    def __post_init__(self):
        if not self.bin_width > 0:
            raise ValueError(f"bin_width must be positive, got {self.bin_width}")
        if self.bin_count < 2 or self.bin_count % 2:
            raise ValueError(f"bin_count must be an even integer >= 2, got {self.bin_count}")

    @property
    def lower_edge(self) -> float:
        return self.center - 0.5 * self.bin_count * self.bin_width

    @property
    def upper_edge(self) -> float:
        return self.center + 0.5 * self.bin_count * self.bin_width

    @property
    def bits(self) -> int:
        """Number of bits needed to store one bin index."""
        return max(1, (self.bin_count - 1).bit_length())

    def edges(self) -> np.ndarray:
        """All bin_count + 1 edges, lowest first."""
        return self.lower_edge + self.bin_width * np.arange(self.bin_count + 1)

    def inner_edges(self) -> np.ndarray:
        """The bin_count - 1 edges that separate neighbouring bins."""
        return self.edges()[1:-1]


def quantize(value: float, scheme: BinningScheme) -> int:
    """
    Bin index of a single quadrature value.

    Args:
        value: Real quadrature outcome
        scheme: Binning to apply

    Returns:
        int: Index in [0, bin_count); exact edges go to the upper bin
    """
    if math.isnan(value):
        raise ValueError("cannot quantize NaN")
    if math.isinf(value):
        return scheme.bin_count - 1 if value > 0 else 0
    index = math.floor((value - scheme.lower_edge) / scheme.bin_width)
    return min(max(index, 0), scheme.bin_count - 1)


def quantize_array(values: np.ndarray, scheme: BinningScheme) -> np.ndarray:
    """Vectorized quantize(); same edge and clamp rules."""
    index = np.floor((np.asarray(values, dtype=float) - scheme.lower_edge) / scheme.bin_width)
    return np.clip(index, 0, scheme.bin_count - 1).astype(np.int64)


@dataclass(frozen=True)
class GaussianModeState:
    """Single-mode Gaussian field: mean displacement plus Wigner variance per quadrature."""
    mean_x: float = 0.0
    mean_p: float = 0.0
    var_x: float = VACUUM_VARIANCE
    var_p: float = VACUUM_VARIANCE

    def __post_init__(self):
        # Small tolerance so that states built from float arithmetic at the vacuum limit survive
        for name in ("var_x", "var_p"):
            if getattr(self, name) < VACUUM_VARIANCE - 1e-12:
                raise ValueError(f"{name} below the vacuum limit: {getattr(self, name)}")

    @classmethod
    def vacuum(cls) -> "GaussianModeState":
        return cls()

    @classmethod
    def thermal(cls, n: float) -> "GaussianModeState":
        if n < 0:
            raise ValueError(f"photon number must be non-negative, got {n}")
        return cls(0.0, 0.0, n + VACUUM_VARIANCE, n + VACUUM_VARIANCE)

    @property
    def photon_number(self) -> float:
        """Mean photon number including the coherent part."""
        return 0.5 * (self.var_x + self.var_p - 2 * VACUUM_VARIANCE + self.mean_x ** 2 + self.mean_p ** 2)

    @property
    def husimi_variance(self) -> Tuple[float, float]:
        return self.var_x + VACUUM_VARIANCE, self.var_p + VACUUM_VARIANCE

    def quadrature_variance(self, phase: float) -> float:
        """Wigner variance of the quadrature measured at LO angle `phase`."""
        return self.var_x * math.cos(phase) ** 2 + self.var_p * math.sin(phase) ** 2


@dataclass(frozen=True)
class SplitScenario:
    """
    One beam-splitter attack configuration.

    Eve taps the fraction t_sq of the thermal field; the other port of the
    splitter carries vacuum. coherence_ratio is pulse spacing divided by the
    coherence time: 0 or infinity means independent shots.
    """
    n_total: float
    t_sq: float
    alice_phase: float = 0.0
    electronic_noise_factor: float = 1.0
    coherence_ratio: float = math.inf
    shots: int = 200_000
    seed: int = 0
    binning: BinningScheme = BinningScheme()

    def __post_init__(self):
        if not self.n_total >= 0:
            raise ValueError(f"n_total must be >= 0, got {self.n_total}")
        if not 0.0 <= self.t_sq <= 1.0:
            raise ValueError(f"t_sq must lie in [0, 1], got {self.t_sq}")
        if not self.electronic_noise_factor >= 1.0:
            raise ValueError(f"electronic_noise_factor must be >= 1, got {self.electronic_noise_factor}")
        if not self.coherence_ratio >= 0:
            raise ValueError(f"coherence_ratio must be >= 0, got {self.coherence_ratio}")
        if self.shots < 1:
            raise ValueError(f"shots must be positive, got {self.shots}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    @classmethod
    def from_photon_numbers(cls, n_eve: float, n_alice: float, **kwargs) -> "SplitScenario":
        """Build the scenario that delivers n_eve and n_alice photons to the two ports."""
        n_total = n_eve + n_alice
        t_sq = n_eve / n_total if n_total > 0 else 0.0
        return cls(n_total=n_total, t_sq=t_sq, **kwargs)

    @property
    def r(self) -> float:
        return math.sqrt(1.0 - self.t_sq)

    @property
    def t(self) -> float:
        return math.sqrt(self.t_sq)

    @property
    def n_eve(self) -> float:
        return self.t_sq * self.n_total

    @property
    def n_alice(self) -> float:
        return self.n_total - self.n_eve

    @property
    def ratio(self) -> float:
        return self.n_eve / self.n_alice if self.n_alice > 0 else math.inf

    @property
    def independent_shots(self) -> bool:
        return self.coherence_ratio == 0 or math.isinf(self.coherence_ratio)

    @property
    def alice_variance(self) -> float:
        """Variance of Alice's raw homodyne outcome."""
        return self.n_alice + VACUUM_VARIANCE * self.electronic_noise_factor

    @property
    def eve_variance(self) -> float:
        """Variance of each of Eve's heterodyne outcomes."""
        return self.n_eve + self.electronic_noise_factor


@dataclass(frozen=True)
class ShotRecord:
    """One experimental run."""
    signal_x: float
    signal_p: float
    alice_raw: float
    alice_bin: int
    eve_x: float
    eve_p: float


def split_thermal(scenario: SplitScenario) -> Tuple[GaussianModeState, GaussianModeState]:
    """Marginal states in Alice's and Eve's ports after the lossless splitter."""
    return GaussianModeState.thermal(scenario.n_alice), GaussianModeState.thermal(scenario.n_eve)


def sample_thermal_displacement(n: float, rng: np.random.Generator) -> Tuple[float, float]:
    """
    Draw the instantaneous coherent displacement of a thermal field.

    Args:
        n: Mean photon number (>= 0)
        rng: Random stream

    Returns:
        Tuple of (signal_x, signal_p), each N(0, n)
    """
    if n < 0:
        raise ValueError(f"photon number must be non-negative, got {n}")
    xi = rng.standard_normal(2)
    scale = math.sqrt(n)
    return float(scale * xi[0]), float(scale * xi[1])


def ou_coefficient(coherence_ratio: float) -> float:
    """Lag-one correlation between consecutive shots."""
    if coherence_ratio < 0:
        raise ValueError(f"coherence_ratio must be >= 0, got {coherence_ratio}")
    return math.exp(-coherence_ratio)


def sample_thermal_displacement_correlated(n: float, coherence_ratio: float,
                                           prev: Tuple[float, float],
                                           rng: np.random.Generator) -> Tuple[float, float]:
    """
    Ornstein-Uhlenbeck step of the thermal random walk.

    The stationary distribution is the one of sample_thermal_displacement();
    coherence_ratio = 0 freezes the field, infinity makes shots independent.
    """
    if n < 0:
        raise ValueError(f"photon number must be non-negative, got {n}")
    rho = ou_coefficient(coherence_ratio)
    xi = rng.standard_normal(2)
    kick = math.sqrt(n * (1.0 - rho * rho))
    return float(prev[0] * rho + kick * xi[0]), float(prev[1] * rho + kick * xi[1])


def measure(scenario: SplitScenario, x: ArrayOrFloat, p: ArrayOrFloat,
            alice_noise: ArrayOrFloat, eve_noise_x: ArrayOrFloat,
            eve_noise_p: ArrayOrFloat) -> Tuple[ArrayOrFloat, ArrayOrFloat, ArrayOrFloat]:
    """
    Detection model shared by the scalar and the vectorized shot paths.

    The noise arguments are standard normal draws. Alice's homodyne adds
    vacuum noise of variance 0.5·f; Eve's heterodyne adds variance f per
    quadrature (her mode's vacuum plus the heterodyne penalty). Eve sits in
    the port with X_E = -t·X_th + r·X_vac.
    """
    f = scenario.electronic_noise_factor
    phi = scenario.alice_phase
    alice_raw = scenario.r * (x * math.cos(phi) + p * math.sin(phi)) + math.sqrt(VACUUM_VARIANCE * f) * alice_noise
    eve_sd = math.sqrt(f)
    eve_x = -scenario.t * x + eve_sd * eve_noise_x
    eve_p = -scenario.t * p + eve_sd * eve_noise_p
    return alice_raw, eve_x, eve_p


def run_shot(scenario: SplitScenario, displacement: Tuple[float, float],
             rng: np.random.Generator) -> ShotRecord:
    """
    Simulate one shot for a given thermal displacement.

    Args:
        scenario: Split configuration
        displacement: (x, p) coherent displacement of the thermal field before the splitter
        rng: Random stream for the detection noise

    Returns:
        ShotRecord with Alice's outcome and bin plus Eve's heterodyne pair
    """
    noise = rng.standard_normal(3)
    x, p = displacement
    alice_raw, eve_x, eve_p = measure(scenario, x, p, noise[0], noise[1], noise[2])
    return ShotRecord(
        signal_x=float(x),
        signal_p=float(p),
        alice_raw=float(alice_raw),
        alice_bin=quantize(float(alice_raw), scenario.binning),
        eve_x=float(eve_x),
        eve_p=float(eve_p),
    )


def replace_scenario(scenario: SplitScenario, **changes) -> SplitScenario:
    """dataclasses.replace with validation, kept here so callers need one import."""
    from dataclasses import replace
    return replace(scenario, **changes)


def describe(scenario: SplitScenario, label: Optional[str] = None) -> str:
    """Short human-readable summary for log lines."""
    prefix = f"{label}: " if label else ""
    return (f"{prefix}n_eve={scenario.n_eve:.3f} n_alice={scenario.n_alice:.3f} "
            f"phi={scenario.alice_phase:.3f} f={scenario.electronic_noise_factor:.3f} "
            f"shots={scenario.shots} seed={scenario.seed}")
