"""
Orchestrates the experiments: splitting-ratio sweep, fixed-n_alice sweep,
extraction with the statistical battery, single scenarios and replay.
"""
import logging
import math
import os
import tempfile
from dataclasses import asdict, dataclass, fields
from typing import Dict, List, Optional

import numpy as np

from eavesdropper import AttackResult, run_attack, theoretical_conditional, unconditional_marginal
from entropy_metrics import expected_guesswork, iid_guesswork, min_entropy
from experiment_config import REFERENCE_SPLITS, ConfigError, ExperimentConfig
from extraction import HashMatrix, extract_nibbles, merge_nibbles, merged_attack, to_bits
from nist_battery import TestReport, battery_passed, run_battery
from phase_space import SplitScenario
from run_store import RunStore, compare_inventories, load_manifest, utc_now, verify_outputs
from shot_generator import dump_records

logger = logging.getLogger(__name__)

COMMANDS = ("sweep-table2", "fig3", "extract-test", "single")

BATTERY_HEADERS = ["test_name", "status", "p_value", "passed", "bits_consumed"]


@dataclass(frozen=True)
class MetricsRow:
    """One line of a metrics file: empirical values next to the analytic ones."""
    n_eve: float
    n_alice: float
    ratio: float
    h_min_unconditional: float
    h_min_conditional: float
    h_min_theory_unconditional: float
    h_min_theory_conditional: float
    guesswork_unconditional: float
    guesswork_conditional: float
    iid_worstcase_unconditional: float
    iid_worstcase_conditional: float
    g_ind: float
    g_merged: float
    guesswork_theory_unconditional: float = math.nan
    guesswork_theory_conditional: float = math.nan
    h_min_conditional_ci_low: float = math.nan
    h_min_conditional_ci_high: float = math.nan
    shots: int = 0

    @classmethod
    def headers(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass(frozen=True)
class ReplayVerdict:
    ok: bool
    divergent: List[str]
    checked: int


def describe_scenario(scenario: SplitScenario) -> Dict:
    """JSON-safe scenario summary for the manifest."""
    return {
        "n_eve": scenario.n_eve,
        "n_alice": scenario.n_alice,
        "n_total": scenario.n_total,
        "t_sq": scenario.t_sq,
        "alice_phase": scenario.alice_phase,
        "electronic_noise_factor": scenario.electronic_noise_factor,
        "coherence_ratio": "inf" if math.isinf(scenario.coherence_ratio) else scenario.coherence_ratio,
        "shots": scenario.shots,
        "seed": scenario.seed,
    }


def injected_stream(mode: str, length: int) -> np.ndarray:
    """Deliberately broken bitstreams for demonstrating battery failures."""
    if mode == "zeros":
        return np.zeros(length, dtype=np.uint8)
    if mode == "alternating":
        return (np.arange(length) % 2).astype(np.uint8)
    raise ConfigError("inject", f"unknown mode {mode!r}")


class ExperimentService:
    """
    Runs one experiment command and records its outputs.

    Every sweep row reuses the master seed, so rows differ by the scenario
    rather than by sampling noise.
    """

    def __init__(self, config: ExperimentConfig):
        self.config = config.validate()
        self.matrix = HashMatrix.random(config.matrix_seed, config.hash_rows, config.hash_cols)
        self.scenarios: List[Dict] = []

    def run_dir_for(self, command: str) -> str:
        return os.path.join(self.config.out_dir, command)

    def attack(self, scenario: SplitScenario) -> AttackResult:
        self.scenarios.append(describe_scenario(scenario))
        return run_attack(scenario, workers=self.config.workers)

    def metrics_row(self, result: AttackResult, with_merged: bool = True) -> MetricsRow:
        """
        Summarize one attacked scenario.

        Args:
            result: Output of run_attack
            with_merged: Also run the merged-number comparison on the extracted bytes

        Returns:
            MetricsRow
        """
        scenario = result.scenario
        summary = result.tally().summary()
        marginal = unconditional_marginal(scenario)
        h_theory_c, g_theory_c = theoretical_conditional(scenario)

        g_ind = g_merged = math.nan
        if with_merged:
            if scenario.binning.bin_count == 256:
                merged = merged_attack(result, self.matrix)
                g_ind, g_merged = merged.g_ind, merged.g_merged
            else:
                logger.warning(f"⚠️ Skipping merged attack: needs 256 bins, have {scenario.binning.bin_count}")

        estimate = summary.conditional_estimate
        row = MetricsRow(
            n_eve=scenario.n_eve,
            n_alice=scenario.n_alice,
            ratio=scenario.ratio,
            h_min_unconditional=summary.h_min_unconditional,
            h_min_conditional=summary.h_min_conditional,
            h_min_theory_unconditional=min_entropy(marginal),
            h_min_theory_conditional=h_theory_c,
            guesswork_unconditional=summary.guesswork_unconditional,
            guesswork_conditional=summary.guesswork_conditional,
            iid_worstcase_unconditional=iid_guesswork(summary.h_min_unconditional),
            iid_worstcase_conditional=iid_guesswork(summary.h_min_conditional),
            g_ind=g_ind,
            g_merged=g_merged,
            guesswork_theory_unconditional=expected_guesswork(marginal),
            guesswork_theory_conditional=g_theory_c,
            h_min_conditional_ci_low=estimate.ci_low,
            h_min_conditional_ci_high=estimate.ci_high,
            shots=summary.shots,
        )
        logger.info(f"📊 n_eve={row.n_eve:.2f} n_alice={row.n_alice:.2f}: "
                     f"H_min {row.h_min_unconditional:.3f} -> {row.h_min_conditional:.3f} bits, "
                     f"<G> {row.guesswork_unconditional:.2f} -> {row.guesswork_conditional:.2f}")
        return row

    def sweep_table2(self, store: RunStore) -> List[MetricsRow]:
        """All splitting ratios of the reference experiment."""
        rows = []
        for index, (n_eve, n_alice) in enumerate(REFERENCE_SPLITS, start=1):
            logger.info(f"🔧 Row {index}/{len(REFERENCE_SPLITS)}")
            rows.append(self.metrics_row(self.attack(self.config.scenario(n_eve, n_alice))))
        store.write_csv("table2_metrics.csv", MetricsRow.headers(), [r.to_dict() for r in rows])
        return rows

    def fig3_grid(self) -> np.ndarray:
        c = self.config
        return np.geomspace(c.fig3_n_eve_min, c.fig3_n_eve_max, c.fig3_points)

    def fig3(self, store: RunStore) -> List[MetricsRow]:
        """Conditional min-entropy against n_eve at fixed n_alice."""
        rows = []
        for n_eve in self.fig3_grid():
            scenario = self.config.scenario(float(n_eve), self.config.fig3_n_alice)
            rows.append(self.metrics_row(self.attack(scenario), with_merged=False))
        store.write_csv("fig3_metrics.csv", MetricsRow.headers(), [r.to_dict() for r in rows])
        return rows

    def _dump_shots(self, store: RunStore, result: AttackResult):
        if self.config.dump_shots:
            store.write_bytes("shots.bin", dump_records(result.batch, result.ranks), kind="shot-dump")

    def extract_and_test(self, store: RunStore) -> List[TestReport]:
        """
        Hash the biased bins of one scenario, merge them into bytes and run
        the statistical battery on the resulting bits.
        """
        c = self.config
        if c.bin_count != 256:
            raise ConfigError("bin_count", "extraction needs 8-bit samples (bin_count = 256)")
        result = self.attack(c.scenario(c.n_eve, c.n_alice))
        merged = merge_nibbles(extract_nibbles(result.batch.alice_bin, self.matrix))
        bits = to_bits(merged)
        if c.inject:
            logger.warning(f"⚠️ Replacing the extracted stream with injected '{c.inject}' bits")
            bits = injected_stream(c.inject, bits.size)
            merged = np.packbits(bits)

        store.write_bytes("bitstream.bin", merged, kind="bitstream")
        store.write_json("hash_matrix.json", self.matrix.to_dict())
        reports = run_battery(bits, c.significance, workers=min(7, max(1, c.workers)))
        store.write_csv("battery.csv", BATTERY_HEADERS, [
            {k: r.to_dict()[k] for k in BATTERY_HEADERS} for r in reports
        ])
        row = self.metrics_row(result)
        store.write_csv("extract_metrics.csv", MetricsRow.headers(), [row.to_dict()])
        self._dump_shots(store, result)
        if battery_passed(reports):
            logger.info("✅ Extracted stream passed every test")
        else:
            logger.warning("❌ Extracted stream failed at least one test")
        return reports

    def single(self, store: RunStore) -> MetricsRow:
        """One scenario, one metrics row, optional raw shot dump."""
        c = self.config
        result = self.attack(c.scenario(c.n_eve, c.n_alice))
        row = self.metrics_row(result, with_merged=c.bin_count == 256)
        store.write_csv("single_metrics.csv", MetricsRow.headers(), [row.to_dict()])
        self._dump_shots(store, result)
        return row

    def run(self, command: str, run_dir: Optional[str] = None) -> RunStore:
        """
        Execute a command and write its manifest.

        Args:
            command: One of COMMANDS
            run_dir: Output directory (defaults to <out_dir>/<command>)

        Returns:
            RunStore holding the written outputs
        """
        if command not in COMMANDS:
            raise ConfigError("command", f"unknown command {command!r}")
        started_at = utc_now()
        store = RunStore(run_dir or self.run_dir_for(command))
        self.scenarios = []
        handler = {
            "sweep-table2": self.sweep_table2,
            "fig3": self.fig3,
            "extract-test": self.extract_and_test,
            "single": self.single,
        }[command]
        outcome = handler(store)
        extra = {"hash_matrix": self.matrix.to_dict()}
        if command == "extract-test":
            extra["battery"] = [r.to_dict() for r in outcome]
        store.write_manifest(command, self.config.to_dict(), self.scenarios, started_at, extra)
        return store


def replay(manifest_path: str, workers: Optional[int] = None) -> ReplayVerdict:
    """
    Verify a finished run.

    Checks the digests of the files next to the manifest, then re-runs the
    recorded command from the recorded config in a scratch directory and
    compares the fresh digests with the manifest's.

    Args:
        manifest_path: manifest.json or its run directory
        workers: Worker count for the re-run; outputs must not depend on it

    Returns:
        ReplayVerdict listing every divergent file name
    """
    manifest = load_manifest(manifest_path)
    run_dir = manifest_path if os.path.isdir(manifest_path) else os.path.dirname(manifest_path) or "."
    divergent = set(verify_outputs(manifest, run_dir))

    config = ExperimentConfig.from_dict(manifest["config"])
    with tempfile.TemporaryDirectory(prefix="qrng-replay-") as scratch:
        overrides = {"out_dir": scratch}
        if workers is not None:
            overrides["workers"] = workers
        config = config.with_overrides(**overrides)
        logger.info(f"🔁 Re-running '{manifest['command']}' with {config.workers} worker(s)")
        store = ExperimentService(config).run(manifest["command"], run_dir=scratch)
        divergent.update(compare_inventories(manifest["outputs"], store.inventory()))

    verdict = ReplayVerdict(ok=not divergent, divergent=sorted(divergent), checked=len(manifest["outputs"]))
    if verdict.ok:
        logger.info(f"✅ Replay matched all {verdict.checked} outputs")
    else:
        logger.error(f"❌ Replay diverged: {', '.join(verdict.divergent)}")
    return verdict
