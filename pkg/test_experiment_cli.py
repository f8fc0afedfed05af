#!/usr/bin/env python3
"""
Tests for configuration, the experiment commands and replay
"""

import csv
import json
import math
import os
import sys

import pytest
from scipy.stats import spearmanr

from app import main
from experiment_config import (
    ENV_KEYS,
    FULL_SCALE_SHOTS,
    REFERENCE_SPLITS,
    ConfigError,
    ExperimentConfig,
    resolve_config,
)
from experiment_service import ExperimentService, MetricsRow, replay
from run_store import MANIFEST_NAME, load_manifest
from setup_env import create_env_template
from shot_generator import SHOTS_PER_BLOCK


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    for variable in ENV_KEYS.values():
        monkeypatch.delenv(variable, raising=False)


def read_csv(path: str):
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


def test_defaults_are_valid():
    config = resolve_config()
    assert config == ExperimentConfig()
    assert config.hash_rows == 16 and config.hash_cols == 32
    assert math.isinf(config.coherence_ratio)


def test_precedence_cli_over_json_over_env(tmp_path, monkeypatch):
    monkeypatch.setenv("QRNG_SEED", "5")
    monkeypatch.setenv("QRNG_SHOTS", "1000")
    monkeypatch.setenv("QRNG_WORKERS", "3")
    document = tmp_path / "config.json"
    document.write_text(json.dumps({"shots": 2000, "n_eve": 1.5}))
    config = resolve_config({"shots": 3000, "seed": None}, str(document))
    assert config.shots == 3000
    assert config.seed == 5
    assert config.workers == 3
    assert config.n_eve == 1.5


def test_paper_scale_unless_shots_given(tmp_path, monkeypatch):
    assert resolve_config({"paper_scale": True}).shots == FULL_SCALE_SHOTS
    assert resolve_config({"paper_scale": True, "shots": 500}).shots == 500

    document = tmp_path / "config.json"
    document.write_text(json.dumps({"shots": 700}))
    assert resolve_config({"paper_scale": True}, str(document)).shots == 700
    monkeypatch.setenv("QRNG_SHOTS", "900")
    assert resolve_config({"paper_scale": True}).shots == 900
    assert resolve_config({"paper_scale": True}, str(document)).shots == 700


def test_bad_values_name_their_key(tmp_path, monkeypatch):
    with pytest.raises(ConfigError) as info:
        resolve_config({"shots": 1})
    assert info.value.key == "shots"

    document = tmp_path / "config.json"
    document.write_text(json.dumps({"shot": 10}))
    with pytest.raises(ConfigError) as info:
        resolve_config(config_path=str(document))
    assert info.value.key == "shot"

    monkeypatch.setenv("QRNG_ELECTRONIC_NOISE", "0.5")
    with pytest.raises(ConfigError) as info:
        resolve_config()
    assert info.value.key == "electronic_noise"


def test_config_dict_round_trip():
    config = ExperimentConfig(seed=9, shots=100, coherence_ratio=math.inf)
    data = json.loads(json.dumps(config.to_dict()))
    assert data["coherence_ratio"] == "inf"
    assert ExperimentConfig.from_dict(data) == config


def test_main_exit_code_for_bad_config(tmp_path):
    assert main(["single", "--shots", "1", "--out-dir", str(tmp_path)]) == 2
    assert main(["single", "--electronic-noise", "0.2", "--out-dir", str(tmp_path)]) == 2


def test_single_command_writes_metrics_and_manifest(tmp_path):
    code = main(["single", "--n-eve", "7.09", "--n-alice", "2.28", "--shots", "20000",
                 "--seed", "3", "--dump-shots", "--out-dir", str(tmp_path)])
    assert code == 0
    run_dir = tmp_path / "single"
    rows = read_csv(str(run_dir / "single_metrics.csv"))
    assert len(rows) == 1
    assert list(rows[0]) == MetricsRow.headers()
    row = rows[0]
    assert float(row["h_min_conditional"]) < float(row["h_min_unconditional"])
    assert float(row["h_min_theory_conditional"]) == pytest.approx(float(row["h_min_conditional"]), abs=0.15)
    assert (run_dir / "shots.bin").stat().st_size == 20000 * 35
    assert (run_dir / "run.log").exists()

    manifest = load_manifest(str(run_dir))
    assert manifest["command"] == "single"
    assert manifest["seed"] == 3
    assert manifest["shots"] == 20000
    assert {e["name"] for e in manifest["outputs"]} == {"single_metrics.csv", "shots.bin"}
    assert manifest["scenarios"][0]["n_eve"] == pytest.approx(7.09)


def test_extract_test_passes_on_thermal_light(tmp_path):
    config = ExperimentConfig(shots=400_000, seed=4, out_dir=str(tmp_path))
    store = ExperimentService(config).run("extract-test")
    battery = read_csv(store.path("battery.csv"))
    assert [r["test_name"] for r in battery] == [
        "Frequency", "BlockFrequency", "Runs", "LongestRun", "CumulativeSums", "Serial", "ApproximateEntropy"]
    passed = sum(r["status"] == "passed" for r in battery)
    assert passed >= 6
    assert os.path.getsize(store.path("bitstream.bin")) == 400_000 // 2
    metrics = read_csv(store.path("extract_metrics.csv"))[0]
    assert float(metrics["g_merged"]) == pytest.approx(128.5, abs=2.0)


def test_injected_zeros_fail_the_battery(tmp_path):
    code = main(["extract-test", "--inject", "zeros", "--shots", "4000", "--out-dir", str(tmp_path)])
    assert code == 0
    battery = {r["test_name"]: r for r in read_csv(str(tmp_path / "extract-test" / "battery.csv"))}
    assert battery["Frequency"]["status"] == "failed"
    manifest = load_manifest(str(tmp_path / "extract-test"))
    assert manifest["config"]["inject"] == "zeros"
    frequency = next(r for r in manifest["battery"] if r["test_name"] == "Frequency")
    assert not frequency["passed"]


def test_sweep_table2_shape(tmp_path):
    config = ExperimentConfig(shots=4000, seed=2, out_dir=str(tmp_path))
    store = ExperimentService(config).run("sweep-table2")
    table = read_csv(store.path("table2_metrics.csv"))
    assert len(table) == len(REFERENCE_SPLITS)
    for line, (n_eve, n_alice) in zip(table, REFERENCE_SPLITS):
        assert float(line["n_eve"]) == pytest.approx(n_eve)
        assert float(line["n_alice"]) == pytest.approx(n_alice)
        assert float(line["guesswork_conditional"]) <= float(line["guesswork_unconditional"]) + 1.0
    manifest = load_manifest(store.path(MANIFEST_NAME))
    assert len(manifest["scenarios"]) == len(REFERENCE_SPLITS)


def test_reference_sweep_relations_at_full_shot_count(tmp_path):
    config = ExperimentConfig(shots=200_000, seed=6, out_dir=str(tmp_path))
    store = ExperimentService(config).run("sweep-table2")
    table = [{k: float(v) for k, v in line.items()} for line in read_csv(store.path("table2_metrics.csv"))]
    assert len(table) == len(REFERENCE_SPLITS)

    # side information never adds entropy
    for line in table:
        assert line["h_min_conditional"] <= line["h_min_unconditional"], line["ratio"]

    # rows are listed with n_alice falling, so unconditional H_min falls too
    unconditional = [line["h_min_unconditional"] for line in table]
    assert all(later <= earlier + 0.05 for earlier, later in zip(unconditional, unconditional[1:]))
    assert spearmanr([line["n_alice"] for line in table], unconditional).correlation > 0.95

    balanced = next(line for line in table if line["ratio"] == pytest.approx(5.58 / 5.12))
    assert 0.7 <= balanced["h_min_unconditional"] - balanced["h_min_conditional"] <= 1.3

    for line in table:
        assert line["iid_worstcase_unconditional"] <= line["guesswork_unconditional"]
        assert line["iid_worstcase_conditional"] <= line["guesswork_conditional"]
        assert line["guesswork_conditional"] >= 7.82
        if 0.8 <= line["ratio"] <= 1.1:
            assert line["guesswork_conditional"] <= 0.6 * line["guesswork_unconditional"]

    # extraction hides the side information; the joint guess gets easier as Eve's share grows
    for line in table:
        if line["h_min_conditional"] >= 4.0:
            assert line["g_merged"] == pytest.approx(128.5, abs=1.5)
        if line["ratio"] <= 2.0:
            assert line["g_ind"] >= 128.5
    joint = [line["g_ind"] for line in table]
    assert joint == sorted(joint, reverse=True)
    assert joint[-1] < 128.5 < joint[0]


def test_sweep_rows_match_their_oracles(tmp_path):
    service = ExperimentService(ExperimentConfig(shots=200_000, seed=6, out_dir=str(tmp_path)))
    strong = service.metrics_row(service.attack(service.config.scenario(1.04, 14.60)), with_merged=False)
    oracle = -math.log2(0.15625 / math.sqrt(2 * math.pi * 15.10))
    assert strong.h_min_theory_unconditional == pytest.approx(oracle, abs=0.03)
    assert strong.h_min_unconditional == pytest.approx(oracle, abs=0.1)

    weak = service.metrics_row(service.attack(service.config.scenario(8.05, 0.22)), with_merged=False)
    assert weak.h_min_conditional == pytest.approx(3.51, abs=0.1)
    assert weak.ratio == pytest.approx(8.05 / 0.22)

    no_eve = service.metrics_row(service.attack(service.config.scenario(0.0, 5.0)), with_merged=False)
    assert no_eve.h_min_conditional == no_eve.h_min_unconditional


def test_fig3_grid_and_monotone_theory(tmp_path):
    config = ExperimentConfig(shots=4000, fig3_points=6, out_dir=str(tmp_path))
    service = ExperimentService(config)
    grid = service.fig3_grid()
    assert grid[0] == pytest.approx(0.01) and grid[-1] == pytest.approx(500.0)
    store = service.run("fig3")
    table = read_csv(store.path("fig3_metrics.csv"))
    theory = [float(line["h_min_theory_conditional"]) for line in table]
    assert theory == sorted(theory, reverse=True)
    assert all(line["g_merged"] == "nan" for line in table)


@pytest.mark.parametrize("workers", [1, 4, 8])
def test_replay_matches_across_worker_counts(tmp_path, workers):
    config = ExperimentConfig(shots=SHOTS_PER_BLOCK + 4000, seed=77, out_dir=str(tmp_path), dump_shots=True)
    store = ExperimentService(config).run("single")
    verdict = replay(store.path(MANIFEST_NAME), workers=workers)
    assert verdict.ok, verdict.divergent
    assert verdict.checked == 2


def test_replay_names_corrupted_file(tmp_path):
    assert main(["single", "--shots", "5000", "--dump-shots", "--out-dir", str(tmp_path)]) == 0
    run_dir = tmp_path / "single"
    with open(run_dir / "shots.bin", "r+b") as handle:
        handle.seek(40)
        byte = handle.read(1)
        handle.seek(40)
        handle.write(bytes([byte[0] ^ 0xFF]))
    verdict = replay(str(run_dir))
    assert not verdict.ok
    assert verdict.divergent == ["shots.bin"]
    assert main(["replay", str(run_dir / MANIFEST_NAME)]) == 1


def test_replay_detects_changed_seed(tmp_path):
    config = ExperimentConfig(shots=5000, seed=1, out_dir=str(tmp_path))
    store = ExperimentService(config).run("single")
    path = store.path(MANIFEST_NAME)
    with open(path, encoding="utf-8") as handle:
        manifest = json.load(handle)
    manifest["config"]["seed"] = 2
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(manifest, handle)
    verdict = replay(path)
    assert not verdict.ok
    assert "single_metrics.csv" in verdict.divergent


def test_replay_command_passes_on_untouched_run(tmp_path):
    assert main(["single", "--shots", "3000", "--out-dir", str(tmp_path)]) == 0
    assert main(["replay", str(tmp_path / "single"), "--workers", "2"]) == 0


def test_injected_alternating_stream_fails_runs(tmp_path):
    config = ExperimentConfig(shots=4000, inject="alternating", out_dir=str(tmp_path))
    store = ExperimentService(config).run("extract-test")
    battery = {r["test_name"]: r for r in read_csv(store.path("battery.csv"))}
    assert battery["Frequency"]["status"] == "passed"
    assert battery["Runs"]["status"] == "failed"


def test_env_template_lists_every_variable(tmp_path):
    path = tmp_path / ".env.template"
    create_env_template(str(path))
    lines = path.read_text().splitlines()
    for key, variable in ENV_KEYS.items():
        assert any(line.startswith(f"{variable}=") for line in lines), key
    assert "QRNG_COHERENCE_RATIO=inf" in lines


if __name__ == "__main__":
    # these tests need pytest fixtures (tmp_path, monkeypatch)
    sys.exit(pytest.main([__file__, "-v"]))
