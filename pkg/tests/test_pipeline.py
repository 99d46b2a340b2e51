"""Pipeline orchestration: modes, budgets, reports, and artifacts."""

from __future__ import annotations

import json

import pytest

from auxmix.bandit import BanditConfig
from auxmix.mixing import MixingRatio, Stage2Config
from auxmix.pipeline import (
    PIPELINE_MODES,
    PipelineConfig,
    PipelineReport,
    manual_ratio_grid,
    report_summary,
    run_pipeline,
    write_outputs,
)
from auxmix.runlog import RunAborted, read_jsonl

PLANTED2 = {"family": "planted", "theta_star": [0.9, 0.1]}
PLANTED3 = {"family": "planted", "theta_star": [0.9, 0.8, 0.1]}


def make_config(mode="full", env=None, n_rounds=60, n_samples=8, n_initial=3, seed=0):
    env = env or PLANTED3
    n_tasks = len(env["theta_star"])
    return PipelineConfig(
        bandit=BanditConfig(n_tasks=n_tasks, n_rounds=n_rounds, rng_seed=seed),
        stage2=Stage2Config(n_samples=n_samples, n_initial=n_initial, rng_seed=seed),
        environment=env,
        mode=mode,
    )


# ----------------------------------------------------------- config guard

def test_pipeline_config_rejects_unknown_mode():
    with pytest.raises(ValueError, match="mode"):
        make_config(mode="stage3")


def test_pipeline_config_requires_primary_zero():
    with pytest.raises(ValueError, match="primary"):
        PipelineConfig(
            bandit=BanditConfig(n_tasks=3, primary_task_id=1),
            stage2=Stage2Config(),
            environment=PLANTED3,
        )


def test_pipeline_rejects_task_count_mismatch():
    cfg = PipelineConfig(
        bandit=BanditConfig(n_tasks=4),
        stage2=Stage2Config(n_samples=4, n_initial=2),
        environment=PLANTED3,
    )
    with pytest.raises(ValueError, match="tasks"):
        run_pipeline(cfg)


# ------------------------------------------------------------ manual grid

def test_manual_grid_single_aux_walks_upward():
    grid = manual_ratio_grid(1, 5, 20)
    assert [r.counts for r in grid] == [(1, 1), (1, 2), (1, 3), (1, 4), (1, 5)]


def test_manual_grid_single_aux_caps_at_ratio_max():
    grid = manual_ratio_grid(1, 25, 20)
    assert grid[-1].counts == (1, 20)
    assert len(grid) == 25


def test_manual_grid_multi_aux_lattice_lexicographic():
    grid = manual_ratio_grid(2, 6, 20)
    assert [r.counts for r in grid] == [
        (10, 0, 0),
        (10, 0, 5),
        (10, 0, 10),
        (10, 0, 20),
        (10, 5, 0),
        (10, 5, 5),
    ]


def test_manual_grid_cycles_past_lattice_end():
    grid = manual_ratio_grid(2, 17, 20)
    assert len(grid) == 17
    assert grid[16].counts == grid[0].counts  # 4^2 = 16 combos, then wrap


def test_manual_grid_budget_always_respected():
    for n_aux in (0, 1, 2, 3):
        for budget in (1, 7, 20):
            assert len(manual_ratio_grid(n_aux, budget, 20)) == budget


def test_manual_grid_rejects_empty_budget():
    with pytest.raises(ValueError):
        manual_ratio_grid(1, 0, 20)


# ------------------------------------------------------------------ modes

def test_full_mode_selects_and_optimizes():
    report = run_pipeline(make_config())
    assert report.mode == "full"
    assert report.selection.selected_task_ids[0] == 0
    assert report.n_evaluations == 8
    assert len(report.stage1_log.records) == 60
    assert len(report.stage2_log.records) == 8
    assert 0.0 <= report.best_score <= 1.0


def test_no_stage1_mode_keeps_every_task():
    report = run_pipeline(make_config(mode="no_stage1"))
    assert report.selection.selected_task_ids == (0, 1, 2)
    assert report.stage1_log.records == []
    assert report.final_arms == ((3.0, 1.0), (1.0, 1.0), (1.0, 1.0))


def test_no_stage2_mode_runs_the_manual_grid():
    report = run_pipeline(make_config(mode="no_stage2"))
    assert report.n_evaluations == 8
    used = {r["acquisition_used"] for r in report.stage2_log.records}
    assert used == {"grid"}
    assert len(report.stage1_log.records) == 60


def test_no_stage2_grid_matches_selection_width():
    report = run_pipeline(make_config(mode="no_stage2"))
    n_sel = len(report.selection.selected_task_ids)
    for rec in report.evaluations:
        assert rec.ratio.n_tasks == n_sel


# ------------------------------------------------------- budget accounting

class CountingPlanted:
    """Wrap the planted env class to count train_full calls."""

    calls = 0


def test_budget_is_n_samples_plus_baseline(monkeypatch):
    from auxmix import environments

    counter = {"train_full": 0}
    orig = environments.PlantedBanditEnv.train_full

    def counting(self, ratio, seed):
        counter["train_full"] += 1
        return orig(self, ratio, seed)

    monkeypatch.setattr(environments.PlantedBanditEnv, "train_full", counting)
    run_pipeline(make_config(n_samples=8))
    assert counter["train_full"] == 8 + 1


def test_baseline_is_primary_only_and_always_runs():
    seen = []
    from auxmix import environments

    orig = environments.PlantedBanditEnv.train_full

    class Spy(environments.PlantedBanditEnv):
        def train_full(self, ratio, seed):
            seen.append(ratio.counts)
            return orig(self, ratio, seed)

    import unittest.mock as mock

    with mock.patch.object(environments, "PlantedBanditEnv", Spy):
        for mode in PIPELINE_MODES:
            seen.clear()
            report = run_pipeline(make_config(mode=mode))
            assert seen[-1][0] == 1
            assert all(c == 0 for c in seen[-1][1:])
            assert 0.0 <= report.baseline_score <= 1.0


# ------------------------------------------------------------ determinism

def test_pipeline_is_deterministic():
    r1 = run_pipeline(make_config(seed=5))
    r2 = run_pipeline(make_config(seed=5))
    assert report_summary(r1) == report_summary(r2)
    assert r1.evaluations == r2.evaluations
    assert [x for x in r1.stage1_log.records] == [x for x in r2.stage1_log.records]


def test_pipeline_seed_changes_outcome():
    r1 = run_pipeline(make_config(seed=5))
    r2 = run_pipeline(make_config(seed=6))
    assert report_summary(r1) != report_summary(r2)


# ----------------------------------------------------------------- report

def test_report_summary_fields():
    report = run_pipeline(make_config())
    summary = report_summary(report)
    assert summary["schema_version"] == 1
    assert summary["mode"] == "full"
    assert summary["selected_tasks"][0] == 0
    assert len(summary["expected_utilities"]) == len(summary["selected_tasks"])
    assert summary["n_evaluations"] == 8
    assert isinstance(summary["best_ratio"], list)
    assert summary["config"] is None  # no normalized config attached here


def test_run_aborted_carries_stage_logs():
    class Bomb(Exception):
        pass

    from auxmix import environments

    orig = environments.PlantedBanditEnv.train_full
    calls = {"n": 0}

    def failing(self, ratio, seed):
        calls["n"] += 1
        if calls["n"] == 3:
            raise Bomb("meltdown")
        return orig(self, ratio, seed)

    import unittest.mock as mock

    with mock.patch.object(environments.PlantedBanditEnv, "train_full", failing):
        with pytest.raises(RunAborted) as info:
            run_pipeline(make_config())
    assert set(info.value.stage_logs) == {"stage1", "stage2"}
    assert len(info.value.stage_logs["stage1"].records) == 60
    assert len(info.value.stage_logs["stage2"].records) == 2


# -------------------------------------------------------------- artifacts

def test_write_outputs_produces_all_artifacts(tmp_path):
    report = run_pipeline(make_config())
    paths = write_outputs(report, tmp_path / "run", grid_size=50)
    assert set(paths) == {"report", "stage1_log", "stage2_log", "utilities"}
    for p in paths.values():
        assert p.exists()

    payload = json.loads(paths["report"].read_text())
    assert payload == report_summary(report)

    header, records = read_jsonl(paths["stage1_log"])
    assert header["kind"] == "stage1"
    assert header["schema_version"] == 1
    assert "final_arms" in header
    assert len(records) == 60

    header2, records2 = read_jsonl(paths["stage2_log"])
    assert header2["kind"] == "stage2"
    assert len(records2) == 8

    lines = paths["utilities"].read_text().strip().split("\n")
    assert lines[0] == "task_id,theta,density"
    assert len(lines) == 1 + 3 * 50


def test_write_outputs_is_byte_deterministic(tmp_path):
    report = run_pipeline(make_config(seed=3))
    p1 = write_outputs(report, tmp_path / "a")
    p2 = write_outputs(report, tmp_path / "b")
    for key in p1:
        assert p1[key].read_bytes() == p2[key].read_bytes()


def test_full_mode_drops_harmful_task_from_high_count():
    """On a sharply planted environment the selected ratio should not load
    the harmful task heavily; full mode's best configuration beats the
    all-task grid's worst case."""
    report = run_pipeline(make_config(n_rounds=120, n_samples=12, n_initial=4, seed=1))
    best = report.best_score
    assert best >= report.baseline_score - 0.05
