"""End-to-end orchestration of the two-stage run plus its ablation modes.

Mode ``full`` runs bandit task selection and then GP ratio search over the
survivors.  Mode ``no_stage1`` skips selection and searches ratios over all
tasks.  Mode ``no_stage2`` keeps selection but replaces the GP with a
manually enumerated ratio grid of the same evaluation budget.  Every mode
also trains the primary-only baseline, which is the one evaluation outside
the stage-2 budget.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .bandit import (
    BanditConfig,
    BetaArm,
    TaskSelection,
    expected_utility,
    initial_arms,
    run_stage1,
    utility_density_table,
)
from .environments import make_environment
from .mixing import (
    EvaluationRecord,
    MixingRatio,
    Stage2Config,
    expand_to_tasks,
    run_stage2,
    validate_ratio,
)
from .runlog import RunAborted, RunLog, derive_seed, jsonable, make_header

PIPELINE_MODES = ("full", "no_stage1", "no_stage2")


@dataclass(frozen=True)
class PipelineConfig:
    """Everything one run needs: stage knobs, mode, and the environment recipe."""

    bandit: BanditConfig
    stage2: Stage2Config
    environment: dict
    mode: str = "full"
    output_dir: str | None = None
    normalized: dict | None = None

    def __post_init__(self):
        if self.mode not in PIPELINE_MODES:
            raise ValueError(f"mode must be one of {PIPELINE_MODES}, got {self.mode!r}")
        if self.bandit.primary_task_id != 0:
            raise ValueError(
                "the synthetic environments define task 0 as primary; "
                f"primary_task_id must be 0, got {self.bandit.primary_task_id}"
            )


@dataclass(frozen=True)
class PipelineReport:
    """Final outcome of one pipeline run, with both stage logs attached."""

    mode: str
    selection: TaskSelection
    final_arms: tuple[tuple[float, float], ...]
    best_ratio: MixingRatio
    best_score: float
    baseline_score: float
    n_evaluations: int
    evaluations: tuple[EvaluationRecord, ...]
    stage1_log: RunLog
    stage2_log: RunLog
    config: dict | None


def manual_ratio_grid(n_aux: int, budget: int, ratio_max: int) -> list[MixingRatio]:
    """Deterministic hand-tuning grid with exactly ``budget`` entries.

    One auxiliary: primary fixed at 1, auxiliary count walking 1, 2, ... up
    the budget (capped at ``ratio_max``).  Two or more auxiliaries: primary
    fixed at 10 with auxiliary counts drawn from the lattice {0, 5, 10, 20}
    in lexicographic order, cycled or truncated to the budget.
    """
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    if n_aux == 0:
        ratios = [MixingRatio((min(j + 1, ratio_max),)) for j in range(budget)]
        return ratios
    if n_aux == 1:
        return [MixingRatio((1, min(j + 1, ratio_max))) for j in range(budget)]
    levels = [lv for lv in (0, 5, 10, 20) if lv <= ratio_max]
    lattice = [[]]
    for _ in range(n_aux):
        lattice = [combo + [lv] for combo in lattice for lv in levels]
    primary = min(10, ratio_max)
    ratios = []
    for j in range(budget):
        combo = lattice[j % len(lattice)]
        ratios.append(MixingRatio(tuple([primary] + combo)))
    return ratios


def _all_task_selection(config: BanditConfig) -> TaskSelection:
    """Selection covering every task (primary first), utilities from the priors."""
    arms = initial_arms(config)
    aux = [k for k in range(config.n_tasks) if k != config.primary_task_id]
    return TaskSelection(
        selected_task_ids=tuple([config.primary_task_id] + aux),
        expected_utilities=tuple(expected_utility(a) for a in arms),
    )


def _arms_from_log(log: RunLog, config: BanditConfig) -> tuple[tuple[float, float], ...]:
    if log.records:
        return tuple((a, b) for a, b in log.records[-1]["arms_after"])
    return tuple((arm.alpha, arm.beta) for arm in initial_arms(config))


def _grid_stage2(
    env, tasks: TaskSelection, config: Stage2Config
) -> tuple[EvaluationRecord, list[EvaluationRecord], RunLog]:
    """Evaluate the manual grid under the same seed protocol as the GP loop."""
    grid = manual_ratio_grid(len(tasks.selected_task_ids) - 1, config.n_samples, config.ratio_max)
    records: list[EvaluationRecord] = []
    log = RunLog()
    best_score = -math.inf
    for t, ratio in enumerate(grid):
        validate_ratio(ratio, config.ratio_max)
        seed = derive_seed(config.rng_seed, "eval", t)
        env_ratio = expand_to_tasks(ratio, tasks.selected_task_ids, env.n_tasks)
        try:
            score = float(env.train_full(env_ratio, seed))
        except Exception as exc:
            raise RunAborted(
                f"environment failed at grid round {t}: {exc}", log=log, records=records
            ) from exc
        records.append(EvaluationRecord(ratio=ratio, score=score, seed=seed))
        best_score = max(best_score, score)
        log.append(
            round=t,
            proposed_ratio=list(ratio.counts),
            acquisition_used="grid",
            posterior_mean=None,
            posterior_std=None,
            score=score,
            incumbent=best_score,
        )
    best = max(records, key=lambda r: r.score)
    return best, records, log


def run_pipeline(config: PipelineConfig) -> PipelineReport:
    """Execute one full run and return its report.

    The baseline (primary-only ratio) is always trained, under a seed
    derived from ``(stage2.rng_seed, "baseline")``, so stage-2 scores and
    the baseline are comparable across modes and seeds.

    Raises
    ------
    RunAborted
        On environment failure, with ``stage_logs`` holding every partial
        per-stage log accumulated so far.
    """
    env = make_environment(config.environment, config.bandit.batches_per_round)
    if env.n_tasks != config.bandit.n_tasks:
        raise ValueError(
            f"environment has {env.n_tasks} tasks but bandit config says {config.bandit.n_tasks}"
        )

    if config.mode == "no_stage1":
        selection = _all_task_selection(config.bandit)
        stage1_log = RunLog()
    else:
        try:
            selection, stage1_log = run_stage1(env, config.bandit)
        except RunAborted as exc:
            exc.stage_logs = {"stage1": exc.log, "stage2": RunLog()}
            raise

    try:
        if config.mode == "no_stage2":
            best, records, stage2_log = _grid_stage2(env, selection, config.stage2)
        else:
            best, records, stage2_log = run_stage2(env, selection, config.stage2)
    except RunAborted as exc:
        exc.stage_logs = {"stage1": stage1_log, "stage2": exc.log}
        raise

    baseline_ratio = MixingRatio(tuple([1] + [0] * (len(selection.selected_task_ids) - 1)))
    baseline_env_ratio = expand_to_tasks(
        baseline_ratio, selection.selected_task_ids, env.n_tasks
    )
    try:
        baseline_score = float(
            env.train_full(baseline_env_ratio, derive_seed(config.stage2.rng_seed, "baseline"))
        )
    except Exception as exc:
        raise RunAborted(
            f"environment failed on the baseline run: {exc}",
            log=stage2_log,
            records=records,
            stage_logs={"stage1": stage1_log, "stage2": stage2_log},
        ) from exc

    return PipelineReport(
        mode=config.mode,
        selection=selection,
        final_arms=_arms_from_log(stage1_log, config.bandit),
        best_ratio=best.ratio,
        best_score=best.score,
        baseline_score=baseline_score,
        n_evaluations=len(records),
        evaluations=tuple(records),
        stage1_log=stage1_log,
        stage2_log=stage2_log,
        config=config.normalized,
    )


def report_summary(report: PipelineReport) -> dict:
    """The report.json payload."""
    return jsonable(
        {
            "schema_version": 1,
            "mode": report.mode,
            "selected_tasks": list(report.selection.selected_task_ids),
            "expected_utilities": list(report.selection.expected_utilities),
            "best_ratio": list(report.best_ratio.counts),
            "best_score": report.best_score,
            "baseline_score": report.baseline_score,
            "n_evaluations": report.n_evaluations,
            "config": report.config,
        }
    )


def write_density_csv(
    arms: Sequence[BetaArm], path: str | Path, grid_size: int = 1000
) -> Path:
    """Write the per-task utility density table as ``task_id,theta,density``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = utility_density_table(arms, grid_size)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["task_id", "theta", "density"])
        for task_id, theta, density in rows:
            writer.writerow([task_id, repr(theta), repr(density)])
    return path


def write_outputs(
    report: PipelineReport, out_dir: str | Path, grid_size: int = 1000
) -> dict[str, Path]:
    """Persist report.json, both stage logs, and the density CSV.

    Returns the path of each artifact keyed by name.  Output is
    deterministic byte for byte given the report.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    report_path = out / "report.json"
    report_path.write_text(
        json.dumps(report_summary(report), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    stage1_header = make_header("stage1", report.config, final_arms=list(report.final_arms))
    stage1_path = report.stage1_log.write_jsonl(out / "stage1.log.jsonl", stage1_header)
    stage2_header = make_header("stage2", report.config)
    stage2_path = report.stage2_log.write_jsonl(out / "stage2.log.jsonl", stage2_header)

    arms = [BetaArm(alpha=a, beta=b, task_id=k) for k, (a, b) in enumerate(report.final_arms)]
    csv_path = write_density_csv(arms, out / "utilities.csv", grid_size)

    return {
        "report": report_path,
        "stage1_log": stage1_path,
        "stage2_log": stage2_path,
        "utilities": csv_path,
    }
