"""Command-line front end: run pipelines, replay logs, export density CSVs.

Subcommands: ``run``, ``plot-utilities``, ``replay``, ``validate-config``.
Exit codes: 0 success, 1 runtime failure (partial logs are kept), 2 usage or
config error.  The ``AUTOSEM_OUT`` environment variable overrides the output
root; an explicit ``--out`` beats both it and the config file.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .bandit import BetaArm
from .config import ConfigError, dump_config, load_config, to_pipeline_config
from .pipeline import run_pipeline, write_density_csv, write_outputs
from .runlog import RunAborted, make_header, read_jsonl

OUTPUT_ROOT_ENV = "AUTOSEM_OUT"

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _parse_seed_range(text: str) -> tuple[int, int]:
    try:
        lo_text, hi_text = text.split("..", 1)
        lo, hi = int(lo_text), int(hi_text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected an inclusive range like 0..4, got {text!r}"
        ) from None
    if hi < lo:
        raise argparse.ArgumentTypeError(f"empty seed range {text!r}")
    return lo, hi


def _parse_override(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    key, value = text.split("=", 1)
    if not key:
        raise argparse.ArgumentTypeError(f"empty key in override {text!r}")
    return key, value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="auxmix",
        description="Two-stage auxiliary-task selection and mixing-ratio search.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a pipeline run from a config file")
    p_run.add_argument("config", help="path to the YAML run config")
    p_run.add_argument("--out", default=None, help="output directory for this run")
    p_run.add_argument(
        "--mode",
        choices=("full", "no_stage1", "no_stage2"),
        default=None,
        help="override the config's pipeline mode",
    )
    p_run.add_argument(
        "--set",
        dest="overrides",
        type=_parse_override,
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override any config key by dotted path, e.g. bandit.gamma=0.2",
    )
    p_run.add_argument(
        "--seeds",
        type=_parse_seed_range,
        default=None,
        metavar="A..B",
        help="run one pipeline per seed in the inclusive range, in parallel",
    )
    p_run.add_argument("--force", action="store_true", help="allow overwriting a non-empty run directory")
    p_run.add_argument("--grid-size", type=int, default=1000, help="theta grid for the density CSV")

    p_plot = sub.add_parser("plot-utilities", help="export the utility density table as CSV")
    p_plot.add_argument("runlog", help="stage-1 JSON-lines log")
    p_plot.add_argument("--grid-size", type=int, default=1000)
    p_plot.add_argument("--out", default=None, help="CSV path (default: utilities.csv next to the log)")

    p_replay = sub.add_parser("replay", help="re-execute a logged run and verify bit-identity")
    p_replay.add_argument("runlog", help="stage-1 or stage-2 JSON-lines log")

    p_val = sub.add_parser("validate-config", help="validate a config file and print its normalized form")
    p_val.add_argument("config", help="path to the YAML run config")

    return parser


def _resolve_run_dir(out_flag: str | None, output_dir: str | None, config_path: str) -> Path:
    if out_flag:
        return Path(out_flag)
    name = output_dir if output_dir else os.path.join("runs", Path(config_path).stem)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root:
        return Path(root) / name
    return Path(name)


def _write_partial_logs(exc: RunAborted, normalized: dict, run_dir: Path) -> None:
    stage1 = exc.stage_logs.get("stage1")
    stage2 = exc.stage_logs.get("stage2")
    if stage1 is not None:
        stage1.write_jsonl(run_dir / "stage1.log.jsonl", make_header("stage1", normalized))
    if stage2 is not None:
        stage2.write_jsonl(run_dir / "stage2.log.jsonl", make_header("stage2", normalized))


def _execute_run(normalized: dict, run_dir: Path, force: bool, grid_size: int) -> tuple[int, str]:
    if run_dir.exists() and any(run_dir.iterdir()) and not force:
        return EXIT_USAGE, f"refusing to overwrite non-empty {run_dir} (use --force)"
    try:
        report = run_pipeline(to_pipeline_config(normalized))
    except RunAborted as exc:
        run_dir.mkdir(parents=True, exist_ok=True)
        _write_partial_logs(exc, normalized, run_dir)
        return EXIT_RUNTIME, f"run aborted, partial logs kept in {run_dir}: {exc}"
    except Exception as exc:  # noqa: BLE001 - CLI boundary turns failures into exit codes
        return EXIT_RUNTIME, f"run failed: {exc}"
    paths = write_outputs(report, run_dir, grid_size)
    return EXIT_OK, (
        f"mode={report.mode} selected={list(report.selection.selected_task_ids)} "
        f"best_ratio={list(report.best_ratio.counts)} best_score={report.best_score:.4f} "
        f"baseline={report.baseline_score:.4f} -> {paths['report']}"
    )


def _run_one_seed(job: tuple) -> tuple[int, int, str]:
    normalized, seed, run_dir_text, force, grid_size = job
    from .config import apply_overrides, normalize  # local import keeps workers lean

    seeded = normalize(
        apply_overrides(normalized, {"bandit.rng_seed": str(seed), "stage2.rng_seed": str(seed)})
    )
    code, message = _execute_run(seeded, Path(run_dir_text), force, grid_size)
    return seed, code, message


def cmd_run(args: argparse.Namespace) -> int:
    overrides = dict(args.overrides)
    if args.mode:
        overrides["mode"] = args.mode
    try:
        normalized = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.grid_size < 1:
        print("error: --grid-size must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    run_dir = _resolve_run_dir(args.out, normalized["output_dir"], args.config)

    if args.seeds is None:
        code, message = _execute_run(normalized, run_dir, args.force, args.grid_size)
        print(message, file=sys.stderr if code else sys.stdout)
        return code

    lo, hi = args.seeds
    jobs = [
        (normalized, seed, str(run_dir / f"seed-{seed}"), args.force, args.grid_size)
        for seed in range(lo, hi + 1)
    ]
    worst = EXIT_OK
    with ProcessPoolExecutor() as pool:
        for seed, code, message in pool.map(_run_one_seed, jobs):
            print(f"[seed {seed}] {message}", file=sys.stderr if code else sys.stdout)
            worst = max(worst, code)
    return worst


def _arms_from_runlog(header: dict, records: list[dict]) -> list[BetaArm]:
    if records:
        raw = records[-1].get("arms_after")
    else:
        raw = header.get("final_arms")
    if not raw:
        raise ValueError("log contains no arm states")
    return [BetaArm(alpha=float(a), beta=float(b), task_id=k) for k, (a, b) in enumerate(raw)]


def cmd_plot_utilities(args: argparse.Namespace) -> int:
    if args.grid_size < 1:
        print("error: --grid-size must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        header, records = read_jsonl(args.runlog)
        arms = _arms_from_runlog(header, records)
    except (ValueError, TypeError, KeyError, OSError) as exc:
        print(f"error: malformed run log {args.runlog}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out) if args.out else Path(args.runlog).parent / "utilities.csv"
    write_density_csv(arms, out, args.grid_size)
    print(str(out))
    return EXIT_OK


def _regenerate_log_lines(header: dict, kind: str) -> list[str]:
    from .config import normalize

    config = header.get("config")
    if not isinstance(config, dict):
        raise ValueError("log header carries no config; cannot replay")
    report = run_pipeline(to_pipeline_config(normalize(config)))
    if kind == "stage1":
        new_header = make_header("stage1", report.config, final_arms=list(report.final_arms))
        return report.stage1_log.lines(new_header)
    new_header = make_header("stage2", report.config)
    return report.stage2_log.lines(new_header)


def cmd_replay(args: argparse.Namespace) -> int:
    try:
        raw = Path(args.runlog).read_text(encoding="utf-8")
        header, records = read_jsonl(args.runlog)
    except (OSError, ValueError) as exc:
        print(f"error: cannot replay {args.runlog}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    kind = header.get("kind")
    if kind not in ("stage1", "stage2"):
        print(f"error: cannot replay log of kind {kind!r}", file=sys.stderr)
        return EXIT_USAGE
    try:
        expected = _regenerate_log_lines(header, kind)
    except (ConfigError, ValueError) as exc:
        print(f"error: cannot replay {args.runlog}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RunAborted as exc:
        print(f"replay aborted mid-run: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    found = [ln for ln in raw.split("\n") if ln.strip()]
    n = max(len(found), len(expected))
    for i in range(n):
        got = found[i] if i < len(found) else "<missing line>"
        want = expected[i] if i < len(expected) else "<missing line>"
        if got != want:
            if i == 0:
                where = "header"
            elif i - 1 < len(records):
                where = f"round {records[i - 1].get('round', i - 1)}"
            else:
                where = f"round {i - 1}"  # line missing from a truncated file
            print(f"divergence at {where} (line {i + 1} of {args.runlog})", file=sys.stderr)
            return EXIT_RUNTIME
    print(f"replay ok: {len(found)} lines reproduced bit-identically")
    return EXIT_OK


def cmd_validate_config(args: argparse.Namespace) -> int:
    try:
        normalized = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    sys.stdout.write(dump_config(normalized))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    if args.command == "plot-utilities":
        return cmd_plot_utilities(args)
    if args.command == "replay":
        return cmd_replay(args)
    return cmd_validate_config(args)


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
