"""Command-line pipeline: generate -> train -> evaluate -> analyze.

Each stage writes a manifest (manifest_<stage>.json) naming every artifact it
produced, with paths relative to the output directory; later stages resolve
their inputs from the previous stage's manifest unless an explicit flag
overrides them. Per-item seeds derive from the master seed by SHA-256 over
"master|stage|task|genome_id", so reruns and resumed runs reuse identical
seeds without reuse across items.

Wall-clock timestamps in manifests honour SOURCE_DATE_EPOCH, the standard
reproducible-build override, so two runs of the same invocation can produce
byte-identical output trees.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (EvalRecord, emit_report, fit_regression, read_results_csv,
                       sensitivity, write_results_csv)
from .errors import (DegenerateDesign, NumericalBlowup, ParseError, VoxelforgeError)
from .genome import Genome
from .ioutil import atomic_write_text
from .mapelites import Archive, run as run_mapelites
from .morphometrics import SYMMETRY_AXES
from .physics import SimConfig
from .policy import Policy, count_flops
from .ppo import PpoConfig, train
from .tasks import TASK_KINDS, TaskSpec, run_episode

DEFAULT_OUT_ENV = "VOXELFORGE_OUT"
FAILURES_HEADER = "genome_id,task,stage,reason"


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from the joined parts (documented splitting rule)."""
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def _now() -> int:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    return int(epoch) if epoch else int(time.time())


def _write_manifest(out: Path, stage: str, master_seed: int, config: dict,
                    stage_seeds: dict, artifacts: dict) -> Path:
    payload = {
        "tool": "voxelforge",
        "tool_version": __version__,
        "stage": stage,
        "created_unix": _now(),
        "master_seed": master_seed,
        "stage_seeds": stage_seeds,
        "config": config,
        "artifacts": artifacts,
    }
    path = out / f"manifest_{stage}.json"
    atomic_write_text(path, json.dumps(payload, indent=1, sort_keys=True))
    return path


def _read_manifest(out: Path, stage: str) -> dict:
    path = out / f"manifest_{stage}.json"
    if not path.exists():
        raise ParseError(f"missing {path}; run the {stage} stage first or pass the "
                         f"input path explicitly")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"corrupt manifest {path}: {exc}") from None


def _genome_ids(archive: Archive) -> list[tuple[str, object]]:
    """Stable ids g000, g001, ... assigned in sorted-bin order."""
    return [(f"g{i:03d}", entry) for i, entry in enumerate(archive.sorted_entries())]


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 5x5, got {text!r}") from None


def _parse_tasks(text: str) -> list[str]:
    tasks = [t.strip() for t in text.split(",") if t.strip()]
    for t in tasks:
        if t not in TASK_KINDS:
            raise argparse.ArgumentTypeError(f"unknown task {t!r}; choose from {TASK_KINDS}")
    if not tasks:
        raise argparse.ArgumentTypeError("no tasks given")
    return tasks


def _out_dir(args) -> Path:
    out = args.out or os.environ.get(DEFAULT_OUT_ENV) or "voxelforge_out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _task_spec(kind: str, args) -> TaskSpec:
    return TaskSpec(kind=kind, episode_length=args.episode_length,
                    terrain_seed=args.terrain_seed)


def _ppo_config(args) -> PpoConfig:
    if args.paper_scale:
        return PpoConfig.paper_scale(eval_interval=args.eval_interval)
    return PpoConfig(total_timesteps=args.timesteps, eval_interval=args.eval_interval,
                     hidden=(args.hidden, args.hidden))


def _merge_failures(out: Path, new_rows: list[tuple[str, str, str, str]]) -> None:
    path = out / "failures.csv"
    rows: dict[tuple[str, str, str], str] = {}
    if path.exists():
        for line in path.read_text().splitlines()[1:]:
            gid, task, stage, reason = line.split(",", 3)
            rows[(gid, task, stage)] = reason
    for gid, task, stage, reason in new_rows:
        rows[(gid, task, stage)] = reason
    lines = [FAILURES_HEADER]
    lines += [f"{g},{t},{s},{r}" for (g, t, s), r in sorted(rows.items())]
    atomic_write_text(path, "\n".join(lines) + "\n")


# ---- generate ----

def cmd_generate(args) -> int:
    out = _out_dir(args)
    width, height = args.grid
    stage_seed = derive_seed(args.seed, "generate")
    archive = run_mapelites(
        init_pop_size=args.init_pop,
        iterations=args.iterations,
        width=width,
        height=height,
        mutation_rate=args.mutation_rate,
        seed=stage_seed,
        bins_per_metric=args.bins,
        symmetry_axis=args.symmetry_axis,
        macro_prob=args.macro_prob,
    )
    archive.save(out / "archive.json")
    curve_lines = ["iteration,occupied_bins"]
    curve_lines += [f"{i},{n}" for i, n in enumerate(archive.fill_curve)]
    atomic_write_text(out / "fill_curve.csv", "\n".join(curve_lines) + "\n")
    _write_manifest(
        out, "generate", args.seed,
        config={
            "grid": f"{width}x{height}", "init_pop": args.init_pop,
            "iterations": args.iterations, "mutation_rate": args.mutation_rate,
            "macro_prob": args.macro_prob, "bins": args.bins,
            "symmetry_axis": args.symmetry_axis,
        },
        stage_seeds={"generate": stage_seed},
        artifacts={"archive": "archive.json", "fill_curve": "fill_curve.csv"},
    )
    print(f"archive: {archive.occupied}/{archive.total_bins} bins occupied "
          f"({archive.skipped_mutations} mutations skipped)")
    return 0


# ---- train ----

def _train_one(payload: dict) -> dict:
    """Worker body: train one (genome, task) pair and write its artifacts."""
    genome = Genome(**payload["genome"])
    task = TaskSpec(**payload["task"])
    cfg = PpoConfig(**payload["ppo"])
    try:
        policy, curve = train(genome, task, cfg, seed=payload["seed"])
    except NumericalBlowup as exc:
        return {"genome_id": payload["genome_id"], "ok": False, "reason": str(exc)}
    policy.save(payload["checkpoint"])
    lines = ["timesteps,eval_fitness"]
    lines += [f"{t},{f!r}" for t, f in curve]
    atomic_write_text(Path(payload["curve"]), "\n".join(lines) + "\n")
    return {"genome_id": payload["genome_id"], "ok": True,
            "final_fitness": curve[-1][1]}


def cmd_train(args) -> int:
    out = _out_dir(args)
    archive_path = Path(args.archive) if args.archive else \
        out / _read_manifest(out, "generate")["artifacts"]["archive"]
    archive = Archive.load(archive_path)
    entries = _genome_ids(archive)
    if args.limit is not None:
        entries = entries[:args.limit]
    cfg = _ppo_config(args)

    jobs = []
    artifacts: dict[str, dict[str, str]] = {}
    curve_artifacts: dict[str, dict[str, str]] = {}
    stage_seeds: dict[str, int] = {}
    for task_kind in args.tasks:
        (out / "policies" / task_kind).mkdir(parents=True, exist_ok=True)
        (out / "curves" / task_kind).mkdir(parents=True, exist_ok=True)
        task = _task_spec(task_kind, args)
        for gid, entry in entries:
            checkpoint = out / "policies" / task_kind / f"{gid}.json"
            curve = out / "curves" / task_kind / f"{gid}.csv"
            artifacts.setdefault(task_kind, {})[gid] = str(
                checkpoint.relative_to(out)
            )
            curve_artifacts.setdefault(task_kind, {})[gid] = str(
                curve.relative_to(out)
            )
            seed = derive_seed(args.seed, "train", task_kind, gid)
            stage_seeds[f"{task_kind}/{gid}"] = seed
            if checkpoint.exists():
                continue
            jobs.append({
                "genome_id": gid, "genome": entry.genome.to_dict(),
                "task": {"kind": task_kind, "episode_length": args.episode_length,
                         "terrain_seed": args.terrain_seed},
                "ppo": cfg.__dict__, "seed": seed,
                "checkpoint": str(checkpoint), "curve": str(curve),
                "task_kind": task_kind,
            })

    failures = []
    if args.workers > 1 and jobs:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_train_one, jobs))
    else:
        results = [_train_one(job) for job in jobs]
    for job, result in zip(jobs, results):
        if result["ok"]:
            print(f"trained {job['task_kind']}/{result['genome_id']} "
                  f"final={result['final_fitness']:.4f}")
        else:
            print(f"FAILED {job['task_kind']}/{result['genome_id']}: {result['reason']}",
                  file=sys.stderr)
            failures.append((result["genome_id"], job["task_kind"], "train",
                             result["reason"].replace(",", ";")))
    if failures:
        _merge_failures(out, failures)

    for task_kind in args.tasks:
        stage_artifacts = {"archive": str(archive_path.name),
                           "checkpoints": artifacts.get(task_kind, {}),
                           "curves": curve_artifacts.get(task_kind, {})}
        if (out / "failures.csv").exists():
            stage_artifacts["failures"] = "failures.csv"
        _write_manifest(
            out, f"train_{task_kind}", args.seed,
            config={"task": task_kind, "ppo": cfg.__dict__,
                    "episode_length": args.episode_length,
                    "terrain_seed": args.terrain_seed, "limit": args.limit,
                    "archive": str(archive_path.name)},
            stage_seeds={k: v for k, v in stage_seeds.items()
                         if k.startswith(f"{task_kind}/")},
            artifacts=stage_artifacts,
        )
    skipped = sum(1 for t in args.tasks for g, _ in entries) - len(jobs)
    print(f"{len(jobs) - len(failures)} trained, {len(failures)} failed, "
          f"{skipped} already present")
    return 0


# ---- evaluate ----

def cmd_evaluate(args) -> int:
    out = _out_dir(args)
    records: list[EvalRecord] = []
    failures = []
    artifact_rows: dict[str, str] = {}
    results_path = out / "results.csv"
    if results_path.exists():
        records = [r for r in read_results_csv(results_path) if r.task not in args.tasks]

    for task_kind in args.tasks:
        manifest = _read_manifest(out, f"train_{task_kind}")
        archive = Archive.load(out / manifest["artifacts"]["archive"])
        checkpoints = manifest["artifacts"]["checkpoints"]
        task = _task_spec(task_kind, args)
        entries = dict(_genome_ids(archive))
        for gid in sorted(checkpoints):
            entry = entries.get(gid)
            checkpoint = out / checkpoints[gid]
            if entry is None or not checkpoint.exists():
                failures.append((gid, task_kind, "evaluate", "missing checkpoint"))
                continue
            policy = Policy.load(checkpoint)
            seed = derive_seed(args.seed, "evaluate", task_kind, gid)
            result = run_episode(entry.genome, policy, task, seed=seed,
                                 sim_config=SimConfig())
            if result.truncated:
                failures.append((gid, task_kind, "evaluate",
                                 "truncated by numerical blowup"))
            if args.dump_trajectory:
                artifact_rows[f"trajectory/{task_kind}/{gid}"] = _dump_trajectory(
                    out, task_kind, gid, entry.genome, policy, task, seed)
            records.append(EvalRecord(
                genome_id=gid, task=task_kind, seed=seed, metrics=entry.metrics,
                flops=count_flops(policy.layer_sizes).total, fitness=result.fitness,
            ))

    write_results_csv(records, results_path)
    if failures:
        _merge_failures(out, failures)
    artifacts = {"results": "results.csv", **artifact_rows}
    if (out / "failures.csv").exists():
        artifacts["failures"] = "failures.csv"
    _write_manifest(
        out, "evaluate", args.seed,
        config={"tasks": args.tasks, "episode_length": args.episode_length,
                "terrain_seed": args.terrain_seed,
                "dump_trajectory": args.dump_trajectory},
        stage_seeds={f"{t}/{gid}": derive_seed(args.seed, "evaluate", t, gid)
                     for t in args.tasks for gid in
                     sorted(_read_manifest(out, f"train_{t}")["artifacts"]["checkpoints"])},
        artifacts=artifacts,
    )
    print(f"{len(records)} rows in results.csv, {len(failures)} failures")
    return 0


def _dump_trajectory(out: Path, task_kind: str, gid: str, genome, policy,
                     task: TaskSpec, seed: int) -> str:
    result = run_episode(genome, policy, task, seed=seed, sim_config=SimConfig(),
                         record_trajectory=True)
    lines = ["step,com_x,com_y,com_vx,com_vy,kinetic_energy"]
    lines += [",".join([str(row[0])] + [repr(v) for v in row[1:]])
              for row in result.trajectory]
    rel = Path("trajectories") / task_kind / f"{gid}.csv"
    atomic_write_text(out / rel, "\n".join(lines) + "\n")
    return str(rel)


# ---- analyze ----

def cmd_analyze(args) -> int:
    out = _out_dir(args)
    results_path = Path(args.results) if args.results else \
        out / _read_manifest(out, "evaluate")["artifacts"]["results"]
    records = read_results_csv(results_path)
    tasks = sorted({r.task for r in records})
    fits = {}
    tables = {}
    for task in tasks:
        task_records = [r for r in records if r.task == task]
        tables[task] = sensitivity(task_records)
        try:
            fits[task] = fit_regression(task_records, log_flops=not args.raw_flops)
        except DegenerateDesign as exc:
            print(f"regression skipped for {task}: {exc}", file=sys.stderr)
    report_dir = out / "reports"
    written = emit_report(fits, tables, records, report_dir,
                          log_flops=not args.raw_flops)
    _write_manifest(
        out, "analyze", args.seed,
        config={"results": str(results_path.name), "raw_flops": args.raw_flops},
        stage_seeds={},
        artifacts={"reports": [str(p.relative_to(out)) for p in written]},
    )
    for path in written:
        print(f"wrote {path}")
    return 0


# ---- pipeline ----

def cmd_pipeline(args) -> int:
    for stage in (cmd_generate, cmd_train, cmd_evaluate, cmd_analyze):
        code = stage(args)
        if code != 0:
            return code
    return 0


# ---- entry point ----

def _add_common(p: _Parser) -> None:
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--out", default=None,
                   help=f"output directory (default ${DEFAULT_OUT_ENV} or ./voxelforge_out)")
    p.add_argument("--workers", type=int, default=1, help="parallel workers")


def _add_generate_flags(p: _Parser) -> None:
    p.add_argument("--grid", type=_parse_grid, default=(5, 5), help="voxel grid WxH")
    p.add_argument("--init-pop", type=int, default=100, dest="init_pop")
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--bins", type=int, default=3, help="archive levels per metric")
    p.add_argument("--mutation-rate", type=float, default=0.1, dest="mutation_rate")
    p.add_argument("--macro-prob", type=float, default=0.7, dest="macro_prob",
                   help="share of structural macro mutations (0 = per-voxel only)")
    p.add_argument("--symmetry-axis", choices=SYMMETRY_AXES, default="vertical",
                   dest="symmetry_axis")


def _add_train_flags(p: _Parser) -> None:
    p.add_argument("--archive", default=None, help="archive JSON path override")
    p.add_argument("--task", type=_parse_tasks, default=["walker"], dest="tasks",
                   help="comma-separated tasks: walker,biwalker,obstacle")
    p.add_argument("--timesteps", type=int, default=200_000)
    p.add_argument("--eval-interval", type=int, default=100_000, dest="eval_interval")
    p.add_argument("--hidden", type=int, default=64, help="hidden layer width")
    p.add_argument("--paper-scale", action="store_true", dest="paper_scale",
                   help="full published-experiment scale: 256 hidden units, 1e6 steps")
    p.add_argument("--episode-length", type=int, default=500, dest="episode_length")
    p.add_argument("--terrain-seed", type=int, default=0, dest="terrain_seed")
    p.add_argument("--limit", type=int, default=None,
                   help="train only the first N genomes (smoke tests)")


def _add_evaluate_flags(p: _Parser) -> None:
    p.add_argument("--dump-trajectory", action="store_true", dest="dump_trajectory")


def _add_analyze_flags(p: _Parser) -> None:
    p.add_argument("--results", default=None, help="results CSV path override")
    p.add_argument("--raw-flops", action="store_true", dest="raw_flops",
                   help="regress on raw FLOPs instead of log10")


def build_parser() -> _Parser:
    parser = _Parser(prog="voxelforge",
                     description="Quality-diversity exploration of voxel soft robots")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="build the morphology archive")
    _add_common(p)
    _add_generate_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train one controller per archived genome")
    _add_common(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="run deterministic evaluation episodes")
    _add_common(p)
    _add_train_flags(p)
    _add_evaluate_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("analyze", help="regression and sensitivity reports")
    _add_common(p)
    _add_analyze_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("pipeline", help="generate, train, evaluate, analyze")
    _add_common(p)
    _add_generate_flags(p)
    _add_train_flags(p)
    _add_evaluate_flags(p)
    _add_analyze_flags(p)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericalBlowup as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ParseError, DegenerateDesign) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except VoxelforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
