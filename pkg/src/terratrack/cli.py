"""Command-line entry point: simulate, run, seed-memory, eval, bench."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .geometry import CameraModel
from .pipeline import BASELINES, RunConfig, run_pipeline, seed_memory, timing_summary, track_histories
from .prediction import MemoryBank, MemoryBankFormatError, Predictor
from .sim import ConfigError, DatasetFormatError, ScenarioConfig, read_config, read_dataset, simulate, write_dataset
from .sim.presets import PRESETS


class CliError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message)


def _fail(kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": " ".join(str(message).split())}) + "\n")
    return 2 if kind == "usage" else 1


def _scenario(args) -> ScenarioConfig:
    if args.config and args.preset:
        raise CliError("usage", "give either --config or --preset, not both")
    if args.preset:
        if args.preset not in PRESETS:
            raise CliError("usage", f"unknown preset {args.preset!r} (choose from {', '.join(PRESETS)})")
        cfg = PRESETS[args.preset](args.seed if args.seed is not None else 0)
    elif args.config:
        if not Path(args.config).exists():
            raise CliError("missing-file", f"{args.config} does not exist")
        cfg = ScenarioConfig.load(args.config)
    else:
        raise CliError("usage", "simulate needs --config or --preset")
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.frames is not None:
        if args.frames < 0:
            raise CliError("usage", "--frames must be >= 0")
        cfg = replace(cfg, duration=args.frames / cfg.frame_rate)
    return cfg


def _run_config(path, frame_rate: float, sigma3d: float) -> RunConfig:
    base = RunConfig.for_scenario(frame_rate, sigma3d)
    if not path:
        return base
    if not Path(path).exists():
        raise CliError("missing-file", f"{path} does not exist")
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CliError("config", f"{path}: {exc}") from exc
    merged = base.to_dict()
    for k, v in data.items():
        if isinstance(v, dict) and isinstance(merged.get(k), dict):
            merged[k] = {**merged[k], **v}
        else:
            merged[k] = v
    try:
        return RunConfig.from_dict(merged)
    except (TypeError, ValueError) as exc:
        raise CliError("config", f"{path}: {exc}") from exc


def _dataset_info(path) -> tuple[CameraModel, float, float]:
    if not Path(path).is_dir():
        raise CliError("missing-dataset", f"{path} is not a dataset directory")
    cfg = read_config(path)
    if cfg is None:
        return CameraModel(), 10.0, 0.1
    return cfg.camera, cfg.frame_rate, cfg.noise.sigma3d


def _load_bank(path, predictor_cfg) -> MemoryBank | None:
    if not path:
        return None
    if not Path(path).exists():
        raise CliError("missing-file", f"{path} does not exist")
    feature_dim = Predictor(predictor_cfg).feature_dim
    return MemoryBank.load(path, feature_dim, predictor_cfg.history_len, predictor_cfg.future_len)


def cmd_simulate(args) -> int:
    cfg = _scenario(args)
    if not args.out:
        raise CliError("usage", "--out is required")
    cfg.validate()
    n = write_dataset(simulate(cfg), args.out, cfg)
    print(json.dumps({"dataset": str(args.out), "frames": n}))
    return 0


def cmd_run(args) -> int:
    camera, rate, sigma = _dataset_info(args.dataset)
    rc = _run_config(args.config, rate, sigma).with_baseline(args.baseline)
    bank = _load_bank(args.membank, rc.predictor)
    pipe = run_pipeline(read_dataset(args.dataset), camera, rc, bank, args.out, args.frames)
    if args.save_membank:
        pipe.bank.save(args.save_membank)
    summary = timing_summary(pipe.timings)["total"]
    print(json.dumps({"out": str(args.out), "frames": len(pipe.timings), "map_points": len(pipe.mapper.map),
                      "mean_ms": summary["mean"]}))
    return 0


def cmd_seed_memory(args) -> int:
    if not args.out:
        raise CliError("usage", "--out is required")
    if not args.datasets:
        raise CliError("usage", "seed-memory needs at least one dataset")
    camera, rate, sigma = _dataset_info(args.datasets[0])
    rc = _run_config(args.config, rate, sigma)
    pcfg = rc.predictor if args.capacity is None else replace(rc.predictor, capacity=args.capacity)
    predictor = Predictor(pcfg)
    added = 0
    for ds in args.datasets:
        camera, _, _ = _dataset_info(ds)
        hists = track_histories(read_dataset(ds, with_clouds=False), camera, rc.tracker, args.frames)
        added += seed_memory(hists, predictor, args.stride)
    if len(predictor.bank) == 0:
        sys.stderr.write(json.dumps({"warning": "empty-bank", "message": "no valid history windows found"}) + "\n")
    predictor.bank.save(args.out)
    print(json.dumps({"membank": str(args.out), "entries": len(predictor.bank), "pairs": added}))
    return 0


def cmd_eval(args) -> int:
    from .evaluation import evaluate_run_dir, summary_csv, summary_table

    if not args.runs:
        raise CliError("usage", "eval needs at least one --run")
    if not args.dataset or not (Path(args.dataset) / "gt.jsonl").exists():
        raise CliError("missing-gt", f"{args.dataset}: no gt.jsonl")
    reports = {}
    for run in args.runs:
        if not Path(run).is_dir():
            raise CliError("missing-run", f"{run} is not a run directory")
        name = Path(run).name
        while name in reports:
            name += "'"
        reports[name] = evaluate_run_dir(run, args.dataset, args.warmup)
    out = Path(args.out) if args.out else Path(args.runs[0])
    out.mkdir(parents=True, exist_ok=True)
    (out / "eval_report.json").write_text(json.dumps(reports, indent=1) + "\n")
    (out / "summary.csv").write_text(summary_csv(reports))
    print(summary_table(reports))
    return 0


def cmd_bench(args) -> int:
    if args.dataset:
        camera, rate, sigma = _dataset_info(args.dataset)
        frames = list(read_dataset(args.dataset))
    else:
        cfg = PRESETS["bench"](args.seed if args.seed is not None else 0)
        if args.frames is not None:
            cfg = replace(cfg, duration=args.frames / cfg.frame_rate)
        camera, rate, sigma = cfg.camera, cfg.frame_rate, cfg.noise.sigma3d
        frames = list(simulate(cfg))
    if args.frames is not None:
        frames = frames[: args.frames]
    rc = _run_config(args.config, rate, sigma).with_baseline(args.baseline)
    timings = []
    for _ in range(args.repeats):
        bank = _load_bank(args.membank, rc.predictor)
        pipe = run_pipeline(frames, camera, rc, bank)
        timings.extend(pipe.timings)
    summary = timing_summary(timings)
    result = {"frames": len(frames), "repeats": args.repeats,
              "points_per_frame": float(np.mean([len(f[0].cloud) for f in frames])) if frames else 0.0,
              "summary_ms": summary}
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(result, indent=1) + "\n")
    print(json.dumps(result))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="terratrack", description=__doc__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("simulate", help="generate a synthetic dataset")
    s.add_argument("--config", help="scenario JSON")
    s.add_argument("--preset", help=f"built-in scenario ({', '.join(PRESETS)})")
    s.add_argument("--seed", type=int)
    s.add_argument("--frames", type=int, help="override the number of frames")
    s.add_argument("--out", help="dataset directory to write")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("run", help="track, predict and map a dataset")
    r.add_argument("dataset")
    r.add_argument("--config", help="run config JSON (module parameter overrides)")
    r.add_argument("--out", required=True)
    r.add_argument("--baseline", choices=BASELINES)
    r.add_argument("--frames", type=int)
    r.add_argument("--membank", help="memory bank to start from")
    r.add_argument("--save-membank", help="write the bank (with online updates) here")
    r.add_argument("--seed", type=int, help="accepted for symmetry; runs are deterministic")
    r.set_defaults(func=cmd_run)

    m = sub.add_parser("seed-memory", help="build a memory bank from training datasets")
    m.add_argument("datasets", nargs="*")
    m.add_argument("--out", help="membank path to write")
    m.add_argument("--config")
    m.add_argument("--stride", type=int, default=1)
    m.add_argument("--capacity", type=int)
    m.add_argument("--frames", type=int)
    m.set_defaults(func=cmd_seed_memory)

    e = sub.add_parser("eval", help="score run outputs against ground truth")
    e.add_argument("--run", dest="runs", action="append", default=[])
    e.add_argument("--dataset", required=True)
    e.add_argument("--out")
    e.add_argument("--warmup", type=int, default=2)
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="per-stage latency percentiles")
    b.add_argument("--dataset")
    b.add_argument("--config")
    b.add_argument("--seed", type=int)
    b.add_argument("--frames", type=int)
    b.add_argument("--repeats", type=int, default=1)
    b.add_argument("--baseline", choices=BASELINES)
    b.add_argument("--membank")
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise CliError("usage", "missing subcommand (simulate, run, seed-memory, eval, bench)")
        return args.func(args)
    except CliError as exc:
        return _fail(exc.kind, str(exc))
    except ConfigError as exc:
        return _fail("config", str(exc))
    except DatasetFormatError as exc:
        return _fail("dataset", str(exc))
    except MemoryBankFormatError as exc:
        return _fail("membank", str(exc))
    except (OSError, ValueError) as exc:
        return _fail(type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
