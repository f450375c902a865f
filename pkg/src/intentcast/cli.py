"""Command-line entry point: gen / train / eval / ablate-freq / report.

Every subcommand is reproducible from its flags (or --config JSON) plus the
seed; there is no hidden state.  The INTENTCAST_OUT environment variable
overrides --out when set.

Exit codes: 0 ok, 2 usage, 3 I/O, 4 schema/config, 5 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .data import load_corpus, scene_windows
from .errors import NumericError, ScenarioFormatError, SchemaError
from .metrics import index_windows, slice_and_report
from .model import (
    ActiveMasks,
    TRUNCATION_MULTI,
    TRUNCATION_SINGLE,
    prepare_scene,
    read_dump,
    run_forecasts,
    write_dump,
)
from .optim import load_checkpoint
from .synth import GenConfig, MapConfig, write_corpus
from .train import TrainConfig, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_SCHEMA = 4
EXIT_NUMERIC = 5

ORACLE_FPS_GRID = [5.0, 2.5, 1.67, 1.0, 0.5]


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise FileNotFoundError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: config must be a JSON object")
    return doc


def _out_dir(args) -> Path:
    env = os.environ.get("INTENTCAST_OUT")
    return Path(env) if env else Path(args.out)


def _cmd_gen(args) -> int:
    doc = _load_config_file(args.config)
    overrides = {
        "seed": args.seed,
        "n_scenarios": args.scenarios,
        "duration_s": args.duration,
        "n_vehicles": args.vehicles,
        "n_pedestrians": args.pedestrians,
        "turn_prob": args.turn_prob,
        "stop_prob": args.stop_prob,
        "lane_change_prob": args.lane_change_prob,
    }
    doc.update({k: v for k, v in overrides.items() if v is not None})
    map_doc = doc.get("map", {})
    if args.lane_width is not None:
        map_doc["lane_width_m"] = args.lane_width
    if args.arm_length is not None:
        map_doc["arm_length_m"] = args.arm_length
    if map_doc:
        doc["map"] = map_doc
    cfg = GenConfig.from_dict(doc)
    fracs = tuple(float(f) for f in args.split_fracs.split(","))
    if len(fracs) != 3:
        raise SchemaError(f"--split-fracs needs three comma-separated values, got {args.split_fracs!r}")
    manifest = write_corpus(cfg, _out_dir(args), split_fracs=fracs)  # type: ignore[arg-type]
    print(f"wrote corpus manifest {manifest}")
    return EXIT_OK


def _cmd_train(args) -> int:
    doc = _load_config_file(args.config)
    overrides = {
        "seed": args.seed,
        "max_steps": args.steps,
        "batch": args.batch,
        "lr": args.lr,
        "lambda1": args.lambda1,
        "lambda2": args.lambda2,
        "lambda3": args.lambda3,
        "augment_multiplier": args.augment,
    }
    doc.update({k: v for k, v in overrides.items() if v is not None})
    cfg = TrainConfig.from_dict(doc)
    out = _out_dir(args)
    result = train(args.corpus, cfg, out_dir=out, split=args.split)
    last = result.history[-1] if result.history else None
    if last is not None:
        print(f"trained {len(result.history)} steps; final l_final={last.l_final:.6f}")
    print(f"checkpoint: {result.checkpoint_path}")
    return EXIT_OK


def _load_model(checkpoint_path: str):
    store, meta = load_checkpoint(checkpoint_path)
    masks = ActiveMasks.from_dict(meta["masks"]) if "masks" in meta else ActiveMasks()
    scaling = meta.get("attention_scaling", "dim")
    return store, masks, scaling


def _prepare_split(corpus: str, split: str):
    scenarios = load_corpus(corpus, split=split)
    scenes = [prepare_scene(sw) for s in scenarios for sw in scene_windows(s)]
    if not scenes:
        raise SchemaError(f"no usable prediction windows in split {split!r} of {corpus}")
    return scenarios, scenes


def _cmd_eval(args) -> int:
    store, masks, scaling = _load_model(args.checkpoint)
    scenarios, scenes = _prepare_split(args.corpus, args.split)
    tau = args.tau
    if tau is None:
        tau = TRUNCATION_SINGLE if args.n == 1 else TRUNCATION_MULTI
    if args.intent_mode == "oracle" and args.oracle_fps not in ORACLE_FPS_GRID:
        raise SchemaError(f"--oracle-fps must be one of {ORACLE_FPS_GRID}")
    records = run_forecasts(
        store,
        scenes,
        n_samples=args.n,
        tau=tau,
        seed=args.seed,
        masks=masks,
        intent_mode=args.intent_mode,
        oracle_fps=args.oracle_fps if args.intent_mode == "oracle" else None,
        scaling=scaling,
    )
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    dump_path = out / "predictions.jsonl"
    write_dump(records, dump_path)
    summary = slice_and_report(records, index_windows(scenarios), out_dir=out / "report")
    print(f"dump: {dump_path}")
    for name, doc in summary.slices.items():
        if doc.get("absent"):
            print(f"{name}: absent")
        else:
            print(f"{name}: n={doc['n_windows']} ade={doc['ade']:.6f} fde={doc['fde']:.6f}")
    return EXIT_OK


def _cmd_ablate_freq(args) -> int:
    store, masks, scaling = _load_model(args.checkpoint)
    scenarios, scenes = _prepare_split(args.corpus, args.split)
    index = index_windows(scenarios)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for fps in ORACLE_FPS_GRID:
        records = run_forecasts(
            store,
            scenes,
            n_samples=1,
            tau=TRUNCATION_SINGLE,
            seed=args.seed,
            masks=masks,
            intent_mode="oracle",
            oracle_fps=fps,
            scaling=scaling,
        )
        summary = slice_and_report(records, index)
        row = {"oracle_fps": fps}
        for name, doc in summary.slices.items():
            row[name] = None if doc.get("absent") else doc["ade"]
        rows.append(row)
    table_path = out / "ablate_freq.csv"
    slice_names = [name for name in rows[0] if name != "oracle_fps"]
    with open(table_path, "w", encoding="utf-8") as fh:
        fh.write(",".join(["oracle_fps"] + slice_names) + "\n")
        for row in rows:
            cells = [f"{row['oracle_fps']:.2f}"]
            cells += ["" if row[n] is None else f"{row[n]:.6f}" for n in slice_names]
            fh.write(",".join(cells) + "\n")
    (out / "ablate_freq.json").write_text(json.dumps(rows, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    print(f"ablation table: {table_path}")
    return EXIT_OK


def _cmd_report(args) -> int:
    records = read_dump(args.dump)
    scenarios = load_corpus(args.corpus)
    out = _out_dir(args)
    slice_and_report(records, index_windows(scenarios), out_dir=out)
    print(f"report: {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="intentcast", description="Joint intention and trajectory forecasting")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic scenario corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="GenConfig JSON file")
    p.add_argument("--seed", type=int)
    p.add_argument("--scenarios", type=int)
    p.add_argument("--duration", type=float)
    p.add_argument("--vehicles", type=int)
    p.add_argument("--pedestrians", type=int)
    p.add_argument("--turn-prob", type=float, dest="turn_prob")
    p.add_argument("--stop-prob", type=float, dest="stop_prob")
    p.add_argument("--lane-change-prob", type=float, dest="lane_change_prob")
    p.add_argument("--lane-width", type=float, dest="lane_width")
    p.add_argument("--arm-length", type=float, dest="arm_length")
    p.add_argument("--split-fracs", default="0.7,0.15,0.15")
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("train", help="train a model on a corpus")
    p.add_argument("--corpus", required=True, help="corpus manifest path")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="TrainConfig JSON file")
    p.add_argument("--split", default="train", choices=["train", "val", "test"])
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--lambda3", type=float)
    p.add_argument("--augment", type=int)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="forecast a corpus split and report metrics")
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--n", type=int, default=1, help="samples per window")
    p.add_argument("--tau", type=float, help="truncation scale (default 0 for n=1, 1.1 otherwise)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--intent-mode", default="predicted", choices=["predicted", "oracle"], dest="intent_mode")
    p.add_argument("--oracle-fps", type=float, dest="oracle_fps")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ablate-freq", help="ADE vs oracle intention annotation frequency")
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_ablate_freq)

    p = sub.add_parser("report", help="regenerate report tables from an existing dump")
    p.add_argument("--dump", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ScenarioFormatError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
