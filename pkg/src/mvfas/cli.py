"""Command-line entry points: synth-gen, train, eval, ablate, visualize."""
from __future__ import annotations

import argparse
import itertools
import json
import sys
from pathlib import Path

import numpy as np

from . import synth, train as train_mod
from .config import ConfigurationError, RunConfig
from .protocol import leave_one_out, load_manifest
from .train import evaluate, load_checkpoint, save_checkpoint
from .visualize import export_heatmaps

GRID_KEYS = {
    "mvs": ("use_mvs", "flag"),
    "mtpa": ("use_mtpa", "flag"),
    "gape": ("gape", "flag"),
    "views": ("num_views", "int"),
    "imax": ("i_max", "int"),
    "anchor": ("anchor_type", "str"),
    "variant": ("variant", "str"),
}


class OutputExistsError(RuntimeError):
    pass


def _prepare_out(path: Path, overwrite: bool) -> Path:
    if path.exists() and any(path.iterdir()) and not overwrite:
        raise OutputExistsError(
            f"output directory {path} is not empty; pass --overwrite to replace")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _flag(value: str) -> bool:
    if value in ("on", "true", "1"):
        return True
    if value in ("off", "false", "0"):
        return False
    raise ConfigurationError(f"expected on/off, got {value!r}")


def _load_config(args) -> RunConfig:
    config = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = {}
    if getattr(args, "target", None):
        overrides["target"] = args.target
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "variant", None):
        overrides["variant"] = args.variant
    if getattr(args, "gape", None):
        overrides["gape"] = _flag(args.gape)
    if getattr(args, "anchor", None):
        overrides["anchor_type"] = args.anchor
    if getattr(args, "views", None) is not None:
        overrides["num_views"] = args.views
    if getattr(args, "imax", None) is not None:
        overrides["i_max"] = args.imax
    if getattr(args, "data", None):
        overrides["data_root"] = args.data
    return config.with_overrides(**overrides).validate()


def _add_model_flags(parser):
    parser.add_argument("--config", help="YAML run configuration file")
    parser.add_argument("--target", help="held-out target domain")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--variant", choices=("mvs", "similarity", "cross_attention"))
    parser.add_argument("--gape", choices=("on", "off"))
    parser.add_argument("--anchor", choices=("mean", "single", "individual"))
    parser.add_argument("--views", type=int, metavar="M")
    parser.add_argument("--imax", type=int, metavar="N")
    parser.add_argument("--data", help="dataset root containing manifest.csv")


def cmd_synth_gen(args) -> int:
    out = _prepare_out(Path(args.out), args.overwrite)
    names = args.domains.split(",") if args.domains else [r.name for r in synth.DEFAULT_RECIPES]
    recipes = [synth.recipe_by_name(n) for n in names]
    manifest = synth.generate_protocol(out, recipes, per_class=args.per_class,
                                       size=args.size, seed=args.seed or 0)
    print(f"wrote {manifest}")
    return 0


def cmd_train(args) -> int:
    config = _load_config(args)
    out = _prepare_out(Path(args.out), args.overwrite)
    model, optimizer, history = train_mod.train(config, log=print)
    save_checkpoint(out / "checkpoint.pt", model, optimizer, config.epochs)
    with open(out / "history.json", "w") as fh:
        json.dump(history, fh)
    print(f"wrote {out / 'checkpoint.pt'}")
    return 0


def cmd_eval(args) -> int:
    out = _prepare_out(Path(args.out), args.overwrite)
    model, _ = load_checkpoint(args.checkpoint)
    data_root = args.data or model.config.data_root
    target = args.target or model.config.target
    domains = load_manifest(Path(data_root) / "manifest.csv")
    if target not in domains:
        raise ConfigurationError(f"domain {target!r} not in manifest")
    scenario = "".join(sorted(d[0].upper() for d in domains if d != target)) \
        + f"->{target[0].upper()}"
    rows, report = evaluate(model, domains[target], scenario)
    from .metrics import save_scores
    save_scores(out / "scores.csv", rows)
    with open(out / "report.txt", "w") as fh:
        fh.write(report)
    print(report, end="")
    return 0


def _parse_grid(specs: list[str]) -> list[dict]:
    if not specs:
        raise ConfigurationError("ablation grid is empty; pass at least one --grid key=v1,v2")
    axes = []
    for spec in specs:
        if "=" not in spec:
            raise ConfigurationError(f"bad grid spec {spec!r}, expected key=v1,v2")
        key, values = spec.split("=", 1)
        if key not in GRID_KEYS:
            raise ConfigurationError(f"unknown grid key {key!r}; valid: {sorted(GRID_KEYS)}")
        field, kind = GRID_KEYS[key]
        parsed = []
        for value in values.split(","):
            if kind == "flag":
                parsed.append((key, value, field, _flag(value)))
            elif kind == "int":
                parsed.append((key, value, field, int(value)))
            else:
                parsed.append((key, value, field, value))
        axes.append(parsed)
    return [
        {"label": " ".join(f"{k}={v}" for k, v, _, _ in combo),
         "overrides": {field: parsed for _, _, field, parsed in combo}}
        for combo in itertools.product(*axes)
    ]


def cmd_ablate(args) -> int:
    base = _load_config(args)
    out = _prepare_out(Path(args.out), args.overwrite)
    combos = _parse_grid(args.grid or [])
    from .metrics import ScoreSet, summarize
    lines = [f"{'combination':<32s} {'HTER%':>8s} {'AUC%':>8s} {'TPR@FPR=1%':>12s}"]
    results = []
    for combo in combos:
        config = base.with_overrides(**combo["overrides"]).validate()
        model, _, _ = train_mod.train(config)
        domains = load_manifest(Path(config.data_root) / "manifest.csv")
        _, test = leave_one_out(domains, config.target)
        rows, _ = evaluate(model, test, combo["label"])
        score_set = ScoreSet(np.array([float(r["score"]) for r in rows]),
                             np.array([int(r["label"]) for r in rows]))
        report = summarize(score_set, combo["label"], config.threshold_rule)
        results.append(report)
        lines.append(f"{combo['label']:<32s} {report.hter * 100:8.2f} "
                     f"{report.auc * 100:8.2f} {report.tpr_at_fpr1 * 100:12.2f}")
        print(lines[-1])
    table = "\n".join(lines) + "\n"
    with open(out / "ablation.txt", "w") as fh:
        fh.write(table)
    return 0


def cmd_visualize(args) -> int:
    out = _prepare_out(Path(args.out), args.overwrite)
    model, _ = load_checkpoint(args.checkpoint)
    written = export_heatmaps(model, args.image, out)
    print(f"wrote {len(written)} files to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvfas",
        description="Multi-view text-guided face anti-spoofing toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-gen", help="generate the synthetic multi-domain dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--domains", help="comma-separated built-in domain names")
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_synth_gen)

    p = sub.add_parser("train", help="train one leave-one-out scenario")
    _add_model_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a domain with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", help="dataset root containing manifest.csv")
    p.add_argument("--target", help="domain to evaluate")
    p.add_argument("--out", required=True)
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train/evaluate a grid of ablation switches")
    _add_model_flags(p)
    p.add_argument("--grid", action="append", metavar="KEY=V1,V2",
                   help="grid axis, e.g. --grid mvs=on,off (repeatable)")
    p.add_argument("--out", required=True)
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("visualize", help="export per-view attention heatmaps")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_visualize)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, OutputExistsError, FileNotFoundError, ValueError,
            RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
