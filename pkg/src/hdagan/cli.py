"""Command-line surface: synth-data, train, classify, sweep, gradcheck.

Every config key is also a flag (one-to-one, dashes for underscores);
flags override the config file. Diagnostics go to stderr, tables to
stdout. Exit codes: 0 success, 1 config error, 2 I/O failure, 3
training divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import fields
from pathlib import Path

from . import checkpoint, data, strategies
from .config import KEY_HELP, ConfigError, RunConfig, format_config, load_config
from .models import ArchitectureError, build_bundle, build_final_classifier
from .training import TRACE_HEADER, TrainDivergedError, train

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_DIVERGED = 3

METRICS_HEADER = ["strategy", "n_yt", "accuracy", "seed"]
STRATEGIES = ("baseline", "source", "target", "full")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="path to a key=value config file")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        parser.add_argument(flag, dest=f.name, default=None, metavar=f.type.upper(), help=KEY_HELP[f.name])


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {
        f.name: getattr(args, f.name)
        for f in fields(RunConfig)
        if getattr(args, f.name, None) is not None
    }
    cfg = load_config(args.config, overrides)
    print("# effective configuration", file=sys.stderr)
    for line in format_config(cfg).splitlines():
        print(f"# {line}", file=sys.stderr)
    return cfg


def _prepare_data(cfg: RunConfig):
    """Load dataset dumps when present, else generate the benchmark."""
    data_dir = Path(cfg.data_dir)
    src_path = data_dir / "source.hdad"
    tgt_path = data_dir / "target.hdad"
    if src_path.exists() and tgt_path.exists():
        print(f"# loading datasets from {data_dir}", file=sys.stderr)
        source = data.load_dataset(src_path)
        target = data.load_dataset(tgt_path)
    else:
        source, target = data.generate_synthetic_pair(
            cfg.num_classes, cfg.per_class, cfg.src_shape(), cfg.tgt_shape(), cfg.seed
        )
    split = cfg.split_spec()
    src_train, src_val = data.split_and_budget(source, split, cfg.train_per_class)
    tgt_train, tgt_val = data.split_and_budget(target, split, cfg.n_yt)
    return src_train, src_val, tgt_train, tgt_val


def cmd_synth_data(cfg: RunConfig) -> int:
    source, target = data.generate_synthetic_pair(
        cfg.num_classes, cfg.per_class, cfg.src_shape(), cfg.tgt_shape(), cfg.seed
    )
    out = Path(cfg.data_dir)
    out.mkdir(parents=True, exist_ok=True)
    data.save_dataset(out / "source.hdad", source)
    data.save_dataset(out / "target.hdad", target)
    manifest = {
        "seed": cfg.seed,
        "num_classes": cfg.num_classes,
        "per_class": cfg.per_class,
        "class_names": source.class_names,
        "source": {"count": len(source), "shape": list(cfg.src_shape().chw)},
        "target": {"count": len(target), "shape": list(cfg.tgt_shape().chw)},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"# wrote {out / 'source.hdad'}, {out / 'target.hdad'}, manifest", file=sys.stderr)
    return EXIT_OK


def cmd_train(cfg: RunConfig) -> int:
    src_train, _, tgt_train, _ = _prepare_data(cfg)
    bundle = build_bundle(
        cfg.src_shape(), cfg.tgt_shape(), cfg.num_classes, cfg.base_channels, cfg.seed
    )
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tcfg = cfg.training_config()
    with open(out / "trace.csv", "w") as trace_file:
        trace_file.write(TRACE_HEADER + "\n")
        train(
            bundle,
            src_train,
            tgt_train,
            tcfg,
            checkpoint_dir=out,
            on_trace=lambda t: trace_file.write(t.as_csv() + "\n"),
        )
    checkpoint.save_bundle(out, bundle)
    print(f"# trained for {tcfg.iterations} iterations, checkpoints in {out}", file=sys.stderr)
    return EXIT_OK


def _assemble(cfg: RunConfig, bundle, src_train, tgt_train):
    if cfg.strategy == "baseline":
        aset = strategies.assemble_baseline(tgt_train, cfg.tgt_shape())
        if len(aset) == 0:
            raise ConfigError("baseline needs n_yt > 0 (no labeled target data)")
        return aset
    if cfg.strategy == "source":
        return strategies.assemble_hda_source(bundle, src_train, tgt_train)
    if cfg.strategy == "target":
        return strategies.assemble_hda_target(bundle, tgt_train)
    return strategies.assemble_hda_full(bundle, src_train, tgt_train)


def cmd_classify(cfg: RunConfig, quiet: bool = False) -> int:
    src_train, _, tgt_train, tgt_val = _prepare_data(cfg)
    bundle = build_bundle(
        cfg.src_shape(), cfg.tgt_shape(), cfg.num_classes, cfg.base_channels, cfg.seed
    )
    out = Path(cfg.out_dir)
    checkpoint.load_bundle(out, bundle)
    aset = _assemble(cfg, bundle, src_train, tgt_train)
    final = build_final_classifier(
        cfg.tgt_shape(), cfg.num_classes, cfg.base_channels, cfg.seed * 10 + 6
    )
    strategies.train_final(
        final, aset, cfg.final_epochs, cfg.seed,
        lr=cfg.lr_final, batch_size=cfg.batch_size,
        beta1=cfg.beta1, beta2=cfg.beta2, adam_eps=cfg.adam_eps,
    )
    accuracy = strategies.evaluate(final, tgt_val)
    metrics = out / "metrics.csv"
    fresh = not metrics.exists()
    with open(metrics, "a", newline="") as f:
        writer = csv.writer(f)
        if fresh:
            writer.writerow(METRICS_HEADER)
        writer.writerow([cfg.strategy, cfg.n_yt, f"{accuracy:.2f}", cfg.seed])
    if not quiet:
        print(f"{cfg.strategy} n_yt={cfg.n_yt} accuracy={accuracy:.2f}")
    return EXIT_OK


def format_sweep_table(budgets: list[int], cells: dict) -> str:
    """Aligned text table: one row per budget, one column per strategy."""
    headers = ["n_yt", "baseline", "HDAsource", "HDAtarget", "HDAfull"]
    rows = [headers]
    for b in budgets:
        row = [str(b)]
        for strat in STRATEGIES:
            v = cells.get((b, strat))
            row.append("-" if v is None else f"{v:.2f}")
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(headers))]
    lines = ["  ".join(cell.rjust(widths[i]) for i, cell in enumerate(row)) for row in rows]
    return "\n".join(lines) + "\n"


def cmd_sweep(cfg: RunConfig, budgets: list[int]) -> int:
    budgets = sorted(set(budgets), reverse=True)
    root = Path(cfg.out_dir)
    root.mkdir(parents=True, exist_ok=True)
    cells: dict = {}
    for budget in budgets:
        sub = RunConfig(**{f.name: getattr(cfg, f.name) for f in fields(RunConfig)})
        sub.n_yt = budget
        sub.out_dir = str(root / f"nyt_{budget}")
        sub.validate()
        rc = cmd_train(sub)
        if rc != EXIT_OK:
            return rc
        for strat in STRATEGIES:
            if strat == "baseline" and budget == 0:
                cells[(budget, strat)] = None
                continue
            sub.strategy = strat
            rc = cmd_classify(sub, quiet=True)
            if rc != EXIT_OK:
                return rc
            with open(Path(sub.out_dir) / "metrics.csv") as f:
                last = list(csv.DictReader(f))[-1]
            cells[(budget, strat)] = float(last["accuracy"])
    table = format_sweep_table(budgets, cells)
    (root / "table.txt").write_text(table)
    with open(root / "sweep.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["n_yt"] + list(STRATEGIES))
        for b in budgets:
            writer.writerow(
                [b] + ["-" if cells[(b, s)] is None else f"{cells[(b, s)]:.2f}" for s in STRATEGIES]
            )
    print(table, end="")
    return EXIT_OK


def cmd_gradcheck() -> int:
    from .gradcheck import run_all

    results = run_all()
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print(f"{'all checks passed' if ok else 'FAILURES present'} ({sum(r.cases for r in results)} cases)")
    return EXIT_OK if ok else EXIT_CONFIG


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hdagan",
        description="Heterogeneous domain adaptation with cycle-consistent generators",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in (
        ("synth-data", "generate the synthetic benchmark and write dataset dumps"),
        ("train", "run pretraining plus adversarial training, write checkpoints and trace"),
        ("classify", "assemble a strategy, train the final classifier, append metrics"),
        ("sweep", "train and classify across label budgets, emit the comparison table"),
    ):
        p = sub.add_parser(name, help=doc)
        _add_config_flags(p)
        if name == "sweep":
            p.add_argument(
                "--budgets",
                default="10,5,1,0",
                help="comma-separated label budgets, swept in descending order",
            )
    sub.add_parser("gradcheck", help="run the finite-difference gradient suite")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gradcheck":
            return cmd_gradcheck()
        cfg = _config_from_args(args)
        if args.command == "synth-data":
            return cmd_synth_data(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "classify":
            return cmd_classify(cfg)
        if args.command == "sweep":
            try:
                budgets = [int(b) for b in args.budgets.split(",") if b.strip()]
            except ValueError:
                raise ConfigError(f"bad budget list {args.budgets!r}") from None
            if not budgets:
                raise ConfigError("budget list is empty")
            return cmd_sweep(cfg, budgets)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, ArchitectureError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainDivergedError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
