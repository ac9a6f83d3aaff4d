"""Command-line entry point: ``candlecast <subcommand> [flags]``.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import datetime as dt
import logging
import sys
from pathlib import Path

from . import harness
from .errors import ConfigError, ContractError, DataError
from .market_data import load_ticker, serialize_csv, split
from .raster import chart_filename, encode_png, render_window
from .windows import class_balance, manifest_csv, sliding_windows

log = logging.getLogger("candlecast")


def _volume(s: str) -> bool:
    try:
        return harness._bool(s)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _date(s: str) -> dt.date:
    try:
        return dt.date.fromisoformat(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an ISO date: {s!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI experiment config; flags override it")
    common.add_argument("--data-dir", type=Path)
    common.add_argument("--out-dir", type=Path)
    common.add_argument("--period", type=int, action="append", help="repeatable; restricts the grid")
    common.add_argument("--dim", type=int, action="append", help="repeatable; restricts the grid")
    common.add_argument("--volume", type=_volume, action="append", help="on/off, repeatable")
    common.add_argument("--classifier", action="append", type=str.upper, help="CNN, RF or KNN, repeatable")
    common.add_argument("--seed", type=int)
    common.add_argument("--epochs", type=int)
    common.add_argument("--lr", type=float)
    common.add_argument("--batch", type=int)
    common.add_argument("--ticker", action="append", help="ticker name (file <TICKER>.csv in --data-dir)")
    common.add_argument("--checkpoint", type=Path)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="candlecast", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", parents=[common], help="validate ticker CSVs (and write normalised copies to --out-dir)")
    r = sub.add_parser("render", parents=[common], help="render chart PNGs and a sample manifest for one cell")
    r.add_argument("--split", choices=("train", "test", "independent", "all"), default="all")
    sub.add_parser("train", parents=[common], help="train one cell and save its checkpoint")
    sub.add_parser("evaluate", parents=[common], help="evaluate a checkpoint on the testing range")
    ind = sub.add_parser("independent", parents=[common], help="evaluate a checkpoint on an independent instrument")
    ind.add_argument("--independent-file", type=Path, required=True)
    pr = sub.add_parser("predict", parents=[common], help="predict the direction into a target date")
    pr.add_argument("--date", type=_date, required=True)
    s = sub.add_parser("serve", parents=[common], help="serve JSON predictions over HTTP")
    s.add_argument("--port", type=int, default=8000)
    s.add_argument("--host", default="127.0.0.1")
    sub.add_parser("grid", parents=[common], help="run the experiment grid and write report.csv / report.txt")
    return p


def _config(args) -> harness.ExperimentConfig:
    overrides = {
        "data_dir": args.data_dir,
        "out_dir": args.out_dir,
        "periods": args.period,
        "dimensions": args.dim,
        "volume": args.volume,
        "classifiers": args.classifier,
        "seed": args.seed,
        "tickers": args.ticker,
        "epochs": args.epochs,
        "lr": args.lr,
        "batch": args.batch,
    }
    return harness.load_config(args.config, overrides)


def _single_cell(cfg: harness.ExperimentConfig) -> harness.Cell:
    if len(cfg.cells) != 1:
        raise ConfigError(f"this command needs exactly one cell; the flags select {len(cfg.cells)} (pin --classifier/--period/--dim/--volume)")
    return cfg.cells[0]


def _print_row(row: harness.ReportRow) -> None:
    print(harness.RunReport([row]).to_table(), end="")
    print(f"tp={row.tp} fp={row.fp} tn={row.tn} fn={row.fn} n_test={row.n_test}")


def cmd_ingest(args, cfg):
    for path in cfg.ticker_paths():
        s = load_ticker(path)
        print(f"{s.ticker}: {len(s)} bars {s.bars[0].date} .. {s.bars[-1].date}, {s.skipped} rows skipped")
        if args.out_dir:
            args.out_dir.mkdir(parents=True, exist_ok=True)
            (args.out_dir / path.name).write_text(serialize_csv(s))


def cmd_render(args, cfg):
    cell = _single_cell(cfg)
    spec = cell.dataset_spec
    out = cfg.out_dir / "charts"
    out.mkdir(parents=True, exist_ok=True)
    samples = []
    for path in cfg.ticker_paths():
        s = load_ticker(path)
        parts = split(s, cfg.split)
        chosen = {"train": [parts.train], "test": [parts.test], "independent": [parts.independent]}.get(args.split, [s])
        for part in chosen:
            samples.extend(sliding_windows(part, spec))
    for smp in samples:
        (out / chart_filename(smp.ticker, smp.end, spec)).write_bytes(encode_png(render_window(smp.window, spec)))
    (out / "manifest.csv").write_text(manifest_csv(samples))
    up, down = class_balance(samples)
    print(f"{len(samples)} charts in {out} (up {up}, down {down})")


def cmd_train(args, cfg):
    cell = _single_cell(cfg)
    row, _ = harness.run_cell(cfg, cell, harness.load_series(cfg))
    _print_row(row)
    print(f"checkpoint: {row.checkpoint}")


def _checkpoint(args, cfg, cell) -> Path:
    return args.checkpoint or cfg.out_dir / "checkpoints" / cell.checkpoint_name


def cmd_evaluate(args, cfg):
    cell = _single_cell(cfg)
    _print_row(harness.evaluate_checkpoint(_checkpoint(args, cfg, cell), cfg, cell))


def cmd_independent(args, cfg):
    cell = _single_cell(cfg)
    _print_row(harness.independent_test(_checkpoint(args, cfg, cell), args.independent_file, cell, cfg.split))


def cmd_predict(args, cfg):
    cell = _single_cell(cfg)
    paths = cfg.ticker_paths()
    if len(paths) != 1:
        raise ConfigError("predict needs exactly one --ticker")
    pred = harness.predict_date(_checkpoint(args, cfg, cell), paths[0], args.date, cell, cfg.out_dir)
    print(f"{pred.label} {pred.prob:.4f} window_end={pred.window_end} chart={pred.chart_path}")


def cmd_serve(args, cfg):
    from .server import serve

    classifiers = {c.classifier for c in cfg.cells}
    serve(cfg, args.port, "CNN" if "CNN" in classifiers else sorted(classifiers)[0], args.host)


def cmd_grid(args, cfg):
    report = harness.run_experiment(cfg)
    print(report.to_table(), end="")
    print(f"report: {cfg.out_dir / 'report.csv'}")


COMMANDS = {
    "ingest": cmd_ingest,
    "render": cmd_render,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "independent": cmd_independent,
    "predict": cmd_predict,
    "serve": cmd_serve,
    "grid": cmd_grid,
}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad usage, which would read as a data error
        return 0 if exc.code in (0, None) else 1
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (ContractError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
