"""Scaled experiments on synthetic series, run through the normal grid harness.

The momentum generator (A) has a learnable next-day signal and the random
walk (B) has none; together they check that the image pipeline and CNN can
pick up directional structure without inventing it.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import harness
from .harness import Cell, ExperimentConfig
from .market_data import Series, SplitSpec, serialize_csv
from .nn import Network, TrainConfig, build_table2_network, train
from .raster import render_window, to_tensor
from .synthetic import business_days, momentum_series, random_walk_series
from .windows import DatasetSpec, Label, sliding_windows

log = logging.getLogger(__name__)

START = dt.date(2000, 1, 3)


def synthetic_split(n_bars: int = 2000, n_train: int = 1600) -> SplitSpec:
    """First ``n_train`` business days train, the rest test (and independent)."""
    days = business_days(START, n_bars)
    return SplitSpec(START, days[n_train - 1], days[n_train], days[-1], days[n_train], days[-1])


@dataclass
class SyntheticResult:
    generator: str
    period: int
    dimension: int
    accuracy: float
    row: harness.ReportRow


def synthetic_signal(
    out_dir: str | Path,
    periods: tuple[int, ...] = (5, 20),
    dimension: int = 20,
    epochs: int = 15,
    seed: int = 7,
    data_seed: int = 7,
    n_bars: int = 2000,
) -> list[SyntheticResult]:
    """CNN test accuracy per generator and period on a chronological split.

    Generator B is run at the longest period only.
    """
    out_dir = Path(out_dir)
    results = []
    for name, series in (("A", momentum_series(n_bars, seed=data_seed)), ("B", random_walk_series(n_bars, seed=data_seed))):
        data = out_dir / name / "data"
        data.mkdir(parents=True, exist_ok=True)
        (data / f"{series.ticker}.csv").write_text(serialize_csv(series))
        cells = tuple(Cell("CNN", p, dimension, False) for p in (periods if name == "A" else periods[-1:]))
        cfg = ExperimentConfig(
            data, out_dir / name, cells, split=synthetic_split(n_bars), train=TrainConfig(epochs=epochs), seed=seed
        )
        for row in harness.run_experiment(cfg).rows:
            if row.error:
                raise RuntimeError(f"generator {name} {row.classifier} p{row.period}: {row.error}")
            log.info("generator %s period %d: acc %.4f (%.0f s)", name, row.period, row.acc, row.seconds)
            results.append(SyntheticResult(name, row.period, row.dimension, row.acc, row))
    return results


def balanced_subset(series: Series, spec: DatasetSpec, per_class: int) -> tuple[np.ndarray, np.ndarray]:
    """The first ``per_class`` Up and Down windows of ``series`` as tensors."""
    samples = sliding_windows(series, spec)
    up = [s for s in samples if s.label == Label.UP][:per_class]
    down = [s for s in samples if s.label == Label.DOWN][:per_class]
    if min(len(up), len(down)) < per_class:
        raise ValueError(f"series has {len(up)} up and {len(down)} down windows, need {per_class} each")
    chosen = up + down
    x = np.stack([to_tensor(render_window(s.window, spec)) for s in chosen])
    return x, np.array([int(s.label) for s in chosen])


def overfit(
    per_class: int = 16,
    period: int = 20,
    dimension: int = 20,
    max_epochs: int = 200,
    seed: int = 0,
) -> tuple[int | None, float]:
    """Epochs until the network fits a small balanced set exactly.

    Windows come from a random walk, so success means memorisation rather
    than signal. Returns (epoch reached, or None, and final accuracy), with
    accuracy measured in inference mode.
    """
    spec = DatasetSpec(period, dimension)
    x, y = balanced_subset(random_walk_series(400, seed=11), spec, per_class)
    net = Network(build_table2_network(spec), seed=seed)
    state = {"epoch": None, "acc": 0.0}

    def check(epoch, _trace):
        state["acc"] = float((net.predict_proba(x).argmax(axis=1) == y).mean())
        if state["acc"] == 1.0:
            state["epoch"] = epoch
            return True
        return False

    config = TrainConfig(epochs=max_epochs, batch_size=len(y), shuffle_seed=seed + 1, dropout_seed=seed + 2)
    train(net, x, y, config, on_epoch=check)
    return state["epoch"], state["acc"]


def determinism(data_dir: str | Path, out_dir: str | Path, cell: Cell, split: SplitSpec, seed: int = 0, epochs: int = 2):
    """Run the same one-cell grid twice; return both (row keys, checkpoint sha256)."""
    runs = []
    for tag in ("run1", "run2"):
        cfg = ExperimentConfig(Path(data_dir), Path(out_dir) / tag, (cell,), split=split, train=TrainConfig(epochs=epochs), seed=seed)
        report = harness.run_experiment(cfg)
        ckpt = cfg.out_dir / "checkpoints" / cell.checkpoint_name
        runs.append(([r.key() for r in report.rows], hashlib.sha256(ckpt.read_bytes()).hexdigest()))
    return runs
