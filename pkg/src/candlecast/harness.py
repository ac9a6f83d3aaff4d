"""Experiment grid, independent testing and single-date prediction."""

from __future__ import annotations

import configparser
import csv
import dataclasses
import datetime as dt
import hashlib
import io
import itertools
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import metrics
from .classic import ForestClassifier, KnnClassifier, load_model, save_model
from .errors import CheckpointError, ConfigError, ContractError, DataError
from .market_data import Series, SplitSpec, load_ticker, split
from .nn import Network, TrainConfig, build_table2_network, load_weights, save_weights, train
from .nn.checkpoint import WEIGHTS_MAGIC
from .raster import encode_png, render_window, to_tensor, chart_filename
from .windows import DIMENSIONS, PERIODS, DatasetSpec, Label, LabeledSample, assert_no_leakage, sliding_windows

log = logging.getLogger(__name__)

CLASSIFIERS = ("CNN", "RF", "KNN")


@dataclass(frozen=True)
class Cell:
    classifier: str
    period: int
    dimension: int
    volume: bool

    def __post_init__(self):
        if self.classifier not in CLASSIFIERS:
            raise ConfigError(f"unknown classifier {self.classifier!r}; choose from {', '.join(CLASSIFIERS)}")
        if self.period not in PERIODS:
            raise ConfigError(f"period must be one of {PERIODS}, got {self.period}")
        if self.dimension not in DIMENSIONS:
            raise ConfigError(f"dimension must be one of {DIMENSIONS}, got {self.dimension}")

    @property
    def dataset_spec(self) -> DatasetSpec:
        return DatasetSpec(self.period, self.dimension, self.volume)

    @property
    def slug(self) -> str:
        return f"{self.classifier.lower()}_p{self.period}_d{self.dimension}_{'vol' if self.volume else 'novol'}"

    @property
    def checkpoint_name(self) -> str:
        return self.slug + (".cfw" if self.classifier == "CNN" else ".cfm")


def make_grid(classifiers=CLASSIFIERS, periods=PERIODS, dimensions=DIMENSIONS, volumes=(False, True)) -> tuple[Cell, ...]:
    return tuple(Cell(c, p, d, v) for c, p, d, v in itertools.product(classifiers, periods, dimensions, volumes))


@dataclass(frozen=True)
class ExperimentConfig:
    data_dir: Path
    out_dir: Path
    cells: tuple[Cell, ...]
    split: SplitSpec = field(default_factory=SplitSpec.reference)
    tickers: tuple[str, ...] = ()  # empty: every *.csv in data_dir
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    n_trees: int = 100
    k: int = 5

    def __post_init__(self):
        if not self.cells:
            raise ConfigError("experiment grid is empty")
        object.__setattr__(self, "data_dir", Path(self.data_dir))
        object.__setattr__(self, "out_dir", Path(self.out_dir))

    def ticker_paths(self) -> list[Path]:
        if self.tickers:
            return [self.data_dir / f"{t}.csv" for t in self.tickers]
        paths = sorted(self.data_dir.glob("*.csv"))
        if not paths:
            raise DataError(f"no ticker files in {self.data_dir}")
        return paths


def cell_seed(master: int, cell: Cell) -> int:
    """Seed that depends only on the master seed and the cell's coordinates."""
    digest = hashlib.sha256(f"{master}|{cell.slug}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


# --- config file -----------------------------------------------------------


def _list(s: str) -> list[str]:
    return [p.strip() for p in s.split(",") if p.strip()]


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("on", "1", "true", "yes", "vol"):
        return True
    if v in ("off", "0", "false", "no", "novol"):
        return False
    raise ConfigError(f"not a volume flag: {s!r}")


def _int(s: str, what: str) -> int:
    try:
        return int(s)
    except ValueError:
        raise ConfigError(f"{what}: expected an integer, got {s!r}") from None


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Read an INI-style config; non-None ``overrides`` win over file values.

    Recognised keys (all optional) live in ``[experiment]`` and ``[train]``::

        [experiment]
        data_dir, out_dir, tickers, seed, classifiers, periods, dimensions,
        volume, train_start, train_end, test_start, test_end, indep_start,
        indep_end, trees, k
        [train]
        epochs, lr, batch, optimizer
    """
    cp = configparser.ConfigParser()
    if path is not None:
        if not Path(path).is_file():
            raise ConfigError(f"config file {path} not found")
        cp.read(path)
    ex = dict(cp["experiment"]) if cp.has_section("experiment") else {}
    tr = dict(cp["train"]) if cp.has_section("train") else {}
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        (tr if key in ("epochs", "lr", "batch", "optimizer") else ex)[key] = val if isinstance(val, str) else _unparse(val)

    try:
        base = SplitSpec.reference()
        dates = {}
        for f in dataclasses.fields(SplitSpec):
            dates[f.name] = dt.date.fromisoformat(ex[f.name]) if f.name in ex else getattr(base, f.name)
        split_spec = SplitSpec(**dates)
        cells = make_grid(
            tuple(c.upper() for c in _list(ex.get("classifiers", ",".join(CLASSIFIERS)))),
            tuple(_int(p, "periods") for p in _list(ex.get("periods", "5,10,20"))),
            tuple(_int(d, "dimensions") for d in _list(ex.get("dimensions", "20,50"))),
            tuple(_bool(v) for v in _list(ex.get("volume", "off,on"))),
        )
        train_cfg = TrainConfig(
            learning_rate=float(tr.get("lr", 1e-3)),
            batch_size=_int(tr.get("batch", "32"), "batch"),
            epochs=_int(tr.get("epochs", "50"), "epochs"),
            optimizer=tr.get("optimizer", "adam").lower(),
        )
    except (ValueError, ContractError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    return ExperimentConfig(
        data_dir=Path(ex.get("data_dir", "data")),
        out_dir=Path(ex.get("out_dir", "out")),
        cells=cells,
        split=split_spec,
        tickers=tuple(_list(ex.get("tickers", ""))),
        train=train_cfg,
        seed=_int(ex.get("seed", "0"), "seed"),
        n_trees=_int(ex.get("trees", "100"), "trees"),
        k=_int(ex.get("k", "5"), "k"),
    )


def _unparse(v) -> str:
    if isinstance(v, bool):
        return "on" if v else "off"
    if isinstance(v, (list, tuple)):
        return ",".join(_unparse(x) for x in v)
    return str(v)


# --- models --------------------------------------------------------------


class CnnModel:
    kind = "cnn"

    def __init__(self, cell: Cell, seed: int = 0, train_config: TrainConfig | None = None):
        seeds = np.random.SeedSequence(seed).generate_state(3)
        self.net = Network(build_table2_network(cell.dataset_spec), seed=int(seeds[0]))
        base = train_config or TrainConfig()
        self.train_config = dataclasses.replace(base, shuffle_seed=int(seeds[1]), dropout_seed=int(seeds[2]))

    def fit(self, x, y) -> "CnnModel":
        self.trace = train(self.net, x, y, self.train_config)
        return self

    def predict(self, x) -> tuple[np.ndarray, np.ndarray]:
        p = self.net.predict_proba(x).astype(np.float64)
        return (p[:, 1] > p[:, 0]).astype(np.int64), p[:, 1]


def new_model(cell: Cell, config: ExperimentConfig, seed: int):
    if cell.classifier == "CNN":
        return CnnModel(cell, seed, config.train)
    if cell.classifier == "RF":
        return ForestClassifier(config.n_trees, seed)
    return KnnClassifier(config.k)


def save_any(model, path: Path) -> None:
    if isinstance(model, CnnModel):
        save_weights(model.net, path)
    else:
        save_model(model, path)


def load_any(path: str | Path, cell: Cell):
    """Load a checkpoint and check it fits ``cell``; errors name both shapes."""
    path = Path(path)
    try:
        magic = path.read_bytes()[:4]
    except OSError as exc:
        raise CheckpointError(f"cannot read {path}: {exc}") from None
    if magic == WEIGHTS_MAGIC:
        if cell.classifier != "CNN":
            raise CheckpointError(f"{path} holds CNN weights but the cell is {cell.classifier}")
        model = CnnModel(cell)
        load_weights(model.net, path)
        return model
    model = load_model(path)
    want = {"RF": "forest", "KNN": "knn"}.get(cell.classifier)
    if model.kind != want:
        raise CheckpointError(f"{path} holds a {model.kind} model but the cell is {cell.classifier}")
    n_feat = model.forest.trees[0].n_features if model.kind == "forest" else model.tree.points.shape[1]
    expect = cell.dimension * cell.dimension * 3
    if n_feat != expect:
        raise CheckpointError(f"{path}: model expects {n_feat} input features, cell {cell.slug} produces {expect}")
    return model


# --- datasets --------------------------------------------------------------


def tensorize(samples: Sequence[LabeledSample], spec: DatasetSpec) -> tuple[np.ndarray, np.ndarray]:
    d = spec.dimension
    x = np.empty((len(samples), d, d, 3), dtype=np.float32)
    for i, s in enumerate(samples):
        x[i] = to_tensor(render_window(s.window, spec))
    y = np.array([int(s.label) for s in samples], dtype=np.int64)
    return x, y


def windows_in(series_list: Iterable[Series], spec: DatasetSpec) -> list[LabeledSample]:
    out: list[LabeledSample] = []
    for s in series_list:
        ws = sliding_windows(s, spec)
        if ws.reason:
            log.info(ws.reason)
        out.extend(ws)
    return out


@dataclass
class ReportRow:
    classifier: str
    period: int
    dimension: int
    volume: bool
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    sens: float = 0.0
    spec: float = 0.0
    acc: float = 0.0
    mcc: float = 0.0
    f: float = 0.0
    n_train: int = 0
    n_test: int = 0
    seconds: float = 0.0
    checkpoint: str = ""
    error: str = ""

    @classmethod
    def for_cell(cls, cell: Cell, **kw) -> "ReportRow":
        return cls(cell.classifier, cell.period, cell.dimension, cell.volume, **kw)

    @property
    def confusion(self) -> metrics.ConfusionMatrix:
        return metrics.ConfusionMatrix(self.tp, self.fp, self.tn, self.fn)

    def fill(self, cm: metrics.ConfusionMatrix) -> "ReportRow":
        self.tp, self.fp, self.tn, self.fn = cm.tp, cm.fp, cm.tn, cm.fn
        for k, v in metrics.summary(cm).items():
            setattr(self, k, v)
        return self

    def key(self) -> tuple:
        """Everything except wall-clock time and the output directory."""
        d = dataclasses.asdict(self)
        d.pop("seconds")
        d["checkpoint"] = Path(d["checkpoint"]).name if d["checkpoint"] else ""
        return tuple(d.values())


REPORT_FIELDS = [f.name for f in dataclasses.fields(ReportRow)]


@dataclass
class RunReport:
    rows: list[ReportRow] = field(default_factory=list)

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(REPORT_FIELDS)
        for r in self.rows:
            vals = dataclasses.asdict(r)
            vals["volume"] = "on" if r.volume else "off"
            for k in ("sens", "spec", "acc", "mcc", "f"):
                vals[k] = repr(vals[k])
            vals["seconds"] = f"{r.seconds:.3f}"
            w.writerow([vals[k] for k in REPORT_FIELDS])
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "RunReport":
        rows = []
        for rec in csv.DictReader(io.StringIO(text)):
            rows.append(
                ReportRow(
                    rec["classifier"], int(rec["period"]), int(rec["dimension"]), rec["volume"] == "on",
                    *(int(rec[k]) for k in ("tp", "fp", "tn", "fn")),
                    *(float(rec[k]) for k in ("sens", "spec", "acc", "mcc", "f")),
                    int(rec["n_train"]), int(rec["n_test"]), float(rec["seconds"]), rec["checkpoint"], rec["error"],
                )
            )  # fmt: skip
        return cls(rows)

    def to_table(self) -> str:
        """Aligned text table, volume first then no volume, percentages to one decimal."""
        head = ("Volume", "Classifier", "Period", "Dimension", "Sensitivity", "Specificity", "Accuracy", "MCC", "F")
        lines = []
        for vol in (True, False):
            for r in (r for r in self.rows if r.volume == vol):
                tag = "with volume" if vol else "without volume"
                if r.error:
                    lines.append((tag, r.classifier, str(r.period), str(r.dimension), "error: " + r.error, "", "", "", ""))
                else:
                    lines.append((tag, r.classifier, str(r.period), str(r.dimension), metrics.percent(r.sens),
                                  metrics.percent(r.spec), metrics.percent(r.acc), f"{r.mcc:.3f}", f"{r.f:.3f}"))  # fmt: skip
        widths = [max(len(x[i]) for x in [head, *lines]) for i in range(len(head))]
        fmt = lambda row: "  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip()
        return "\n".join([fmt(head), fmt(tuple("-" * w for w in widths)), *map(fmt, lines)]) + "\n"


def _evaluate(model, samples, spec) -> metrics.ConfusionMatrix:
    x, y = tensorize(samples, spec)
    pred, _ = model.predict(x)
    return metrics.confusion(y.tolist(), pred.tolist())


def run_cell(config: ExperimentConfig, cell: Cell, series_list: Sequence[Series]) -> tuple[ReportRow, object]:
    """Train on the training range, test on the testing range, save a checkpoint."""
    t0 = time.perf_counter()
    spec = cell.dataset_spec
    splits = [split(s, config.split) for s in series_list]
    train_s = windows_in((sp.train for sp in splits), spec)
    test_s = windows_in((sp.test for sp in splits), spec)
    assert_no_leakage(train_s, config.split.train_end)
    if not train_s or not test_s:
        raise DataError(f"{cell.slug}: {len(train_s)} training and {len(test_s)} testing windows")
    if len({s.label for s in train_s}) < 2:
        log.warning("%s: training windows contain a single class", cell.slug)
    x, y = tensorize(train_s, spec)
    model = new_model(cell, config, cell_seed(config.seed, cell)).fit(x, y)
    cm = _evaluate(model, test_s, spec)
    ckpt_dir = config.out_dir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    ckpt = ckpt_dir / cell.checkpoint_name
    save_any(model, ckpt)
    row = ReportRow.for_cell(cell, n_train=len(train_s), n_test=len(test_s), checkpoint=str(ckpt)).fill(cm)
    row.seconds = time.perf_counter() - t0
    return row, model


def load_series(config: ExperimentConfig) -> list[Series]:
    return [load_ticker(p) for p in config.ticker_paths()]


def run_experiment(config: ExperimentConfig, write: bool = True) -> RunReport:
    """Run every grid cell; a failing cell becomes an error row."""
    report = RunReport()
    try:
        series_list: list[Series] | None = load_series(config)
        load_error = ""
    except DataError as exc:
        series_list, load_error = None, str(exc)
    for cell in config.cells:
        if series_list is None:
            report.rows.append(ReportRow.for_cell(cell, error=load_error))
            continue
        log.info("running %s", cell.slug)
        try:
            row, _ = run_cell(config, cell, series_list)
        except (DataError, ContractError, RuntimeError) as exc:
            log.error("%s failed: %s", cell.slug, exc)
            row = ReportRow.for_cell(cell, error=str(exc))
        report.rows.append(row)
    if write:
        config.out_dir.mkdir(parents=True, exist_ok=True)
        (config.out_dir / "report.csv").write_text(report.to_csv())
        (config.out_dir / "report.txt").write_text(report.to_table())
    return report


def evaluate_checkpoint(checkpoint: str | Path, config: ExperimentConfig, cell: Cell) -> ReportRow:
    """Re-evaluate a saved model on the testing range of the configured tickers."""
    model = load_any(checkpoint, cell)
    spec = cell.dataset_spec
    test_s = windows_in((split(s, config.split).test for s in load_series(config)), spec)
    if not test_s:
        raise DataError(f"no testing windows for {cell.slug}")
    return ReportRow.for_cell(cell, n_test=len(test_s), checkpoint=str(checkpoint)).fill(_evaluate(model, test_s, spec))


def independent_test(checkpoint: str | Path, ticker_file: str | Path, cell: Cell, split_spec: SplitSpec) -> ReportRow:
    """Evaluate, without training, on another instrument over the independent range."""
    model = load_any(checkpoint, cell)
    spec = cell.dataset_spec
    series = load_ticker(ticker_file).between(split_spec.indep_start, split_spec.indep_end)
    samples = sliding_windows(series, spec)
    if not samples:
        raise DataError(f"empty evaluation: {samples.reason}")
    return ReportRow.for_cell(cell, n_test=len(samples), checkpoint=str(checkpoint)).fill(_evaluate(model, samples, spec))


@dataclass(frozen=True)
class Prediction:
    label: Label
    prob: float  # probability of the predicted label
    window_end: dt.date
    chart: bytes
    chart_path: Path | None = None


def predict_window(model, series: Series, target: dt.date, cell: Cell) -> Prediction:
    """Predict the move into ``target`` from the ``period`` bars strictly before it."""
    history = series.before(target)
    if len(history) < cell.period:
        raise DataError(
            f"{series.ticker}: need {cell.period} trading days before {target}, {len(history)} available"
        )
    window = history.bars[-cell.period :]
    spec = cell.dataset_spec
    img = render_window(window, spec)
    label, p_up = model.predict(to_tensor(img)[None])
    label = Label(int(label[0]))
    prob = float(p_up[0]) if label == Label.UP else 1.0 - float(p_up[0])
    return Prediction(label, prob, window[-1].date, encode_png(img))


def predict_date(checkpoint: str | Path, ticker_file: str | Path, target: dt.date, cell: Cell, out_dir: str | Path) -> Prediction:
    """Predict and write the chart used as ``<ticker>_<window_end>_...png`` in ``out_dir``."""
    model = load_any(checkpoint, cell)
    series = load_ticker(ticker_file)
    pred = predict_window(model, series, target, cell)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / chart_filename(series.ticker, pred.window_end, cell.dataset_spec)
    path.write_bytes(pred.chart)
    return dataclasses.replace(pred, chart_path=path)
