"""Walk-forward next-month price forecasting and grid search.

Every windowed sample carries the target's own history as input column 0,
followed by the remaining feature columns in the order given. Built-in
forecasters are closed-form and deterministic; the ``external`` family
replays predictions produced elsewhere.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError, InsufficientDataError
from .ingest import HeadlineRecord, MonthlySeries, parse_month, prev_month
from .sentiment import HeadlineFilter, fill_neutral, monthly_score

logger = logging.getLogger(__name__)

FAMILIES = ("persistence", "ar_ls", "ridge_window", "external")
TRAIN_MODES = ("expanding", "rolling")
DEFAULT_INITIAL_TRAIN = 8
TABULAR = "tabular"


class DegenerateFit(Exception):
    """Raised by a forecaster whose normal equations are singular."""


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Sample:
    inputs: np.ndarray  # window_len x n_features
    target: float
    target_month: str

    @property
    def issue_month(self) -> str:
        return prev_month(self.target_month)


@dataclass
class WindowedDataset:
    window_len: int
    feature_names: list[str]
    samples: list[Sample]

    def __len__(self):
        return len(self.samples)

    def targets(self) -> MonthlySeries:
        return MonthlySeries([(s.target_month, s.target) for s in self.samples], "target")


def build_windows(
    features: Mapping[str, MonthlySeries] | Sequence[MonthlySeries],
    target: MonthlySeries,
    window_len: int,
) -> WindowedDataset:
    """Slice aligned monthly series into (window, next-month target) samples.

    Sample ``i`` uses months ``[i, i + window_len)`` as input and month
    ``i + window_len`` as target, so ``len(target) - window_len`` samples
    result.
    """
    if window_len < 1:
        raise DataError(f"window length must be >= 1, got {window_len}")
    if not target.is_contiguous():
        raise DataError("target series must cover contiguous months")
    if isinstance(features, Mapping):
        named = list(features.items())
    else:
        named = [(s.label or f"f{i}", s) for i, s in enumerate(features)]
    tname = target.label or "target"
    named = [(n, s) for n, s in named if s is not target and n != tname]

    months = target.months()
    if len(months) < window_len + 1:
        raise DataError(f"{len(months)} months is too short for a {window_len}-month window")
    columns = [target.values()]
    for name, series in named:
        missing = [m for m in months if m not in series]
        if missing:
            raise DataError(f"feature {name!r} is missing months {missing[:3]}")
        columns.append([series[m] for m in months])
    matrix = np.column_stack(columns).astype(float)
    y = matrix[:, 0]

    samples = [
        Sample(matrix[i : i + window_len].copy(), float(y[i + window_len]), months[i + window_len])
        for i in range(len(months) - window_len)
    ]
    return WindowedDataset(window_len, [tname] + [n for n, _ in named], samples)


# ---------------------------------------------------------------------------
# forecasters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ForecasterSpec:
    """A forecaster configuration.

    ``name`` distinguishes templates sharing a family (it defaults to the
    family). Keys in ``hyperparams`` that a family does not use, such as
    ``hidden_size`` or ``num_layers`` for replayed neural runs, are carried
    through untouched.
    """

    family: str
    hyperparams: Mapping[str, Any] = field(default_factory=dict)
    feature_set: str = TABULAR
    window_len: int = 1
    name: str = ""

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown forecaster family {self.family!r}; choose from {FAMILIES}")
        object.__setattr__(self, "hyperparams", dict(self.hyperparams))
        if not self.name:
            object.__setattr__(self, "name", self.family)
        hp = self.hyperparams
        if self.family == "ar_ls":
            order = hp.get("order")
            if not isinstance(order, int) or order < 1:
                raise ConfigError("ar_ls needs an integer hyperparameter 'order' >= 1")
            if order > self.window_len:
                raise ConfigError(f"ar_ls order {order} exceeds window length {self.window_len}")
        elif self.family == "ridge_window":
            pen = hp.get("penalty")
            if not isinstance(pen, (int, float)) or pen < 0:
                raise ConfigError("ridge_window needs a non-negative hyperparameter 'penalty'")
        elif self.family == "external":
            if "predictions" not in hp and "path" not in hp:
                raise ConfigError("external family needs 'predictions' or 'path'")

    @property
    def source(self) -> str:
        return sentiment_source(self.feature_set) or "none"

    def hyperparams_key(self) -> str:
        shown = {k: v for k, v in self.hyperparams.items() if k != "predictions"}
        return json.dumps(shown, sort_keys=True, default=str)

    def group_key(self) -> tuple[str, str, int]:
        return (self.name, self.feature_set, self.window_len)


def sentiment_source(feature_set: str) -> Optional[str]:
    """``"tabular+reuters"`` -> ``"reuters"``; ``"tabular"`` -> ``None``."""
    if feature_set == TABULAR:
        return None
    head, sep, src = feature_set.partition("+")
    if head != TABULAR or not sep or not src:
        raise ConfigError(f"feature set must be 'tabular' or 'tabular+<source>', got {feature_set!r}")
    return src.lower()


def _persistence(train_x, train_y, x_new, hp) -> float:
    return float(x_new[-1, 0])


def _ar_ls(train_x, train_y, x_new, hp) -> float:
    order = hp["order"]
    intercept = hp.get("intercept", True)

    def row(x):
        lags = x[::-1, 0][:order]
        return np.concatenate(([1.0], lags)) if intercept else lags

    X = np.array([row(x) for x in train_x])
    y = np.asarray(train_y)
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        raise DegenerateFit(f"rank {rank} < {X.shape[1]} parameters")
    return float(row(x_new) @ coef)


def _ridge_window(train_x, train_y, x_new, hp) -> float:
    lam = float(hp["penalty"])
    X = np.array([x.ravel() for x in train_x])
    y = np.asarray(train_y)
    mu, y_mu = X.mean(axis=0), y.mean()
    sd = X.std(axis=0)
    sd[sd == 0.0] = 1.0
    Z = (X - mu) / sd
    gram = Z.T @ Z + lam * np.eye(Z.shape[1])
    if np.linalg.cond(gram) > 1e12:
        raise DegenerateFit("ill-conditioned ridge system")
    beta = np.linalg.solve(gram, Z.T @ (y - y_mu))
    return float(y_mu + ((x_new.ravel() - mu) / sd) @ beta)


_FORECASTERS: dict[str, Callable] = {
    "persistence": _persistence,
    "ar_ls": _ar_ls,
    "ridge_window": _ridge_window,
}


# ---------------------------------------------------------------------------
# walk-forward
# ---------------------------------------------------------------------------

@dataclass
class PredictionSeries:
    """Predicted closes keyed by the month being predicted."""

    entries: MonthlySeries
    spec: Optional[ForecasterSpec] = None
    warnings: list[str] = field(default_factory=list)


def load_external_predictions(path) -> MonthlySeries:
    """Read a ``month,predicted_close`` CSV; ``month`` is the predicted month."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"predictions file not found: {path}")
    rows = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"month", "predicted_close"} <= {f.strip() for f in reader.fieldnames}:
            raise DataError(f"{path}: expected columns month,predicted_close")
        reader.fieldnames = [f.strip() for f in reader.fieldnames]
        for row in reader:
            line = reader.line_num
            month = (row["month"] or "").strip()
            try:
                parse_month(month)
                value = float(row["predicted_close"])
            except (DataError, ValueError, TypeError):
                raise DataError(f"{path}:{line}: bad row {row}") from None
            rows.append((month, value))
    rows.sort()
    for (a, _), (b, _) in zip(rows, rows[1:]):
        if a == b:
            raise DataError(f"{path}: duplicate month {a}")
    return MonthlySeries(rows, "predicted_close")


def _external_predictions(spec: ForecasterSpec) -> MonthlySeries:
    hp = spec.hyperparams
    if "predictions" in hp:
        preds = hp["predictions"]
        return preds if isinstance(preds, MonthlySeries) else MonthlySeries(sorted(dict(preds).items()), "predicted_close")
    fmt = {k: v for k, v in hp.items() if k != "path"}
    path = str(hp["path"]).format(name=spec.name, feature_set=spec.feature_set, source=spec.source, window=spec.window_len, **fmt)
    return load_external_predictions(path)


def walk_forward(
    spec: ForecasterSpec,
    dataset: Optional[WindowedDataset],
    initial_train: int = DEFAULT_INITIAL_TRAIN,
    train_mode: str = "expanding",
    train_len: Optional[int] = None,
) -> PredictionSeries:
    """Refit on the samples preceding each step and predict that step's target.

    In ``expanding`` mode step ``t`` trains on samples ``[0, t)``; in
    ``rolling`` mode on the last ``train_len`` of them. A singular fit falls
    back to the persistence forecast for that step and is recorded in
    ``warnings``.
    """
    if spec.family == "external":
        return PredictionSeries(_external_predictions(spec), spec)
    if train_mode not in TRAIN_MODES:
        raise ConfigError(f"train_mode must be one of {TRAIN_MODES}")
    if initial_train < 1:
        raise ConfigError("initial_train must be >= 1")
    if dataset is None or not dataset.samples:
        raise DataError("walk-forward needs a non-empty dataset")
    n = len(dataset.samples)
    if initial_train >= n:
        raise InsufficientDataError(f"initial_train={initial_train} leaves no test samples out of {n}")
    width = train_len or initial_train

    fit = _FORECASTERS[spec.family]
    hp = spec.hyperparams
    out, warnings = [], []
    for t in range(initial_train, n):
        lo = 0 if train_mode == "expanding" else max(0, t - width)
        train = dataset.samples[lo:t]
        x_new = dataset.samples[t].inputs
        try:
            yhat = fit([s.inputs for s in train], [s.target for s in train], x_new, hp)
            if not math.isfinite(yhat):
                raise DegenerateFit("non-finite prediction")
        except (DegenerateFit, np.linalg.LinAlgError) as exc:
            yhat = float(x_new[-1, 0])
            msg = f"{spec.name} {dataset.samples[t].target_month}: {exc}; used persistence"
            logger.warning(msg)
            warnings.append(msg)
        out.append((dataset.samples[t].target_month, yhat))
    return PredictionSeries(MonthlySeries(out, "predicted_close"), spec, warnings)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PointMetrics:
    """R², RMSE and MAE; ``r2`` is ``None`` when the true series is constant."""

    r2: Optional[float]
    rmse: float
    mae: float
    n: int


def point_metrics(true: MonthlySeries, pred: PredictionSeries | MonthlySeries) -> PointMetrics:
    entries = pred.entries if isinstance(pred, PredictionSeries) else pred
    months = [m for m in entries if m in true]
    if len(months) < 2:
        raise InsufficientDataError(f"need at least 2 overlapping months, got {len(months)}")
    y = np.array([true[m] for m in months])
    yhat = np.array([entries[m] for m in months])
    err = y - yhat
    sse = float(np.sum(err * err))
    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = None if np.ptp(y) == 0.0 else 1.0 - sse / sst
    return PointMetrics(r2, math.sqrt(sse / len(months)), float(np.mean(np.abs(err))), len(months))


# ---------------------------------------------------------------------------
# grid search
# ---------------------------------------------------------------------------

@dataclass
class ForecastRun:
    spec: ForecasterSpec
    predictions: PredictionSeries
    metrics: Optional[PointMetrics]
    error: Optional[str] = None

    def rank_key(self):
        m = self.metrics
        if m is None:
            return (2, 0.0, 0.0, self.spec.hyperparams_key())
        if m.r2 is None:
            return (1, 0.0, m.rmse, self.spec.hyperparams_key())
        return (0, -m.r2, m.rmse, self.spec.hyperparams_key())


@dataclass
class GridResult:
    n_cells: int
    cells: list[ForecastRun]
    best: list[ForecastRun]


DatasetBuilder = Callable[[str, int], Optional[WindowedDataset]]


def grid_cells(
    templates: Sequence[ForecasterSpec],
    grids: Mapping[str, Mapping[str, Sequence[Any]]],
    feature_sets: Sequence[str],
    windows: Sequence[int],
) -> list[ForecasterSpec]:
    """Expand templates into one spec per (template, feature set, window, hyperparameter point)."""
    cells = []
    for tpl in templates:
        grid = grids.get(tpl.name, {})
        keys = sorted(grid)
        points = [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))] or [{}]
        for fs in feature_sets:
            for w in windows:
                for point in points:
                    cells.append(ForecasterSpec(tpl.family, {**tpl.hyperparams, **point}, fs, w, tpl.name))
    return cells


def grid_search(
    templates: Sequence[ForecasterSpec],
    grids: Mapping[str, Mapping[str, Sequence[Any]]],
    dataset_builder: DatasetBuilder,
    feature_sets: Sequence[str] = (TABULAR,),
    windows: Sequence[int] = (1, 3, 6, 12),
    initial_train: int = DEFAULT_INITIAL_TRAIN,
    train_mode: str = "expanding",
    workers: int = 1,
) -> GridResult:
    """Evaluate every grid cell and keep the best per (name, feature set, window).

    Cells are ranked by R² descending, then RMSE ascending, then the
    hyperparameters' canonical JSON text, so the outcome does not depend on
    evaluation order.
    """
    specs = grid_cells(templates, grids, feature_sets, windows)
    if not specs:
        raise ConfigError("empty grid")
    datasets: dict[tuple[str, int], Optional[WindowedDataset]] = {}
    for key in sorted({(s.feature_set, s.window_len) for s in specs}):
        datasets[key] = dataset_builder(*key)

    def run(spec: ForecasterSpec) -> ForecastRun:
        ds = datasets[(spec.feature_set, spec.window_len)]
        try:
            preds = walk_forward(spec, ds, initial_train, train_mode)
            truth = ds.targets() if ds is not None else None
            metrics = point_metrics(truth, preds) if truth is not None else None
            return ForecastRun(spec, preds, metrics)
        except (DataError, InsufficientDataError) as exc:
            return ForecastRun(spec, PredictionSeries(MonthlySeries(), spec), None, str(exc))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(run, specs))
    else:
        runs = [run(s) for s in specs]

    groups: dict[tuple, ForecastRun] = {}
    for r in runs:
        key = r.spec.group_key()
        if key not in groups or r.rank_key() < groups[key].rank_key():
            groups[key] = r
    best = sorted(groups.values(), key=lambda r: (r.rank_key(), r.spec.group_key()))
    return GridResult(len(specs), runs, best)


def runs_to_csv(runs: Iterable[ForecastRun]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["family", "source", "window", "hyperparams", "r2", "rmse", "mae"])
    for r in runs:
        m = r.metrics
        w.writerow([
            r.spec.name,
            r.spec.source,
            r.spec.window_len,
            r.spec.hyperparams_key(),
            "" if m is None or m.r2 is None else repr(m.r2),
            "" if m is None else repr(m.rmse),
            "" if m is None else repr(m.mae),
        ])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# dataset assembly from monthly tables
# ---------------------------------------------------------------------------

def make_dataset_builder(
    monthly: Mapping[str, MonthlySeries],
    headlines: Sequence[HeadlineRecord] = (),
    feature_columns: Optional[Sequence[str]] = None,
    target: str = "close",
) -> DatasetBuilder:
    """Dataset factory over resampled price/feature columns.

    ``tabular+<source>`` feature sets append that source's monthly sentiment
    score, with months lacking headlines set to neutral.
    """
    closes = monthly[target]
    cols = [c for c in (feature_columns if feature_columns is not None else monthly) if c != target]
    missing = [c for c in cols if c not in monthly]
    if missing:
        raise ConfigError(f"unknown feature columns {missing}")

    def build(feature_set: str, window_len: int) -> WindowedDataset:
        feats = {c: monthly[c] for c in cols}
        src = sentiment_source(feature_set)
        if src is not None:
            sent = monthly_score(headlines, HeadlineFilter(sources=frozenset({src})), f"sentiment_{src}")
            feats[sent.label] = fill_neutral(sent, closes.months())
        return build_windows(feats, closes, window_len)

    return build
