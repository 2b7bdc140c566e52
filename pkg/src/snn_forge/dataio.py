"""Tabular dataset ingestion, class-mean imputation, min-max scaling, splits, folds and
information-gain feature ranking."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.stats import rankdata


class DataError(ValueError):
    """Raised for malformed input tables; carries the offending coordinates when known."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        where = ""
        if row is not None:
            where = f" (row {row}" + (f", column {column!r})" if column is not None else ")")
        super().__init__(message + where)
        self.row = row
        self.column = column


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray  # (N, n); NaN marks a missing cell before imputation
    labels: np.ndarray  # (N,) in {0, 1}
    feature_names: tuple
    name: str = "dataset"
    normalization: tuple = ()  # per-feature (min, max)
    imputation_log: tuple = ()  # (row, column, filled value)
    row_ids: np.ndarray | None = None  # original row indices, for leakage audits

    def __post_init__(self):
        X = np.array(self.features, dtype=float)
        if X.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {X.shape}")
        y = np.array(self.labels, dtype=float).reshape(-1)
        if X.shape[0] != y.size:
            raise DataError(f"{X.shape[0]} feature rows but {y.size} labels")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise DataError("dataset needs at least one row and one feature")
        if not np.all((y == 0) | (y == 1)):
            raise DataError("labels must be binary 0/1")
        ids = np.arange(y.size) if self.row_ids is None else np.asarray(self.row_ids, dtype=int)
        for a in (X, y, ids):
            a.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "row_ids", ids)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if len(self.feature_names) != X.shape[1]:
            raise DataError(f"{len(self.feature_names)} feature names for {X.shape[1]} columns")

    @property
    def N(self) -> int:
        return self.features.shape[0]

    @property
    def n(self) -> int:
        return self.features.shape[1]

    @property
    def has_missing(self) -> bool:
        return bool(np.isnan(self.features).any())

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=int)
        return replace(self, features=self.features[rows], labels=self.labels[rows],
                       row_ids=self.row_ids[rows], imputation_log=())

    def checksum(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.features).tobytes())
        h.update(np.ascontiguousarray(self.labels).tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class DatasetManifest:
    label_column: str
    positive_token: str
    negative_token: str | None = None
    missing_token: str = "?"
    id_columns_to_drop: tuple = ()
    name: str | None = None
    csv: str | None = None
    baseline_key: str | None = None
    source: str | None = None
    path: Path | None = field(default=None, compare=False)

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        doc = json.loads(path.read_text())
        missing = [k for k in ("label_column", "positive_token") if k not in doc]
        if missing:
            raise DataError(f"manifest {path} lacks {', '.join(missing)}")
        known = {f for f in cls.__dataclass_fields__ if f != "path"}
        unknown = set(doc) - known
        if unknown:
            raise DataError(f"manifest {path} has unknown keys {sorted(unknown)}")
        doc["id_columns_to_drop"] = tuple(doc.get("id_columns_to_drop") or ())
        for k in ("positive_token", "negative_token"):
            if doc.get(k) is not None:
                doc[k] = str(doc[k])
        return cls(**doc, path=path)

    def csv_path(self) -> Path:
        if self.csv is None or self.path is None:
            raise DataError("manifest does not name a CSV file")
        return self.path.parent / self.csv


def load_csv(path, label_column: str, missing_token: str = "?", positive_token: str = "1",
             negative_token: str | None = None, id_columns=(), name: str | None = None) -> Dataset:
    """Parse a headed CSV; missing cells become NaN and are left for imputation."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path} is empty")
        header = [h.strip() for h in header]
        if label_column not in header:
            raise DataError(f"label column {label_column!r} not in header of {path}")
        for c in id_columns:
            if c not in header:
                raise DataError(f"id column {c!r} not in header of {path}")
        label_idx = header.index(label_column)
        drop = {header.index(c) for c in id_columns} | {label_idx}
        feat_idx = [i for i in range(len(header)) if i not in drop]
        rows, labels = [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DataError(f"expected {len(header)} cells, found {len(rec)}", row=lineno)
            tok = rec[label_idx].strip()
            if tok == positive_token:
                labels.append(1.0)
            elif negative_token is None or tok == negative_token:
                labels.append(0.0)
            else:
                raise DataError(f"label {tok!r} is neither {positive_token!r} nor {negative_token!r}",
                                row=lineno, column=label_column)
            vals = []
            for i in feat_idx:
                cell = rec[i].strip()
                if cell == missing_token:
                    vals.append(math.nan)
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"unparseable cell {cell!r}", row=lineno, column=header[i]) from None
                if not math.isfinite(v):
                    raise DataError(f"non-finite cell {cell!r}", row=lineno, column=header[i])
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise DataError(f"{path} has a header but no data rows")
    return Dataset(np.array(rows), np.array(labels), [header[i] for i in feat_idx],
                   name=name or path.stem)


def load_manifest(manifest_path, csv_path=None) -> Dataset:
    man = DatasetManifest.load(manifest_path)
    return load_csv(csv_path or man.csv_path(), man.label_column, man.missing_token,
                    man.positive_token, man.negative_token, man.id_columns_to_drop,
                    name=man.name)


@dataclass(frozen=True)
class ImputationStats:
    class_means: np.ndarray  # (2, n): row 0 for label 0, row 1 for label 1
    overall_means: np.ndarray  # (n,)


def fit_imputation(d: Dataset) -> ImputationStats:
    X = d.features
    means = np.empty((2, d.n))
    for cls in (0, 1):
        block = X[d.labels == cls]
        for j in range(d.n):
            col = block[:, j]
            col = col[~np.isnan(col)]
            if block.shape[0] and col.size == 0:
                raise DataError(f"class {cls} has no observed value for {d.feature_names[j]!r}",
                                column=d.feature_names[j])
            means[cls, j] = col.mean() if col.size else math.nan
    with np.errstate(invalid="ignore"):
        overall = np.nanmean(X, axis=0)
    return ImputationStats(means, overall)


def apply_imputation(d: Dataset, stats: ImputationStats, use_labels: bool = True) -> Dataset:
    """Fill NaN cells with the class mean (``use_labels``) or the overall mean."""
    X = d.features.copy()
    log = []
    for r, c in zip(*np.nonzero(np.isnan(X))):
        v = stats.class_means[int(d.labels[r]), c] if use_labels else stats.overall_means[c]
        if math.isnan(v):
            raise DataError("no statistic available to fill cell", row=int(r), column=d.feature_names[c])
        X[r, c] = v
        log.append((int(d.row_ids[r]), int(c), float(v)))
    return replace(d, features=X, imputation_log=tuple(log))


def impute_class_mean(d: Dataset) -> Dataset:
    """Replace each missing cell with the attribute mean over rows of the same class."""
    if not d.has_missing:
        return replace(d, imputation_log=())
    return apply_imputation(d, fit_imputation(d))


def fit_minmax(d: Dataset) -> tuple:
    return tuple((float(lo), float(hi)) for lo, hi in zip(d.features.min(axis=0), d.features.max(axis=0)))


def apply_minmax(d: Dataset, bounds) -> Dataset:
    """Affine map by stored bounds; constant features go to 0. Unseen values are clipped."""
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    X = np.where(span > 0, (d.features - lo) / safe, 0.0)
    return replace(d, features=np.clip(X, 0.0, 1.0), normalization=tuple(bounds))


def normalize_minmax(d: Dataset) -> Dataset:
    return apply_minmax(d, fit_minmax(d))


def prepare(d: Dataset) -> Dataset:
    """Impute then normalize, fitting both on ``d`` itself."""
    return normalize_minmax(impute_class_mean(d))


def fit_transform_split(train: Dataset, test: Dataset) -> tuple[Dataset, Dataset]:
    """Fit imputation and scaling on ``train`` only and apply them to both sides.

    Test rows are filled with overall training means, never with their own labels.
    """
    if train.has_missing or test.has_missing:
        stats = fit_imputation(train)
        train = apply_imputation(train, stats)
        test = apply_imputation(test, stats, use_labels=False)
    bounds = fit_minmax(train)
    return apply_minmax(train, bounds), apply_minmax(test, bounds)


def split_train_test(d: Dataset, rate: float, seed: int) -> tuple[Dataset, Dataset]:
    if not 0.0 < rate < 1.0:
        raise ValueError(f"training rate must lie in (0, 1), got {rate}")
    n_train = int(math.floor(rate * d.N))
    if n_train < 1 or n_train >= d.N:
        raise ValueError(f"rate {rate} on {d.N} rows leaves one side empty")
    perm = np.random.default_rng(seed).permutation(d.N)
    return d.subset(np.sort(perm[:n_train])), d.subset(np.sort(perm[n_train:]))


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: np.ndarray
    seed: int
    stratified: bool = True

    def train_test(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        mask = self.assignments == fold
        return np.flatnonzero(~mask), np.flatnonzero(mask)


def make_folds(d: Dataset, k: int = 10, seed: int = 0, stratified: bool = True) -> FoldPlan:
    if k < 2:
        raise ValueError(f"need k >= 2, got {k}")
    if k > d.N:
        raise ValueError(f"k={k} exceeds the {d.N} available rows")
    rng = np.random.default_rng(seed)
    if stratified:
        # deal class-sorted shuffled rows round-robin so sizes and class counts differ by <= 1
        order = np.concatenate([rng.permutation(np.flatnonzero(d.labels == c)) for c in (1, 0)])
    else:
        order = rng.permutation(d.N)
    assign = np.empty(d.N, dtype=int)
    assign[order] = np.arange(d.N) % k
    return FoldPlan(k, assign, seed, stratified)


def _entropy(labels: np.ndarray) -> float:
    if labels.size == 0:
        return 0.0
    p = labels.mean()
    return -sum(q * math.log2(q) for q in (p, 1.0 - p) if q > 0)


def equal_frequency_bins(values: np.ndarray, bins: int) -> np.ndarray:
    """Rank-based bin ids; tied values always share a bin."""
    ranks = rankdata(values, method="min") - 1
    return (ranks * bins) // values.size


def information_gain(feature: np.ndarray, labels: np.ndarray, bins: int = 10) -> float:
    codes = equal_frequency_bins(feature, bins)
    cond = 0.0
    for b in np.unique(codes):
        sel = codes == b
        cond += sel.mean() * _entropy(labels[sel])
    return _entropy(labels) - cond


def info_gain_rank(d: Dataset, bins: int = 10) -> list[int]:
    if bins < 2:
        raise ValueError(f"need at least 2 bins, got {bins}")
    gains = [information_gain(d.features[:, j], d.labels, bins) for j in range(d.n)]
    # stable sort on -gain keeps ascending index among ties
    return sorted(range(d.n), key=lambda j: -round(gains[j], 12))


def select_top_features(d: Dataset, k: int, ranking) -> Dataset:
    if k > d.n or k < 1:
        raise ValueError(f"cannot keep {k} of {d.n} features")
    cols = list(ranking)[:k]
    norm = tuple(d.normalization[c] for c in cols) if d.normalization else ()
    return replace(d, features=d.features[:, cols], feature_names=[d.feature_names[c] for c in cols],
                   normalization=norm)


def write_snapshot(d: Dataset, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*d.feature_names, "label"])
        for x, y in zip(d.features, d.labels):
            w.writerow([repr(float(v)) for v in x] + [int(y)])


def read_snapshot(path, name: str | None = None) -> Dataset:
    return load_csv(path, "label", positive_token="1", negative_token="0", name=name or Path(path).stem)


def write_imputation_log(d: Dataset, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "column", "feature", "value"])
        for r, c, v in d.imputation_log:
            w.writerow([r, c, d.feature_names[c], repr(v)])
