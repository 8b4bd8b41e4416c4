"""Dataset ingestion, scaling, fold planning, and an openML fetch client.

Numerical features are min-max scaled to [0, 1] before robust fitting so
that a single L-infinity budget is commensurate across features.  Test
rows are always transformed with training statistics and clamped.
"""

from __future__ import annotations

import csv
import json
import os
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import arff

OPENML_API = "https://www.openml.org/api/v1/json"


class DataError(ValueError):
    """Malformed or unusable input data."""


class DataFetchError(RuntimeError):
    """Transient download failure; retrying later may succeed."""


class DatasetNotFoundError(DataFetchError):
    """The requested dataset id or name/version does not exist."""


@dataclass
class Scaler:
    """Per-feature min/max statistics frozen from a training split."""

    mins: np.ndarray
    maxs: np.ndarray
    kinds: list

    def transform(self, X):
        X = np.asarray(X, dtype=float).copy()
        for j, kind in enumerate(self.kinds):
            if kind != "numerical":
                continue
            span = self.maxs[j] - self.mins[j]
            if span > 0:
                X[:, j] = (X[:, j] - self.mins[j]) / span
            else:
                X[:, j] = 0.0
            np.clip(X[:, j], 0.0, 1.0, out=X[:, j])
        return X

    def to_doc(self):
        return {
            "feature_min": [float(v) for v in self.mins],
            "feature_max": [float(v) for v in self.maxs],
            "kinds": list(self.kinds),
        }

    @classmethod
    def from_doc(cls, doc):
        return cls(
            mins=np.asarray(doc["feature_min"], dtype=float),
            maxs=np.asarray(doc["feature_max"], dtype=float),
            kinds=list(doc["kinds"]),
        )


@dataclass
class Dataset:
    """Immutable feature matrix with binary labels and column metadata."""

    X: np.ndarray
    y: np.ndarray
    feature_names: list
    kinds: list
    label_mapping: dict
    category_maps: dict = field(default_factory=dict)
    scaler: Scaler | None = None

    @property
    def n_samples(self):
        return self.X.shape[0]

    @property
    def n_features(self):
        return self.X.shape[1]

    @property
    def categorical_indices(self):
        return [j for j, k in enumerate(self.kinds) if k == "categorical"]


@dataclass
class FoldPlan:
    """Stratified partition of row indices into k folds."""

    folds: list
    seed: int

    def iter_splits(self):
        for i, test_idx in enumerate(self.folds):
            train = np.concatenate(
                [f for j, f in enumerate(self.folds) if j != i])
            yield np.sort(train), test_idx


def _resolve_column(columns, key, role):
    if isinstance(key, int):
        idx = key if key >= 0 else len(columns) + key
        if not 0 <= idx < len(columns):
            raise DataError(f"{role} index {key} out of range")
        return idx
    if key in columns:
        return columns.index(key)
    raise DataError(f"unknown {role} {key!r}")


def _encode_labels(raw):
    distinct = sorted(set(raw))
    if len(distinct) != 2:
        raise DataError(
            f"label column must be binary, found {len(distinct)} "
            f"distinct values: {distinct[:5]}")
    mapping = {distinct[0]: 0, distinct[1]: 1}
    y = np.array([mapping[v] for v in raw], dtype=int)
    return y, mapping


def load_csv(path, label_column, categorical_columns=(), delimiter=","):
    """Parse a delimited text file with a header row into a Dataset."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [row for row in reader if row]
    header = [h.strip() for h in header]
    label_idx = _resolve_column(header, label_column, "label column")
    cat_idx = {_resolve_column(header, c, "categorical column")
               for c in categorical_columns}
    if label_idx in cat_idx:
        raise DataError("label column cannot be categorical feature")

    raw_labels = []
    columns = [[] for _ in header]
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"row {i + 1}: expected {len(header)} cells, "
                            f"got {len(row)}")
        for j, cell in enumerate(row):
            cell = cell.strip()
            if cell == "" or cell == "?":
                raise DataError(
                    f"missing value at row {i + 1}, column {header[j]!r}")
            columns[j].append(cell)
    if not rows:
        raise DataError(f"{path}: no data rows")

    raw_labels = columns[label_idx]
    y, mapping = _encode_labels(raw_labels)

    feature_names = []
    kinds = []
    data_cols = []
    category_maps = {}
    for j, name in enumerate(header):
        if j == label_idx:
            continue
        out_idx = len(feature_names)
        feature_names.append(name)
        if j in cat_idx:
            kinds.append("categorical")
            levels = sorted(set(columns[j]))
            codes = {v: float(c) for c, v in enumerate(levels)}
            category_maps[out_idx] = {v: int(codes[v]) for v in levels}
            data_cols.append([codes[v] for v in columns[j]])
        else:
            kinds.append("numerical")
            values = []
            for i, cell in enumerate(columns[j]):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"cannot parse {cell!r} at row {i + 1}, "
                        f"column {name!r}") from None
            data_cols.append(values)

    X = np.array(data_cols, dtype=float).T
    if X.ndim == 1:
        X = X.reshape(len(rows), 0)
    return Dataset(X=X, y=y, feature_names=feature_names, kinds=kinds,
                   label_mapping={str(k): v for k, v in mapping.items()},
                   category_maps=category_maps)


def load_arff(path, label_column=None):
    """Parse an ARFF file (as served by openML) into a Dataset."""
    try:
        data, meta = arff.loadarff(path)
    except Exception as exc:
        raise DataError(f"{path}: cannot parse ARFF: {exc}") from None
    names = list(meta.names())
    types = [meta[n][0] for n in names]
    if label_column is None:
        label_idx = len(names) - 1
    else:
        label_idx = _resolve_column(names, label_column, "label column")

    def column(j):
        col = data[names[j]]
        if types[j] == "nominal":
            out = [v.decode() if isinstance(v, bytes) else str(v) for v in col]
            for i, v in enumerate(out):
                if v == "?":
                    raise DataError(f"missing value at row {i + 1}, "
                                    f"column {names[j]!r}")
            return out
        vals = np.asarray(col, dtype=float)
        bad = np.flatnonzero(np.isnan(vals))
        if bad.size:
            raise DataError(f"missing value at row {int(bad[0]) + 1}, "
                            f"column {names[j]!r}")
        return vals

    raw_labels = column(label_idx)
    if not isinstance(raw_labels, list):
        raw_labels = [repr(float(v)) for v in raw_labels]
    y, mapping = _encode_labels(raw_labels)

    feature_names = []
    kinds = []
    data_cols = []
    category_maps = {}
    for j, name in enumerate(names):
        if j == label_idx:
            continue
        col = column(j)
        out_idx = len(feature_names)
        feature_names.append(name)
        if types[j] == "nominal":
            kinds.append("categorical")
            levels = sorted(set(col))
            codes = {v: float(c) for c, v in enumerate(levels)}
            category_maps[out_idx] = {v: int(codes[v]) for v in levels}
            data_cols.append([codes[v] for v in col])
        else:
            kinds.append("numerical")
            data_cols.append(col)

    X = np.array(data_cols, dtype=float).T
    return Dataset(X=X, y=y, feature_names=feature_names, kinds=kinds,
                   label_mapping={str(k): v for k, v in mapping.items()},
                   category_maps=category_maps)


def minmax_scale(dataset):
    """Scale numerical columns to [0, 1]; returns (scaled dataset, scaler).

    Constant columns map to 0.  The scaler holds training statistics for
    transforming held-out rows later (with clamping to [0, 1]).
    """
    mins = dataset.X.min(axis=0) if dataset.n_samples else np.zeros(0)
    maxs = dataset.X.max(axis=0) if dataset.n_samples else np.zeros(0)
    scaler = Scaler(mins=np.asarray(mins, dtype=float),
                    maxs=np.asarray(maxs, dtype=float),
                    kinds=list(dataset.kinds))
    scaled = Dataset(
        X=scaler.transform(dataset.X),
        y=dataset.y,
        feature_names=list(dataset.feature_names),
        kinds=list(dataset.kinds),
        label_mapping=dict(dataset.label_mapping),
        category_maps=dict(dataset.category_maps),
        scaler=scaler,
    )
    return scaled, scaler


def stratified_kfold(labels, k, seed=0):
    """Deterministic stratified k-fold plan over row indices."""
    labels = np.asarray(labels)
    if k < 2:
        raise DataError("k must be at least 2")
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(k)]
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if idx.size < k:
            raise DataError(
                f"class {cls} has {idx.size} samples, needs at least {k}")
        idx = rng.permutation(idx)
        for fold, chunk in zip(folds, np.array_split(idx, k)):
            fold.append(chunk)
    return FoldPlan(
        folds=[np.sort(np.concatenate(parts)) for parts in folds],
        seed=int(seed),
    )


def _urllib_transport(url):
    req = urllib.request.Request(url, headers={"User-Agent": "robtree"})
    try:
        with urllib.request.urlopen(req, timeout=30) as resp:
            return resp.read()
    except urllib.error.HTTPError as exc:
        if exc.code in (404, 412):
            raise LookupError(f"{url}: HTTP {exc.code}") from None
        raise OSError(f"{url}: HTTP {exc.code}") from None
    except urllib.error.URLError as exc:
        raise OSError(f"{url}: {exc.reason}") from None


def _fetch_json(url, transport):
    payload = transport(url)
    if not payload:
        raise DataFetchError(f"{url}: empty response; retry later")
    try:
        return json.loads(payload)
    except json.JSONDecodeError:
        raise DataFetchError(
            f"{url}: malformed JSON response; retry later") from None


def _resolve_name(name, version, cache_dir, transport):
    index_path = cache_dir / "names.json"
    key = f"{name}:{version}"
    if index_path.exists():
        index = json.loads(index_path.read_text())
        if key in index:
            return int(index[key])
    else:
        index = {}
    doc = _fetch_json(f"{OPENML_API}/data/list/data_name/{name}", transport)
    for entry in doc.get("data", {}).get("dataset", []):
        if int(entry.get("version", -1)) == version:
            index[key] = int(entry["did"])
            _atomic_write(index_path,
                          json.dumps(index, sort_keys=True).encode())
            return int(entry["did"])
    raise DatasetNotFoundError(
        f"no openML dataset named {name!r} with version {version}")


def _atomic_write(path, payload):
    tmp = path.with_name(f"{path.name}.tmp{os.getpid()}")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def fetch_openml(dataset_id=None, *, name=None, version=1,
                 cache_dir="openml_cache", transport=None):
    """Download an openML dataset file, caching by id.

    Returns the local path of the cached ARFF file.  `transport` is a
    callable(url) -> bytes; it raises LookupError for unknown resources
    and OSError for transport failures.
    """
    if (dataset_id is None) == (name is None):
        raise ValueError("pass exactly one of dataset_id or name")
    transport = transport or _urllib_transport
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)

    try:
        if dataset_id is None:
            dataset_id = _resolve_name(name, version, cache_dir, transport)
        dataset_dir = cache_dir / str(int(dataset_id))
        if dataset_dir.is_dir():
            cached = sorted(dataset_dir.glob("*.arff"))
            if cached:
                return cached[0]

        meta = _fetch_json(f"{OPENML_API}/data/{int(dataset_id)}", transport)
        desc = meta.get("data_set_description")
        if not desc or "url" not in desc:
            raise DataFetchError(
                f"dataset {dataset_id}: metadata has no file url; retry later")
        payload = transport(desc["url"])
    except LookupError as exc:
        raise DatasetNotFoundError(
            f"openML dataset not found: {exc}") from None
    except OSError as exc:
        raise DataFetchError(
            f"download failed ({exc}); check network and retry") from None

    if not payload:
        raise DataFetchError(
            f"dataset {dataset_id}: empty payload; retry later")
    dataset_dir = cache_dir / str(int(dataset_id))
    dataset_dir.mkdir(parents=True, exist_ok=True)
    filename = os.path.basename(desc["url"].split("?")[0]) or "data.arff"
    if not filename.endswith(".arff"):
        filename += ".arff"
    target = dataset_dir / filename
    _atomic_write(target, payload)
    return target
