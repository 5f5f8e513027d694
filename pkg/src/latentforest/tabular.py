"""Dataset container, CSV ingestion, scaling, stratified splitting, augmentation.

Schema config format
--------------------
Plain ``key = value`` lines; ``#`` starts a comment; list values are
comma-separated::

    target = Class
    categorical = gender, geography
    numeric = age, balance          # optional; default = every other column
    drop = RowNumber, CustomerId    # optional; ignored columns
    labels = No, Yes                # optional; negative then positive label
    vocab.gender = Female, Male     # optional; default = sorted values seen

Missing cells are the empty string or ``NA``; rows with a missing or
unparseable cell are dropped.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

MISSING = {"", "NA"}


class SchemaError(ValueError):
    pass


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class Column:
    name: str
    kind: str  # "numeric" | "categorical"
    vocabulary: tuple[str, ...] = ()


@dataclass(frozen=True)
class FeatureSchema:
    columns: tuple[Column, ...]
    target_column: str
    labels: tuple[str, str] | None = None
    drop: tuple[str, ...] = ()

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate column names in {names}")
        if self.target_column in names:
            raise SchemaError("target column must not be a feature column")
        for c in self.columns:
            if c.kind not in ("numeric", "categorical"):
                raise SchemaError(f"column {c.name!r}: unknown kind {c.kind!r}")
            if c.kind == "categorical":
                if not c.vocabulary:
                    raise SchemaError(f"categorical column {c.name!r} has an empty vocabulary")
                if len(set(c.vocabulary)) != len(c.vocabulary):
                    raise SchemaError(f"categorical column {c.name!r} has duplicate categories")

    @property
    def feature_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def encoding_map(self) -> dict[str, tuple[int, int]]:
        """Categorical column -> ``(start, stop)`` span of its one-hot columns."""
        spans, pos = {}, 0
        for c in self.columns:
            width = len(c.vocabulary) if c.kind == "categorical" else 1
            if c.kind == "categorical":
                spans[c.name] = (pos, pos + width)
            pos += width
        return spans

    def encoded_names(self) -> list[str]:
        out = []
        for c in self.columns:
            if c.kind == "categorical":
                out.extend(f"{c.name}={v}" for v in c.vocabulary)
            else:
                out.append(c.name)
        return out

    @property
    def width(self) -> int:
        return len(self.encoded_names())

    def to_dict(self) -> dict:
        return {
            "target_column": self.target_column,
            "labels": list(self.labels) if self.labels else None,
            "columns": [{"name": c.name, "kind": c.kind, "vocabulary": list(c.vocabulary)}
                        for c in self.columns],
        }

    @classmethod
    def numeric(cls, names, target="y") -> "FeatureSchema":
        return cls(tuple(Column(n, "numeric") for n in names), target)


@dataclass(frozen=True)
class SchemaConfig:
    """Parsed config file; resolved against a CSV header by :func:`resolve_schema`."""

    target: str
    categorical: tuple[str, ...] = ()
    numeric: tuple[str, ...] | None = None
    drop: tuple[str, ...] = ()
    labels: tuple[str, str] | None = None
    vocab: dict[str, tuple[str, ...]] = field(default_factory=dict)


def _split_list(value: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in value.split(",") if v.strip())


def parse_schema_config(text: str) -> SchemaConfig:
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SchemaError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in entries:
            raise SchemaError(f"line {lineno}: duplicate key {key!r}")
        entries[key] = value
    if "target" not in entries:
        raise SchemaError("schema config must name a target column")
    vocab = {k[len("vocab."):]: _split_list(v) for k, v in entries.items() if k.startswith("vocab.")}
    known = {"target", "categorical", "numeric", "drop", "labels"}
    unknown = [k for k in entries if k not in known and not k.startswith("vocab.")]
    if unknown:
        raise SchemaError(f"unknown schema keys: {unknown}")
    labels = None
    if "labels" in entries:
        lab = _split_list(entries["labels"])
        if len(lab) != 2 or lab[0] == lab[1]:
            raise SchemaError("labels must list exactly two distinct values")
        labels = (lab[0], lab[1])
    return SchemaConfig(
        target=entries["target"],
        categorical=_split_list(entries.get("categorical", "")),
        numeric=_split_list(entries["numeric"]) if "numeric" in entries else None,
        drop=_split_list(entries.get("drop", "")),
        labels=labels,
        vocab=vocab,
    )


def load_schema_config(path: str | Path) -> SchemaConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"schema config not found: {path}")
    return parse_schema_config(path.read_text(encoding="utf-8"))


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    schema: FeatureSchema
    synthetic: np.ndarray | None = None
    dropped_rows: int = 0

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64)
        y = np.array(self.y, dtype=np.int64)
        if X.ndim != 2:
            raise DataError("X must be 2-D")
        if X.shape[0] != y.shape[0]:
            raise DataError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        if X.shape[1] != self.schema.width:
            raise DataError(f"X has {X.shape[1]} columns, schema encodes {self.schema.width}")
        if not np.all((y == 0) | (y == 1)):
            raise DataError("labels must be 0/1")
        syn = np.zeros(y.shape[0], dtype=bool) if self.synthetic is None else np.array(self.synthetic, dtype=bool)
        for arr in (X, y, syn):
            arr.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "synthetic", syn)

    @property
    def encoding_map(self) -> dict[str, tuple[int, int]]:
        return self.schema.encoding_map()

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    def subset(self, rows: np.ndarray) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.X[rows], self.y[rows], self.schema, self.synthetic[rows])

    def with_features(self, X: np.ndarray, schema: FeatureSchema) -> "Dataset":
        """Same rows and labels over a different feature space (e.g. a latent one)."""
        return Dataset(X, self.y, schema, self.synthetic)


def _read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        rows = [row for row in reader if row]
    return header, rows


def resolve_schema(cfg: SchemaConfig, header: list[str], rows: list[list[str]] | None = None
                   ) -> FeatureSchema:
    """Turn a config into a concrete schema over ``header``'s column order."""
    present = set(header)
    named = [cfg.target, *cfg.categorical, *(cfg.numeric or ()), *cfg.drop]
    missing = [n for n in named if n not in present]
    if missing:
        raise SchemaError(f"CSV header is missing columns named in the schema: {missing}")
    if cfg.numeric is not None:
        feature_cols = set(cfg.numeric) | set(cfg.categorical)
        extra = [h for h in header if h not in feature_cols and h != cfg.target and h not in cfg.drop]
        if extra:
            raise SchemaError(f"CSV has columns not covered by the schema: {extra}")
    cat = set(cfg.categorical)
    columns = []
    for j, name in enumerate(header):
        if name == cfg.target or name in cfg.drop:
            continue
        if cfg.numeric is not None and name not in cfg.numeric and name not in cat:
            continue
        if name in cat:
            vocab = cfg.vocab.get(name)
            if vocab is None:
                if rows is None:
                    raise SchemaError(f"no vocabulary for categorical column {name!r}")
                vocab = tuple(sorted({r[j].strip() for r in rows
                                      if j < len(r) and r[j].strip() not in MISSING}))
            columns.append(Column(name, "categorical", tuple(vocab)))
        else:
            columns.append(Column(name, "numeric"))
    return FeatureSchema(tuple(columns), cfg.target, cfg.labels, cfg.drop)


def _label_map(values: set[str], labels: tuple[str, str] | None) -> dict[str, int]:
    if labels is not None:
        if not values <= set(labels):
            raise DataError(f"target values {sorted(values)} not within declared labels {labels}")
        return {labels[0]: 0, labels[1]: 1}
    if len(values) != 2:
        raise DataError(f"target must have exactly two distinct values, found {len(values)}: "
                        f"{sorted(values)[:10]}")
    try:
        ordered = sorted(values, key=float)
    except ValueError:
        ordered = sorted(values)
    return {ordered[0]: 0, ordered[1]: 1}


def load_csv(path: str | Path, schema: FeatureSchema | SchemaConfig,
             require_both_labels: bool = True) -> Dataset:
    """Read a CSV into a one-hot encoded :class:`Dataset`, dropping incomplete rows.

    ``require_both_labels=False`` admits single-class files (synthetic minority
    rows); the schema must then declare its labels.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"data file not found: {path}")
    header, rows = _read_csv(path)
    if isinstance(schema, SchemaConfig):
        schema = resolve_schema(schema, header, rows)
    pos = {h: j for j, h in enumerate(header)}
    needed = [schema.target_column, *schema.feature_names]
    missing = [n for n in needed if n not in pos]
    if missing:
        raise SchemaError(f"CSV header does not match schema; missing {missing}")

    tj = pos[schema.target_column]
    Xrows, yraw, dropped = [], [], 0
    for row in rows:
        vals = []
        ok = len(row) == len(header) and row[tj].strip() not in MISSING
        if ok:
            for c in schema.columns:
                cell = row[pos[c.name]].strip()
                if cell in MISSING:
                    ok = False
                    break
                if c.kind == "numeric":
                    try:
                        v = float(cell)
                    except ValueError:
                        ok = False
                        break
                    if not math.isfinite(v):
                        ok = False
                        break
                    vals.append(v)
                else:
                    if cell not in c.vocabulary:
                        ok = False
                        break
                    hot = [0.0] * len(c.vocabulary)
                    hot[c.vocabulary.index(cell)] = 1.0
                    vals.extend(hot)
        if not ok:
            dropped += 1
            continue
        Xrows.append(vals)
        yraw.append(row[tj].strip())
    if not Xrows:
        raise DataError(f"{path}: no complete rows left after dropping {dropped}")
    if not require_both_labels and schema.labels is None:
        raise SchemaError("single-class files need declared labels")
    lmap = _label_map(set(yraw), schema.labels)
    if schema.labels is None:
        inv = sorted(lmap, key=lmap.get)
        schema = FeatureSchema(schema.columns, schema.target_column, (inv[0], inv[1]), schema.drop)
    if require_both_labels and len(set(yraw)) != 2:
        raise DataError("after dropping incomplete rows the target has fewer than two labels")
    if dropped:
        logger.info("%s: dropped %d row(s) with missing or unparseable cells", path, dropped)
    return Dataset(np.array(Xrows, dtype=np.float64), np.array([lmap[v] for v in yraw]),
                   schema, dropped_rows=dropped)


@dataclass(frozen=True)
class ScalerParams:
    mean: np.ndarray
    std: np.ndarray

    @property
    def constant(self) -> np.ndarray:
        return self.std == 0.0

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        safe = np.where(self.constant, 1.0, self.std)
        return np.where(self.constant, 0.0, (X - self.mean) / safe)

    def inverse(self, Z: np.ndarray) -> np.ndarray:
        return np.asarray(Z, dtype=np.float64) * self.std + self.mean

    def subset(self, cols) -> "ScalerParams":
        return ScalerParams(self.mean[cols], self.std[cols])

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}


def fit_scaler(X: np.ndarray) -> ScalerParams:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("cannot standardize an empty matrix")
    mean = X.mean(axis=0)
    std = X.std(axis=0)  # population convention (divisor n)
    # exact-constant columns can show std ~1e-17 from rounding
    std = np.where(np.all(X == X[0], axis=0), 0.0, std)
    return ScalerParams(mean, std)


def standardize(d: Dataset) -> tuple[Dataset, ScalerParams]:
    params = fit_scaler(d.X)
    return d.with_features(params.transform(d.X), d.schema), params


def stratified_split_indices(y: np.ndarray, train_fraction: float, seed: int
                             ) -> tuple[np.ndarray, np.ndarray]:
    """Per-class shuffled split; train gets ``round(fraction * count)`` of each class."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for label in np.unique(y):
        members = np.flatnonzero(y == label)
        if members.size < 2:
            raise DataError(f"class {label} has fewer than 2 samples; cannot stratify")
        members = rng.permutation(members)
        k = math.floor(train_fraction * members.size + 0.5)
        k = min(max(k, 1), members.size - 1)
        train.append(members[:k])
        test.append(members[k:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def stratified_split(d: Dataset, train_fraction: float = 0.7, seed: int = 0
                     ) -> tuple[Dataset, Dataset]:
    tr, te = stratified_split_indices(d.y, train_fraction, seed)
    return d.subset(tr), d.subset(te)


def minority_label(y: np.ndarray) -> int:
    y = np.asarray(y)
    labels, counts = np.unique(y, return_counts=True)
    if labels.size < 2:
        raise DataError("need both labels to identify a minority class")
    # np.unique sorts labels, and argmin returns the first minimum: ties -> smaller label
    return int(labels[np.argmin(counts)])


def extract_class(d: Dataset, label: int) -> np.ndarray:
    mask = d.y == label
    if not mask.any():
        raise DataError(f"label {label} not present")
    return d.X[mask]


def synthetic_count(ratio: float, minority_count: int) -> int:
    """``floor(ratio% * minority_count)``, exact for any float ratio."""
    if ratio < 0:
        raise ValueError("augmentation ratio must be non-negative")
    return math.floor(Fraction(ratio) * minority_count / 100)


def augment(train: Dataset, synthetic: np.ndarray, label: int) -> Dataset:
    """Append synthetic rows with ``label``; they are flagged as synthetic."""
    synthetic = np.asarray(synthetic, dtype=np.float64)
    if synthetic.size == 0:
        synthetic = synthetic.reshape(0, train.X.shape[1])
    if synthetic.ndim != 2 or synthetic.shape[1] != train.X.shape[1]:
        raise DataError(f"synthetic rows have {synthetic.shape[-1]} columns, "
                        f"dataset has {train.X.shape[1]}")
    n = synthetic.shape[0]
    return Dataset(
        np.vstack([train.X, synthetic]),
        np.concatenate([train.y, np.full(n, label, dtype=np.int64)]),
        train.schema,
        np.concatenate([train.synthetic, np.ones(n, dtype=bool)]),
    )


def project_one_hot(X: np.ndarray, encoding_map: dict[str, tuple[int, int]]) -> np.ndarray:
    """Snap each categorical span to the one-hot vector of its argmax."""
    X = np.array(X, dtype=np.float64, copy=True)
    for start, stop in encoding_map.values():
        block = X[:, start:stop]
        hot = np.argmax(block, axis=1)
        X[:, start:stop] = 0.0
        X[np.arange(X.shape[0]), start + hot] = 1.0
    return X


def decode_rows(X: np.ndarray, schema: FeatureSchema) -> list[list[str]]:
    """One-hot encoded rows back to CSV cells in schema column order."""
    out = []
    spans = schema.encoding_map()
    for row in np.asarray(X, dtype=np.float64):
        cells, pos = [], 0
        for c in schema.columns:
            if c.kind == "categorical":
                a, b = spans[c.name]
                cells.append(c.vocabulary[int(np.argmax(row[a:b]))])
                pos = b
            else:
                cells.append(repr(float(row[pos])))
                pos += 1
        out.append(cells)
    return out


def write_csv(path: str | Path, X: np.ndarray, y: np.ndarray, schema: FeatureSchema) -> None:
    """Write rows in the original (decoded) schema layout, target last."""
    labels = schema.labels or ("0", "1")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*schema.feature_names, schema.target_column])
        for cells, lab in zip(decode_rows(X, schema), np.asarray(y)):
            w.writerow([*cells, labels[int(lab)]])
