"""JSON run reports, synthetic-data CSVs and sweep tables.

A report has a ``deterministic`` section (config echo, seeds, dataset and
partition fingerprints, metrics) that is byte-identical across re-runs with
the same config and seed, and a ``timing`` section that is not.
"""

from __future__ import annotations

import csv
import hashlib
import json
from importlib import resources
from pathlib import Path

import numpy as np
from jsonschema import validate

from latentforest import __version__
from latentforest.tabular import Dataset, write_csv

SCHEMA_VERSION = "1.0"


def report_schema() -> dict:
    text = resources.files("latentforest").joinpath("schemas/report.schema.json").read_text()
    return json.loads(text)


def validate_report(report: dict) -> None:
    validate(report, report_schema())


def fingerprint(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str(a.dtype).encode())
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def dataset_summary(d: Dataset) -> dict:
    return {
        "n_rows": d.n_rows,
        "encoded_width": d.X.shape[1],
        "n_features": len(d.schema.columns),
        "class_counts": [int(np.sum(d.y == 0)), int(np.sum(d.y == 1))],
        "sha256": fingerprint(d.X, d.y),
    }


def run_entry(result) -> dict:
    """Deterministic description of one :class:`AugmentationResult`."""
    return {
        "method": result.method,
        "ratio": float(result.ratio),
        "n_synthetic": result.n_synthetic,
        "minority_label": result.synthetic_label,
        "minority_train_count": result.minority_train_count,
        "train_rows": int(result.train_index.size),
        "test_rows": int(result.test_index.size),
        "test_partition_sha256": fingerprint(result.test_index.astype(np.int64)),
        "test_contains_synthetic": bool(result.test.synthetic.any()),
        "synthetic_sha256": fingerprint(result.synthetic),
        "metric_space": result.metric_space,
        "metrics": result.report.to_dict(),
    }


def build_report(command: str, results: list, dataset: Dataset | None = None,
                 config: dict | None = None, extra: dict | None = None) -> dict:
    det = {
        "command": command,
        "config": config if config is not None else results[0].config.to_dict(),
        "seeds": results[0].seeds if results else {},
        "runs": [run_entry(r) for r in results],
    }
    if dataset is not None:
        det["dataset"] = dataset_summary(dataset)
    if extra:
        det.update(extra)
    return {
        "schema_version": SCHEMA_VERSION,
        "library_version": __version__,
        "deterministic": det,
        "timing": {
            "runs": [{"method": r.method, "ratio": float(r.ratio),
                      "stages": {k: float(v) for k, v in sorted(r.timings.items())}}
                     for r in results],
        },
    }


def dumps_deterministic(report: dict) -> str:
    return json.dumps(report["deterministic"], sort_keys=True, indent=2)


def write_json(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")


SWEEP_COLUMNS = ("method", "ratio", "n_synthetic", "classifier", "recall", "precision", "f1",
                 "wd", "dcr_mean", "dcr_median", "nndr_mean", "metric_space")


def write_table(path: Path, rows: list[dict], columns) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n",
                           extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in columns})


def _ratio_tag(ratio: float) -> str:
    return str(int(ratio)) if float(ratio).is_integer() else str(ratio).replace(".", "p")


def emit_report(results: list, out_dir: str | Path, command: str = "augment",
                dataset: Dataset | None = None, config: dict | None = None,
                extra: dict | None = None, sweep_rows: list[dict] | None = None,
                tables: dict[str, tuple[list[dict], tuple]] | None = None) -> dict[str, Path]:
    """Write ``report.json``, one synthetic CSV per run, and any tables."""
    if not results:
        raise ValueError("emit_report needs at least one result")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    report = build_report(command, results, dataset, config, extra)
    validate_report(report)
    paths = {"report": out / "report.json"}
    write_json(paths["report"], report)
    for r in results:
        p = out / f"synthetic_{r.method}_{_ratio_tag(r.ratio)}.csv"
        labels = np.full(r.n_synthetic, r.synthetic_label, dtype=np.int64)
        write_csv(p, r.synthetic, labels, r.schema)
        paths[p.stem] = p
    if sweep_rows is not None:
        paths["sweep"] = out / "sweep.csv"
        write_table(paths["sweep"], sweep_rows, SWEEP_COLUMNS)
    for name, (rows, columns) in (tables or {}).items():
        paths[name] = out / f"{name}.csv"
        write_table(paths[name], rows, columns)
    return paths
