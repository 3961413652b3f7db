"""CSV outputs with fixed headers.

Floats are written with ``repr`` so every row parses back to the same
values; quoting follows the ``csv`` module's RFC-4180 dialect.
"""
import csv
import math
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

from .errors import FormatError
from .metrics import GainReport
from .trainer import EpochMetrics, GridResult

EPOCH_FIELDS = ("grid_point", "spec") + EpochMetrics.FIELDS
RUN_FIELDS = ("grid_point", "spec", "status", "error", "kept", "total", "reduction_ratio", "chosen") \
    + GainReport.CSV_FIELDS
THEOREM_FIELDS = ("experiment", "n", "eps", "delta", "trials", "success_rate", "median_error")
ATTACK_FIELDS = ("checkpoint",) + GainReport.CSV_FIELDS
SPARSITY_FIELDS = ("layer", "kept", "total", "reduction_ratio")
SUMMARY_FIELDS = ("row", "source", "spec", "gain", "attack_accuracy", "accuracy_gap",
                  "train_accuracy", "test_accuracy", "reduction_ratio")


def fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Dict]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(header), extrasaction="raise")
        w.writeheader()
        for row in rows:
            extra = set(row) - set(header)
            if extra:
                raise ValueError(f"columns not in the header: {sorted(extra)}")
            w.writerow({k: fmt(row.get(k)) for k in header})


def read_csv(path, header: Sequence[str]) -> List[Dict[str, str]]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        r = csv.DictReader(fh)
        if tuple(r.fieldnames or ()) != tuple(header):
            raise FormatError(f"{path}: header {r.fieldnames} does not match {list(header)}")
        return list(r)


def epoch_rows(result: GridResult):
    for i, rec in enumerate(result.records):
        for m in rec.epochs:
            row = {k: getattr(m, k) for k in EpochMetrics.FIELDS}
            row.update(grid_point=i, spec=rec.spec_label)
            yield row


def run_rows(result: GridResult):
    for i, rec in enumerate(result.records):
        row = {"grid_point": i, "spec": rec.spec_label, "status": rec.status, "error": rec.error,
               "chosen": i == result.chosen}
        if rec.sparsity is not None:
            row.update(kept=rec.sparsity.total_kept, total=rec.sparsity.total_weights,
                       reduction_ratio=float(rec.sparsity.ratio))
        if rec.final is not None:
            row.update(rec.final.to_row())
        yield row


def _float(v: str) -> float:
    return float(v) if v != "" else math.nan


def summarize_runs(rows: Sequence[Dict[str, str]], source: str = "") -> List[Dict]:
    """Per-run rows sorted by accuracy gap, then one ``selected`` row.

    Selection recomputes the minimum-gain rule from the raw rows: lowest
    gain, ties broken toward fewer kept weights.
    """
    ok = [r for r in rows if r["status"] == "ok" and r["gain"] != ""]
    out = []
    for r in sorted(ok, key=lambda r: (_float(r["accuracy_gap"]), int(r["grid_point"]))):
        out.append({"row": "run", "source": source, "spec": r["spec"], "gain": _float(r["gain"]),
                    "attack_accuracy": _float(r["attack_accuracy"]), "accuracy_gap": _float(r["accuracy_gap"]),
                    "train_accuracy": _float(r["train_accuracy"]), "test_accuracy": _float(r["test_accuracy"]),
                    "reduction_ratio": _float(r["reduction_ratio"])})
    if ok:
        best = min(ok, key=lambda r: (_float(r["gain"]), int(r["kept"]), int(r["grid_point"])))
        out.append({"row": "selected", "source": source, "spec": best["spec"], "gain": _float(best["gain"]),
                    "attack_accuracy": _float(best["attack_accuracy"]),
                    "accuracy_gap": _float(best["accuracy_gap"]),
                    "train_accuracy": _float(best["train_accuracy"]),
                    "test_accuracy": _float(best["test_accuracy"]),
                    "reduction_ratio": _float(best["reduction_ratio"])})
    return out
