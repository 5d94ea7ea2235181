"""Consensus and risk diagnostics, and the metrics CSV format."""
from __future__ import annotations

import csv
import io
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError

CSV_HEADER = (
    "trial", "algo", "r", "k", "t", "t_c", "consensus_diameter", "mean_pairwise",
    "pooled_train_risk", "test_accuracy", "excess_risk", "wall_ms",
)


@dataclass(frozen=True)
class MetricsRecord:
    """One row of experiment output. ``k`` is the 1-based position in the sweep."""

    trial: int
    algo: str
    r: int
    k: int | None
    t: int | None
    t_c: int
    consensus_diameter: float | None = None
    mean_pairwise: float | None = None
    pooled_train_risk: float | None = None
    test_accuracy: float | None = None
    excess_risk: float | None = None
    wall_ms: int | None = None


def comm_iteration(r: int, k: int, t: int, T: int, P: int) -> int:
    """Scalar broadcast rounds completed after inner step t of coordinate k in round r."""
    return (r - 1) * T * P + (k - 1) * T + t


def consensus_stats(states) -> tuple:
    """(max, mean) of ||w_i - w_j|| over unordered pairs of honest states."""
    W = np.asarray(states, dtype=float)
    n = W.shape[0]
    if n < 2:
        raise ConfigError("consensus statistics need at least two honest nodes")
    iu = np.triu_indices(n, 1)
    diffs = np.linalg.norm(W[iu[0]] - W[iu[1]], axis=1)
    return float(diffs.max()), float(diffs.mean())


def excess_risk(w, pooled, model, oracle_risk) -> float:
    """Pooled empirical risk of ``w`` minus the centralized oracle's risk."""
    if oracle_risk is None:
        raise ConfigError("excess risk needs an oracle risk")
    return float(model.risk(w, pooled.X, pooled.y)) - float(oracle_risk)


class Evaluator:
    """Turns the stacked honest states into the metric columns of a record.

    Risk and accuracy columns are averages over honest nodes. ``accuracy_on``
    selects which set the accuracy column is measured on.
    """

    def __init__(self, model, pooled, test=None, oracle_risk=None, accuracy_on="test"):
        self.model = model
        self.pooled = pooled
        self.test = test
        self.oracle_risk = oracle_risk
        if accuracy_on not in ("test", "train"):
            raise ConfigError(f"accuracy_on must be 'test' or 'train', got {accuracy_on!r}")
        self.accuracy_on = accuracy_on

    def _accuracy_set(self):
        if self.accuracy_on == "train":
            return self.pooled
        return self.test if self.test is not None and len(self.test) else None

    def __call__(self, W) -> dict:
        W = np.atleast_2d(np.asarray(W, dtype=float))
        out = {}
        if W.shape[0] >= 2:
            out["consensus_diameter"], out["mean_pairwise"] = consensus_stats(W)
        risks = self.model.risk(W, self.pooled.X[None], self.pooled.y[None])
        out["pooled_train_risk"] = float(np.mean(risks))
        acc_set = self._accuracy_set()
        if acc_set is not None and self.model.kind != "square":
            out["test_accuracy"] = float(np.mean(self.model.accuracy(W, acc_set.X[None], acc_set.y[None])))
        if self.oracle_risk is not None:
            out["excess_risk"] = out["pooled_train_risk"] - float(self.oracle_risk)
        return out


class RecordSink:
    """Append-only collector that optionally mirrors rows into a CSV stream."""

    def __init__(self, stream=None, write_header=True):
        self.records = []
        self._writer = csv.writer(stream, lineterminator="\n") if stream is not None else None
        if self._writer is not None and write_header:
            self._writer.writerow(CSV_HEADER)

    def __call__(self, record: MetricsRecord):
        self.records.append(record)
        if self._writer is not None:
            self._writer.writerow(format_row(record))


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_row(record: MetricsRecord) -> list:
    return [_fmt(v) for v in astuple(record)]


def records_to_csv(records) -> str:
    buf = io.StringIO()
    sink = RecordSink(buf)
    for rec in records:
        sink(rec)
    return buf.getvalue()


def write_records(records, path) -> None:
    Path(path).write_text(records_to_csv(records))


def read_records(path) -> list:
    types = {f.name: f.type for f in fields(MetricsRecord)}
    out = []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            values = {}
            for name, raw in row.items():
                if raw == "":
                    values[name] = None
                elif name == "algo":
                    values[name] = raw
                elif "float" in types[name]:
                    values[name] = float(raw)
                else:
                    values[name] = int(raw)
            out.append(MetricsRecord(**values))
    return out


SUMMARY_METRICS = ("consensus_diameter", "mean_pairwise", "pooled_train_risk", "test_accuracy", "excess_risk")


def summarize(records_by_algo: dict) -> list:
    """Median and IQR across trials of each trial's final record, per algorithm tag."""
    rows = []
    for algo, records in records_by_algo.items():
        final = {}
        for rec in records:
            prev = final.get(rec.trial)
            if prev is None or rec.t_c >= prev.t_c:
                final[rec.trial] = rec
        row = {"algo": algo, "trials": len(final)}
        for name in SUMMARY_METRICS:
            vals = np.asarray([getattr(r, name) for r in final.values() if getattr(r, name) is not None])
            if vals.size:
                q1, med, q3 = np.percentile(vals, [25, 50, 75])
                row[f"{name}_median"] = float(med)
                row[f"{name}_iqr"] = float(q3 - q1)
            else:
                row[f"{name}_median"] = None
                row[f"{name}_iqr"] = None
        rows.append(row)
    return rows


def write_summary(rows, path) -> None:
    header = ["algo", "trials"]
    for name in SUMMARY_METRICS:
        header += [f"{name}_median", f"{name}_iqr"]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row.get(h)) for h in header])
