"""Per-iteration convergence records and their CSV form."""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field

CSV_HEADER = ["iter", "time_s", "f", "h", "gnorm_rel", "fevals", "gevals", "restart", "beta"]


class StopReason(str, enum.Enum):
    GRAD_TOL = "GradTol"
    MAX_ITERS = "MaxIters"
    STALL = "NumericalStall"


@dataclass
class TraceRecord:
    iter: int
    time_s: float
    f: float
    h: float
    gnorm_rel: float
    fevals: int
    gevals: int
    precond_calls: int
    restart: bool = False
    beta: float | None = None
    # Polak-Ribiere coefficient for N-CG records
    cg_coef: float | None = None
    ls_status: str | None = None


@dataclass
class Trace:
    method: str
    records: list[TraceRecord] = field(default_factory=list)

    def append(self, record: TraceRecord) -> None:
        if self.records and record.iter <= self.records[-1].iter:
            raise ValueError("trace iteration indices must increase")
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, k):
        return self.records[k]

    def __iter__(self):
        return iter(self.records)

    @property
    def iterations(self) -> int:
        return self.records[-1].iter if self.records else 0

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.records]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, int):
        return str(x)
    return repr(float(x))


def write_trace_csv(trace: Trace, path, timing: bool = True) -> None:
    """One row per record. With ``timing=False`` the ``time_s`` column is written as 0."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in trace:
            writer.writerow([
                _fmt(r.iter),
                _fmt(r.time_s if timing else 0.0),
                _fmt(r.f),
                _fmt(r.h),
                _fmt(r.gnorm_rel),
                _fmt(r.fevals),
                _fmt(r.gevals),
                _fmt(bool(r.restart)),
                _fmt(r.beta),
            ])


def read_trace_csv(path, method: str = "") -> Trace:
    trace = Trace(method)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"{path}: unexpected trace header {reader.fieldnames}")
        for row in reader:
            trace.append(TraceRecord(
                iter=int(row["iter"]),
                time_s=float(row["time_s"]),
                f=float(row["f"]),
                h=float(row["h"]),
                gnorm_rel=float(row["gnorm_rel"]),
                fevals=int(row["fevals"]),
                gevals=int(row["gevals"]),
                precond_calls=0,
                restart=row["restart"] == "1",
                beta=float(row["beta"]) if row["beta"] else None,
            ))
    return trace

