"""Experiment reports and their CSV / JSON / plot-data serialization."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

CSV_HEADER = ("delta", "nonlocal", "local", "gap", "sol_err", "iters")


@dataclass(frozen=True)
class Row:
    delta: float
    nonlocal_: float
    local: float
    sol_err: float | None = None
    iters: int | None = None

    @property
    def gap(self) -> float:
        return self.nonlocal_ - self.local


@dataclass
class Report:
    experiment: str
    rows: list[Row] = field(default_factory=list)
    verdicts: dict[str, bool] = field(default_factory=dict)
    order: float | None = None
    tol_ineq: float | None = None
    checks: list[dict] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def to_dict(self) -> dict:
        out = asdict(self)
        out["rows"] = [{"delta": r.delta, "nonlocal": r.nonlocal_, "local": r.local, "gap": r.gap,
                        "sol_err": r.sol_err, "iters": r.iters} for r in self.rows]
        out["passed"] = self.passed
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Report":
        rows = [Row(r["delta"], r["nonlocal"], r["local"], r["sol_err"], r["iters"]) for r in data["rows"]]
        return cls(data["experiment"], rows, dict(data["verdicts"]), data["order"], data["tol_ineq"],
                   list(data["checks"]), dict(data["metadata"]))


def _cell(v) -> str:
    if v is None:
        return ""
    return repr(float(v)) if isinstance(v, float) else str(v)


def csv_text(report: Report) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in report.rows:
        writer.writerow([_cell(r.delta), _cell(r.nonlocal_), _cell(r.local), _cell(r.gap),
                         _cell(r.sol_err), _cell(r.iters)])
    return buf.getvalue()


def json_text(report: Report) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True, allow_nan=True) + "\n"


def plot_text(report: Report) -> str:
    """Two whitespace-separated columns ``delta gap`` with a comment header."""
    lines = ["# delta gap"] + [f"{r.delta!r} {r.gap!r}" for r in report.rows]
    return "\n".join(lines) + "\n"


def emit_report(report: Report, directory: str | Path, stem: str,
                formats=("csv", "json"), plot: bool = True) -> list[Path]:
    """Write the report files and return their paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    writers = {"csv": csv_text, "json": json_text}
    written = []
    for fmt in formats:
        path = directory / f"{stem}.{fmt}"
        path.write_text(writers[fmt](report), encoding="utf-8")
        written.append(path)
    if plot:
        path = directory / f"{stem}.gap.dat"
        path.write_text(plot_text(report), encoding="utf-8")
        written.append(path)
    return written


def read_report(path: str | Path) -> Report:
    return Report.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def fit_order(deltas, gaps) -> float | None:
    """Least-squares slope of ``log|gap|`` against ``log delta``.

    Rows with a zero gap are dropped; ``None`` when fewer than two remain.
    """
    pts = [(math.log(d), math.log(abs(g))) for d, g in zip(deltas, gaps) if g != 0]
    if len(pts) < 2:
        return None
    mx = math.fsum(x for x, _ in pts) / len(pts)
    my = math.fsum(y for _, y in pts) / len(pts)
    sxx = math.fsum((x - mx) ** 2 for x, _ in pts)
    sxy = math.fsum((x - mx) * (y - my) for x, y in pts)
    return sxy / sxx
