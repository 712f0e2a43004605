"""Evaluation report: per-volume rows plus mean/std aggregates, as table and CSV."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError

METRICS = ("ang_deg", "dis_mm", "ssim", "ncc", "steps")
HEADER = ("volume",) + METRICS


@dataclass(frozen=True)
class EvalRow:
    volume: str
    ang_deg: float
    dis_mm: float
    ssim: float
    ncc: float
    steps: int


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)
    policy: str = "agent"

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=np.float64)

    def mean(self, name: str) -> float:
        return float(self.column(name).mean())

    def std(self, name: str) -> float:
        return float(self.column(name).std())

    def aggregate(self) -> dict[str, tuple[float, float]]:
        return {m: (self.mean(m), self.std(m)) for m in METRICS}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HEADER)
        for r in self.rows:
            w.writerow([r.volume] + [repr(float(getattr(r, m))) for m in METRICS[:-1]] + [r.steps])
        agg = self.aggregate()
        w.writerow(["mean"] + [repr(agg[m][0]) for m in METRICS])
        w.writerow(["std"] + [repr(agg[m][1]) for m in METRICS])
        return buf.getvalue()

    def to_table(self) -> str:
        lines = [f"policy: {self.policy}", f"{'volume':<24}{'Ang(deg)':>10}{'Dis(mm)':>10}{'SSIM':>8}{'NCC':>8}{'steps':>7}"]
        for r in self.rows:
            lines.append(
                f"{r.volume:<24}{r.ang_deg:>10.2f}{r.dis_mm:>10.2f}{r.ssim:>8.3f}{r.ncc:>8.3f}{r.steps:>7d}"
            )
        agg = self.aggregate()
        lines.append(
            "mean+-std".ljust(24)
            + f"{agg['ang_deg'][0]:>6.2f}+-{agg['ang_deg'][1]:<5.2f}"
            + f"{agg['dis_mm'][0]:>6.2f}+-{agg['dis_mm'][1]:<5.2f}"
            + f"{agg['ssim'][0]:>6.3f}+-{agg['ssim'][1]:<5.3f}"
            + f"{agg['ncc'][0]:>6.3f}+-{agg['ncc'][1]:<5.3f}"
        )
        return "\n".join(lines) + "\n"

    def write(self, out_dir, stem: str = "eval") -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / f"{stem}.csv"
        txt_path = out_dir / f"{stem}.txt"
        csv_path.write_text(self.to_csv())
        txt_path.write_text(self.to_table())
        return csv_path, txt_path


def read_report_csv(text: str, tol: float = 1e-9) -> EvalReport:
    """Parse a report CSV and check that its aggregate rows match the data rows."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != HEADER:
        raise FormatError("missing or unexpected report header")
    body = rows[1:]
    if len(body) < 2 or body[-2][0] != "mean" or body[-1][0] != "std":
        raise FormatError("report lacks mean/std rows")
    try:
        report = EvalReport(
            rows=[
                EvalRow(r[0], float(r[1]), float(r[2]), float(r[3]), float(r[4]), int(r[5]))
                for r in body[:-2]
            ]
        )
        stored_mean = [float(x) for x in body[-2][1:]]
        stored_std = [float(x) for x in body[-1][1:]]
    except (ValueError, IndexError) as exc:
        raise FormatError(f"malformed report row: {exc}") from exc
    if not report.rows:
        raise FormatError("report has no data rows")
    for m, mu, sd in zip(METRICS, stored_mean, stored_std):
        if abs(report.mean(m) - mu) > tol or abs(report.std(m) - sd) > tol:
            raise FormatError(f"aggregate for {m} does not match the data rows")
    return report
