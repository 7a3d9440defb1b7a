"""Per-iteration training records and their CSV form."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

HEADER = ("iteration", "critic_surrogate", "penalty_value", "neg_critic_loss", "emd", "wall_ms")


@dataclass(frozen=True)
class TrainRecord:
    iteration: int
    critic_surrogate: float
    penalty_value: float
    emd: float | None = None
    wall_ms: int | None = None

    @property
    def neg_critic_loss(self) -> float:
        # E[f(real)] - E[f(fake)] with the sign flipped; never includes the penalty
        return -self.critic_surrogate


def _fmt(x) -> str:
    return "" if x is None else f"{x:.17g}"


def records_to_csv(records) -> str:
    buf = io.StringIO()
    buf.write(",".join(HEADER) + "\n")
    for r in records:
        row = (
            str(r.iteration),
            _fmt(r.critic_surrogate),
            _fmt(r.penalty_value),
            _fmt(r.neg_critic_loss),
            _fmt(r.emd),
            "" if r.wall_ms is None else str(int(r.wall_ms)),
        )
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def records_from_csv(text: str) -> list[TrainRecord]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != HEADER:
        raise ValueError(f"unexpected run-log header {reader.fieldnames}")
    out = []
    for row in reader:
        rec = TrainRecord(
            iteration=int(row["iteration"]),
            critic_surrogate=float(row["critic_surrogate"]),
            penalty_value=float(row["penalty_value"]),
            emd=float(row["emd"]) if row["emd"] else None,
            wall_ms=int(row["wall_ms"]) if row["wall_ms"] else None,
        )
        if float(row["neg_critic_loss"]) != rec.neg_critic_loss:
            raise ValueError(f"iteration {rec.iteration}: neg_critic_loss is not -critic_surrogate")
        out.append(rec)
    return out
