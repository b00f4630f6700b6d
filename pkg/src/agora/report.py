"""Episode reports: per-task rows, aggregate metrics, JSON/CSV serialisation."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

REPORT_SCHEMA_VERSION = 1
ROW_COLUMNS = (
    "task_id", "selected_agents", "trades", "final_epistemic_norm", "correct",
    "cost", "flops", "truncated", "failed",
)
UNATTAINABLE = "unattainable"


@dataclass(frozen=True)
class TaskRow:
    task_id: str
    selected_agents: tuple[str, ...]
    trades: int
    final_epistemic_norm: float
    correct: bool
    cost: float
    flops: float  # TFLOPs over every evaluation attempt
    truncated: bool = False
    failed: bool = False


def cost_performance_ratio(pflops: float, accuracy: float) -> float:
    """PFLOPs spent per percentage point of accuracy; infinite at zero accuracy."""
    if accuracy <= 0.0:
        return math.inf
    return pflops / (accuracy * 100.0)


def compute_metrics(rows: Sequence[TaskRow], epsilon: float = math.inf, reference_cost: float | None = None) -> dict[str, Any]:
    """Aggregate block, a pure function of the rows and the reference cost."""
    if not rows:
        raise ValueError("cannot aggregate an empty episode")
    n = len(rows)
    correct = 0
    residual = 0.0
    activations = 0
    total_cost = 0.0
    total_flops = 0.0
    trades = 0
    violations = 0
    for row in rows:
        correct += 1 if row.correct else 0
        residual += row.final_epistemic_norm
        activations += len(row.selected_agents)
        total_cost += row.cost
        total_flops += row.flops
        trades += row.trades
        violations += 1 if row.final_epistemic_norm > epsilon else 0
    accuracy = correct / n
    u_final = residual / n
    pflops = total_flops / 1000.0
    relative = None
    if reference_cost is not None and reference_cost > 0.0:
        relative = total_cost / reference_cost
    return {
        "n_tasks": n,
        "accuracy": accuracy,
        "U_final_epis": u_final,
        "COI": activations / n,
        "UAPS": accuracy * (1.0 - u_final),
        "total_cost": total_cost,
        "reference_cost": reference_cost,
        "relative_cost": relative,
        "total_flops": total_flops,
        "total_pflops": pflops,
        "cost_performance_ratio": cost_performance_ratio(pflops, accuracy),
        "total_trades": trades,
        "trades_per_task": trades / n,
        "constraint_violations": violations,
        "truncations": sum(1 for r in rows if r.truncated),
        "failed_evaluations": sum(1 for r in rows if r.failed),
    }


def _jsonable(value):
    if isinstance(value, float) and math.isinf(value):
        return UNATTAINABLE
    return value


def _from_jsonable(value):
    return math.inf if value == UNATTAINABLE else value


@dataclass
class EpisodeReport:
    scenario: str
    seed: int
    strategy: str
    per_task: list[TaskRow]
    aggregate: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "scenario": self.scenario,
            "seed": self.seed,
            "strategy": self.strategy,
            "aggregate": {k: _jsonable(v) for k, v in self.aggregate.items()},
            "per_task": [dict(asdict(r), selected_agents=list(r.selected_agents)) for r in self.per_task],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EpisodeReport":
        doc = json.loads(text)
        if doc.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {doc.get('schema_version')!r}")
        rows = [TaskRow(**dict(r, selected_agents=tuple(r["selected_agents"]))) for r in doc["per_task"]]
        agg = {k: _from_jsonable(v) for k, v in doc["aggregate"].items()}
        return cls(doc["scenario"], doc["seed"], doc["strategy"], rows, agg)

    def per_task_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(ROW_COLUMNS)
        for r in self.per_task:
            w.writerow([r.task_id, ";".join(r.selected_agents), r.trades, repr(r.final_epistemic_norm),
                        int(r.correct), repr(r.cost), repr(r.flops), int(r.truncated), int(r.failed)])
        return buf.getvalue()

    def aggregate_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("metric", "value"))
        for k, v in self.aggregate.items():
            w.writerow((k, "" if v is None else repr(_jsonable(v)) if isinstance(v, float) else v))
        return buf.getvalue()
