"""Run reporting: learning curves and function-usage statistics."""

from __future__ import annotations

import csv
from dataclasses import dataclass

from .trainer import TrainResult

CURVE_COLUMNS = (
    "epoch_index",
    "committed_loss",
    "candidate_loss",
    "consecutive_failures",
    "ledger_size",
    "evaluations_so_far",
)

USAGE_COLUMNS = ("epoch_index", "function", "calls", "successful_calls")


@dataclass(frozen=True)
class UsageStats:
    """Per-function call counts for one evaluation pass."""

    epoch: int
    rows: tuple[tuple[str, int, int], ...]  # (name, call_count, success_count)


def emit_learning_curve(result: TrainResult, path: str) -> None:
    """Write one curve row per evaluation."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CURVE_COLUMNS)
        for point in result.trace:
            writer.writerow(
                [
                    point.epoch_index,
                    f"{point.committed_loss:.6f}",
                    f"{point.candidate_loss:.6f}",
                    point.consecutive_failures,
                    point.ledger_size,
                    point.evaluations_so_far,
                ]
            )


def function_usage_stats(result: TrainResult) -> list[UsageStats]:
    """Count tool invocations and successful executions per function, per pass.

    Innate interpreter calls are tracked under the reserved name
    ``python``.
    """
    stats: list[UsageStats] = []
    for epoch, record in enumerate(result.epoch_records):
        calls: dict[str, int] = {}
        successes: dict[str, int] = {}
        for history in record.histories:
            for message in history:
                if message.get("role") != "tool":
                    continue
                name = str(message.get("name", ""))
                calls[name] = calls.get(name, 0) + 1
                if message.get("ok"):
                    successes[name] = successes.get(name, 0) + 1
        rows = tuple(
            (name, calls[name], successes.get(name, 0)) for name in sorted(calls)
        )
        stats.append(UsageStats(epoch=epoch, rows=rows))
    return stats


def emit_usage_csv(result: TrainResult, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(USAGE_COLUMNS)
        for stat in function_usage_stats(result):
            for name, call_count, success_count in stat.rows:
                writer.writerow([stat.epoch, name, call_count, success_count])
