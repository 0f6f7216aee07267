"""Task ingestion and seeded train/test splitting.

Task files are line-delimited JSON, one task per line:
``{"id": ..., "question": ..., "answer": ..., "checker": ..., "metadata": {...}}``.
"""

from __future__ import annotations

import json
import os
import random
from dataclasses import dataclass

from .agents import Task
from .errors import DatasetParseError, DuplicateId, SizeError

_CHECKERS = ("exact", "numeric", "normalized_list")


@dataclass(frozen=True)
class Dataset:
    tasks: tuple[Task, ...]
    name: str = ""

    def __len__(self) -> int:
        return len(self.tasks)


def load_tasks(path: str) -> Dataset:
    """Parse a task file; errors carry the offending line number."""
    tasks: list[Task] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except ValueError as exc:
                raise DatasetParseError(f"{path}, line {lineno}: invalid JSON: {exc}") from exc
            if not isinstance(doc, dict):
                raise DatasetParseError(f"{path}, line {lineno}: task must be a JSON object")
            try:
                task_id = str(doc["id"])
                question = str(doc["question"])
                answer = str(doc["answer"])
            except KeyError as exc:
                raise DatasetParseError(f"{path}, line {lineno}: missing field {exc}") from exc
            checker = doc.get("checker", "exact")
            if checker not in _CHECKERS:
                raise DatasetParseError(
                    f"{path}, line {lineno}: unknown checker {checker!r} "
                    f"(expected one of {', '.join(_CHECKERS)})"
                )
            if not answer:
                raise DatasetParseError(f"{path}, line {lineno}: answer must be non-empty")
            if task_id in seen:
                raise DuplicateId(f"{path}, line {lineno}: duplicate task id {task_id!r}")
            seen.add(task_id)
            tasks.append(
                Task(
                    id=task_id,
                    question=question,
                    answer=answer,
                    checker=checker,
                    metadata=doc.get("metadata"),
                )
            )
    return Dataset(tasks=tuple(tasks), name=os.path.splitext(os.path.basename(path))[0])


def save_tasks(dataset: Dataset, path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for task in dataset.tasks:
            doc = {
                "id": task.id,
                "question": task.question,
                "answer": task.answer,
                "checker": task.checker,
            }
            if task.metadata is not None:
                doc["metadata"] = dict(task.metadata)
            handle.write(json.dumps(doc, ensure_ascii=False) + "\n")


def split(dataset: Dataset, seed: int, n_train: int, n_test: int) -> tuple[Dataset, Dataset]:
    """Disjoint seeded uniform samples, deterministic per (seed, dataset order)."""
    if n_train < 0 or n_test < 0 or n_train + n_test > len(dataset):
        raise SizeError(
            f"cannot draw {n_train}+{n_test} tasks from a dataset of {len(dataset)}"
        )
    rng = random.Random(seed)
    chosen = rng.sample(range(len(dataset)), n_train + n_test)
    train_idx = sorted(chosen[:n_train])
    test_idx = sorted(chosen[n_train:])
    return (
        Dataset(tasks=tuple(dataset.tasks[i] for i in train_idx), name=f"{dataset.name}-train"),
        Dataset(tasks=tuple(dataset.tasks[i] for i in test_idx), name=f"{dataset.name}-test"),
    )
