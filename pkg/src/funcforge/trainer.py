"""The training loop: evaluate, step, commit-on-improvement, roll back.

The loop is deliberately literal about its contract:

* the first pass performs no optimizer step, only the baseline evaluation;
* the epoch counter advances only on strict improvement of the training
  loss, so failed steps never consume the epoch budget;
* a non-improving candidate is discarded (the last committed snapshot
  stays active) and its signatures land in the failure ledger together
  with its success rate;
* the ledger is cleared on every commit;
* training stops after more than ``early_stop`` consecutive failures,
  when the epoch budget is exhausted, or (by default) when the committed
  loss reaches zero, since strict improvement is then impossible.

Batch training samples a fresh batch per epoch and otherwise keeps the
same procedure; the ``batch_compare`` mode decides which loss the
improvement test uses when batches change.
"""

from __future__ import annotations

import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

from .actions import StepTranscript, progressive_update
from .agents import AgentOutcome, Task
from .backend import BackendError
from .errors import AgentError, CassetteExhausted, CassetteMiss, SizeError
from .prompts import (
    PromptContext,
    TruncationPolicy,
    format_percent,
    render_conversation,
    render_failure_ledger,
    render_statistic,
    truncate_history,
)
from .registry import FunctionSet, Snapshot, render_signatures, restore, snapshot, to_canonical


@dataclass(frozen=True)
class TrainerConfig:
    """Hyperparameters of the training loop (defaults match common practice:
    10 epochs, early-stop threshold 10, at most 3 actions per update step)."""

    max_epochs: int = 10
    early_stop: int = 10
    max_actions: int = 3
    batch_size: int | None = None
    batch_compare: str = "carry"  # carry | same
    seed: int = 0
    stop_on_zero_loss: bool = True

    def validate(self, n_tasks: int | None = None) -> None:
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.early_stop < 0:
            raise ValueError("early_stop must be >= 0")
        if self.max_actions < 1:
            raise ValueError("max_actions must be >= 1")
        if self.batch_compare not in ("carry", "same"):
            raise ValueError(f"unknown batch_compare mode {self.batch_compare!r}")
        if self.batch_size is not None:
            if self.batch_size < 1:
                raise ValueError("batch_size must be >= 1")
            if n_tasks is not None and self.batch_size > n_tasks:
                raise SizeError(
                    f"batch_size {self.batch_size} exceeds training-set size {n_tasks}"
                )

    def to_doc(self) -> dict[str, Any]:
        return {
            "max_epochs": self.max_epochs,
            "early_stop": self.early_stop,
            "max_actions": self.max_actions,
            "batch_size": self.batch_size,
            "batch_compare": self.batch_compare,
            "seed": self.seed,
            "stop_on_zero_loss": self.stop_on_zero_loss,
        }


@dataclass
class EpochRecord:
    """Loss, per-task outcomes, and conversations for one evaluation pass."""

    loss: float
    outcomes: list[int]  # 0/1 per task, in task order
    histories: list[list[dict[str, Any]]]
    evaluated_set_version: int
    batch_ids: list[str]

    def to_doc(self, include_histories: bool = True) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "loss": self.loss,
            "outcomes": self.outcomes,
            "evaluated_set_version": self.evaluated_set_version,
            "batch_ids": self.batch_ids,
        }
        if include_histories:
            doc["histories"] = self.histories
        return doc


@dataclass
class FailureLedger:
    """Rejected (rendered signatures, success rate) pairs since the last commit."""

    entries: list[tuple[str, float]] = field(default_factory=list)

    def add(self, signatures: str, success_rate: float) -> None:
        self.entries.append((signatures, success_rate))

    def clear(self) -> None:
        self.entries.clear()

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class EvalPoint:
    """One learning-curve row; emitted once per evaluation."""

    epoch_index: int
    candidate_loss: float
    committed_loss: float
    consecutive_failures: int
    ledger_size: int
    evaluations_so_far: int

    def to_doc(self) -> dict[str, Any]:
        return {
            "epoch_index": self.epoch_index,
            "candidate_loss": self.candidate_loss,
            "committed_loss": self.committed_loss,
            "consecutive_failures": self.consecutive_failures,
            "ledger_size": self.ledger_size,
            "evaluations_so_far": self.evaluations_so_far,
        }


@dataclass
class TrainResult:
    final_set: FunctionSet
    committed_loss_trace: list[float]
    candidate_loss_trace: list[float]
    epoch_records: list[EpochRecord]
    stop_reason: str  # max_epochs | early_stop | zero_loss
    total_evaluations: int
    trace: list[EvalPoint]
    step_transcripts: list[StepTranscript]

    def to_json(self) -> str:
        """Canonical serialization; byte-identical for identical runs."""
        doc = {
            "final_set": to_canonical(self.final_set),
            "committed_loss_trace": self.committed_loss_trace,
            "candidate_loss_trace": self.candidate_loss_trace,
            "epoch_records": [record.to_doc() for record in self.epoch_records],
            "stop_reason": self.stop_reason,
            "total_evaluations": self.total_evaluations,
            "trace": [point.to_doc() for point in self.trace],
            "step_transcripts": [json.loads(st.to_json()) for st in self.step_transcripts],
        }
        return json.dumps(doc, sort_keys=True, ensure_ascii=False)


def evaluate(
    agent: Any, fn_set: FunctionSet, tasks: Sequence[Task], workers: int = 1
) -> EpochRecord:
    """Run the agent on every task; aggregate outcomes in task order.

    A single task failure is an outcome of 0 with its error transcript
    recorded; only irrecoverable harness failures (backend transport or
    cassette errors) raise :class:`AgentError`.
    """
    if not tasks:
        raise ValueError("cannot evaluate on an empty task list")
    backend = getattr(agent, "backend", None)
    if workers > 1 and backend is not None and not getattr(backend, "concurrency_safe", True):
        workers = 1  # sequence-replay backends are single-consumer

    def solve(task: Task) -> AgentOutcome:
        return agent.solve(task, fn_set)

    try:
        if workers <= 1:
            outcomes = [solve(task) for task in tasks]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                outcomes = list(pool.map(solve, tasks))
    except (BackendError, CassetteExhausted, CassetteMiss) as exc:
        raise AgentError(f"evaluation aborted: {exc}") from exc

    bits = [1 if outcome.solved else 0 for outcome in outcomes]
    return EpochRecord(
        loss=bits.count(0) / len(bits),
        outcomes=bits,
        histories=[outcome.transcript for outcome in outcomes],
        evaluated_set_version=fn_set.version,
        batch_ids=[task.id for task in tasks],
    )


def sample_batch(rng: random.Random, tasks: Sequence[Task], batch_size: int) -> list[Task]:
    """Seeded uniform sample without replacement, returned in dataset order.

    Successive calls advance the generator state, so every epoch draws a
    fresh batch.
    """
    if not 1 <= batch_size <= len(tasks):
        raise SizeError(f"batch_size must be in [1, {len(tasks)}], got {batch_size}")
    indices = sorted(rng.sample(range(len(tasks)), batch_size))
    return [tasks[i] for i in indices]


def _prompt_context(
    committed: FunctionSet,
    record: EpochRecord,
    ledger: FailureLedger,
    policy: TruncationPolicy,
) -> PromptContext:
    conversations = [
        (f"Task {task_id}", render_conversation(history))
        for task_id, history in zip(record.batch_ids, record.histories)
    ]
    signatures = render_signatures(committed)
    return PromptContext(
        current_function_signature=signatures,
        success_rate=format_percent(1.0 - record.loss),
        actions_num=0,
        updated_function_signature=signatures,
        historical_fail_functions=render_failure_ledger(ledger.entries),
        conversation_num=len(record.histories),
        history=truncate_history(conversations, policy),
        statistic=render_statistic(record.outcomes, record.batch_ids),
    )


class _NullSink:
    def on_eval(self, point: EvalPoint, record: EpochRecord, committed: FunctionSet) -> None:
        pass

    def on_commit(self, committed: FunctionSet, epoch_index: int) -> None:
        pass


def train(
    config: TrainerConfig,
    agent: Any,
    backend: Any,
    train_tasks: Sequence[Task],
    workers: int = 1,
    sink: Any = None,
    initial_set: FunctionSet | None = None,
    truncation: TruncationPolicy = TruncationPolicy(),
) -> TrainResult:
    """Run the full training procedure and return the result.

    With ``config.batch_size`` set this is batch training; otherwise every
    epoch evaluates the whole training set.  Backend and protocol errors
    propagate; the last committed snapshot is reported through ``sink``
    before they do.
    """
    config.validate(len(train_tasks))
    if not train_tasks:
        raise ValueError("train_tasks must be non-empty")
    sink = sink or _NullSink()
    rng = random.Random(config.seed)
    batching = config.batch_size is not None

    committed = initial_set if initial_set is not None else FunctionSet()
    committed_snapshot: Snapshot = snapshot(committed, label="initial")
    ledger = FailureLedger()

    records: list[EpochRecord] = []
    trace: list[EvalPoint] = []
    transcripts: list[StepTranscript] = []
    committed_losses: list[float] = []
    candidate_losses: list[float] = []

    def next_batch() -> Sequence[Task]:
        if not batching:
            return train_tasks
        assert config.batch_size is not None
        return sample_batch(rng, train_tasks, config.batch_size)

    def run_eval(fn_set: FunctionSet, tasks: Sequence[Task]) -> EpochRecord:
        record = evaluate(agent, fn_set, tasks, workers=workers)
        records.append(record)
        candidate_losses.append(record.loss)
        return record

    def result(stop_reason: str) -> TrainResult:
        return TrainResult(
            final_set=restore(committed_snapshot),
            committed_loss_trace=committed_losses,
            candidate_loss_trace=candidate_losses,
            epoch_records=records,
            stop_reason=stop_reason,
            total_evaluations=len(records),
            trace=trace,
            step_transcripts=transcripts,
        )

    def note(record: EpochRecord, r: int) -> None:
        # Called after all bookkeeping for the evaluation; the row carries
        # the committed epoch it belongs to (baseline is epoch 0).
        point = EvalPoint(
            epoch_index=len(committed_losses) - 1,
            candidate_loss=record.loss,
            committed_loss=committed_losses[-1],
            consecutive_failures=r,
            ledger_size=len(ledger),
            evaluations_so_far=len(records),
        )
        trace.append(point)
        sink.on_eval(point, record, restore(committed_snapshot))

    # Baseline: evaluate the initial set; no optimizer step, no epoch consumed.
    baseline = run_eval(committed, next_batch())
    committed_record = baseline
    committed_losses.append(baseline.loss)
    note(baseline, r=0)
    sink.on_commit(committed, epoch_index=0)
    if config.stop_on_zero_loss and baseline.loss == 0.0:
        return result("zero_loss")

    i = 0
    r = 0
    while i < config.max_epochs:
        context = _prompt_context(committed, committed_record, ledger, truncation)
        candidate, transcript = progressive_update(
            committed, context, backend, config.max_actions
        )
        transcripts.append(transcript)

        batch = next_batch()
        compare_loss = committed_record.loss
        if (
            batching
            and config.batch_compare == "same"
            and [task.id for task in batch] != committed_record.batch_ids
        ):
            # Re-evaluate the committed set on the fresh batch so both
            # sides of the improvement test use identical data.
            reference = run_eval(committed, batch)
            note(reference, r)
            compare_loss = reference.loss

        candidate_record = run_eval(candidate, batch)
        if candidate_record.loss < compare_loss:
            committed = candidate
            committed_snapshot = snapshot(candidate, label=f"epoch-{i + 1}-committed")
            committed_record = candidate_record
            ledger.clear()
            r = 0
            i += 1
            committed_losses.append(candidate_record.loss)
            note(candidate_record, r)
            sink.on_commit(committed, epoch_index=i)
            if config.stop_on_zero_loss and candidate_record.loss == 0.0:
                return result("zero_loss")
        else:
            ledger.add(render_signatures(candidate), 1.0 - candidate_record.loss)
            r += 1
            note(candidate_record, r)
            if r > config.early_stop:
                return result("early_stop")

    return result("max_epochs")


def train_batched(
    config: TrainerConfig,
    agent: Any,
    backend: Any,
    train_tasks: Sequence[Task],
    **kwargs: Any,
) -> TrainResult:
    """Batch-training entry point; requires ``config.batch_size``."""
    if config.batch_size is None:
        raise ValueError("train_batched requires config.batch_size")
    return train(config, agent, backend, train_tasks, **kwargs)
