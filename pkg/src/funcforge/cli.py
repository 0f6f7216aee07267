"""Operator entry point: train, eval, replay, report, bound.

Exit codes: 0 success (including early stop), 1 configuration or input
error, 2 backend/protocol error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import shlex
import sys
import time
from pathlib import Path
from typing import Any

from .agents import AgentLimits, ReActAgent, ToolCallAgent
from .backend import Cassette, LiveBackend, ReplayBackend, record
from .bounds import generalization_bound, hoeffding_gap_bound, min_train_size
from .datasets import load_tasks
from .errors import AgentError, BackendError, FuncforgeError, ProtocolError
from .execution import StubExecutor, SubprocessExecutor
from .registry import FunctionSet, load as load_functions, save as save_functions
from .reporting import emit_learning_curve, emit_usage_csv
from .trainer import (
    EpochRecord,
    EvalPoint,
    TrainerConfig,
    TrainResult,
    evaluate,
    train,
)


def _file_digest(path: str) -> str:
    with open(path, "rb") as handle:
        return hashlib.sha256(handle.read()).hexdigest()


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


class RunDirSink:
    """Persists evaluation records and committed snapshots as they happen,
    so an aborted run still leaves the last committed state on disk."""

    def __init__(self, out: Path):
        self.out = out

    def on_eval(self, point: EvalPoint, record: EpochRecord, committed: FunctionSet) -> None:
        doc = {"point": point.to_doc(), "record": record.to_doc()}
        path = self.out / f"epoch_{point.evaluations_so_far - 1:04d}.json"
        path.write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")

    def on_commit(self, committed: FunctionSet, epoch_index: int) -> None:
        save_functions(committed, str(self.out / "committed.functions.json"))


def _make_backend(args: argparse.Namespace, out: Path | None) -> tuple[Any, str | None]:
    """Returns (backend, cassette_path_used)."""
    if args.backend == "live":
        return LiveBackend.from_env(model=args.model), None
    if args.backend == "replay":
        if not args.cassette:
            raise FuncforgeError("--backend replay requires --cassette")
        return ReplayBackend(Cassette.from_file(args.cassette)), args.cassette
    if args.backend == "record":
        cassette_path = args.cassette or (str(out / "cassette.json") if out else None)
        if not cassette_path:
            raise FuncforgeError("--backend record requires --cassette or --out")
        return record(LiveBackend.from_env(model=args.model), cassette_path), cassette_path
    raise FuncforgeError(f"unknown backend {args.backend!r}")


def _make_executor(args: argparse.Namespace) -> Any:
    if args.executor == "shim":
        command = shlex.split(args.shim_cmd) if args.shim_cmd else None
        return SubprocessExecutor(command)
    stub = StubExecutor()
    if getattr(args, "stub_table", None):
        with open(args.stub_table, "r", encoding="utf-8") as handle:
            table = json.load(handle)
        for entry in table.get("functions", []):
            stub.add_function_result(entry["name"], entry.get("args", {}), entry["result"])
        for entry in table.get("raw_code", []):
            stub.add_code_result(entry["code"], entry["result"])
    return stub


def _make_agent(args: argparse.Namespace, backend: Any, executor: Any) -> Any:
    limits = AgentLimits(max_rounds=args.max_rounds)
    cls = ToolCallAgent if args.agent == "toolcall" else ReActAgent
    return cls(backend, executor, limits=limits, model=args.model)


def cmd_train(args: argparse.Namespace) -> int:
    dataset = load_tasks(args.tasks)
    if not dataset.tasks:
        raise FuncforgeError(f"training set {args.tasks} is empty")
    config = TrainerConfig(
        max_epochs=args.epochs,
        early_stop=args.early_stop,
        max_actions=args.max_actions,
        batch_size=args.batch_size,
        batch_compare=args.batch_compare,
        seed=args.seed,
        stop_on_zero_loss=not args.no_stop_on_zero_loss,
    )
    config.validate(len(dataset.tasks))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    backend, cassette_path = _make_backend(args, out)
    executor = _make_executor(args)
    agent = _make_agent(args, backend, executor)
    started = _now()

    (out / "config.json").write_text(
        json.dumps(
            {
                "trainer": config.to_doc(),
                "agent": args.agent,
                "backend": args.backend,
                "executor": args.executor,
                "workers": args.workers,
                "max_rounds": args.max_rounds,
                "model": args.model,
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )

    try:
        result = train(
            config, agent, backend, dataset.tasks, workers=args.workers, sink=RunDirSink(out)
        )
    finally:
        executor.close()

    final_loss = result.committed_loss_trace[-1]
    save_functions(result.final_set, str(out / "committed.functions.json"))
    (out / "result.json").write_text(result.to_json() + "\n", encoding="utf-8")
    emit_learning_curve(result, str(out / "curve.csv"))
    emit_usage_csv(result, str(out / "usage.csv"))

    manifest: dict[str, Any] = {
        "config": config.to_doc(),
        "agent": args.agent,
        "backend_mode": args.backend,
        "executor": args.executor,
        "workers": args.workers,
        "datasets": {
            "train": {
                "path": str(args.tasks),
                "sha256": _file_digest(args.tasks),
                "size": len(dataset.tasks),
            }
        },
        "cassette": cassette_path,
        "started_at": started,
        "finished_at": _now(),
        "stop_reason": result.stop_reason,
        "total_evaluations": result.total_evaluations,
        "final_committed_loss": final_loss,
    }

    print(f"final committed loss {final_loss:.3f}")
    if args.test:
        test_dataset = load_tasks(args.test)
        test_record = evaluate(agent, result.final_set, test_dataset.tasks, workers=args.workers)
        manifest["datasets"]["test"] = {
            "path": str(args.test),
            "sha256": _file_digest(args.test),
            "size": len(test_dataset.tasks),
        }
        manifest["test_loss"] = test_record.loss
        print(f"test loss {test_record.loss:.3f}")

    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    dataset = load_tasks(args.tasks)
    if not dataset.tasks:
        raise FuncforgeError(f"task file {args.tasks} is empty")
    fn_set = load_functions(args.functions) if args.functions else FunctionSet()
    backend, _ = _make_backend(args, None)
    executor = _make_executor(args)
    agent = _make_agent(args, backend, executor)
    try:
        record = evaluate(agent, fn_set, dataset.tasks, workers=args.workers)
    finally:
        executor.close()
    print(f"loss {record.loss:.3f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "outcomes.json").write_text(
            json.dumps(record.to_doc(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
        )
    return 0


def _load_result(run_dir: Path) -> TrainResult:
    result_doc = json.loads((run_dir / "result.json").read_text(encoding="utf-8"))
    records = [
        EpochRecord(
            loss=doc["loss"],
            outcomes=doc["outcomes"],
            histories=doc.get("histories", []),
            evaluated_set_version=doc["evaluated_set_version"],
            batch_ids=doc["batch_ids"],
        )
        for doc in result_doc["epoch_records"]
    ]
    trace = [EvalPoint(**doc) for doc in result_doc["trace"]]
    return TrainResult(
        final_set=FunctionSet(),
        committed_loss_trace=result_doc["committed_loss_trace"],
        candidate_loss_trace=result_doc["candidate_loss_trace"],
        epoch_records=records,
        stop_reason=result_doc["stop_reason"],
        total_evaluations=result_doc["total_evaluations"],
        trace=trace,
        step_transcripts=[],
    )


def cmd_report(args: argparse.Namespace) -> int:
    run_dir = Path(args.run)
    if not (run_dir / "result.json").exists():
        raise FuncforgeError(f"{run_dir} is not a run directory (no result.json)")
    result = _load_result(run_dir)
    curve_path = run_dir / "curve.csv"
    usage_path = run_dir / "usage.csv"
    emit_learning_curve(result, str(curve_path))
    emit_usage_csv(result, str(usage_path))
    print(f"wrote {curve_path} and {usage_path}")
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    run_dir = Path(args.run)
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        raise FuncforgeError(f"{run_dir} is not a run directory (no manifest.json)")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    config = TrainerConfig(**manifest["config"])
    tasks_path = manifest["datasets"]["train"]["path"]
    if _file_digest(tasks_path) != manifest["datasets"]["train"]["sha256"]:
        raise FuncforgeError(f"task file {tasks_path} changed since the recorded run")
    cassette_path = manifest.get("cassette") or str(run_dir / "cassette.json")
    backend = ReplayBackend(Cassette.from_file(cassette_path))

    namespace = argparse.Namespace(
        agent=manifest["agent"],
        executor=manifest["executor"],
        shim_cmd=None,
        stub_table=None,
        model="",
        max_rounds=manifest.get("max_rounds", 15),
    )
    executor = _make_executor(namespace)
    agent = _make_agent(namespace, backend, executor)
    dataset = load_tasks(tasks_path)
    try:
        result = train(
            config, agent, backend, dataset.tasks, workers=manifest.get("workers", 1)
        )
    finally:
        executor.close()

    recorded = manifest["final_committed_loss"]
    replayed = result.committed_loss_trace[-1]
    print(f"recorded committed loss {recorded:.6f}")
    print(f"replayed committed loss {replayed:.6f}")
    if replayed != recorded:
        print("replay MISMATCH", file=sys.stderr)
        return 1
    print("replay OK")
    return 0


def cmd_bound(args: argparse.Namespace) -> int:
    gap = hoeffding_gap_bound(args.beta, args.delta, args.n)
    print(f"hoeffding gap bound: {gap:.12f}")
    print(f"generalization bound: {generalization_bound(args.beta, args.delta, args.n):.12f}")
    if args.epsilon is not None:
        print(f"min train size: {min_train_size(args.beta, args.delta, args.epsilon)}")
    return 0


def _add_backend_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--agent", choices=("toolcall", "react"), default="toolcall")
    parser.add_argument("--backend", choices=("live", "replay", "record"), default="replay")
    parser.add_argument("--cassette", help="cassette file for replay/record backends")
    parser.add_argument("--model", default="", help="model id for the live backend")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--max-rounds", type=int, default=15)
    parser.add_argument("--executor", choices=("shim", "stub"), default="shim")
    parser.add_argument("--shim-cmd", help="override the executor worker command")
    parser.add_argument("--stub-table", help="JSON table backing the stub executor")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="funcforge")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run the training loop")
    p_train.add_argument("--tasks", required=True)
    p_train.add_argument("--test")
    p_train.add_argument("--epochs", type=int, default=10)
    p_train.add_argument("--early-stop", type=int, default=10)
    p_train.add_argument("--max-actions", type=int, default=3)
    p_train.add_argument("--batch-size", type=int)
    p_train.add_argument("--batch-compare", choices=("carry", "same"), default="carry")
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--no-stop-on-zero-loss", action="store_true")
    _add_backend_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a saved function set")
    p_eval.add_argument("--tasks", required=True)
    p_eval.add_argument("--functions")
    p_eval.add_argument("--out")
    _add_backend_flags(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_report = sub.add_parser("report", help="regenerate curve.csv and usage.csv")
    p_report.add_argument("--run", required=True)
    p_report.set_defaults(func=cmd_report)

    p_replay = sub.add_parser("replay", help="re-run a recorded run and verify it")
    p_replay.add_argument("--run", required=True)
    p_replay.set_defaults(func=cmd_replay)

    p_bound = sub.add_parser("bound", help="train/test gap bound calculators")
    p_bound.add_argument("--beta", type=float, required=True)
    p_bound.add_argument("--delta", type=float, required=True)
    p_bound.add_argument("--n", type=int, required=True)
    p_bound.add_argument("--epsilon", type=float)
    p_bound.set_defaults(func=cmd_bound)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except (BackendError, ProtocolError, AgentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FuncforgeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
