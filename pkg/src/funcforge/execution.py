"""Executor interface: where learned code gets run.

The real runner is an out-of-process worker speaking one JSON object per
line on stdin/stdout (see the execshim package).  The primary test suite
never needs it: :class:`StubExecutor` substitutes a fixed input->output
table.  :class:`SubprocessExecutor` is the line-protocol client; it owns
the worker process and enforces the wall-clock timeout by killing and
respawning the worker.
"""

from __future__ import annotations

import json
import logging
import os
import select
import subprocess
import sys
import time
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from .errors import ExecutorError
from .registry import FunctionSpec

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT_S = 30.0
#: Extra wall-clock allowance for killing a hung worker.
KILL_GRACE_S = 2.0


@dataclass(frozen=True)
class ExecRequest:
    """One unit of work: a registry function invocation or raw interpreter code."""

    kind: str  # "function" | "raw_code"
    function: FunctionSpec | None = None
    args: Mapping[str, Any] = field(default_factory=dict)
    code: str | None = None
    timeout_s: float = DEFAULT_TIMEOUT_S

    def __post_init__(self) -> None:
        if self.kind == "function" and self.function is None:
            raise ValueError("kind=function requires a function spec")
        if self.kind == "raw_code" and self.code is None:
            raise ValueError("kind=raw_code requires code")

    def to_wire(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "function": self.function.to_doc() if self.function else None,
            "args": dict(self.args),
            "code": self.code,
            "timeout_s": self.timeout_s,
        }


@dataclass(frozen=True)
class ExecResponse:
    ok: bool
    result: str
    stdout: str = ""
    stderr: str = ""
    duration_ms: int = 0

    @classmethod
    def from_wire(cls, doc: Mapping[str, Any]) -> "ExecResponse":
        return cls(
            ok=bool(doc.get("ok")),
            result=str(doc.get("result", "")),
            stdout=str(doc.get("stdout", "")),
            stderr=str(doc.get("stderr", "")),
            duration_ms=int(doc.get("duration_ms", 0)),
        )


def _stub_key(request: ExecRequest) -> str:
    if request.kind == "function":
        assert request.function is not None
        args = json.dumps(dict(request.args), sort_keys=True, separators=(",", ":"))
        return f"function:{request.function.name}:{args}"
    return f"raw_code:{request.code}"


class StubExecutor:
    """Fixed input->output table; substitutes for the shim in primary tests."""

    def __init__(self) -> None:
        self._table: dict[str, str] = {}

    def add_function_result(self, name: str, args: Mapping[str, Any], result: str) -> None:
        key = json.dumps(dict(args), sort_keys=True, separators=(",", ":"))
        self._table[f"function:{name}:{key}"] = result

    def add_code_result(self, code: str, result: str) -> None:
        self._table[f"raw_code:{code}"] = result

    def run(self, request: ExecRequest) -> ExecResponse:
        key = _stub_key(request)
        if key in self._table:
            return ExecResponse(ok=True, result=self._table[key])
        return ExecResponse(ok=False, result=f"no stub entry for {key}")

    def close(self) -> None:
        pass


class SubprocessExecutor:
    """Client for the line-protocol worker; one worker per executor instance.

    The timeout is parent-enforced: a request that produces no response
    within ``timeout_s`` gets its worker killed (within the grace period)
    and reports a Timeout failure; the next request spawns a fresh worker.
    """

    def __init__(self, command: Sequence[str] | None = None):
        self.command = list(command) if command else [sys.executable, "-m", "execshim"]
        self._proc: subprocess.Popen[bytes] | None = None
        self._buffer = b""

    def _ensure_proc(self) -> subprocess.Popen[bytes]:
        if self._proc is None or self._proc.poll() is not None:
            try:
                self._proc = subprocess.Popen(
                    self.command,
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    stderr=subprocess.DEVNULL,
                )
            except OSError as exc:
                raise ExecutorError(f"could not start executor {self.command!r}: {exc}") from exc
            self._buffer = b""
        return self._proc

    def _kill(self) -> None:
        if self._proc is None:
            return
        self._proc.kill()
        try:
            self._proc.wait(timeout=KILL_GRACE_S)
        except subprocess.TimeoutExpired:  # pragma: no cover - kernel-level stall
            logger.error("executor process did not die after kill")
        self._proc = None
        self._buffer = b""

    def _read_line(self, proc: subprocess.Popen[bytes], deadline: float) -> bytes | None:
        assert proc.stdout is not None
        fd = proc.stdout.fileno()
        while b"\n" not in self._buffer:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return None
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                return None
            chunk = os.read(fd, 65536)
            if not chunk:  # worker died
                return b""
            self._buffer += chunk
        line, _, self._buffer = self._buffer.partition(b"\n")
        return line

    def run(self, request: ExecRequest) -> ExecResponse:
        start = time.monotonic()
        proc = self._ensure_proc()
        assert proc.stdin is not None
        payload = json.dumps(request.to_wire(), ensure_ascii=False) + "\n"
        try:
            proc.stdin.write(payload.encode("utf-8"))
            proc.stdin.flush()
        except (BrokenPipeError, OSError):
            self._kill()
            return ExecResponse(ok=False, result="executor process terminated unexpectedly")

        line = self._read_line(proc, start + request.timeout_s)
        elapsed_ms = int((time.monotonic() - start) * 1000)
        if line is None:
            self._kill()
            return ExecResponse(
                ok=False,
                result=f"Timeout: no result within {request.timeout_s}s",
                duration_ms=elapsed_ms,
            )
        if line == b"":
            self._kill()
            return ExecResponse(
                ok=False,
                result="executor process terminated unexpectedly",
                duration_ms=elapsed_ms,
            )
        try:
            doc = json.loads(line.decode("utf-8"))
        except ValueError:
            self._kill()
            return ExecResponse(
                ok=False, result="malformed executor response", duration_ms=elapsed_ms
            )
        return ExecResponse.from_wire(doc)

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            assert self._proc.stdin is not None
            try:
                self._proc.stdin.close()
                self._proc.wait(timeout=KILL_GRACE_S)
            except (OSError, subprocess.TimeoutExpired):
                self._kill()
        self._proc = None

    def __enter__(self) -> "SubprocessExecutor":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()
