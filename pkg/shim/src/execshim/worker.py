"""Line-protocol worker that executes learned functions and raw code.

Reads one JSON request per stdin line and writes exactly one JSON response
per stdout line, so the parent can never desync.  Every request runs inside
a fresh temporary working directory; the worker itself never installs
packages and never enforces timeouts (the parent kills a hung worker).

This process runs untrusted generated code with no OS-level sandboxing;
treat it as a trust boundary and run it accordingly.
"""

from __future__ import annotations

import io
import json
import os
import sys
import tempfile
import time
import traceback
from contextlib import redirect_stderr, redirect_stdout
from inspect import Parameter, signature
from typing import Any

#: Cap applied to result/stdout/stderr, each.
OUTPUT_CAP = 64 * 1024
_TRUNCATION_MARK = "...[truncated]"
_SOURCE_NAME = "<learned-code>"


def _capped(text: str) -> str:
    if len(text) <= OUTPUT_CAP:
        return text
    return text[: OUTPUT_CAP - len(_TRUNCATION_MARK)] + _TRUNCATION_MARK


def _error_summary(exc: BaseException) -> str:
    """Error class and message, with the offending line in the learned code."""
    summary = f"{type(exc).__name__}: {exc}"
    for frame in reversed(traceback.extract_tb(exc.__traceback__)):
        if frame.filename == _SOURCE_NAME:
            return f"{summary} (line {frame.lineno})"
    return summary


def _serialize(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    return str(value)


def _missing_arguments(fn: Any, args: dict[str, Any]) -> list[str]:
    try:
        parameters = signature(fn).parameters
    except (TypeError, ValueError):
        return []
    missing = []
    for name, param in parameters.items():
        if param.kind in (Parameter.VAR_POSITIONAL, Parameter.VAR_KEYWORD):
            continue
        if param.default is Parameter.empty and name not in args:
            missing.append(name)
    return missing


def _run_function(doc: dict[str, Any], args: dict[str, Any], out: io.StringIO, err: io.StringIO):
    name = str(doc.get("name", ""))
    code = str(doc.get("code", ""))
    try:
        compiled = compile(code, _SOURCE_NAME, "exec")
    except SyntaxError as exc:
        return False, f"ParseError: {exc.msg} (line {exc.lineno})"
    namespace: dict[str, Any] = {}
    try:
        with redirect_stdout(out), redirect_stderr(err):
            exec(compiled, namespace)
    except (Exception, SystemExit) as exc:
        return False, _error_summary(exc)
    fn = namespace.get(name)
    if not callable(fn):
        return False, (
            f"NameMismatch: the code does not define a callable named {name!r}; "
            "the declared name must match the function name in the code"
        )
    missing = _missing_arguments(fn, args)
    if missing:
        return False, f"MissingArgument: missing required argument(s): {', '.join(missing)}"
    try:
        with redirect_stdout(out), redirect_stderr(err):
            value = fn(**args)
    except (Exception, SystemExit) as exc:
        return False, _error_summary(exc)
    return True, _serialize(value)


def _run_raw(code: str, out: io.StringIO, err: io.StringIO):
    try:
        compiled = compile(code, _SOURCE_NAME, "exec")
    except SyntaxError as exc:
        return False, f"ParseError: {exc.msg} (line {exc.lineno})"
    try:
        with redirect_stdout(out), redirect_stderr(err):
            exec(compiled, {})
    except (Exception, SystemExit) as exc:
        return False, _error_summary(exc)
    return True, out.getvalue().rstrip("\n")


def handle(request: dict[str, Any]) -> dict[str, Any]:
    """Execute one request and build the response document."""
    start = time.monotonic()
    out, err = io.StringIO(), io.StringIO()
    kind = request.get("kind")

    previous_dir = os.getcwd()
    with tempfile.TemporaryDirectory(prefix="execshim-") as workdir:
        os.chdir(workdir)
        try:
            if kind == "function":
                doc = request.get("function") or {}
                args = request.get("args") or {}
                if not isinstance(args, dict):
                    ok, result = False, "ParseError: args must be a JSON object"
                else:
                    ok, result = _run_function(doc, args, out, err)
            elif kind == "raw_code":
                ok, result = _run_raw(str(request.get("code") or ""), out, err)
            else:
                ok, result = False, f"ParseError: unknown request kind {kind!r}"
        finally:
            os.chdir(previous_dir)

    if ok and len(result) > OUTPUT_CAP:
        ok, result = False, f"OutputTooLarge: result exceeds {OUTPUT_CAP} bytes"
    return {
        "ok": ok,
        "result": result,
        "stdout": _capped(out.getvalue()),
        "stderr": _capped(err.getvalue()),
        "duration_ms": int((time.monotonic() - start) * 1000),
    }


def main() -> int:
    """Serve requests until EOF on stdin; exit 0 on clean shutdown."""
    stdin = sys.stdin
    stdout = sys.stdout
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
            if not isinstance(request, dict):
                raise ValueError("request must be a JSON object")
        except ValueError as exc:
            response = {
                "ok": False,
                "result": f"ParseError: invalid request line: {exc}",
                "stdout": "",
                "stderr": "",
                "duration_ms": 0,
            }
        else:
            response = handle(request)
        stdout.write(json.dumps(response, ensure_ascii=False) + "\n")
        stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
