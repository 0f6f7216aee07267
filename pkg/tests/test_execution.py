import json
import sys
import time

import pytest

from funcforge import ExecRequest, ExecResponse, StubExecutor, SubprocessExecutor
from funcforge.errors import ExecutorError

from conftest import make_spec

# Minimal stand-in worker speaking the line protocol, so the client can be
# tested without the real shim installed.
FAKE_WORKER = r"""
import json, sys, time
for line in sys.stdin:
    req = json.loads(line)
    if req.get("code") == "HANG":
        time.sleep(60)
    if req.get("code") == "DIE":
        sys.exit(1)
    resp = {"ok": True, "result": "echo:" + str(req.get("kind")),
            "stdout": "", "stderr": "", "duration_ms": 1}
    sys.stdout.write(json.dumps(resp) + "\n")
    sys.stdout.flush()
"""


@pytest.fixture
def fake_worker_cmd(tmp_path):
    script = tmp_path / "worker.py"
    script.write_text(FAKE_WORKER)
    return [sys.executable, str(script)]


def test_exec_request_invariants(exemplar_spec):
    with pytest.raises(ValueError):
        ExecRequest(kind="function")
    with pytest.raises(ValueError):
        ExecRequest(kind="raw_code")
    wire = ExecRequest(kind="function", function=exemplar_spec, args={"expression": "2+2"}).to_wire()
    assert set(wire) == {"kind", "function", "args", "code", "timeout_s"}
    assert wire["function"]["name"] == "evaluate_expression"


def test_stub_function_lookup():
    stub = StubExecutor()
    stub.add_function_result("evaluate_expression", {"expression": "2+2"}, "4.0")
    spec = make_spec("evaluate_expression", code="def evaluate_expression(expression):\n    pass")
    response = stub.run(
        ExecRequest(kind="function", function=spec, args={"expression": "2+2"})
    )
    assert response.ok and response.result == "4.0"


def test_stub_code_lookup_and_miss():
    stub = StubExecutor()
    stub.add_code_result("print(7*6)", "42")
    assert stub.run(ExecRequest(kind="raw_code", code="print(7*6)")).result == "42"
    miss = stub.run(ExecRequest(kind="raw_code", code="print(1)"))
    assert not miss.ok
    assert "no stub entry" in miss.result


def test_subprocess_round_trip(fake_worker_cmd):
    with SubprocessExecutor(fake_worker_cmd) as executor:
        response = executor.run(ExecRequest(kind="raw_code", code="print(1)"))
        assert response.ok
        assert response.result == "echo:raw_code"
        # multiple requests over one worker
        for _ in range(5):
            assert executor.run(ExecRequest(kind="raw_code", code="x")).ok


def test_subprocess_timeout_kills_and_recovers(fake_worker_cmd):
    with SubprocessExecutor(fake_worker_cmd) as executor:
        start = time.monotonic()
        response = executor.run(ExecRequest(kind="raw_code", code="HANG", timeout_s=0.5))
        elapsed = time.monotonic() - start
        assert not response.ok
        assert "Timeout" in response.result
        assert elapsed < 0.5 + 2.0
        # a fresh worker handles the next request
        assert executor.run(ExecRequest(kind="raw_code", code="ok")).ok


def test_subprocess_worker_death_reported(fake_worker_cmd):
    with SubprocessExecutor(fake_worker_cmd) as executor:
        response = executor.run(ExecRequest(kind="raw_code", code="DIE", timeout_s=5))
        assert not response.ok
        assert "terminated" in response.result
        assert executor.run(ExecRequest(kind="raw_code", code="ok")).ok


def test_missing_command_raises():
    executor = SubprocessExecutor(["/nonexistent/worker-binary"])
    with pytest.raises(ExecutorError):
        executor.run(ExecRequest(kind="raw_code", code="x"))


def test_exec_response_from_wire_defaults():
    response = ExecResponse.from_wire({"ok": True, "result": "r"})
    assert response.stdout == "" and response.duration_ms == 0
