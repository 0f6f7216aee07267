import json

import pytest

from funcforge import (
    AgentOutcome,
    Cassette,
    FunctionSpec,
    ReplayBackend,
    Task,
    text_response,
    tool_call_response,
)

# The example function used throughout: evaluate arithmetic expressions via
# sympy.  EXEMPLAR_CODE keeps the prompt-exemplar text verbatim (including
# its stray space before `def`, which the registry's textual check accepts);
# RUNNABLE_EXEMPLAR_CODE is the same function as valid Python for tests that
# actually execute it.
EXEMPLAR_CODE = (
    "from sympy import sympify, SympifyError\n\n def evaluate_expression(expression):\n"
    "    try:\n        result = sympify(expression)\n        if result.is_number:\n"
    "            result = float(result)\n        else:\n            result = str(result)\n"
    "        return result\n    except SympifyError as e:\n        return str(e)"
)
RUNNABLE_EXEMPLAR_CODE = EXEMPLAR_CODE.replace("\n\n def ", "\n\ndef ")

EXEMPLAR_ARGUMENTS = json.dumps(
    {
        "expression": {
            "type": "string",
            "description": "The mathematical expression to evaluate.",
        }
    },
    indent=4,
)


@pytest.fixture
def exemplar_spec():
    return FunctionSpec(
        name="evaluate_expression",
        description="Evaluate arithmetic or mathematical expressions provided as strings.",
        arguments=EXEMPLAR_ARGUMENTS,
        packages="sympy",
        code=EXEMPLAR_CODE,
    )


def make_spec(name, code=None):
    return FunctionSpec(
        name=name,
        description=f"test function {name}",
        arguments='{"x": {"type": "string", "description": "input"}}',
        packages="",
        code=code or f"def {name}(x):\n    return x",
    )


def spec_args(name):
    """Tool-call arguments adding a trivial valid function."""
    spec = make_spec(name)
    return {
        "name": spec.name,
        "description": spec.description,
        "arguments": spec.arguments,
        "packages": spec.packages,
        "code": spec.code,
    }


def add_response(name):
    return tool_call_response("add_function", spec_args(name))


def seq_backend(responses):
    return ReplayBackend(Cassette.from_responses(responses))


def optimizer_script(n_steps, prefix="fn"):
    """Scripted optimizer replies: each step adds one function, then terminates."""
    responses = []
    for step in range(1, n_steps + 1):
        responses.append(add_response(f"{prefix}_{step}"))
        responses.append(text_response("TERMINATE"))
    return responses


def make_tasks(n, checker="exact"):
    return [Task(id=f"t{i}", question=f"question {i}", answer=str(i), checker=checker) for i in range(n)]


class ScriptedAgent:
    """Plays back scripted outcomes, one dict of task-id -> 0/1 per evaluation."""

    def __init__(self, evals):
        self.evals = [dict(entry) for entry in evals]
        self._index = 0
        self._seen = 0

    def solve(self, task, fn_set):
        outcomes = self.evals[self._index]
        bit = outcomes[task.id]
        self._seen += 1
        if self._seen == len(outcomes):
            self._index += 1
            self._seen = 0
        answer = task.answer if bit else "wrong"
        transcript = [
            {"role": "user", "content": task.question},
            {"role": "assistant", "content": answer},
        ]
        return AgentOutcome(
            solved=bool(bit),
            final_answer=answer,
            transcript=transcript,
            rounds_used=1,
        )


def outcomes_for_loss(tasks, loss):
    """First-k-fail outcome map realizing the given loss exactly."""
    failures = round(loss * len(tasks))
    return {task.id: (0 if position < failures else 1) for position, task in enumerate(tasks)}


def agent_for_losses(tasks, losses):
    return ScriptedAgent([outcomes_for_loss(tasks, loss) for loss in losses])


def write_task_file(path, n=10, checker="exact"):
    import json as _json

    lines = []
    for i in range(n):
        lines.append(
            _json.dumps(
                {"id": f"t{i}", "question": f"question {i}", "answer": str(i), "checker": checker}
            )
        )
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")
    return str(path)


def agent_replies_for_loss(n, loss):
    """Direct-answer agent replies realizing the loss on an n-task file."""
    failures = round(loss * n)
    return [text_response("wrong" if j < failures else str(j)) for j in range(n)]


def s1_responses(n=10, losses=(0.6, 0.4, 0.5, 0.4)):
    """Full backend script for a CLI-level scripted run: agent replies for the
    baseline, then per optimizer step one add action, TERMINATE, and the
    next evaluation's agent replies."""
    responses = list(agent_replies_for_loss(n, losses[0]))
    for step, loss in enumerate(losses[1:], start=1):
        responses.append(add_response(f"fn_{step}"))
        responses.append(text_response("TERMINATE"))
        responses.extend(agent_replies_for_loss(n, loss))
    return responses


def write_s1_cassette(path, n=10, losses=(0.6, 0.4, 0.5, 0.4)):
    Cassette.from_responses(s1_responses(n, losses)).save(str(path))
    return str(path)
