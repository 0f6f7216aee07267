"""The trainable agent systems: a tool-call agent and a ReAct agent.

Both agents run a learned function set against one task at a time.  The
innate code interpreter is a fixed pseudo-tool named ``python`` that is
always advertised and never part of the learnable set, so the optimizer
cannot remove it.  Success is always decided by :func:`check_answer`
against ground truth, never by agent self-report.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Any, Mapping, Union

from .backend import ChatRequest, ChatResponse, Message, ToolCall
from .errors import MalformedTranscript, MissingInput
from .execution import ExecRequest, ExecResponse
from .prompts import render_react_prompt
from .registry import FunctionSet, FunctionSpec

PYTHON_TOOL = "python"
PYTHON_TOOL_DESCRIPTION = (
    "Execute a snippet of Python code; printed output is returned as the result."
)
PYTHON_TOOL_SCHEMA = {
    "type": "function",
    "function": {
        "name": PYTHON_TOOL,
        "description": PYTHON_TOOL_DESCRIPTION,
        "parameters": {
            "type": "object",
            "properties": {
                "code": {"type": "string", "description": "Python source to execute."}
            },
            "required": ["code"],
        },
    },
}

TOOLCALL_SYSTEM_PROMPT = (
    "You are a helpful assistant that solves tasks by reasoning and calling tools. "
    "Use the python tool to execute code when computation is needed. "
    "When you know the final answer, reply with the answer text only and no tool calls."
)


@dataclass(frozen=True)
class Task:
    """One problem instance with ground truth and its checking mode."""

    id: str
    question: str
    answer: str
    checker: str = "exact"  # exact | numeric | normalized_list
    metadata: Mapping[str, Any] | None = None


@dataclass
class AgentOutcome:
    solved: bool
    final_answer: str | None
    transcript: list[dict[str, Any]]
    rounds_used: int
    error: str | None = None


@dataclass(frozen=True)
class AgentLimits:
    max_rounds: int = 15
    tool_timeout_s: float = 30.0


@dataclass(frozen=True)
class ReactStep:
    thought: str
    action: str
    action_input: str
    index: int


@dataclass(frozen=True)
class ReactFinal:
    answer: str


ReActStep = Union[ReactStep, ReactFinal]


# --- answer checking -------------------------------------------------------

_NUMBER_RE = re.compile(r"-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?")


def _parse_number(text: str) -> float | None:
    cleaned = text.strip().replace(",", "")
    for sign in ("$", "%", "€", "£"):
        cleaned = cleaned.replace(sign, "")
    cleaned = cleaned.strip()
    try:
        return float(cleaned)
    except ValueError:
        pass
    tokens = _NUMBER_RE.findall(cleaned)
    if not tokens:
        return None
    return float(tokens[-1])


def _numbers_match(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=1e-6, abs_tol=1e-9)


def _elements_match(prediction: str, truth: str) -> bool:
    p_num, t_num = _parse_number(prediction), _parse_number(truth)
    if p_num is not None and t_num is not None:
        return _numbers_match(p_num, t_num)
    return prediction == truth


def check_answer(prediction: str | None, truth: str, checker: str = "exact") -> bool:
    """Compare a predicted answer against ground truth.

    ``exact`` is byte equality after trimming; ``numeric`` parses both
    sides after stripping commas, currency/percent signs, and surrounding
    words, then compares with relative tolerance 1e-6; ``normalized_list``
    splits on commas, trims, lowercases, and applies the numeric rule per
    element.  Unparseable numeric predictions are simply wrong, never an
    error.
    """
    if prediction is None:
        return False
    if checker == "exact":
        return prediction.strip() == truth.strip()
    if checker == "numeric":
        p, t = _parse_number(prediction), _parse_number(truth)
        return p is not None and t is not None and _numbers_match(p, t)
    if checker == "normalized_list":
        p_items = [item.strip().lower() for item in prediction.split(",")]
        t_items = [item.strip().lower() for item in truth.split(",")]
        return len(p_items) == len(t_items) and all(
            _elements_match(p, t) for p, t in zip(p_items, t_items)
        )
    raise ValueError(f"unknown checker {checker!r}")


# --- ReAct transcript parsing ----------------------------------------------

_FINAL_RE = re.compile(r"^FINAL ANSWER:(.*)$", re.MULTILINE | re.DOTALL)
_THOUGHT_RE = re.compile(r"^Thought:(.*?)(?=^(?:Action \d+:|Action \d+ Input:|FINAL ANSWER:)|\Z)", re.MULTILINE | re.DOTALL)
_ACTION_RE = re.compile(r"^Action (\d+):(.*?)$", re.MULTILINE)
_INPUT_RE = re.compile(r"^Action (\d+) Input:(.*?)(?=^(?:Thought:|Action \d+:|Observation \d+:|FINAL ANSWER:)|\Z)", re.MULTILINE | re.DOTALL)


def parse_react(text: str, last_index: int = 0) -> ReActStep:
    """Parse one ReAct reply into a step or a final answer.

    Recognizes, case-sensitively, the labels ``Thought:``, ``Action k:``,
    ``Action k Input:`` (multi-line input runs to the next label or end),
    and ``FINAL ANSWER:``, which wins when both are present.  The action
    index must be greater than ``last_index``.
    """
    final = _FINAL_RE.search(text)
    if final:
        return ReactFinal(answer=final.group(1).strip())

    action = _ACTION_RE.search(text)
    if not action:
        raise MalformedTranscript(
            "no recognizable labels (expected Thought/Action/Action Input or FINAL ANSWER)"
        )
    index = int(action.group(1))
    if index <= last_index:
        raise MalformedTranscript(
            f"action index {index} does not increase (last was {last_index})"
        )

    action_input = None
    for match in _INPUT_RE.finditer(text):
        if int(match.group(1)) == index:
            action_input = match.group(2).strip()
            break
    if action_input is None:
        raise MissingInput(f"Action {index} has no matching 'Action {index} Input:' line")

    thought_match = _THOUGHT_RE.search(text)
    thought = thought_match.group(1).strip() if thought_match else ""
    return ReactStep(
        thought=thought,
        action=action.group(2).strip(),
        action_input=action_input,
        index=index,
    )


def render_react_step(step: ReActStep) -> str:
    """Inverse of :func:`parse_react` for well-formed steps."""
    if isinstance(step, ReactFinal):
        return f"FINAL ANSWER: {step.answer}"
    return (
        f"Thought: {step.thought}\n"
        f"Action {step.index}: {step.action}\n"
        f"Action {step.index} Input: {step.action_input}"
    )


# --- shared agent plumbing ---------------------------------------------------


def question_text(task: Task) -> str:
    """The user-facing problem statement, with any table prepended."""
    if task.metadata and "table" in task.metadata:
        table = task.metadata["table"]
        rendered = table if isinstance(table, str) else json.dumps(table, ensure_ascii=False)
        return f"{rendered}\n\n{task.question}"
    return task.question


def _registry_tool_schema(spec: FunctionSpec) -> dict[str, Any]:
    try:
        properties = spec.parsed_arguments()
    except ValueError:
        properties = {}
    return {
        "type": "function",
        "function": {
            "name": spec.name,
            "description": spec.description,
            "parameters": {
                "type": "object",
                "properties": properties,
                "required": list(properties.keys()),
            },
        },
    }


@dataclass
class _Transcript:
    messages: list[dict[str, Any]] = field(default_factory=list)

    def text(self, role: str, content: str) -> None:
        self.messages.append({"role": role, "content": content})

    def tool_calls(self, content: str, calls: tuple[ToolCall, ...]) -> None:
        entry: dict[str, Any] = {"role": "assistant", "content": content}
        entry["tool_calls"] = [{"name": c.name, "arguments": c.arguments} for c in calls]
        self.messages.append(entry)

    def tool_result(self, name: str, content: str, ok: bool) -> None:
        self.messages.append({"role": "tool", "name": name, "content": content, "ok": ok})


class ToolCallAgent:
    """LLM loop with the innate interpreter plus one tool per registry function."""

    def __init__(self, backend: Any, executor: Any, limits: AgentLimits = AgentLimits(), model: str = ""):
        self.backend = backend
        self.executor = executor
        self.limits = limits
        self.model = model

    def solve(self, task: Task, fn_set: FunctionSet) -> AgentOutcome:
        tools = tuple([PYTHON_TOOL_SCHEMA] + [_registry_tool_schema(s) for s in fn_set.functions])
        messages: list[Message] = [
            Message(role="system", content=TOOLCALL_SYSTEM_PROMPT),
            Message(role="user", content=question_text(task)),
        ]
        transcript = _Transcript()
        transcript.text("system", TOOLCALL_SYSTEM_PROMPT)
        transcript.text("user", question_text(task))

        for round_index in range(1, self.limits.max_rounds + 1):
            response = self.backend.complete(
                ChatRequest(messages=tuple(messages), model=self.model, tools=tools)
            )
            if not response.tool_calls:
                final = (response.content or "").strip()
                transcript.text("assistant", final)
                solved = check_answer(final, task.answer, task.checker)
                return AgentOutcome(solved, final, transcript.messages, round_index)

            calls = tuple(
                call if call.id else ToolCall(call.name, call.arguments, f"call_{round_index}_{i}")
                for i, call in enumerate(response.tool_calls)
            )
            messages.append(
                Message(role="assistant", content=response.content or "", tool_calls=calls)
            )
            transcript.tool_calls(response.content or "", calls)
            for call in calls:
                exec_response = self._dispatch(call, fn_set)
                messages.append(
                    Message(
                        role="tool",
                        content=exec_response.result,
                        tool_call_id=call.id,
                        name=call.name,
                    )
                )
                transcript.tool_result(call.name, exec_response.result, exec_response.ok)

        return AgentOutcome(
            False, None, transcript.messages, self.limits.max_rounds, error="round limit"
        )

    def _dispatch(self, call: ToolCall, fn_set: FunctionSet) -> ExecResponse:
        try:
            args = json.loads(call.arguments) if call.arguments else {}
        except ValueError as exc:
            return ExecResponse(ok=False, result=f"invalid tool arguments: {exc}")
        if not isinstance(args, dict):
            return ExecResponse(ok=False, result="tool arguments must be a JSON object")
        if call.name == PYTHON_TOOL:
            request = ExecRequest(
                kind="raw_code",
                code=str(args.get("code", "")),
                timeout_s=self.limits.tool_timeout_s,
            )
            return self.executor.run(request)
        spec = fn_set.get(call.name)
        if spec is None:
            return ExecResponse(ok=False, result=f"unknown tool {call.name!r}")
        request = ExecRequest(
            kind="function", function=spec, args=args, timeout_s=self.limits.tool_timeout_s
        )
        return self.executor.run(request)


class ReActAgent:
    """Template-driven loop alternating thought/action text with observations."""

    def __init__(self, backend: Any, executor: Any, limits: AgentLimits = AgentLimits(), model: str = ""):
        self.backend = backend
        self.executor = executor
        self.limits = limits
        self.model = model

    def solve(self, task: Task, fn_set: FunctionSet) -> AgentOutcome:
        names = [PYTHON_TOOL] + fn_set.names()
        descriptions = "\n".join(
            [f"{PYTHON_TOOL}: {PYTHON_TOOL_DESCRIPTION}"]
            + [f"{spec.name}: {spec.description}" for spec in fn_set.functions]
        )
        system = render_react_prompt(descriptions, names)
        messages: list[Message] = [
            Message(role="system", content=system),
            Message(role="user", content=f"Question: {question_text(task)}"),
        ]
        transcript = _Transcript()
        for message in messages:
            transcript.text(message.role, message.content)

        last_index = 0
        consecutive_failures = 0
        failure_reason = ""
        for round_index in range(1, self.limits.max_rounds + 1):
            response = self.backend.complete(
                ChatRequest(messages=tuple(messages), model=self.model)
            )
            text = response.content or ""
            messages.append(Message(role="assistant", content=text))
            transcript.text("assistant", text)

            try:
                step = parse_react(text, last_index)
            except (MalformedTranscript, MissingInput) as exc:
                consecutive_failures += 1
                failure_reason = "malformed transcript"
                if consecutive_failures > 1:
                    return AgentOutcome(
                        False, None, transcript.messages, round_index, error=failure_reason
                    )
                correction = (
                    f"Your reply could not be parsed: {exc}. Follow the "
                    "Thought/Action/Action Input template, or give a FINAL ANSWER."
                )
                messages.append(Message(role="user", content=correction))
                transcript.text("user", correction)
                continue

            if isinstance(step, ReactFinal):
                solved = check_answer(step.answer, task.answer, task.checker)
                return AgentOutcome(solved, step.answer, transcript.messages, round_index)

            if step.action not in names:
                consecutive_failures += 1
                failure_reason = f"unknown action: {step.action}"
                last_index = step.index
                if consecutive_failures > 1:
                    return AgentOutcome(
                        False, None, transcript.messages, round_index, error=failure_reason
                    )
                observation = (
                    f"Observation {step.index}: unknown action {step.action!r}. "
                    f"Valid actions: [{', '.join(names)}]."
                )
                messages.append(Message(role="user", content=observation))
                transcript.text("user", observation)
                continue

            consecutive_failures = 0
            exec_response = self._dispatch(step, fn_set)
            transcript.tool_result(step.action, exec_response.result, exec_response.ok)
            observation = f"Observation {step.index}: {exec_response.result}"
            messages.append(Message(role="user", content=observation))
            transcript.text("user", observation)
            last_index = step.index

        return AgentOutcome(
            False, None, transcript.messages, self.limits.max_rounds, error="round limit"
        )

    def _dispatch(self, step: ReactStep, fn_set: FunctionSet) -> ExecResponse:
        if step.action == PYTHON_TOOL:
            request = ExecRequest(
                kind="raw_code", code=step.action_input, timeout_s=self.limits.tool_timeout_s
            )
            return self.executor.run(request)
        spec = fn_set.get(step.action)
        assert spec is not None  # validated by the caller
        args = self._parse_args(spec, step.action_input)
        if args is None:
            return ExecResponse(
                ok=False,
                result=f"could not parse arguments for {step.action!r}; "
                "pass a JSON object of named arguments",
            )
        return self.executor.run(
            ExecRequest(
                kind="function", function=spec, args=args, timeout_s=self.limits.tool_timeout_s
            )
        )

    @staticmethod
    def _parse_args(spec: FunctionSpec, action_input: str) -> dict[str, Any] | None:
        try:
            parsed = json.loads(action_input)
            if isinstance(parsed, dict):
                return parsed
        except ValueError:
            pass
        # A single-parameter function accepts its input as the bare value.
        try:
            parameters = list(spec.parsed_arguments().keys())
        except ValueError:
            return None
        if len(parameters) == 1:
            return {parameters[0]: action_input.strip()}
        return None
