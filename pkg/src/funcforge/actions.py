"""The optimizer's four actions: wire schemas, parsing, progressive update.

The three function-manipulation schemas below are wire content sent to the
backend; their structure and description strings are fixed and must not be
edited.  The fourth action is the literal reply ``TERMINATE``, which ends a
function-update step.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, replace
from typing import Any, ClassVar, Mapping, Union

from .backend import ChatRequest, ChatResponse, Message, ToolCall
from .errors import (
    ActionParseError,
    MissingField,
    ProtocolError,
    RegistryError,
    UnknownAction,
    UnparseableReply,
)
from .prompts import PromptContext, render_optimizer_prompt
from .registry import FunctionSet, FunctionSpec, apply_mutation, render_signatures

TERMINATE = "TERMINATE"

ADD_FUNC = {
    "type": "function",
    "function": {
        "name": "add_function",
        "description": "Add a function in the context of the conversation. Necessary Python packages must be declared. The name of the function MUST be the same with the function name in the code you generated.",
        "parameters": {
            "type": "object",
            "properties": {
                "name": {
                    "type": "string",
                    "description": "The name of the function in the code implementation.",
                },
                "description": {
                    "type": "string",
                    "description": "A short description of the function.",
                },
                "arguments": {
                    "type": "string",
                    "description": 'JSON schema of arguments encoded as a string. Please note that the JSON schema only supports specific types including string, integer, object, array, boolean. (do not have float type) For example: { "url": { "type": "string", "description": "The URL", }}. Please avoid the error \'array schema missing items\' when using array type.',
                },
                "packages": {
                    "type": "string",
                    "description": "A list of package names imported by the function, and that need to be installed with pip prior to invoking the function. This solves ModuleNotFoundError. It should be string, not list.",
                },
                "code": {
                    "type": "string",
                    "description": "The implementation in Python. Do not include the function declaration.",
                },
            },
            "required": ["name", "description", "arguments", "packages", "code"],
        },
    },
}

REVISE_FUNC = {
    "type": "function",
    "function": {
        "name": "revise_function",
        "description": "Revise a function in the context of the conversation. Necessary Python packages must be declared. The name of the function MUST be the same with the function name in the code you generated.",
        "parameters": {
            "type": "object",
            "properties": {
                "name": {
                    "type": "string",
                    "description": "The name of the function in the code implementation.",
                },
                "description": {
                    "type": "string",
                    "description": "A short description of the function.",
                },
                "arguments": {
                    "type": "string",
                    "description": 'JSON schema of arguments encoded as a string. Please note that the JSON schema only supports specific types including string, integer, object, array, boolean. (do not have float type) For example: { "url": { "type": "string", "description": "The URL", }}. Please avoid the error \'array schema missing items\' when using array type.',
                },
                "packages": {
                    "type": "string",
                    "description": "A list of package names imported by the function, and that need to be installed with pip prior to invoking the function. This solves ModuleNotFoundError. It should be string, not list.",
                },
                "code": {
                    "type": "string",
                    "description": "The implementation in Python. Do not include the function declaration.",
                },
            },
            "required": ["name", "description", "arguments", "packages", "code"],
        },
    },
}

REMOVE_FUNC = {
    "type": "function",
    "function": {
        "name": "remove_function",
        "description": "Remove one function in the context of the conversation. Once remove one function, the assistant will not use this function in future conversation.",
        "parameters": {
            "type": "object",
            "properties": {
                "name": {
                    "type": "string",
                    "description": "The name of the function in the code implementation.",
                }
            },
            "required": ["name"],
        },
    },
}

_SPEC_FIELDS = ("name", "description", "arguments", "packages", "code")


@dataclass(frozen=True)
class AddFunction:
    kind: ClassVar[str] = "add"
    spec: FunctionSpec

    def describe(self) -> str:
        return f"add_function({self.spec.name})"


@dataclass(frozen=True)
class ReviseFunction:
    kind: ClassVar[str] = "revise"
    spec: FunctionSpec

    def describe(self) -> str:
        return f"revise_function({self.spec.name})"


@dataclass(frozen=True)
class RemoveFunction:
    kind: ClassVar[str] = "remove"
    name: str

    def describe(self) -> str:
        return f"remove_function({self.name})"


@dataclass(frozen=True)
class Terminate:
    kind: ClassVar[str] = "terminate"

    def describe(self) -> str:
        return TERMINATE


OptimizerAction = Union[AddFunction, ReviseFunction, RemoveFunction, Terminate]


def tool_schemas() -> list[dict[str, Any]]:
    """The three function-manipulation schema documents, in add/revise/remove order."""
    return [copy.deepcopy(ADD_FUNC), copy.deepcopy(REVISE_FUNC), copy.deepcopy(REMOVE_FUNC)]


def parse_action(name: str, arguments: str | Mapping[str, Any]) -> OptimizerAction:
    """Map one tool call to an optimizer action.

    Raises :class:`UnknownAction` for names outside the four actions,
    :class:`MissingField` when a required argument is absent, and
    :class:`InvalidSpec` when a function payload violates its invariants.
    """
    if name == TERMINATE:
        return Terminate()
    if name not in ("add_function", "revise_function", "remove_function"):
        raise UnknownAction(
            f"unknown action {name!r}; choose add_function, revise_function, "
            f"remove_function, or reply {TERMINATE}"
        )
    if isinstance(arguments, str):
        try:
            arguments = json.loads(arguments)
        except ValueError as exc:
            raise ActionParseError(f"action arguments are not valid JSON: {exc}") from exc
    if not isinstance(arguments, Mapping):
        raise ActionParseError("action arguments must be a JSON object")

    if name == "remove_function":
        if "name" not in arguments:
            raise MissingField("remove_function requires the field 'name'")
        return RemoveFunction(name=str(arguments["name"]))

    missing = [field for field in _SPEC_FIELDS if field not in arguments]
    if missing:
        raise MissingField(f"{name} requires the field(s): {', '.join(missing)}")
    spec = FunctionSpec(**{field: str(arguments[field]) for field in _SPEC_FIELDS})
    spec.validate()
    return AddFunction(spec) if name == "add_function" else ReviseFunction(spec)


def parse_reply(response: ChatResponse) -> OptimizerAction:
    """Interpret a full optimizer reply.

    A plain-text reply equal (after trimming) to ``TERMINATE`` terminates;
    otherwise the first tool call is parsed.  Replies with neither raise
    :class:`UnparseableReply`, the trigger for the one-shot reprompt.
    """
    if response.tool_calls:
        call = response.tool_calls[0]
        return parse_action(call.name, call.arguments)
    if response.content is not None and response.content.strip() == TERMINATE:
        return Terminate()
    raise UnparseableReply(
        "expected one function-manipulation tool call or the text TERMINATE"
    )


@dataclass(frozen=True)
class ActionAttempt:
    """One consumed slot of the action budget."""

    action: OptimizerAction | None  # None when the reply failed to parse
    ok: bool
    message: str

    def to_doc(self) -> dict[str, Any]:
        return {
            "action": self.action.describe() if self.action else None,
            "ok": self.ok,
            "message": self.message,
        }


@dataclass
class StepTranscript:
    """Record of one progressive-update step."""

    actions_taken: list[ActionAttempt]
    terminated_by: str  # "TERMINATE" | "budget_exhausted"
    start_set_version: int
    end_set_version: int

    def to_json(self) -> str:
        doc = {
            "actions_taken": [attempt.to_doc() for attempt in self.actions_taken],
            "terminated_by": self.terminated_by,
            "start_set_version": self.start_set_version,
            "end_set_version": self.end_set_version,
        }
        return json.dumps(doc, sort_keys=True, ensure_ascii=False)


def _echo_message(response: ChatResponse, round_index: int) -> tuple[Message, tuple[ToolCall, ...]]:
    """Re-encode a model reply as the assistant message for the next round.

    Tool calls without ids get deterministic synthetic ones so the paired
    tool-result messages can reference them.
    """
    calls = tuple(
        call if call.id else ToolCall(call.name, call.arguments, f"call_{round_index}_{i}")
        for i, call in enumerate(response.tool_calls or ())
    )
    return (
        Message(
            role="assistant",
            content=response.content or "",
            tool_calls=calls or None,
        ),
        calls,
    )


def progressive_update(
    start_set: FunctionSet,
    context: PromptContext,
    backend: Any,
    max_num: int,
    model: str = "",
    temperature: float = 0.0,
) -> tuple[FunctionSet, StepTranscript]:
    """Run one bounded function-update step against the optimizer backend.

    Each round re-renders the prompt with the current working signatures
    (List B) and the number of actions taken so far, queries the backend,
    and applies the parsed action.  Failed mutations consume an action slot
    and their error text is fed back as the tool result.  An unparseable
    reply triggers exactly one reprompt per round before
    :class:`ProtocolError` is raised.  The start set is never modified.
    """
    if max_num < 1:
        raise ValueError("max_num must be >= 1")
    working = start_set
    attempts: list[ActionAttempt] = []
    exchange: list[Message] = []
    terminated_by = "budget_exhausted"

    t = 0
    reprompted = False
    while t < max_num:
        ctx = replace(
            context,
            actions_num=t,
            updated_function_signature=render_signatures(working),
        )
        messages = (Message(role="user", content=render_optimizer_prompt(ctx)), *exchange)
        request = ChatRequest(
            messages=messages,
            model=model,
            temperature=temperature,
            tools=tuple(tool_schemas()),
        )
        response = backend.complete(request)
        echo, calls = _echo_message(response, t)

        try:
            action = parse_reply(response)
        except UnparseableReply as exc:
            if reprompted:
                raise ProtocolError(f"optimizer reply unparseable after reprompt: {exc}") from exc
            reprompted = True
            exchange.extend(
                [
                    echo,
                    Message(
                        role="user",
                        content=f"Could not parse the previous reply: {exc}. "
                        f"Reply with exactly one tool call, or the text {TERMINATE}.",
                    ),
                ]
            )
            continue
        except (ActionParseError, RegistryError) as exc:
            action, ok, message = None, False, str(exc)
        else:
            if isinstance(action, Terminate):
                terminated_by = TERMINATE
                break
            try:
                working = apply_mutation(working, action)
            except RegistryError as exc:
                ok, message = False, str(exc)
            else:
                ok, message = True, f"{action.describe()} succeeded"

        reprompted = False
        attempts.append(ActionAttempt(action=action, ok=ok, message=message))
        exchange.append(echo)
        if calls:
            exchange.append(
                Message(role="tool", content=message, tool_call_id=calls[0].id, name=calls[0].name)
            )
            for extra in calls[1:]:
                exchange.append(
                    Message(
                        role="tool",
                        content="Ignored: take one action at a time.",
                        tool_call_id=extra.id,
                        name=extra.name,
                    )
                )
        else:
            exchange.append(Message(role="user", content=message))
        t += 1

    transcript = StepTranscript(
        actions_taken=attempts,
        terminated_by=terminated_by,
        start_set_version=start_set.version,
        end_set_version=working.version,
    )
    return working, transcript
