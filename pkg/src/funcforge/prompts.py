"""Deterministic rendering of optimizer and agent prompts.

Every renderer here is a pure function of its inputs: equal inputs produce
byte-identical text, which is what makes replay testing and golden-file
comparison possible.  The two prompt templates ship with the package as
plain-text files and are substituted in a single pass, so placeholder-like
text inside the substituted values is never re-expanded.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Mapping, Sequence

from .errors import MissingPlaceholder

OPTIMIZER_PLACEHOLDERS = (
    "current_function_signature",
    "success_rate",
    "actions_num",
    "updated_function_signature",
    "historical_fail_functions",
    "conversation_num",
    "history",
    "statistic",
)

REACT_PLACEHOLDERS = ("tool_descriptions", "tool_names")


@dataclass(frozen=True)
class PromptContext:
    """Values substituted into the optimizer prompt template.

    ``success_rate`` is preformatted percentage text (see
    :func:`format_percent`); ``conversation_num`` must equal the number of
    conversations serialized in ``history``.
    """

    current_function_signature: str
    success_rate: str
    actions_num: int
    updated_function_signature: str
    historical_fail_functions: str
    conversation_num: int
    history: str
    statistic: str


@dataclass(frozen=True)
class TruncationPolicy:
    """Limits applied to the serialized history before prompting."""

    max_total_chars: int = 120_000
    per_conversation_head: int = 2
    per_conversation_tail: int = 4
    elision_marker: str = "[... earlier messages elided ...]"


def format_percent(fraction: float) -> str:
    """Render a fraction as percentage text with one decimal: 0.6 -> ``60.0%``."""
    return f"{fraction * 100:.1f}%"


def _load_template(name: str) -> str:
    return (resources.files(__package__) / "templates" / name).read_text(encoding="utf-8")


def _substitute(template: str, values: Mapping[str, object], required: Sequence[str]) -> str:
    pattern = re.compile(r"\{(" + "|".join(re.escape(key) for key in required) + r")\}")
    found = set(pattern.findall(template))
    for key in required:
        if key not in found:
            raise MissingPlaceholder(f"template has no {{{key}}} placeholder")
    return pattern.sub(lambda match: str(values[match.group(1)]), template)


def render_optimizer_prompt(ctx: PromptContext) -> str:
    """Fill the optimizer prompt template with a complete context."""
    values = {key: getattr(ctx, key) for key in OPTIMIZER_PLACEHOLDERS}
    return _substitute(_load_template("optimizer_prompt.txt"), values, OPTIMIZER_PLACEHOLDERS)


def render_react_prompt(tool_descriptions: str, tool_names: Sequence[str]) -> str:
    """Fill the ReAct prompt template.

    ``tool_names`` are joined with ``", "``; the surrounding brackets are
    part of the template.
    """
    values = {
        "tool_descriptions": tool_descriptions,
        "tool_names": ", ".join(tool_names),
    }
    return _substitute(_load_template("react_prompt.txt"), values, REACT_PLACEHOLDERS)


def render_statistic(outcomes: Sequence[int], ids: Sequence[str]) -> str:
    """One ``<id>: <0|1>`` line per task, in task-id order."""
    return "\n".join(f"{task_id}: {outcome}" for task_id, outcome in zip(ids, outcomes))


def render_failure_ledger(entries: Iterable[tuple[str, float]]) -> str:
    """Render rejected (signatures, success-rate) pairs, worst first.

    Entries are sorted ascending by success rate; ties keep insertion
    order.  An empty ledger renders as ``[]``.
    """
    ordered = sorted(entries, key=lambda entry: entry[1])
    if not ordered:
        return "[]"
    blocks = [
        f"{signatures}\nThe success rate with the above function set is {format_percent(rate)}."
        for signatures, rate in ordered
    ]
    return "\n\n".join(blocks)


def render_conversation(messages: Sequence[Mapping[str, object]]) -> list[str]:
    """Serialize one transcript into ``ROLE: content`` lines.

    Tool invocations render as ``TOOL_CALL name(args)`` and their results
    as ``TOOL_RESULT ...``.
    """
    lines: list[str] = []
    for message in messages:
        role = str(message.get("role", ""))
        content = message.get("content") or ""
        if role == "tool":
            lines.append(f"TOOL_RESULT {content}")
            continue
        if content:
            lines.append(f"{role.upper()}: {content}")
        for call in message.get("tool_calls") or ():
            lines.append(f"TOOL_CALL {call['name']}({call['arguments']})")
    return lines


def truncate_history(
    conversations: Sequence[tuple[str, Sequence[str]]],
    policy: TruncationPolicy = TruncationPolicy(),
) -> str:
    """Render titled conversations under the policy's size limits.

    Each conversation keeps its head/tail messages with the elision marker
    between.  If the total still exceeds ``max_total_chars``, whole
    conversations are dropped from the middle of the list (never the first
    or last) and a summary line records how many were elided.
    """
    rendered: list[str] = []
    for title, lines in conversations:
        kept = list(lines)
        head, tail = policy.per_conversation_head, policy.per_conversation_tail
        if len(kept) > head + tail:
            kept = kept[:head] + [policy.elision_marker] + kept[len(kept) - tail :]
        rendered.append("\n".join([f"=== {title} ==="] + kept))

    def total(parts: list[str]) -> int:
        return sum(len(part) for part in parts) + 2 * max(len(parts) - 1, 0)

    dropped = 0
    while total(rendered) > policy.max_total_chars and len(rendered) > 2:
        rendered.pop(len(rendered) // 2)
        dropped += 1
    if dropped:
        rendered.insert(len(rendered) // 2, f"[{dropped} conversations elided]")
    text = "\n\n".join(rendered)
    if len(text) > policy.max_total_chars:
        cut = policy.max_total_chars - len(policy.elision_marker)
        text = text[: max(cut, 0)] + policy.elision_marker
    return text
