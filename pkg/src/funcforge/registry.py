"""The learnable function set: specs, versioned sets, snapshots, serialization.

A set of callable tools is the agent's trainable state.  Sets are immutable
values; every committed mutation produces a new set with the version
advanced, which makes snapshot/rollback trivial and safe to share across
concurrent evaluation workers.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any

from .errors import DuplicateName, FunctionSetParseError, InvalidSpec, UnknownName

if TYPE_CHECKING:
    from .actions import AddFunction, RemoveFunction, ReviseFunction

_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_ALLOWED_ARG_TYPES = {"string", "integer", "object", "array", "boolean"}

#: Canonical field order for the five-element function signature.
FIELD_ORDER = ("name", "description", "arguments", "packages", "code")


@dataclass(frozen=True)
class FunctionSpec:
    """One learnable function: the five-element signature.

    ``arguments`` is a JSON schema of the parameters encoded *as a string*
    (object mapping parameter name to ``{"type": ..., "description": ...}``);
    ``packages`` is a comma- or space-separated package-name string; ``code``
    is the source text in the executor's script language.
    """

    name: str
    description: str
    arguments: str
    packages: str
    code: str

    def validate(self) -> None:
        """Raise :class:`InvalidSpec` when any invariant is violated."""
        if not self.name or not _NAME_RE.match(self.name):
            raise InvalidSpec(
                f"invalid function name {self.name!r}: must match [A-Za-z_][A-Za-z0-9_]*"
            )
        try:
            doc = json.loads(self.arguments)
        except (TypeError, ValueError) as exc:
            raise InvalidSpec(
                f"arguments of {self.name!r} is not a valid JSON document: {exc}"
            ) from exc
        if not isinstance(doc, dict):
            raise InvalidSpec(f"arguments of {self.name!r} must be a JSON object")
        _check_arg_types(self.name, doc)
        # Lightweight textual check only; the executor performs the
        # authoritative parse of the code.
        if not re.search(r"\bdef\s+" + re.escape(self.name) + r"\b", self.code):
            raise InvalidSpec(
                f"code does not define a function named {self.name!r} "
                "(the declared name must follow a function-definition keyword)"
            )

    def parsed_arguments(self) -> dict[str, Any]:
        """The argument schema decoded from its string encoding."""
        return json.loads(self.arguments)

    def to_doc(self) -> dict[str, str]:
        """The five fields in canonical order."""
        return {field: getattr(self, field) for field in FIELD_ORDER}


def _check_arg_types(owner: str, node: Any) -> None:
    if isinstance(node, dict):
        type_value = node.get("type")
        if type_value is not None and not (
            isinstance(type_value, str) and type_value in _ALLOWED_ARG_TYPES
        ):
            raise InvalidSpec(
                f"arguments of {owner!r} uses unsupported type {type_value!r}; "
                "only string, integer, object, array, boolean are allowed"
            )
        for value in node.values():
            _check_arg_types(owner, value)
    elif isinstance(node, list):
        for value in node:
            _check_arg_types(owner, value)


@dataclass(frozen=True)
class FunctionSet:
    """Ordered, versioned collection of unique-named function specs."""

    functions: tuple[FunctionSpec, ...] = ()
    version: int = 0
    parent_version: int | None = None

    def names(self) -> list[str]:
        return [spec.name for spec in self.functions]

    def get(self, name: str) -> FunctionSpec | None:
        for spec in self.functions:
            if spec.name == name:
                return spec
        return None

    def __contains__(self, name: str) -> bool:
        return self.get(name) is not None

    def __len__(self) -> int:
        return len(self.functions)


@dataclass(frozen=True)
class Snapshot:
    """A frozen copy of a set at one version, for later rollback."""

    version: int
    functions: tuple[FunctionSpec, ...]
    label: str = ""


def apply_mutation(
    fn_set: FunctionSet, action: "AddFunction | ReviseFunction | RemoveFunction"
) -> FunctionSet:
    """Apply one optimizer action, returning a new set with version advanced.

    The input set is never modified.  Raises :class:`DuplicateName`,
    :class:`UnknownName`, or :class:`InvalidSpec`; the messages are meant
    to be fed back to the optimizer LLM verbatim.
    """
    kind = action.kind
    if kind == "add":
        spec = action.spec
        spec.validate()
        if spec.name in fn_set:
            raise DuplicateName(
                f"a function named {spec.name!r} already exists; "
                "use revise_function to change it"
            )
        functions = fn_set.functions + (spec,)
    elif kind == "revise":
        spec = action.spec
        spec.validate()
        if spec.name not in fn_set:
            raise UnknownName(
                f"no function named {spec.name!r} exists; use add_function to create it"
            )
        functions = tuple(
            spec if existing.name == spec.name else existing
            for existing in fn_set.functions
        )
    elif kind == "remove":
        if action.name not in fn_set:
            raise UnknownName(f"no function named {action.name!r} exists")
        functions = tuple(
            existing for existing in fn_set.functions if existing.name != action.name
        )
    else:
        raise ValueError(f"action kind {kind!r} is not a mutation")
    return FunctionSet(
        functions=functions,
        version=fn_set.version + 1,
        parent_version=fn_set.version,
    )


def render_signatures(fn_set: FunctionSet) -> str:
    """Deterministic canonical rendering of all signatures for prompts.

    A bracketed list of per-function blocks with the five elements in
    canonical order, entries in insertion order.  The empty set renders as
    the two-character text ``[]``.
    """
    blocks = []
    for spec in fn_set.functions:
        doc: dict[str, Any] = spec.to_doc()
        try:
            doc["arguments"] = spec.parsed_arguments()
        except ValueError:
            pass  # leave unparseable schemas as the raw string
        blocks.append(doc)
    return json.dumps(blocks, indent=4, ensure_ascii=False)


def snapshot(fn_set: FunctionSet, label: str = "") -> Snapshot:
    """Capture the set for later restoration."""
    return Snapshot(version=fn_set.version, functions=fn_set.functions, label=label)


def restore(snap: Snapshot) -> FunctionSet:
    """Rebuild the set captured by ``snap``; canonically equal to the original."""
    return FunctionSet(functions=snap.functions, version=snap.version)


def to_canonical(fn_set: FunctionSet) -> dict[str, Any]:
    """The on-disk document: version plus the five-field function list."""
    return {
        "version": fn_set.version,
        "functions": [spec.to_doc() for spec in fn_set.functions],
    }


def canonical_json(fn_set: FunctionSet) -> str:
    """Stable serialization used for equality checks and files."""
    return json.dumps(to_canonical(fn_set), indent=2, ensure_ascii=False) + "\n"


def canonically_equal(a: FunctionSet, b: FunctionSet) -> bool:
    return canonical_json(a) == canonical_json(b)


def save(fn_set: FunctionSet, path: str) -> None:
    """Write the canonical serialization to ``path`` (UTF-8)."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(canonical_json(fn_set))


def load(path: str) -> FunctionSet:
    """Read a function-set file; raises :class:`FunctionSetParseError` when malformed."""
    with open(path, "r", encoding="utf-8") as handle:
        text = handle.read()
    try:
        doc = json.loads(text)
    except ValueError as exc:
        raise FunctionSetParseError(f"{path}: not a valid function-set file: {exc}") from exc
    if not isinstance(doc, dict) or "functions" not in doc:
        raise FunctionSetParseError(f"{path}: missing 'functions' field")
    version = doc.get("version", 0)
    if not isinstance(version, int):
        raise FunctionSetParseError(f"{path}: 'version' must be an integer")
    specs: list[FunctionSpec] = []
    seen: set[str] = set()
    for entry in doc["functions"]:
        if not isinstance(entry, dict):
            raise FunctionSetParseError(f"{path}: function entries must be objects")
        try:
            spec = FunctionSpec(**{field: entry[field] for field in FIELD_ORDER})
        except KeyError as exc:
            raise FunctionSetParseError(f"{path}: function entry missing field {exc}") from exc
        try:
            spec.validate()
        except InvalidSpec as exc:
            raise FunctionSetParseError(f"{path}: {exc}") from exc
        if spec.name in seen:
            raise FunctionSetParseError(f"{path}: duplicate function name {spec.name!r}")
        seen.add(spec.name)
        specs.append(spec)
    return FunctionSet(functions=tuple(specs), version=version)
