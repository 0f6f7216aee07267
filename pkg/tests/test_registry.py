import json

import pytest
from hypothesis import given, strategies as st

from funcforge import (
    AddFunction,
    FunctionSet,
    RemoveFunction,
    ReviseFunction,
    apply_mutation,
    canonical_json,
    canonically_equal,
    load,
    render_signatures,
    restore,
    save,
    snapshot,
)
from funcforge.errors import DuplicateName, FunctionSetParseError, InvalidSpec, UnknownName

from conftest import make_spec


def test_add_exemplar_to_empty(exemplar_spec):
    result = apply_mutation(FunctionSet(), AddFunction(exemplar_spec))
    assert len(result) == 1
    assert result.get("evaluate_expression") == exemplar_spec
    assert result.version == 1


def test_remove_from_empty_is_unknown():
    with pytest.raises(UnknownName):
        apply_mutation(FunctionSet(), RemoveFunction("foo"))


def test_add_then_revise_replaces_code():
    base = apply_mutation(FunctionSet(), AddFunction(make_spec("f")))
    revised_spec = make_spec("f", code="def f(x):\n    return x * 2")
    revised = apply_mutation(base, ReviseFunction(revised_spec))
    assert len(revised) == 1
    assert revised.get("f").code == "def f(x):\n    return x * 2"
    assert revised.version == 2


def test_add_duplicate_rejected():
    base = apply_mutation(FunctionSet(), AddFunction(make_spec("f")))
    with pytest.raises(DuplicateName):
        apply_mutation(base, AddFunction(make_spec("f")))


def test_revise_missing_rejected():
    with pytest.raises(UnknownName):
        apply_mutation(FunctionSet(), ReviseFunction(make_spec("ghost")))


def test_mutation_never_modifies_input():
    base = apply_mutation(FunctionSet(), AddFunction(make_spec("f")))
    apply_mutation(base, RemoveFunction("f"))
    assert base.names() == ["f"]


def test_revise_preserves_order():
    fn_set = FunctionSet()
    for name in ("a", "b", "c"):
        fn_set = apply_mutation(fn_set, AddFunction(make_spec(name)))
    fn_set = apply_mutation(fn_set, ReviseFunction(make_spec("b", code="def b(x):\n    return 1")))
    assert fn_set.names() == ["a", "b", "c"]


@pytest.mark.parametrize(
    "field,value",
    [
        ("name", "9bad"),
        ("name", ""),
        ("arguments", "not json"),
        ("arguments", '["list"]'),
        ("arguments", '{"x": {"type": "float"}}'),
        ("code", "def other(x):\n    return x"),
    ],
)
def test_invalid_specs_rejected(field, value):
    spec = make_spec("f")
    spec = type(spec)(**{**spec.to_doc(), field: value})
    with pytest.raises(InvalidSpec):
        apply_mutation(FunctionSet(), AddFunction(spec))


def test_render_empty_is_bracket_pair():
    assert render_signatures(FunctionSet()) == "[]"


def test_render_exemplar_block(exemplar_spec):
    fn_set = apply_mutation(FunctionSet(), AddFunction(exemplar_spec))
    rendered = render_signatures(fn_set)
    name_lines = [line for line in rendered.splitlines() if '"name"' in line]
    assert name_lines == ['        "name": "evaluate_expression",']
    # arguments are embedded as the parsed object, like the signature examples
    assert '"expression"' in rendered


def test_render_deterministic(exemplar_spec):
    fn_set = apply_mutation(FunctionSet(), AddFunction(exemplar_spec))
    assert render_signatures(fn_set) == render_signatures(fn_set)


def test_snapshot_restore_empty():
    fn_set = FunctionSet()
    assert canonically_equal(restore(snapshot(fn_set)), fn_set)


def test_snapshot_rollback_identity():
    fn_set = FunctionSet()
    for name in ("f1", "f2"):
        fn_set = apply_mutation(fn_set, AddFunction(make_spec(name)))
    snap = snapshot(fn_set, label="before-remove")
    mutated = apply_mutation(fn_set, RemoveFunction("f1"))
    assert mutated.names() == ["f2"]
    restored = restore(snap)
    assert restored.names() == ["f1", "f2"]
    assert canonically_equal(restored, fn_set)


def test_restore_idempotent():
    fn_set = apply_mutation(FunctionSet(), AddFunction(make_spec("f")))
    snap = snapshot(fn_set)
    assert canonical_json(restore(snap)) == canonical_json(restore(snap))


def test_save_load_round_trip_empty(tmp_path):
    path = str(tmp_path / "empty.json")
    save(FunctionSet(), path)
    assert canonically_equal(load(path), FunctionSet())


def test_save_load_round_trip_exemplar(tmp_path, exemplar_spec):
    fn_set = apply_mutation(FunctionSet(), AddFunction(exemplar_spec))
    path = str(tmp_path / "set.json")
    save(fn_set, path)
    assert canonically_equal(load(path), fn_set)


def test_load_truncated_file(tmp_path, exemplar_spec):
    fn_set = apply_mutation(FunctionSet(), AddFunction(exemplar_spec))
    path = str(tmp_path / "set.json")
    save(fn_set, path)
    text = (tmp_path / "set.json").read_text()
    (tmp_path / "set.json").write_text(text[: len(text) // 2])
    with pytest.raises(FunctionSetParseError):
        load(path)


def test_file_key_order(tmp_path, exemplar_spec):
    fn_set = apply_mutation(FunctionSet(), AddFunction(exemplar_spec))
    path = str(tmp_path / "set.json")
    save(fn_set, path)
    doc = json.loads((tmp_path / "set.json").read_text())
    assert list(doc["functions"][0].keys()) == [
        "name",
        "description",
        "arguments",
        "packages",
        "code",
    ]


def test_add_remove_restores_canonical_equality(exemplar_spec):
    base = apply_mutation(FunctionSet(), AddFunction(make_spec("keep")))
    added = apply_mutation(base, AddFunction(exemplar_spec))
    removed = apply_mutation(added, RemoveFunction(exemplar_spec.name))
    assert removed.names() == base.names()
    assert [s.code for s in removed.functions] == [s.code for s in base.functions]


names_st = st.sampled_from(["alpha", "beta", "gamma", "delta"])
actions_st = st.lists(
    st.tuples(st.sampled_from(["add", "revise", "remove"]), names_st), max_size=30
)


@given(actions_st)
def test_uniqueness_holds_under_random_mutations(script):
    fn_set = FunctionSet()
    for kind, name in script:
        if kind == "add":
            action = AddFunction(make_spec(name))
        elif kind == "revise":
            action = ReviseFunction(make_spec(name, code=f"def {name}(x):\n    return 2"))
        else:
            action = RemoveFunction(name)
        try:
            fn_set = apply_mutation(fn_set, action)
        except (DuplicateName, UnknownName):
            continue
        assert len(set(fn_set.names())) == len(fn_set.names())


@given(st.lists(names_st, unique=True), st.lists(names_st, unique=True))
def test_render_injective_for_distinct_name_sets(names_a, names_b):
    def build(names):
        fn_set = FunctionSet()
        for name in names:
            fn_set = apply_mutation(fn_set, AddFunction(make_spec(name)))
        return fn_set

    rendered_a = render_signatures(build(names_a))
    rendered_b = render_signatures(build(names_b))
    if sorted(names_a) != sorted(names_b):
        assert rendered_a != rendered_b
