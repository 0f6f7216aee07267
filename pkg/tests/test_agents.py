import json

import pytest
from hypothesis import given, settings, strategies as st

from funcforge import (
    AddFunction,
    AgentLimits,
    FunctionSet,
    ReActAgent,
    StubExecutor,
    Task,
    ToolCallAgent,
    apply_mutation,
    check_answer,
    parse_react,
    text_response,
    tool_call_response,
)
from funcforge.agents import ReactFinal, ReactStep, render_react_step
from funcforge.errors import MalformedTranscript, MissingInput

from conftest import make_spec, seq_backend


# --- check_answer ------------------------------------------------------------


@pytest.mark.parametrize(
    "prediction,truth,checker,expected",
    [
        ("1,234", "1234", "numeric", True),
        ("$5", "5", "numeric", True),
        ("a, B ,c", "a,b,c", "normalized_list", True),
        ("42", "42", "exact", True),
        (" 42 ", "42", "exact", True),
        ("42", "43", "exact", False),
        ("72 degrees", "72", "numeric", True),
        ("The answer is 42.", "42", "numeric", True),
        ("12%", "12", "numeric", True),
        ("no numbers here", "5", "numeric", False),
        ("a,b", "a,b,c", "normalized_list", False),
        ("1, 2.0", "1,2", "normalized_list", True),
        (None, "x", "exact", False),
    ],
)
def test_check_answer_cases(prediction, truth, checker, expected):
    assert check_answer(prediction, truth, checker) is expected


def test_check_answer_unknown_checker():
    with pytest.raises(ValueError):
        check_answer("x", "x", "fuzzy")


@given(st.text(min_size=1).filter(lambda s: s.strip()))
def test_exact_reflexive(text):
    assert check_answer(text, text, "exact")


@given(st.floats(allow_nan=False, allow_infinity=False, width=32))
def test_numeric_reflexive(value):
    assert check_answer(str(value), str(value), "numeric")


@given(st.lists(st.sampled_from(["apple", "7", "big sur", "3.5"]), min_size=1, max_size=5))
def test_normalized_list_reflexive(items):
    text = ",".join(items)
    assert check_answer(text, text, "normalized_list")


# --- parse_react --------------------------------------------------------------


def test_parse_step_direct():
    step = parse_react("Thought: compute\nAction 1: python\nAction 1 Input: print(1)")
    assert step == ReactStep(thought="compute", action="python", action_input="print(1)", index=1)


def test_parse_final():
    assert parse_react("FINAL ANSWER: Paris") == ReactFinal(answer="Paris")


def test_final_wins_over_step():
    text = "Thought: done\nAction 2: python\nAction 2 Input: x\nFINAL ANSWER: 42"
    assert parse_react(text, last_index=1) == ReactFinal(answer="42")


def test_missing_input():
    with pytest.raises(MissingInput):
        parse_react("Action 2: calc", last_index=1)


def test_no_labels():
    with pytest.raises(MalformedTranscript):
        parse_react("I am just chatting about the weather.")


def test_non_increasing_index():
    with pytest.raises(MalformedTranscript):
        parse_react("Action 1: python\nAction 1 Input: x", last_index=1)


def test_multiline_input():
    text = "Thought: t\nAction 3: python\nAction 3 Input: line1\nline2\nline3"
    step = parse_react(text, last_index=2)
    assert step.action_input == "line1\nline2\nline3"


def test_input_stops_at_next_label():
    text = "Action 1: python\nAction 1 Input: body\nObservation 1: should not be input"
    step = parse_react(text)
    assert step.action_input == "body"


label_free_text = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",), blacklist_characters="\n"),
    min_size=1,
    max_size=40,
).filter(lambda s: s.strip() and not s.startswith(("Action", "Thought", "FINAL", "Observation")))


@settings(max_examples=300, deadline=None)
@given(
    thought=label_free_text,
    action=st.sampled_from(["python", "evaluate_expression", "search"]),
    action_input=label_free_text,
    index=st.integers(min_value=1, max_value=50),
)
def test_step_round_trip(thought, action, action_input, index):
    step = ReactStep(
        thought=thought.strip(), action=action, action_input=action_input.strip(), index=index
    )
    assert parse_react(render_react_step(step), last_index=index - 1) == step


@settings(max_examples=100, deadline=None)
@given(answer=label_free_text)
def test_final_round_trip(answer):
    final = ReactFinal(answer=answer.strip())
    assert parse_react(render_react_step(final)) == final


# --- toolcall agent ------------------------------------------------------------


def task(answer="42", checker="numeric"):
    return Task(id="t0", question="what is the answer?", answer=answer, checker=checker)


def test_toolcall_direct_answer():
    agent = ToolCallAgent(seq_backend([text_response("42")]), StubExecutor())
    outcome = agent.solve(task(), FunctionSet())
    assert outcome.solved
    assert outcome.final_answer == "42"
    assert outcome.rounds_used == 1
    assert not [m for m in outcome.transcript if m["role"] == "tool"]


def test_toolcall_uses_registry_function(exemplar_spec):
    fn_set = apply_mutation(FunctionSet(), AddFunction(exemplar_spec))
    stub = StubExecutor()
    stub.add_function_result("evaluate_expression", {"expression": "2+2"}, "4.0")
    backend = seq_backend(
        [
            tool_call_response("evaluate_expression", {"expression": "2+2"}),
            text_response("4.0"),
        ]
    )
    agent = ToolCallAgent(backend, stub)
    outcome = agent.solve(task(answer="4"), fn_set)
    assert outcome.solved
    tool_messages = [m for m in outcome.transcript if m["role"] == "tool"]
    assert tool_messages == [
        {"role": "tool", "name": "evaluate_expression", "content": "4.0", "ok": True}
    ]


def test_toolcall_python_tool_dispatch():
    stub = StubExecutor()
    stub.add_code_result("print(6*7)", "42")
    backend = seq_backend(
        [tool_call_response("python", {"code": "print(6*7)"}), text_response("42")]
    )
    agent = ToolCallAgent(backend, stub)
    outcome = agent.solve(task(), FunctionSet())
    assert outcome.solved
    assert outcome.transcript[-2]["name"] == "python"


def test_toolcall_round_limit():
    backend = seq_backend([tool_call_response("python", {"code": "x"})])
    agent = ToolCallAgent(backend, StubExecutor(), limits=AgentLimits(max_rounds=1))
    outcome = agent.solve(task(), FunctionSet())
    assert not outcome.solved
    assert outcome.rounds_used == 1
    assert outcome.error == "round limit"


def test_toolcall_unknown_tool_reported():
    backend = seq_backend(
        [tool_call_response("missing_tool", {}), text_response("give up")]
    )
    agent = ToolCallAgent(backend, StubExecutor())
    outcome = agent.solve(task(), FunctionSet())
    tool_messages = [m for m in outcome.transcript if m["role"] == "tool"]
    assert not tool_messages[0]["ok"]
    assert "unknown tool" in tool_messages[0]["content"]


def test_toolcall_advertises_registry_schema(exemplar_spec):
    fn_set = apply_mutation(FunctionSet(), AddFunction(exemplar_spec))
    captured = []

    class Spy:
        def complete(self, request):
            captured.append(request)
            return text_response("42")

    ToolCallAgent(Spy(), StubExecutor()).solve(task(), fn_set)
    names = [t["function"]["name"] for t in captured[0].tools]
    assert names == ["python", "evaluate_expression"]
    exemplar_tool = captured[0].tools[1]["function"]
    assert exemplar_tool["parameters"]["properties"] == exemplar_spec.parsed_arguments()
    assert exemplar_tool["parameters"]["required"] == ["expression"]


# --- react agent ----------------------------------------------------------------


def test_react_immediate_final():
    backend = seq_backend([text_response("Thought: easy\nFINAL ANSWER: 42")])
    agent = ReActAgent(backend, StubExecutor())
    outcome = agent.solve(task(), FunctionSet())
    assert outcome.solved
    assert outcome.final_answer == "42"


def test_react_python_step_then_final():
    stub = StubExecutor()
    stub.add_code_result("print(2+2)", "4")
    backend = seq_backend(
        [
            text_response("Thought: compute\nAction 1: python\nAction 1 Input: print(2+2)"),
            text_response("Thought: I now know the final answer\nFINAL ANSWER: 4"),
        ]
    )
    agent = ReActAgent(backend, stub)
    outcome = agent.solve(task(answer="4"), FunctionSet())
    assert outcome.solved
    observations = [m for m in outcome.transcript if m["content"].startswith("Observation")]
    assert observations == [{"role": "user", "content": "Observation 1: 4"}]


def test_react_unknown_action_retry_then_failure():
    backend = seq_backend(
        [
            text_response("Action 1: teleport\nAction 1 Input: x"),
            text_response("Action 2: teleport\nAction 2 Input: x"),
        ]
    )
    agent = ReActAgent(backend, StubExecutor())
    outcome = agent.solve(task(), FunctionSet())
    assert not outcome.solved
    assert "unknown action" in outcome.error
    corrective = [m for m in outcome.transcript if "unknown action" in m.get("content", "")]
    assert len(corrective) == 1  # one corrective observation before giving up


def test_react_persistent_parse_failure():
    backend = seq_backend([text_response("gibberish"), text_response("more gibberish")])
    agent = ReActAgent(backend, StubExecutor())
    outcome = agent.solve(task(), FunctionSet())
    assert not outcome.solved
    assert outcome.error == "malformed transcript"


def test_react_recovers_after_one_parse_failure():
    backend = seq_backend(
        [text_response("gibberish"), text_response("FINAL ANSWER: 42")]
    )
    agent = ReActAgent(backend, StubExecutor())
    outcome = agent.solve(task(), FunctionSet())
    assert outcome.solved


def test_react_registry_function_single_param(exemplar_spec):
    fn_set = apply_mutation(FunctionSet(), AddFunction(exemplar_spec))
    stub = StubExecutor()
    stub.add_function_result("evaluate_expression", {"expression": "2+2"}, "4.0")
    backend = seq_backend(
        [
            text_response(
                "Thought: use tool\nAction 1: evaluate_expression\nAction 1 Input: 2+2"
            ),
            text_response("FINAL ANSWER: 4"),
        ]
    )
    agent = ReActAgent(backend, stub)
    outcome = agent.solve(task(answer="4"), fn_set)
    assert outcome.solved


def test_react_round_limit():
    backend = seq_backend(
        [text_response(f"Action {i}: python\nAction {i} Input: x") for i in range(1, 3)]
    )
    agent = ReActAgent(backend, StubExecutor(), limits=AgentLimits(max_rounds=2))
    outcome = agent.solve(task(), FunctionSet())
    assert not outcome.solved
    assert outcome.error == "round limit"


def test_agents_agree_on_direct_answer_scripts():
    for reply, expected in [("FINAL ANSWER: 42", True), ("FINAL ANSWER: 7", False)]:
        toolcall = ToolCallAgent(seq_backend([text_response(reply)]), StubExecutor())
        react = ReActAgent(seq_backend([text_response(reply)]), StubExecutor())
        a = toolcall.solve(task(), FunctionSet())
        b = react.solve(task(), FunctionSet())
        assert a.solved == b.solved == expected
