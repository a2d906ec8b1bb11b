import pytest
from hypothesis import given, settings, strategies as st

from gpumux.errors import InvalidSpec, ParseError
from gpumux.trace import (Alloc, AppSpec, Batch, BlockingSync, Free, Interactive, LaunchKernel,
                          LlmLike, RequestBegin, RequestEnd, Think, dump_traces, generate_trace,
                          parse_traces, validate_trace)
from gpumux.units import GiB, MiB, TierId


def test_interactive_pattern():
    spec = AppSpec("ui", GiB, Interactive(3.0, 5, 20.0))
    tr = generate_trace(spec, seed=0, horizon=10.0)
    assert tr[0] == Alloc(GiB)
    cycle = tr[1:10]
    assert cycle == [RequestBegin()] + [LaunchKernel(0.02)] * 5 + [BlockingSync(), RequestEnd(),
                                                                  Think(3.0)]
    assert tr[10:19] == cycle


def test_interactive_covers_horizon():
    spec = AppSpec("ui", GiB, Interactive(3.0, 5, 20.0))
    tr = generate_trace(spec, 0, 30.0)
    busy = sum(a.duration for a in tr if isinstance(a, LaunchKernel))
    idle = sum(a.gap for a in tr if isinstance(a, Think))
    assert busy + idle >= 30.0


def test_batch_has_no_think_gaps():
    tr = generate_trace(AppSpec("job", GiB, Batch(50.0, stream=10)), 0)
    assert not any(isinstance(a, Think) for a in tr)
    assert sum(isinstance(a, LaunchKernel) for a in tr) == 10
    assert sum(isinstance(a, BlockingSync) for a in tr) == 10


def test_batch_sync_every():
    tr = generate_trace(AppSpec("job", GiB, Batch(50.0, stream=10, sync_every=4)), 0)
    assert sum(isinstance(a, BlockingSync) for a in tr) == 3


def test_batch_unbounded_needs_horizon():
    with pytest.raises(InvalidSpec):
        generate_trace(AppSpec("job", GiB, Batch(50.0)), 0)
    tr = generate_trace(AppSpec("job", GiB, Batch(50.0)), 0, horizon=1.0)
    assert sum(isinstance(a, LaunchKernel) for a in tr) >= 20


def test_llm_prefill_then_tokens():
    tr = generate_trace(AppSpec("chat", GiB, LlmLike(50, 30, 3, 2.0)), 0, horizon=1.0)
    req = tr[1:tr.index(RequestEnd()) + 1]
    kernels = [a.duration for a in req if isinstance(a, LaunchKernel)]
    assert kernels == [0.05, 0.03, 0.03, 0.03]
    assert req[0] == RequestBegin()
    assert tr[tr.index(RequestEnd()) + 1] == Think(2.0)


def test_start_offset():
    tr = generate_trace(AppSpec("late", GiB, Batch(10.0, stream=1), start=5.0), 0)
    assert tr[:2] == [Alloc(GiB), Think(5.0)]


def test_same_seed_same_trace():
    spec = AppSpec("ui", GiB, Interactive(3.0, 5, 20.0, jitter=0.3))
    assert generate_trace(spec, 4, 60.0) == generate_trace(spec, 4, 60.0)
    assert generate_trace(spec, 4, 60.0) != generate_trace(spec, 5, 60.0)


def test_jitter_bounds():
    spec = AppSpec("ui", GiB, Interactive(3.0, 1, 1.0, jitter=0.2))
    gaps = [a.gap for a in generate_trace(spec, 1, 100.0) if isinstance(a, Think)]
    assert all(2.4 <= g <= 3.6 for g in gaps)
    assert len(set(gaps)) > 1


@pytest.mark.parametrize("gen", [
    Interactive(0, 5, 20.0), Interactive(3.0, 0, 20.0), Interactive(3.0, 5, -1.0),
    Interactive(3.0, 5, 20.0, jitter=1.0), Batch(0.0), Batch(5.0, stream=0),
    LlmLike(0, 30, 10, 1.0), LlmLike(50, 30, 0, 1.0), LlmLike(50, 30, 10, 0.0),
])
def test_invalid_generators(gen):
    with pytest.raises(InvalidSpec):
        generate_trace(AppSpec("x", GiB, gen), 0, 10.0)


def test_footprint_must_be_positive():
    with pytest.raises(InvalidSpec):
        generate_trace(AppSpec("x", 0, Batch(1.0, stream=1)), 0)


@pytest.mark.parametrize("actions", [
    [Free(0)],
    [Alloc(MiB), Free(0), Free(0)],
    [Alloc(MiB), LaunchKernel(0.1, (1,))],
    [RequestBegin(), RequestBegin()],
    [RequestEnd()],
    [Think(-1.0)],
    [Alloc(0)],
])
def test_validate_trace_rejects(actions):
    with pytest.raises(InvalidSpec):
        validate_trace(actions)


def test_explicit_trace_used_verbatim():
    acts = (Alloc(4 * MiB, TierId.PINNED), LaunchKernel(0.01, (0,)), BlockingSync(), Free(0))
    assert generate_trace(AppSpec("x", 4 * MiB, trace=acts), 0) == list(acts)


def test_trace_file_round_trip():
    traces = {
        "a": [Alloc(3 * GiB), Alloc(5 * MiB, TierId.PAGED), RequestBegin(), LaunchKernel(0.025),
              LaunchKernel(0.5, (0, 1)), BlockingSync(), RequestEnd(), Think(1.25), Free(1)],
        "b": generate_trace(AppSpec("b", GiB, LlmLike(40, 20, 4, 1.0, 0.1)), 3, 5.0),
    }
    text = dump_traces(traces)
    assert parse_traces(text) == traces
    assert dump_traces(parse_traces(text)) == text


def test_trace_file_comments_and_blank_lines():
    text = "# header\n\na alloc 2MiB   # first\na launch 0.1 all\n\na sync\n"
    assert parse_traces(text) == {"a": [Alloc(2 * MiB), LaunchKernel(0.1), BlockingSync()]}


@pytest.mark.parametrize("text,line,col", [
    ("a alloc 2MiB\na jump 3\n", 2, 3),
    ("a alloc lots\n", 1, 9),
    ("a think soon\n", 1, 9),
    ("a alloc 2MiB vram\n", 1, 14),
    ("a\n", 1, 1),
    ("a sync now\n", 1, 3),
])
def test_trace_parse_errors_carry_position(text, line, col):
    with pytest.raises(ParseError) as e:
        parse_traces(text)
    assert (e.value.line, e.value.column) == (line, col)


def test_trace_parse_validates():
    with pytest.raises(ParseError):
        parse_traces("a free 0\n")


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 5.0), st.integers(1, 8), st.floats(1.0, 100.0),
       st.floats(0.0, 0.9), st.integers(0, 1000))
def test_generated_interactive_traces_are_valid(interval, burst, kms, jitter, seed):
    tr = generate_trace(AppSpec("x", GiB, Interactive(interval, burst, kms, jitter)), seed, 10.0)
    validate_trace(tr)
    assert parse_traces(dump_traces({"x": tr})) == {"x": tr}
