import numpy as np
import pytest

from forge.corpus_io import Document
from forge.needle import (
    NeedleCase,
    NeedleSpec,
    aggregate_heatmap,
    answer_recall,
    build_haystack,
    default_depths,
    default_lengths,
    generate_grid,
    grid_from_triples,
    insert_needle,
    read_cases,
    score_response,
    write_cases,
)
from forge.tokenizers import ByteTokenizer

from conftest import lorem_text


def filler_docs(n=5, chars=400, seed=2):
    rng = np.random.default_rng(seed)
    return [Document(id=f"f{i}", domain="essay", text=lorem_text(rng, chars)) for i in range(n)]


def test_build_haystack_cycles_and_truncates():
    tok = ByteTokenizer()
    doc = Document(id="f", domain="essay", text="x" * 100)
    haystack = build_haystack([doc], target_len=1000, tokenizer=tok, reserve=50)
    assert len(haystack) == 950


def test_build_haystack_minimal():
    tok = ByteTokenizer()
    doc = Document(id="f", domain="essay", text="abc")
    assert len(build_haystack([doc], target_len=51, tokenizer=tok, reserve=50)) == 1


def test_build_haystack_deterministic():
    tok = ByteTokenizer()
    docs = filler_docs()
    a = build_haystack(docs, 500, tok, reserve=10)
    b = build_haystack(docs, 500, tok, reserve=10)
    assert a == b


def test_build_haystack_validation():
    tok = ByteTokenizer()
    with pytest.raises(ValueError):
        build_haystack([], 100, tok)
    with pytest.raises(ValueError):
        build_haystack(filler_docs(), 50, tok, reserve=50)


def test_insert_needle_depths():
    haystack = list(range(1000))
    needle = [-1, -2, -3]
    at_start, i0 = insert_needle(haystack, needle, 0.0)
    assert i0 == 0 and at_start[:3] == needle
    at_end, i1 = insert_needle(haystack, needle, 1.0)
    assert i1 == 1000 and at_end[-3:] == needle
    mid, i5 = insert_needle(haystack, needle, 0.5)
    assert i5 == 500
    assert mid[500:503] == needle
    assert len(mid) == 1003


def test_insert_needle_displaces_not_overwrites():
    haystack = [1, 2, 3, 4]
    out, idx = insert_needle(haystack, [9], 0.5)
    assert out == [1, 2, 9, 3, 4]
    assert [t for t in out if t != 9] == haystack


def test_default_grids():
    lengths = default_lengths()
    assert len(lengths) == 16
    assert lengths[0] == 1024 and lengths[-1] == 131072
    assert all(a < b for a, b in zip(lengths, lengths[1:]))
    depths = default_depths()
    assert len(depths) == 10
    assert depths[0] == 0.0 and depths[-1] == 1.0


def test_generate_grid_cardinality_and_exact_lengths():
    spec = NeedleSpec(lengths=[512, 1024, 2048], depths=[0.0, 0.5, 1.0])
    cases = generate_grid(spec, filler_docs(), ByteTokenizer())
    assert len(cases) == 9
    for case in cases:
        assert len(case.prompt_tokens) == case.context_len


def test_generate_grid_single_cell():
    spec = NeedleSpec(lengths=[1024], depths=[0.5])
    cases = generate_grid(spec, filler_docs(), ByteTokenizer())
    assert len(cases) == 1


def test_generate_grid_needle_recoverable():
    spec = NeedleSpec(lengths=[512, 2048], depths=[0.0, 0.25, 1.0])
    tok = ByteTokenizer()
    cases = generate_grid(spec, filler_docs(), tok)
    needle_tokens = tok.encode(" " + spec.needle_text + " ")
    for case in cases:
        text = tok.decode(case.prompt_tokens)
        assert text.count(spec.needle_text) == 1
        start = case.insertion_index
        assert case.prompt_tokens[start : start + len(needle_tokens)] == needle_tokens


def test_generate_grid_too_small_length_names_cell():
    spec = NeedleSpec(lengths=[64], depths=[0.5])
    with pytest.raises(ValueError, match="64"):
        generate_grid(spec, filler_docs(), ByteTokenizer())


def test_generate_grid_answer_reserve_shrinks_prompt():
    spec = NeedleSpec(lengths=[1024], depths=[0.5])
    cases = generate_grid(spec, filler_docs(), ByteTokenizer(), answer_reserve=100)
    assert len(cases[0].prompt_tokens) == 1024 - 100


def test_score_containment_full_credit():
    case = NeedleCase("c", 10, 0.0, 0, [], "eat a sandwich in the park")
    out = "Sure! The best thing is to EAT a sandwich in the park today."
    assert score_response(case, out) == 1.0


def test_score_empty_output():
    case = NeedleCase("c", 10, 0.0, 0, [], "eat a sandwich")
    assert score_response(case, "") == 0.0


def test_score_partial_recall():
    expected = "one two three four five six seven eight nine ten"
    output = "one two three four five six seven nonsense"
    assert answer_recall(expected, output) == pytest.approx(0.7)


def test_score_multiset_semantics():
    # "a" appears twice in the answer; one occurrence in the output matches once
    assert answer_recall("a b a", "a b") == pytest.approx(2 / 3)


def test_score_monotone_under_answer_append():
    rng = np.random.default_rng(6)
    expected = "sit in the park on a sunny day"
    for _ in range(50):
        words = [lorem_text(rng, 5) for _ in range(int(rng.integers(0, 10)))]
        base_out = " ".join(words)
        s0 = answer_recall(expected, base_out)
        s1 = answer_recall(expected, base_out + " " + expected)
        assert s1 >= s0
        assert s1 == 1.0


def test_aggregate_mean_and_cells():
    spec = NeedleSpec(lengths=[512, 1024], depths=[0.0, 1.0])
    cases = generate_grid(spec, filler_docs(), ByteTokenizer())
    scored = [(c, 1.0 if c.context_len == 512 else 0.0) for c in cases]
    grid = aggregate_heatmap(scored)
    assert grid.mean_score == 0.5
    assert grid.cell(512, 0.0) == 1.0
    assert grid.cell(1024, 1.0) == 0.0


def test_aggregate_mean_reported_as_percentage_scale():
    # 160-cell grid with 88% of cells perfect reproduces an 88.0 aggregate
    triples = []
    k = 0
    for l in range(1, 17):
        for d in range(10):
            triples.append((l * 1024, d / 9, 1.0 if k < 0.88 * 160 else 0.0))
            k += 1
    grid = grid_from_triples(triples)
    assert grid.mean_score * 100 == pytest.approx(88.0, abs=0.26)


def test_aggregate_rejects_missing_cell():
    with pytest.raises(ValueError, match="missing"):
        grid_from_triples([(512, 0.0, 1.0), (512, 1.0, 1.0), (1024, 0.0, 1.0)])


def test_aggregate_rejects_duplicate_cell():
    with pytest.raises(ValueError, match="duplicate"):
        grid_from_triples([(512, 0.0, 1.0), (512, 0.0, 0.5)])


def test_cases_file_roundtrip(tmp_path):
    spec = NeedleSpec(lengths=[512], depths=[0.0, 0.5])
    tok = ByteTokenizer()
    cases = generate_grid(spec, filler_docs(), tok)
    path = tmp_path / "cases.jsonl"
    assert write_cases(cases, path, tokenizer=tok) == 2
    back = read_cases(path)
    assert [(c.case_id, c.prompt_tokens) for c in back] == [
        (c.case_id, c.prompt_tokens) for c in cases
    ]
