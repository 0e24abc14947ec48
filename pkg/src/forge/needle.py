"""Needle-in-a-haystack test grids: generation, scoring, aggregation.

A case plants a known sentence (the needle) at a chosen depth inside filler
text trimmed to an exact token length, then appends a question asking the
model to recite it. Scoring is deterministic token recall of the expected
answer within the model's output, so the harness needs no judge model and
every score is reproducible. Model inference itself happens elsewhere;
transcripts come back through a file interface.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .corpus_io import Document
from .tokenizers import TokenizerAdapter

DEFAULT_NEEDLE = (
    "The best thing to do in San Francisco is eat a sandwich and "
    "sit in Dolores Park on a sunny day"
)
DEFAULT_QUESTION = "What is the best thing to do in San Francisco?"
DEFAULT_ANSWER = "eat a sandwich and sit in Dolores Park on a sunny day"


def default_lengths(n: int = 16, low: int = 1024, high: int = 131072) -> list[int]:
    """n log-spaced context lengths from low to high inclusive."""
    if n < 2:
        return [low]
    ratio = (high / low) ** (1.0 / (n - 1))
    lengths = [int(round(low * ratio**i)) for i in range(n)]
    lengths[0], lengths[-1] = low, high
    return lengths


def default_depths(n: int = 10) -> list[float]:
    """n evenly spaced depth fractions from 0 to 1 inclusive."""
    if n < 2:
        return [0.0]
    return [i / (n - 1) for i in range(n)]


@dataclass
class NeedleSpec:
    needle_text: str = DEFAULT_NEEDLE
    question_text: str = DEFAULT_QUESTION
    expected_answer: str = DEFAULT_ANSWER
    lengths: list[int] = field(default_factory=default_lengths)
    depths: list[float] = field(default_factory=default_depths)

    def validate(self) -> None:
        if not self.needle_text or not self.expected_answer:
            raise ValueError("needle_text and expected_answer must be non-empty")
        if not self.lengths or any(a >= b for a, b in zip(self.lengths, self.lengths[1:])):
            raise ValueError("lengths must be non-empty and strictly ascending")
        if any(length <= 0 for length in self.lengths):
            raise ValueError("lengths must be positive")
        if not self.depths or any(not (0.0 <= d <= 1.0) for d in self.depths):
            raise ValueError("depths must be fractions in [0, 1]")
        if any(a >= b for a, b in zip(self.depths, self.depths[1:])):
            raise ValueError("depths must be strictly ascending")

    @staticmethod
    def from_dict(obj: dict) -> "NeedleSpec":
        spec = NeedleSpec(
            needle_text=obj.get("needle_text", DEFAULT_NEEDLE),
            question_text=obj.get("question_text", DEFAULT_QUESTION),
            expected_answer=obj.get("expected_answer", DEFAULT_ANSWER),
            lengths=[int(x) for x in obj.get("lengths", default_lengths())],
            depths=[float(x) for x in obj.get("depths", default_depths())],
        )
        spec.validate()
        return spec

    @staticmethod
    def from_file(path: str | Path) -> "NeedleSpec":
        with open(path, "r", encoding="utf-8") as fh:
            return NeedleSpec.from_dict(json.load(fh))


@dataclass
class NeedleCase:
    case_id: str
    context_len: int
    depth_fraction: float
    insertion_index: int
    prompt_tokens: list[int]
    expected_answer: str


def case_id_for(context_len: int, depth: float) -> str:
    return f"L{context_len:06d}-D{int(round(depth * 10000)):05d}"


def build_haystack(
    filler: Iterable[Document],
    target_len: int,
    tokenizer: TokenizerAdapter,
    reserve: int = 0,
) -> list[int]:
    """Filler tokens cycled and truncated to exactly target_len - reserve.

    Construction is deterministic: filler documents concatenate in order and
    repeat from the start when exhausted.
    """
    want = target_len - reserve
    if want <= 0:
        raise ValueError(f"target_len {target_len} leaves no room after reserving {reserve} tokens")
    token_lists = []
    for doc in filler:
        tokens = doc.tokens if doc.tokens is not None else tokenizer.encode(doc.text or "")
        if tokens:
            token_lists.append(tokens)
    if not token_lists:
        raise ValueError("filler corpus is empty")
    out: list[int] = []
    while len(out) < want:
        for tokens in token_lists:
            out.extend(tokens)
            if len(out) >= want:
                break
    return out[:want]


def insert_needle(
    haystack: Sequence[int], needle: Sequence[int], depth_fraction: float
) -> tuple[list[int], int]:
    """Insert the needle contiguously at round(depth * len(haystack)).

    Haystack tokens at the insertion point are displaced, not overwritten, so
    the needle stays verbatim in the output.
    """
    if not (0.0 <= depth_fraction <= 1.0):
        raise ValueError("depth_fraction must be in [0, 1]")
    index = round(depth_fraction * len(haystack))
    out = list(haystack[:index]) + list(needle) + list(haystack[index:])
    return out, index


def generate_grid(
    spec: NeedleSpec,
    filler: Iterable[Document],
    tokenizer: TokenizerAdapter,
    answer_reserve: int = 0,
) -> list[NeedleCase]:
    """One case per (length, depth) cell.

    Prompts are haystack-with-needle followed by the question; each prompt's
    token count equals its context length minus answer_reserve (zero by
    default, so prompts fill the context exactly).
    """
    spec.validate()
    filler_docs = list(filler)
    # Pad the needle with spaces so byte-level decoding keeps it word-separated.
    needle_tokens = tokenizer.encode(" " + spec.needle_text.strip() + " ")
    question_tokens = tokenizer.encode("\n" + spec.question_text.strip())
    reserve = len(needle_tokens) + len(question_tokens) + answer_reserve

    cases = []
    for length in spec.lengths:
        if length - reserve <= 0:
            raise ValueError(
                f"cell with context length {length} is too small for needle+question "
                f"({reserve} tokens reserved)"
            )
        haystack = build_haystack(filler_docs, length, tokenizer, reserve=reserve)
        for depth in spec.depths:
            with_needle, index = insert_needle(haystack, needle_tokens, depth)
            prompt = with_needle + question_tokens
            cases.append(
                NeedleCase(
                    case_id=case_id_for(length, depth),
                    context_len=length,
                    depth_fraction=depth,
                    insertion_index=index,
                    prompt_tokens=prompt,
                    expected_answer=spec.expected_answer,
                )
            )
    return cases


def _normalize(text: str) -> list[str]:
    return text.casefold().split()


def answer_recall(expected_answer: str, model_output: str) -> float:
    """Multiset recall of the expected answer's tokens within the output,
    after case-folding and whitespace normalization."""
    expected = _normalize(expected_answer)
    if not expected:
        raise ValueError("expected answer is empty after normalization")
    if not model_output:
        return 0.0
    matched = Counter(expected) & Counter(_normalize(model_output))
    return sum(matched.values()) / len(expected)


def score_response(case: NeedleCase, model_output: str) -> float:
    return answer_recall(case.expected_answer, model_output)


@dataclass
class HeatmapGrid:
    """Score surface over (context length x depth); scores[i][j] is depth i,
    length j."""

    lengths: list[int]
    depths: list[float]
    scores: list[list[float]]

    @property
    def mean_score(self) -> float:
        cells = [s for row in self.scores for s in row]
        return sum(cells) / len(cells)

    def cell(self, length: int, depth: float) -> float:
        return self.scores[self.depths.index(depth)][self.lengths.index(length)]


def grid_from_triples(triples: Iterable[tuple[int, float, float]]) -> HeatmapGrid:
    """Assemble (length, depth, score) triples into a complete grid; reject
    duplicates and gaps."""
    by_cell: dict[tuple[int, float], float] = {}
    duplicates = []
    for length, depth, score in triples:
        if not (0.0 <= score <= 1.0):
            raise ValueError(f"cell ({length}, {depth}): score {score} outside [0, 1]")
        key = (length, depth)
        if key in by_cell:
            duplicates.append(key)
        by_cell[key] = score
    if duplicates:
        raise ValueError(f"duplicate grid cells: {sorted(duplicates)}")
    if not by_cell:
        raise ValueError("no scored cases")
    lengths = sorted({k[0] for k in by_cell})
    depths = sorted({k[1] for k in by_cell})
    missing = [(l, d) for d in depths for l in lengths if (l, d) not in by_cell]
    if missing:
        raise ValueError(f"missing grid cells: {missing}")
    scores = [[by_cell[(l, d)] for l in lengths] for d in depths]
    return HeatmapGrid(lengths=lengths, depths=depths, scores=scores)


def aggregate_heatmap(scored: Iterable[tuple[NeedleCase, float]]) -> HeatmapGrid:
    """Assemble per-case scores into a complete grid; reject duplicates/gaps."""
    return grid_from_triples(
        (case.context_len, case.depth_fraction, score) for case, score in scored
    )


# ---------------------------------------------------------------------------
# File interchange
# ---------------------------------------------------------------------------


def write_cases(
    cases: Iterable[NeedleCase], out_path: str | Path, tokenizer: TokenizerAdapter | None = None
) -> int:
    """Write cases as JSONL; includes decoded prompt text when a tokenizer
    capable of decoding is supplied."""
    n = 0
    with open(out_path, "w", encoding="utf-8") as fh:
        for case in cases:
            record = {
                "case_id": case.case_id,
                "context_len": case.context_len,
                "depth": case.depth_fraction,
                "insertion_index": case.insertion_index,
                "expected_answer": case.expected_answer,
                "prompt_tokens": case.prompt_tokens,
            }
            if tokenizer is not None:
                record["prompt_text"] = tokenizer.decode(case.prompt_tokens)
            fh.write(json.dumps(record, separators=(",", ":")) + "\n")
            n += 1
    return n


def read_cases(path: str | Path) -> list[NeedleCase]:
    cases = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            cases.append(
                NeedleCase(
                    case_id=obj["case_id"],
                    context_len=int(obj["context_len"]),
                    depth_fraction=float(obj["depth"]),
                    insertion_index=int(obj["insertion_index"]),
                    prompt_tokens=[int(t) for t in obj["prompt_tokens"]],
                    expected_answer=obj["expected_answer"],
                )
            )
    return cases


def read_responses(path: str | Path) -> dict[str, str]:
    """Transcripts as JSONL of {case_id, output_text}."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            if "case_id" not in obj or "output_text" not in obj:
                raise ValueError(f"{path}:{lineno}: response needs case_id and output_text")
            out[obj["case_id"]] = obj["output_text"]
    return out


def score_cases(cases: Iterable[NeedleCase], responses: dict[str, str]) -> list[tuple[NeedleCase, float]]:
    scored = []
    for case in cases:
        if case.case_id not in responses:
            raise ValueError(f"no response for case {case.case_id}")
        scored.append((case, score_response(case, responses[case.case_id])))
    return scored
