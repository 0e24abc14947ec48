"""Fixed-length chunk packing and training-cost planning.

Sampled documents are concatenated in draw order, regardless of document
boundaries, optionally with a single separator token between consecutive
documents, and emitted as chunks of exactly chunk_len tokens. The final
partial chunk is dropped and its size reported. Every chunk carries
provenance spans that tile it exactly, so any token can be traced back to
(document id, repeat index, source offset).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

SEPARATOR_DOC_ID = "<separator>"


@dataclass
class ProvenanceSpan:
    """Chunk-relative [start, end) filled by one document (or a separator)."""

    doc_id: str
    repeat: int
    start: int
    end: int
    src_offset: int  # offset of the span's first token within its source document


@dataclass
class PackedChunk:
    chunk_index: int
    tokens: list[int]
    provenance: list[ProvenanceSpan]

    def validate(self, chunk_len: int) -> None:
        if len(self.tokens) != chunk_len:
            raise ValueError(f"chunk {self.chunk_index}: {len(self.tokens)} tokens != {chunk_len}")
        cursor = 0
        for span in self.provenance:
            if span.start != cursor or span.end <= span.start:
                raise ValueError(
                    f"chunk {self.chunk_index}: provenance does not tile at offset {cursor}"
                )
            cursor = span.end
        if cursor != chunk_len:
            raise ValueError(f"chunk {self.chunk_index}: provenance ends at {cursor} != {chunk_len}")


@dataclass
class PackReport:
    n_chunks: int = 0
    dropped_tokens: int = 0
    input_tokens: int = 0  # includes separators
    n_documents: int = 0


class ChunkPacker:
    """Streaming packer; feed documents, collect completed chunks, finish().

    Chunk boundaries depend only on the concatenated token stream, so two
    streams with identical concatenation (and separator placement) pack
    identically no matter where the document boundaries fall.
    """

    def __init__(self, chunk_len: int, separator: int | None = None):
        if chunk_len <= 0:
            raise ValueError("chunk_len must be positive")
        self.chunk_len = chunk_len
        self.separator = separator
        self.report = PackReport()
        self._buffer: list[int] = []
        self._spans: list[ProvenanceSpan] = []  # spans covering the buffer
        self._chunk_index = 0
        self._started = False

    def _append(self, tokens: Sequence[int], doc_id: str, repeat: int, src_offset: int) -> None:
        start = len(self._buffer)
        self._buffer.extend(tokens)
        self._spans.append(ProvenanceSpan(doc_id, repeat, start, start + len(tokens), src_offset))

    def _drain(self) -> Iterator[PackedChunk]:
        while len(self._buffer) >= self.chunk_len:
            tokens = self._buffer[: self.chunk_len]
            self._buffer = self._buffer[self.chunk_len :]
            spans: list[ProvenanceSpan] = []
            rest: list[ProvenanceSpan] = []
            for span in self._spans:
                if span.end <= self.chunk_len:
                    spans.append(span)
                elif span.start >= self.chunk_len:
                    rest.append(
                        ProvenanceSpan(
                            span.doc_id,
                            span.repeat,
                            span.start - self.chunk_len,
                            span.end - self.chunk_len,
                            span.src_offset,
                        )
                    )
                else:
                    head_len = self.chunk_len - span.start
                    spans.append(
                        ProvenanceSpan(span.doc_id, span.repeat, span.start, self.chunk_len, span.src_offset)
                    )
                    rest.append(
                        ProvenanceSpan(
                            span.doc_id, span.repeat, 0, span.end - self.chunk_len, span.src_offset + head_len
                        )
                    )
            self._spans = rest
            chunk = PackedChunk(self._chunk_index, tokens, spans)
            self._chunk_index += 1
            self.report.n_chunks += 1
            yield chunk

    def feed(self, tokens: Sequence[int], doc_id: str, repeat: int = 0) -> Iterator[PackedChunk]:
        """Append one document; yields any chunks completed by it."""
        if self._started and self.separator is not None:
            self._append([self.separator], SEPARATOR_DOC_ID, 0, 0)
            self.report.input_tokens += 1
        self._started = True
        self._append(tokens, doc_id, repeat, 0)
        self.report.input_tokens += len(tokens)
        self.report.n_documents += 1
        yield from self._drain()

    def finish(self) -> PackReport:
        """Drop the final partial chunk and report its token count."""
        self.report.dropped_tokens = len(self._buffer)
        self._buffer = []
        self._spans = []
        return self.report


def pack_chunks(
    docs: Iterable[tuple[str, int, Sequence[int]]],
    chunk_len: int,
    separator: int | None = None,
) -> tuple[list[PackedChunk], PackReport]:
    """Pack (doc_id, repeat, tokens) triples; returns (chunks, report)."""
    packer = ChunkPacker(chunk_len, separator)
    chunks: list[PackedChunk] = []
    for doc_id, repeat, tokens in docs:
        chunks.extend(packer.feed(tokens, doc_id, repeat))
    report = packer.finish()
    return chunks, report


# ---------------------------------------------------------------------------
# Training plans
# ---------------------------------------------------------------------------

BINARY_M = 1 << 20


@dataclass
class HardwareProfile:
    """Measured throughput row: wallclock days per 10B tokens."""

    name: str
    model: str
    context_len: int
    gpus: int
    days_per_10b_tokens: float


# Throughput table for full-attention continual pretraining on 80G A100s.
HARDWARE_PROFILES: dict[str, HardwareProfile] = {
    p.name: p
    for p in [
        HardwareProfile("7b-4k-8xA100", "7B", 4096, 8, 3.0),
        HardwareProfile("7b-80k-8xA100", "7B", 81920, 8, 10.0),
        HardwareProfile("13b-4k-8xA100", "13B", 4096, 8, 5.0),
        HardwareProfile("13b-64k-8xA100", "13B", 65536, 8, 13.0),
        HardwareProfile("7b-4k-16xA100", "7B", 4096, 16, 2.0),
        HardwareProfile("7b-80k-16xA100", "7B", 81920, 16, 7.0),
        HardwareProfile("13b-4k-16xA100", "13B", 4096, 16, 4.0),
        HardwareProfile("13b-64k-16xA100", "13B", 65536, 16, 10.0),
    ]
}


@dataclass
class TrainingPlan:
    token_budget: int
    batch_tokens: int
    steps: int
    profile: HardwareProfile | None = None
    estimated_days: float | None = None


def training_plan(
    token_budget: int,
    batch_tokens: int = 4 * BINARY_M,
    profile: HardwareProfile | str | None = None,
) -> TrainingPlan:
    """steps = floor(budget / batch); days = budget/1e10 * profile days-per-10B."""
    if batch_tokens <= 0:
        raise ValueError("batch_tokens must be positive")
    if token_budget < 0:
        raise ValueError("token_budget must be non-negative")
    if isinstance(profile, str):
        if profile not in HARDWARE_PROFILES:
            raise ValueError(
                f"unknown hardware profile {profile!r}; known: {sorted(HARDWARE_PROFILES)}"
            )
        profile = HARDWARE_PROFILES[profile]
    steps = token_budget // batch_tokens
    days = None
    if profile is not None:
        days = token_budget / 1e10 * profile.days_per_10b_tokens
    return TrainingPlan(
        token_budget=token_budget,
        batch_tokens=batch_tokens,
        steps=steps,
        profile=profile,
        estimated_days=days,
    )


def parse_batch_tokens(text: str, decimal_m: bool = False) -> int:
    """Parse a batch size: plain ints, scientific notation, or an M suffix.

    "4M" means 4*2^20 tokens by default; with decimal_m it means 4e6.
    """
    s = text.strip()
    if s.lower().endswith("m"):
        mult = 1_000_000 if decimal_m else BINARY_M
        return int(round(float(s[:-1]) * mult))
    value = float(s)
    if value != int(value):
        raise ValueError(f"batch size {text!r} is not an integer token count")
    return int(value)
