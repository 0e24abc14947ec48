"""Shared corpus builders for the test suite."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from forge.corpus_io import Document

# Seven-domain corpus shaped like an open LLaMA-style pretraining mixture:
# token shares {CC .67, C4 .15, Github .045, Wiki .045, Book .045, Arxiv .025,
# Stack .02}, with roughly 30% of each domain's token mass in documents longer
# than 4096 tokens (CommonCrawl runs a little longer-tailed than the rest, so
# it holds by far the most long tokens).
#
# Document sizes are chosen so that a 1e6-token budget divides evenly into the
# per-domain and per-class allocations: realized shares and long fractions
# then sit exactly on their targets and any sampler drift shows up unmasked.
# (domain, long_doc_tokens, n_long_docs, short_doc_tokens, n_short_docs)
REPLICA_LAYOUT = [
    ("CommonCrawl", 6700, 105, 125, 10452),
    ("C4", 5000, 18, 125, 2880),
    ("Github", 4500, 6, 125, 864),
    ("Wikipedia", 4500, 6, 125, 864),
    ("Book", 4500, 6, 125, 864),
    ("Arxiv", 4375, 4, 125, 460),
    ("StackExchange", 7000, 2, 125, 368),
]

REPLICA_SHARES = {
    "CommonCrawl": 0.67,
    "C4": 0.15,
    "Github": 0.045,
    "Wikipedia": 0.045,
    "Book": 0.045,
    "Arxiv": 0.025,
    "StackExchange": 0.02,
}

REPLICA_TOTAL_TOKENS = 3_000_000


def build_replica_documents() -> list[Document]:
    docs = []
    for domain, long_size, n_long, short_size, n_short in REPLICA_LAYOUT:
        for i in range(n_long):
            docs.append(Document(id=f"{domain}-long-{i}", domain=domain, tokens=[7] * long_size))
        for i in range(n_short):
            docs.append(Document(id=f"{domain}-short-{i}", domain=domain, tokens=[3] * short_size))
    return docs


@pytest.fixture(scope="session")
def replica_docs() -> list[Document]:
    return build_replica_documents()


@pytest.fixture(scope="session")
def replica_index(replica_docs):
    from forge.mixture import CorpusIndex

    return CorpusIndex.from_documents(replica_docs)


def random_documents(rng: np.random.Generator, n_docs: int, max_len: int = 50) -> list[Document]:
    """Small random corpus over a few domains, for property-style loops."""
    domains = ["web", "code", "book"]
    docs = []
    for i in range(n_docs):
        length = int(rng.integers(1, max_len + 1))
        tokens = rng.integers(0, 256, size=length).tolist()
        docs.append(Document(id=f"d{i}", domain=domains[int(rng.integers(0, 3))], tokens=tokens))
    return docs


def write_corpus_jsonl(docs: list[Document], path: Path) -> Path:
    """Raw ingest-format corpus file (text and/or tokens per record)."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            record: dict = {"id": doc.id, "domain": doc.domain}
            if doc.text is not None:
                record["text"] = doc.text
            if doc.tokens is not None:
                record["tokens"] = doc.tokens
            fh.write(json.dumps(record) + "\n")
    return path


_WORDS = (
    "loaf oven flour crumb proof starter hearth crust salt water mill grain "
    "rise fold score steam bake cool slice toast morning market street garden "
    "river stone bridge lantern harbor meadow cedar maple winter summer"
).split()


def lorem_text(rng: np.random.Generator, n_chars: int) -> str:
    """Deterministic filler prose of exactly n_chars ASCII characters."""
    parts: list[str] = []
    size = 0
    while size < n_chars:
        word = _WORDS[int(rng.integers(0, len(_WORDS)))]
        parts.append(word)
        size += len(word) + 1
    text = " ".join(parts)
    return text[:n_chars]


def mini_text_corpus(seed: int = 11) -> list[Document]:
    """Two-domain text corpus (bytes-tokenizer scale) with some docs > 4096."""
    rng = np.random.default_rng(seed)
    docs = []
    for i in range(6):
        docs.append(Document(id=f"web-long-{i}", domain="web", text=lorem_text(rng, 5000)))
    for i in range(60):
        docs.append(Document(id=f"web-short-{i}", domain="web", text=lorem_text(rng, 700)))
    for i in range(4):
        docs.append(Document(id=f"book-long-{i}", domain="book", text=lorem_text(rng, 6000)))
    for i in range(20):
        docs.append(Document(id=f"book-short-{i}", domain="book", text=lorem_text(rng, 900)))
    return docs
