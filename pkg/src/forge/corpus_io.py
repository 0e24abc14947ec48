"""Sharded corpus ingestion and output.

Records are line-delimited JSON objects with fields {id, domain, text|tokens}.
Shards may be gzipped. A manifest file lists every shard with its document
and token counts plus a content digest, so downstream steps can verify they
are reading exactly the corpus that was written.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .tokenizers import TokenizerAdapter
from .util import load_json, open_text, sha256_text

logger = logging.getLogger(__name__)

KNOWN_FIELDS = {"id", "domain", "text", "tokens", "token_count"}

MANIFEST_NAME = "manifest.json"


@dataclass
class Document:
    """One domain-tagged record: the unit of ingestion, stats, and sampling."""

    id: str
    domain: str
    text: str | None = None
    tokens: list[int] | None = None
    token_count: int = 0

    def __post_init__(self) -> None:
        if not self.domain:
            raise ValueError(f"document {self.id!r}: domain must be non-empty")
        if self.text is None and self.tokens is None:
            raise ValueError(f"document {self.id!r}: needs text or tokens")
        if self.tokens is not None:
            self.token_count = len(self.tokens)


@dataclass
class ShardInfo:
    path: str
    docs: int
    tokens: int
    sha256: str


@dataclass
class ShardManifest:
    shards: list[ShardInfo] = field(default_factory=list)
    total_docs: int = 0
    total_tokens: int = 0
    tokenizer: str | None = None
    content_digest: str = ""
    base_dir: Path | None = None

    def validate(self) -> None:
        if sum(s.tokens for s in self.shards) != self.total_tokens:
            raise ValueError("manifest shard token counts do not sum to total_tokens")
        if sum(s.docs for s in self.shards) != self.total_docs:
            raise ValueError("manifest shard doc counts do not sum to total_docs")

    def shard_paths(self) -> list[Path]:
        base = self.base_dir or Path(".")
        return [base / s.path for s in self.shards]

    def save(self, out_dir: str | Path) -> Path:
        self.validate()
        out = Path(out_dir) / MANIFEST_NAME
        payload = {
            "version": 1,
            "tokenizer": self.tokenizer,
            "total_docs": self.total_docs,
            "total_tokens": self.total_tokens,
            "content_digest": self.content_digest,
            "shards": [
                {"path": s.path, "docs": s.docs, "tokens": s.tokens, "sha256": s.sha256}
                for s in self.shards
            ],
        }
        with open(out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
        return out

    @staticmethod
    def load(path: str | Path) -> "ShardManifest":
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        obj = load_json(path)
        manifest = ShardManifest(
            shards=[ShardInfo(**s) for s in obj["shards"]],
            total_docs=int(obj["total_docs"]),
            total_tokens=int(obj["total_tokens"]),
            tokenizer=obj.get("tokenizer"),
            content_digest=obj.get("content_digest", ""),
            base_dir=path.parent,
        )
        manifest.validate()
        return manifest


class CorpusReader:
    """Streams Documents from line-delimited files in deterministic order.

    Order is file order, then line order. Documents lacking token ids are
    tokenized with the supplied adapter. Counters accumulate as the stream
    is consumed:

    - skipped_empty: documents with empty text / empty token list
    - unknown_field_count: occurrences of fields outside the schema
    """

    def __init__(self, paths: Iterable[str | Path], tokenizer: TokenizerAdapter):
        self.paths = [Path(p) for p in paths]
        self.tokenizer = tokenizer
        self.skipped_empty = 0
        self.unknown_field_count = 0
        self.unknown_fields: set[str] = set()

    def __iter__(self) -> Iterator[Document]:
        for path in self.paths:
            with open_text(path) as fh:
                for lineno, line in enumerate(fh, start=1):
                    line = line.strip()
                    if not line:
                        continue
                    yield from self._parse(path, lineno, line)

    def _parse(self, path: Path, lineno: int, line: str) -> Iterator[Document]:
        where = f"{path}:{lineno}"
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{where}: malformed record: {exc}") from None
        if not isinstance(record, dict):
            raise ValueError(f"{where}: malformed record: expected an object")

        for key in record.keys() - KNOWN_FIELDS:
            self.unknown_field_count += 1
            if key not in self.unknown_fields:
                self.unknown_fields.add(key)
                logger.warning("%s: ignoring unknown field %r", where, key)

        for req in ("id", "domain"):
            if req not in record or record[req] in (None, ""):
                raise ValueError(f"{where}: malformed record: missing field {req!r}")

        text = record.get("text")
        tokens = record.get("tokens")
        if text is None and tokens is None:
            raise ValueError(f"{where}: malformed record: needs 'text' or 'tokens'")
        if tokens is None and text == "":
            self.skipped_empty += 1
            return
        if tokens is not None:
            if not isinstance(tokens, list):
                raise ValueError(f"{where}: malformed record: 'tokens' must be a list")
            if not tokens:
                self.skipped_empty += 1
                return
            tokens = [int(t) for t in tokens]
        else:
            tokens = self.tokenizer.encode(text)
            if not tokens:
                self.skipped_empty += 1
                return
        yield Document(id=str(record["id"]), domain=str(record["domain"]), text=text, tokens=tokens)


def read_corpus(paths: Iterable[str | Path], tokenizer: TokenizerAdapter) -> CorpusReader:
    """Stream Documents from files; see CorpusReader for ordering and counters."""
    return CorpusReader(paths, tokenizer)


def write_shards(
    docs: Iterable[Document],
    max_tokens_per_shard: int,
    out_dir: str | Path,
    tokenizer_name: str | None = None,
    gzip_shards: bool = False,
) -> ShardManifest:
    """Write documents to shards in input order, closing a shard whenever the
    next document would push it past max_tokens_per_shard.

    A single document larger than the shard limit is an error (it could never
    be placed). Output bytes depend only on the input stream, so repeated runs
    produce identical shards.
    """
    if max_tokens_per_shard <= 0:
        raise ValueError("max_tokens_per_shard must be positive")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    suffix = ".jsonl.gz" if gzip_shards else ".jsonl"

    manifest = ShardManifest(tokenizer=tokenizer_name)
    writer = None
    shard_tokens = 0
    shard_docs = 0
    shard_lines: list[str] = []
    shard_idx = 0

    def close_shard() -> None:
        nonlocal writer, shard_tokens, shard_docs, shard_idx, shard_lines
        if writer is None:
            return
        writer.close()
        name = f"shard-{shard_idx:05d}{suffix}"
        manifest.shards.append(
            ShardInfo(path=name, docs=shard_docs, tokens=shard_tokens, sha256=sha256_text(shard_lines))
        )
        writer = None
        shard_tokens = 0
        shard_docs = 0
        shard_lines = []
        shard_idx += 1

    for doc in docs:
        if doc.token_count > max_tokens_per_shard:
            close_shard()
            raise ValueError(
                f"document {doc.id!r} has {doc.token_count} tokens, larger than the "
                f"shard limit {max_tokens_per_shard}"
            )
        if writer is not None and shard_tokens + doc.token_count > max_tokens_per_shard:
            close_shard()
        if writer is None:
            writer = open_text(out / f"shard-{shard_idx:05d}{suffix}", "wt")
        record: dict = {"id": doc.id, "domain": doc.domain}
        if doc.text is not None:
            record["text"] = doc.text
        if doc.tokens is not None:
            record["tokens"] = doc.tokens
        line = json.dumps(record, ensure_ascii=True, separators=(",", ":")) + "\n"
        writer.write(line)
        shard_lines.append(line)
        shard_tokens += doc.token_count
        shard_docs += 1
        manifest.total_tokens += doc.token_count
        manifest.total_docs += 1

    close_shard()
    manifest.content_digest = sha256_text(s.sha256 for s in manifest.shards)
    manifest.base_dir = out
    manifest.save(out)
    return manifest


def iter_manifest_documents(
    manifest: ShardManifest | str | Path, tokenizer: TokenizerAdapter | None = None
) -> Iterator[Document]:
    """Stream the documents of a written corpus back, in shard order."""
    if not isinstance(manifest, ShardManifest):
        manifest = ShardManifest.load(manifest)
    from .tokenizers import PretokenizedAdapter

    reader = CorpusReader(manifest.shard_paths(), tokenizer or PretokenizedAdapter())
    yield from reader


def load_token_map(manifest: ShardManifest | str | Path) -> dict[str, list[int]]:
    """Materialize id -> token ids for every document in a corpus."""
    out: dict[str, list[int]] = {}
    for doc in iter_manifest_documents(manifest):
        if doc.tokens is None:
            raise ValueError(f"document {doc.id!r} has no token ids in the written corpus")
        out[doc.id] = doc.tokens
    return out
