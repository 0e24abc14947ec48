"""Pluggable tokenizer adapters.

Every algorithm downstream only needs token *counts* and token *ids*, not a
real vocabulary, so two self-contained tokenizers ship built in:

- bytes: each UTF-8 byte is one token id (0..255). Lossless round-trip.
- whitespace: words become ids via an incrementally built vocabulary.
  Round-trip preserves the token count (whitespace runs collapse to single
  spaces).

Pre-tokenized corpora pass token ids through the `tokens` record field and
use the "pretokenized" adapter, which refuses to encode or decode.
"""

from __future__ import annotations

from typing import Sequence


class TokenizerAdapter:
    """Interface: a named pair of encode/decode functions."""

    name: str = "abstract"

    def encode(self, text: str) -> list[int]:
        raise NotImplementedError

    def decode(self, ids: Sequence[int]) -> str:
        raise NotImplementedError


class ByteTokenizer(TokenizerAdapter):
    name = "bytes"

    def encode(self, text: str) -> list[int]:
        return list(text.encode("utf-8"))

    def decode(self, ids: Sequence[int]) -> str:
        return bytes(ids).decode("utf-8")


class WhitespaceTokenizer(TokenizerAdapter):
    """Splits on whitespace; assigns ids in first-seen order.

    The vocabulary lives on the adapter instance, so decoding only works for
    ids produced by the same instance (or a restored one).
    """

    name = "whitespace"

    def __init__(self) -> None:
        self._ids: dict[str, int] = {}
        self._words: list[str] = []

    def encode(self, text: str) -> list[int]:
        out = []
        for word in text.split():
            idx = self._ids.get(word)
            if idx is None:
                idx = len(self._words)
                self._ids[word] = idx
                self._words.append(word)
            out.append(idx)
        return out

    def decode(self, ids: Sequence[int]) -> str:
        try:
            return " ".join(self._words[i] for i in ids)
        except IndexError:
            raise ValueError("token id outside this tokenizer's vocabulary") from None

    @property
    def vocab_size(self) -> int:
        return len(self._words)


class PretokenizedAdapter(TokenizerAdapter):
    """Marker adapter for corpora that arrive with token ids already present."""

    name = "pretokenized"

    def encode(self, text: str) -> list[int]:
        raise ValueError("pretokenized corpora must carry a 'tokens' field; cannot encode text")

    def decode(self, ids: Sequence[int]) -> str:
        raise ValueError("pretokenized token ids have no vocabulary to decode with")


def get_tokenizer(name: str) -> TokenizerAdapter:
    if name == "bytes":
        return ByteTokenizer()
    if name == "whitespace":
        return WhitespaceTokenizer()
    if name == "pretokenized":
        return PretokenizedAdapter()
    raise ValueError(f"unknown tokenizer '{name}' (expected bytes, whitespace, or pretokenized)")
