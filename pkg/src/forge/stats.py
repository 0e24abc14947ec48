"""Length and domain distribution statistics.

All statistics are single-pass folds over a document stream and merge as
commutative monoids, so sharded corpora can be measured in parallel and the
per-shard results combined without changing the answer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .corpus_io import Document

DEFAULT_LONG_THRESHOLD = 4096

# Powers of two from 256 to 256K; an overflow bin is appended on top.
DEFAULT_BIN_EDGES = [0] + [2**k for k in range(8, 19)]


@dataclass
class DomainStats:
    """Token/document tallies for one domain, split at the long threshold."""

    domain: str
    doc_count: int = 0
    token_count: int = 0
    short_tokens: int = 0
    long_tokens: int = 0
    long_doc_count: int = 0

    def add(self, token_count: int, long_threshold: int) -> None:
        self.doc_count += 1
        self.token_count += token_count
        if token_count > long_threshold:
            self.long_tokens += token_count
            self.long_doc_count += 1
        else:
            self.short_tokens += token_count

    def merge(self, other: "DomainStats") -> "DomainStats":
        if other.domain != self.domain:
            raise ValueError("cannot merge stats from different domains")
        return DomainStats(
            domain=self.domain,
            doc_count=self.doc_count + other.doc_count,
            token_count=self.token_count + other.token_count,
            short_tokens=self.short_tokens + other.short_tokens,
            long_tokens=self.long_tokens + other.long_tokens,
            long_doc_count=self.long_doc_count + other.long_doc_count,
        )

    @property
    def long_doc_fraction(self) -> float:
        return self.long_doc_count / self.doc_count if self.doc_count else 0.0

    @property
    def long_token_fraction(self) -> float:
        return self.long_tokens / self.token_count if self.token_count else 0.0


@dataclass
class CorpusStats:
    long_threshold: int
    domains: dict[str, DomainStats] = field(default_factory=dict)

    @property
    def total_tokens(self) -> int:
        return sum(d.token_count for d in self.domains.values())

    @property
    def total_docs(self) -> int:
        return sum(d.doc_count for d in self.domains.values())

    @property
    def long_tokens(self) -> int:
        return sum(d.long_tokens for d in self.domains.values())

    @property
    def long_docs(self) -> int:
        return sum(d.long_doc_count for d in self.domains.values())

    def merge(self, other: "CorpusStats") -> "CorpusStats":
        if other.long_threshold != self.long_threshold:
            raise ValueError("cannot merge stats computed at different long thresholds")
        merged = CorpusStats(long_threshold=self.long_threshold)
        for name in self.domains.keys() | other.domains.keys():
            a = self.domains.get(name)
            b = other.domains.get(name)
            if a and b:
                merged.domains[name] = a.merge(b)
            else:
                src = a or b
                assert src is not None
                merged.domains[name] = DomainStats(**vars(src))
        return merged


def collect_stats(
    docs: Iterable[Document], long_threshold: int = DEFAULT_LONG_THRESHOLD
) -> CorpusStats:
    if long_threshold < 0:
        raise ValueError("long_threshold must be non-negative")
    stats = CorpusStats(long_threshold=long_threshold)
    for doc in docs:
        stats.domains.setdefault(doc.domain, DomainStats(domain=doc.domain)).add(
            doc.token_count, long_threshold
        )
    return stats


@dataclass
class DomainMixture:
    """Per-domain token and document shares; each family sums to 1."""

    token_share: dict[str, float]
    doc_share: dict[str, float]

    def validate(self) -> None:
        for name, shares in (("token", self.token_share), ("doc", self.doc_share)):
            total = sum(shares.values())
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"{name} shares sum to {total!r}, expected 1")


def domain_mixture(source: Iterable[Document] | CorpusStats) -> DomainMixture:
    """Token and document shares per domain. Errors on an empty corpus."""
    stats = source if isinstance(source, CorpusStats) else collect_stats(source)
    total_tokens = stats.total_tokens
    total_docs = stats.total_docs
    if total_docs == 0:
        raise ValueError("no documents")
    mixture = DomainMixture(
        token_share={d.domain: d.token_count / total_tokens for d in stats.domains.values()},
        doc_share={d.domain: d.doc_count / total_docs for d in stats.domains.values()},
    )
    mixture.validate()
    return mixture


@dataclass
class LengthHistogram:
    """Per-domain document counts and token mass per length bin.

    Bins are half-open [edge[i], edge[i+1]) plus a final overflow bin
    [edge[-1], inf). bins() yields (low, high) pairs with high=None for the
    overflow bin.
    """

    bin_edges: list[int]
    doc_counts: dict[str, list[int]]
    token_mass: dict[str, list[int]]

    def bins(self) -> list[tuple[int, int | None]]:
        edges = self.bin_edges
        out: list[tuple[int, int | None]] = [
            (edges[i], edges[i + 1]) for i in range(len(edges) - 1)
        ]
        out.append((edges[-1], None))
        return out

    def total_doc_counts(self) -> list[int]:
        n = len(self.bin_edges)
        totals = [0] * n
        for counts in self.doc_counts.values():
            for i, c in enumerate(counts):
                totals[i] += c
        return totals


def length_histogram(
    docs: Iterable[Document], bin_edges: list[int] | None = None
) -> LengthHistogram:
    """Bin documents by token count. Each document lands in exactly one bin."""
    edges = list(bin_edges) if bin_edges is not None else list(DEFAULT_BIN_EDGES)
    if not edges:
        raise ValueError("bin_edges must be non-empty")
    if any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError(f"bin_edges must be strictly ascending, got {edges}")

    n_bins = len(edges)  # len(edges)-1 interior bins + 1 overflow
    doc_counts: dict[str, list[int]] = {}
    token_mass: dict[str, list[int]] = {}
    for doc in docs:
        length = doc.token_count
        if length < edges[0]:
            raise ValueError(
                f"document {doc.id!r} has {length} tokens, below the first bin edge {edges[0]}"
            )
        idx = n_bins - 1
        for i in range(n_bins - 1):
            if length < edges[i + 1]:
                idx = i
                break
        counts = doc_counts.setdefault(doc.domain, [0] * n_bins)
        mass = token_mass.setdefault(doc.domain, [0] * n_bins)
        counts[idx] += 1
        mass[idx] += length
    return LengthHistogram(bin_edges=edges, doc_counts=doc_counts, token_mass=token_mass)


@dataclass
class LongFraction:
    doc_fraction: float
    token_fraction: float


@dataclass
class LongFractionReport:
    long_threshold: int
    per_domain: dict[str, LongFraction]
    overall: LongFraction


def long_fraction(
    source: Iterable[Document] | CorpusStats, long_threshold: int | None = None
) -> LongFractionReport:
    """Fraction of documents and of token mass above the long threshold."""
    if isinstance(source, CorpusStats):
        if long_threshold is not None and long_threshold != source.long_threshold:
            raise ValueError(
                f"stats were folded at threshold {source.long_threshold}, not {long_threshold}; "
                "re-fold from documents to change it"
            )
        stats = source
    else:
        threshold = DEFAULT_LONG_THRESHOLD if long_threshold is None else long_threshold
        stats = collect_stats(source, threshold)

    per_domain = {
        name: LongFraction(d.long_doc_fraction, d.long_token_fraction)
        for name, d in stats.domains.items()
        if d.doc_count > 0
    }
    total_docs = stats.total_docs
    total_tokens = stats.total_tokens
    overall = LongFraction(
        doc_fraction=stats.long_docs / total_docs if total_docs else 0.0,
        token_fraction=stats.long_tokens / total_tokens if total_tokens else 0.0,
    )
    return LongFractionReport(stats.long_threshold, per_domain, overall)


def stats_table(stats: CorpusStats) -> list[dict]:
    """Plot-ready rows: one per domain plus an overall row."""
    mixture = domain_mixture(stats)
    rows = []
    for name in sorted(stats.domains):
        d = stats.domains[name]
        rows.append(
            {
                "domain": name,
                "doc_count": d.doc_count,
                "token_count": d.token_count,
                "token_share": mixture.token_share[name],
                "doc_share": mixture.doc_share[name],
                "long_doc_fraction": d.long_doc_fraction,
                "long_token_fraction": d.long_token_fraction,
            }
        )
    total_docs = stats.total_docs
    total_tokens = stats.total_tokens
    rows.append(
        {
            "domain": "<all>",
            "doc_count": total_docs,
            "token_count": total_tokens,
            "token_share": 1.0,
            "doc_share": 1.0,
            "long_doc_fraction": stats.long_docs / total_docs if total_docs else 0.0,
            "long_token_fraction": stats.long_tokens / total_tokens if total_tokens else 0.0,
        }
    )
    return rows


def histogram_table(hist: LengthHistogram) -> list[dict]:
    rows = []
    for domain in sorted(hist.doc_counts):
        for (low, high), count, mass in zip(
            hist.bins(), hist.doc_counts[domain], hist.token_mass[domain]
        ):
            rows.append(
                {
                    "domain": domain,
                    "bin_low": low,
                    "bin_high": "" if high is None else high,
                    "doc_count": count,
                    "token_mass": mass,
                }
            )
    return rows


def conservation_check(stats: CorpusStats, hist: LengthHistogram) -> None:
    """Total binned token mass must equal DomainStats token_count per domain."""
    for name, d in stats.domains.items():
        binned = sum(hist.token_mass.get(name, []))
        if binned != d.token_count:
            raise ValueError(
                f"domain {name!r}: histogram mass {binned} != token count {d.token_count}"
            )


def merge_stats(parts: Iterable[CorpusStats]) -> CorpusStats:
    parts = list(parts)
    if not parts:
        raise ValueError("no stats to merge")
    merged = parts[0]
    for other in parts[1:]:
        merged = merged.merge(other)
    return merged


def as_domain_stats(source: CorpusStats | Mapping[str, DomainStats]) -> Mapping[str, DomainStats]:
    return source.domains if isinstance(source, CorpusStats) else source
