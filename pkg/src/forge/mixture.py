"""Budgeted mixture construction: five strategies over a domain-tagged corpus.

Strategies
----------
- cut_4k / cut_128k: slice documents into fixed-length chunks, then sample
  by token mass with no reweighting.
- per_source_upsample: hold domain shares fixed, reweight long documents
  within each domain so the sampled long-token fraction hits a target.
- global_upsample: reweight long documents corpus-wide with one pooled
  weight pair, letting domain shares drift.
- domain_upsample: multiply chosen domains' sampling mass, renormalize,
  no length reweighting.

Sampling design
---------------
Draws are with replacement and token-mass proportional, with class
multipliers on top. To make realized proportions deterministic at any
budget, the token budget is pre-allocated by largest-remainder rounding
down to (domain x length-class) strata; within a stratum, documents are
drawn independently with probability proportional to token count. The
marginal distribution of any single draw equals the normalized weight
vector, while realized stratum masses are pinned to their allocations up
to one document of overshoot.

Each stratum draws from its own seeded substream and the final draw order
interleaves strata via a separate seeded schedule, so results are
byte-identical regardless of thread count or execution order.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping

import numpy as np

from .corpus_io import Document, ShardManifest
from .stats import CorpusStats, DomainStats, as_domain_stats
from .util import dump_json, largest_remainder, load_json, rng_for

logger = logging.getLogger(__name__)

STRATEGIES = (
    "cut_4k",
    "cut_128k",
    "per_source_upsample",
    "global_upsample",
    "domain_upsample",
)

CUT_DEFAULTS = {"cut_4k": 4096, "cut_128k": 131072}

DEFAULT_BOOST = 5.0

SHORT, LONG = "short", "long"

DATASET_FILE = "dataset.json"
DRAWS_FILE = "draws.jsonl"


# ---------------------------------------------------------------------------
# Spec
# ---------------------------------------------------------------------------


@dataclass
class MixtureSpec:
    """Declarative recipe for one sampled dataset; the reproducibility contract."""

    strategy: str
    token_budget: int
    seed: int = 0
    cut_len: int | None = None
    long_threshold: int = 4096
    target_long_fraction: float = 0.7
    target_domain_shares: dict[str, float] | None = None
    boosted_domains: dict[str, float] | None = None

    def validate(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.token_budget <= 0:
            raise ValueError("token_budget must be positive")
        if not (0.0 < self.target_long_fraction < 1.0):
            raise ValueError("target_long_fraction must be strictly between 0 and 1")
        if self.long_threshold <= 0:
            raise ValueError("long_threshold must be positive")
        if self.cut_len is not None:
            if self.strategy not in CUT_DEFAULTS:
                raise ValueError("cut_len only applies to cut_4k / cut_128k strategies")
            if self.cut_len <= 0:
                raise ValueError("cut_len must be positive")
        if self.target_domain_shares is not None:
            total = sum(self.target_domain_shares.values())
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"target_domain_shares sum to {total!r}, expected 1")
            if any(v < 0 for v in self.target_domain_shares.values()):
                raise ValueError("target_domain_shares must be non-negative")
        if self.strategy == "domain_upsample":
            if not self.boosted_domains:
                raise ValueError("domain_upsample requires at least one boosted domain")
            if any(m <= 0 for m in self.boosted_domains.values()):
                raise ValueError("boost multipliers must be positive")

    def effective_cut_len(self) -> int | None:
        if self.strategy in CUT_DEFAULTS:
            return self.cut_len if self.cut_len is not None else CUT_DEFAULTS[self.strategy]
        return None

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "token_budget": self.token_budget,
            "seed": self.seed,
            "cut_len": self.cut_len,
            "long_threshold": self.long_threshold,
            "target_long_fraction": self.target_long_fraction,
            "target_domain_shares": self.target_domain_shares,
            "boosted_domains": self.boosted_domains,
        }

    @staticmethod
    def from_dict(obj: Mapping) -> "MixtureSpec":
        known = {
            "strategy",
            "token_budget",
            "seed",
            "cut_len",
            "long_threshold",
            "target_long_fraction",
            "target_domain_shares",
            "boosted_domains",
        }
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown mixture spec fields: {sorted(unknown)}")
        boosted = obj.get("boosted_domains")
        if isinstance(boosted, list):
            boosted = {d: DEFAULT_BOOST for d in boosted}
        spec = MixtureSpec(
            strategy=obj["strategy"],
            token_budget=int(obj["token_budget"]),
            seed=int(obj.get("seed", 0)),
            cut_len=None if obj.get("cut_len") is None else int(obj["cut_len"]),
            long_threshold=int(obj.get("long_threshold", 4096)),
            target_long_fraction=float(obj.get("target_long_fraction", 0.7)),
            target_domain_shares=obj.get("target_domain_shares"),
            boosted_domains=boosted,
        )
        spec.validate()
        return spec

    @staticmethod
    def from_file(path: str | Path) -> "MixtureSpec":
        return MixtureSpec.from_dict(load_json(path))


# ---------------------------------------------------------------------------
# Document cutting
# ---------------------------------------------------------------------------


def chunk_lengths(length: int, cut_len: int) -> list[int]:
    """Lengths of the consecutive chunks a document of `length` splits into."""
    if cut_len <= 0:
        raise ValueError("cut_len must be positive")
    if length <= cut_len:
        return [length]
    full, rem = divmod(length, cut_len)
    return [cut_len] * full + ([rem] if rem else [])


def chunk_id(doc_id: str, index: int) -> str:
    return f"{doc_id}#{index}"


def cut_documents(docs: Iterable[Document], cut_len: int) -> Iterator[Document]:
    """Replace each document by its fixed-length chunks, order preserved.

    A document at or under the cut length passes through unchanged. Chunk i of
    a longer document holds tokens [i*cut_len, min((i+1)*cut_len, L)) and gets
    the id suffix "#i". Text is not carried onto chunks; token ids are.
    """
    if cut_len <= 0:
        raise ValueError("cut_len must be positive")
    for doc in docs:
        if doc.token_count <= cut_len:
            yield doc
            continue
        if doc.tokens is None:
            raise ValueError(f"document {doc.id!r} has no token ids; tokenize before cutting")
        for i in range(0, doc.token_count, cut_len):
            part = doc.tokens[i : i + cut_len]
            yield Document(id=chunk_id(doc.id, i // cut_len), domain=doc.domain, tokens=part)


# ---------------------------------------------------------------------------
# Corpus index: ids + lengths per domain, no token payloads
# ---------------------------------------------------------------------------


@dataclass
class DomainIndex:
    ids: list[str]
    lengths: np.ndarray  # int64, parallel to ids

    @property
    def token_count(self) -> int:
        return int(self.lengths.sum())


class CorpusIndex:
    """Per-domain document inventory (ids and token counts only).

    Sampling operates on this index; token payloads are resolved later by the
    packer from the source shards.
    """

    def __init__(self) -> None:
        self.domains: dict[str, DomainIndex] = {}

    @staticmethod
    def from_documents(docs: Iterable[Document]) -> "CorpusIndex":
        ids: dict[str, list[str]] = {}
        lengths: dict[str, list[int]] = {}
        for doc in docs:
            ids.setdefault(doc.domain, []).append(doc.id)
            lengths.setdefault(doc.domain, []).append(doc.token_count)
        index = CorpusIndex()
        for domain in ids:
            index.domains[domain] = DomainIndex(
                ids=ids[domain], lengths=np.asarray(lengths[domain], dtype=np.int64)
            )
        return index

    @staticmethod
    def from_manifest(manifest: ShardManifest | str | Path) -> "CorpusIndex":
        from .corpus_io import iter_manifest_documents

        return CorpusIndex.from_documents(iter_manifest_documents(manifest))

    @property
    def total_tokens(self) -> int:
        return sum(d.token_count for d in self.domains.values())

    @property
    def total_docs(self) -> int:
        return sum(len(d.ids) for d in self.domains.values())

    def domain_names(self) -> list[str]:
        return sorted(self.domains)

    def token_shares(self) -> dict[str, float]:
        total = self.total_tokens
        if total == 0:
            raise ValueError("no documents")
        return {d: self.domains[d].token_count / total for d in self.domain_names()}

    def stats(self, long_threshold: int) -> CorpusStats:
        out = CorpusStats(long_threshold=long_threshold)
        for name, dom in self.domains.items():
            long_mask = dom.lengths > long_threshold
            out.domains[name] = DomainStats(
                domain=name,
                doc_count=len(dom.ids),
                token_count=int(dom.lengths.sum()),
                short_tokens=int(dom.lengths[~long_mask].sum()),
                long_tokens=int(dom.lengths[long_mask].sum()),
                long_doc_count=int(long_mask.sum()),
            )
        return out

    def cut(self, cut_len: int) -> "CorpusIndex":
        """Chunk-level view of the corpus under cut_documents semantics."""
        index = CorpusIndex()
        for name, dom in self.domains.items():
            ids: list[str] = []
            lengths: list[int] = []
            for doc_id, length in zip(dom.ids, dom.lengths):
                parts = chunk_lengths(int(length), cut_len)
                if len(parts) == 1:
                    ids.append(doc_id)
                    lengths.append(int(length))
                else:
                    for i, part in enumerate(parts):
                        ids.append(chunk_id(doc_id, i))
                        lengths.append(part)
            index.domains[name] = DomainIndex(ids=ids, lengths=np.asarray(lengths, dtype=np.int64))
        return index


# ---------------------------------------------------------------------------
# Upsampling weight solver
# ---------------------------------------------------------------------------


@dataclass
class ClassWeights:
    """Per-domain sampling multipliers for the short/long length classes."""

    w_short: float = 1.0
    w_long: float = 1.0
    unreachable: bool = False


def solve_upsample_weights(
    stats: CorpusStats | Mapping[str, DomainStats], target_long_fraction: float
) -> dict[str, ClassWeights]:
    """Closed-form class weights making the expected long-token fraction of
    token-mass-proportional draws equal the target.

    With w_short = 1 and w_long = f*.S / ((1-f*).L), the long share of the
    weighted token mass is w_long.L / (w_long.L + S) = f* exactly. Targets at
    or below the current fraction yield w_long <= 1 (downsampling). A domain
    with no short tokens is flagged unreachable: its sampled fraction is 1.0
    no matter the weight.
    """
    if not (0.0 < target_long_fraction < 1.0):
        raise ValueError("target_long_fraction must be strictly between 0 and 1")
    f = target_long_fraction
    out: dict[str, ClassWeights] = {}
    for name, d in as_domain_stats(stats).items():
        if d.long_tokens == 0:
            raise ValueError(
                f"domain {name!r} has no long documents; exclude it or lower the threshold"
            )
        if d.short_tokens == 0:
            out[name] = ClassWeights(w_long=1.0, unreachable=True)
        else:
            out[name] = ClassWeights(w_long=f * d.short_tokens / ((1.0 - f) * d.long_tokens))
    return out


def expected_long_fraction(weights: ClassWeights, short_tokens: int, long_tokens: int) -> float:
    """Plug-back identity: long share of the weighted token mass."""
    weighted_long = weights.w_long * long_tokens
    weighted = weighted_long + weights.w_short * short_tokens
    if weighted == 0:
        raise ValueError("domain has no tokens")
    return weighted_long / weighted


# ---------------------------------------------------------------------------
# Sampling plan: budget per (domain, length-class) stratum
# ---------------------------------------------------------------------------


@dataclass
class PlanCell:
    domain: str
    length_class: str  # SHORT or LONG
    budget: int
    mass: int
    n_docs: int


@dataclass
class SamplingPlan:
    strategy: str
    token_budget: int
    long_threshold: int
    cells: list[PlanCell]
    natural_token_share: dict[str, float]
    warnings: list[str] = field(default_factory=list)
    unreachable_domains: list[str] = field(default_factory=list)

    def domain_budgets(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for cell in self.cells:
            out[cell.domain] = out.get(cell.domain, 0) + cell.budget
        return out

    def long_budget(self, domain: str | None = None) -> int:
        return sum(
            c.budget
            for c in self.cells
            if c.length_class == LONG and (domain is None or c.domain == domain)
        )

    def expected_long_fraction(self, domain: str | None = None) -> float:
        total = (
            self.token_budget if domain is None else self.domain_budgets().get(domain, 0)
        )
        return self.long_budget(domain) / total if total else 0.0

    def to_rows(self) -> list[dict]:
        return [vars(c) for c in self.cells]


def _split_classes(dom: DomainIndex, long_threshold: int) -> dict[str, tuple[np.ndarray, int]]:
    """Class -> (doc positions, token mass) for one domain."""
    long_mask = dom.lengths > long_threshold
    out = {}
    for cls, mask in ((SHORT, ~long_mask), (LONG, long_mask)):
        positions = np.nonzero(mask)[0]
        out[cls] = (positions, int(dom.lengths[positions].sum()))
    return out


def build_sampling_plan(index: CorpusIndex, spec: MixtureSpec) -> tuple[SamplingPlan, CorpusIndex]:
    """Allocate the token budget to (domain, length-class) strata.

    Returns the plan plus the index it applies to (the chunked index for cut
    strategies, the input index otherwise).
    """
    spec.validate()
    if not index.domains:
        raise ValueError("no documents")
    cut_len = spec.effective_cut_len()
    if cut_len is not None:
        index = index.cut(cut_len)

    domains = index.domain_names()
    natural_share = index.token_shares()
    classes = {d: _split_classes(index.domains[d], spec.long_threshold) for d in domains}
    warnings: list[str] = []
    unreachable: list[str] = []
    cells: list[PlanCell] = []

    def add_domain_cells(domain: str, domain_budget: int, class_weights: ClassWeights | None) -> None:
        if domain_budget <= 0:
            return
        (short_pos, short_mass) = classes[domain][SHORT]
        (long_pos, long_mass) = classes[domain][LONG]
        w_short = class_weights.w_short if class_weights else 1.0
        w_long = class_weights.w_long if class_weights else 1.0
        split = largest_remainder(domain_budget, [w_short * short_mass, w_long * long_mass])
        for cls, budget, pos, mass in (
            (SHORT, split[0], short_pos, short_mass),
            (LONG, split[1], long_pos, long_mass),
        ):
            if budget > 0:
                cells.append(PlanCell(domain, cls, budget, mass, len(pos)))

    strategy = spec.strategy
    if strategy in ("cut_4k", "cut_128k"):
        budgets = largest_remainder(
            spec.token_budget, [index.domains[d].token_count for d in domains]
        )
        for domain, budget in zip(domains, budgets):
            add_domain_cells(domain, budget, None)

    elif strategy == "per_source_upsample":
        shares = spec.target_domain_shares or natural_share
        unknown = set(shares) - set(domains)
        if unknown:
            raise ValueError(f"target_domain_shares name unknown domains: {sorted(unknown)}")
        active = [d for d in domains if shares.get(d, 0.0) > 0]
        stats = index.stats(spec.long_threshold)
        weights = solve_upsample_weights(
            {d: stats.domains[d] for d in active}, spec.target_long_fraction
        )
        budgets = largest_remainder(spec.token_budget, [shares[d] for d in active])
        for domain, budget in zip(active, budgets):
            if weights[domain].unreachable:
                unreachable.append(domain)
                warnings.append(
                    f"domain {domain!r}: long-fraction target {spec.target_long_fraction} "
                    "unreachable (no short documents); sampled fraction will be 1.0"
                )
            add_domain_cells(domain, budget, weights[domain])

    elif strategy == "global_upsample":
        stats = index.stats(spec.long_threshold)
        pooled_short = sum(d.short_tokens for d in stats.domains.values())
        pooled_long = sum(d.long_tokens for d in stats.domains.values())
        if pooled_long == 0:
            raise ValueError("corpus has no long documents; exclude the strategy or lower the threshold")
        if pooled_short == 0:
            warnings.append(
                f"corpus has no short documents; long-fraction target "
                f"{spec.target_long_fraction} unreachable, sampled fraction will be 1.0"
            )
            w_long = 1.0
        else:
            f = spec.target_long_fraction
            w_long = f * pooled_short / ((1.0 - f) * pooled_long)
        class_budgets = largest_remainder(
            spec.token_budget, [1.0 * pooled_short, w_long * pooled_long]
        )
        for cls, class_budget in zip((SHORT, LONG), class_budgets):
            if class_budget <= 0:
                continue
            masses = [classes[d][cls][1] for d in domains]
            per_domain = largest_remainder(class_budget, masses) if sum(masses) else None
            if per_domain is None:
                continue
            for domain, budget, mass in zip(domains, per_domain, masses):
                if budget > 0:
                    pos = classes[domain][cls][0]
                    cells.append(PlanCell(domain, cls, budget, mass, len(pos)))

    elif strategy == "domain_upsample":
        boosted = spec.boosted_domains or {}
        unknown = set(boosted) - set(domains)
        if unknown:
            raise ValueError(f"boosted_domains name unknown domains: {sorted(unknown)}")
        masses = [index.domains[d].token_count * boosted.get(d, 1.0) for d in domains]
        budgets = largest_remainder(spec.token_budget, masses)
        for domain, budget in zip(domains, budgets):
            add_domain_cells(domain, budget, None)

    else:  # pragma: no cover - validate() already rejects
        raise ValueError(f"unknown strategy {strategy!r}")

    plan = SamplingPlan(
        strategy=strategy,
        token_budget=spec.token_budget,
        long_threshold=spec.long_threshold,
        cells=cells,
        natural_token_share=natural_share,
        warnings=warnings,
        unreachable_domains=unreachable,
    )
    for message in warnings:
        logger.warning("%s", message)
    return plan, index


def first_draw_distribution(index: CorpusIndex, spec: MixtureSpec) -> dict[str, float]:
    """Probability that each document is the first draw, from the plan."""
    plan, planned_index = build_sampling_plan(index, spec)
    out: dict[str, float] = {}
    for cell in plan.cells:
        dom = planned_index.domains[cell.domain]
        long_mask = dom.lengths > plan.long_threshold
        mask = long_mask if cell.length_class == LONG else ~long_mask
        for pos in np.nonzero(mask)[0]:
            prob = (cell.budget / plan.token_budget) * (int(dom.lengths[pos]) / cell.mass)
            doc_id = dom.ids[pos]
            out[doc_id] = out.get(doc_id, 0.0) + prob
    return out


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


@dataclass
class Draw:
    doc_id: str
    domain: str
    token_count: int
    repeat: int


@dataclass
class SampledDataset:
    """Ordered draw list plus realized tallies and the spec that produced it."""

    spec: MixtureSpec
    plan: SamplingPlan
    draws: list[Draw]
    total_tokens: int
    per_domain_tokens: dict[str, int]
    per_domain_long_tokens: dict[str, int]
    per_domain_draws: dict[str, int]
    per_domain_long_draws: dict[str, int]
    corpus_digest: str | None = None
    corpus_manifest_path: str | None = None

    def realized_share(self) -> dict[str, float]:
        return {d: t / self.total_tokens for d, t in self.per_domain_tokens.items()}

    def realized_long_fraction(self, domain: str | None = None) -> float:
        if domain is None:
            total = self.total_tokens
            long_tokens = sum(self.per_domain_long_tokens.values())
        else:
            total = self.per_domain_tokens.get(domain, 0)
            long_tokens = self.per_domain_long_tokens.get(domain, 0)
        return long_tokens / total if total else 0.0

    def realized_long_doc_fraction(self, domain: str | None = None) -> float:
        if domain is None:
            total = len(self.draws)
            long_draws = sum(self.per_domain_long_draws.values())
        else:
            total = self.per_domain_draws.get(domain, 0)
            long_draws = self.per_domain_long_draws.get(domain, 0)
        return long_draws / total if total else 0.0

    def save(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / DRAWS_FILE, "w", encoding="utf-8") as fh:
            for d in self.draws:
                fh.write(
                    json.dumps(
                        {
                            "doc_id": d.doc_id,
                            "domain": d.domain,
                            "tokens": d.token_count,
                            "repeat": d.repeat,
                        },
                        separators=(",", ":"),
                    )
                    + "\n"
                )
        dump_json(
            {
                "version": 1,
                "spec": self.spec.to_dict(),
                "corpus_digest": self.corpus_digest,
                "corpus_manifest_path": self.corpus_manifest_path,
                "total_tokens": self.total_tokens,
                "n_draws": len(self.draws),
                "per_domain_tokens": self.per_domain_tokens,
                "per_domain_long_tokens": self.per_domain_long_tokens,
                "per_domain_draws": self.per_domain_draws,
                "per_domain_long_draws": self.per_domain_long_draws,
                "plan": {
                    "strategy": self.plan.strategy,
                    "token_budget": self.plan.token_budget,
                    "long_threshold": self.plan.long_threshold,
                    "natural_token_share": self.plan.natural_token_share,
                    "warnings": self.plan.warnings,
                    "unreachable_domains": self.plan.unreachable_domains,
                    "cells": self.plan.to_rows(),
                },
            },
            out / DATASET_FILE,
        )

    @staticmethod
    def load(path: str | Path) -> "SampledDataset":
        path = Path(path)
        meta = load_json(path / DATASET_FILE)
        spec = MixtureSpec.from_dict(meta["spec"])
        plan_obj = meta["plan"]
        plan = SamplingPlan(
            strategy=plan_obj["strategy"],
            token_budget=int(plan_obj["token_budget"]),
            long_threshold=int(plan_obj["long_threshold"]),
            cells=[PlanCell(**c) for c in plan_obj["cells"]],
            natural_token_share=plan_obj["natural_token_share"],
            warnings=list(plan_obj.get("warnings", [])),
            unreachable_domains=list(plan_obj.get("unreachable_domains", [])),
        )
        draws = []
        with open(path / DRAWS_FILE, "r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                obj = json.loads(line)
                draws.append(
                    Draw(obj["doc_id"], obj["domain"], int(obj["tokens"]), int(obj["repeat"]))
                )
        return SampledDataset(
            spec=spec,
            plan=plan,
            draws=draws,
            total_tokens=int(meta["total_tokens"]),
            per_domain_tokens={k: int(v) for k, v in meta["per_domain_tokens"].items()},
            per_domain_long_tokens={
                k: int(v) for k, v in meta["per_domain_long_tokens"].items()
            },
            per_domain_draws={k: int(v) for k, v in meta["per_domain_draws"].items()},
            per_domain_long_draws={
                k: int(v) for k, v in meta["per_domain_long_draws"].items()
            },
            corpus_digest=meta.get("corpus_digest"),
            corpus_manifest_path=meta.get("corpus_manifest_path"),
        )


def _stratum_draws(
    dom: DomainIndex, positions: np.ndarray, budget: int, rng: np.random.Generator
) -> np.ndarray:
    """Token-proportional draws with replacement until the budget is crossed."""
    lengths = dom.lengths[positions]
    mass = lengths.sum()
    probs = lengths / mass
    mean_len = float(mass) / len(lengths)
    taken: list[np.ndarray] = []
    total = 0
    while total < budget:
        want = max(4, int((budget - total) / mean_len * 1.2) + 4)
        picks = rng.choice(len(positions), size=want, p=probs)
        csum = total + np.cumsum(lengths[picks])
        if csum[-1] >= budget:
            stop = int(np.searchsorted(csum, budget, side="left"))
            taken.append(picks[: stop + 1])
            total = int(csum[stop])
        else:
            taken.append(picks)
            total = int(csum[-1])
    return positions[np.concatenate(taken)]


def build_mixture(
    corpus: CorpusIndex | ShardManifest | str | Path,
    spec: MixtureSpec,
    threads: int = 1,
) -> SampledDataset:
    """Sample a budgeted dataset per the spec's strategy.

    Deterministic in (corpus digest, spec): stratum draws come from
    independent substreams keyed by (seed, domain, class) and the output
    order comes from a seeded schedule that picks the next stratum with
    probability proportional to its remaining budget.
    """
    corpus_digest = None
    corpus_manifest_path = None
    if isinstance(corpus, (str, Path)):
        corpus = ShardManifest.load(corpus)
    if isinstance(corpus, ShardManifest):
        corpus_digest = corpus.content_digest
        if corpus.base_dir is not None:
            from .corpus_io import MANIFEST_NAME

            corpus_manifest_path = str((corpus.base_dir / MANIFEST_NAME).resolve())
        index = CorpusIndex.from_manifest(corpus)
    else:
        index = corpus

    plan, index = build_sampling_plan(index, spec)
    cells = plan.cells
    if not cells:
        raise ValueError("sampling plan allocated no budget; corpus may be empty")

    class_positions = {
        (cell.domain, cell.length_class): _split_classes(
            index.domains[cell.domain], spec.long_threshold
        )[cell.length_class][0]
        for cell in cells
    }

    def draw_cell(cell: PlanCell) -> np.ndarray:
        rng = rng_for(spec.seed, "stratum", cell.domain, cell.length_class)
        return _stratum_draws(
            index.domains[cell.domain],
            class_positions[(cell.domain, cell.length_class)],
            cell.budget,
            rng,
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_cell = list(pool.map(draw_cell, cells))
    else:
        per_cell = [draw_cell(cell) for cell in cells]

    # Seeded merge: pick the next stratum proportional to its remaining budget.
    schedule_rng = rng_for(spec.seed, "schedule")
    remaining = np.array([c.budget for c in cells], dtype=np.float64)
    cursor = [0] * len(cells)
    active = [i for i in range(len(cells)) if len(per_cell[i]) > 0]

    draws: list[Draw] = []
    repeats: dict[str, int] = {}
    per_domain_tokens: dict[str, int] = {}
    per_domain_long: dict[str, int] = {}
    per_domain_draws: dict[str, int] = {}
    per_domain_long_draws: dict[str, int] = {}
    total = 0

    while active:
        if len(active) == 1:
            pick = active[0]
        else:
            weights = remaining[active]
            weights = np.where(weights > 0, weights, 0.0)
            if weights.sum() <= 0:
                weights = np.ones(len(active))
            pick = active[int(schedule_rng.choice(len(active), p=weights / weights.sum()))]
        cell = cells[pick]
        dom = index.domains[cell.domain]
        pos = int(per_cell[pick][cursor[pick]])
        cursor[pick] += 1
        if cursor[pick] == len(per_cell[pick]):
            active.remove(pick)
        doc_id = dom.ids[pos]
        length = int(dom.lengths[pos])
        repeat = repeats.get(doc_id, 0)
        repeats[doc_id] = repeat + 1
        draws.append(Draw(doc_id, cell.domain, length, repeat))
        remaining[pick] -= length
        total += length
        per_domain_tokens[cell.domain] = per_domain_tokens.get(cell.domain, 0) + length
        per_domain_draws[cell.domain] = per_domain_draws.get(cell.domain, 0) + 1
        if cell.length_class == LONG:
            per_domain_long[cell.domain] = per_domain_long.get(cell.domain, 0) + length
            per_domain_long_draws[cell.domain] = per_domain_long_draws.get(cell.domain, 0) + 1

    if total >= 2 * spec.token_budget:
        logger.warning(
            "dataset overshoots the budget by %d tokens (budget %d); "
            "budget is small relative to document sizes",
            total - spec.token_budget,
            spec.token_budget,
        )

    return SampledDataset(
        spec=spec,
        plan=plan,
        draws=draws,
        total_tokens=total,
        per_domain_tokens=per_domain_tokens,
        per_domain_long_tokens=per_domain_long,
        per_domain_draws=per_domain_draws,
        per_domain_long_draws=per_domain_long_draws,
        corpus_digest=corpus_digest,
        corpus_manifest_path=corpus_manifest_path,
    )


# ---------------------------------------------------------------------------
# Audit
# ---------------------------------------------------------------------------


@dataclass
class AuditRow:
    domain: str
    target_share: float
    realized_share: float
    share_deviation: float
    target_long_fraction: float
    realized_long_token_fraction: float
    realized_long_doc_fraction: float
    long_deviation: float
    flag: str = ""


@dataclass
class MixtureAudit:
    rows: list[AuditRow]
    overall_long_token_fraction: float
    overall_long_doc_fraction: float
    share_tol: float
    long_tol: float
    passed: bool
    warnings: list[str] = field(default_factory=list)

    def to_rows(self) -> list[dict]:
        return [vars(r) for r in self.rows]


def verify_mixture(
    dataset: SampledDataset,
    spec: MixtureSpec | None = None,
    share_tol: float = 0.01,
    long_tol: float = 0.02,
) -> MixtureAudit:
    """Compare realized shares and long fractions against the spec's targets.

    Share targets are the plan's domain allocations, except for
    global_upsample, which is audited against the corpus's original (or
    explicitly targeted) shares so that its domain drift is surfaced.
    Unreachable long targets are flagged rather than failed.
    """
    spec = spec or dataset.spec
    plan = dataset.plan
    budgets = plan.domain_budgets()
    realized_share = dataset.realized_share()

    if plan.strategy == "global_upsample":
        target_shares = spec.target_domain_shares or plan.natural_token_share
    else:
        target_shares = {d: b / plan.token_budget for d, b in budgets.items()}

    if plan.strategy in ("per_source_upsample", "global_upsample"):
        target_long = spec.target_long_fraction
    else:
        target_long = None  # per-domain natural expectation from the plan

    unreachable = set(plan.unreachable_domains)

    rows: list[AuditRow] = []
    passed = True
    domains = sorted(set(target_shares) | set(realized_share))
    for domain in domains:
        t_share = target_shares.get(domain, 0.0)
        r_share = realized_share.get(domain, 0.0)
        t_long = target_long if target_long is not None else plan.expected_long_fraction(domain)
        r_long = dataset.realized_long_fraction(domain)
        r_long_docs = dataset.realized_long_doc_fraction(domain)
        share_dev = abs(r_share - t_share)
        long_dev = abs(r_long - t_long)
        flag = "unreachable_long_target" if domain in unreachable else ""
        if share_dev > share_tol:
            passed = False
        if not flag and long_dev > long_tol:
            passed = False
        rows.append(
            AuditRow(
                domain=domain,
                target_share=t_share,
                realized_share=r_share,
                share_deviation=share_dev,
                target_long_fraction=t_long,
                realized_long_token_fraction=r_long,
                realized_long_doc_fraction=r_long_docs,
                long_deviation=long_dev,
                flag=flag,
            )
        )

    return MixtureAudit(
        rows=rows,
        overall_long_token_fraction=dataset.realized_long_fraction(),
        overall_long_doc_fraction=dataset.realized_long_doc_fraction(),
        share_tol=share_tol,
        long_tol=long_tol,
        passed=passed,
        warnings=list(plan.warnings),
    )
