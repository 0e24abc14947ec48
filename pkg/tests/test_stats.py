import numpy as np
import pytest

from forge.corpus_io import Document
from forge.stats import (
    collect_stats,
    conservation_check,
    domain_mixture,
    length_histogram,
    long_fraction,
    merge_stats,
)

from conftest import random_documents


def doc(domain, length, i=0):
    return Document(id=f"{domain}{length}-{i}", domain=domain, tokens=[0] * length)


def test_domain_mixture_direct_ratio():
    mixture = domain_mixture([doc("A", 820), doc("B", 180)])
    assert mixture.token_share == {"A": 0.82, "B": 0.18}


def test_domain_mixture_single_domain():
    mixture = domain_mixture([doc("D", 10), doc("D", 20, i=1)])
    assert mixture.token_share == {"D": 1.0}
    assert mixture.doc_share == {"D": 1.0}


def test_domain_mixture_empty_corpus():
    with pytest.raises(ValueError, match="no documents"):
        domain_mixture([])


def test_replica_shares_exact(replica_docs):
    from conftest import REPLICA_SHARES

    mixture = domain_mixture(replica_docs)
    for domain, share in REPLICA_SHARES.items():
        assert abs(mixture.token_share[domain] - share) < 1e-9


def test_length_histogram_binning():
    docs = [doc("d", 1000), doc("d", 5000, 1), doc("d", 200000, 2)]
    hist = length_histogram(docs, [0, 4096, 131072])
    assert hist.doc_counts["d"] == [1, 1, 1]
    assert hist.token_mass["d"] == [1000, 5000, 200000]
    assert hist.bins() == [(0, 4096), (4096, 131072), (131072, None)]


def test_length_histogram_all_in_first_bin():
    docs = [doc("d", i + 1, i) for i in range(5)]
    hist = length_histogram(docs, [0, 100, 200])
    assert hist.doc_counts["d"] == [5, 0, 0]


def test_length_histogram_boundary_goes_up():
    hist = length_histogram([doc("d", 4096)], [0, 4096, 8192])
    assert hist.doc_counts["d"] == [0, 1, 0]


def test_length_histogram_rejects_bad_edges():
    with pytest.raises(ValueError):
        length_histogram([doc("d", 1)], [0, 100, 100])
    with pytest.raises(ValueError):
        length_histogram([doc("d", 1)], [200, 100])


def test_thirty_percent_long_documents():
    docs = [doc("d", 5000, i) for i in range(3)] + [doc("d", 100, i + 3) for i in range(7)]
    hist = length_histogram(docs, [0, 4096])
    assert hist.doc_counts["d"][1] / sum(hist.doc_counts["d"]) == pytest.approx(0.3)


def test_long_fraction_hand_computed():
    report = long_fraction([doc("d", 3000), doc("d", 5000, 1)], 4096)
    assert report.per_domain["d"].token_fraction == pytest.approx(5000 / 8000)
    assert report.per_domain["d"].doc_fraction == pytest.approx(0.5)


def test_long_fraction_all_short():
    report = long_fraction([doc("d", 1, i) for i in range(5)], 4096)
    assert report.per_domain["d"].token_fraction == 0.0
    assert report.per_domain["d"].doc_fraction == 0.0


def test_long_fraction_threshold_zero_all_long():
    report = long_fraction([doc("d", 10), doc("d", 20, 1)], 0)
    assert report.per_domain["d"].token_fraction == 1.0


def test_long_fraction_monotone_in_threshold():
    rng = np.random.default_rng(3)
    docs = random_documents(rng, 100, max_len=500)
    prev = None
    for threshold in [0, 10, 50, 100, 250, 500]:
        frac = long_fraction(docs, threshold).overall.token_fraction
        if prev is not None:
            assert frac <= prev + 1e-12
        prev = frac


def test_stats_additivity_over_concatenation():
    rng = np.random.default_rng(8)
    for _ in range(20):
        a = random_documents(rng, int(rng.integers(1, 40)))
        b = random_documents(rng, int(rng.integers(1, 40)))
        merged = merge_stats([collect_stats(a, 30), collect_stats(b, 30)])
        whole = collect_stats(a + b, 30)
        assert {d: vars(s) for d, s in merged.domains.items()} == {
            d: vars(s) for d, s in whole.domains.items()
        }


def test_histogram_conservation_against_stats():
    rng = np.random.default_rng(21)
    docs = random_documents(rng, 200, max_len=300)
    stats = collect_stats(docs, 100)
    hist = length_histogram(docs, [1, 50, 150])
    conservation_check(stats, hist)
    for domain, counts in hist.doc_counts.items():
        assert sum(counts) == stats.domains[domain].doc_count


def test_short_long_split_conserves_tokens():
    rng = np.random.default_rng(2)
    docs = random_documents(rng, 150)
    stats = collect_stats(docs, 25)
    for d in stats.domains.values():
        assert d.short_tokens + d.long_tokens == d.token_count
        assert d.long_doc_count <= d.doc_count
