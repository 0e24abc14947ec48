"""forge command-line interface.

Subcommands: ingest, stats, mix, audit, pack, plan, needle {gen,score,report},
lossdiff, curve. Logs go to stderr; data goes to files (or stdout for
table-printing commands without --out). Commands that write an output
directory also record a run manifest (resolved config + input digests) there,
so any run can be replayed exactly.

Exit codes: 0 success, 2 usage error, 3 missing input, 4 validation error,
1 unexpected failure.
"""

from __future__ import annotations

import argparse
import csv
import glob
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .corpus_io import (
    Document,
    ShardManifest,
    iter_manifest_documents,
    load_token_map,
    read_corpus,
    write_shards,
)
from .mixture import MixtureSpec, SampledDataset, build_mixture, verify_mixture
from .needle import (
    NeedleSpec,
    generate_grid,
    grid_from_triples,
    read_cases,
    read_responses,
    score_cases,
    write_cases,
)
from .packer import ChunkPacker, HARDWARE_PROFILES, parse_batch_tokens, training_plan
from .report import (
    loss_diff_table,
    read_curve_points,
    read_loss_records,
    render_curve,
    render_heatmap,
    render_histogram,
    render_lossdiff,
    scaling_curve,
    write_csv,
)
from .stats import collect_stats, conservation_check, histogram_table, length_histogram, stats_table
from .tokenizers import get_tokenizer
from .util import dump_json, sha256_file

logger = logging.getLogger("forge")

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_MISSING_INPUT = 3
EXIT_VALIDATION = 4

DEFAULT_SEPARATOR_ID = 0  # placeholder end-of-text id; real vocabularies supply their own


def _write_run_manifest(out_dir: Path, command: str, args: argparse.Namespace, inputs: list[Path]) -> None:
    config = {k: v for k, v in vars(args).items() if k != "func" and not callable(v)}
    config = {k: (str(v) if isinstance(v, Path) else v) for k, v in config.items()}
    dump_json(
        {
            "command": command,
            "version": __version__,
            "config": config,
            "input_digests": {str(p): sha256_file(p) for p in inputs if Path(p).is_file()},
        },
        out_dir / "run_manifest.json",
    )


def _expand_inputs(patterns: list[str]) -> list[Path]:
    paths: list[Path] = []
    for pattern in patterns:
        matches = sorted(glob.glob(pattern))
        if matches:
            paths.extend(Path(m) for m in matches)
        elif Path(pattern).exists():
            paths.append(Path(pattern))
        else:
            raise FileNotFoundError(f"no input matches {pattern!r}")
    return paths


def _manifest_path(path: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    return p


def _print_csv(rows: list[dict], stream) -> None:
    writer = csv.DictWriter(stream, fieldnames=list(rows[0].keys()))
    writer.writeheader()
    writer.writerows(rows)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_ingest(args: argparse.Namespace) -> int:
    paths = _expand_inputs(args.inputs)
    tokenizer = get_tokenizer(args.tokenizer)
    reader = read_corpus(paths, tokenizer)
    manifest = write_shards(
        reader,
        max_tokens_per_shard=args.shard_tokens,
        out_dir=args.out,
        tokenizer_name=args.tokenizer,
        gzip_shards=args.gzip,
    )
    logger.info(
        "ingested %d docs / %d tokens into %d shards (skipped %d empty, %d unknown-field values)",
        manifest.total_docs,
        manifest.total_tokens,
        len(manifest.shards),
        reader.skipped_empty,
        reader.unknown_field_count,
    )
    _write_run_manifest(Path(args.out), "ingest", args, paths)
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    manifest_path = _manifest_path(args.input)
    manifest = ShardManifest.load(manifest_path)
    stats = collect_stats(iter_manifest_documents(manifest), long_threshold=args.threshold)
    edges = [int(x) for x in args.bins.split(",")] if args.bins else None
    hist = length_histogram(iter_manifest_documents(manifest), edges)
    conservation_check(stats, hist)
    if stats.total_docs == 0:
        raise ValueError("no documents")

    s_rows = stats_table(stats)
    h_rows = histogram_table(hist)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(s_rows, out / "stats.csv")
        write_csv(h_rows, out / "histogram.csv")
        render_histogram(hist, out / "histogram.png")
        _write_run_manifest(out, "stats", args, [manifest_path])
        logger.info("wrote stats for %d domains to %s", len(stats.domains), out)
    else:
        _print_csv(s_rows, sys.stdout)
    return EXIT_OK


def cmd_mix(args: argparse.Namespace) -> int:
    spec = MixtureSpec.from_file(args.spec)
    if args.seed is not None:
        spec.seed = args.seed
    manifest_path = _manifest_path(args.input)
    dataset = build_mixture(manifest_path, spec, threads=args.threads)
    out = Path(args.out)
    dataset.save(out)
    audit = verify_mixture(dataset)
    write_csv(audit.to_rows(), out / "audit.csv")
    _write_run_manifest(out, "mix", args, [manifest_path, Path(args.spec)])
    logger.info(
        "sampled %d draws / %d tokens (budget %d); audit %s",
        len(dataset.draws),
        dataset.total_tokens,
        spec.token_budget,
        "PASS" if audit.passed else "FAIL",
    )
    return EXIT_OK


def cmd_audit(args: argparse.Namespace) -> int:
    dataset = SampledDataset.load(args.dataset)
    audit = verify_mixture(dataset, share_tol=args.share_tol, long_tol=args.long_tol)
    _print_csv(audit.to_rows(), sys.stdout)
    print(f"overall_long_token_fraction,{audit.overall_long_token_fraction}")
    print(f"audit,{'PASS' if audit.passed else 'FAIL'}")
    for warning in audit.warnings:
        logger.warning("%s", warning)
    return EXIT_OK


def cmd_pack(args: argparse.Namespace) -> int:
    dataset = SampledDataset.load(args.dataset)
    corpus_path = args.corpus or dataset.corpus_manifest_path
    if not corpus_path:
        raise ValueError("dataset does not record its corpus; pass --corpus")
    manifest = ShardManifest.load(_manifest_path(corpus_path))
    if dataset.corpus_digest and manifest.content_digest != dataset.corpus_digest:
        raise ValueError("corpus content digest does not match the one the dataset was sampled from")
    token_map = load_token_map(manifest)
    cut_len = dataset.spec.effective_cut_len()

    def resolve(doc_id: str) -> list[int]:
        tokens = token_map.get(doc_id)
        if tokens is not None:
            return tokens
        if cut_len and "#" in doc_id:
            base, _, suffix = doc_id.rpartition("#")
            if suffix.isdigit() and base in token_map:
                k = int(suffix)
                return token_map[base][k * cut_len : (k + 1) * cut_len]
        raise ValueError(f"cannot resolve document {doc_id!r} in the corpus")

    if args.separator == "none":
        separator = None
    elif args.separator == "eot":
        separator = DEFAULT_SEPARATOR_ID
    else:
        separator = int(args.separator)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    packer = ChunkPacker(args.chunk_len, separator)
    with open(out / "chunks.jsonl", "w", encoding="utf-8") as fh:
        for draw in dataset.draws:
            for chunk in packer.feed(resolve(draw.doc_id), draw.doc_id, draw.repeat):
                fh.write(
                    json.dumps(
                        {
                            "chunk_index": chunk.chunk_index,
                            "tokens": chunk.tokens,
                            "provenance": [
                                [s.doc_id, s.repeat, s.start, s.end, s.src_offset]
                                for s in chunk.provenance
                            ],
                        },
                        separators=(",", ":"),
                    )
                    + "\n"
                )
    report = packer.finish()
    dump_json(
        {
            "chunk_len": args.chunk_len,
            "separator": separator,
            "n_chunks": report.n_chunks,
            "dropped_tokens": report.dropped_tokens,
            "input_tokens": report.input_tokens,
            "n_documents": report.n_documents,
        },
        out / "pack_report.json",
    )
    _write_run_manifest(out, "pack", args, [Path(corpus_path)])
    logger.info(
        "packed %d chunks of %d tokens (%d dropped)", report.n_chunks, args.chunk_len, report.dropped_tokens
    )
    return EXIT_OK


def cmd_plan(args: argparse.Namespace) -> int:
    batch = parse_batch_tokens(args.batch, decimal_m=args.decimal_m)
    plan = training_plan(int(float(args.tokens)), batch, args.profile)
    print(f"steps {plan.steps}")
    if plan.estimated_days is not None:
        print(f"estimated_days {plan.estimated_days:g}")
    return EXIT_OK


def cmd_needle_gen(args: argparse.Namespace) -> int:
    spec = NeedleSpec.from_file(args.spec) if args.spec else NeedleSpec()
    manifest_path = _manifest_path(args.filler)
    manifest = ShardManifest.load(manifest_path)
    tokenizer = get_tokenizer(args.tokenizer or manifest.tokenizer or "bytes")

    def filler_docs():
        # re-encode from text wherever possible so filler, needle, and
        # question all share the live adapter's vocabulary (the ids a
        # whitespace corpus was ingested with belong to a different instance)
        for doc in iter_manifest_documents(manifest):
            if tokenizer.name != "pretokenized" and doc.text is not None:
                yield Document(id=doc.id, domain=doc.domain, text=doc.text)
            else:
                yield doc

    cases = generate_grid(spec, filler_docs(), tokenizer, answer_reserve=args.answer_reserve)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    decode_with = None if tokenizer.name == "pretokenized" else tokenizer
    n = write_cases(cases, out / "cases.jsonl", tokenizer=decode_with)
    _write_run_manifest(out, "needle gen", args, [manifest_path])
    logger.info("generated %d cases (%d lengths x %d depths)", n, len(spec.lengths), len(spec.depths))
    return EXIT_OK


def cmd_needle_score(args: argparse.Namespace) -> int:
    cases = read_cases(Path(args.cases) / "cases.jsonl" if Path(args.cases).is_dir() else args.cases)
    responses = read_responses(args.responses)
    scored = score_cases(cases, responses)
    rows = [
        {
            "case_id": case.case_id,
            "context_len": case.context_len,
            "depth": case.depth_fraction,
            "score": score,
        }
        for case, score in scored
    ]
    write_csv(rows, args.out)
    mean = sum(r["score"] for r in rows) / len(rows)
    logger.info("scored %d cases, mean %.4f", len(rows), mean)
    return EXIT_OK


def cmd_needle_report(args: argparse.Namespace) -> int:
    triples = []
    with open(args.scores, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            triples.append((int(row["context_len"]), float(row["depth"]), float(row["score"])))
    grid = grid_from_triples(triples)
    paths = render_heatmap(
        grid,
        args.out,
        green_threshold=args.green_threshold,
        train_context_len=args.train_context,
    )
    _write_run_manifest(Path(args.out), "needle report", args, [Path(args.scores)])
    logger.info("heatmap mean %.4f -> %s, %s", grid.mean_score, paths["csv"], paths["png"])
    return EXIT_OK


def cmd_lossdiff(args: argparse.Namespace) -> int:
    baseline = read_loss_records(_manifest_path(args.baseline))
    variants = []
    for path in args.variant:
        variants.extend(read_loss_records(_manifest_path(path)))
    report = loss_diff_table(baseline, variants, threshold=args.threshold)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(report.to_rows(), out / "lossdiff.csv")
        render_lossdiff(report, out / "lossdiff.png")
        _write_run_manifest(out, "lossdiff", args, [Path(args.baseline), *map(Path, args.variant)])
        logger.info("wrote %d rows to %s", len(report.rows), out / "lossdiff.csv")
    else:
        print(report.render_text())
    return EXIT_OK


def cmd_curve(args: argparse.Namespace) -> int:
    points = scaling_curve(read_curve_points(_manifest_path(args.points)))
    rows = [
        {
            "trained_tokens": p.trained_tokens,
            "validation_loss": p.validation_loss,
            "needle_mean_score": p.needle_mean_score,
        }
        for p in points
    ]
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(rows, out / "curve.csv")
        render_curve(points, out / "curve.png")
        _write_run_manifest(out, "curve", args, [Path(args.points)])
    else:
        _print_csv(rows, sys.stdout)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(
        prog="forge",
        description="Long-context pretraining data toolkit: ingest, stats, mix, pack, plan, needle, reports.",
        formatter_class=fmt,
    )
    parser.add_argument("--seed", type=int, default=None, help="override the sampling seed")
    parser.add_argument("--threads", type=int, default=1, help="worker threads (output is identical at any count)")
    parser.add_argument("--log-level", default="info", choices=["debug", "info", "warning", "error"])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", formatter_class=fmt, help="tokenize and shard a line-delimited corpus")
    p.add_argument("--in", dest="inputs", nargs="+", required=True, metavar="GLOB")
    p.add_argument("--tokenizer", default="bytes", choices=["bytes", "whitespace", "pretokenized"])
    p.add_argument("--out", required=True)
    p.add_argument("--shard-tokens", type=int, default=50_000_000)
    p.add_argument("--gzip", action="store_true", help="gzip each shard")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("stats", formatter_class=fmt, help="length and domain distributions of a corpus")
    p.add_argument("--in", dest="input", required=True, metavar="MANIFEST")
    p.add_argument("--threshold", type=int, default=4096, help="long-document threshold (tokens)")
    p.add_argument("--bins", default=None, help="comma-separated histogram bin edges")
    p.add_argument("--out", default=None, help="write stats.csv/histogram.csv/histogram.png here")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("mix", formatter_class=fmt, help="build a sampled dataset from a mixture spec")
    p.add_argument("--spec", required=True, help="mixture spec JSON file")
    p.add_argument("--in", dest="input", required=True, metavar="MANIFEST")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("audit", formatter_class=fmt, help="re-audit a sampled dataset against its spec")
    p.add_argument("--dataset", required=True)
    p.add_argument("--share-tol", type=float, default=0.01)
    p.add_argument("--long-tol", type=float, default=0.02)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("pack", formatter_class=fmt, help="pack a sampled dataset into fixed-length chunks")
    p.add_argument("--dataset", required=True)
    p.add_argument("--corpus", default=None, help="corpus manifest (defaults to the one recorded at mix time)")
    p.add_argument("--chunk-len", type=int, default=81920)
    p.add_argument("--separator", default="eot", help="'eot', 'none', or a token id")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pack)

    p = sub.add_parser("plan", formatter_class=fmt, help="optimization steps and wallclock estimate for a token budget")
    p.add_argument("--tokens", required=True, help="training token budget (e.g. 5e9)")
    p.add_argument("--batch", default="4M", help="batch size in tokens ('4M', '4e6', 4194304)")
    p.add_argument("--decimal-m", action="store_true", help="read the M suffix as 1e6 instead of 2^20")
    p.add_argument("--profile", default=None, choices=sorted(HARDWARE_PROFILES), help="hardware throughput row")
    p.set_defaults(func=cmd_plan)

    p_needle = sub.add_parser("needle", formatter_class=fmt, help="needle-in-a-haystack grid generation, scoring, reporting")
    needle_sub = p_needle.add_subparsers(dest="needle_command", required=True)

    p = needle_sub.add_parser("gen", formatter_class=fmt, help="generate the (length x depth) case grid")
    p.add_argument("--spec", default=None, help="needle spec JSON (defaults built in)")
    p.add_argument("--filler", required=True, metavar="MANIFEST", help="filler corpus manifest")
    p.add_argument("--tokenizer", default=None, help="override the manifest's tokenizer")
    p.add_argument("--answer-reserve", type=int, default=0, help="leave room for generation inside the context")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_needle_gen)

    p = needle_sub.add_parser("score", formatter_class=fmt, help="score model transcripts against the cases")
    p.add_argument("--cases", required=True, help="case directory or cases.jsonl")
    p.add_argument("--responses", required=True, help="JSONL of {case_id, output_text}")
    p.add_argument("--out", required=True, help="scores CSV path")
    p.set_defaults(func=cmd_needle_score)

    p = needle_sub.add_parser("report", formatter_class=fmt, help="render the scored grid as a heatmap")
    p.add_argument("--scores", required=True)
    p.add_argument("--green-threshold", type=float, default=0.8)
    p.add_argument("--train-context", type=int, default=None, help="mark the training context length")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_needle_report)

    p = sub.add_parser("lossdiff", formatter_class=fmt, help="per-domain loss differences against a baseline run")
    p.add_argument("--baseline", required=True, help="CSV of run_id,domain,band,loss")
    p.add_argument("--variant", nargs="+", required=True)
    p.add_argument("--threshold", type=float, default=0.01)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_lossdiff)

    p = sub.add_parser("curve", formatter_class=fmt, help="order scaling-curve points into a plot-ready table")
    p.add_argument("--points", required=True, help="CSV of trained_tokens,validation_loss,needle_mean_score")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_curve)

    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else EXIT_USAGE
        return code
    logging.basicConfig(
        level=getattr(logging, args.log_level.upper()),
        format="%(asctime)s [%(levelname)s] %(message)s",
        datefmt="%H:%M:%S",
        stream=sys.stderr,
        force=True,
    )
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        logger.error("%s", exc)
        return EXIT_MISSING_INPUT
    except ValueError as exc:
        logger.error("%s", exc)
        return EXIT_VALIDATION
    except Exception:
        logger.exception("unexpected failure")
        return EXIT_UNEXPECTED


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
