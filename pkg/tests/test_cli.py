import json

from forge.cli import EXIT_MISSING_INPUT, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, run
from forge.corpus_io import write_shards

from conftest import mini_text_corpus, write_corpus_jsonl


def ingest(tmp_path, docs, name="corpus"):
    raw = write_corpus_jsonl(docs, tmp_path / f"{name}.jsonl")
    out = tmp_path / f"{name}_shards"
    assert run(["ingest", "--in", str(raw), "--tokenizer", "bytes", "--out", str(out)]) == EXIT_OK
    return out / "manifest.json"


def mixspec_file(tmp_path, **overrides):
    spec = {
        "strategy": "per_source_upsample",
        "token_budget": 60_000,
        "seed": 1234,
        "long_threshold": 4096,
        "target_long_fraction": 0.7,
    }
    spec.update(overrides)
    path = tmp_path / "mixspec.json"
    path.write_text(json.dumps(spec))
    return path


def test_plan_prints_steps_and_days(capsys):
    assert run(["plan", "--tokens", "5e9", "--batch", "4M", "--profile", "7b-80k-8xA100"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "steps 1192" in out
    assert "estimated_days 5" in out


def test_plan_decimal_batch(capsys):
    assert run(["plan", "--tokens", "1e10", "--batch", "4e6"]) == EXIT_OK
    assert "steps 2500" in capsys.readouterr().out


def test_unknown_flag_is_usage_error():
    assert run(["plan", "--tokens", "5e9", "--frobnicate"]) == EXIT_USAGE


def test_unknown_subcommand_is_usage_error():
    assert run(["transmogrify"]) == EXIT_USAGE


def test_missing_input_exit_code(tmp_path):
    assert run(["stats", "--in", str(tmp_path / "nope.json")]) == EXIT_MISSING_INPUT


def test_stats_empty_manifest_no_documents(tmp_path, capsys):
    out_dir = tmp_path / "empty"
    write_shards([], 1000, out_dir)
    code = run(["stats", "--in", str(out_dir / "manifest.json")])
    assert code == EXIT_VALIDATION


def test_ingest_stats_pipeline(tmp_path, capsys):
    manifest = ingest(tmp_path, mini_text_corpus())
    assert run(["stats", "--in", str(manifest)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "web" in out and "book" in out
    stats_dir = tmp_path / "stats_out"
    assert run(["stats", "--in", str(manifest), "--out", str(stats_dir)]) == EXIT_OK
    assert (stats_dir / "stats.csv").exists()
    assert (stats_dir / "histogram.csv").exists()
    assert (stats_dir / "histogram.png").exists()
    assert (stats_dir / "run_manifest.json").exists()


def test_stats_custom_bins(tmp_path, capsys):
    manifest = ingest(tmp_path, mini_text_corpus())
    out = tmp_path / "binned"
    assert run(["stats", "--in", str(manifest), "--bins", "0,1000,4096", "--out", str(out)]) == EXIT_OK
    header, *rows = (out / "histogram.csv").read_text().strip().splitlines()
    assert header == "domain,bin_low,bin_high,doc_count,token_mass"
    lows = {row.split(",")[1] for row in rows}
    assert lows == {"0", "1000", "4096"}


def test_mix_writes_dataset_and_audit(tmp_path):
    manifest = ingest(tmp_path, mini_text_corpus())
    spec = mixspec_file(tmp_path)
    out = tmp_path / "mixed"
    assert run(["mix", "--spec", str(spec), "--in", str(manifest), "--out", str(out)]) == EXIT_OK
    assert (out / "draws.jsonl").exists()
    assert (out / "dataset.json").exists()
    assert (out / "audit.csv").exists()
    assert (out / "run_manifest.json").exists()


def test_mix_twice_byte_identical(tmp_path):
    manifest = ingest(tmp_path, mini_text_corpus())
    spec = mixspec_file(tmp_path)
    out1, out2 = tmp_path / "m1", tmp_path / "m2"
    assert run(["mix", "--spec", str(spec), "--in", str(manifest), "--out", str(out1)]) == EXIT_OK
    assert run(["mix", "--spec", str(spec), "--in", str(manifest), "--out", str(out2)]) == EXIT_OK
    assert (out1 / "draws.jsonl").read_bytes() == (out2 / "draws.jsonl").read_bytes()
    assert (out1 / "dataset.json").read_bytes() == (out2 / "dataset.json").read_bytes()


def test_audit_command(tmp_path, capsys):
    manifest = ingest(tmp_path, mini_text_corpus())
    spec = mixspec_file(tmp_path)
    out = tmp_path / "mixed"
    run(["mix", "--spec", str(spec), "--in", str(manifest), "--out", str(out)])
    assert run(["audit", "--dataset", str(out)]) == EXIT_OK
    printed = capsys.readouterr().out
    assert "realized_share" in printed
    assert "audit," in printed


def test_pack_pipeline_conservation(tmp_path):
    manifest = ingest(tmp_path, mini_text_corpus())
    spec = mixspec_file(tmp_path)
    mixed = tmp_path / "mixed"
    run(["mix", "--spec", str(spec), "--in", str(manifest), "--out", str(mixed)])
    packed = tmp_path / "packed"
    assert run(["pack", "--dataset", str(mixed), "--chunk-len", "2048", "--out", str(packed)]) == EXIT_OK
    report = json.loads((packed / "pack_report.json").read_text())
    assert report["n_chunks"] * 2048 + report["dropped_tokens"] == report["input_tokens"]
    n_lines = sum(1 for _ in open(packed / "chunks.jsonl"))
    assert n_lines == report["n_chunks"]
    first = json.loads(next(iter(open(packed / "chunks.jsonl"))))
    assert len(first["tokens"]) == 2048


def test_pack_cut_strategy_resolves_chunk_ids(tmp_path):
    manifest = ingest(tmp_path, mini_text_corpus(), name="cutcorpus")
    spec = mixspec_file(tmp_path, strategy="cut_4k", token_budget=30_000)
    mixed = tmp_path / "cutmix"
    assert run(["mix", "--spec", str(spec), "--in", str(manifest), "--out", str(mixed)]) == EXIT_OK
    packed = tmp_path / "cutpacked"
    assert run(["pack", "--dataset", str(mixed), "--chunk-len", "1024", "--out", str(packed)]) == EXIT_OK


def test_needle_gen_score_report_end_to_end(tmp_path, capsys):
    filler = ingest(tmp_path, mini_text_corpus(), name="filler")
    spec_path = tmp_path / "needlespec.json"
    spec_path.write_text(json.dumps({"lengths": [512, 1024], "depths": [0.0, 0.5, 1.0]}))
    gen_dir = tmp_path / "cases"
    assert (
        run(["needle", "gen", "--spec", str(spec_path), "--filler", str(filler), "--out", str(gen_dir)])
        == EXIT_OK
    )
    cases = [json.loads(line) for line in open(gen_dir / "cases.jsonl")]
    assert len(cases) == 6

    responses = tmp_path / "responses.jsonl"
    with open(responses, "w") as fh:
        for case in cases:
            fh.write(json.dumps({"case_id": case["case_id"], "output_text": case["expected_answer"]}) + "\n")
    scores_csv = tmp_path / "scores.csv"
    assert (
        run(["needle", "score", "--cases", str(gen_dir), "--responses", str(responses), "--out", str(scores_csv)])
        == EXIT_OK
    )
    report_dir = tmp_path / "needle_report"
    assert run(["needle", "report", "--scores", str(scores_csv), "--out", str(report_dir)]) == EXIT_OK
    assert (report_dir / "heatmap.csv").exists()
    assert (report_dir / "heatmap.png").exists()


def test_needle_gen_whitespace_corpus_consistent_vocab(tmp_path):
    """Needle and filler must share one whitespace vocabulary: the decoded
    prompt has to contain the needle sentence verbatim."""
    raw = write_corpus_jsonl(mini_text_corpus(), tmp_path / "ws.jsonl")
    shards = tmp_path / "ws_shards"
    assert run(["ingest", "--in", str(raw), "--tokenizer", "whitespace", "--out", str(shards)]) == EXIT_OK
    spec_path = tmp_path / "nspec.json"
    spec_path.write_text(json.dumps({"lengths": [256], "depths": [0.0, 0.5]}))
    out = tmp_path / "ws_cases"
    assert run(["needle", "gen", "--spec", str(spec_path), "--filler", str(shards / "manifest.json"), "--out", str(out)]) == EXIT_OK
    from forge.needle import DEFAULT_NEEDLE

    for line in open(out / "cases.jsonl"):
        case = json.loads(line)
        assert case["prompt_text"].count(DEFAULT_NEEDLE) == 1


def test_lossdiff_cli(tmp_path, capsys):
    base = tmp_path / "base.csv"
    base.write_text("run_id,domain,band,loss\norig,Book,short,2.085\norig,C4,short,2.038\n")
    var = tmp_path / "var.csv"
    var.write_text("run_id,domain,band,loss\nper_source,Book,short,2.020\nper_source,C4,short,2.040\n")
    assert run(["lossdiff", "--baseline", str(base), "--variant", str(var)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "improvement" in out
    out_dir = tmp_path / "ld"
    assert run(["lossdiff", "--baseline", str(base), "--variant", str(var), "--out", str(out_dir)]) == EXIT_OK
    assert (out_dir / "lossdiff.csv").exists()


def test_curve_cli(tmp_path, capsys):
    points = tmp_path / "points.csv"
    points.write_text(
        "trained_tokens,validation_loss,needle_mean_score\n"
        "5e9,1.9,0.88\n1e8,2.4,0.2\n1e9,2.0,0.8\n"
    )
    assert run(["curve", "--points", str(points)]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    tokens = [int(line.split(",")[0]) for line in lines[1:]]
    assert tokens == sorted(tokens)


def test_run_manifest_records_digests(tmp_path):
    manifest = ingest(tmp_path, mini_text_corpus())
    spec = mixspec_file(tmp_path)
    out = tmp_path / "mixed"
    run(["mix", "--spec", str(spec), "--in", str(manifest), "--out", str(out)])
    recorded = json.loads((out / "run_manifest.json").read_text())
    assert recorded["command"] == "mix"
    assert str(manifest) in recorded["input_digests"]
    assert all(len(v) == 64 for v in recorded["input_digests"].values())


def test_seed_override_changes_output(tmp_path):
    manifest = ingest(tmp_path, mini_text_corpus())
    spec = mixspec_file(tmp_path)
    out1, out2 = tmp_path / "s1", tmp_path / "s2"
    run(["--seed", "1", "mix", "--spec", str(spec), "--in", str(manifest), "--out", str(out1)])
    run(["--seed", "2", "mix", "--spec", str(spec), "--in", str(manifest), "--out", str(out2)])
    assert (out1 / "draws.jsonl").read_bytes() != (out2 / "draws.jsonl").read_bytes()
