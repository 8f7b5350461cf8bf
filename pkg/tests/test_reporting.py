"""Table renderers, per-model study summaries, and the SVG bar chart."""

import csv
import json

import pytest

from kgembed.hpo import TrialRecord
from kgembed.reporting import (
    HPO_SUMMARY_HEADER,
    RUN_REPORT_HEADER,
    best_per_model,
    load_run_result,
    render_csv,
    render_markdown,
    render_svg_bars,
    run_row,
    summarize_runs,
    write_report,
)


def fake_result(model="distmult", loss="mrl", dataset="alpha", seed=0,
                hits=0.5):
    return {
        "config": {
            "dataset": {"train": f"/data/{dataset}/train.txt"},
            "model": {"kind": model},
            "training": {"approach": "slcwa", "loss": {"kind": loss}},
            "inverse_relations": False,
            "seed": seed,
        },
        "metrics": {"filtered": {"both": {"realistic": {
            "mr": 3.25, "mrr": 0.61, "amr": 0.4,
            "hits_at_1": 0.25, "hits_at_3": 0.5, "hits_at_5": 0.75,
            "hits_at_10": hits, "count": 8,
        }}}},
        "training": {"best_epoch": 40, "epochs_run": 55},
        "timing": {"train_seconds": 12.5},
    }


def test_run_row_flattens_the_filtered_realistic_block():
    row = run_row(fake_result())
    assert row["model"] == "distmult"
    assert row["loss"] == "mrl"
    assert row["dataset"] == "alpha"
    assert row["hits_at_10"] == 0.5
    assert row["mr"] == 3.25
    assert row["best_epoch"] == 40
    assert row["train_seconds"] == 12.5


def test_summarize_runs_orders_by_quadruple_and_notes_datasets():
    results = [
        fake_result(model="transe", dataset="beta"),
        fake_result(model="distmult", loss="nssal"),
        fake_result(model="distmult", loss="bcel"),
    ]
    rows, notes = summarize_runs(results)
    assert [(r["model"], r["loss"]) for r in rows] == [
        ("distmult", "bcel"), ("distmult", "nssal"), ("transe", "mrl")]
    assert notes == ["results span multiple datasets: alpha, beta"]
    _, no_notes = summarize_runs(results[1:])
    assert no_notes == []


def test_render_csv_formatting():
    rows = [{"model": "transe", "inverse": True, "mrr": 0.123456789,
             "margin": None}]
    text = render_csv(rows, ["model", "inverse", "mrr", "margin"])
    lines = text.splitlines()
    assert lines[0] == "model,inverse,mrr,margin"
    assert lines[1] == "transe,yes,0.123457,"  # bools as yes/no, floats %.6g


def test_render_markdown_shape():
    rows = [{"a": 1, "b": False}]
    text = render_markdown(rows, ["a", "b"], notes=["watch out"])
    lines = text.splitlines()
    assert lines[0] == "note: watch out"
    assert lines[1] == ""
    assert lines[2] == "| a | b |"
    assert set(lines[3]) <= {"|", "-", " "}
    assert lines[4] == "| 1 | no |"


def make_record(trial_id, model, metric):
    cfg = {"model": model, "approach": "slcwa", "loss": "mrl", "inverse": False,
           "embedding_dim": 64, "optimizer": "adam", "learning_rate": 0.01,
           "batch_size": 128, "num_negatives": 16, "margin": 1.5,
           "adversarial_temperature": None, "label_smoothing": 0.0,
           "sampler": "uniform", "num_epochs": 100}
    return TrialRecord(trial_id, cfg, 0, "completed", metric, 10, 20, 1.0)


def test_best_per_model_keeps_the_top_trial_per_kind():
    records = [
        make_record(0, "transe", 0.4),
        make_record(1, "distmult", 0.7),
        make_record(2, "transe", 0.6),
        make_record(3, "distmult", None),  # unscored trials never win
    ]
    records[3] = TrialRecord(3, records[3].config, 0, "failed", None, 0, 0, 0.1)
    rows = best_per_model(records)
    assert [(r["model"], r["trial_id"]) for r in rows] == [
        ("distmult", 1), ("transe", 2)]
    assert set(rows[0]) == set(HPO_SUMMARY_HEADER)


def test_best_per_model_breaks_ties_toward_the_earlier_trial():
    records = [make_record(0, "transe", 0.5), make_record(1, "transe", 0.5)]
    assert best_per_model(records)[0]["trial_id"] == 0
    assert best_per_model(records[::-1])[0]["trial_id"] == 0


def test_svg_bars_shape_and_escaping():
    svg = render_svg_bars(["a<b", "plain"], [0.5, 1.0], title="t&d",
                          max_value=1.0)
    assert svg.startswith("<svg ")
    assert svg.rstrip().endswith("</svg>")
    assert "a&lt;b" in svg and "t&amp;d" in svg
    assert svg.count("<rect") == 3  # background plus one bar per value
    with pytest.raises(ValueError):
        render_svg_bars([], [])
    with pytest.raises(ValueError):
        render_svg_bars(["a"], [0.1, 0.2])


def test_svg_bars_clamp_negative_and_overflow_values():
    svg = render_svg_bars(["low", "high"], [-0.5, 2.0], max_value=1.0)
    assert 'width="0.0"' in svg  # negative values draw an empty bar


def test_write_report_artifacts(tmp_path):
    results = [fake_result(), fake_result(model="transe", hits=0.75)]
    written, rows, notes = write_report(results, str(tmp_path), svg=True)
    assert set(written) == {"csv", "markdown", "svg"}
    with open(written["csv"], newline="") as f:
        got = list(csv.reader(f))
    assert got[0] == RUN_REPORT_HEADER
    assert len(got) == 3
    md = open(written["markdown"]).read()
    assert md.startswith("| " + " | ".join(RUN_REPORT_HEADER))
    assert open(written["svg"]).read().startswith("<svg ")

    only_csv, _, _ = write_report(results, str(tmp_path / "c"), formats=("csv",))
    assert set(only_csv) == {"csv"}


def test_load_run_result_validates_shape(tmp_path):
    good = tmp_path / "ok.json"
    good.write_text(json.dumps(fake_result()))
    assert load_run_result(str(good))["config"]["seed"] == 0
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    with pytest.raises(ValueError, match="missing required sections"):
        load_run_result(str(bad))
    bad.write_text("[1]")
    with pytest.raises(ValueError, match="expected a JSON object"):
        load_run_result(str(bad))
    with pytest.raises(FileNotFoundError):
        load_run_result(str(tmp_path / "absent.json"))
