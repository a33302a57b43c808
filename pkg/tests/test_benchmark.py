import csv

import numpy as np
import pytest

from layoutforge.benchmark import benchmark, run_sweep
from layoutforge.core import BackgroundAssets, make_layout
from layoutforge.perturb import PerturbConfig, perturb_layout
from layoutforge.refine import RefineConfig, refine
from layoutforge.synth import make_corpus


@pytest.fixture(scope="module")
def samples():
    return make_corpus(12, seed=5)


def rows(path):
    return list(csv.DictReader(path.open()))


def test_clean_corpus_fixed_rows(samples, tmp_path):
    benchmark([(s.sample_id, s.layout, s.assets) for s in samples], tmp_path)
    table = rows(tmp_path / "iterations.csv")
    assert len(table) == 4
    first = {k: v for k, v in table[0].items() if k != "iteration"}
    assert all({k: v for k, v in r.items() if k != "iteration"} == first for r in table)


def test_perturbed_und_s_non_decreasing(samples, tmp_path):
    rng = np.random.default_rng(0)
    data = [(s.sample_id, perturb_layout(s.layout, PerturbConfig(), rng), s.assets) for s in samples]
    m = benchmark(data, tmp_path)
    und = [float(r["und_s"]) for r in rows(tmp_path / "iterations.csv")]
    assert all(b >= a for a, b in zip(und, und[1:]))
    assert m["error_rate"] == 0.0
    splits = rows(tmp_path / "splits.csv")
    assert {r["split"] for r in splits} <= {"k<=8", "k>8"}


def test_round_states_match_separate_runs(samples):
    rng = np.random.default_rng(1)
    s = samples[0]
    bad = perturb_layout(s.layout, PerturbConfig(), rng)
    [res] = run_sweep([(s.sample_id, bad, s.assets)], RefineConfig(), 3)
    for it in range(4):
        _, trace = refine(bad, s.assets, RefineConfig(iterations=it))
        assert trace.rounds[-1].metrics == res.rounds[it]


def test_errors_recorded(tmp_path):
    good = make_layout([("text", 0.1, 0.1, 0.2, 0.2)] * 2)
    wrong = BackgroundAssets(np.zeros((5, 5, 3), np.uint8))
    m = benchmark([("a", good, None), ("b", good, wrong)], tmp_path, iterations=(0, 1))
    assert m["n_errors"] == 1 and m["error_rate"] == 0.5
    assert "asset dimensions mismatch" in m["errors"][0]["error"]
    per = rows(tmp_path / "per_sample.csv")
    assert [r["id"] for r in per] == ["a", "a", "b"]


def test_empty_corpus(tmp_path):
    with pytest.raises(ValueError, match="empty corpus"):
        benchmark([], tmp_path)


def test_workers_match_serial(samples, tmp_path):
    data = [(s.sample_id, s.layout, s.assets) for s in samples[:4]]
    benchmark(data, tmp_path / "a", iterations=(0, 1))
    benchmark(data, tmp_path / "b", iterations=(0, 1), workers=2)
    assert (tmp_path / "a" / "per_sample.csv").read_text() == (tmp_path / "b" / "per_sample.csv").read_text()


def test_rerun_reproduces_outputs(samples, tmp_path):
    rng = np.random.default_rng(3)
    data = [(s.sample_id, perturb_layout(s.layout, PerturbConfig(), rng), s.assets) for s in samples]
    m1 = benchmark(data, tmp_path / "a", emit_gnuplot=True)
    benchmark(data, tmp_path / "b", emit_gnuplot=True)
    for name in m1["outputs"]:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert set(m1["outputs"]) == {"iterations.csv", "splits.csv", "per_sample.csv", "iterations.dat"}
