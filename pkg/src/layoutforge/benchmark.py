"""Iteration sweep over a corpus: mean metrics per refinement round, split by difficulty."""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import BackgroundAssets, Layout
from .ingest import split_by_difficulty
from .metrics import METRIC_NAMES, MetricVector, corpus_means
from .refine import RefineConfig, refine
from .render import render_comparison, save_png

logger = logging.getLogger(__name__)

COLUMNS = METRIC_NAMES + ("composite",)


@dataclass
class SampleResult:
    sample_id: str
    k: int
    rounds: list[MetricVector] | None = None
    passed: list[bool] | None = None
    final: Layout | None = None
    error: str | None = None


def _run_one(args) -> SampleResult:
    sample_id, layout, assets, cfg = args
    try:
        _, trace = refine(layout, assets, cfg)
    except Exception as exc:  # noqa: BLE001 - per-sample failures are reported, not fatal
        return SampleResult(sample_id, len(layout), error=f"{type(exc).__name__}: {exc}")
    return SampleResult(
        sample_id, len(layout),
        rounds=[s.metrics for s in trace.rounds],
        passed=[s.report.passed for s in trace.rounds],
        final=trace.rounds[-1].layout if len(trace.rounds) > 1 else layout,
    )


def run_sweep(samples: Sequence[tuple[str, Layout, BackgroundAssets | None]],
              cfg: RefineConfig, max_iterations: int, workers: int = 1) -> list[SampleResult]:
    """Refine each sample once for ``max_iterations`` rounds and keep every round's state.

    The round-``i`` state equals a separate run with ``iterations=i`` because
    the driver is deterministic and rounds only ever extend the same search.
    """
    run_cfg = replace(cfg, iterations=max_iterations)
    jobs = [(sid, lay, assets, run_cfg) for sid, lay, assets in samples]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs, chunksize=8))
    else:
        results = [_run_one(j) for j in jobs]
    return sorted(results, key=lambda r: r.sample_id)


def _fmt(v) -> str:
    return "" if v is None else f"{v:.6f}"


def summarize(results: Sequence[SampleResult], iterations: Sequence[int]) -> list[dict]:
    rows = []
    ok = [r for r in results if r.error is None]
    for it in iterations:
        means, skipped = corpus_means([r.rounds[it] for r in ok])
        rows.append({
            "iteration": it,
            "n": len(ok),
            **means,
            "all_pass_rate": float(np.mean([r.passed[it] for r in ok])) if ok else None,
            "skipped": skipped,
        })
    return rows


def benchmark(samples: Sequence[tuple[str, Layout, BackgroundAssets | None]], out_dir: str | Path,
              cfg: RefineConfig = RefineConfig(), iterations: Sequence[int] = (0, 1, 2, 3),
              threshold: int = 8, renders: bool = False, emit_gnuplot: bool = False,
              workers: int = 1, extra_manifest: dict | None = None) -> dict:
    """Write ``iterations.csv``, ``splits.csv``, ``per_sample.csv`` and ``manifest.json``.

    Returns the manifest. Sample failures are recorded and the run goes on;
    ``manifest["error_rate"]`` lets the caller decide whether to fail.
    """
    if not samples:
        raise ValueError("empty corpus")
    iterations = sorted(set(int(i) for i in iterations))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = run_sweep(samples, cfg, max(iterations), workers)
    errors = [{"id": r.sample_id, "error": r.error} for r in results if r.error]
    outputs = []

    header = ["iteration", "n", *COLUMNS, "all_pass_rate"]
    path = out_dir / "iterations.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in summarize(results, iterations):
            w.writerow([row["iteration"], row["n"], *(_fmt(row[c]) for c in COLUMNS),
                        _fmt(row["all_pass_rate"])])
    outputs.append(path.name)

    easy, hard = split_by_difficulty([r for r in results if r.error is None], threshold,
                                     size=lambda r: r.k)
    path = out_dir / "splits.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["split", *header])
        for name, part in ((f"k<={threshold}", easy), (f"k>{threshold}", hard)):
            for row in summarize(part, iterations):
                w.writerow([name, row["iteration"], row["n"], *(_fmt(row[c]) for c in COLUMNS),
                            _fmt(row["all_pass_rate"])])
    outputs.append(path.name)

    path = out_dir / "per_sample.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "k", "iteration", *COLUMNS, "all_pass", "error"])
        for r in results:
            if r.error:
                w.writerow([r.sample_id, r.k, "", *[""] * len(COLUMNS), "", r.error])
                continue
            for it in iterations:
                m = r.rounds[it]
                w.writerow([r.sample_id, r.k, it, *(_fmt(getattr(m, c)) for c in COLUMNS),
                            int(r.passed[it]), ""])
    outputs.append(path.name)

    if emit_gnuplot:
        path = out_dir / "iterations.dat"
        lines = ["# " + " ".join(["iteration", *COLUMNS])]
        for row in summarize(results, iterations):
            lines.append(" ".join([str(row["iteration"])] + [
                "nan" if row[c] is None else f"{row[c]:.6f}" for c in COLUMNS]))
        path.write_text("\n".join(lines) + "\n")
        outputs.append(path.name)

    if renders:
        by_id = {sid: (lay, assets) for sid, lay, assets in samples}
        for r in results:
            lay, assets = by_id[r.sample_id]
            if r.error or assets is None:
                continue
            name = f"renders/{r.sample_id}.png"
            save_png(render_comparison(assets, lay, r.final), out_dir / name)
            outputs.append(name)

    manifest = {
        "n_samples": len(samples),
        "n_errors": len(errors),
        "error_rate": len(errors) / len(samples),
        "errors": errors,
        "iterations": iterations,
        "difficulty_threshold": threshold,
        "refine": cfg.to_dict(),
        "outputs": outputs,
        **(extra_manifest or {}),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
