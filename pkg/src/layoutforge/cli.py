"""``layoutforge`` command line.

Exit codes: 0 success, 1 partial failure (some samples errored), 2 invalid
invocation.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import BackgroundAssets, LayoutError, load_layout, save_layout
from .ingest import TaxonomyMap, convert_dataset, load_corpus
from .metrics import METRIC_NAMES, CompositeWeights, corpus_means, evaluate_layout
from .perturb import PerturbConfig, curate_fr_dataset, mix_inputs, perturb_layout
from .principles import PrincipleThresholds, evaluate_principles
from .refine import BuiltinRefiner, RefineConfig, refine_via_backend
from .render import RenderStyle, render_comparison, render_layout, save_png

logger = logging.getLogger("layoutforge")

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2

GLOBAL_DEFAULTS = {"seed": None, "config": None, "verbose": False}


class UsageError(Exception):
    pass


# --- configuration ------------------------------------------------------------

def load_config(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file not found: {p}")
    try:
        if p.suffix == ".toml":
            if sys.version_info >= (3, 11):
                import tomllib
            else:
                import tomli as tomllib

            return tomllib.loads(p.read_text())
        return json.loads(p.read_text())
    except ValueError as exc:
        raise UsageError(f"cannot parse config {p}: {exc}") from exc


def _build(cls, **kwargs):
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid {cls.__name__} settings: {exc}") from exc


def thresholds_from(cfg: dict) -> PrincipleThresholds:
    return _build(PrincipleThresholds, **cfg.get("thresholds", {}))


def weights_from(cfg: dict) -> CompositeWeights:
    return _build(CompositeWeights, **cfg.get("weights", {}))


def refine_config_from(cfg: dict, args) -> RefineConfig:
    opts = dict(cfg.get("refine", {}))
    for name in ("iterations", "max_moves"):
        if getattr(args, name, None) is not None:
            opts[name] = getattr(args, name)
    if args.seed is not None:
        opts["seed"] = args.seed
    return _build(RefineConfig, thresholds=thresholds_from(cfg), weights=weights_from(cfg), **opts)


def perturb_config_from(cfg: dict, args) -> PerturbConfig:
    opts = dict(cfg.get("perturb", {}))
    if "scale_range" in opts:
        opts["scale_range"] = tuple(opts["scale_range"])
    if args.seed is not None:
        opts["seed"] = args.seed
    return _build(PerturbConfig, **opts)


# --- corpus helpers -------------------------------------------------------------

def _corpus(path: str) -> list:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"no such layout file or directory: {p}")
    return load_corpus(p)


def _assets_for(sample_id: str, images: str | None, saliency: str | None) -> BackgroundAssets | None:
    if not images:
        return None
    image_path = Path(images) / f"{sample_id}.png"
    if not image_path.exists():
        return None
    sal_path = Path(saliency) / f"{sample_id}.png" if saliency else None
    if sal_path is not None and not sal_path.exists():
        sal_path = None
    return BackgroundAssets.from_files(image_path, sal_path)


def _fmt(v) -> str:
    return "" if v is None else f"{v:.6f}"


# --- subcommands ----------------------------------------------------------------

def cmd_evaluate(args, cfg) -> int:
    weights = weights_from(cfg)
    tol = thresholds_from(cfg).contain_tol
    rows, vectors, failures = [], [], 0
    for sample_id, layout in _corpus(args.layouts):
        try:
            assets = _assets_for(sample_id, args.images, args.saliency)
            m = evaluate_layout(layout, assets, weights, tol)
        except (LayoutError, OSError) as exc:
            logger.error("%s: %s", sample_id, exc)
            failures += 1
            continue
        vectors.append(m)
        rows.append([sample_id, len(layout), *(_fmt(getattr(m, c)) for c in METRIC_NAMES),
                     _fmt(m.composite)])
    means, skipped = corpus_means(vectors)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "k", *METRIC_NAMES, "composite"])
        w.writerows(rows)
        mean_k = np.mean([int(r[1]) for r in rows]) if rows else None
        w.writerow(["mean", _fmt(mean_k), *(_fmt(means[c]) for c in METRIC_NAMES),
                    _fmt(means["composite"])])
    for name, n in skipped.items():
        if n:
            logger.info("%s undefined for %d sample(s); excluded from the mean", name, n)
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_principles(args, cfg) -> int:
    th = thresholds_from(cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    failures = 0
    with out.open("w") as fh:
        for sample_id, layout in _corpus(args.layouts):
            try:
                assets = _assets_for(sample_id, args.images, args.saliency)
                report = evaluate_principles(layout, assets, th)
            except (LayoutError, OSError) as exc:
                logger.error("%s: %s", sample_id, exc)
                failures += 1
                continue
            d = report.to_dict()
            fh.write(json.dumps({"id": sample_id, "verdicts": d["verdicts"], "text": d["text"],
                                 "thresholds": d["thresholds"]}, sort_keys=True) + "\n")
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_perturb(args, cfg) -> int:
    pcfg = perturb_config_from(cfg, args)
    rng = np.random.default_rng(pcfg.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    failures = 0
    for sample_id, layout in _corpus(args.layouts):
        try:
            save_layout(perturb_layout(layout, pcfg, rng), out / f"{sample_id}.json")
        except LayoutError as exc:
            logger.error("%s: %s", sample_id, exc)
            failures += 1
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_curate(args, cfg) -> int:
    if not 0.0 <= args.epsilon <= 1.0:
        raise UsageError(f"--epsilon must lie in [0, 1], got {args.epsilon}")
    pcfg = perturb_config_from(cfg, args)
    th = thresholds_from(cfg)
    gts = dict(_corpus(args.gt))
    ce = dict(load_corpus(args.ce)) if args.ce else {}
    assets = {}
    if args.images:
        for sample_id in gts:
            a = _assets_for(sample_id, args.images, args.saliency)
            if a is not None:
                assets[sample_id] = a
    records = mix_inputs(ce, gts, args.epsilon, pcfg, np.random.default_rng(pcfg.seed), assets, th)
    manifest = curate_fr_dataset(records, args.out, assets, th, args.prune_gt,
                                 run_info={"seed": pcfg.seed, "epsilon": args.epsilon,
                                           "perturb": pcfg.to_dict()})
    logger.info("kept %d of %d records", manifest["kept"], manifest["total"])
    return EXIT_OK


def _make_backend(args):
    if args.backend == "builtin":
        return lambda: BuiltinRefiner()
    from .llm_bridge import ChatClient, EndpointConfig, LLMRefiner, PromptTemplate

    endpoint = EndpointConfig.from_env(trace=args.trace_llm)
    if not endpoint.base_url:
        raise UsageError("--backend llm needs LAYOUTFORGE_LLM_BASE_URL")
    template = PromptTemplate.load(args.template) if args.template else PromptTemplate.load("refine")
    return lambda: LLMRefiner(ChatClient(endpoint), template)


def cmd_refine(args, cfg) -> int:
    rcfg = refine_config_from(cfg, args)
    backend_factory = _make_backend(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace_fh = open(args.trace, "w") if args.trace else None
    failures = 0
    corpus = _corpus(args.layouts)
    try:
        for sample_id, layout in corpus:
            try:
                assets = _assets_for(sample_id, args.images, args.saliency)
                refined, trace = refine_via_backend(layout, assets, backend_factory(), rcfg)
            except Exception as exc:  # noqa: BLE001 - keep going, report per sample
                logger.error("%s: %s", sample_id, exc)
                failures += 1
                continue
            save_layout(refined, out / f"{sample_id}.json")
            if trace_fh:
                trace_fh.write(json.dumps({"id": sample_id, **trace.to_dict()}, sort_keys=True) + "\n")
    finally:
        if trace_fh:
            trace_fh.close()
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_render(args, cfg) -> int:
    style = _build(RenderStyle, **cfg.get("render", {}))
    layout = load_layout(args.layout)
    assets = BackgroundAssets.from_files(args.image)
    if args.after:
        image = render_comparison(assets, layout, load_layout(args.after), style)
    else:
        image = render_layout(assets, layout, style)
    save_png(image, args.out)
    return EXIT_OK


def cmd_ingest(args, cfg) -> int:
    taxmap = TaxonomyMap.load(args.taxonomy)
    adapter = json.loads(Path(args.adapter).read_text()) if args.adapter else None
    manifest = convert_dataset(args.in_dir, args.out, args.format, taxmap, adapter)
    logger.info("converted %d, skipped %d, errors %d", manifest["count"],
                len(manifest["skipped"]), len(manifest["errors"]))
    return EXIT_PARTIAL if manifest["errors"] else EXIT_OK


def cmd_benchmark(args, cfg) -> int:
    from .benchmark import benchmark
    from .llm_bridge import PromptTemplate

    rcfg = refine_config_from(cfg, args)
    corpus = _corpus(args.layouts)
    if not corpus:
        raise UsageError("empty corpus")
    rng = np.random.default_rng(rcfg.seed)
    pcfg = perturb_config_from(cfg, args)
    samples = []
    for sample_id, layout in corpus:
        if args.perturb and len(layout):
            layout = perturb_layout(layout, pcfg, rng)
        samples.append((sample_id, layout, _assets_for(sample_id, args.images, args.saliency)))
    templates = {n: PromptTemplate.load(n).hash for n in ("estimate", "refine")}
    manifest = benchmark(
        samples, args.out, rcfg, args.sweep, args.threshold,
        renders=args.renders, emit_gnuplot=args.emit_gnuplot, workers=args.workers,
        extra_manifest={"template_hashes": templates, "perturbed": bool(args.perturb),
                        "perturb": pcfg.to_dict() if args.perturb else None,
                        "inputs": {"layouts": args.layouts, "images": args.images,
                                   "saliency": args.saliency}},
    )
    return EXIT_PARTIAL if manifest["error_rate"] > 0.1 else EXIT_OK


# --- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    # SUPPRESS lets these appear before or after the subcommand without the
    # subparser's defaults clobbering a value given at the top level
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="RNG seed")
    common.add_argument("--config", default=argparse.SUPPRESS,
                        help="TOML or JSON file with thresholds/weights/refine/perturb/render sections")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="layoutforge", parents=[common],
                                     description="Layout evaluation and iterative refinement.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=func)
        return p

    def content(p):
        p.add_argument("--images", help="directory of <id>.png backgrounds")
        p.add_argument("--saliency", help="directory of <id>.png saliency maps")

    p = add("evaluate", cmd_evaluate, "score layouts with the rule-based metrics")
    p.add_argument("--layouts", required=True)
    content(p)
    p.add_argument("--out", required=True)

    p = add("principles", cmd_principles, "write design-principle reports as JSONL")
    p.add_argument("--layouts", required=True)
    content(p)
    p.add_argument("--out", required=True)

    p = add("perturb", cmd_perturb, "perturb one element of every layout")
    p.add_argument("--layouts", required=True)
    p.add_argument("--out", required=True)

    p = add("curate", cmd_curate, "build a refinement training set")
    p.add_argument("--gt", required=True)
    p.add_argument("--ce", help="directory of coarse model outputs keyed by id")
    p.add_argument("--epsilon", type=float, default=0.5)
    p.add_argument("--prune-gt", action="store_true")
    content(p)
    p.add_argument("--out", required=True)

    p = add("refine", cmd_refine, "refine layouts")
    p.add_argument("--layouts", required=True)
    content(p)
    p.add_argument("--backend", choices=["builtin", "llm"], default="builtin")
    p.add_argument("--iterations", type=int)
    p.add_argument("--max-moves", type=int)
    p.add_argument("--template", help="refinement prompt template file (llm backend)")
    p.add_argument("--trace", help="JSONL file for refinement traces")
    p.add_argument("--trace-llm", action="store_true", help="log endpoint request/response bodies")
    p.add_argument("--out", required=True)

    p = add("render", cmd_render, "draw a layout (or a before/after pair) on its background")
    p.add_argument("--layout", required=True)
    p.add_argument("--after", help="second layout for a side-by-side comparison")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)

    p = add("ingest", cmd_ingest, "convert raw annotations to canonical layouts")
    p.add_argument("--format", choices=["box_list", "crello_like"], required=True)
    p.add_argument("--taxonomy", required=True)
    p.add_argument("--adapter", help="JSON overrides for the format's field names")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)

    p = add("benchmark", cmd_benchmark, "metrics per refinement round, split by difficulty")
    p.add_argument("--layouts", required=True)
    content(p)
    p.add_argument("--iterations", dest="sweep", type=int, nargs="+", default=[0, 1, 2, 3],
                   help="refinement rounds to report")
    p.add_argument("--threshold", type=int, default=8)
    p.add_argument("--max-moves", type=int)
    p.add_argument("--perturb", action="store_true", help="perturb each layout before refining")
    p.add_argument("--renders", action="store_true")
    p.add_argument("--emit-gnuplot", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name, default in GLOBAL_DEFAULTS.items():
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except UsageError as exc:
        parser.error(str(exc))  # exits with status 2


if __name__ == "__main__":
    sys.exit(main())
