"""
Command-line entry point: build, query, eval, gen-synthetic, serve
"""

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from loguru import logger

from src.config import hparams as hp
from src.models.query import RankedResult, TraversalParams
from src.services.corpus_service import load_corpus, resolve_links, write_corpus
from src.services.decomposition_service import QueryDecompositionService
from src.services.embedding_service import build_embedder
from src.services.evaluation_service import BenchmarkService, load_qrels, load_queries, parse_sweep, write_queries
from src.services.graph_builder_service import GraphBuilderService
from src.services.index_store import MANIFEST_FILE, load_index, save_index
from src.services.retrieval_service import RetrievalService
from src.services.synthetic_service import generate_synthetic
from src.utils.errors import ConfigError, IndexFormatError, RetrievalEngineError
from src.utils.log_setup import configure_logging


def _csv(value: str) -> List[str]:
    return [part.strip() for part in value.split(",") if part.strip()]


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="YAML config merged over the defaults")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted config override, repeatable")
    common.add_argument("--log-level", default=None, help="stderr log level (default from config)")
    common.add_argument("--jobs", type=int, default=None, help="worker threads, 0 = all cores")

    parser = argparse.ArgumentParser(prog="lcg", description="Layered component graph retrieval engine")
    sub = parser.add_subparsers(dest="command", required=True)

    build = sub.add_parser("build", parents=[common], help="build an index from a corpus file")
    build.add_argument("--corpus", default=None)
    build.add_argument("--index", default=None)
    build.add_argument("--force", action="store_true", help="overwrite an existing index")
    build.add_argument("--profile", default=None, metavar="F1,F2,...",
                       help="time builds on leading corpus fractions instead of writing an index")

    query = sub.add_parser("query", parents=[common], help="retrieve components for one query")
    query.add_argument("text")
    query.add_argument("--index", default=None)
    query.add_argument("--mode", choices=hp.RETRIEVAL_MODES, default=None)
    query.add_argument("--b", type=int, default=None)
    query.add_argument("--n-i", dest="n_i", type=int, default=None)
    query.add_argument("--n-ret", dest="n_ret", type=int, default=None)
    query.add_argument("--decomposer", choices=hp.DECOMPOSER_BACKENDS, default=None)
    query.add_argument("--explain", action="store_true", help="show the subcomponent matched per subquery")
    query.add_argument("--json", action="store_true", help="print the result as JSON")

    evaluate = sub.add_parser("eval", parents=[common], help="run a benchmark and write a report")
    evaluate.add_argument("--index", default=None)
    evaluate.add_argument("--queries", default=None)
    evaluate.add_argument("--qrels", default=None)
    evaluate.add_argument("--report", default=None)
    evaluate.add_argument("--mode", default=None, metavar="M1,M2,...", help="comma-separated retrieval modes")
    evaluate.add_argument("--sweep", default=None, metavar="NAME=V1,V2,...", help="sweep b, n_i or n_ret")
    evaluate.add_argument("--recall", choices=hp.RECALL_MODES, default=None)
    evaluate.add_argument("--k", default=None, metavar="K1,K2,...", help="metric cutoffs")
    evaluate.add_argument("--b", type=int, default=None)
    evaluate.add_argument("--n-i", dest="n_i", type=int, default=None)
    evaluate.add_argument("--n-ret", dest="n_ret", type=int, default=None)
    evaluate.add_argument("--decomposer", choices=hp.DECOMPOSER_BACKENDS, default=None)

    synth = sub.add_parser("gen-synthetic", parents=[common], help="write the synthetic multihop benchmark")
    synth.add_argument("--docs", type=int, default=None)
    synth.add_argument("--queries-count", dest="queries_count", type=int, default=None)
    synth.add_argument("--single", type=int, default=None)
    synth.add_argument("--seed", type=int, default=None)
    synth.add_argument("--corpus", default=None)
    synth.add_argument("--queries", default=None)

    serve = sub.add_parser("serve", parents=[common], help="serve the HTTP API")
    serve.add_argument("--index", default=None)
    serve.add_argument("--host", default="0.0.0.0")
    serve.add_argument("--port", type=int, default=8000)
    return parser


def _apply_flags(config: hp.EngineConfig, args: argparse.Namespace) -> hp.EngineConfig:
    """Command-line flags win over file and --set values"""
    def take(section, name, value):
        if value is not None:
            setattr(section, name, value)

    take(config, "jobs", args.jobs)
    take(config.logging, "level", args.log_level)
    take(config.paths, "index", getattr(args, "index", None))
    take(config.paths, "qrels", getattr(args, "qrels", None))
    take(config.paths, "report", getattr(args, "report", None))
    take(config.decomposer, "backend", getattr(args, "decomposer", None))
    take(config.eval, "recall", getattr(args, "recall", None))
    for name in ("b", "n_i", "n_ret"):
        take(config.retrieval, name, getattr(args, name, None))
    if args.command in ("build", "gen-synthetic"):
        take(config.paths, "corpus", args.corpus)
    if args.command == "gen-synthetic":
        take(config.paths, "queries", args.queries)
        take(config.synthetic, "docs", args.docs)
        take(config.synthetic, "queries", args.queries_count)
        take(config.synthetic, "single", args.single)
        take(config.synthetic, "seed", args.seed)
    if args.command == "eval":
        take(config.paths, "queries", args.queries)
    if args.command == "query":
        take(config.retrieval, "mode", args.mode)
    if getattr(args, "k", None):
        try:
            config.eval.k_values = [int(k) for k in _csv(args.k)]
        except ValueError:
            raise ConfigError(f"--k expects comma-separated integers, got {args.k!r}") from None
    return hp.validate_config(config)


def _params(config: hp.EngineConfig, mode: Optional[str] = None) -> TraversalParams:
    r = config.retrieval
    return TraversalParams(b=r.b, n_i=r.n_i, n_ret=r.n_ret, mode=mode or r.mode)


def cmd_build(config: hp.EngineConfig, force: bool = False, profile: Optional[str] = None) -> int:
    corpus = load_corpus(config.paths.corpus)
    builder = GraphBuilderService(build_embedder(config.embedder), config.embedder.batch_size,
                                  progress=config.logging.progress)

    if profile:
        try:
            fractions = [float(f) for f in _csv(profile)]
        except ValueError:
            raise ConfigError(f"--profile expects comma-separated fractions, got {profile!r}") from None
        print(f"{'fraction':>9}{'docs':>8}{'nodes (ms)':>12}{'edges (ms)':>12}{'embed (ms)':>12}{'total (ms)':>12}")
        for fraction, docs, report in builder.profile(corpus, fractions):
            t = report.timings
            print(f"{fraction:>9.2f}{docs:>8}{t.get('node_generation', 0.0):>12.1f}"
                  f"{t.get('edge_generation', 0.0):>12.1f}{t.get('embedding_generation', 0.0):>12.1f}"
                  f"{report.total_ms:>12.1f}")
        return 0

    index = Path(config.paths.index)
    if (index / MANIFEST_FILE).exists() and not force:
        raise IndexFormatError(f"index {index} already exists; pass --force to rebuild")

    links = resolve_links(corpus)
    graph, report = builder.build(corpus, links)
    save_index(graph, index)
    print(report.format())
    if links.dropped:
        print(f"{'dangling links dropped':<22}{links.dropped:>10}")
    return 0


def _retrieval(config: hp.EngineConfig) -> RetrievalService:
    graph = load_index(config.paths.index, config.embedder)
    decomposer = QueryDecompositionService(build_embedder(config.embedder), config.decomposer)
    return RetrievalService(graph, decomposer)


def format_result(result: RankedResult, service: RetrievalService, explain: bool = False) -> str:
    graph = service.graph
    titles = graph.manifest.titles
    lines = []
    for rank, item in enumerate(result.items, start=1):
        title = titles.get(item.comp_id.rpartition("/")[0], "")
        lines.append(f"{rank:>3}. {item.comp_id:<20} {item.score:>8.4f}  {title}")
        if explain and item.edge is not None:
            for (text, label), sub_id in zip(result.subqueries, item.edge.evidence):
                lines.append(f"       [{label}] {text!r} -> {sub_id}: {graph.node(sub_id).content}")
    if result.flags.get("fallback"):
        lines.append(f"(decomposition fell back to rules: {result.flags.get('fallback_reason')})")
    return "\n".join(lines)


def cmd_query(config: hp.EngineConfig, text: str, explain: bool = False, as_json: bool = False) -> int:
    service = _retrieval(config)
    result = service.retrieve(text, _params(config))
    if as_json:
        print(json.dumps(result.to_dict(), indent=2, sort_keys=True))
    else:
        print(format_result(result, service, explain))
    return 0


def cmd_eval(config: hp.EngineConfig, modes: Optional[str] = None, sweep: Optional[str] = None) -> int:
    service = _retrieval(config)
    queries = load_queries(config.paths.queries)
    qrels = load_qrels(config.paths.qrels) if config.paths.qrels else None
    mode_list = _csv(modes) if modes else [config.retrieval.mode]
    for mode in mode_list:
        if mode not in hp.RETRIEVAL_MODES:
            raise ConfigError(f"unknown mode {mode!r}; expected one of {list(hp.RETRIEVAL_MODES)}")

    bench = BenchmarkService(service, config.eval.k_values, config.eval.recall,
                             jobs=config.workers, progress=config.logging.progress)
    report = bench.run(queries, qrels, _params(config), mode_list, parse_sweep(sweep) if sweep else None)

    report_path = Path(config.paths.report)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(report.to_json(), encoding="utf-8")
    timings_path = report_path.with_name(report_path.name + ".timings.json")
    timings_path.write_text(report.timings_json(), encoding="utf-8")

    print(report.to_table())
    print()
    for row in report.rows:
        stages = "  ".join(f"{stage}={ms:.2f}" for stage, ms in row.timings.items())
        print(f"{row.label:<24} mean ms: {stages}")
    logger.info(f"Report written to {report_path} (timings in {timings_path})")
    return 0


def cmd_gen_synthetic(config: hp.EngineConfig) -> int:
    s = config.synthetic
    corpus, queries = generate_synthetic(s.docs, s.queries, s.single, s.seed)
    write_corpus(corpus, config.paths.corpus)
    write_queries(queries, config.paths.queries)
    print(f"wrote {len(corpus)} documents to {config.paths.corpus} and {len(queries)} queries to {config.paths.queries}")
    return 0


def cmd_serve(config: hp.EngineConfig, host: str, port: int) -> int:
    import uvicorn

    from app import app
    from src.routes import engine_manager

    engine_manager.configure(config, config.paths.index)
    uvicorn.run(app, host=host, port=port)
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    try:
        config = _apply_flags(hp.load_config(args.config, args.overrides), args)
        configure_logging(config.logging.level, config.logging.file)
        if args.command == "build":
            return cmd_build(config, args.force, args.profile)
        if args.command == "query":
            return cmd_query(config, args.text, args.explain, args.json)
        if args.command == "eval":
            return cmd_eval(config, args.mode, args.sweep)
        if args.command == "gen-synthetic":
            return cmd_gen_synthetic(config)
        return cmd_serve(config, args.host, args.port)
    except (RetrievalEngineError, FileNotFoundError, ValueError) as e:
        logger.error(f"❌ {e}")
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
