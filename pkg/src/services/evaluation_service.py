"""
Evaluation Service
Retrieval metrics, decomposition accuracy and batch benchmark runs
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple, Union

import numpy as np
from loguru import logger
from tqdm import tqdm

from src.models.graph import LayeredComponentGraph
from src.models.query import QUERY_MODALITIES, RankedResult, RetrievalMode, TraversalParams
from src.services.decomposition_service import QueryDecompositionService, modality_set
from src.services.retrieval_service import RetrievalService
from src.utils.errors import CorpusParseError, EvaluationError

SWEEP_PARAMS = ("b", "n_i", "n_ret")
TIMING_STAGES = ("decomposition", "query_embedding", "seed", "traversal", "total")


def _check(gold: Set[str], k: int):
    if not gold:
        raise EvaluationError("gold set must be non-empty")
    if k < 1:
        raise EvaluationError(f"k must be >= 1, got {k}")


def recall_at_k(ranked: Sequence[str], gold: Set[str], k: int, hit: bool = False) -> float:
    """
    Gold coverage within the top k

    Args:
        ranked: Retrieved ids, best first
        gold: Relevant ids
        k: Cutoff
        hit: Return 1.0 when any gold id is found instead of the covered fraction
    """
    _check(gold, k)
    found = len(set(ranked[:k]) & set(gold))
    if hit:
        return 1.0 if found else 0.0
    return found / len(gold)


def mrr_at_k(ranked: Sequence[str], gold: Set[str], k: int) -> float:
    """Reciprocal rank of the first gold id within the top k, else 0"""
    _check(gold, k)
    for rank, comp_id in enumerate(ranked[:k], start=1):
        if comp_id in gold:
            return 1.0 / rank
    return 0.0


def modality_jaccard(predicted: Set[str], gold: Set[str]) -> float:
    if not gold:
        raise EvaluationError("gold modality set must be non-empty")
    predicted = set(predicted)
    return len(predicted & gold) / len(predicted | gold)


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Pearson correlation of two equally long series"""
    if len(xs) != len(ys) or len(xs) < 2:
        raise EvaluationError("pearson needs two series of equal length >= 2")
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if np.std(x) == 0.0 or np.std(y) == 0.0:
        raise EvaluationError("pearson is undefined for a constant series")
    return float(np.corrcoef(x, y)[0, 1])


@dataclass(frozen=True)
class QueryRecord:
    qid: str
    text: str
    gold: FrozenSet[str] = frozenset()
    gold_modalities: Optional[FrozenSet[str]] = None
    tags: Tuple[str, ...] = ()

    def to_dict(self) -> Dict[str, Any]:
        record: Dict[str, Any] = {"qid": self.qid, "text": self.text, "gold": sorted(self.gold)}
        if self.gold_modalities is not None:
            record["gold_modalities"] = sorted(self.gold_modalities)
        if self.tags:
            record["tags"] = list(self.tags)
        return record


@dataclass
class Qrels:
    """Gold component ids (and optionally gold modalities) per query id"""
    gold: Dict[str, FrozenSet[str]] = field(default_factory=dict)
    modalities: Dict[str, FrozenSet[str]] = field(default_factory=dict)

    @classmethod
    def from_queries(cls, records: Iterable[QueryRecord]) -> "Qrels":
        qrels = cls()
        for record in records:
            if record.gold:
                qrels.gold[record.qid] = record.gold
            if record.gold_modalities:
                qrels.modalities[record.qid] = record.gold_modalities
        return qrels

    def missing_ids(self, graph: LayeredComponentGraph) -> List[str]:
        known = set(graph.coarse_ids)
        return sorted({c for ids in self.gold.values() for c in ids if c not in known})


def _string_list(record: Dict[str, Any], key: str, line: int) -> Optional[List[str]]:
    value = record.get(key)
    if value is None:
        return None
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise CorpusParseError(line, f"{key!r} must be a list of strings")
    return value


def _read_records(path: Union[str, Path]) -> Iterable[Tuple[int, Dict[str, Any]]]:
    path = Path(path)
    if not path.exists():
        raise EvaluationError(f"File not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusParseError(line_no, f"invalid JSON: {e.msg}") from e
            if not isinstance(record, dict) or not isinstance(record.get("qid"), str):
                raise CorpusParseError(line_no, "record needs a string 'qid'")
            yield line_no, record


def load_queries(path: Union[str, Path]) -> List[QueryRecord]:
    """Read ``{qid, text, gold?, gold_modalities?, tags?}`` records"""
    queries = []
    for line_no, record in _read_records(path):
        text = record.get("text")
        if not isinstance(text, str) or not text.strip():
            raise CorpusParseError(line_no, "'text' must be a non-empty string")
        modalities = _string_list(record, "gold_modalities", line_no)
        if modalities is not None and not set(modalities) <= set(QUERY_MODALITIES):
            raise CorpusParseError(line_no, f"gold_modalities must be within {QUERY_MODALITIES}")
        queries.append(QueryRecord(
            qid=record["qid"],
            text=text,
            gold=frozenset(_string_list(record, "gold", line_no) or ()),
            gold_modalities=frozenset(modalities) if modalities else None,
            tags=tuple(_string_list(record, "tags", line_no) or ()),
        ))
    logger.info(f"Loaded {len(queries)} queries from {path}")
    return queries


def load_qrels(path: Union[str, Path]) -> Qrels:
    """Read ``{qid, gold, gold_modalities?}`` records"""
    qrels = Qrels()
    for line_no, record in _read_records(path):
        gold = _string_list(record, "gold", line_no)
        if not gold:
            raise CorpusParseError(line_no, "'gold' must be a non-empty list")
        qrels.gold[record["qid"]] = frozenset(gold)
        modalities = _string_list(record, "gold_modalities", line_no)
        if modalities:
            qrels.modalities[record["qid"]] = frozenset(modalities)
    return qrels


def write_queries(records: Iterable[QueryRecord], path: Union[str, Path]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")


def parse_sweep(spec: str) -> Tuple[str, List[int]]:
    """``"b=1,2,3"`` -> ``("b", [1, 2, 3])``"""
    name, sep, values = spec.partition("=")
    name = name.strip()
    if not sep or name not in SWEEP_PARAMS:
        raise EvaluationError(f"sweep must look like <{'|'.join(SWEEP_PARAMS)}>=v1,v2,..., got {spec!r}")
    try:
        parsed = [int(v) for v in values.split(",") if v.strip()]
    except ValueError:
        raise EvaluationError(f"sweep values must be integers: {values!r}") from None
    if not parsed:
        raise EvaluationError("sweep needs at least one value")
    return name, parsed


def _mean(values: Sequence[float]) -> float:
    return float(sum(values) / len(values)) if values else 0.0


@dataclass
class ReportRow:
    """Metrics of one (mode, swept value) configuration"""
    mode: str
    params: Dict[str, Any]
    sweep: Optional[Dict[str, int]]
    metrics: Dict[str, float]
    tags: Dict[str, Dict[str, float]]
    per_query: List[Dict[str, Any]]
    timings: Dict[str, float] = field(default_factory=dict)

    @property
    def label(self) -> str:
        if not self.sweep:
            return self.mode
        return self.mode + " " + " ".join(f"{k}={v}" for k, v in self.sweep.items())

    def to_dict(self, include_timings: bool = False) -> Dict[str, Any]:
        data = {
            "mode": self.mode,
            "params": self.params,
            "sweep": self.sweep,
            "metrics": self.metrics,
            "tags": self.tags,
            "per_query": self.per_query,
        }
        if include_timings:
            data["timings_ms"] = self.timings
        return data


@dataclass
class EvalReport:
    rows: List[ReportRow]
    settings: Dict[str, Any]
    decomposition: Dict[str, Any]
    decomposition_latency_ms: Dict[str, float] = field(default_factory=dict)

    def row(self, mode: str, **sweep: int) -> ReportRow:
        for row in self.rows:
            if row.mode == mode and (row.sweep or {}) == sweep:
                return row
        raise KeyError(f"no report row for mode={mode} {sweep}")

    def to_dict(self, include_timings: bool = False) -> Dict[str, Any]:
        return {
            "settings": self.settings,
            "decomposition": self.decomposition,
            "rows": [row.to_dict(include_timings) for row in self.rows],
        }

    def to_json(self, include_timings: bool = False) -> str:
        """Deterministic JSON; wall-clock timings only when asked for"""
        return json.dumps(self.to_dict(include_timings), indent=2, sort_keys=True) + "\n"

    def timings_json(self) -> str:
        return json.dumps(
            {"rows": [{"label": row.label, "timings_ms": row.timings} for row in self.rows],
             "decomposition_ms_by_backend": self.decomposition_latency_ms},
            indent=2, sort_keys=True,
        ) + "\n"

    def to_table(self) -> str:
        """Aligned plain-text summary, one line per row plus per-tag lines"""
        metric_names = list(self.rows[0].metrics) if self.rows else []
        header = f"{'run':<24}" + "".join(f"{name:>12}" for name in metric_names)
        lines = [header, "-" * len(header)]
        for row in self.rows:
            lines.append(f"{row.label:<24}" + "".join(f"{row.metrics[name]:>12.4f}" for name in metric_names))
            for tag, values in sorted(row.tags.items()):
                label = f"  [{tag}] n={int(values['count'])}"
                lines.append(f"{label:<24}" + "".join(f"{values[name]:>12.4f}" for name in metric_names))
        jaccard = self.decomposition.get("mean_jaccard")
        if jaccard is not None:
            lines.append(f"mean modality jaccard: {jaccard:.4f}")
        return "\n".join(lines)


def _query_metrics(ranked: List[str], gold: Set[str], k_values: Sequence[int], hit: bool) -> Dict[str, float]:
    metrics = {}
    for k in k_values:
        metrics[f"recall@{k}"] = recall_at_k(ranked, gold, k, hit=hit)
    for k in k_values:
        metrics[f"mrr@{k}"] = mrr_at_k(ranked, gold, k)
    return metrics


def _aggregate(entries: List[Dict[str, Any]], names: List[str]) -> Dict[str, float]:
    return {name: _mean([e["metrics"][name] for e in entries]) for name in names}


class BenchmarkService:
    """Runs query sets through one or more retrieval configurations"""

    def __init__(self, retrieval: RetrievalService,
                 k_values: Sequence[int] = (3, 10),
                 recall: str = "coverage",
                 jobs: int = 1,
                 progress: bool = False):
        """
        Initialize Benchmark Service

        Args:
            retrieval: Retrieval service over the indexed graph
            k_values: Metric cutoffs
            recall: coverage or hit
            jobs: Worker threads for per-query evaluation
            progress: Show a tqdm bar over queries
        """
        if recall not in ("coverage", "hit"):
            raise EvaluationError(f"recall must be coverage or hit, got {recall!r}")
        if not k_values or any(k < 1 for k in k_values):
            raise EvaluationError("k values must be positive")
        self.retrieval = retrieval
        self.k_values = list(k_values)
        self.recall = recall
        self.jobs = max(1, jobs)
        self.progress = progress

    def _configurations(self, params: TraversalParams, modes: Sequence[str],
                        sweep: Optional[Tuple[str, List[int]]]) -> List[Tuple[TraversalParams, Optional[Dict[str, int]]]]:
        configs = []
        for mode in modes:
            values = sweep[1] if sweep else [None]
            for value in values:
                fields = params.to_dict()
                fields["mode"] = mode
                swept = None
                if value is not None:
                    fields[sweep[0]] = value
                    swept = {sweep[0]: value}
                try:
                    config = TraversalParams(**fields)
                except ValueError as e:
                    raise EvaluationError(f"invalid sweep configuration {fields}: {e}") from e
                if config.mode is RetrievalMode.NO_QD and config.b < config.n_ret:
                    raise EvaluationError(f"mode no_qd needs b >= n_ret, got b={config.b} n_ret={config.n_ret}")
                configs.append((config, swept))
        return configs

    def _evaluate_query(self, query: QueryRecord, configs) -> Tuple[Set[str], Dict[str, float], List[RankedResult]]:
        dq = self.retrieval.decomposer.decompose(query.text)
        results = [self.retrieval.run(dq, params) for params, _ in configs]
        return modality_set(dq), {"fallback": float(dq.fallback), **dq.timings}, results

    def run(self, queries: Sequence[QueryRecord], qrels: Optional[Qrels] = None,
            params: TraversalParams = TraversalParams(),
            modes: Optional[Sequence[str]] = None,
            sweep: Optional[Tuple[str, List[int]]] = None) -> EvalReport:
        """
        Evaluate every query with gold against every configuration

        Args:
            queries: Query records
            qrels: Gold judgments; taken from the query records when omitted
            params: Base traversal parameters
            modes: Retrieval modes, ``params.mode`` when omitted
            sweep: Optional (parameter name, values) sweep

        Returns:
            EvalReport with one row per (mode, swept value)
        """
        qrels = qrels or Qrels.from_queries(queries)
        missing = qrels.missing_ids(self.retrieval.graph)
        if missing:
            logger.warning(f"⚠️ {len(missing)} gold id(s) are not in the index, e.g. {missing[:3]}")

        evaluable = [q for q in queries if q.qid in qrels.gold]
        skipped = len(queries) - len(evaluable)
        if skipped:
            logger.warning(f"⚠️ Skipping {skipped} quer(ies) without gold judgments")
        if not evaluable:
            raise EvaluationError("no query has gold judgments")

        configs = self._configurations(params, modes or [params.mode.value], sweep)
        logger.info(f"Benchmark: {len(evaluable)} queries x {len(configs)} configuration(s), jobs={self.jobs}")

        with ThreadPoolExecutor(max_workers=self.jobs) as pool:
            outcomes = list(tqdm(
                pool.map(lambda q: self._evaluate_query(q, configs), evaluable),
                total=len(evaluable), desc="queries", unit="q", disable=not self.progress,
            ))

        hit = self.recall == "hit"
        metric_names = [f"recall@{k}" for k in self.k_values] + [f"mrr@{k}" for k in self.k_values]
        rows = []
        for c, (config, swept) in enumerate(configs):
            entries = []
            timings: Dict[str, List[float]] = {stage: [] for stage in TIMING_STAGES}
            for query, (_, _, results) in zip(evaluable, outcomes):
                result = results[c]
                gold = set(qrels.gold[query.qid])
                entries.append({
                    "qid": query.qid,
                    "retrieved": result.ids[:max(self.k_values)],
                    "metrics": _query_metrics(result.ids, gold, self.k_values, hit),
                    "tags": list(query.tags),
                })
                for stage in TIMING_STAGES:
                    timings[stage].append(result.timings.get(stage, 0.0))

            tags: Dict[str, Dict[str, float]] = {}
            for tag in sorted({t for q in evaluable for t in q.tags}):
                subset = [e for e in entries if tag in e["tags"]]
                tags[tag] = {**_aggregate(subset, metric_names), "count": float(len(subset))}

            rows.append(ReportRow(
                mode=config.mode.value,
                params=config.to_dict(),
                sweep=swept,
                metrics=_aggregate(entries, metric_names),
                tags=tags,
                per_query=[{k: v for k, v in e.items() if k != "tags"} for e in entries],
                timings={stage: _mean(values) for stage, values in timings.items()},
            ))

        jaccards = [
            modality_jaccard(predicted, set(qrels.modalities[q.qid]))
            for q, (predicted, _, _) in zip(evaluable, outcomes)
            if q.qid in qrels.modalities
        ]
        backend = self.retrieval.decomposer.config.backend
        decomposition = {
            "backend": backend,
            "fallbacks": int(sum(info["fallback"] for _, info, _ in outcomes)),
            "mean_jaccard": _mean(jaccards) if jaccards else None,
        }
        latency = {backend: _mean([info.get("decomposition", 0.0) for _, info, _ in outcomes])}
        settings = {
            "queries": len(queries),
            "evaluated": len(evaluable),
            "skipped": skipped,
            "missing_gold_ids": len(missing),
            "k_values": self.k_values,
            "recall": self.recall,
            "embedder": self.retrieval.graph.manifest.embedder,
            "dimension": self.retrieval.graph.dimension,
        }
        logger.info(f"✅ Benchmark finished: {len(rows)} row(s)")
        return EvalReport(rows=rows, settings=settings, decomposition=decomposition, decomposition_latency_ms=latency)


def run_benchmark(graph: LayeredComponentGraph,
                  queries: Sequence[QueryRecord],
                  qrels: Optional[Qrels] = None,
                  params: TraversalParams = TraversalParams(),
                  decomposer: Optional[QueryDecompositionService] = None,
                  modes: Optional[Sequence[str]] = None,
                  sweep: Optional[Tuple[str, List[int]]] = None,
                  k_values: Sequence[int] = (3, 10),
                  recall: str = "coverage",
                  jobs: int = 1,
                  progress: bool = False) -> EvalReport:
    service = BenchmarkService(RetrievalService(graph, decomposer), k_values, recall, jobs, progress)
    return service.run(queries, qrels, params, modes, sweep)
