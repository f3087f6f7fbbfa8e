"""
Index Store
Persist and verify layered component graph index directories
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from loguru import logger

from src.config import hparams as hp
from src.models.graph import EdgeSet, IndexManifest, LayeredComponentGraph, Node, NodeType, Provenance
from src.utils.errors import IndexFormatError

MANIFEST_FILE = "manifest.json"
NODES_FILE = "nodes.jsonl"
EDGES_FILE = "edges.jsonl"
EMBEDDINGS_FILE = "embeddings.bin"
FORMAT_VERSION = 1
FLOAT_BYTES = 4


def compute_sha256(filepath: Union[str, Path]) -> str:
    """Compute SHA-256 of a file"""
    digest = hashlib.sha256()
    with open(filepath, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_jsonl(path: Path, records: List[Dict[str, Any]]):
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def _read_jsonl(path: Path) -> List[Dict[str, Any]]:
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise IndexFormatError(f"{path.name} line {line_no}: {e.msg}") from e
    return records


def save_index(graph: LayeredComponentGraph, path: Union[str, Path]) -> Path:
    """
    Write an index directory

    Args:
        graph: Finalized graph
        path: Target directory, created when missing

    Returns:
        Directory path
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    d = graph.dimension
    row_bytes = d * FLOAT_BYTES

    blob = graph.embeddings.astype("<f4").tobytes()
    with open(path / EMBEDDINGS_FILE, "wb") as f:
        f.write(blob)

    _write_jsonl(path / NODES_FILE, [
        {
            "id": node.node_id,
            "layer": node.layer,
            "type": node.node_type.value,
            "content": node.content,
            "instruction": node.instruction,
            "parent": node.parent,
            "offset": i * row_bytes,
        }
        for i, node in enumerate(graph.nodes())
    ])

    edge_records = [
        {"kind": "e0", "u": u, "v": v, "provenance": provenance.value}
        for (u, v), provenance in graph.edges.e0.items()
    ]
    edge_records.extend({"kind": "down", "parent": p, "child": c} for p, c in graph.edges.e_down)
    _write_jsonl(path / EDGES_FILE, edge_records)

    manifest = graph.manifest.to_dict()
    manifest["embeddings"] = {"bytes": len(blob), "sha256": hashlib.sha256(blob).hexdigest()}
    manifest["files"] = {
        name: {"bytes": (path / name).stat().st_size, "sha256": compute_sha256(path / name)}
        for name in (NODES_FILE, EDGES_FILE)
    }
    with open(path / MANIFEST_FILE, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)

    logger.info(f"💾 Saved index to {path} ({len(graph)} nodes, {len(blob)} embedding bytes)")
    return path


def _load_manifest(path: Path) -> Tuple[IndexManifest, Dict[str, Any], Dict[str, Any]]:
    try:
        with open(path / MANIFEST_FILE, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except json.JSONDecodeError as e:
        raise IndexFormatError(f"{MANIFEST_FILE}: {e.msg}") from e
    try:
        blob_info = raw.pop("embeddings")
        file_info = raw.pop("files")
        manifest = IndexManifest(**raw)
    except (KeyError, TypeError) as e:
        raise IndexFormatError(f"{MANIFEST_FILE}: malformed manifest ({e})") from e
    if manifest.format_version != FORMAT_VERSION:
        raise IndexFormatError(f"unsupported index format version {manifest.format_version}")
    return manifest, blob_info, file_info


def _check_file(path: Path, name: str, info: Optional[Dict[str, Any]]):
    if not isinstance(info, dict):
        raise IndexFormatError(f"{MANIFEST_FILE}: no checksum recorded for {name}")
    size = (path / name).stat().st_size
    if size != info.get("bytes"):
        raise IndexFormatError(f"{name} holds {size} bytes, expected {info.get('bytes')}")
    if compute_sha256(path / name) != info.get("sha256"):
        raise IndexFormatError(f"{name} checksum mismatch")


def check_counts(graph: LayeredComponentGraph):
    """Compare the manifest counts with the loaded node and edge sets"""
    counts = graph.manifest.counts
    actual = {
        "components": len(graph.coarse_ids),
        "subcomponents": len(graph.fine_ids),
        "e0_intra": graph.edges.count(Provenance.INTRA),
        "e0_inter": graph.edges.count(Provenance.INTER),
        "e_down": len(graph.edges.e_down),
    }
    for key, value in actual.items():
        if key in counts and counts[key] != value:
            raise IndexFormatError(f"manifest records {counts[key]} {key}, index holds {value}")


def check_embedder(manifest: IndexManifest, config: hp.EmbedderConfig):
    """Reject an index built with another encoder configuration"""
    if manifest.embedder != config.backend:
        raise IndexFormatError(f"index built with embedder {manifest.embedder!r}, config says {config.backend!r}")
    if manifest.dimension != config.dimension:
        raise IndexFormatError(f"index dimension {manifest.dimension} does not match configured {config.dimension}")
    if config.backend == "hash" and (manifest.index_seed, manifest.sign_seed) != (config.index_seed, config.sign_seed):
        raise IndexFormatError("index hash seeds do not match the configured seeds")


def _parse_node(record: Dict[str, Any], expected_offset: int) -> Node:
    try:
        node = Node(
            node_id=record["id"],
            layer=record["layer"],
            node_type=NodeType(record["type"]),
            content=record["content"],
            instruction=record["instruction"],
            parent=record.get("parent"),
        )
        offset = record["offset"]
    except (KeyError, ValueError, TypeError) as e:
        raise IndexFormatError(f"{NODES_FILE}: malformed node record ({e})") from e
    if offset != expected_offset:
        raise IndexFormatError(f"{NODES_FILE}: node {node.node_id} offset {offset} != {expected_offset}")
    return node


def _parse_edges(records: List[Dict[str, Any]]) -> EdgeSet:
    e0 = {}
    e_down = []
    try:
        for record in records:
            if record["kind"] == "e0":
                e0[(record["u"], record["v"])] = Provenance(record["provenance"])
            elif record["kind"] == "down":
                e_down.append((record["parent"], record["child"]))
            else:
                raise IndexFormatError(f"{EDGES_FILE}: unknown edge kind {record['kind']!r}")
    except (KeyError, ValueError, TypeError) as e:
        raise IndexFormatError(f"{EDGES_FILE}: malformed edge record ({e})") from e
    return EdgeSet(e0=e0, e_down=tuple(e_down))


def load_index(path: Union[str, Path], embedder_config: Optional[hp.EmbedderConfig] = None) -> LayeredComponentGraph:
    """
    Load and verify an index directory

    Args:
        path: Directory written by save_index
        embedder_config: When given, the manifest must match it

    Returns:
        Immutable LayeredComponentGraph

    Raises:
        IndexFormatError: Missing, truncated or tampered files, or a configuration mismatch
    """
    path = Path(path)
    for name in (MANIFEST_FILE, NODES_FILE, EDGES_FILE, EMBEDDINGS_FILE):
        if not (path / name).is_file():
            raise IndexFormatError(f"index {path} is missing {name}")

    manifest, blob_info, file_info = _load_manifest(path)
    for name in (NODES_FILE, EDGES_FILE):
        _check_file(path, name, file_info.get(name))
    if embedder_config is not None:
        check_embedder(manifest, embedder_config)

    node_records = _read_jsonl(path / NODES_FILE)
    row_bytes = manifest.dimension * FLOAT_BYTES
    nodes = [_parse_node(record, i * row_bytes) for i, record in enumerate(node_records)]

    with open(path / EMBEDDINGS_FILE, "rb") as f:
        blob = f.read()
    expected = len(nodes) * row_bytes
    if len(blob) != expected or blob_info.get("bytes") != len(blob):
        raise IndexFormatError(f"{EMBEDDINGS_FILE} holds {len(blob)} bytes, expected {expected}")
    if hashlib.sha256(blob).hexdigest() != blob_info.get("sha256"):
        raise IndexFormatError(f"{EMBEDDINGS_FILE} checksum mismatch")
    embeddings = np.frombuffer(blob, dtype="<f4").reshape(len(nodes), manifest.dimension).astype(np.float32)

    edges = _parse_edges(_read_jsonl(path / EDGES_FILE))
    try:
        graph = LayeredComponentGraph(nodes, embeddings, edges, manifest)
    except (ValueError, KeyError) as e:
        raise IndexFormatError(f"index {path} is inconsistent: {e}") from e
    check_counts(graph)

    logger.info(f"📂 Loaded index {path} ({len(graph.coarse_ids)} coarse, {len(graph.fine_ids)} fine nodes)")
    return graph
