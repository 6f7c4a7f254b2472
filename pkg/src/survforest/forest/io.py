"""Versioned JSON interchange format for grown forests.

Terminal survival curves are not stored: they are a pure function of the
terminal members and the training response, both of which are, so they are
rebuilt exactly on load.
"""

from __future__ import annotations

import gzip
import json

import numpy as np

from ..dataset import Frame, VariableSpec
from ..errors import ForestFormatError
from .core import Forest, GrowConfig, assemble

FORMAT = "survforest"
SCHEMA_VERSION = 1
_NODE_FIELDS = ("var", "value", "mask", "left", "right", "depth", "start", "end")


def _floats(a):
    return [None if np.isnan(v) else float(v) for v in np.asarray(a, dtype=float)]


def to_document(forest: Forest) -> dict:
    train = forest.train
    trees = []
    for t in range(forest.ntree):
        s = forest.tree_slice(t)
        nodes = {f: getattr(forest, f"node_{f}")[s] for f in _NODE_FIELDS}
        trees.append({"nodes": {f: (_floats(a) if f == "value" else a.tolist())
                                for f, a in nodes.items()},
                      "samples": forest.samples[t].tolist()})
    return {
        "format": FORMAT,
        "version": SCHEMA_VERSION,
        "config": forest.config.to_dict(),
        "variables": [v.to_dict() for v in forest.variables],
        "response": {"time": train.time_name, "status": train.status_name},
        "data": {"time": _floats(train.time), "status": train.status.astype(int).tolist(),
                 "x": [_floats(train.x[:, j]) for j in range(train.p)]},
        "event_times": _floats(forest.event_times),
        "trees": trees,
        "inbag": forest.inbag.tolist(),
    }


def serialize(forest: Forest, compress: bool = False) -> bytes:
    """Byte-stable encoding: sorted keys, shortest round-trip float text."""
    raw = json.dumps(to_document(forest), sort_keys=True, separators=(",", ":")).encode()
    return gzip.compress(raw, mtime=0) if compress else raw


def _array(values, dtype):
    return np.array([np.nan if v is None else v for v in values], dtype=dtype)


def from_document(doc: dict) -> Forest:
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise ForestFormatError("not a survforest document")
    if doc.get("version") != SCHEMA_VERSION:
        raise ForestFormatError(
            f"forest schema version {doc.get('version')!r} is not supported "
            f"(expected {SCHEMA_VERSION})")
    try:
        cfg = GrowConfig(**doc["config"])
        variables = tuple(VariableSpec.from_dict(v) for v in doc["variables"])
        data = doc["data"]
        n = len(data["time"])
        x = np.column_stack([_array(c, float) for c in data["x"]]) if variables \
            else np.empty((n, 0))
        train = Frame(variables, x, _array(data["time"], float),
                      np.array(data["status"], dtype=bool), doc["response"]["time"],
                      doc["response"]["status"])
        samples, trees = [], []
        for tree in doc["trees"]:
            nodes = tree["nodes"]
            arrays = {f"node_{f}": (_array(nodes[f], float) if f == "value"
                                    else np.array(nodes[f], dtype=np.int64))
                      for f in _NODE_FIELDS}
            samples.append(np.array(tree["samples"], dtype=np.int64))
            trees.append(arrays)
        forest = assemble(cfg, train, samples, trees)
        inbag = np.array(doc["inbag"], dtype=np.int64)
        event_times = _array(doc["event_times"], float)
    except ForestFormatError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ForestFormatError(f"malformed forest document: {exc}") from None
    _verify(forest, inbag, event_times)
    return forest


def _verify(forest: Forest, inbag: np.ndarray, event_times: np.ndarray):
    if forest.ntree != forest.config.ntree:
        raise ForestFormatError("tree count disagrees with the recorded configuration")
    if inbag.shape != forest.inbag.shape or not np.array_equal(inbag, forest.inbag):
        raise ForestFormatError("in-bag counts disagree with the bootstrap samples")
    if not np.array_equal(event_times, forest.event_times):
        raise ForestFormatError("event times disagree with the training response")
    if forest.samples.size and (forest.samples.min() < 0 or forest.samples.max() >= forest.n):
        raise ForestFormatError("bootstrap sample refers to a missing row")
    for t in range(forest.ntree):
        s = forest.tree_slice(t)
        nn = s.stop - s.start
        var = forest.node_var[s]
        inner = var >= 0
        if (var >= len(forest.variables)).any():
            raise ForestFormatError(f"tree {t} splits on an unknown variable")
        kids = np.concatenate([forest.node_left[s][inner], forest.node_right[s][inner]])
        if kids.size and (kids.min() <= 0 or kids.max() >= nn):
            raise ForestFormatError(f"tree {t} has a dangling child reference")
        if (forest.node_start[s] < 0).any() or (forest.node_end[s] > forest.n).any():
            raise ForestFormatError(f"tree {t} has out-of-range member slices")


def deserialize(blob: bytes) -> Forest:
    """Inverse of :func:`serialize`; accepts plain or gzip-compressed documents."""
    try:
        if blob[:2] == b"\x1f\x8b":
            blob = gzip.decompress(blob)
        doc = json.loads(blob)
    except (OSError, EOFError, ValueError) as exc:
        raise ForestFormatError(f"truncated or unreadable forest document: {exc}") from None
    return from_document(doc)


def save(forest: Forest, path, compress: bool | None = None):
    path = str(path)
    if compress is None:
        compress = path.endswith(".gz")
    with open(path, "wb") as fh:
        fh.write(serialize(forest, compress))


def load(path) -> Forest:
    with open(path, "rb") as fh:
        return deserialize(fh.read())
