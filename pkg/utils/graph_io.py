import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from models.graph import DegreeSequenceError, DirectedGraph, from_edge_list, to_edge_list
from models.netstats import Partition, PartitionError
from models.rewire import TrajectoryRecord

logger = logging.getLogger(__name__)

CSV_SCHEMA_VERSION = 1


class DigestMismatchError(ValueError):
    pass


def read_graph(path) -> DirectedGraph:
    return from_edge_list(Path(path).read_text())


def write_graph(path, g: DirectedGraph, comments: Sequence[str] = ()):
    Path(path).write_text(to_edge_list(g, comments))


def _data_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def read_partition(path, n: Optional[int] = None) -> Partition:
    """`K <k>` then one `<vertex> <block>` line per vertex."""
    lines = _data_lines(Path(path).read_text())
    try:
        lineno, head = next(lines)
    except StopIteration:
        raise PartitionError(f"{path}: empty partition file")
    if len(head) != 2 or head[0] != "K":
        raise PartitionError(f"{path}:{lineno}: expected 'K <k>'")
    n_blocks = int(head[1])
    assignment: Dict[int, int] = {}
    for lineno, parts in lines:
        if len(parts) != 2:
            raise PartitionError(f"{path}:{lineno}: expected '<vertex> <block>'")
        v, b = int(parts[0]), int(parts[1])
        if v in assignment:
            raise PartitionError(f"{path}:{lineno}: vertex {v} assigned twice")
        assignment[v] = b
    size = len(assignment) if n is None else n
    if sorted(assignment) != list(range(size)):
        raise PartitionError(f"{path}: every vertex 0..{size - 1} needs exactly one block")
    return Partition(np.array([assignment[v] for v in range(size)], dtype=np.int64), n_blocks)


def write_partition(path, partition: Partition):
    lines = [f"K {partition.n_blocks}"] + [f"{v} {b}" for v, b in enumerate(partition.blocks.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_degree_file(path) -> Tuple[np.ndarray, np.ndarray]:
    """`n <N>` then one `<d_out> <d_in>` line per vertex."""
    lines = _data_lines(Path(path).read_text())
    try:
        lineno, head = next(lines)
    except StopIteration:
        raise DegreeSequenceError(f"{path}: empty degree file")
    if len(head) != 2 or head[0] != "n":
        raise DegreeSequenceError(f"{path}:{lineno}: expected 'n <N>'")
    n = int(head[1])
    rows = []
    for lineno, parts in lines:
        if len(parts) != 2:
            raise DegreeSequenceError(f"{path}:{lineno}: expected '<d_out> <d_in>'")
        rows.append((int(parts[0]), int(parts[1])))
    if len(rows) != n:
        raise DegreeSequenceError(f"{path}: header says n = {n} but {len(rows)} degree lines follow")
    arr = np.asarray(rows, dtype=np.int64).reshape(-1, 2)
    return arr[:, 0].copy(), arr[:, 1].copy()


def _finite(obj):
    # strict JSON: NaN and infinities become null
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def write_json(path, obj: dict):
    Path(path).write_text(json.dumps(_finite(obj), sort_keys=True, indent=2, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"Object of type {type(o).__name__} is not JSON serializable")


def _dumps(obj: dict) -> str:
    return json.dumps(_finite(obj), sort_keys=True, default=_jsonable)


@dataclass
class TrajectoryFile:
    header: dict
    records: List[TrajectoryRecord] = field(default_factory=list)
    footer: Optional[dict] = None

    @property
    def config_digest(self) -> str:
        return self.header["config_digest"]

    def write(self, path):
        lines = [_dumps({**self.header, "kind": "header"})]
        lines += [_dumps({**r.to_dict(), "kind": "record"}) for r in self.records]
        if self.footer is not None:
            lines.append(_dumps({**self.footer, "kind": "footer"}))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def read(cls, path) -> "TrajectoryFile":
        header, footer, records = None, None, []
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
            if not raw.strip():
                continue
            obj = json.loads(raw)
            kind = obj.pop("kind", None)
            if kind == "header":
                header = obj
            elif kind == "record":
                records.append(TrajectoryRecord.from_dict(obj))
            elif kind == "footer":
                footer = obj
            else:
                raise ValueError(f"{path}:{lineno}: unknown line kind {kind!r}")
        if header is None:
            raise ValueError(f"{path}: trajectory file has no header")
        return cls(header, records, footer)


def check_digests(files: Sequence[TrajectoryFile], names: Sequence[str] = ()) -> str:
    digests = {f.config_digest for f in files}
    if len(digests) > 1:
        raise DigestMismatchError(f"Trajectory files disagree on config digest: {sorted(digests)} "
                                  f"({', '.join(map(str, names))})")
    return digests.pop()


def write_csv(path, frame: pd.DataFrame, meta: Dict[str, object]):
    meta = {"schema_version": CSV_SCHEMA_VERSION, **meta}
    with open(path, "w", newline="") as f:
        for key in sorted(meta):
            f.write(f"# {key}={meta[key]}\n")
        frame.to_csv(f, index=False, lineterminator="\n")


def read_csv(path) -> Tuple[pd.DataFrame, Dict[str, str]]:
    meta = {}
    with open(path) as f:
        for line in f:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition("=")
            meta[key] = value
    return pd.read_csv(path, comment=None, skiprows=len(meta)), meta
