"""Transmission network data model and grid-file I/O.

Grid files are YAML documents (plain JSON is accepted too)::

    base_mva: 100
    nodes:
      - {id: "1", ref: true}
      - {id: "2", ref: false}
    lines:
      - {from: "1", to: "2", b_pu: 10.0, s_mw: 50.0}
    generators:
      - {id: g1, node: "1", c0: 0, c1: 10, c2: 0, p_max: 100}

Node identifiers are normalised to strings. Zonal systems are modelled by
treating zones as nodes.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import DataIOError, ParseError, UnknownNode, ValidationError


@dataclass(frozen=True)
class Line:
    i: str
    j: str
    b_pu: float
    s_mw: float


@dataclass(frozen=True)
class GeneratorSpec:
    id: str
    node: str
    c0: float
    c1: float
    c2: float
    p_max: float


@dataclass(frozen=True)
class GridModel:
    nodes: tuple[str, ...]
    ref: str
    lines: tuple[Line, ...]
    generators: tuple[GeneratorSpec, ...]
    base_mva: float = 100.0
    _adj: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(str(n) for n in self.nodes))
        object.__setattr__(self, "ref", str(self.ref))
        object.__setattr__(self, "lines", _merge_parallel(self.lines))
        object.__setattr__(self, "generators", tuple(self.generators))
        _validate(self)
        adj = {n: set() for n in self.nodes}
        for ln in self.lines:
            adj[ln.i].add(ln.j)
            adj[ln.j].add(ln.i)
        object.__setattr__(self, "_adj", {k: frozenset(v) for k, v in adj.items()})

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_gens(self) -> int:
        return len(self.generators)

    def node_index(self, node) -> int:
        try:
            return self.nodes.index(str(node))
        except ValueError:
            raise UnknownNode(f"unknown node {node!r}") from None

    # Dense arrays used by the OPF builders.

    def incidence(self) -> np.ndarray:
        """Line-by-node incidence matrix (+1 at ``i``, -1 at ``j``)."""
        C = np.zeros((len(self.lines), self.n_nodes))
        for k, ln in enumerate(self.lines):
            C[k, self.node_index(ln.i)] = 1.0
            C[k, self.node_index(ln.j)] = -1.0
        return C

    def gen_map(self) -> np.ndarray:
        """Node-by-generator membership matrix."""
        M = np.zeros((self.n_nodes, self.n_gens))
        for g, gen in enumerate(self.generators):
            M[self.node_index(gen.node), g] = 1.0
        return M

    def cost_arrays(self):
        c0 = np.array([g.c0 for g in self.generators], dtype=float)
        c1 = np.array([g.c1 for g in self.generators], dtype=float)
        c2 = np.array([g.c2 for g in self.generators], dtype=float)
        pmax = np.array([g.p_max for g in self.generators], dtype=float)
        return c0, c1, c2, pmax

    def to_dict(self) -> dict:
        return {
            "base_mva": self.base_mva,
            "nodes": [{"id": n, "ref": n == self.ref} for n in self.nodes],
            "lines": [{"from": ln.i, "to": ln.j, "b_pu": ln.b_pu, "s_mw": ln.s_mw}
                      for ln in self.lines],
            "generators": [{"id": g.id, "node": g.node, "c0": g.c0, "c1": g.c1,
                            "c2": g.c2, "p_max": g.p_max} for g in self.generators],
        }


def adjacency(grid: GridModel, i) -> frozenset[str]:
    key = str(i)
    if key not in grid._adj:
        raise UnknownNode(f"unknown node {i!r}")
    return grid._adj[key]


def _merge_parallel(lines) -> tuple[Line, ...]:
    merged: dict[frozenset, Line] = {}
    order = []
    for ln in lines:
        ln = Line(str(ln.i), str(ln.j), float(ln.b_pu), float(ln.s_mw))
        key = frozenset((ln.i, ln.j))
        if key in merged:
            old = merged[key]
            merged[key] = Line(old.i, old.j, old.b_pu + ln.b_pu, old.s_mw + ln.s_mw)
        else:
            merged[key] = ln
            order.append(key)
    return tuple(merged[k] for k in order)


def _validate(g: GridModel):
    if not g.nodes:
        raise ValidationError("grid has no nodes")
    if len(set(g.nodes)) != len(g.nodes):
        raise ValidationError("duplicate node identifiers")
    known = set(g.nodes)
    if g.ref not in known:
        raise ValidationError(f"reference node {g.ref!r} not in nodes")
    if not g.base_mva > 0:
        raise ValidationError("base_mva must be positive")
    for ln in g.lines:
        if ln.i not in known or ln.j not in known:
            raise ValidationError(f"line {ln.i}-{ln.j} references an unknown node")
        if ln.i == ln.j:
            raise ValidationError(f"line {ln.i}-{ln.j} is a self loop")
        if not (ln.b_pu > 0 and ln.s_mw > 0):
            raise ValidationError(f"line {ln.i}-{ln.j} needs b_pu > 0 and s_mw > 0")
    ids = [gen.id for gen in g.generators]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate generator identifiers")
    for gen in g.generators:
        if gen.node not in known:
            raise ValidationError(f"generator {gen.id} sits at unknown node {gen.node!r}")
        if not gen.p_max > 0:
            raise ValidationError(f"generator {gen.id} needs p_max > 0")
        if gen.c2 < 0:
            raise ValidationError(f"generator {gen.id} has non-convex cost (c2 < 0)")
    # connectivity
    nbrs = {n: [] for n in g.nodes}
    for ln in g.lines:
        nbrs[ln.i].append(ln.j)
        nbrs[ln.j].append(ln.i)
    seen = {g.ref}
    todo = deque([g.ref])
    while todo:
        for nb in nbrs[todo.popleft()]:
            if nb not in seen:
                seen.add(nb)
                todo.append(nb)
    if len(seen) != len(g.nodes):
        missing = sorted(known - seen)
        raise ValidationError(f"network is disconnected; unreachable nodes: {missing}")


def grid_from_dict(doc) -> GridModel:
    if not isinstance(doc, dict):
        raise ParseError("grid document must be a mapping")
    try:
        nodes = doc["nodes"]
        refs = [str(n["id"]) for n in nodes if n.get("ref", False)]
        if len(refs) != 1:
            raise ValidationError(f"exactly one reference node required, found {len(refs)}")
        lines = [Line(str(ln["from"]), str(ln["to"]), float(ln["b_pu"]), float(ln["s_mw"]))
                 for ln in doc.get("lines") or []]
        gens = [GeneratorSpec(str(gn["id"]), str(gn["node"]), float(gn.get("c0", 0.0)),
                              float(gn.get("c1", 0.0)), float(gn.get("c2", 0.0)),
                              float(gn["p_max"]))
                for gn in doc.get("generators") or []]
        return GridModel(
            nodes=tuple(str(n["id"]) for n in nodes),
            ref=refs[0],
            lines=tuple(lines),
            generators=tuple(gens),
            base_mva=float(doc.get("base_mva", 100.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed grid document: {exc!r}") from exc


def load_grid(path) -> GridModel:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataIOError(f"cannot read grid file {path}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(f"grid file {path} is not valid YAML: {exc}") from exc
    return grid_from_dict(doc)


def write_grid(grid: GridModel, path) -> None:
    Path(path).write_text(yaml.safe_dump(grid.to_dict(), sort_keys=False))
