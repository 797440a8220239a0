"""Order-2 simplicial complexes, incidence matrices and Hodge Laplacians."""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from itertools import combinations
from pathlib import Path

import numpy as np


class NetworkError(ValueError):
    pass


@dataclass(frozen=True)
class SimplicialComplex2:
    """Nodes, oriented edges (a < b, a -> b) and oriented triangles (a < b < c).

    ``b1`` is the N0 x N1 node-to-edge incidence, ``b2`` the N1 x N2
    edge-to-triangle incidence.  Instances are treated as immutable.
    """

    node_count: int
    edges: tuple[tuple[int, int], ...]
    triangles: tuple[tuple[int, int, int], ...]
    b1: np.ndarray = field(repr=False)
    b2: np.ndarray = field(repr=False)

    @property
    def n0(self) -> int:
        return self.node_count

    @property
    def n1(self) -> int:
        return len(self.edges)

    @property
    def n2(self) -> int:
        return len(self.triangles)

    def edge_index(self, a: int, b: int) -> int:
        return self._index[(min(a, b), max(a, b))]

    @property
    def _index(self) -> dict[tuple[int, int], int]:
        return {e: i for i, e in enumerate(self.edges)}

    def laplacian_0(self) -> np.ndarray:
        return self.b1 @ self.b1.T

    def laplacian_2(self) -> np.ndarray:
        return self.b2.T @ self.b2


@dataclass(frozen=True)
class HodgeLaplacian1:
    lower: np.ndarray
    upper: np.ndarray
    full: np.ndarray


def _clique_triangles(node_count, edges):
    adj = [set() for _ in range(node_count)]
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    tris = []
    for a, b in edges:
        for c in sorted(adj[a] & adj[b]):
            if c > b:
                tris.append((a, b, c))
    return sorted(tris)


def build_complex(node_count, edges, triangles=None) -> SimplicialComplex2:
    """Build a complex from 0-based edges; triangles default to all 3-cliques."""
    node_count = int(node_count)
    if node_count < 1:
        raise NetworkError("node_count must be positive")

    canon = []
    seen = set()
    for e in edges:
        a, b = (int(v) for v in e)
        for v in (a, b):
            if not 0 <= v < node_count:
                raise NetworkError(f"unknown node index {v} in edge {tuple(e)}")
        if a == b:
            raise NetworkError(f"self-loop {tuple(e)} is not a 1-simplex")
        key = (min(a, b), max(a, b))
        if key in seen:
            raise NetworkError(f"duplicate edge {key}")
        seen.add(key)
        canon.append(key)

    if triangles is None:
        tris = _clique_triangles(node_count, canon)
    else:
        tris = []
        tseen = set()
        for t in triangles:
            a, b, c = sorted(int(v) for v in t)
            for v in (a, b, c):
                if not 0 <= v < node_count:
                    raise NetworkError(f"unknown node index {v} in triangle {tuple(t)}")
            if a == b or b == c:
                raise NetworkError(f"degenerate triangle {tuple(t)}")
            if (a, b, c) in tseen:
                raise NetworkError(f"duplicate triangle {(a, b, c)}")
            for face in ((a, b), (a, c), (b, c)):
                if face not in seen:
                    raise NetworkError(f"triangle {(a, b, c)} references missing edge {face}")
            tseen.add((a, b, c))
            tris.append((a, b, c))

    index = {e: i for i, e in enumerate(canon)}
    b1 = np.zeros((node_count, len(canon)))
    for j, (a, b) in enumerate(canon):
        b1[a, j] = -1.0
        b1[b, j] = 1.0
    b2 = np.zeros((len(canon), len(tris)))
    for j, (a, b, c) in enumerate(tris):
        b2[index[(a, b)], j] = 1.0
        b2[index[(a, c)], j] = -1.0
        b2[index[(b, c)], j] = 1.0

    return SimplicialComplex2(node_count, tuple(canon), tuple(tris), b1, b2)


def hodge_laplacian_1(sc: SimplicialComplex2) -> HodgeLaplacian1:
    lower = sc.b1.T @ sc.b1
    upper = sc.b2 @ sc.b2.T
    # entries are small integers, so these are exact; symmetrize anyway
    lower = 0.5 * (lower + lower.T)
    upper = 0.5 * (upper + upper.T)
    return HodgeLaplacian1(lower, upper, lower + upper)


def boundary_check(sc: SimplicialComplex2) -> bool:
    if sc.b2.shape[1] == 0:
        return True
    prod = sc.b1.astype(np.int64) @ sc.b2.astype(np.int64)
    return not prod.any()


def parse_network(text: str, source: str = "<string>") -> SimplicialComplex2:
    """Parse the line-oriented network format (1-based node indices).

    ``nodes <N0>`` first, then ``edge <a> <b>`` lines, then optional
    ``triangle <a> <b> <c>`` lines.  Blank lines and ``#`` comments are skipped.
    """
    node_count = None
    edges, tris = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind, args = parts[0].lower(), parts[1:]
        try:
            vals = [int(v) for v in args]
        except ValueError:
            raise NetworkError(f"{source}:{lineno}: non-integer field in {raw!r}") from None
        if kind == "nodes" and len(vals) == 1:
            if node_count is not None:
                raise NetworkError(f"{source}:{lineno}: repeated 'nodes' header")
            node_count = vals[0]
        elif node_count is None:
            raise NetworkError(f"{source}:{lineno}: expected 'nodes <N0>' header first")
        elif kind == "edge" and len(vals) == 2:
            edges.append((vals[0] - 1, vals[1] - 1))
        elif kind == "triangle" and len(vals) == 3:
            tris.append(tuple(v - 1 for v in vals))
        else:
            raise NetworkError(f"{source}:{lineno}: cannot parse {raw!r}")
    if node_count is None:
        raise NetworkError(f"{source}: missing 'nodes' header")
    return build_complex(node_count, edges, tris if tris else None)


def format_network(sc: SimplicialComplex2, explicit_triangles: bool = True) -> str:
    lines = [f"nodes {sc.node_count}"]
    lines += [f"edge {a + 1} {b + 1}" for a, b in sc.edges]
    if explicit_triangles:
        lines += [f"triangle {a + 1} {b + 1} {c + 1}" for a, b, c in sc.triangles]
    return "\n".join(lines) + "\n"


def bundled_networks() -> list[str]:
    pkg = resources.files("flowkrim") / "networks"
    return sorted(p.name[:-4] for p in pkg.iterdir() if p.name.endswith(".net"))


def load_network(path_or_name) -> SimplicialComplex2:
    """Load a network file, or a bundled network by name (e.g. ``sioux_falls``)."""
    path = Path(path_or_name)
    if path.is_file():
        return parse_network(path.read_text(), str(path))
    name = str(path_or_name)
    res = resources.files("flowkrim") / "networks" / f"{name}.net"
    if res.is_file():
        return parse_network(res.read_text(), name)
    raise NetworkError(f"no network file or bundled network named {name!r}")
