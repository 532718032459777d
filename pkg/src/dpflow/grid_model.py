"""Radial feeder data model, tree topology index, and case-file loading.

A feeder is a tree rooted at the substation (node 0).  Every non-root node i
is the head of exactly one line, the line that connects i to its parent, so
lines are identified by their head node: line i enters node i.  Per-line
arrays are indexed ``line_id - 1``.

All electrical quantities are stored per-unit on ``base_mva``; case files
carry MW / MVAr / MVA figures and are converted on load.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from types import MappingProxyType
from typing import Mapping

import numpy as np

__all__ = [
    "GridError",
    "TopologyError",
    "RadialGrid",
    "TopologyIndex",
    "build_topology",
    "bundled_case_path",
    "load_case_file",
    "reactive_load",
]


class GridError(ValueError):
    """Malformed grid data or case file."""


class TopologyError(GridError):
    """The line list does not describe a tree rooted at node 0."""


def _as_line_array(values, name: str, line_count: int) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape != (line_count,):
        raise GridError(f"{name}: expected {line_count} per-line entries, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _as_node_array(values, name: str, node_count: int) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape != (node_count,):
        raise GridError(f"{name}: expected {node_count} per-node entries, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class RadialGrid:
    """Immutable radial grid: per-node loads/limits/costs and per-line impedances.

    ``parent`` maps every non-root node to its parent; node 0 is the
    substation with fixed voltage (v_min == v_max == 1) and zero load.
    """

    node_count: int
    parent: Mapping[int, int]
    r: np.ndarray
    x: np.ndarray
    f_max: np.ndarray
    d_p: np.ndarray
    tan_phi: np.ndarray
    g_p_min: np.ndarray
    g_p_max: np.ndarray
    g_q_min: np.ndarray
    g_q_max: np.ndarray
    v_min: np.ndarray
    v_max: np.ndarray
    c: np.ndarray
    c2: np.ndarray
    base_mva: float = 1.0

    def __post_init__(self) -> None:
        n = self.node_count
        if n < 1:
            raise GridError("node_count: must be at least 1")
        if self.base_mva <= 0:
            raise GridError("base_mva: must be positive")
        line_count = n - 1
        parent = dict(self.parent)
        if sorted(parent) != list(range(1, n)):
            raise GridError("parent: every node 1..n-1 needs exactly one parent entry")
        for node, par in parent.items():
            if not 0 <= par < n:
                raise GridError(f"parent: node {node} references unknown parent {par}")
            if par == node:
                raise GridError(f"parent: node {node} cannot be its own parent")
        object.__setattr__(self, "parent", MappingProxyType(parent))

        for name in ("r", "x", "f_max"):
            object.__setattr__(self, name, _as_line_array(getattr(self, name), name, line_count))
        for name in ("d_p", "tan_phi", "g_p_min", "g_p_max", "g_q_min", "g_q_max",
                     "v_min", "v_max", "c", "c2"):
            object.__setattr__(self, name, _as_node_array(getattr(self, name), name, n))

        if line_count and (self.r <= 0).any():
            raise GridError("r: line resistances must be positive")
        if line_count and (self.x <= 0).any():
            raise GridError("x: line reactances must be positive")
        if line_count and (self.f_max <= 0).any():
            raise GridError("f_max: line ratings must be positive")
        if (self.d_p < 0).any():
            raise GridError("d_p: loads must be non-negative")
        if self.d_p[0] != 0.0:
            raise GridError("d_p: node 0 is the substation and must carry zero load")
        if (self.tan_phi < 0).any():
            raise GridError("tan_phi: power-factor ratios must be non-negative")
        if (self.g_p_min > self.g_p_max).any():
            raise GridError("g_p_min/g_p_max: lower bound exceeds upper bound")
        if (self.g_q_min > self.g_q_max).any():
            raise GridError("g_q_min/g_q_max: lower bound exceeds upper bound")
        if (self.v_min <= 0).any():
            raise GridError("v_min: voltage bounds must be positive")
        if (self.v_min > self.v_max).any():
            raise GridError("v_min/v_max: lower bound exceeds upper bound")
        if self.v_min[0] != 1.0 or self.v_max[0] != 1.0:
            raise GridError("v_min/v_max: node 0 voltage is fixed, v_min and v_max must equal 1")
        if (self.c2 < 0).any():
            raise GridError("c2: quadratic cost coefficients must be non-negative")

    @property
    def line_count(self) -> int:
        return self.node_count - 1

    @property
    def lines(self) -> range:
        """Line ids, identified with their head nodes (1..n-1)."""
        return range(1, self.node_count)

    @property
    def d_q(self) -> np.ndarray:
        """Reactive loads derived from active loads via tan_phi."""
        return self.d_p * self.tan_phi

    def line_index(self, line: int) -> int:
        if not 1 <= line < self.node_count:
            raise GridError(f"line {line}: no such line (valid ids are 1..{self.node_count - 1})")
        return line - 1

    def with_load(self, node: int, d_p_new: float) -> "RadialGrid":
        """Copy of this grid with node's active load replaced (per-unit)."""
        if not 1 <= node < self.node_count:
            raise GridError(f"node {node}: loads can only be changed on customer nodes 1..n-1")
        if d_p_new < 0:
            raise GridError(f"node {node}: load must stay non-negative, got {d_p_new}")
        d_p = self.d_p.copy()
        d_p[node] = d_p_new
        return replace(self, d_p=d_p)


@dataclass(frozen=True)
class TopologyIndex:
    """Derived tree structure for a :class:`RadialGrid`.

    ``T`` is the dense incidence of affine-response signs, shape
    (node_count, line_count): ``T[i, l-1]`` is +1 when line l lies strictly
    below node i, -1 when line l is on node i's root path (including node
    i's own line), and 0 otherwise.
    """

    node_count: int
    children: Mapping[int, tuple]
    descendants: Mapping[int, frozenset]
    root_path_lines: Mapping[int, tuple]
    line_upstream_nodes: Mapping[int, frozenset]
    line_downstream_nodes: Mapping[int, frozenset]
    T: np.ndarray = field(repr=False)

    @property
    def line_count(self) -> int:
        return self.node_count - 1

    def subtree(self, node: int) -> frozenset:
        """Node set of the subtree rooted at ``node`` (inclusive)."""
        return self.descendants[node] | {node}

    def ancestors(self, node: int) -> frozenset:
        """Strict ancestors of ``node`` (the root path, excluding the node)."""
        if node == 0:
            return frozenset()
        return self.line_upstream_nodes[node]


def build_topology(grid: RadialGrid) -> TopologyIndex:
    """Index the tree: subtrees, root paths, per-line up/downstream sets, T.

    Raises :class:`TopologyError` naming an offending node when the parent
    relation contains a cycle or leaves a node disconnected from node 0.
    """
    n = grid.node_count
    children: dict[int, list[int]] = {i: [] for i in range(n)}
    for node, par in sorted(grid.parent.items()):
        children[par].append(node)

    order: list[int] = []
    seen = [False] * n
    seen[0] = True
    queue = [0]
    while queue:
        node = queue.pop(0)
        order.append(node)
        for child in children[node]:
            if seen[child]:
                raise TopologyError(f"node {child}: reached twice, the line list contains a cycle")
            seen[child] = True
            queue.append(child)
    if len(order) != n:
        missing = min(i for i in range(n) if not seen[i])
        raise TopologyError(
            f"node {missing}: not connected to the substation (cycle or orphaned branch)"
        )

    subtree: dict[int, set[int]] = {i: {i} for i in range(n)}
    for node in reversed(order):
        for child in children[node]:
            subtree[node] |= subtree[child]

    root_path: dict[int, tuple] = {0: ()}
    for node in order[1:]:
        root_path[node] = root_path[grid.parent[node]] + (node,)

    line_up: dict[int, frozenset] = {}
    line_down: dict[int, frozenset] = {}
    T = np.zeros((n, n - 1), dtype=np.int8)
    for line in range(1, n):
        col = line - 1
        down = frozenset(subtree[line])
        # root_path[line] ends with the line's own head node; the upstream set
        # is everything above it, which always includes the substation.
        up = frozenset(set(root_path[line][:-1]) | {0})
        line_down[line] = down
        line_up[line] = up
        for i in down:
            T[i, col] = -1
        for i in up:
            T[i, col] = 1
    T.setflags(write=False)

    descendants = {i: frozenset(subtree[i] - {i}) for i in range(n)}
    return TopologyIndex(
        node_count=n,
        children=MappingProxyType({i: tuple(children[i]) for i in range(n)}),
        descendants=MappingProxyType(descendants),
        root_path_lines=MappingProxyType(root_path),
        line_upstream_nodes=MappingProxyType(line_up),
        line_downstream_nodes=MappingProxyType(line_down),
        T=T,
    )


def reactive_load(grid: RadialGrid, node: int) -> float:
    """Reactive load at a customer node, d_q = d_p * tan_phi (per-unit)."""
    if node == 0:
        raise GridError("node 0: the substation carries no customer load")
    if not 0 < node < grid.node_count:
        raise GridError(f"node {node}: no such node (valid ids are 1..{grid.node_count - 1})")
    return float(grid.d_p[node] * grid.tan_phi[node])


# --- case-file loading -------------------------------------------------------

_BUNDLED_CASES = ("feeder15", "feeder10", "chain3")


def bundled_case_path(name: str) -> str:
    """Filesystem path of a case shipped with the package.

    Available: "feeder15", "feeder10", "chain3".
    """
    stem = name[:-5] if name.endswith(".json") else name
    if stem not in _BUNDLED_CASES:
        raise GridError(
            f"{name}: unknown bundled case (available: {', '.join(_BUNDLED_CASES)})"
        )
    ref = resources.files(__package__).joinpath("cases", f"{stem}.json")
    with resources.as_file(ref) as concrete:
        return str(concrete)

_NODE_FIELDS = (
    "id", "d_p_mw", "tan_phi", "g_p_min_mw", "g_p_max_mw",
    "g_q_min_mw", "g_q_max_mw", "v_min_pu", "v_max_pu", "c",
)
_LINE_FIELDS = ("to_node", "from_node", "r_pu", "x_pu", "f_max_mva")


def _want_number(obj: dict, key: str, path: str) -> float:
    if key not in obj:
        raise GridError(f"{path}.{key}: missing required field")
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise GridError(f"{path}.{key}: expected a number, got {value!r}")
    if not math.isfinite(value):
        raise GridError(f"{path}.{key}: must be finite, got {value!r}")
    return float(value)


def _want_int(obj: dict, key: str, path: str) -> int:
    value = _want_number(obj, key, path)
    if value != int(value):
        raise GridError(f"{path}.{key}: expected an integer, got {value!r}")
    return int(value)


def load_case_file(path: str) -> RadialGrid:
    """Load and validate a JSON feeder case, returning a per-unit RadialGrid.

    The file carries ``base_mva``, a ``nodes`` array (id, d_p_mw, tan_phi,
    generator MW/MVAr bounds, voltage bounds, linear cost ``c`` and optional
    quadratic cost ``c2``) and a ``lines`` array (to_node, from_node, r_pu,
    x_pu, f_max_mva) where ``from_node`` must be the head node's parent.
    Errors carry the offending field path.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise GridError(f"{path}: cannot read case file ({exc})") from exc
    except json.JSONDecodeError as exc:
        raise GridError(f"{path}: invalid JSON ({exc})") from exc

    if not isinstance(raw, dict):
        raise GridError(f"{path}: top level must be an object")
    base = _want_number(raw, "base_mva", path)
    if base <= 0:
        raise GridError(f"{path}.base_mva: must be positive, got {base}")
    nodes = raw.get("nodes")
    if not isinstance(nodes, list) or not nodes:
        raise GridError(f"{path}.nodes: expected a non-empty array")
    lines = raw.get("lines", [])
    if not isinstance(lines, list):
        raise GridError(f"{path}.lines: expected an array")

    n = len(nodes)
    by_id: dict[int, dict] = {}
    for k, node in enumerate(nodes):
        npath = f"nodes[{k}]"
        if not isinstance(node, dict):
            raise GridError(f"{npath}: expected an object")
        nid = _want_int(node, "id", npath)
        if nid in by_id:
            raise GridError(f"{npath}.id: duplicate node id {nid}")
        by_id[nid] = node
    if sorted(by_id) != list(range(n)):
        raise GridError(f"{path}.nodes: ids must be exactly 0..{n - 1}")

    def node_field(nid: int, key: str) -> float:
        return _want_number(by_id[nid], key, f"nodes[id={nid}]")

    if len(lines) != n - 1:
        raise GridError(
            f"{path}.lines: a radial grid with {n} nodes needs {n - 1} lines, got {len(lines)}"
        )

    parent: dict[int, int] = {}
    r = np.zeros(n - 1)
    x = np.zeros(n - 1)
    f_max = np.zeros(n - 1)
    for k, line in enumerate(lines):
        lpath = f"lines[{k}]"
        if not isinstance(line, dict):
            raise GridError(f"{lpath}: expected an object")
        to = _want_int(line, "to_node", lpath)
        frm = _want_int(line, "from_node", lpath)
        if to == 0:
            raise GridError(f"{lpath}.to_node: node 0 is the substation and cannot head a line")
        if to not in by_id:
            raise GridError(f"{lpath}.to_node: unknown node {to}")
        if frm not in by_id:
            raise GridError(f"{lpath}.from_node: unknown node {frm}")
        if to in parent:
            raise GridError(f"{lpath}.to_node: duplicate line into node {to}")
        parent[to] = frm
        idx = to - 1
        r[idx] = _want_number(line, "r_pu", lpath)
        x[idx] = _want_number(line, "x_pu", lpath)
        f_max[idx] = _want_number(line, "f_max_mva", lpath) / base
        if r[idx] <= 0:
            raise GridError(f"{lpath}.r_pu: must be positive")
        if x[idx] <= 0:
            raise GridError(f"{lpath}.x_pu: must be positive")
        if f_max[idx] <= 0:
            raise GridError(f"{lpath}.f_max_mva: must be positive")

    if n > 1 and sorted(parent) != list(range(1, n)):
        missing = min(set(range(1, n)) - set(parent))
        raise GridError(f"{path}.lines: node {missing} has no incoming line")

    ids = list(range(n))
    grid = RadialGrid(
        node_count=n,
        parent=parent,
        r=r,
        x=x,
        f_max=f_max,
        d_p=np.array([node_field(i, "d_p_mw") for i in ids]) / base,
        tan_phi=np.array([node_field(i, "tan_phi") for i in ids]),
        g_p_min=np.array([node_field(i, "g_p_min_mw") for i in ids]) / base,
        g_p_max=np.array([node_field(i, "g_p_max_mw") for i in ids]) / base,
        g_q_min=np.array([node_field(i, "g_q_min_mw") for i in ids]) / base,
        g_q_max=np.array([node_field(i, "g_q_max_mw") for i in ids]) / base,
        v_min=np.array([node_field(i, "v_min_pu") for i in ids]),
        v_max=np.array([node_field(i, "v_max_pu") for i in ids]),
        c=np.array([node_field(i, "c") for i in ids]),
        c2=np.array([_want_number(by_id[i], "c2", f"nodes[id={i}]") if "c2" in by_id[i] else 0.0
                     for i in ids]),
        base_mva=base,
    )
    build_topology(grid)  # validates radiality; raises TopologyError otherwise
    return grid
