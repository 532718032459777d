"""Deterministic LinDistFlow optimal power flow on a radial feeder.

Variables are per-node generation (active/reactive), per-line flows, and
squared voltage magnitudes.  Flow limits use an inscribed polygon of the
apparent-power disc so the deterministic and chance-constrained programs
share the same feasible-flow geometry.  Costs are in currency per MW, so
the objective applies them to MW quantities (per-unit times base_mva).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .conic_core import ConicProgram, SolveReport, solve
from .grid_model import GridError, RadialGrid, TopologyIndex

__all__ = [
    "DispatchSolution",
    "SolveError",
    "VarMap",
    "assemble_dopf",
    "polygon_coefficients",
    "solve_dopf",
]


class SolveError(RuntimeError):
    """The optimizer did not return an optimal point."""

    def __init__(self, message: str, report: SolveReport = None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class DispatchSolution:
    """Optimal dispatch: per-node g, per-line f, squared voltages, cost."""

    g_p: np.ndarray
    g_q: np.ndarray
    f_p: np.ndarray
    f_q: np.ndarray
    u: np.ndarray
    objective: float


class VarMap:
    """Index layout of the OPF variable vector.

    Base block: g_p (n), g_q (n), f_p (L), f_q (L), u (n); variant
    assemblers append extra variables after ``base_count``.
    """

    def __init__(self, node_count: int):
        self.n = node_count
        self.L = node_count - 1
        self._g_p = 0
        self._g_q = self._g_p + self.n
        self._f_p = self._g_q + self.n
        self._f_q = self._f_p + self.L
        self._u = self._f_q + self.L
        self.base_count = self._u + self.n
        self.extra_count = 0

    def g_p(self, node: int) -> int:
        return self._g_p + node

    def g_q(self, node: int) -> int:
        return self._g_q + node

    def f_p(self, line: int) -> int:
        return self._f_p + line - 1

    def f_q(self, line: int) -> int:
        return self._f_q + line - 1

    def u(self, node: int) -> int:
        return self._u + node

    def add_extras(self, count: int) -> int:
        """Reserve extra variables; returns the first new index."""
        first = self.base_count + self.extra_count
        self.extra_count += count
        return first

    @property
    def total(self) -> int:
        return self.base_count + self.extra_count


def polygon_coefficients(sides: int) -> list[tuple[float, float, float]]:
    """Face normals of the polygon inscribed in the unit apparent-power disc.

    Face c has outward normal (cos(2 pi c / sides), sin(2 pi c / sides)) and
    offset cos(pi/sides), so a flow limit f_max is enforced through
    gamma_p * f_p + gamma_q * f_q + gamma_s * f_max <= 0 with
    gamma_s = -cos(pi/sides).  The polygon's vertices lie on the disc
    boundary: the encoding is an inner approximation, never a relaxation.
    """
    if sides < 3:
        raise GridError(f"polygon needs at least 3 sides, got {sides}")
    offset = -math.cos(math.pi / sides)
    out = []
    for c in range(sides):
        theta = 2.0 * math.pi * c / sides
        out.append((math.cos(theta), math.sin(theta), offset))
    return out


def _bound_or_pin(prog: ConicProgram, var: int, lo: float, hi: float, name: str) -> None:
    if lo == hi:
        row = np.zeros(prog.var_count)
        row[var] = 1.0
        prog.add_equality(row, lo, name=f"pin {name}")
    else:
        prog.set_bound(var, lo=lo, hi=hi)


def add_base_opf(prog: ConicProgram, grid: RadialGrid, topo: TopologyIndex,
                 vm: VarMap) -> None:
    """Power-balance equalities, voltage recursion, and box bounds.

    Shared by the deterministic and chance-constrained assemblers: nodal
    balance at the substation, per-line subtree balance, the squared-voltage
    drop recursion with u_0 = 1, generator boxes, and voltage boxes.
    """
    n, L = vm.n, vm.L
    d_p, d_q = grid.d_p, grid.d_q

    # substation balance, active and reactive: g_0 + sum(g_i) = sum(d_i)
    for g_of, d in ((vm.g_p, d_p), (vm.g_q, d_q)):
        row = np.zeros(prog.var_count)
        for i in range(n):
            row[g_of(i)] = 1.0
        prog.add_equality(row, float(d.sum()), name="balance root")

    # per-line subtree balance: f_l + sum_{i downstream} g_i = sum d_i
    for line in grid.lines:
        down = sorted(topo.line_downstream_nodes[line])
        for f_of, g_of, d in ((vm.f_p, vm.g_p, d_p), (vm.f_q, vm.g_q, d_q)):
            row = np.zeros(prog.var_count)
            row[f_of(line)] = 1.0
            for i in down:
                row[g_of(i)] = 1.0
            prog.add_equality(row, float(d[list(down)].sum()), name=f"balance line {line}")

    # voltage drop: u_i + 2 sum_{l in path} (r f_p + x f_q) = u_0 = 1
    row = np.zeros(prog.var_count)
    row[vm.u(0)] = 1.0
    prog.add_equality(row, 1.0, name="voltage root")
    for i in range(1, n):
        row = np.zeros(prog.var_count)
        row[vm.u(i)] = 1.0
        for line in topo.root_path_lines[i]:
            idx = line - 1
            row[vm.f_p(line)] += 2.0 * grid.r[idx]
            row[vm.f_q(line)] += 2.0 * grid.x[idx]
        prog.add_equality(row, 1.0, name=f"voltage node {i}")

    for i in range(n):
        _bound_or_pin(prog, vm.g_p(i), float(grid.g_p_min[i]), float(grid.g_p_max[i]),
                      f"g_p[{i}]")
        _bound_or_pin(prog, vm.g_q(i), float(grid.g_q_min[i]), float(grid.g_q_max[i]),
                      f"g_q[{i}]")
    for i in range(1, n):
        _bound_or_pin(prog, vm.u(i), float(grid.v_min[i]) ** 2, float(grid.v_max[i]) ** 2,
                      f"u[{i}]")


def add_cost_objective(prog: ConicProgram, grid: RadialGrid, vm: VarMap) -> None:
    """Linear cost on MW generation; rotated-cone epigraphs where c2 > 0."""
    base = grid.base_mva
    for i in range(vm.n):
        prog.objective[vm.g_p(i)] += float(grid.c[i]) * base
    quad = [i for i in range(vm.n) if grid.c2[i] > 0.0]
    if not quad:
        return
    first = vm.add_extras(len(quad))
    _grow(prog, vm)
    for k, i in enumerate(quad):
        t = first + k
        prog.names[t] = f"quad_cost[{i}]"
        prog.objective[t] = 1.0
        # t >= a g^2 with a = c2 base^2, via ||(2 sqrt(a) g, t - 1)|| <= t + 1
        root = 2.0 * math.sqrt(float(grid.c2[i])) * base
        A = np.zeros((2, prog.var_count))
        A[0, vm.g_p(i)] = root
        A[1, t] = 1.0
        b = np.array([0.0, -1.0])
        c_row = np.zeros(prog.var_count)
        c_row[t] = 1.0
        prog.add_soc(A, b, c_row, 1.0, name=f"quadratic cost node {i}")


def _grow(prog: ConicProgram, vm: VarMap) -> None:
    """Widen an in-construction program after extra variables were reserved."""
    if prog.var_count == vm.total:
        return
    extra = vm.total - prog.var_count
    prog.objective = np.concatenate([prog.objective, np.zeros(extra)])
    prog.equalities = [(np.concatenate([row, np.zeros(extra)]), rhs)
                       for row, rhs in prog.equalities]
    for soc in prog.soc_rows:
        soc.A = np.hstack([soc.A, np.zeros((soc.A.shape[0], extra))])
        soc.c = np.concatenate([soc.c, np.zeros(extra)])
    prog.var_count = vm.total


def add_polygon_rows(prog: ConicProgram, grid: RadialGrid, vm: VarMap,
                     sides: int) -> None:
    """Deterministic polygon flow limits, one linear row per line and side."""
    faces = polygon_coefficients(sides)
    for line in grid.lines:
        f_bar = float(grid.f_max[line - 1])
        for c_idx, (gp, gq, gs) in enumerate(faces):
            row = np.zeros(prog.var_count)
            row[vm.f_p(line)] = -gp
            row[vm.f_q(line)] = -gq
            prog.add_soc(np.zeros((0, prog.var_count)), np.zeros(0), row,
                         -gs * f_bar, name=f"flow line {line} side {c_idx}")


def assemble_dopf(grid: RadialGrid, topo: TopologyIndex, sides: int = 12):
    """Build the deterministic OPF program; returns (program, varmap)."""
    vm = VarMap(grid.node_count)
    prog = ConicProgram(vm.base_count)
    for i in range(vm.n):
        prog.name_var(vm.g_p(i), f"g_p[{i}]")
        prog.name_var(vm.g_q(i), f"g_q[{i}]")
        prog.name_var(vm.u(i), f"u[{i}]")
    for line in grid.lines:
        prog.name_var(vm.f_p(line), f"f_p[{line}]")
        prog.name_var(vm.f_q(line), f"f_q[{line}]")
    add_base_opf(prog, grid, topo, vm)
    add_polygon_rows(prog, grid, vm, sides)
    add_cost_objective(prog, grid, vm)
    return prog, vm


def extract_dispatch(report: SolveReport, vm: VarMap) -> DispatchSolution:
    x = report.primal
    n, L = vm.n, vm.L
    return DispatchSolution(
        g_p=x[vm.g_p(0):vm.g_p(0) + n].copy(),
        g_q=x[vm.g_q(0):vm.g_q(0) + n].copy(),
        f_p=x[vm.f_p(1):vm.f_p(1) + L].copy() if L else np.zeros(0),
        f_q=x[vm.f_q(1):vm.f_q(1) + L].copy() if L else np.zeros(0),
        u=x[vm.u(0):vm.u(0) + n].copy(),
        objective=float(report.objective_value),
    )


def solve_dopf(grid: RadialGrid, topo: TopologyIndex, sides: int = 12,
               tol: float = None) -> DispatchSolution:
    """Solve the deterministic OPF; raises :class:`SolveError` unless optimal."""
    prog, vm = assemble_dopf(grid, topo, sides)
    report = solve(prog, tol=tol)
    if report.status != "optimal":
        raise SolveError(
            f"optimal power flow did not solve: solver status {report.status}",
            report=report,
        )
    return extract_dispatch(report, vm)
