"""Deterministic OPF against hand-computed flow states and a brute-force oracle."""

import dataclasses
import math

import numpy as np
import pytest

from dpflow.conic_core import solve
from dpflow.dopf import (
    SolveError,
    assemble_dopf,
    polygon_coefficients,
    solve_dopf,
)
from dpflow.grid_model import (
    GridError,
    build_topology,
    bundled_case_path,
    load_case_file,
)

from test_grid_model import make_grid


@pytest.fixture(scope="module")
def feeder15():
    grid = load_case_file(bundled_case_path("feeder15"))
    return grid, build_topology(grid)


@pytest.fixture(scope="module")
def chain3():
    grid = load_case_file(bundled_case_path("chain3"))
    return grid, build_topology(grid)


def disable_ders(grid):
    n = grid.node_count
    zeros = np.zeros(n)
    keep0 = lambda arr: np.concatenate([[arr[0]], np.zeros(n - 1)])
    return dataclasses.replace(
        grid,
        g_p_max=keep0(grid.g_p_max),
        g_q_max=keep0(grid.g_q_max),
        g_p_min=zeros.copy(),
        g_q_min=np.minimum(grid.g_q_min, 0.0),
    )


class TestPolygon:
    def test_origin_feasible_all_faces(self):
        for gp, gq, gs in polygon_coefficients(4):
            assert gp * 0 + gq * 0 + gs * 1.0 <= 0

    def test_square_vertex_on_face(self):
        faces = polygon_coefficients(4)
        p = q = math.cos(math.pi / 4)
        slacks = [gp * p + gq * q + gs for gp, gq, gs in faces]
        assert max(slacks) == pytest.approx(0.0, abs=1e-12)

    def test_twelve_sides_axis_boundary(self):
        faces = polygon_coefficients(12)
        p, q = 0.9659258262890683, 0.0  # cos(pi/12)
        slacks = [gp * p + gq * q + gs for gp, gq, gs in faces]
        assert max(slacks) == pytest.approx(0.0, abs=1e-12)

    def test_too_few_sides(self):
        with pytest.raises(GridError):
            polygon_coefficients(2)

    @pytest.mark.parametrize("sides", [3, 4, 12, 64])
    def test_inscribed_never_relaxes(self, sides):
        # along 1000 random directions the polygon boundary stays in the disc
        rng = np.random.default_rng(17)
        faces = polygon_coefficients(sides)
        for t in rng.uniform(0, 2 * np.pi, size=1000):
            dvec = np.array([np.cos(t), np.sin(t)])
            radius = min(
                -gs / (gp * dvec[0] + gq * dvec[1])
                for gp, gq, gs in faces
                if gp * dvec[0] + gq * dvec[1] > 1e-12
            )
            point = radius * dvec
            assert point @ point <= 1.0 + 1e-12


class TestAssembly:
    def test_feeder15_polygon_row_count(self, feeder15):
        grid, topo = feeder15
        prog, _ = assemble_dopf(grid, topo, sides=12)
        flow_rows = [s for s in prog.soc_rows if s.name.startswith("flow")]
        assert len(flow_rows) == 14 * 12

    def test_chain3_zero_der_forced_flows(self, chain3):
        grid, topo = chain3
        sol = solve_dopf(disable_ders(grid), topo)
        assert sol.f_p[1] == pytest.approx(1.0, abs=1e-7)  # f_2 = d_2
        assert sol.f_p[0] == pytest.approx(2.0, abs=1e-7)  # f_1 = d_1 + d_2
        assert sol.u[1] == pytest.approx(0.94, abs=1e-7)
        assert sol.u[2] == pytest.approx(0.91, abs=1e-7)
        assert sol.u[0] == pytest.approx(1.0, abs=1e-9)


class TestSolveDopf:
    def test_cheap_der_matches_brute_force(self, chain3):
        grid, topo = chain3
        # make node 2's DER the cheapest source
        cheap = dataclasses.replace(grid, c=np.array([5.0, 6.0, 1.0]))
        sol = solve_dopf(cheap, topo)
        assert sol.g_p[2] == pytest.approx(2.0, abs=1e-6)
        assert sol.f_p[1] == pytest.approx(-1.0, abs=1e-6)
        assert sol.f_p[0] == pytest.approx(0.0, abs=1e-6)

        # brute force over DER setpoints at 0.01 resolution (p side carries
        # all cost; q never binds in this instance)
        best = math.inf
        faces = polygon_coefficients(12)
        for g1 in np.arange(0.0, 2.0001, 0.01):
            for g2 in np.arange(0.0, 2.0001, 0.01):
                g0 = 2.0 - g1 - g2
                if g0 < 0.0:
                    continue
                f2 = 1.0 - g2
                f1 = 2.0 - g1 - g2
                ok = all(
                    gp * f + gq * 0.0 + gs * fmax <= 1e-12
                    for f, fmax in ((f1, 4.0), (f2, 2.5))
                    for gp, gq, gs in faces
                )
                if ok:
                    best = min(best, 5.0 * g0 + 6.0 * g1 + 1.0 * g2)
        assert sol.objective == pytest.approx(best, abs=1e-6)

    def test_all_loads_zero(self):
        grid = make_grid({1: 0, 2: 1, 3: 1}, d_p=[0.0, 0.0, 0.0, 0.0])
        topo = build_topology(grid)
        sol = solve_dopf(grid, topo)
        assert sol.objective == pytest.approx(0.0, abs=1e-7)
        assert np.allclose(sol.f_p, 0.0, atol=1e-7)
        assert np.allclose(sol.f_q, 0.0, atol=1e-7)
        assert np.allclose(sol.u, 1.0, atol=1e-7)

    def test_feeder15_all_ders_at_lower_bound(self, feeder15):
        grid, topo = feeder15
        sol = solve_dopf(grid, topo)
        assert np.allclose(sol.g_p[1:], 0.0, atol=1e-6)
        assert sol.g_p[0] == pytest.approx(grid.d_p.sum(), abs=1e-6)
        # cost: substation price times total MW
        assert sol.objective == pytest.approx(6.0 * 29.83, abs=1e-3)

    def test_power_conservation(self, feeder15):
        grid, topo = feeder15
        sol = solve_dopf(grid, topo)
        assert sol.g_p.sum() == pytest.approx(grid.d_p.sum(), abs=1e-8)
        assert sol.g_q.sum() == pytest.approx(grid.d_q.sum(), abs=1e-8)

    def test_flow_balance_per_line(self, feeder15):
        grid, topo = feeder15
        sol = solve_dopf(grid, topo)
        for line in grid.lines:
            down = sorted(topo.line_downstream_nodes[line])
            want = grid.d_p[down].sum() - sol.g_p[down].sum()
            assert sol.f_p[line - 1] == pytest.approx(want, abs=1e-8)

    def test_voltage_recursion(self, feeder15):
        grid, topo = feeder15
        sol = solve_dopf(grid, topo)
        for i in range(1, grid.node_count):
            drop = sum(
                2 * (grid.r[l - 1] * sol.f_p[l - 1] + grid.x[l - 1] * sol.f_q[l - 1])
                for l in topo.root_path_lines[i]
            )
            assert sol.u[i] == pytest.approx(1.0 - drop, abs=1e-8)

    def test_monotone_in_load(self, chain3):
        grid, topo = chain3
        rng = np.random.default_rng(23)
        base_obj = solve_dopf(grid, topo).objective
        for _ in range(5):
            node = int(rng.integers(1, 3))
            bump = float(rng.uniform(0.0, 0.3))
            heavier = grid.with_load(node, float(grid.d_p[node]) + bump)
            assert solve_dopf(heavier, topo).objective >= base_obj - 1e-7

    def test_infeasible_reports_status(self, chain3):
        grid, topo = chain3
        # load far beyond every rating
        hopeless = grid.with_load(2, 50.0)
        with pytest.raises(SolveError, match="status"):
            solve_dopf(hopeless, topo)

    def test_quadratic_cost_epigraph(self, chain3):
        grid, topo = chain3
        # substation-only dispatch with quadratic substation cost:
        # min 1*g0 + 0.5*g0^2 at g0 = 2 -> 2 + 2 = 4
        quad = dataclasses.replace(disable_ders(grid), c2=np.array([0.5, 0.0, 0.0]))
        sol = solve_dopf(quad, topo)
        assert sol.objective == pytest.approx(1.0 * 2.0 + 0.5 * 4.0, abs=1e-5)
