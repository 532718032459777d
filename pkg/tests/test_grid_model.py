"""Grid model: topology index, case loading, hand-enumerated tree oracles."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpflow.grid_model import (
    GridError,
    RadialGrid,
    TopologyError,
    build_topology,
    bundled_case_path,
    load_case_file,
    reactive_load,
)


def make_grid(parent, d_p=None, **overrides):
    """Small helper: grid with unit impedances and roomy limits."""
    n = len(parent) + 1
    L = n - 1
    fields = dict(
        node_count=n,
        parent=parent,
        r=np.full(L, 0.01),
        x=np.full(L, 0.01),
        f_max=np.full(L, 10.0),
        d_p=np.zeros(n) if d_p is None else np.asarray(d_p, float),
        tan_phi=np.full(n, 0.5),
        g_p_min=np.zeros(n),
        g_p_max=np.full(n, 10.0),
        g_q_min=np.zeros(n),
        g_q_max=np.full(n, 5.0),
        v_min=np.array([1.0] + [0.9] * L),
        v_max=np.array([1.0] + [1.1] * L),
        c=np.ones(n),
        c2=np.zeros(n),
    )
    fields.update(overrides)
    return RadialGrid(**fields)


@pytest.fixture
def chain3():
    return make_grid({1: 0, 2: 1}, d_p=[0.0, 1.0, 1.0])


@pytest.fixture
def star3():
    return make_grid({1: 0, 2: 0}, d_p=[0.0, 1.0, 1.0])


class TestTopologyOracles:
    def test_chain3_hand_enumeration(self, chain3):
        topo = build_topology(chain3)
        assert topo.descendants[1] == frozenset({2})
        assert topo.root_path_lines[2] == (1, 2)
        # sign matrix: line 2 hangs strictly below node 1, node 2 sits at
        # the end of both lines
        assert topo.T[1, 1] == 1
        assert topo.T[2, 0] == -1
        assert topo.T[2, 1] == -1
        assert topo.T[0, 0] == 1 and topo.T[0, 1] == 1
        assert topo.line_upstream_nodes[2] == frozenset({0, 1})
        assert topo.line_downstream_nodes[2] == frozenset({2})
        assert topo.line_downstream_nodes[1] == frozenset({1, 2})

    def test_single_node_grid(self):
        grid = make_grid({}, d_p=[0.0])
        topo = build_topology(grid)
        assert topo.T.shape == (1, 0)
        assert topo.descendants[0] == frozenset()

    def test_star_hand_enumeration(self, star3):
        topo = build_topology(star3)
        assert topo.descendants[1] == frozenset()
        # node 1 is neither above nor below line 2
        assert topo.T[1, 1] == 0
        assert topo.T[2, 0] == 0
        assert topo.line_upstream_nodes[2] == frozenset({0})
        assert topo.children[0] == (1, 2)

    def test_root_sees_every_line(self, chain3, star3):
        for grid in (chain3, star3):
            topo = build_topology(grid)
            assert (topo.T[0] == 1).all()

    def test_column_sign_partition(self):
        grid = load_case_file(bundled_case_path("feeder15"))
        topo = build_topology(grid)
        for line in grid.lines:
            col = topo.T[:, line - 1]
            down = topo.line_downstream_nodes[line]
            up = topo.line_upstream_nodes[line]
            assert col[sorted(down)].sum() == -len(down)
            assert col[sorted(up)].sum() == len(up)
            rest = set(range(grid.node_count)) - down - up
            assert all(col[i] == 0 for i in rest)

    def test_cycle_detection_names_node(self):
        with pytest.raises(TopologyError, match="node"):
            build_topology(make_grid({1: 2, 2: 1, 3: 0}, d_p=[0, 1, 1, 1]))

    def test_self_parent_rejected(self):
        with pytest.raises(GridError):
            make_grid({1: 1}, d_p=[0.0, 1.0])

    def test_idempotent_rebuild(self, chain3):
        a = build_topology(chain3)
        b = build_topology(chain3)
        assert np.array_equal(a.T, b.T)
        assert a.descendants == b.descendants
        assert a.root_path_lines == b.root_path_lines


class TestRadialGridValidation:
    def test_root_load_must_be_zero(self):
        with pytest.raises(GridError, match="substation"):
            make_grid({1: 0}, d_p=[0.5, 1.0])

    def test_root_voltage_fixed(self):
        with pytest.raises(GridError, match="v_min"):
            make_grid({1: 0}, d_p=[0, 1], v_min=np.array([0.95, 0.9]),
                      v_max=np.array([1.05, 1.1]))

    def test_negative_impedance_rejected(self):
        with pytest.raises(GridError, match="r: "):
            make_grid({1: 0}, d_p=[0, 1], r=np.array([-0.01]))

    def test_crossed_bounds_rejected(self):
        with pytest.raises(GridError):
            make_grid({1: 0}, d_p=[0, 1], g_p_min=np.array([0.0, 5.0]),
                      g_p_max=np.array([10.0, 1.0]))

    def test_arrays_immutable(self, chain3):
        with pytest.raises(ValueError):
            chain3.d_p[1] = 7.0

    def test_with_load_replaces_one_entry(self, chain3):
        shifted = chain3.with_load(2, 1.3)
        assert shifted.d_p[2] == 1.3
        assert shifted.d_p[1] == chain3.d_p[1]
        assert chain3.d_p[2] == 1.0

    def test_d_q_derived_via_tan_phi(self, chain3):
        assert np.allclose(chain3.d_q, chain3.d_p * 0.5)


class TestReactiveLoad:
    def test_direct_product(self, chain3):
        assert reactive_load(chain3, 1) == pytest.approx(0.5)

    def test_zero_load(self):
        grid = make_grid({1: 0}, d_p=[0.0, 0.0])
        assert reactive_load(grid, 1) == 0.0

    def test_table_value(self):
        grid = make_grid({1: 0}, d_p=[0.0, 2.35])
        assert reactive_load(grid, 1) == pytest.approx(1.175)

    def test_root_rejected(self, chain3):
        with pytest.raises(GridError):
            reactive_load(chain3, 0)


class TestCaseLoading:
    def test_bundled_feeder15(self):
        grid = load_case_file(bundled_case_path("feeder15"))
        assert grid.node_count == 15
        expected = [2.01, 2.01, 2.91, 2.35, 2.19, 2.01, 1.73,
                    2.35, 2.29, 2.17, 1.32, 2.24, 2.24, 2.01]
        assert np.allclose(grid.d_p[1:] * grid.base_mva, expected)
        assert grid.v_min[0] == grid.v_max[0] == 1.0

    def test_bundled_chain3(self):
        grid = load_case_file(bundled_case_path("chain3"))
        assert grid.node_count == 3
        assert grid.parent[2] == 1

    def test_unknown_bundled_name(self):
        with pytest.raises(GridError, match="bundled"):
            bundled_case_path("feeder99")

    def test_trivial_single_node(self, tmp_path):
        doc = {"base_mva": 1.0,
               "nodes": [{"id": 0, "d_p_mw": 0.0, "tan_phi": 0.5,
                          "g_p_min_mw": 0.0, "g_p_max_mw": 1.0,
                          "g_q_min_mw": 0.0, "g_q_max_mw": 1.0,
                          "v_min_pu": 1.0, "v_max_pu": 1.0, "c": 1.0}],
               "lines": []}
        p = tmp_path / "one.json"
        p.write_text(json.dumps(doc))
        grid = load_case_file(str(p))
        assert grid.node_count == 1
        assert grid.line_count == 0

    def test_duplicate_line_rejected(self, tmp_path):
        doc = json.loads(open(bundled_case_path("chain3")).read())
        doc["lines"][1] = dict(doc["lines"][0])
        p = tmp_path / "dup.json"
        p.write_text(json.dumps(doc))
        with pytest.raises(GridError, match="duplicate line"):
            load_case_file(str(p))

    def test_error_carries_field_path(self, tmp_path):
        doc = json.loads(open(bundled_case_path("chain3")).read())
        del doc["nodes"][1]["tan_phi"]
        p = tmp_path / "bad.json"
        p.write_text(json.dumps(doc))
        with pytest.raises(GridError, match=r"tan_phi"):
            load_case_file(str(p))

    def test_per_unit_conversion(self):
        grid = load_case_file(bundled_case_path("feeder15"))
        # 2.01 MW on a 10 MVA base
        assert grid.d_p[1] == pytest.approx(0.201)

    def test_c2_defaults_to_zero(self, tmp_path):
        doc = json.loads(open(bundled_case_path("chain3")).read())
        for node in doc["nodes"]:
            node.pop("c2", None)
        p = tmp_path / "noc2.json"
        p.write_text(json.dumps(doc))
        grid = load_case_file(str(p))
        assert (grid.c2 == 0).all()

    def test_line_order_does_not_matter(self, tmp_path):
        doc = json.loads(open(bundled_case_path("feeder15")).read())
        doc["lines"] = list(reversed(doc["lines"]))
        p = tmp_path / "rev.json"
        p.write_text(json.dumps(doc))
        a = build_topology(load_case_file(bundled_case_path("feeder15")))
        b = build_topology(load_case_file(str(p)))
        assert np.array_equal(a.T, b.T)
        assert a.root_path_lines == b.root_path_lines


def random_radial(draw_parent_choices, n):
    """Parent map where each node attaches to a random earlier node."""
    parent = {}
    for node in range(1, n):
        parent[node] = draw_parent_choices[node - 1] % node
    return parent


@settings(max_examples=40, deadline=None)
@given(st.data())
def test_topology_properties_random_trees(data):
    n = data.draw(st.integers(min_value=2, max_value=20))
    choices = data.draw(st.lists(st.integers(min_value=0, max_value=1000),
                                 min_size=n - 1, max_size=n - 1))
    grid = make_grid(random_radial(choices, n), d_p=[0.0] + [1.0] * (n - 1))
    topo = build_topology(grid)
    # every column has exactly the subtree as -1 entries, ancestors as +1
    for line in grid.lines:
        col = topo.T[:, line - 1]
        assert col[line] == -1
        assert col[0] == 1
        down = topo.line_downstream_nodes[line]
        assert (col == -1).sum() == len(down)
        assert (col == 1).sum() == len(topo.line_upstream_nodes[line])
    # descendant sets nest along root paths
    for node in range(1, n):
        for anc in topo.ancestors(node):
            assert node in topo.descendants[anc] | {anc}
