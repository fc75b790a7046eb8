"""Box-graph outer approximation, Morse graphs, Lyapunov, attractors."""

import numpy as np
import pytest

from endolab import (
    PolyMap,
    Window,
    attractors,
    build_box_map,
    hurley_report,
    lyapunov,
    morse_graph,
)
from endolab.conley import (
    INFINITY,
    BoxGrid,
    box_lyapunov,
    morse_to_dot,
    recurrent_mask,
    tarjan_scc,
)

BASILICA = PolyMap.from_coeffs_1d([-1, 0, 1])
HALF = PolyMap.from_coeffs_1d([0, 0.5])
DOUBLE = PolyMap.from_coeffs_1d([0, 2.0])
IDENT = PolyMap.from_coeffs_1d([0, 1.0])
W = Window.square(1, -1.75, 1.75)


def brute_scc(succ):
    """Quadratic-time SCC oracle via forward/backward reachability."""
    nodes = sorted(succ.keys())
    reach = {}
    for u in nodes:
        seen = {u}
        stack = [u]
        while stack:
            x = stack.pop()
            for v in succ[x]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        reach[u] = seen
    comps = []
    assigned = set()
    for u in nodes:
        if u in assigned:
            continue
        comp = {v for v in reach[u] if u in reach[v]}
        assigned |= comp
        comps.append(frozenset(comp))
    return set(comps)


class TestBoxGrid:
    def test_index_lattice_round_trip(self):
        grid = BoxGrid(window=Window.square(1, -1, 1), depth=3)
        for b in range(grid.count):
            assert grid.index(grid.lattice(b)) == b

    def test_box_of_points(self):
        grid = BoxGrid(window=Window.square(1, -1, 1), depth=2)
        pts = np.array([[-0.9 + 0.9j], [0.9 - 0.9j], [3.0 + 0j]])
        idx = grid.box_of_points(pts)
        assert idx[2] == INFINITY
        for i in (0, 1):
            lo, hi = grid.box_bounds(int(idx[i]))
            z = pts[i, 0]
            assert lo[0] <= z.real <= hi[0] and lo[1] <= z.imag <= hi[1]

    def test_centers_inside_their_boxes(self):
        grid = BoxGrid(window=Window.square(1, -1, 1), depth=2)
        c = grid.centers()
        assert np.array_equal(grid.box_of_points(c), np.arange(grid.count))


class TestTarjan:
    def test_matches_brute_force_on_random_graphs(self):
        rng = np.random.default_rng(8)
        for _ in range(30):
            k = int(rng.integers(2, 40))
            succ = {u: tuple(sorted(set(
                int(v) for v in rng.integers(0, k, size=rng.integers(0, 5))
            ))) for u in range(k)}
            mine = {frozenset(c) for c in tarjan_scc(succ)}
            assert mine == brute_scc(succ)

    def test_matches_brute_force_on_box_graphs(self):
        for f, depth in ((BASILICA, 3), (HALF, 3), (DOUBLE, 2)):
            g = build_box_map(f, W, depth)
            mine = {frozenset(c) for c in tarjan_scc(g.succ)}
            assert mine == brute_scc(g.succ)


class TestBoxGraph:
    def test_every_node_has_successors(self):
        g = build_box_map(BASILICA, W, 4)
        assert all(len(v) > 0 for v in g.succ.values())
        assert g.succ[INFINITY] == (INFINITY,)

    def test_outer_approximation_covers_true_images(self):
        # the exact image box of every sampled point is among the successors
        g = build_box_map(BASILICA, W, 4, seed=0)
        rng = np.random.default_rng(1)
        for b in rng.integers(0, g.grid.count, size=100):
            b = int(b)
            pts = W.to_complex(g.grid.box_samples(b, 16, seed=2))
            img = BASILICA.eval(pts)
            tgt = g.grid.box_of_points(img)
            assert set(int(t) for t in tgt) <= set(g.succ[b])

    def test_identity_map_all_recurrent(self):
        g = build_box_map(IDENT, Window.square(1, -1, 1), 3)
        mg = morse_graph(g)
        assert set(mg.recurrent_boxes()) == set(range(g.grid.count))


class TestMorseGraph:
    def test_condensation_acyclic_and_lyapunov_monotone(self):
        g = build_box_map(BASILICA, W, 4)
        mg = lyapunov(morse_graph(g))
        for u, v in mg.dag_edges:
            assert mg.lyapunov[u] > mg.lyapunov[v]
        L = box_lyapunov(mg)
        for u, vs in g.succ.items():
            for v in vs:
                if mg.class_of[u] == mg.class_of[v]:
                    assert L[u] == L[v]
                else:
                    assert L[u] > L[v]

    def test_expanding_map_recurrence_is_origin_and_infinity(self):
        g = build_box_map(DOUBLE, Window.square(1, -1, 1), 4)
        mg = morse_graph(g)
        rec = [cid for cid in range(len(mg.classes)) if mg.recurrent[cid]]
        # origin cluster and the infinity node
        assert mg.infinity_class() in rec
        origin_boxes = set(mg.recurrent_boxes())
        c = g.grid.centers()[sorted(origin_boxes)]
        assert np.abs(c).max() < 0.5

    def test_dot_output(self):
        g = build_box_map(HALF, Window.square(1, -1, 1), 3)
        mg = lyapunov(morse_graph(g))
        dot = morse_to_dot(mg)
        assert dot.startswith("digraph morse {")
        assert dot.count("doublecircle") == int(np.sum(mg.recurrent))


class TestAttractors:
    def test_half_map_attractors(self):
        g = build_box_map(HALF, Window.square(1, -1, 1), 4)
        recs = attractors(g)
        finite = [r for r in recs if not r.is_infinity]
        assert len(finite) == 1
        c = g.grid.centers()[sorted(b for b in finite[0].attractor
                                    if b != INFINITY)]
        assert np.abs(c).max() < 0.25

    def test_absorbing_invariant(self):
        g = build_box_map(BASILICA, W, 4)
        for r in attractors(g):
            U = r.absorbing
            for b in U:
                assert set(g.succ[b]) <= U
            assert r.attractor <= U <= r.basin

    def test_basilica_cycle_attractor(self):
        # depth 6 is the first scale at which the cycle class separates
        # from the chain-recurrent collar and becomes a genuine sink
        g = build_box_map(BASILICA, W, 6)
        recs = [r for r in attractors(g) if not r.is_infinity]
        assert len(recs) == 1
        c = g.grid.centers()[sorted(recs[0].attractor)]
        # the attractor clusters around the 2-cycle {0, -1}
        d = np.minimum(np.abs(c - 0.0), np.abs(c + 1.0)).max()
        assert d < 3 * g.grid.widths.max()

    def test_recurrent_mask_shape(self):
        g = build_box_map(HALF, Window.square(1, -1, 1), 3)
        mg = morse_graph(g)
        mask = recurrent_mask(mg)
        assert mask.shape == (8, 8)
        assert mask.sum() == len(mg.recurrent_boxes())


class TestHurleyReport:
    def test_basilica_report_structure(self):
        report, g, mg, recs = hurley_report(BASILICA, W, 6, m_max=2,
                                            seeds=256, seed=0)
        assert report["items"]["i_nonrecurrent_in_basins"]["pass"]
        assert all(x["pass"] for x in
                   report["items"]["ii_cycle_is_sink_class"])
        # item (iii) may report a chain-recurrent collar at coarse depth;
        # the count is bounded by the box total either way
        for x in report["items"]["iii_basin_nonrecurrent"]:
            assert x["violation_count"] <= g.grid.count

    def test_bad_pad_mode(self):
        with pytest.raises(ValueError):
            build_box_map(HALF, W, 3, pad_mode="nonsense")

    def test_bad_depth(self):
        with pytest.raises(ValueError):
            build_box_map(HALF, W, 0)
