"""Jet-interpolation corrections, orbit surgery, and the parabolic lab."""

import numpy as np
import pytest

from endolab import (
    InfeasibleError,
    PolyMap,
    Window,
    close_orbit,
    escaping_construction,
    hakim_experiment,
    interpolate_correction,
    make_periodic_point,
    random_perturbation,
)
from endolab.perturb import (
    JetConstraint,
    _delta_map,
    monomials,
    sampled_sup_norm,
)

Z2 = PolyMap.from_coeffs_1d([0, 0, 1])
BASILICA = PolyMap.from_coeffs_1d([-1, 0, 1])
K = Window.square(1, -1.5, 1.5)


class TestInterpolateCorrection:
    def test_pinning_fidelity(self):
        # a value+jet constraint is met to near machine accuracy
        at = np.array([0.4 + 0.2j])
        tgt = np.array([-0.3 + 0.1j])
        jac = np.array([[1.5 - 0.5j]])
        corr = interpolate_correction(
            Z2, [JetConstraint.make(at, tgt, jac)], 6, K)
        jt = corr.corrected.jet(at)
        assert np.abs(jt.value - tgt).max() < 1e-10
        assert np.abs(jt.jacobian - jac).max() < 1e-10
        assert corr.constraint_residual < 1e-8

    def test_zero_constraint_gives_zero_delta(self):
        at = np.array([0.3 + 0j])
        jp = Z2.jet(at)
        corr = interpolate_correction(
            Z2, [JetConstraint.make(at, jp.value, jp.jacobian)], 5, K)
        assert corr.coeff_norm < 1e-12
        assert corr.sup_norm_on_K < 1e-10

    def test_least_norm_among_feasible_solutions(self):
        # any other delta meeting the same constraints has larger
        # coefficient norm; build alternatives by pinning extra points
        at = np.array([0.5 + 0.1j])
        tgt = np.array([0.1 - 0.2j])
        cons = [JetConstraint.make(at, tgt)]
        corr = interpolate_correction(Z2, cons, 5, K)
        rng = np.random.default_rng(0)
        for _ in range(10):
            p = rng.normal(scale=0.7, size=1) + 1j * rng.normal(scale=0.7,
                                                                size=1)
            extra = cons + [JetConstraint.make(
                p, Z2.eval(p) + 0.05 * rng.standard_normal())]
            alt = interpolate_correction(Z2, extra, 5, K)
            assert alt.coeff_norm >= corr.coeff_norm - 1e-12

    def test_infeasible_budget(self):
        # two independent jet constraints cannot fit in an affine map
        c1 = JetConstraint.make([0.0 + 0j], [0.5 + 0j],
                                [[2.0 + 0j]])
        c2 = JetConstraint.make([1.0 + 0j], [0.5 + 0j],
                                [[-2.0 + 0j]])
        with pytest.raises(InfeasibleError):
            interpolate_correction(Z2, [c1, c2], 1, K)

    def test_clustered_points_rejected_honestly(self):
        # nearly coincident constraint points make the system so
        # ill-conditioned that the built polynomial cannot reproduce the
        # targets; this must surface as InfeasibleError, not bad output
        pts = [0.5 + k * 1e-5 + 0j for k in range(12)]
        cons = [JetConstraint.make([p], [0.1 * (-1) ** k + 0j])
                for k, p in enumerate(pts)]
        with pytest.raises(InfeasibleError):
            interpolate_correction(Z2, cons, 14, K)
        # coincident points (below the dedup tolerance) are a usage error
        same = [JetConstraint.make([0.5 + 0j], [0.1 + 0j]),
                JetConstraint.make([0.5 + 1e-13j], [0.9 + 0j])]
        with pytest.raises(ValueError):
            interpolate_correction(Z2, same, 8, K)

    def test_sup_minimization_not_worse(self):
        at = np.array([1.3 + 0.4j])
        tgt = np.array([0.2 + 0j])
        cons = [JetConstraint.make(at, tgt)]
        a = interpolate_correction(Z2, cons, 8, K, minimize="coeff")
        b = interpolate_correction(Z2, cons, 8, K, minimize="sup")
        assert b.sup_norm_on_K <= a.sup_norm_on_K * 1.05


class TestCloseOrbit:
    def test_multiplier_law(self):
        q = np.array([0.37 + 0.21j])
        pj = np.array([[0.05 + 0.02j]])
        out = close_orbit(Z2, q, 3, pj, K, budget=10)
        cyc = out["cycle"]
        assert cyc.period == 4
        got = sorted(cyc.multipliers, key=abs)
        want = sorted(out["expected_multipliers"], key=abs)
        for a, b in zip(got, want):
            assert abs(a - b) <= 1e-7 * max(1.0, abs(b))

    def test_orbit_points_pinned(self):
        q = np.array([0.37 + 0.21j])
        pj = np.array([[0.1 + 0j]])
        out = close_orbit(Z2, q, 2, pj, K, budget=10)
        h = out["h"]
        x = q
        for _ in range(2):
            assert np.abs(h.eval(x) - Z2.eval(x)).max() < 1e-9
            x = Z2.eval(x)
        # closing step returns to q
        assert np.abs(h.eval(x) - q).max() < 1e-9

    def test_colliding_orbit_rejected(self):
        with pytest.raises(ValueError):
            close_orbit(Z2, np.array([1.0 + 0j]), 2,
                        np.array([[0.5 + 0j]]), K, budget=8)


class TestMakePeriodic:
    def test_kinds(self):
        q = np.array([0.41 + 0.13j])
        for kind in ("super_attracting", "repelling"):
            out = make_periodic_point(Z2, q, 2, kind, K, budget=10)
            assert out["cycle"].klass == kind
            assert out["cycle"].period == 3

    def test_saddle_needs_dimension(self):
        with pytest.raises(ValueError):
            make_periodic_point(Z2, np.array([0.4 + 0j]), 2, "saddle", K,
                                budget=8)

    def test_saddle_in_2d(self):
        f = PolyMap.from_terms(2, (
            (((2, 0), 1.0 + 0j), ((0, 1), 0.3 + 0j)),
            (((0, 2), 1.0 + 0j), ((1, 0), 0.2 + 0j)),
        ))
        q = np.array([0.31 + 0.11j, -0.22 + 0.14j])
        K2 = Window.square(2, -1.5, 1.5)
        out = make_periodic_point(f, q, 1, "saddle", K2, budget=6)
        assert out["cycle"].klass == "saddle"


class TestEscaping:
    WINDOWS = tuple(Window.square(1, -r, r) for r in (2, 3, 4, 5))

    def test_staged_escape_with_caps(self):
        q = np.array([1.1 + 0j])
        out = escaping_construction(Z2, q, self.WINDOWS, eps=1.0,
                                    budget=30, seed=0)
        eps = 1.0
        for s, nm in enumerate(out["stage_norms"]):
            assert nm <= eps / 2 ** (s + 1)
        w = out["witness"]
        assert not bool(self.WINDOWS[-1].contains(w[-1]))
        # the witness follows the original interior orbit
        x = q
        for k in range(out["m"]):
            assert np.abs(w[k] - x).max() < 1e-9
            x = Z2.eval(x)

    def test_trapped_point_infeasible(self):
        # q in the superattracting basin never leaves the first window
        with pytest.raises(InfeasibleError) as ei:
            escaping_construction(BASILICA, np.array([0.05 + 0j]),
                                  self.WINDOWS, eps=1.0, budget=20)
        assert ei.value.stage == 0

    def test_stage_attached_to_failure(self):
        q = np.array([1.1 + 0j])
        with pytest.raises(InfeasibleError) as ei:
            escaping_construction(Z2, q, self.WINDOWS, eps=1e-9,
                                  budget=30, seed=0)
        assert ei.value.stage is not None


class TestRandomPerturbation:
    def test_eps_scaling(self):
        g = random_perturbation(Z2, 0.01, K, seed=0)
        diff = PolyMap.from_terms(1, (tuple(
            (e, c) for e, c in _poly_minus(g, Z2)),))
        assert abs(sampled_sup_norm(diff, K, seed=0) - 0.01) < 1e-12

    def test_seed_determinism_and_zero_eps(self):
        a = random_perturbation(Z2, 0.05, K, seed=3)
        b = random_perturbation(Z2, 0.05, K, seed=3)
        c = random_perturbation(Z2, 0.05, K, seed=4)
        assert a == b
        assert a != c
        assert random_perturbation(Z2, 0.0, K, seed=0) == Z2
        with pytest.raises(ValueError):
            random_perturbation(Z2, -0.1, K)


def _poly_minus(g, f):
    terms = {}
    for e, c in g.components[0]:
        terms[e] = terms.get(e, 0) + c
    for e, c in f.components[0]:
        terms[e] = terms.get(e, 0) - c
    return [(e, c) for e, c in sorted(terms.items()) if c != 0]


class TestHakim:
    def test_parabolic_decay_and_multiplier(self):
        out = hakim_experiment(1, np.array([-0.5 + 0j]), steps=4000)
        kx = out["k_times_norm"]
        tail = kx[-1000:]
        assert np.abs(tail - 1.0).max() < 0.1
        assert out["multipliers"] == (1.0 + 0j,)

    def test_derivative_growth_on_shell(self):
        out = hakim_experiment(1, np.array([-0.5 + 0j]), steps=100,
                               growth_checkpoints=(4, 8, 16))
        g = out["derivative_growth"]
        assert g[4] < g[8] < g[16]

    def test_bad_start_rejected(self):
        with pytest.raises(ValueError):
            hakim_experiment(1, np.array([0.5 + 0j]), steps=100)
        with pytest.raises(ValueError):
            hakim_experiment(3, np.array([-0.5, -0.5, -0.5]))
