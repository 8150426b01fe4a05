import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from _oracles import best_partition_risk, big_f2, bottleneck, lambda_max_by_search
from kmstab.geometry import Codebook
from kmstab.harness.instances import instance_rng, probe_codebooks, random_measure
from kmstab.measures import DiscreteMeasure, from_samples, grid_discretize, uniform_rectangle
from kmstab.quantize import risk, solve
from kmstab.stability import (
    MarginWarning,
    a_mass,
    bigF_squared,
    c_infinity,
    c_q_lambda,
    certified_margin,
    f1,
    f2,
    hausdorff,
    lambda_n,
    margin_profile,
    p_of_t,
    p_star,
    stability_report,
    theorem_constant,
)

PAIR = Codebook([[-0.5, 0.0], [0.5, 0.0]])
FOUR = from_samples([[0.0], [1.0], [2.0], [3.0]])
FOUR_OPT = Codebook([0.5, 2.5])


def c_eps(eps):
    return Codebook([[-0.5, eps], [0.5, -eps]])


class TestF1:
    def test_identical(self):
        assert f1(PAIR, PAIR) == (0.0, (0, 1))

    def test_hand_example(self):
        d, sigma = f1(PAIR, c_eps(0.1))
        assert d == pytest.approx(0.1)
        assert sigma == (0, 1)

    def test_relabelled(self):
        d, sigma = f1(PAIR, Codebook([[0.5, 0.0], [-0.5, 0.0]]))
        assert d == 0.0 and sigma == (1, 0)

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            f1(PAIR, Codebook([[0.0, 0.0]]))

    def test_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            a, b = rng.normal(size=(2, 5, 2))
            assert f1(a, b)[0] == pytest.approx(bottleneck(a.tolist(), b.tolist()))

    @given(st.integers(0, 2**32 - 1), st.integers(2, 8))
    def test_enumeration_matches_assignment(self, seed, k):
        rng = np.random.default_rng(seed)
        a, b = rng.normal(size=(2, k, 3))
        de, se = f1(a, b, method="enumerate")
        da, sa = f1(a, b, method="assignment")
        assert de == pytest.approx(da, abs=1e-12)
        D = np.linalg.norm(a[:, None] - b[None], axis=2)
        assert D[np.arange(k), list(sa)].max() == pytest.approx(de, abs=1e-12)

    def test_large_k_uses_assignment(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=(14, 2))
        b = a[::-1] + 1e-3
        d, sigma = f1(a, b)
        assert d == pytest.approx(math.sqrt(2) * 1e-3)
        assert sigma == tuple(range(13, -1, -1))


class TestHausdorff:
    def test_equal_sets(self):
        assert hausdorff(PAIR, Codebook([[0.5, 0.0], [-0.5, 0.0]])) == 0.0

    def test_swapped_pairs(self):
        # three tight pairs; c puts three points near the first site, two near the second
        # and one near the third, so every point is close to the other set but any
        # bijection must send a center of the third pair across the map
        base = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
        cstar = Codebook(np.vstack([base, base + [0.01, 0.0]]))
        c = Codebook(np.vstack([base + [0.0, 0.01], base[[0, 0, 1]] + [[0.02, 0.0], [-0.02, 0.0], [0.0, -0.02]]]))
        assert hausdorff(cstar, c) < 0.05
        assert f1(cstar, c)[0] > 5

    @given(st.integers(0, 2**32 - 1))
    def test_bounded_by_f1(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.normal(size=(2, 4, 2))
        assert hausdorff(a, b) <= f1(a, b)[0] + 1e-12

    @given(st.integers(0, 2**32 - 1))
    def test_equals_f1_below_half_m(self, seed):
        rng = np.random.default_rng(seed)
        a = Codebook(rng.normal(size=(4, 2)) * 3)
        b = a.centers + rng.normal(size=(4, 2)) * 0.05 * a.m
        if hausdorff(a, b) < a.m / 2:
            assert hausdorff(a, b) == pytest.approx(f1(a, b)[0], abs=1e-9)


class TestF2:
    def test_same_codebook(self, rect_grid):
        assert f2(rect_grid, PAIR, PAIR)[0] == 0.0

    def test_rectangle_triangles(self):
        # two triangles between x_1 = 0 and x_1 = 2 eps x_2, total mass eps / 4
        P = grid_discretize(uniform_rectangle(), 400)
        assert f2(P, PAIR, c_eps(0.1))[0] == pytest.approx(0.025, rel=0.01)

    def test_labels_absorbed(self, rect_grid):
        assert f2(rect_grid, PAIR, Codebook([[0.5, 0.0], [-0.5, 0.0]])) == (0.0, (1, 0))

    @pytest.mark.parametrize("index", range(20))
    def test_same_matching_as_f1_when_close(self, index):
        rng = instance_rng(17, index)
        P, k = random_measure(rng)
        cstar = solve(P, k).codebook
        q = Codebook(cstar.centers + rng.normal(size=cstar.centers.shape) * 0.05 * cstar.m)
        if f1(cstar, q)[0] < cstar.m / 2:
            assert f2(P, cstar, q)[1] == f1(cstar, q)[1]

    @given(st.integers(0, 2**32 - 1), st.integers(2, 5))
    def test_enumeration_matches_assignment(self, seed, k):
        rng = np.random.default_rng(seed)
        P = from_samples(rng.normal(size=(30, 2)))
        a, b = rng.normal(size=(2, k, 2))
        assert f2(P, a, b, "enumerate")[0] == pytest.approx(f2(P, a, b, "assignment")[0], abs=1e-12)


class TestBigF:
    def test_same_codebook(self, rect_grid):
        assert bigF_squared(rect_grid, PAIR, PAIR) == 0.0

    def test_single_atom(self):
        P = from_samples([[0.2, 0.3]])
        c = Codebook([[0.0, 1.0], [1.0, 1.0]])
        assert bigF_squared(P, PAIR, c) == pytest.approx(0.5**2 + 1.0)

    def test_loop_oracle(self):
        rng = np.random.default_rng(4)
        P = from_samples(rng.normal(size=(40, 2)))
        a, b = rng.normal(size=(2, 3, 2))
        oracle = big_f2(P.support.tolist(), P.weights.tolist(), a.tolist(), b.tolist())
        assert bigF_squared(P, a, b) == pytest.approx(oracle)

    @pytest.mark.parametrize("eps", [0.2, 0.1, 0.05])
    def test_rectangle_closed_form(self, eps):
        # correctly classified mass 1 - eps/4 moves by eps, the two wedges (mass eps/4) by sqrt(1 + eps^2)
        P = grid_discretize(uniform_rectangle(), 400)
        assert bigF_squared(P, PAIR, c_eps(eps)) == pytest.approx(eps**2 + eps / 4, rel=0.01)

    @pytest.mark.xfail(strict=True, reason="F^2 = eps^2 + eps/4, not eps^2; see the rectangle closed-form test")
    def test_rectangle_F_equals_eps(self):
        P = grid_discretize(uniform_rectangle(), 400)
        assert bigF_squared(P, PAIR, c_eps(0.1)) == pytest.approx(0.01, rel=0.1)


class TestPofT:
    def test_no_atom_on_frontier(self):
        assert p_of_t(FOUR, [FOUR_OPT], 0.0) == 0.0

    def test_rectangle_strip(self):
        P = grid_discretize(uniform_rectangle(), 400)
        assert p_of_t(P, [PAIR], 0.2) == pytest.approx(0.2, abs=0.005)

    def test_everything_inflated(self):
        P = from_samples(np.random.default_rng(0).normal(size=(30, 2)))
        c = Codebook([[-1.0, 0.0], [1.0, 0.5], [0.0, 2.0]])
        t = c.M / 2 + np.linalg.norm(P.support[:, None] - c.centers[None], axis=2).min(axis=1).max()
        assert p_of_t(P, [c], t) == 1.0

    def test_worst_over_optima(self):
        P = from_samples([[-1.0], [0.0], [1.0]])
        a, b = Codebook([-1.0, 0.5]), Codebook([-0.5, 1.0])
        assert p_of_t(P, [a, b], 0.3) == max(p_of_t(P, [a], 0.3), p_of_t(P, [b], 0.3))

    def test_empty_optima(self):
        with pytest.raises(ValueError):
            p_of_t(FOUR, [], 0.1)


class TestPstar:
    def test_atoms_at_centers(self):
        P = from_samples([[0.0, 0.0], [1.0, 0.0]])
        assert p_star(P, Codebook([[0.0, 0.0], [1.0, 0.0]]), 0.1) == 0.0

    def test_nonpositive_t(self):
        with pytest.raises(ValueError):
            p_star(FOUR, FOUR_OPT, 0.0)

    @pytest.mark.parametrize("index", range(10))
    def test_bridges(self, index):
        P, k = random_measure(instance_rng(23, index))
        c = solve(P, k).codebook
        diam = float(np.linalg.norm(P.support[:, None] - P.support[None], axis=2).max())
        R = max(diam, float(np.linalg.norm(P.support[:, None] - c.centers[None], axis=2).max()))
        for t in np.linspace(0, c.m / 4, 12)[1:-1]:
            assert p_of_t(P, [c], t) <= p_star(P, c, 2 * t)
        for t in np.linspace(0, c.M, 12)[1:]:
            assert p_star(P, c, t) <= p_of_t(P, [c], (2 * R * t + 2 * t * t) / c.m)


class TestLambdaN:
    def test_support_at_centers(self):
        assert lambda_n(from_samples([[0.0], [1.0]]), Codebook([0.0, 1.0])) == math.inf

    def test_four_points(self):
        # atom 1: |c_1 - c_2|^2 / (2 <0.5, 2>) - 1 = 1; atom 2 by symmetry; atoms 0, 3 never cross
        assert lambda_n(FOUR, FOUR_OPT) == pytest.approx(1.0)
        oracle = min(lambda_max_by_search([x], [[0.5], [2.5]], hi=5.0, steps=50001) for x in (0.0, 1.0, 2.0, 3.0))
        assert oracle == pytest.approx(1.0, abs=1e-3)
        assert a_mass(FOUR, FOUR_OPT, 1.0) == 1.0
        assert a_mass(FOUR, FOUR_OPT, 1.001) == 0.5

    def test_rectangle_shrinks_with_resolution(self):
        vals = [lambda_n(grid_discretize(uniform_rectangle(), r), PAIR) for r in (20, 40, 80, 160)]
        assert all(b < a for a, b in zip(vals, vals[1:]))
        assert vals[-1] < 0.02

    def test_frontier_atom_warns(self):
        P = from_samples([[0.0], [1.0], [2.0]])
        with pytest.warns(MarginWarning):
            assert lambda_n(P, Codebook([0.0, 2.0])) == 0.0


class TestCq:
    def test_optimum_within_margin(self):
        for lam in (0.0, 0.5, 1.0):
            assert c_q_lambda(FOUR, FOUR_OPT, FOUR_OPT, lam) == pytest.approx(0.0, abs=1e-15)

    def test_lambda_zero_is_risk_gap(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            q = Codebook(rng.normal(size=(2, 1)) * 2)
            assert c_q_lambda(FOUR, FOUR_OPT, q, 0.0) == pytest.approx(risk(FOUR, FOUR_OPT) - risk(FOUR, q))

    def test_frontier_margin_alone_allows_positive_gap(self):
        # pushed atoms -0.5, 1.5, 1.5, 3.5 fit {-0.5, 13/6} better than the q* cells
        q = Codebook([-0.5, 13 / 6])
        assert c_q_lambda(FOUR, FOUR_OPT, q, lambda_n(FOUR, FOUR_OPT)) == pytest.approx(1 / 3)

    @pytest.mark.xfail(strict=True, reason="lambda_n only guarantees P(A(lambda)) = 1, not optimality of q* after the push")
    def test_random_search_at_lambda_n(self):
        lam = lambda_n(FOUR, FOUR_OPT)
        rng = np.random.default_rng(0)
        probes = [Codebook(np.sort(rng.uniform(-1, 4, 2))) for _ in range(2000)]
        assert max(c_q_lambda(FOUR, FOUR_OPT, q, lam) for q in probes) <= 1e-9

    @pytest.mark.parametrize("index", range(10))
    def test_random_search_at_certified_margin(self, index):
        rng = instance_rng(31, index)
        P, k = random_measure(rng)
        res = solve(P, k)
        if not res.certified_unique:
            pytest.skip("optimum not unique")
        lam = certified_margin(P, res.codebook)
        if lam <= 0 or math.isinf(lam):
            pytest.skip("no finite positive margin")
        probes = probe_codebooks(res.codebook, P.support, 300, rng)
        assert max(c_q_lambda(P, res.codebook, q, lam) for q in probes) <= 1e-9

    def test_negative_lambda(self):
        with pytest.raises(ValueError):
            c_q_lambda(FOUR, FOUR_OPT, FOUR_OPT, -1.0)


def _oracle_margin(atoms, weights, cstar, hi=2.0, iters=50):
    """Bisection on s = 1 + lambda: first push where some partition beats the q* cells (loop oracle)."""
    own = [min(range(len(cstar)), key=lambda j: abs(x[0] - cstar[j][0])) for x in atoms]
    r_star = sum(w * (x[0] - cstar[j][0]) ** 2 for x, w, j in zip(atoms, weights, own))

    def beaten(s):
        pushed = [[cstar[j][0] + s * (x[0] - cstar[j][0])] for x, j in zip(atoms, own)]
        return best_partition_risk(pushed, weights, len(cstar)) < s * s * r_star - 1e-12

    lo, hi_s = 1.0, 1.0 + hi
    assert beaten(hi_s)
    for _ in range(iters):
        mid = (lo + hi_s) / 2
        lo, hi_s = (lo, mid) if beaten(mid) else (mid, hi_s)
    return lo - 1.0


class TestCertifiedMargin:
    def test_four_points(self):
        lam = certified_margin(FOUR, FOUR_OPT)
        assert lam == pytest.approx(2 * math.sqrt(3) - 3, abs=1e-12)
        assert lam == pytest.approx(_oracle_margin([[0], [1], [2], [3]], [0.25] * 4, [[0.5], [2.5]]), abs=1e-9)

    def test_below_lambda_n(self):
        assert certified_margin(FOUR, FOUR_OPT) <= lambda_n(FOUR, FOUR_OPT)

    def test_c_infinity_sign(self):
        lam = certified_margin(FOUR, FOUR_OPT)
        assert c_infinity(FOUR, FOUR_OPT, lam * 0.99) == 0.0
        assert c_infinity(FOUR, FOUR_OPT, lam * 1.01) > 0.0

    def test_weighted_one_dimensional(self):
        P = DiscreteMeasure([[0.0], [1.0], [3.0], [4.5]], [0.1, 0.2, 0.3, 0.4])
        res = solve(P, 2)
        lam = certified_margin(P, res.codebook)
        oracle = _oracle_margin(P.support.tolist(), P.weights.tolist(), res.codebook.tolist(), hi=50.0)
        assert lam == pytest.approx(min(oracle, lambda_n(P, res.codebook)), abs=1e-7)

    def test_theorem_holds_at_certified_margin(self):
        lam = certified_margin(FOUR, FOUR_OPT)
        rng = np.random.default_rng(1)
        for _ in range(500):
            q = Codebook(rng.uniform(-1, 4, 2))
            lhs = bigF_squared(FOUR, FOUR_OPT, q)
            assert lhs <= theorem_constant(lam) * (risk(FOUR, q) - 0.25) + 1e-9

    def test_theorem_fails_at_lambda_n(self):
        q = Codebook([-0.5, 13 / 6])
        lhs = bigF_squared(FOUR, FOUR_OPT, q)
        rhs = theorem_constant(lambda_n(FOUR, FOUR_OPT)) * (risk(FOUR, q) - 0.25)
        # images under q: -1/2, 13/6, 13/6, 13/6; under q*: 1/2, 1/2, 5/2, 5/2
        assert lhs == pytest.approx((1 + 25 / 9 + 1 / 9 + 1 / 9) / 4)
        assert rhs == pytest.approx(2 / 3)
        assert lhs > rhs


class TestBundles:
    def test_theorem_constant(self):
        assert theorem_constant(1.0) == 2.0
        assert theorem_constant(math.inf) == 1.0
        assert theorem_constant(0.0) == math.inf

    @pytest.mark.parametrize("index", range(10))
    def test_report_invariants(self, index):
        rng = instance_rng(41, index)
        P, k = random_measure(rng)
        cstar = solve(P, k).codebook
        q = probe_codebooks(cstar, P.support, 3, rng)[-1]
        rep = stability_report(P, cstar, q)
        assert min(rep.f1, rep.f2, rep.bigF2, rep.hausdorff) >= 0
        assert rep.hausdorff <= rep.f1 + 1e-12
        assert sorted(rep.matching) == list(range(k))
        assert set(rep.as_dict()) == {"f1", "f2", "bigF2", "hausdorff", "excess_risk", "matching"}

    def test_margin_profile_monotone(self):
        P = grid_discretize(uniform_rectangle(), 60)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            prof = margin_profile(P, PAIR, np.linspace(0.01, 0.5, 20), [0.0, 0.01, 0.1, 1.0, 10.0])
        for curve, sign in ((prof.p_curve, 1), (prof.p_star_curve, 1), (prof.a_mass_curve, -1)):
            vals = np.array([v for _, v in curve])
            assert np.all(sign * np.diff(vals) >= 0)
        assert prof.a_mass_curve[0] == (0.0, 1.0)
        assert not prof.p_is_lower_bound
