import math

import numpy as np
import pytest
from scipy import optimize

from robust_mggd.errors import InvalidInputError
from robust_mggd.matrix_core import eig_sym, symmetrize
from robust_mggd.objective import MReg, perspective_phi
from robust_mggd.prox import (
    PerspectiveProxParams,
    prox_elastic_net_sym,
    prox_gm,
    prox_l1_sym,
    prox_log_barrier,
    prox_logdet,
    prox_perspective,
    prox_perspective_batch,
    prox_perspective_weighted,
    prox_power_penalty,
)

GOLD = (math.sqrt(5) - 1) / 2


def golden_min(fun, lo, hi, tol=1e-12):
    a, b = lo, hi
    c = b - GOLD * (b - a)
    d = a + GOLD * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLD * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLD * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


def assert_beats_probes(fun, x_in, x_out, gamma, rng, scale=1.0, n_probes=100):
    """Prox optimality: fun(out) + ||out-in||^2/(2 gamma) beats random probes."""
    x_in = np.asarray(x_in, dtype=float)
    x_out = np.asarray(x_out, dtype=float)
    base = fun(x_out) + np.sum((x_out - x_in) ** 2) / (2.0 * gamma)
    for _ in range(n_probes):
        radius = scale * 10.0 ** rng.uniform(-6, 0.5)
        z = x_out + radius * rng.standard_normal(x_out.shape)
        val = fun(z) + np.sum((z - x_in) ** 2) / (2.0 * gamma)
        assert val >= base - 1e-9


class TestLogBarrier:
    def test_zero_input(self):
        assert prox_log_barrier(0.0, 1.0, 1.0) == pytest.approx(1.0)

    def test_stationarity_example(self):
        out = prox_log_barrier(1.0, 2.0, 1.0)
        assert out == pytest.approx(2.0)
        assert out - 1.0 - 2.0 / out == pytest.approx(0.0, abs=1e-12)

    def test_negative_input_small_gamma(self):
        out = prox_log_barrier(-5.0, 0.01, 1.0)
        assert 0.0 < out < 0.01
        assert out - (-5.0) == pytest.approx(0.01 / out, rel=1e-10)
        oracle = golden_min(
            lambda x: -0.01 * math.log(x) + 0.5 * (x + 5.0) ** 2, 1e-8, 1.0
        )
        assert out == pytest.approx(oracle, abs=1e-8)

    def test_vectorized(self):
        xi = np.array([-1.0, 0.0, 3.0])
        out = prox_log_barrier(xi, 0.5, 2.0)
        assert out.shape == (3,)
        assert np.all(out > 0)

    def test_probe_optimality(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            xi = rng.uniform(-3, 3)
            gamma = rng.uniform(0.1, 2.0)
            out = prox_log_barrier(xi, gamma, 1.0)

            def fun(z):
                z = float(z)
                return -math.log(z) if z > 0 else math.inf

            assert_beats_probes(fun, np.array(xi), np.array(out), gamma, rng)

    def test_nonexpansive(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            a, b = rng.uniform(-5, 5, 2)
            pa = prox_log_barrier(a, 0.7, 2.0)
            pb = prox_log_barrier(b, 0.7, 2.0)
            assert abs(pa - pb) <= abs(a - b) + 1e-12


class TestLogDet:
    def test_identity_input(self):
        out = prox_logdet(np.eye(3), 1.0, 1)
        assert np.allclose(out, (1 + math.sqrt(5)) / 2 * np.eye(3))

    def test_zero_input(self):
        assert np.allclose(prox_logdet(np.zeros((2, 2)), 1.0, 1), np.eye(2))

    def test_matrix_stationarity(self):
        rng = np.random.default_rng(2)
        q = symmetrize(rng.standard_normal((4, 4)))
        gamma, n = 0.3, 5
        out = prox_logdet(q, gamma, n)
        # first-order condition: out - q = gamma * n * out^{-1}
        assert np.allclose(out - q, gamma * n * np.linalg.inv(out), atol=1e-8)

    def test_output_spd(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            q = symmetrize(rng.standard_normal((5, 5)) * 3)
            w = eig_sym(prox_logdet(q, 0.5, 2)).eigenvalues
            assert w[0] > 0

    def test_probe_optimality(self):
        rng = np.random.default_rng(4)
        q = symmetrize(rng.standard_normal((3, 3)))
        gamma, n = 0.4, 2
        out = prox_logdet(q, gamma, n)

        def fun(z):
            z = symmetrize(z.reshape(3, 3))
            w = eig_sym(z).eigenvalues
            if w[0] <= 0:
                return math.inf
            return -n * float(np.sum(np.log(w)))

        base = fun(out.ravel()) + np.sum((out - q) ** 2) / (2 * gamma)
        for _ in range(100):
            z = out + 10.0 ** rng.uniform(-6, 0) * symmetrize(rng.standard_normal((3, 3)))
            val = fun(z.ravel()) + np.sum((z - q) ** 2) / (2 * gamma)
            assert val >= base - 1e-9

    def test_nonexpansive(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            a = symmetrize(rng.standard_normal((3, 3)))
            b = symmetrize(rng.standard_normal((3, 3)))
            pa, pb = prox_logdet(a, 0.5, 2), prox_logdet(b, 0.5, 2)
            assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-12


class TestL1AndElasticNet:
    def test_zero_threshold_identity(self):
        rng = np.random.default_rng(6)
        q = symmetrize(rng.standard_normal((3, 3)))
        assert np.array_equal(prox_l1_sym(q, 0.0), q)

    def test_kills_small_entries(self):
        q = np.array([[0.5, -0.2], [-0.2, 0.5]])
        assert np.array_equal(prox_l1_sym(q, 1.0), np.zeros((2, 2)))

    def test_symmetry_preserved(self):
        rng = np.random.default_rng(7)
        out = prox_l1_sym(symmetrize(rng.standard_normal((4, 4))), 0.3)
        assert np.array_equal(out, out.T)

    def test_brute_force_2x2(self):
        rng = np.random.default_rng(8)
        q = symmetrize(rng.standard_normal((2, 2)))
        thr = 0.4
        out = prox_l1_sym(q, thr)

        grid = np.linspace(-2.5, 2.5, 201)
        d0, d1, o = np.meshgrid(grid, grid, grid, indexing="ij", sparse=True)
        vals = (
            thr * (np.abs(d0) + np.abs(d1) + 2 * np.abs(o))
            + 0.5 * ((d0 - q[0, 0]) ** 2 + (d1 - q[1, 1]) ** 2
                     + 2 * (o - q[0, 1]) ** 2)
        )
        i, j, k = np.unravel_index(np.argmin(vals), vals.shape)
        best = float(vals[i, j, k])
        best_x = np.array([[grid[i], grid[k]], [grid[k], grid[j]]])
        got = (
            thr * np.sum(np.abs(out))
            + 0.5 * np.sum((out - q) ** 2)
        )
        assert got <= best + 1e-9
        assert np.allclose(out, best_x, atol=0.05)  # grid resolution

    def test_elastic_net_reductions(self):
        rng = np.random.default_rng(9)
        q = symmetrize(rng.standard_normal((3, 3)))
        assert np.allclose(prox_elastic_net_sym(q, 0.3, 0.0, 0.7),
                           prox_l1_sym(q, 0.7 * 0.3))
        tiny = prox_elastic_net_sym(q, 1e-15, 0.5, 1.0)
        assert np.allclose(tiny, q / 1.5, atol=1e-12)

    def test_elastic_net_oracle(self):
        rng = np.random.default_rng(10)
        q = symmetrize(rng.standard_normal((2, 2)))
        lam, eps, gamma = 0.3, 0.4, 0.8
        out = prox_elastic_net_sym(q, lam, eps, gamma)

        def fun(flat):
            x = symmetrize(flat.reshape(2, 2))
            return gamma * (lam * np.sum(np.abs(x)) + 0.5 * eps * np.sum(x**2)) \
                + 0.5 * np.sum((x - q) ** 2)

        res = optimize.minimize(fun, q.ravel(), method="Nelder-Mead",
                                options=dict(xatol=1e-12, fatol=1e-14, maxiter=10000))
        assert np.allclose(out, symmetrize(res.x.reshape(2, 2)), atol=1e-8)

    def test_nonexpansive(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            a = symmetrize(rng.standard_normal((3, 3)))
            b = symmetrize(rng.standard_normal((3, 3)))
            for fn in (
                lambda m: prox_l1_sym(m, 0.5),
                lambda m: prox_elastic_net_sym(m, 0.3, 0.2, 0.9),
            ):
                assert np.linalg.norm(fn(a) - fn(b)) <= np.linalg.norm(a - b) + 1e-12


class TestGm:
    def test_fix_at(self):
        reg = MReg("fix_at", value=np.zeros(3))
        assert np.array_equal(prox_gm(np.array([1.0, -2.0, 3.0]), 0.5, reg), np.zeros(3))

    def test_zero_kind_identity(self):
        m = np.array([1.0, 2.0])
        assert np.array_equal(prox_gm(m, 1.0, MReg("zero")), m)

    def test_box_clamp(self):
        reg = MReg("box", lower=-np.ones(3), upper=np.ones(3))
        out = prox_gm(np.array([2.0, -3.0, 0.5]), 1.0, reg)
        assert np.array_equal(out, np.array([1.0, -1.0, 0.5]))

    def test_nonexpansive_box(self):
        rng = np.random.default_rng(12)
        reg = MReg("box", lower=-np.ones(2), upper=np.ones(2))
        for _ in range(30):
            a, b = rng.standard_normal(2), rng.standard_normal(2)
            pa, pb = prox_gm(a, 1.0, reg), prox_gm(b, 1.0, reg)
            assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-12


class TestPowerPenalty:
    def test_soft_threshold_case(self):
        assert prox_power_penalty(5.0, 1.0, 1.0, 1.0) == pytest.approx(4.0)

    def test_quadratic_case(self):
        assert prox_power_penalty(3.0, 1.0, 1.0, 2.0) == pytest.approx(1.0)

    def test_general_alpha_oracle(self):
        out = prox_power_penalty(2.0, 1.0, 1.0, 1.5)
        oracle = golden_min(lambda x: x**1.5 + 0.5 * (x - 2.0) ** 2, 0.0, 2.0)
        assert out == pytest.approx(oracle, abs=1e-8)

    def test_odd_symmetry(self):
        for alpha in (1.0, 1.5, 2.0, 3.0):
            a = prox_power_penalty(2.3, 0.7, 1.2, alpha)
            b = prox_power_penalty(-2.3, 0.7, 1.2, alpha)
            assert a == pytest.approx(-b, abs=1e-12)

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(13)
        t = rng.uniform(-4, 4, 20)
        out = prox_power_penalty(t, 0.8, 1.3, 2.5)
        for i in range(20):
            assert out[i] == pytest.approx(
                prox_power_penalty(float(t[i]), 0.8, 1.3, 2.5), abs=1e-10
            )

    def test_probe_optimality(self):
        rng = np.random.default_rng(14)
        for alpha in (1.0, 1.4, 2.0, 2.7):
            t = rng.uniform(-3, 3)
            gamma, eta = 0.6, 1.1
            out = prox_power_penalty(t, gamma, eta, alpha)

            def fun(z):
                return float(np.abs(z) ** alpha / eta**alpha)

            assert_beats_probes(fun, np.array(t), np.array(out), gamma, rng)

    def test_nonexpansive(self):
        rng = np.random.default_rng(15)
        for alpha in (1.0, 1.6, 2.0, 3.2):
            for _ in range(20):
                a, b = rng.uniform(-5, 5, 2)
                pa = prox_power_penalty(a, 0.5, 0.9, alpha)
                pb = prox_power_penalty(b, 0.5, 0.9, alpha)
                assert abs(pa - pb) <= abs(a - b) + 1e-10


class TestPerspective:
    def test_zero_u_positive_xi(self):
        pp = PerspectiveProxParams.from_beta(1.5, 1.0)
        out_u, out_xi = prox_perspective(np.zeros(2), 2.0, pp)
        assert np.array_equal(out_u, np.zeros(2))
        assert out_xi == 2.0

    def test_otherwise_branch(self):
        pp = PerspectiveProxParams.from_beta(1.5, 1.0)
        out_u, out_xi = prox_perspective(np.array([1e-8, 0.0]), -100.0, pp)
        assert np.array_equal(out_u, np.zeros(2))
        assert out_xi == 0.0

    def test_analytic_gaussian_case(self):
        pp = PerspectiveProxParams.from_beta(2.0, 1.0)
        assert pp.beta_star == pytest.approx(2.0)
        assert pp.varrho == pytest.approx(1.0)
        out_u, out_xi = prox_perspective(np.array([1.5, 0.0]), 0.0, pp)
        assert np.allclose(out_u, [0.5, 0.0], atol=1e-8)
        assert out_xi == pytest.approx(0.5, abs=1e-8)

    def test_probe_optimality(self):
        rng = np.random.default_rng(16)
        for beta in (1.5, 2.0, 3.0):
            for _ in range(5):
                gamma = rng.uniform(0.3, 2.0)
                pp = PerspectiveProxParams.from_beta(beta, gamma)
                u = rng.standard_normal(3)
                xi = rng.uniform(-1.0, 2.0)
                out_u, out_xi = prox_perspective(u, xi, pp)

                def fun(z):
                    return perspective_phi(z[:3], float(z[3]), beta)

                x_in = np.concatenate([u, [xi]])
                x_out = np.concatenate([out_u, [out_xi]])
                assert_beats_probes(fun, x_in, x_out, gamma, rng)

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(17)
        pp = PerspectiveProxParams.from_beta(1.5, 0.8)
        u = rng.standard_normal((3, 10))
        u[:, 4] = 0.0
        xi = rng.uniform(-1, 2, 10)
        out_u, out_xi = prox_perspective_batch(u, xi, pp)
        for i in range(10):
            su, sx = prox_perspective(u[:, i], float(xi[i]), pp)
            assert np.allclose(out_u[:, i], su, atol=1e-12)
            assert out_xi[i] == pytest.approx(sx, abs=1e-12)

    def test_nonexpansive(self):
        rng = np.random.default_rng(18)
        pp = PerspectiveProxParams.from_beta(1.7, 1.0)
        for _ in range(30):
            a = np.concatenate([rng.standard_normal(2), rng.uniform(-1, 2, 1)])
            b = np.concatenate([rng.standard_normal(2), rng.uniform(-1, 2, 1)])
            pau, pax = prox_perspective(a[:2], float(a[2]), pp)
            pbu, pbx = prox_perspective(b[:2], float(b[2]), pp)
            dist_out = math.sqrt(np.sum((pau - pbu) ** 2) + (pax - pbx) ** 2)
            assert dist_out <= np.linalg.norm(a - b) + 1e-10

    def test_moreau_identity_via_conjugate_projection(self):
        # (Id - prox_{g phi}) x = g * proj_S(x/g) with S the conjugate's domain,
        # S = {(v, s): s + sup_r (r ||v|| - r^beta / 2) <= 0}; the conjugate is
        # evaluated by brute-force 1-D maximization, never in closed form.
        rng = np.random.default_rng(19)
        beta = 2.0
        gamma = 0.7
        pp = PerspectiveProxParams.from_beta(beta, gamma)

        def r_best(w):
            # inner maximizer of r*w - r^beta/2, found by bisecting its
            # stationarity w = (beta/2) r^{beta-1}
            lo, hi = 0.0, 1.0
            while w - (beta / 2.0) * hi ** (beta - 1.0) > 0:
                hi *= 2.0
            for _ in range(100):
                mid = 0.5 * (lo + hi)
                if w - (beta / 2.0) * mid ** (beta - 1.0) > 0:
                    lo = mid
                else:
                    hi = mid
            return 0.5 * (lo + hi)

        def g_star(w):
            if w <= 0:
                return 0.0
            r = r_best(w)
            return r * w - r**beta / 2.0

        def proj_S(vu, vs):
            w_in = np.linalg.norm(vu)
            if vs + g_star(w_in) <= 1e-14:
                return vu, vs

            def dist2(w):
                return (w - w_in) ** 2 + (-g_star(w) - vs) ** 2

            def dist2_prime(w):
                # envelope theorem: d g*(w)/dw equals the inner maximizer
                return 2.0 * (w - w_in) + 2.0 * (g_star(w) + vs) * r_best(w)

            # the boundary-distance function can have several local minima;
            # bracket the global one on a fine grid, then refine on the
            # derivative (a flat-minimum golden search would lose precision)
            grid = np.linspace(0.0, w_in + 10.0, 2001)
            i = int(np.argmin([dist2(w) for w in grid]))
            lo = grid[max(i - 1, 0)]
            hi = grid[min(i + 1, len(grid) - 1)]
            for _ in range(100):
                mid = 0.5 * (lo + hi)
                if dist2_prime(mid) < 0:
                    lo = mid
                else:
                    hi = mid
            w_best = 0.5 * (lo + hi)
            direction = vu / w_in if w_in > 0 else np.zeros_like(vu)
            return w_best * direction, -g_star(w_best)

        for _ in range(10):
            u = rng.standard_normal(2) * 2
            xi = rng.uniform(-2, 2)
            pu, pxi = prox_perspective(u, xi, pp)
            res_u = (u - pu) / gamma
            res_xi = (xi - pxi) / gamma
            proj_u, proj_xi = proj_S(u / gamma, xi / gamma)
            assert np.allclose(res_u, proj_u, atol=1e-8)
            assert res_xi == pytest.approx(proj_xi, abs=1e-8)


class TestPerspectiveWeighted:
    def test_unit_weights_match_unweighted(self):
        rng = np.random.default_rng(20)
        pp = PerspectiveProxParams.from_beta(1.5, 1.0)
        u = rng.standard_normal(3)
        xi = 0.7
        a_u, a_xi = prox_perspective(u, xi, pp)
        b_u, b_xi = prox_perspective_weighted(u, xi, 1.0, 1.0, 1.5)
        assert np.allclose(a_u, b_u, atol=1e-12)
        assert a_xi == pytest.approx(b_xi, abs=1e-12)

    def test_nested_minimization_oracle(self):
        rng = np.random.default_rng(21)
        beta, g1, g2 = 1.5, 0.6, 1.7
        u = np.array([1.2, -0.4])
        xi = 0.3
        out_u, out_xi = prox_perspective_weighted(u, xi, g1, g2, beta)

        nu = np.linalg.norm(u)

        def outer(t):
            def inner(s):
                return s**beta / (2.0 * t ** (beta - 1.0)) + (s - nu) ** 2 / (2.0 * g1)
            s_best = golden_min(inner, 0.0, nu + 1.0)
            return inner(s_best) + (t - xi) ** 2 / (2.0 * g2)

        t_best = golden_min(outer, 1e-9, 10.0)

        def inner(s):
            return s**beta / (2.0 * t_best ** (beta - 1.0)) + (s - nu) ** 2 / (2.0 * g1)

        s_best = golden_min(inner, 0.0, nu + 1.0)
        assert out_xi == pytest.approx(t_best, abs=1e-6)
        assert np.linalg.norm(out_u) == pytest.approx(s_best, abs=1e-6)
        assert np.allclose(out_u / np.linalg.norm(out_u), u / nu, atol=1e-10)

    def test_scaling_consistency(self):
        # (c g1, c g2) equals the unweighted prox at scale c^{1/2} * gamma_eff
        # composed with the same variable change, coded here independently.
        rng = np.random.default_rng(22)
        beta, g1, g2, c = 1.7, 0.8, 1.3, 2.5
        for _ in range(10):
            u = rng.standard_normal(3)
            xi = rng.uniform(-1, 2)
            got_u, got_xi = prox_perspective_weighted(u, xi, c * g1, c * g2, beta)
            gamma_eff = math.sqrt((c * g1) ** beta / (c * g2) ** (beta - 1.0))
            pp = PerspectiveProxParams.from_beta(beta, gamma_eff)
            s1, s2 = math.sqrt(c * g1), math.sqrt(c * g2)
            ref_u, ref_xi = prox_perspective(u / s1, xi / s2, pp)
            assert np.allclose(got_u, s1 * ref_u, atol=1e-8)
            assert got_xi == pytest.approx(s2 * ref_xi, abs=1e-8)

    def test_weighted_optimality_probes(self):
        rng = np.random.default_rng(23)
        beta, g1, g2 = 1.6, 0.5, 2.0
        u = rng.standard_normal(2)
        xi = 0.4
        out_u, out_xi = prox_perspective_weighted(u, xi, g1, g2, beta)
        base = (
            perspective_phi(out_u, out_xi, beta)
            + np.sum((out_u - u) ** 2) / (2 * g1)
            + (out_xi - xi) ** 2 / (2 * g2)
        )
        for _ in range(200):
            z_u = out_u + 10.0 ** rng.uniform(-6, 0) * rng.standard_normal(2)
            z_xi = out_xi + 10.0 ** rng.uniform(-6, 0) * rng.standard_normal()
            val = (
                perspective_phi(z_u, z_xi, beta)
                + np.sum((z_u - u) ** 2) / (2 * g1)
                + (z_xi - xi) ** 2 / (2 * g2)
            )
            assert val >= base - 1e-9

    def test_invalid_weights(self):
        with pytest.raises(InvalidInputError):
            prox_perspective_weighted(np.ones(2), 0.0, -1.0, 1.0, 1.5)
