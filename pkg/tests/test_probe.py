import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cpdeconv.observation import noiseless_response, simulate_path
from cpdeconv.probe import (
    BandwidthError, ProbeCurve, ProbePlan, baseline_probe, default_span, exact_curve, gamma_profile,
    probe_estimate, probe_exact, probe_exact_spectral, separation_profile, sigma_z, t_lattice,
)
from cpdeconv.spectral import DEFAULT_GRID, Grid
from cpdeconv.testbed import Bump, ChangePointFunction, make_jump_function

THETA, H = 0.41, 0.05
HS = np.array([0.02, 0.03, 0.05, 0.08, 0.12, 0.2])
# same spacing as the default grid; wide enough for the slowly decaying profile tails
WIDE = Grid(-36.0, 36.0, 2**17)


def _slope(x, y):
    return np.polyfit(np.log(x), np.log(y), 1)[0]


@pytest.fixture(scope="module")
def noiseless(template_f, green1):
    return simulate_path(template_f, green1, 0.0, DEFAULT_GRID, 0)


@pytest.fixture(scope="module")
def plan(green1, smoother):
    return ProbePlan.build(DEFAULT_GRID, green1, smoother, H, default_span(smoother, H))


def _noise_block(seed0, count, eps):
    dx = DEFAULT_GRID.spacing
    from cpdeconv.observation import noise
    return np.stack([eps * np.sqrt(dx) * noise(seed0 + i, DEFAULT_GRID.n) for i in range(count)])


class TestProfile:
    def test_real_and_mean_zero(self, green1, smoother):
        G = gamma_profile(green1, smoother, H, DEFAULT_GRID)
        assert np.max(np.abs(G.values.imag)) < 1e-9 * np.max(np.abs(G.values))
        assert abs(np.sum(G.values.real) * DEFAULT_GRID.spacing) < 1e-9 * np.max(np.abs(G.values))

    def test_norm_slope(self, green1, smoother):
        norms = [gamma_profile(green1, smoother, h, DEFAULT_GRID).real().norm2() ** 2 for h in HS]
        assert _slope(HS, norms) == pytest.approx(-7.0, abs=0.3)

    def test_sigma_z_matches_profile_norm(self, green1, smoother):
        G = gamma_profile(green1, smoother, H, WIDE).real()
        assert sigma_z(green1, smoother, H, 1.0) == pytest.approx(G.norm2(), rel=1e-5)

    def test_nyquist_guard(self, green1, smoother):
        with pytest.raises(BandwidthError):
            gamma_profile(green1, smoother, 1e-4, DEFAULT_GRID)
        with pytest.raises(ValueError):
            gamma_profile(green1, smoother, -0.1, DEFAULT_GRID)


class TestOracle:
    def test_smooth_low_frequency_vanishes(self, smoother):
        # phi_hat is zero on (-1/3, 1/3), so every moment of phi vanishes and a
        # smooth f whose spectrum sits below 1/(3h) contributes nothing
        f = ChangePointFunction(THETA, 0.0, 0.5, (Bump(0.0, 1.0, 1 / np.sqrt(2 * np.pi)),))
        assert abs(probe_exact(f, smoother, H, 0.0)) < 1e-10
        assert abs(probe_exact_spectral(f, smoother, H, 0.0)) < 1e-10

    def test_tracks_band_content(self, smoother):
        # a narrow bump has energy inside the probe band; both oracles see it
        f = ChangePointFunction(THETA, 0.0, 0.5, (Bump(0.0, 1.0, 0.02),))
        a = probe_exact(f, smoother, H, 0.0)
        assert abs(a) > 1.0
        assert a == pytest.approx(probe_exact_spectral(f, smoother, H, 0.0), rel=1e-6)

    def test_affine_window(self, smoother):
        f = ChangePointFunction(THETA, 0.0, 0.5, (Bump(0.0, 1.0, 2.0),))
        assert abs(probe_exact(f, smoother, H, 2.0)) < 1e-6 * H**-2

    def test_jump_extremum(self, template_f, smoother):
        qs = smoother.landmarks.q_star
        expect = -H**-2 * smoother.derivative(qs, 1) * template_f.a_jump
        assert probe_exact(template_f, smoother, H, THETA - qs * H) == pytest.approx(expect, rel=1e-3)

    def test_two_oracles_agree(self, bump_f, smoother):
        t = t_lattice(H, -0.5, 1.5)
        a = probe_exact(bump_f, smoother, H, t)
        b = probe_exact_spectral(bump_f, smoother, H, t)
        assert np.max(np.abs(a - b)) < 1e-6 * np.max(np.abs(a))

    def test_translation(self, smoother):
        shift = 5 * (t_lattice(H, 0, 1)[1])
        f0 = make_jump_function(0.3, 1.0, 0.5)
        f1 = make_jump_function(0.3 + shift, 1.0, 0.5)
        t = np.linspace(0.1, 0.6, 41)
        assert np.max(np.abs(probe_exact(f1, smoother, H, t + shift) - probe_exact(f0, smoother, H, t))) < 1e-6


class TestEstimate:
    def test_noiseless_matches_oracle(self, noiseless, template_f, green1, smoother):
        c = probe_estimate(noiseless, green1, smoother, H)
        ex = probe_exact(template_f, smoother, H, c.t)
        assert c.kind == "estimated"
        assert np.max(np.abs(c.values - ex)) < 1e-3 * np.max(np.abs(ex))
        assert np.max(np.diff(c.t)) <= H / 50 + 1e-15

    def test_matches_direct_sum(self, green1, smoother, rng):
        # sum_i Gamma(x_i - t) dY_i against the chirp-z evaluation
        inc = rng.standard_normal(DEFAULT_GRID.n) * 1e-3
        G = gamma_profile(green1, smoother, H, WIDE).real()
        plan = ProbePlan.build(DEFAULT_GRID, green1, smoother, H, (0.0, 1.0))
        vals = plan.evaluate(inc)
        scale = np.max(np.abs(vals))
        # t = 0 is a grid node, so no interpolation is involved
        assert vals[0] == pytest.approx(np.sum(np.interp(DEFAULT_GRID.x, WIDE.x, G.values) * inc),
                                        abs=1e-10 * scale)
        for j in (17, 50, 400):
            direct = np.sum(np.interp(DEFAULT_GRID.x - plan.t[j], WIDE.x, G.values) * inc)
            assert vals[j] == pytest.approx(direct, abs=1e-4 * scale)

    def test_linear(self, plan, rng):
        a = rng.standard_normal(DEFAULT_GRID.n)
        b = rng.standard_normal(DEFAULT_GRID.n)
        lhs = plan.evaluate(2.0 * a - 3.0 * b)
        rhs = 2.0 * plan.evaluate(a) - 3.0 * plan.evaluate(b)
        assert np.max(np.abs(lhs - rhs)) < 1e-10 * np.max(np.abs(lhs))

    def test_batch_equals_rows(self, plan, rng):
        X = rng.standard_normal((3, DEFAULT_GRID.n))
        B = plan.evaluate(X)
        for i in range(3):
            assert np.allclose(B[i], plan.evaluate(X[i]), rtol=0, atol=1e-12 * np.abs(B).max())

    def test_noise_part_independent_of_f(self, template_f, bump_f, green1, plan):
        Z = []
        for f in (template_f, bump_f):
            resp = noiseless_response(f, green1, DEFAULT_GRID)
            noisy = simulate_path(f, green1, 0.1, DEFAULT_GRID, 42, resp)
            clean = simulate_path(f, green1, 0.0, DEFAULT_GRID, 42, resp)
            Z.append(plan.evaluate(noisy.increments) - plan.evaluate(clean.increments))
        assert np.max(np.abs(Z[0] - Z[1])) < 1e-10 * np.max(np.abs(Z[0]))

    @pytest.mark.slow
    def test_unbiased(self, noiseless, template_f, plan, green1, smoother):
        eps = 0.05
        idx = np.linspace(0, len(plan.t) - 1, 5).astype(int)
        truth = probe_exact(template_f, smoother, H, plan.t[idx])
        draws = np.vstack([plan.evaluate(noiseless.increments + _noise_block(s0, 100, eps))[:, idx]
                           for s0 in range(0, 1000, 100)])
        se = draws.std(axis=0, ddof=1) / np.sqrt(draws.shape[0])
        assert np.all(np.abs(draws.mean(axis=0) - truth) < 3 * se)
        sz = sigma_z(green1, smoother, H, eps)
        assert draws.std(axis=0, ddof=1) == pytest.approx(np.full(idx.size, sz), rel=0.1)

    def test_variance_slope(self, green1, smoother):
        eps = 0.05
        v = []
        for h in (0.03, 0.06, 0.12):
            p = ProbePlan.build(DEFAULT_GRID, green1, smoother, h, (0.0, 1.0))
            v.append(np.max(np.var(p.evaluate(_noise_block(500, 200, eps)), axis=0, ddof=1)))
        assert _slope([0.03, 0.06, 0.12], v) == pytest.approx(-7.0, abs=0.5)

    @pytest.mark.slow
    def test_sup_tail(self, green1, smoother, plan):
        lam = 4 * sigma_z(green1, smoother, H, 0.05)
        sup = np.concatenate([np.max(np.abs(plan.evaluate(_noise_block(s0, 100, 0.05))), axis=1)
                              for s0 in range(10_000, 10_500, 100)])
        assert np.mean(sup > lam) < 0.01

    def test_grid_mismatch(self, plan, green1):
        from cpdeconv.spectral import make_grid
        g = make_grid(-4.5, 13.5, 2**14)
        f = make_jump_function(THETA, 1.0, 0.5, grid=g)
        with pytest.raises(ValueError):
            plan.curve(simulate_path(f, green1, 0.0, g, 0))

    def test_span_inside_grid(self, green1, smoother):
        with pytest.raises(ValueError):
            ProbePlan.build(DEFAULT_GRID, green1, smoother, H, (-5.0, 1.0))


class TestBaseline:
    def test_exact_peak_near_theta(self, template_f, smoother):
        c = baseline_probe(template_f, None, smoother, H, mode="exact")
        assert abs(c.t[np.argmax(np.abs(c.values))] - THETA) < H / 10

    def test_noiseless_estimate(self, noiseless, template_f, green1, smoother):
        c = baseline_probe(noiseless, green1, smoother, H, t_grid=(0.0, 1.0))
        ex = probe_exact(template_f, smoother, H, c.t, order=1)
        assert c.kind == "baseline_estimated"
        assert np.max(np.abs(c.values - ex)) < 1e-3 * np.max(np.abs(ex))

    def test_variance_slope(self, green1, smoother):
        v = [sigma_z(green1, smoother, h, 1.0, order=1) ** 2 for h in HS]
        assert _slope(HS, v) == pytest.approx(-5.0, abs=0.5)

    def test_bad_mode(self, template_f, smoother):
        with pytest.raises(ValueError):
            baseline_probe(template_f, None, smoother, H, mode="oracle")


class TestSeparation:
    def test_positive(self, template_f, smoother):
        assert separation_profile(template_f, smoother, H, 0.1 * H)["inf_gap"] > 0

    def test_linear_in_delta(self, template_f, smoother):
        g1 = separation_profile(template_f, smoother, H, 0.02 * H)["inf_gap"]
        g2 = separation_profile(template_f, smoother, H, 0.04 * H)["inf_gap"]
        assert g2 / g1 == pytest.approx(2.0, rel=0.25)

    @pytest.mark.parametrize("delta", [0.0, 0.9 * H, -0.01])
    def test_range(self, template_f, smoother, delta):
        with pytest.raises(ValueError):
            separation_profile(template_f, smoother, H, delta)


class TestCurve:
    def test_csv_round_trip(self, tmp_path, noiseless, green1, smoother):
        c = probe_estimate(noiseless, green1, smoother, H)
        c.to_csv(tmp_path / "c.csv")
        d = ProbeCurve.from_csv(tmp_path / "c.csv")
        assert np.array_equal(c.t, d.t) and np.array_equal(c.values, d.values)
        assert d.curve_id == c.curve_id

    @pytest.mark.parametrize("t, v, kind", [([0, 1], [0, np.nan], "exact"), ([1, 0], [0, 0], "exact"),
                                            ([0, 1], [0, 0], "guess"), ([0, 1], [0], "exact")])
    def test_invariants(self, t, v, kind):
        with pytest.raises(ValueError):
            ProbeCurve(H, t, v, kind)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.005, 0.5), st.floats(-0.2, 0.3), st.floats(0.7, 1.2))
    def test_lattice(self, h, lo, hi):
        t = t_lattice(h, lo, hi)
        assert np.all(np.diff(t) <= h / 50 + 1e-15)
        assert t[0] >= lo - 1e-9 and t[-1] <= hi + 1e-9
        assert np.any(np.abs(t) < 1e-15) or lo > 0
        assert np.min(np.abs(t - 1.0)) < 1e-12 or hi < 1

    def test_exact_curve_kinds(self, template_f, smoother):
        assert exact_curve(template_f, smoother, H).kind == "exact"
        assert exact_curve(template_f, smoother, H, (0, 1), order=1).kind == "baseline_exact"
