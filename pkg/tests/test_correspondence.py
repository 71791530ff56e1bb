"""Correspondence checks: image straightness, cross-oracles, fits, sections."""

import cmath
import math
from fractions import Fraction

import numpy as np
import pytest

from scbilliard.billiard import BilliardState, trace
from scbilliard.correspondence import (
    CrossingDensity,
    benettin,
    box_counting_dimension,
    corner_blowup_fit,
    image_orbit,
    launch_direction,
    lyapunov_estimate,
    ode_from_billiard,
    periodic_from_perpendicular,
    poincare_section,
    pole_passage_constant,
    scattering_asymptotics,
    tail_exponent,
    verify_correspondence,
)
from scbilliard.errors import CornerEncounter, InsufficientTail, NotEscaped
from scbilliard.integrate import IntegrationConfig, integrate
from scbilliard.presets import (
    parallel_channel_spec,
    rational_reference_spec,
    scattering_spec,
)
from scbilliard.scmap import SCMap
from scbilliard.systems import build_system, state_from

F = Fraction


@pytest.fixture(scope="module")
def rational():
    spec = rational_reference_spec()
    return spec, build_system(spec), SCMap(spec, base_point=0.25)


@pytest.fixture(scope="module")
def generic_traj(rational):
    spec, sys, _ = rational
    init = state_from(spec, F(1, 4), 2.51558)
    traj = integrate(sys, init, IntegrationConfig(t_end=120.0, keep_dense=True))
    return init, traj


class TestImageOrbit:
    def test_straight_unit_speed(self, rational, generic_traj):
        spec, _, scmap = rational
        init, traj = generic_traj
        rep = image_orbit(spec, traj, scmap)
        assert rep.n_crossings >= 50
        assert rep.straightness_residual < 1e-6
        assert rep.speed_residual < 1e-6

    def test_first_segment_matches_launch_line(self, rational, generic_traj):
        # before the first crossing w(t) = e^{i chi} t by construction
        spec, _, scmap = rational
        init, traj = generic_traj
        chi_w = launch_direction(spec, init, scmap)
        t1 = traj.events[0].t
        for t, z1, z2 in zip(traj.ts, traj.x1s, traj.x2s):
            if 0 < t < t1:
                w = scmap.eval(z1 / z2)
                assert abs(w - t * cmath.exp(1j * chi_w)) < 1e-8 * t

    def test_cross_oracle_against_billiard(self, rational, generic_traj):
        spec, _, scmap = rational
        init, traj = generic_traj
        rep = verify_correspondence(spec, init, traj, scmap, tol=1e-6)
        assert rep.bounce_match
        assert rep.max_tau_err < 1e-6
        assert rep.max_chi_err < 1e-6
        assert rep.max_hit_err < 1e-6

    def test_corner_orbit_rejected(self, rational):
        spec, sys, scmap = rational
        v0 = scmap.polygon.vertices[0]
        theta = cmath.phase(scmap.derivative(0.25))
        chi_corner = cmath.phase(v0) - theta
        init = state_from(spec, F(1, 4), chi_corner)
        traj = integrate(sys, init, IntegrationConfig(t_end=10.0))
        assert traj.status == "blowup"
        with pytest.raises(CornerEncounter):
            image_orbit(spec, traj, scmap)


class TestOdeFromBilliard:
    def test_reconstruction_matches_integration(self, rational, generic_traj):
        spec, _, scmap = rational
        init, traj = generic_traj
        chi_w = launch_direction(spec, init, scmap)
        seq = trace(
            scmap.polygon,
            BilliardState(scmap.eval(complex(init.u0)), cmath.exp(1j * chi_w)),
            t_max=60.0,
            max_bounces=200,
        )
        times = [t for t in np.linspace(0.5, 55.0, 60)]
        states = ode_from_billiard(spec, scmap, seq, times, init)
        worst = 0.0
        for (t, x1, x2) in states:
            z1, z2 = traj.eval(t)
            worst = max(worst, abs(x1 - z1), abs(x2 - z2))
        assert worst < 1e-6

    def test_t0_recovers_initial_state(self, rational, generic_traj):
        spec, _, scmap = rational
        init, traj = generic_traj
        chi_w = launch_direction(spec, init, scmap)
        seq = trace(
            scmap.polygon,
            BilliardState(scmap.eval(complex(init.u0)), cmath.exp(1j * chi_w)),
            t_max=10.0,
        )
        ((_, x1, x2),) = ode_from_billiard(spec, scmap, seq, [0.0], init)
        assert abs(x1 - init.x1) < 1e-9
        assert abs(x2 - init.x2) < 1e-9


class TestCrossingDensity:
    def test_normalization(self, rational):
        spec, _, _ = rational
        cd = CrossingDensity(spec)
        assert cd.cdf(math.inf) == pytest.approx(1.0, abs=1e-10)
        assert cd.cdf(-1e12) == pytest.approx(0.0, abs=1e-10)

    def test_cdf_monotone_and_pdf_consistent(self, rational):
        spec, _, _ = rational
        cd = CrossingDensity(spec)
        xs = np.linspace(-4.0, 5.0, 101)
        cdfs = [cd.cdf(float(x)) for x in xs]
        assert all(b >= a - 1e-12 for a, b in zip(cdfs, cdfs[1:]))
        # derivative of the cdf matches the pdf away from prevertices
        for x in (-1.0, 0.1, 1.0, 2.0):
            h = 1e-5
            dd = (cd.cdf(x + h) - cd.cdf(x - h)) / (2 * h)
            assert dd == pytest.approx(cd.pdf(x), rel=1e-4)

    def test_divergence_exponent_at_prevertex(self, rational):
        # pdf ~ (u - u_a)^(mu_a - 1) near each prevertex
        spec, _, _ = rational
        cd = CrossingDensity(spec)
        mu0 = 0.5
        vals = [cd.pdf(-0.5 + d) for d in (1e-4, 1e-6)]
        slope = math.log(vals[1] / vals[0]) / math.log(1e-6 / 1e-4)
        assert slope == pytest.approx(mu0 - 1.0, abs=1e-3)

    def test_ks_against_moderate_run(self, rational):
        spec, sys, _ = rational
        init = state_from(spec, F(1, 4), 2.51558)
        traj = integrate(sys, init, IntegrationConfig(t_end=1500.0))
        cd = CrossingDensity(spec)
        ks = cd.ks_statistic([e.u for e in traj.boundary_events()])
        assert ks < 0.12  # short-horizon sanity bound; the long run is in acceptance


class TestTail:
    def test_insufficient_on_short_run(self, rational, generic_traj):
        _, traj = generic_traj
        with pytest.raises(InsufficientTail):
            tail_exponent(traj)

    def test_periodic_orbit_has_no_tail(self, rational):
        spec, sys, _ = rational
        init = state_from(spec, F(2, 5), math.pi / 2)
        traj = integrate(sys, init, IntegrationConfig(t_end=300.0))
        with pytest.raises(InsufficientTail):
            tail_exponent(traj)


class TestLyapunov:
    def test_small_exponent_on_reference(self, rational):
        spec, sys, _ = rational
        init = state_from(spec, F(1, 4), 2.51558)
        res = lyapunov_estimate(sys, init, t_max=600.0)
        assert abs(res.lam) < 5e-2

    def test_benettin_on_exponential_flow(self):
        # flow with known exponent 0.25: d/dt y = 0.25 y
        def flow(y, dt):
            return y * math.exp(0.25 * dt)

        res = benettin(flow, np.array([1.0 + 0j, 0.5 + 0j]), t_total=50.0, dt=0.5)
        assert res.lam == pytest.approx(0.25, rel=1e-6)

    def test_linear_growth_preferred_over_exponential(self, rational):
        # separation of nearby orbits grows linearly on corner-free stretches
        spec, sys, _ = rational
        init = state_from(spec, F(1, 4), 2.51558)
        res = lyapunov_estimate(sys, init, t_max=200.0, dt=1.0, delta0=1e-11)
        ts = np.array([h[0] for h in res.history])
        ds = np.array([h[1] for h in res.history])
        m = ds < 1e-4  # pre-renormalization stretch
        ts, ds = ts[m][:80], ds[m][:80]
        lin = np.polyfit(ts, ds / ds[0], 1)
        exp_fit = np.polyfit(ts, np.log(ds / ds[0]), 1)
        res_lin = np.mean((np.polyval(lin, ts) - ds / ds[0]) ** 2 / (ds / ds[0]) ** 2)
        res_exp = np.mean(
            (np.exp(np.polyval(exp_fit, ts)) - ds / ds[0]) ** 2 / (ds / ds[0]) ** 2
        )
        assert res_lin < res_exp


class TestCorner:
    def test_right_angle_corner_exponents(self, rational):
        spec, sys, scmap = rational
        v0 = scmap.polygon.vertices[0]
        theta = cmath.phase(scmap.derivative(0.25))
        chi_corner = cmath.phase(v0) - theta
        init = state_from(spec, F(1, 4), chi_corner)
        traj = integrate(
            sys, init, IntegrationConfig(t_end=10.0, blowup_threshold=1e10, keep_dense=True)
        )
        assert traj.status == "blowup"
        fit = corner_blowup_fit(traj)
        assert fit.vertex_index == 0
        assert fit.exponent_u == pytest.approx(2.0, abs=0.05)
        assert fit.exponent_x2 == pytest.approx(-1.0, abs=0.05)
        assert fit.k_fit == pytest.approx(fit.k_theory, rel=0.1)
        # blow-up time equals the distance to the corner image (unit speed)
        assert fit.t0 == pytest.approx(abs(v0), abs=1e-6)
        # the ratio x1/x2 converges to the prevertex
        assert fit.ratio_limit_err < 1e-4


class TestScattering:
    def test_negative_weight_power_law(self):
        spec = scattering_spec()
        sys = build_system(spec)
        init = state_from(spec, F(1, 4), 2.2)
        traj = integrate(sys, init, IntegrationConfig(t_end=2000.0))
        rep = scattering_asymptotics(spec, traj)
        assert rep.x2_slope == pytest.approx(-1.0, abs=0.05)
        assert rep.u_limit_error < 1e-4
        assert rep.amplitude_ratio == pytest.approx(1.0, abs=0.1)

    def test_parallel_channel_exponential(self):
        spec = parallel_channel_spec()
        sys = build_system(spec)
        init = state_from(spec, F(1, 4), 2.2)
        traj = integrate(sys, init, IntegrationConfig(t_end=400.0))
        rep = scattering_asymptotics(spec, traj)
        assert rep.exp_rate is not None and rep.exp_rate < -0.01

    def test_not_escaped_on_bounded_run(self):
        spec = scattering_spec()
        sys = build_system(spec)
        init = state_from(spec, F(1, 4), 2.2)
        traj = integrate(sys, init, IntegrationConfig(t_end=1.0))
        with pytest.raises(NotEscaped):
            scattering_asymptotics(spec, traj)


class TestPolePassage:
    def test_engineered_pole_transit(self, rational):
        # aim the launch exactly through the image of u = infinity
        spec, sys, scmap = rational
        pinf = scmap.polygon.phi_inf
        theta = cmath.phase(scmap.derivative(0.25))
        chi0 = cmath.phase(pinf) - theta
        init = state_from(spec, F(1, 4), chi0)
        traj = integrate(sys, init, IntegrationConfig(t_end=6.0, pole_threshold=1e7))
        poles = [e for e in traj.events if e.kind == "pole"]
        assert poles, "expected a pole-classified crossing"
        ev = poles[0]
        assert ev.t == pytest.approx(abs(pinf), abs=1e-4)
        # x2 has a simple zero there while x1 stays regular
        assert abs(ev.x2) < 1e-5
        assert abs(ev.x1) > 0.1
        c = pole_passage_constant(traj, ev, u_lo=1e2, u_hi=1e5)
        assert c == pytest.approx(1.0, abs=0.02)


class TestPeriodicFamilies:
    def test_u0_04_periodic(self, rational):
        spec, _, _ = rational
        pr = periodic_from_perpendicular(spec, F(2, 5), t_max=200.0)
        assert pr is not None
        assert pr.recurrence_error < 1e-6
        assert pr.period == pytest.approx(36.9781, abs=1e-3)

    def test_nearby_u0_same_family(self, rational):
        spec, _, _ = rational
        pa = periodic_from_perpendicular(spec, F(23, 50), t_max=200.0)
        pb = periodic_from_perpendicular(spec, F(47, 100), t_max=200.0)
        assert pa is not None and pb is not None
        assert pa.crossings_per_period == pb.crossings_per_period
        assert abs(pa.period - pb.period) < 0.35

    def test_u0_across_prevertex_changes_family(self, rational):
        spec, _, _ = rational
        pa = periodic_from_perpendicular(spec, F(2, 5), t_max=200.0)
        pb = periodic_from_perpendicular(spec, F(3, 5), t_max=200.0)
        assert pa is not None and pb is not None
        assert pa.crossings_per_period != pb.crossings_per_period or abs(
            pa.period - pb.period
        ) > 1.0


class TestSections:
    def test_periodic_orbit_finite_point_set(self, rational):
        spec, sys, _ = rational
        init = state_from(spec, F(2, 5), math.pi / 2)
        traj = integrate(sys, init, IntegrationConfig(t_end=600.0))
        pts = poincare_section(traj)
        assert len(pts) > 100
        dim, _ = box_counting_dimension(pts)
        assert dim < 0.4
