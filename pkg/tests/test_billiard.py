"""Billiard dynamics: reflection law, unfolding oracle, periodicity, statistics."""

import cmath
import math
import random
from fractions import Fraction

import pytest

from scbilliard.billiard import (
    BilliardState,
    _compose_reflection,
    boundary_histogram,
    detect_periodic,
    direction_set,
    fold,
    trace,
    unfold,
)
from scbilliard.scmap import Polygon, SCMap
from scbilliard.systems import BilliardSpec

F = Fraction


def square() -> Polygon:
    # hand-built test polygon (not map-generated)
    return Polygon(
        vertices=[0j, 1 + 0j, 1 + 1j, 1j],
        angles=[math.pi / 2] * 4,
        bounded=True,
        phi_inf=0.5 + 0.5j,
        base_point=0.5,
    )


@pytest.fixture(scope="module")
def tri_map():
    spec = BilliardSpec(2, (F(1, 2), F(2, 7), F(3, 14)), (F(-1, 2), F(1, 2), F(3, 2)))
    return SCMap(spec, base_point=0.25)


class TestTrace:
    def test_square_diamond_period4(self):
        poly = square()
        st = BilliardState(0.5 + 0j, cmath.exp(1j * math.pi / 4))
        seq = trace(poly, st, max_bounces=40)
        per = detect_periodic(seq, tol=1e-9)
        assert per is not None and per.bounce_count == 4
        assert per.period == pytest.approx(4 * math.hypot(0.5, 0.5), abs=1e-12)

    def test_reflection_law(self, tri_map):
        poly = tri_map.polygon
        st = BilliardState(0j, cmath.exp(1j * 2.5))
        seq = trace(poly, st, max_bounces=200)
        chi = seq.launch.chi
        for b in seq.bounces:
            a0, b0 = poly.sides()[b.side]
            theta = cmath.phase(b0 - a0)
            assert abs((b.chi + chi - 2 * theta + math.pi) % (2 * math.pi) - math.pi) < 1e-9
            chi = b.chi

    def test_speed_one(self, tri_map):
        poly = tri_map.polygon
        st = BilliardState(0j, cmath.exp(1j * 2.5))
        seq = trace(poly, st, max_bounces=100)
        prev_t, prev_p = 0.0, st.position
        for b in seq.bounces:
            assert abs(b.point - prev_p) == pytest.approx(b.tau - prev_t, abs=1e-9)
            prev_t, prev_p = b.tau, b.point

    def test_corner_hit_classified(self, tri_map):
        poly = tri_map.polygon
        v0 = poly.vertices[0]
        st = BilliardState(0j, (v0 - 0j) / abs(v0))
        seq = trace(poly, st, max_bounces=10)
        assert seq.terminal == "corner"
        assert seq.corner_vertex == 0
        assert seq.corner_time == pytest.approx(abs(v0), abs=1e-9)

    def test_corner_discontinuity(self, tri_map):
        # orbits passing a non-pi/n corner on opposite sides separate by a
        # direction jump bounded away from zero as the offset shrinks
        poly = tri_map.polygon
        v1 = poly.vertices[1]  # angle 2pi/7, not pi/n
        start = sum(poly.vertices) / 3.0
        aim = (v1 - start) / abs(v1 - start)
        perp = 1j * aim
        jumps = []
        for delta in (1e-4, 1e-6):
            dirs = []
            for sgn in (+1, -1):
                st = BilliardState(start + sgn * delta * perp, aim)
                seq = trace(poly, st, max_bounces=3)
                assert seq.bounces, "offset orbit should bounce, not corner-hit"
                dirs.append(seq.bounces[1].chi)
            jumps.append(abs((dirs[0] - dirs[1] + math.pi) % (2 * math.pi) - math.pi))
        assert min(jumps) > 0.1

    def test_time_reversal_replays_backward(self, tri_map):
        poly = tri_map.polygon
        st = BilliardState(0j, cmath.exp(1j * 2.5))
        seq = trace(poly, st, max_bounces=25)
        last = seq.bounces[-1]
        mid = last.point + 0.3 * cmath.exp(1j * last.chi)
        rev = trace(
            poly, BilliardState(mid, -cmath.exp(1j * last.chi)), max_bounces=len(seq.bounces)
        )
        fwd_pts = [b.point for b in reversed(seq.bounces)]
        for a, b in zip(fwd_pts, rev.bounces):
            assert abs(a - b.point) < 1e-8


class TestUnfold:
    def test_square_horizontal_strip(self):
        poly = square()
        st = BilliardState(0.25 + 0.5j, 1.0 + 0j)
        path = unfold(poly, st, t_max=10.0)
        # straight horizontal line: crossings at x = 1, 2, 3, ...
        assert path.crossing_times == pytest.approx(
            [0.75 + k for k in range(len(path.crossing_times))], abs=1e-12
        )

    def test_fold_equals_trace_random_launches(self, tri_map):
        poly = tri_map.polygon
        rng = random.Random(3)
        centroid = sum(poly.vertices) / 3.0
        for _ in range(40):
            w0 = centroid + 0.3 * poly.diameter * complex(
                rng.uniform(-1, 1), rng.uniform(-1, 1)
            )
            if not poly.contains(w0):
                continue
            st = BilliardState(w0, cmath.exp(1j * rng.uniform(0, 2 * math.pi)))
            a = trace(poly, st, max_bounces=60)
            b = fold(unfold(poly, st, max_bounces=60))
            assert a.terminal == b.terminal
            assert len(a.bounces) == len(b.bounces)
            for x, y in zip(a.bounces, b.bounces):
                assert x.side == y.side
                assert abs(x.tau - y.tau) < 1e-9
                assert abs(x.point - y.point) < 1e-9
                assert abs((x.chi - y.chi + math.pi) % (2 * math.pi) - math.pi) < 1e-9

    def test_unfolded_length_is_elapsed_time(self, tri_map):
        poly = tri_map.polygon
        st = BilliardState(0j, cmath.exp(1j * 2.5))
        path = unfold(poly, st, t_max=37.0)
        assert path.length == pytest.approx(37.0)

    def test_isometry_composition_is_involutive(self):
        iso = _compose_reflection(
            _compose_reflection(
                __import__("scbilliard.billiard", fromlist=["Isometry"]).Isometry(),
                1 + 2j,
                cmath.exp(0.7j),
            ),
            1 + 2j,
            cmath.exp(0.7j),
        )
        z = 0.3 - 4j
        assert abs(iso.apply(z) - z) < 1e-12


class TestPeriodicity:
    def test_perpendicular_launch_periodic(self, tri_map):
        # rational polygon: a perpendicular hit retraces and closes up
        poly = tri_map.polygon
        a0, b0 = poly.sides()[0]
        mid = a0 + 0.37 * (b0 - a0)
        normal = 1j * (b0 - a0) / abs(b0 - a0)
        seq = trace(poly, BilliardState(mid, normal), max_bounces=400)
        per = detect_periodic(seq, tol=1e-7)
        assert per is not None
        assert per.bounce_count % 2 == 0

    def test_parallel_family_of_even_period(self):
        poly = square()
        st = BilliardState(0.25 + 0j, 1j)
        seq = trace(poly, st, max_bounces=30)
        per = detect_periodic(seq, tol=1e-9, polygon=poly, check_family=True)
        assert per is not None and per.bounce_count == 2
        assert per.max_parallel_shift and per.max_parallel_shift > 1e-3

    def test_generic_irrational_launch_not_periodic(self, tri_map):
        poly = tri_map.polygon
        st = BilliardState(0j, cmath.exp(1j * 2.51558))
        seq = trace(poly, st, max_bounces=2000)
        assert seq.terminal == "running"
        assert detect_periodic(seq, tol=1e-9) is None


class TestDirectionSet:
    def test_square_four_directions(self):
        poly = square()
        st = BilliardState(0.3 + 0j, cmath.exp(1j * 1.1))
        seq = trace(poly, st, max_bounces=500)
        assert len(direction_set(seq)) <= 4

    def test_rational_triangle_direction_bound(self, tri_map):
        # denominators (2, 7, 14): lcm 14, direction count <= 28
        poly = tri_map.polygon
        st = BilliardState(0j, cmath.exp(1j * 2.51558))
        seq = trace(poly, st, max_bounces=5000)
        dirs = direction_set(seq, cluster_tol=1e-6)
        assert len(dirs) <= 28

    def test_irrational_triangle_exceeds_bound(self):
        mu0, mu1 = 1 / math.sqrt(5), 1 / math.sqrt(7)
        spec = BilliardSpec(
            2, (mu0, mu1, 1.0 - mu0 - mu1), (F(-1, 2), F(1, 2), F(3, 2))
        )
        poly = SCMap(spec, base_point=0.25).polygon
        st = BilliardState(0j, cmath.exp(1j * 2.51558))
        seq = trace(poly, st, max_bounces=5000)
        assert len(direction_set(seq, cluster_tol=1e-6)) > 28


class TestBoundaryHistogram:
    def test_rational_generic_direction_uniform(self, tri_map):
        # same launch as the reference ergodic run: boundary start at the
        # base-point image, direction chi0 = 2.51558 relative to the side
        poly = tri_map.polygon
        chi_w = cmath.phase(tri_map.derivative(0.25)) + 2.51558
        st = BilliardState(0j, cmath.exp(1j * chi_w))
        seq = trace(poly, st, max_bounces=100_000)
        _, _, ks = boundary_histogram(seq, poly)
        assert ks < 0.02

    def test_periodic_orbit_concentrates(self):
        poly = square()
        st = BilliardState(0.5 + 0j, cmath.exp(1j * math.pi / 4))
        seq = trace(poly, st, max_bounces=400)
        _, hist, ks = boundary_histogram(seq, poly, bins=40)
        assert ks > 0.1  # atoms, grossly non-uniform
        assert (hist > 0).sum() <= 6


class TestEscape:
    def test_unbounded_channel_escape(self):
        spec = BilliardSpec(2, (F(-1, 4), F(3, 4), F(1, 2)), (F(-1, 2), F(1, 2), F(3, 2)))
        poly = SCMap(spec, base_point=1.0).polygon
        # aim straight into the channel mouth from inside
        ch = poly.channels[0]
        mouth = 0.5 * (ch.base_left + ch.base_right)
        outward = 0.5 * (ch.dir_left + ch.dir_right)
        st = BilliardState(mouth - 0.5 * outward / abs(outward), outward)
        seq = trace(poly, st, max_bounces=100)
        assert seq.terminal == "escaped"
        assert seq.escape_channel == 0
