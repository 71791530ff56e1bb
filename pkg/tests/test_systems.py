"""System construction, recovery roundtrips, and initial-state normalization."""

import cmath
import math
import random
from fractions import Fraction

import pytest

from scbilliard.errors import ComplexRoots, InvalidParameter, InvalidSpec, SingularInitial
from scbilliard.numeric import Context
from scbilliard.systems import (
    BilliardSpec,
    ODESystem,
    build_system,
    conserved_modulus,
    default_prevertices,
    newtonian_system,
    normalize_initial,
    recover_spec,
    spec_from_json,
    spec_to_json,
    state_at,
    state_from,
)

F = Fraction

REF_MU = (F(1, 2), F(2, 7), F(3, 14))
REF_U = (F(-1, 2), F(1, 2), F(3, 2))


def ref_spec():
    return BilliardSpec(2, REF_MU, REF_U)


class TestSpecValidation:
    def test_default_prevertices_r2(self):
        assert default_prevertices(2) == [F(-1, 2), F(1, 2), F(3, 2)]

    def test_default_prevertices_r3(self):
        assert default_prevertices(3) == [F(-1, 2), F(1, 2), F(3, 2), F(5, 2)]

    def test_sum_rule_enforced(self):
        with pytest.raises(InvalidSpec):
            BilliardSpec(2, (F(1, 2), F(3, 7), F(3, 14)), REF_U)

    def test_ordering_enforced(self):
        with pytest.raises(InvalidSpec):
            BilliardSpec(2, REF_MU, (F(1, 2), F(-1, 2), F(3, 2)))

    def test_weight_range_enforced(self):
        with pytest.raises(InvalidSpec):
            BilliardSpec(2, (F(5, 2), F(-3, 2), F(0)), REF_U)

    def test_bounded_predicate(self):
        assert ref_spec().bounded
        unb = BilliardSpec(2, (F(-1, 4), F(3, 4), F(1, 2)), REF_U)
        assert not unb.bounded


class TestBuildSystem:
    def test_reference_coefficients_exact(self):
        sys = build_system(ref_spec())
        assert sys.p_coeffs == (F(-3, 8), F(5, 14), F(3, 14))
        assert sys.q_coeffs == (F(3, 28), F(-9, 7), F(1))

    def test_monic_invariant(self):
        sys = build_system(ref_spec())
        assert sys.q_poly().is_monic

    def test_equiangular_recovers_equal_angles(self):
        spec = BilliardSpec(2, (F(1, 3), F(1, 3), F(1, 3)), (F(-1), F(0), F(1)))
        rec = recover_spec(build_system(spec))
        assert rec.mu == (F(1, 3), F(1, 3), F(1, 3))

    def test_newtonian_reduction_matches_direct_build(self):
        spec = BilliardSpec(
            2, (F(1, 4), F(1, 2), F(1, 4)), (-math.sqrt(2), 0.0, math.sqrt(2))
        )
        sys = build_system(spec)
        # x1' = x1 x2, x2' = x1^2 - x2^2
        assert abs(sys.p_coeffs[1] - 1.0) < 1e-14
        assert abs(sys.p_coeffs[0]) < 1e-14 and abs(sys.p_coeffs[2]) < 1e-14
        assert abs(sys.q_coeffs[0] + 1.0) < 1e-14


class TestNewtonian:
    def test_k3(self):
        sys = newtonian_system(3)
        assert sys.p_coeffs == (F(0), F(1), F(0))
        assert sys.q_coeffs == (F(-1), F(0), F(1))

    def test_k_minus_one(self):
        sys = newtonian_system(-1)
        assert sys.q_coeffs == (F(1), F(0), F(1))

    def test_k1_rejected(self):
        with pytest.raises(InvalidParameter):
            newtonian_system(1)

    def test_k3_recovered_spec(self):
        spec = recover_spec(newtonian_system(3))
        assert [float(m) for m in spec.mu] == pytest.approx([0.25, 0.5, 0.25], abs=1e-12)
        assert [float(x) for x in spec.u] == pytest.approx(
            [-math.sqrt(2), 0.0, math.sqrt(2)], abs=1e-12
        )


class TestRecoverSpec:
    def test_reference_roundtrip_exact(self):
        rec = recover_spec(build_system(ref_spec()))
        assert rec.mu == REF_MU and rec.u == REF_U

    def test_complex_roots_error(self):
        # q = u^2, p = -u ->  S = u^3 + u with roots 0, +-i
        with pytest.raises(ComplexRoots):
            recover_spec(ODESystem(2, (F(0), F(-1), F(0)), (F(0), F(0), F(1))))

    def test_random_rational_roundtrips_exact(self):
        rng = random.Random(7)
        for _ in range(50):
            r = rng.choice([2, 2, 2, 3, 4])
            u = sorted(rng.sample(range(-12, 13), r + 1))
            u = [F(v, rng.randint(1, 4)) for v in u]
            u = sorted(set(u))
            if len(u) != r + 1:
                continue
            mu = [F(rng.randint(-10, 10), 8) for _ in range(r)]
            last = (r - 1) - sum(mu)
            if not all(-2 < float(m) < 2 for m in mu + [last]):
                continue
            spec = BilliardSpec(r, tuple(mu + [last]), tuple(u))
            rec = recover_spec(build_system(spec))
            assert rec.mu == spec.mu and rec.u == spec.u

    def test_random_float_roundtrips(self):
        rng = random.Random(11)
        count = 0
        while count < 50:
            r = rng.choice([2, 3])
            u = sorted(rng.uniform(-3, 3) for _ in range(r + 1))
            if min(b - a for a, b in zip(u, u[1:])) < 0.2:
                continue
            mu = [rng.uniform(-1.5, 1.5) for _ in range(r)]
            last = (r - 1) - sum(mu)
            if not (-2 < last < 2):
                continue
            spec = BilliardSpec(r, tuple(mu + [last]), tuple(u))
            rec = recover_spec(build_system(spec))
            for a, b in zip(rec.mu, spec.mu):
                assert abs(float(a) - float(b)) < 1e-10
            for a, b in zip(rec.u, spec.u):
                assert abs(float(a) - float(b)) < 1e-10
            count += 1


class TestInitialConditions:
    def test_normalized_modulus_is_one(self):
        spec = ref_spec()
        init = state_from(spec, F(1, 4), 2.51558)
        assert conserved_modulus(spec, init.x1, init.x2) == pytest.approx(1.0, abs=1e-14)

    def test_scaling_invariance(self):
        spec = ref_spec()
        init = state_from(spec, F(1, 4), 1.234)
        for lam in (0.5, 2.0, 17.0):
            renorm = normalize_initial(spec, lam * init.x1, lam * init.x2)
            assert renorm.x1 == pytest.approx(init.x1, abs=1e-13)
            assert renorm.x2 == pytest.approx(init.x2, abs=1e-13)

    def test_roundtrip_real_u0(self):
        spec = ref_spec()
        for chi0 in (0.3, math.pi / 2, 2.51558, 5.9):
            init = state_from(spec, 0.4, chi0)
            back = normalize_initial(spec, init.x1, init.x2)
            assert float(back.u0) == pytest.approx(0.4, abs=1e-13)
            assert back.chi0 == pytest.approx(chi0, abs=1e-12)

    def test_roundtrip_complex_u0(self):
        spec = ref_spec()
        init = state_from(spec, 0.3 + 0.8j, 1.1)
        back = normalize_initial(spec, init.x1, init.x2)
        assert complex(back.u0) == pytest.approx(0.3 + 0.8j, abs=1e-13)
        assert back.chi0 == pytest.approx(1.1, abs=1e-12)

    def test_upper_half_plane_modulus_oracle(self):
        # |x2| at u0 = i equals prod |i - u_a|^(-mu_a/(r-1)) computed directly
        spec = ref_spec()
        init = state_from(spec, 1j, 0.77)
        expect = 1.0
        for m, ua in zip(spec.mu_floats, spec.u_floats):
            expect *= abs(1j - ua) ** (-m)
        assert abs(init.x2) == pytest.approx(expect, rel=1e-13)

    def test_singular_initial(self):
        spec = ref_spec()
        with pytest.raises(SingularInitial):
            state_from(spec, F(1, 2), 1.0)

    def test_perpendicular_chart_enters_vertically(self):
        # chi0 = pi/2 from real u0 must launch u straight off the axis
        spec = ref_spec()
        sys = build_system(spec)
        init = state_from(spec, 0.4, math.pi / 2)
        x1, x2 = init.x1, init.x2
        p = sum(c * x1**j * x2 ** (2 - j) for j, c in enumerate(sys.p_coeffs))
        q = sum(c * x1**j * x2 ** (2 - j) for j, c in enumerate(sys.q_coeffs))
        udot = (p * x2 - x1 * q) / x2**2
        assert abs(udot.real) < 1e-13 * abs(udot)

    def test_state_at_high_precision(self):
        spec = ref_spec()
        ctx = Context(30)
        x1, x2 = state_at(spec, F(1, 4), 2.51558, ctx)
        init = state_from(spec, F(1, 4), 2.51558)
        assert complex(x1) == pytest.approx(init.x1, rel=1e-15)
        with ctx:
            dev = abs(x1 / x2 - ctx.real(F(1, 4)))
            assert float(dev) < 1e-30


class TestSpecJson:
    def test_roundtrip_rational(self):
        spec = ref_spec()
        init = state_from(spec, F(1, 4), 2.51558)
        blob = spec_to_json(spec, init)
        spec2, u0, chi0 = spec_from_json(blob)
        assert spec2.mu == spec.mu and spec2.u == spec.u
        assert u0 == F(1, 4)
        assert chi0 == pytest.approx(2.51558)

    def test_rationals_written_as_strings(self):
        blob = spec_to_json(ref_spec())
        assert blob["mu"][1] == "2/7"

    def test_malformed_rejected(self):
        with pytest.raises(InvalidSpec):
            spec_from_json({"r": 2, "mu": ["1/2", "3/7", "3/14"], "u": ["-1/2", "1/2", "3/2"]})
