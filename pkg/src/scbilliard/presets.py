"""Named experiment presets: spec, launch, horizon, and precision per figure."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import InvalidParameter
from .systems import BilliardSpec, ODESystem, default_prevertices, newtonian_system, recover_spec

F = Fraction


def rational_reference_spec() -> BilliardSpec:
    """The worked rational example: weights (1/2, 2/7, 3/14)."""
    return BilliardSpec(2, (F(1, 2), F(2, 7), F(3, 14)), tuple(default_prevertices(2)))


def irrational_reference_spec() -> BilliardSpec:
    """Irrational weights (1/sqrt5, 1/sqrt7, rest), conventional prevertices."""
    m0 = 1.0 / math.sqrt(5.0)
    m1 = 1.0 / math.sqrt(7.0)
    return BilliardSpec(2, (m0, m1, 1.0 - m0 - m1), tuple(default_prevertices(2)))


def scattering_spec() -> BilliardSpec:
    """One negative weight: unbounded polygon with a diverging channel."""
    return BilliardSpec(2, (F(-1, 4), F(3, 4), F(1, 2)), tuple(default_prevertices(2)))


def parallel_channel_spec() -> BilliardSpec:
    """Zero weight: unbounded polygon with two parallel sides."""
    return BilliardSpec(2, (F(0), F(1, 2), F(1, 2)), tuple(default_prevertices(2)))


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    spec: BilliardSpec
    u0: object = F(1, 4)
    chi0: float | None = 2.51558
    t_end: float = 100.0
    precision_digits: int = 15
    rel_tol: float = 1e-13
    u0_grid: tuple = ()
    aim_vertex: int | None = None  # chi0 computed at run time to hit this corner
    aim_phi_inf: bool = False  # chi0 computed to pass through the map pole
    analyses: tuple = ()
    system: ODESystem | None = None  # exact coefficients when the spec recovery is lossy

    def integration_kwargs(self) -> dict:
        return {
            "t_end": self.t_end,
            "precision_digits": self.precision_digits,
            "rel_tol": self.rel_tol,
        }


def _build_presets() -> dict:
    rat = rational_reference_spec()
    out = [
        Preset(
            "fig56",
            "rational reference system; exact coefficients and generic launch",
            rat,
            chi0=2.51558,
            t_end=5000.0,
            precision_digits=30,
            rel_tol=1e-20,
            analyses=("crossings", "tail", "poincare"),
        ),
        Preset(
            "fig5",
            "perpendicular launches (chi0 = pi/2): full-state periodic orbits",
            rat,
            chi0=math.pi / 2,
            u0=F(2, 5),
            u0_grid=(F(2, 5), F(23, 50), F(47, 100), F(53, 100), F(11, 20)),
            t_end=400.0,
            analyses=("period",),
        ),
        Preset(
            "fig6",
            "crossing-position histogram vs the ergodic prediction",
            rat,
            chi0=2.51558,
            t_end=5000.0,
            precision_digits=30,
            rel_tol=1e-20,
            analyses=("crossings",),
        ),
        Preset(
            "fig7-rational",
            "section of x2 at crossings, rational weights (curve-like)",
            rat,
            chi0=2.51558,
            t_end=5000.0,
            precision_digits=30,
            rel_tol=1e-20,
            analyses=("poincare",),
        ),
        Preset(
            "fig7-irrational",
            "section of x2 at crossings, irrational weights (area-filling)",
            irrational_reference_spec(),
            chi0=2.51558,
            t_end=5000.0,
            precision_digits=30,
            rel_tol=1e-20,
            analyses=("poincare",),
        ),
        Preset(
            "fig8",
            "amplitude tail of |x1| over a long ergodic run",
            rat,
            chi0=2.51558,
            t_end=5000.0,
            precision_digits=30,
            rel_tol=1e-20,
            analyses=("tail",),
        ),
        Preset(
            "newton-k3",
            "point-particle law z'' = z^3 reduced to the homogeneous pair",
            recover_spec(newtonian_system(3)),
            u0=F(1, 4),
            chi0=2.51558,
            t_end=100.0,
            system=newtonian_system(3),
        ),
        Preset(
            "scattering",
            "one negative weight: escape through a diverging channel",
            scattering_spec(),
            u0=F(1, 4),
            chi0=2.2,
            t_end=2000.0,
            analyses=("scattering",),
        ),
        Preset(
            "scattering-parallel",
            "zero weight: escape between parallel walls",
            parallel_channel_spec(),
            u0=F(1, 4),
            chi0=2.2,
            t_end=2000.0,
            analyses=("scattering",),
        ),
        Preset(
            "corner",
            "launch aimed at the right-angle corner: power-law blow-up",
            rat,
            u0=F(1, 4),
            chi0=None,
            aim_vertex=0,
            t_end=30.0,
            analyses=("corner",),
        ),
        Preset(
            "pole",
            "launch aimed through the map pole: simple zero of x2",
            rat,
            u0=F(1, 4),
            chi0=None,
            aim_phi_inf=True,
            t_end=10.0,
            analyses=(),
        ),
    ]
    return {p.name: p for p in out}


PRESETS = _build_presets()


def get_preset(name: str) -> Preset:
    if name not in PRESETS:
        known = ", ".join(sorted(PRESETS))
        raise InvalidParameter(f"unknown preset {name!r}; known presets: {known}")
    return PRESETS[name]
