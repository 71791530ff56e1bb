"""Numerical Schwarz-Christoffel machinery for given prevertices and angles.

The forward map is evaluated by compound quadrature: a Gauss-Jacobi panel
absorbs the (u - u_a)^(mu_a - 1) endpoint singularity exactly, and the
remaining regular stretches use Gauss-Legendre panels subdivided until no
prevertex sits closer to a panel than half its length.  Vertices are chained
side by side from the base-point anchor; the image of u = infinity is reached
through the 1/u chart, where the integrand is regular because the exponents
sum to -2.  The inverse map is a damped Newton iteration seeded from a coarse
image grid.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .errors import (
    DegenerateGeometry,
    DivergentIntegral,
    NoConvergence,
    OutsidePolygon,
    SingularPoint,
)
from .numeric import arg_upper, clamp_to_real, log_upper
from .systems import BilliardSpec

_QUAD_ORDER = 24
_FAR_FACTOR = 8.0  # |u| beyond this multiple of the prevertex span uses the 1/u chart


@dataclass
class Channel:
    """Unbounded escape channel at an at-infinity vertex."""

    vertex_index: int
    base_left: complex
    dir_left: complex
    base_right: complex
    dir_right: complex

    @property
    def seal(self) -> tuple:
        """Segment closing the channel mouth between the two ray bases."""
        return (self.base_left, self.base_right)


@dataclass
class Polygon:
    """Image data of the map: vertices, angles, boundedness, map pole."""

    vertices: list  # complex, or None for a vertex at infinity
    angles: list  # interior angles (mu_a * pi)
    bounded: bool
    phi_inf: complex
    base_point: complex  # u(0); its image is the origin
    channels: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.vertices)

    @property
    def finite_vertices(self) -> list:
        return [v for v in self.vertices if v is not None]

    @property
    def diameter(self) -> float:
        pts = self.finite_vertices
        if len(pts) < 2:
            return 1.0
        return max(abs(a - b) for a in pts for b in pts)

    def sides(self) -> list:
        """Finite sides as (a, b) pairs, ordered; rays live in channels."""
        out = []
        n = self.n
        for a in range(n):
            p, q = self.vertices[a], self.vertices[(a + 1) % n]
            if p is not None and q is not None:
                out.append((p, q))
        return out

    def contains(self, w: complex, pad: float = 0.0) -> bool:
        """Ray-casting test for bounded polygons (pad > 0 shrinks inward)."""
        if not self.bounded:
            raise OutsidePolygon("containment test requires a bounded polygon")
        verts = self.vertices
        n = len(verts)
        inside = False
        x, y = w.real, w.imag
        for i in range(n):
            p, q = verts[i], verts[(i + 1) % n]
            if (p.imag > y) != (q.imag > y):
                xint = p.real + (y - p.imag) * (q.real - p.real) / (q.imag - p.imag)
                if x < xint:
                    inside = not inside
        if not inside or pad <= 0:
            return inside
        return self.boundary_distance(w) > pad

    def boundary_distance(self, w: complex) -> float:
        d = math.inf
        for a, b in self.sides():
            d = min(d, _seg_dist(w, a, b))
        for ch in self.channels:
            d = min(d, _ray_dist(w, ch.base_left, ch.dir_left))
            d = min(d, _ray_dist(w, ch.base_right, ch.dir_right))
        return d

    def is_simple(self) -> bool:
        """Numeric non-self-intersection check of the finite boundary chain."""
        sides = self.sides()
        for i in range(len(sides)):
            for j in range(i + 1, len(sides)):
                a1, b1 = sides[i]
                a2, b2 = sides[j]
                shared = min(abs(a1 - b2), abs(b1 - a2), abs(a1 - a2), abs(b1 - b2))
                if shared < 1e-12 * self.diameter:
                    continue
                if _segments_cross(a1, b1, a2, b2):
                    return False
        return True

    def to_json(self) -> dict:
        return {
            "vertices": [
                None if v is None else [v.real, v.imag] for v in self.vertices
            ],
            "angles": list(self.angles),
            "bounded": self.bounded,
            "phi_inf": [self.phi_inf.real, self.phi_inf.imag],
            "base_point": [complex(self.base_point).real, complex(self.base_point).imag],
        }


def _seg_dist(p: complex, a: complex, b: complex) -> float:
    v = b - a
    L2 = abs(v) ** 2
    if L2 == 0.0:
        return abs(p - a)
    t = ((p - a) * v.conjugate()).real / L2
    t = max(0.0, min(1.0, t))
    return abs(a + t * v - p)


def _ray_dist(p: complex, base: complex, d: complex) -> float:
    t = ((p - base) * d.conjugate()).real / abs(d) ** 2
    t = max(0.0, t)
    return abs(base + t * d - p)


def _segments_cross(a1, b1, a2, b2) -> bool:
    def orient(p, q, r):
        return ((q - p) * (r - p).conjugate()).imag

    d1 = orient(a2, b2, a1)
    d2 = orient(a2, b2, b1)
    d3 = orient(a1, b1, a2)
    d4 = orient(a1, b1, b2)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


class SCMap:
    """Forward/inverse map for one spec, anchored so the base point maps to 0."""

    def __init__(self, spec: BilliardSpec, base_point=None, quad_order: int = _QUAD_ORDER):
        self.spec = spec
        self.u = spec.u_floats
        self.mu = spec.mu_floats
        self.beta = [m - 1.0 for m in self.mu]
        self.r = spec.r
        span = self.u[-1] - self.u[0]
        self.span = max(span, 1.0)
        self.far_radius = _FAR_FACTOR * max(abs(self.u[0]), abs(self.u[-1]), 1.0)
        if base_point is None:
            base_point = 1j
        self.base_point = complex(base_point)
        if any(
            abs(self.base_point - ua) < 1e-12 * self.span and self.base_point.imag == 0
            for ua in self.u
        ):
            raise SingularPoint("base point coincides with a prevertex")
        self._gl = roots_legendre(quad_order)
        self._gj = {}
        self._quad_order = quad_order
        self._seed_grid = None
        self._build_polygon()

    # -- derivative ----------------------------------------------------------

    def derivative(self, z) -> complex:
        """prod (z - u_a)^(mu_a - 1), principal branches, real z read as z+i0+."""
        z = clamp_to_real(complex(z))
        acc = 0j
        for ua, b in zip(self.u, self.beta):
            w = z - ua
            if w == 0:
                if b < 0:
                    raise SingularPoint(f"derivative singular at prevertex {ua}")
                if b == 0:
                    continue
            acc += b * log_upper(w)
        return cmath.exp(acc)

    # -- quadrature building blocks -------------------------------------------

    def _gj_nodes(self, b: float):
        if b not in self._gj:
            self._gj[b] = roots_jacobi(self._quad_order, 0.0, b)
        return self._gj[b]

    def _regular_part(self, z: complex, skip: int) -> complex:
        acc = 0j
        for a, (ua, b) in enumerate(zip(self.u, self.beta)):
            if a == skip:
                continue
            acc += b * log_upper(z - ua)
        return cmath.exp(acc)

    def _panel_gl(self, za: complex, zb: complex) -> complex:
        x, w = self._gl
        mid = 0.5 * (za + zb)
        half = 0.5 * (zb - za)
        acc = 0j
        for xi, wi in zip(x, w):
            acc += wi * self.derivative(mid + half * xi)
        return acc * half

    def _min_seg_dist(self, za: complex, zb: complex) -> float:
        return min(_seg_dist(complex(ua), za, zb) for ua in self.u)

    def _quad_regular(self, za: complex, zb: complex) -> complex:
        za, zb = complex(za), complex(zb)
        if za == zb:
            return 0j
        total = 0j
        stack = [(za, zb)]
        while stack:
            a, b = stack.pop()
            if abs(b - a) <= 2.0 * self._min_seg_dist(a, b) or abs(b - a) < 1e-14 * self.span:
                total += self._panel_gl(a, b)
            else:
                m = 0.5 * (a + b)
                stack.append((a, m))
                stack.append((m, b))
        return total

    def _quad_from_prevertex(self, alpha: int, zb: complex) -> complex:
        """Integral of the derivative from u_alpha to zb (endpoint singularity)."""
        b = self.beta[alpha]
        if b <= -1.0:
            raise DivergentIntegral(
                f"map integral diverges at prevertex {alpha} (weight {self.mu[alpha]} <= 0)"
            )
        za = complex(self.u[alpha])
        zb = complex(zb)
        d_other = min(
            abs(za - ua) for i, ua in enumerate(self.u) if i != alpha
        )
        L = abs(zb - za)
        end = zb if L <= 0.5 * d_other else za + (zb - za) * (0.5 * d_other / L)
        half = 0.5 * (end - za)
        theta = arg_upper(end - za)
        xj, wj = self._gj_nodes(b)
        acc = 0j
        for xi, wi in zip(xj, wj):
            acc += wi * self._regular_part(za + half * (1.0 + xi), alpha)
        acc *= half * cmath.exp(b * (math.log(abs(half)) + 1j * theta))
        if end != zb:
            acc += self._quad_regular(end, zb)
        return acc

    # -- polygon construction --------------------------------------------------

    def _anchor_interval(self) -> int:
        """Index k with u in [u_k, u_k+1) for a real base point, else nearest."""
        x = self.base_point.real
        k = 0
        for a in range(self.r + 1):
            if self.u[a] <= x:
                k = a
        return k

    def _build_polygon(self):
        n = self.r + 1
        finite = [self.mu[a] > 0 for a in range(n)]
        verts: list = [None] * n

        # anchor: some finite prevertex connected to the base point
        if self.base_point.imag == 0.0:
            k0 = self._anchor_interval()
            if not finite[k0]:
                if k0 + 1 <= n - 1 and finite[k0 + 1] and self.base_point.real < self.u[k0 + 1]:
                    k0 = k0 + 1
                else:
                    raise DegenerateGeometry("no finite vertex adjacent to the base interval")
        else:
            k0 = min(
                (a for a in range(n) if finite[a]),
                key=lambda a: abs(self.base_point - self.u[a]),
            )
        verts[k0] = -self._quad_from_prevertex(k0, self.base_point)

        def side_increment(a):
            # integral over the boundary interval [u_a, u_a+1], split at its middle
            m = 0.5 * (self.u[a] + self.u[a + 1])
            return self._quad_from_prevertex(a, m) - self._quad_from_prevertex(a + 1, m)

        def detour_increment(a, b):
            # integral from u_a to u_b over an arch in the half-plane, used to
            # step across an at-infinity vertex lying between them
            h = max(self.u[b] - self.u[a], 0.5 * self.span)
            p1 = complex(self.u[a], h)
            p2 = complex(self.u[b], h)
            return (
                self._quad_from_prevertex(a, p1)
                + self._quad_regular(p1, p2)
                - self._quad_from_prevertex(b, p2)
            )

        for a in range(k0, n - 1):  # forward chain
            if not finite[a + 1]:
                continue
            if finite[a]:
                if verts[a] is None:
                    raise DegenerateGeometry("broken vertex chain (adjacent channels?)")
                verts[a + 1] = verts[a] + side_increment(a)
            else:
                if a == 0 or not finite[a - 1] or verts[a - 1] is None:
                    raise DegenerateGeometry("adjacent at-infinity vertices unsupported")
                verts[a + 1] = verts[a - 1] + detour_increment(a - 1, a + 1)
        for a in range(k0, 0, -1):  # backward chain
            if not finite[a - 1]:
                continue
            if finite[a]:
                if verts[a] is None:
                    raise DegenerateGeometry("broken vertex chain (adjacent channels?)")
                verts[a - 1] = verts[a] - side_increment(a - 1)
            else:
                if a == n - 1 or not finite[a + 1] or verts[a + 1] is None:
                    raise DegenerateGeometry("adjacent at-infinity vertices unsupported")
                verts[a - 1] = verts[a + 1] - detour_increment(a - 1, a + 1)

        self._vertices = verts
        self._phi_inf = self._compute_phi_inf()

        channels = []
        for a in range(n):
            if not finite[a]:
                left = (a - 1) % n
                right = (a + 1) % n
                if verts[left] is None or verts[right] is None:
                    raise DegenerateGeometry("adjacent at-infinity vertices unsupported")
                gap_l = self.u[a] - self.u[left] if a > 0 else self.span
                gap_r = (self.u[right] - self.u[a]) if a < n - 1 else self.span
                dl = self._ray_direction(a, side=-1, gap=gap_l)
                dr = self._ray_direction(a, side=+1, gap=gap_r)
                channels.append(
                    Channel(a, verts[left], dl, verts[right], dr)
                )

        bounded = all(finite)
        self.polygon = Polygon(
            vertices=verts,
            angles=[m * math.pi for m in self.mu],
            bounded=bounded,
            phi_inf=self._phi_inf,
            base_point=self.base_point,
            channels=channels,
        )
        if bounded:
            self._validate_bounded()

    def _ray_direction(self, alpha: int, side: int, gap: float) -> complex:
        # direction of divergence of Phi(u) as u -> u_alpha from the given side
        d1, d2 = 1e-4 * gap, 1e-6 * gap
        p1 = self.eval(self.u[alpha] + side * d1)
        p2 = self.eval(self.u[alpha] + side * d2)
        d = p2 - p1
        return d / abs(d)

    def _compute_phi_inf(self) -> complex:
        u_ref = 1j * 0.5 * self.far_radius
        return self._eval_anchored(u_ref) + self._chart_integral(1.0 / u_ref)

    def _chart_integral(self, v_end: complex) -> complex:
        """integral_0^v_end of prod (1 - u_a v)^(mu_a - 1) dv (regular path)."""
        x, w = self._gl
        mid = 0.5 * v_end
        half = 0.5 * v_end
        acc = 0j
        for xi, wi in zip(x, w):
            v = mid + half * xi
            g = 0j
            for ua, b in zip(self.u, self.beta):
                g += b * cmath.log(1.0 - ua * v)
            acc += wi * cmath.exp(g)
        return acc * half

    def _validate_bounded(self):
        verts = self._vertices
        n = len(verts)
        for a in range(n):
            p, q, o = verts[a], verts[(a + 1) % n], verts[(a - 1) % n]
            if abs(q - p) < 1e-12 * self.polygon.diameter:
                raise DegenerateGeometry("zero-length polygon side")
            ang = cmath.phase((o - p) / (q - p)) % (2 * math.pi)
            if abs(ang - self.mu[a] * math.pi) > 1e-8:
                raise DegenerateGeometry(
                    f"vertex {a} angle {ang:.2e} != mu*pi {self.mu[a] * math.pi:.2e}"
                )

    # -- forward map ------------------------------------------------------------

    def eval(self, z) -> complex:
        """Phi(z) for z in the closed upper half-plane (0 at the base point)."""
        z = clamp_to_real(complex(z))
        if z.imag < 0:
            raise SingularPoint(f"map evaluated below the real axis: {z}")
        if abs(z) > self.far_radius:
            return self._phi_inf - self._chart_integral(1.0 / z)
        return self._eval_anchored(z)

    def _eval_anchored(self, z: complex) -> complex:
        # choose the nearest finite-angle prevertex whose connecting segment
        # stays clear of the others; otherwise detour through the half-plane
        order = sorted(
            (a for a in range(self.r + 1) if self.mu[a] > 0),
            key=lambda a: abs(z - self.u[a]),
        )
        for k in order:
            za = complex(self.u[k])
            if self._vertices[k] is None:
                continue
            d = min(
                _seg_dist(complex(self.u[i]), za, z)
                for i in range(self.r + 1)
                if i != k
            )
            if d > 1e-7 * self.span:
                return self._vertices[k] + self._quad_from_prevertex(k, z)
        # detour: rise from the anchor, traverse, descend
        k = order[0]
        za = complex(self.u[k])
        h = max(abs(z - za), 0.1 * self.span)
        p1 = za + 1j * h
        p2 = complex(z.real, max(z.imag, h))
        return (
            self._vertices[k]
            + self._quad_from_prevertex(k, p1)
            + self._quad_regular(p1, p2)
            + self._quad_regular(p2, z)
        )

    # -- inverse map --------------------------------------------------------------

    def _seeds(self):
        if self._seed_grid is None:
            xs = np.linspace(self.u[0] - 0.5 * self.span, self.u[-1] + 0.5 * self.span, 14)
            ys = np.geomspace(2e-3 * self.span, 3.0 * self.span, 12)
            pts = []
            for x in xs:
                for y in ys:
                    uz = complex(x, y)
                    try:
                        pts.append((uz, self.eval(uz)))
                    except (SingularPoint, DivergentIntegral):
                        continue
            self._seed_grid = pts
        return self._seed_grid

    def inverse(self, w, seed=None) -> complex:
        """u in the upper half-plane with Phi(u) = w."""
        w = complex(w)
        tol = 1e-9 * max(self.polygon.diameter, 1.0)
        if self.polygon.bounded and not self.polygon.contains(w):
            if self.polygon.boundary_distance(w) > 1e-9 * self.polygon.diameter:
                raise OutsidePolygon(f"{w} is not inside the polygon")
        # pole chart when close to the image of infinity
        if abs(w - self._phi_inf) < 0.02 * max(self.polygon.diameter, 1.0):
            u = self._inverse_near_pole(w, tol)
            if u is not None:
                return u
        candidates = []
        if seed is not None:
            candidates.append(complex(seed))
        candidates += [s for s, _ in sorted(self._seeds(), key=lambda p: abs(p[1] - w))[:6]]
        for u0 in candidates:
            u = self._newton(w, u0, tol)
            if u is not None:
                return u
        raise NoConvergence(f"inversion failed for {w}; nearest seed {candidates[-1]}")

    def _newton(self, w: complex, u0: complex, tol: float):
        u = complex(u0)
        if u.imag <= 0:
            u = complex(u.real, 1e-6 * self.span)
        for _ in range(60):
            try:
                f = self.eval(u) - w
            except (SingularPoint, DivergentIntegral):
                return None
            if abs(f) < tol:
                return u
            try:
                d = self.derivative(u)
            except SingularPoint:
                return None
            if d == 0:
                return None
            step = -f / d
            # damp to keep iterates in the open half-plane
            lam = 1.0
            for _ in range(30):
                nu = u + lam * step
                if nu.imag > 0:
                    break
                lam *= 0.5
            else:
                return None
            u = nu
        return None

    def _inverse_near_pole(self, w: complex, tol: float):
        # Phi(1/v) = phi_inf - chart(v); Newton in v with chart'(v) = -g(v)
        v = self._phi_inf - w
        for _ in range(50):
            f = self._phi_inf - self._chart_integral(v) - w
            if abs(f) < tol:
                u = 1.0 / v
                return u if u.imag > 0 else None
            g = 0j
            for ua, b in zip(self.u, self.beta):
                g += b * cmath.log(1.0 - ua * v)
            dv = -cmath.exp(g)
            v = v - f / dv
            if abs(v) * self.far_radius > 2.0:
                return None
        return None


# -- module-level operations matching the spec surface -------------------------


def sc_derivative(spec: BilliardSpec, z, base_point=None) -> complex:
    return SCMap(spec, base_point).derivative(z)


def sc_eval(spec: BilliardSpec, z, base_point=None) -> complex:
    return SCMap(spec, base_point).eval(z)


def vertices(spec: BilliardSpec, base_point=None) -> Polygon:
    return SCMap(spec, base_point).polygon


def phi_infinity(spec: BilliardSpec, base_point=None) -> complex:
    return SCMap(spec, base_point).polygon.phi_inf


def sc_inverse(scmap: SCMap, w, seed=None) -> complex:
    return scmap.inverse(w, seed=seed)
