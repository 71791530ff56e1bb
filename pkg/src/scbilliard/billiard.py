"""Geometric billiard dynamics inside a computed polygon.

Serves as the independent oracle for the ODE side: straight segments at unit
speed, specular reflection at the sides, corner hits classified (never
resolved), and escape through unbounded channels.  The unfolding construction
replaces reflections of the ray by reflections of the polygon and must
reproduce trace() exactly when folded back.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometry
from .scmap import Polygon

_T_EPS_REL = 1e-11


@dataclass(frozen=True)
class BilliardState:
    position: complex
    direction: complex  # unit modulus

    def __post_init__(self):
        d = abs(self.direction)
        if d == 0:
            raise DegenerateGeometry("zero direction")
        object.__setattr__(self, "direction", self.direction / d)

    @property
    def chi(self) -> float:
        return cmath.phase(self.direction)


@dataclass
class Bounce:
    tau: float
    side: int
    point: complex
    chi: float  # direction angle after this bounce


@dataclass
class BounceSequence:
    launch: BilliardState
    bounces: list
    terminal: str  # "running" | "corner" | "escaped"
    t_total: float
    corner_vertex: int | None = None
    corner_time: float | None = None
    escape_channel: int | None = None

    @property
    def taus(self) -> list:
        return [b.tau for b in self.bounces]

    @property
    def chis(self) -> list:
        """Segment directions: chi_0 is the launch, chi_n after bounce n."""
        return [self.launch.chi] + [b.chi for b in self.bounces]

    def position_at(self, t: float) -> complex:
        """Point on the orbit at time t (unit speed)."""
        if t < 0 or t > self.t_total:
            raise ValueError("time outside the traced range")
        pos, chi, t0 = self.launch.position, self.launch.chi, 0.0
        for b in self.bounces:
            if t <= b.tau:
                return pos + (t - t0) * cmath.exp(1j * chi)
            pos, chi, t0 = b.point, b.chi, b.tau
        return pos + (t - t0) * cmath.exp(1j * chi)

    def segment_index(self, t: float) -> int:
        n = 0
        for b in self.bounces:
            if t > b.tau:
                n += 1
        return n

    def to_csv(self) -> str:
        lines = ["n,tau,side,hit_re,hit_im,chi"]
        for n, b in enumerate(self.bounces, start=1):
            lines.append(
                f"{n},{b.tau!r},{b.side},{b.point.real!r},{b.point.imag!r},{b.chi!r}"
            )
        return "\n".join(lines) + "\n"


def _walls(polygon: Polygon):
    """(side_index, a, b_or_None, direction) for segments and channel rays."""
    walls = []
    n = polygon.n
    for a in range(n):
        p, q = polygon.vertices[a], polygon.vertices[(a + 1) % n]
        if p is not None and q is not None:
            walls.append((a, p, q, (q - p) / abs(q - p)))
    for ch in polygon.channels:
        alpha = ch.vertex_index
        # side alpha-1 runs from v_alpha-1 out to infinity
        walls.append(((alpha - 1) % n, ch.base_left, None, ch.dir_left))
        # side alpha arrives from infinity into v_alpha+1
        walls.append((alpha, ch.base_right, None, ch.dir_right))
    return walls


def _ray_wall_hit(pos, d, wall, t_eps):
    """(s, point, q, ray_len) for the forward intersection, or None."""
    _, a, b, wd = wall
    if b is None:
        e, length = wd, math.inf
    else:
        e, length = b - a, 1.0
        # parameterize by the chord itself
    den = (d * e.conjugate()).imag
    if den == 0.0:
        return None
    rel = a - pos
    s = (rel * e.conjugate()).imag / den
    q = (rel * d.conjugate()).imag / den
    if s <= t_eps:
        return None
    if b is None:
        if q < 0.0:
            return None
    else:
        if q < -1e-12 or q > 1.0 + 1e-12:
            return None
    return s, pos + s * d, q


def trace(
    polygon: Polygon,
    state0: BilliardState,
    t_max: float = math.inf,
    max_bounces: int = 10_000,
    corner_eps: float | None = None,
) -> BounceSequence:
    """Follow the billiard flow from state0.

    Stops at t_max or max_bounces; reports CornerHit when an impact lands
    within corner_eps of a vertex (the dynamics is genuinely discontinuous
    there), and Escaped when the forward ray meets no further wall.
    """
    diam = polygon.diameter
    if corner_eps is None:
        corner_eps = 1e-9 * diam
    t_eps = _T_EPS_REL * diam
    walls = _walls(polygon)
    for (_, a, b, _) in walls:
        if b is not None and abs(b - a) < 1e-14 * diam:
            raise DegenerateGeometry("zero-length side")

    pos = state0.position
    d = state0.direction
    t = 0.0
    bounces: list[Bounce] = []
    terminal = "running"
    corner_vertex = corner_time = escape_channel = None

    while t < t_max and len(bounces) < max_bounces:
        best = None
        for wall in walls:
            hit = _ray_wall_hit(pos, d, wall, t_eps)
            if hit is not None and (best is None or hit[0] < best[1][0]):
                best = (wall, hit)
        if best is None:
            if polygon.bounded:
                raise DegenerateGeometry(f"no forward wall from {pos} along {d}")
            terminal = "escaped"
            escape_channel = _escape_channel(polygon, pos, d)
            break
        wall, (s, point, q) = best
        if t + s > t_max:
            t = t_max
            break
        t += s
        side, a, b, wd = wall
        # corner classification against both endpoints of the wall
        near = None
        if abs(point - a) < corner_eps:
            near = side
        elif b is not None and abs(point - b) < corner_eps:
            near = (side + 1) % polygon.n
        if near is not None:
            terminal = "corner"
            corner_vertex = near
            corner_time = t
            break
        d = wd * wd * d.conjugate()  # specular: chi -> 2 theta_wall - chi
        bounces.append(Bounce(tau=t, side=side, point=point, chi=cmath.phase(d)))
        pos = point

    return BounceSequence(
        launch=state0,
        bounces=bounces,
        terminal=terminal,
        t_total=t,
        corner_vertex=corner_vertex,
        corner_time=corner_time,
        escape_channel=escape_channel,
    )


def _escape_channel(polygon: Polygon, pos: complex, d: complex):
    for i, ch in enumerate(polygon.channels):
        a, b = ch.seal
        e = b - a
        den = (d * e.conjugate()).imag
        if den == 0.0:
            continue
        rel = a - pos
        s = (rel * e.conjugate()).imag / den
        q = (rel * d.conjugate()).imag / den
        if s > 0 and 0.0 <= q <= 1.0:
            return i
    return None


# -- unfolding ---------------------------------------------------------------


@dataclass(frozen=True)
class Isometry:
    """z -> A z + c (even) or A conj(z) + c (odd)."""

    a: complex = 1.0 + 0j
    c: complex = 0j
    odd: bool = False

    def apply(self, z: complex) -> complex:
        return self.a * (z.conjugate() if self.odd else z) + self.c

    def apply_dir(self, d: complex) -> complex:
        return self.a * (d.conjugate() if self.odd else d)


@dataclass
class UnfoldedPath:
    """Straight-line representation: one ray through reflected polygon copies."""

    launch: BilliardState
    crossing_times: list
    crossing_sides: list
    inverse_maps: list  # H_n folding world points of segment n back into the polygon
    t_total: float
    terminal: str
    corner_vertex: int | None = None
    escape_channel: int | None = None

    @property
    def length(self) -> float:
        return self.t_total


def unfold(
    polygon: Polygon,
    state0: BilliardState,
    t_max: float = math.inf,
    max_bounces: int = 10_000,
    corner_eps: float | None = None,
) -> UnfoldedPath:
    """Straight-line form of the orbit: reflect the polygon, not the ray."""
    diam = polygon.diameter
    if corner_eps is None:
        corner_eps = 1e-9 * diam
    t_eps = _T_EPS_REL * diam
    base_walls = _walls(polygon)
    p0, d0 = state0.position, state0.direction

    H = Isometry()  # inverse map: world -> polygon frame for the current copy
    inv_maps = [H]
    times: list[float] = []
    sides: list[int] = []
    t = 0.0
    terminal = "running"
    corner_vertex = escape_channel = None

    while t < t_max and len(times) < max_bounces:
        # current copy's walls: image of base walls under G = H^-1; instead of
        # inverting, transform the ray into the polygon frame and intersect
        pos_f = H.apply(p0 + t * d0)
        dir_f = H.apply_dir(d0)
        best = None
        for wall in base_walls:
            hit = _ray_wall_hit(pos_f, dir_f, wall, t_eps)
            if hit is not None and (best is None or hit[0] < best[1][0]):
                best = (wall, hit)
        if best is None:
            if polygon.bounded:
                raise DegenerateGeometry("no forward wall in unfolding")
            terminal = "escaped"
            escape_channel = _escape_channel(polygon, pos_f, dir_f)
            break
        wall, (s, point_f, q) = best
        if t + s > t_max:
            t = t_max
            break
        t += s
        side, a, b, wd = wall
        near = None
        if abs(point_f - a) < corner_eps:
            near = side
        elif b is not None and abs(point_f - b) < corner_eps:
            near = (side + 1) % polygon.n
        if near is not None:
            terminal = "corner"
            corner_vertex = near
            break
        # reflect the copy across the crossed wall: the folding map gains the
        # polygon-frame wall reflection on the left
        H = _compose_reflection(H, a, wd)
        inv_maps.append(H)
        times.append(t)
        sides.append(side)

    return UnfoldedPath(
        launch=state0,
        crossing_times=times,
        crossing_sides=sides,
        inverse_maps=inv_maps,
        t_total=t,
        terminal=terminal,
        corner_vertex=corner_vertex,
        escape_channel=escape_channel,
    )


def _compose_reflection(H: Isometry, p: complex, e: complex) -> Isometry:
    """R . H where R reflects across the polygon-frame line p + t e.

    For either parity of H the composition is a' = b conj(a),
    c' = b conj(c) + off with b = e^2 and off = p - b conj(p).
    """
    e = e / abs(e)
    b = e * e
    off = p - b * p.conjugate()
    return Isometry(b * H.a.conjugate(), b * H.c.conjugate() + off, not H.odd)


def fold(path: UnfoldedPath) -> BounceSequence:
    """Fold the straight segment back into a bounce sequence (trace oracle)."""
    p0, d0 = path.launch.position, path.launch.direction
    bounces = []
    for n, (tau, side) in enumerate(zip(path.crossing_times, path.crossing_sides)):
        H_next = path.inverse_maps[n + 1]
        point = H_next.apply(p0 + tau * d0)
        chi = cmath.phase(H_next.apply_dir(d0))
        bounces.append(Bounce(tau=tau, side=side, point=point, chi=chi))
    return BounceSequence(
        launch=path.launch,
        bounces=bounces,
        terminal=path.terminal,
        t_total=path.t_total,
        corner_vertex=path.corner_vertex,
        escape_channel=path.escape_channel,
    )


# -- analyses ------------------------------------------------------------------


@dataclass
class PeriodicOrbit:
    bounce_count: int
    period: float
    max_parallel_shift: float | None = None


def detect_periodic(
    seq: BounceSequence,
    tol: float = 1e-9,
    polygon: Polygon | None = None,
    check_family: bool = False,
) -> PeriodicOrbit | None:
    """Smallest m with the bounce state repeating after m bounces.

    With check_family (even m), verifies the one-parameter parallel family by
    re-tracing transversally shifted launches and reports the largest shift
    (powers of two) that stays periodic with the same m.
    """
    b = seq.bounces
    if len(b) < 2:
        return None
    scale = 1.0 + max(abs(x.point) for x in b)
    found = None
    for m in range(1, len(b) // 2 + 1):
        ok = True
        for k in range(0, min(len(b) - m, 2 * m)):
            if (
                abs(b[k + m].point - b[k].point) > tol * scale
                or abs(_angdiff(b[k + m].chi, b[k].chi)) > tol
            ):
                ok = False
                break
        if ok:
            found = PeriodicOrbit(m, b[m].tau - b[0].tau)
            break
    if found is None or not check_family or polygon is None:
        return found
    if found.bounce_count % 2 == 0:
        max_shift = 0.0
        delta = 1e-6 * polygon.diameter
        while delta < polygon.diameter:
            st = BilliardState(
                seq.launch.position + 1j * seq.launch.direction * delta,
                seq.launch.direction,
            )
            try:
                s2 = trace(polygon, st, max_bounces=3 * found.bounce_count + 2)
            except DegenerateGeometry:
                break
            p2 = detect_periodic(s2, tol=max(tol, 1e-7))
            if p2 is None or p2.bounce_count != found.bounce_count:
                break
            max_shift = delta
            delta *= 2.0
        found.max_parallel_shift = max_shift
    return found


def _angdiff(a: float, b: float) -> float:
    return (a - b + math.pi) % (2 * math.pi) - math.pi


def direction_set(seq: BounceSequence, cluster_tol: float = 1e-7) -> list:
    """Distinct segment directions (mod 2 pi), gap-clustered."""
    chis = sorted(c % (2 * math.pi) for c in seq.chis)
    if not chis:
        return []
    clusters = [[chis[0]]]
    for c in chis[1:]:
        if c - clusters[-1][-1] <= cluster_tol:
            clusters[-1].append(c)
        else:
            clusters.append([c])
    # circular merge of the first and last clusters
    if len(clusters) > 1 and (chis[0] + 2 * math.pi) - clusters[-1][-1] <= cluster_tol:
        clusters[0] = clusters.pop() + clusters[0]
    return [sum(c) / len(c) for c in clusters]


def boundary_histogram(seq: BounceSequence, polygon: Polygon, bins: int = 40):
    """Arclength distribution of hit points and its uniformity statistic.

    Returns (bin_edges, density, ks_stat) with arclength normalized to 1.
    """
    sides = polygon.sides()
    if len(sides) != polygon.n:
        raise DegenerateGeometry("boundary histogram requires a bounded polygon")
    lengths = [abs(b - a) for a, b in sides]
    perimeter = sum(lengths)
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    pos = []
    for b in seq.bounces:
        a0, _ = sides[b.side]
        s = (cum[b.side] + abs(b.point - a0)) / perimeter
        pos.append(min(s, 1.0 - 1e-15))
    pos = np.sort(np.asarray(pos))
    n = len(pos)
    if n == 0:
        return np.linspace(0, 1, bins + 1), np.zeros(bins), 1.0
    hist, edges = np.histogram(pos, bins=bins, range=(0.0, 1.0), density=True)
    i = np.arange(1, n + 1)
    ks = float(max(np.max(i / n - pos), np.max(pos - (i - 1) / n)))
    return edges, hist, ks
