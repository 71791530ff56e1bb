"""Executable checks tying ODE trajectories to billiard orbits through the map.

The folded image w(t) = Phi(u~(t)) of an orbit must be a unit-speed polygonal
billiard path: straight between real-axis crossings, specular at them.  This
module measures that, reconstructs ODE states from billiard data, and fits
every predicted statistic: crossing densities, amplitude tails, corner and
scattering exponents, vanishing Lyapunov exponents, and section dimensions.
"""

from __future__ import annotations

import bisect
import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .billiard import BilliardState, trace
from .errors import (
    CornerEncounter,
    FitWindowTooSmall,
    InsufficientTail,
    InvalidSpec,
    NotEscaped,
)
from .integrate import IntegrationConfig, Trajectory, _BackendSystem, integrate
from .numeric import Context, log_upper
from .scmap import SCMap
from .systems import BilliardSpec, InitialCondition, build_system, state_from


# -- folding bookkeeping -------------------------------------------------------


def launch_direction(spec: BilliardSpec, init: InitialCondition, scmap: SCMap) -> float:
    """Angle of the image velocity Phi'(u) du/dt at t = 0."""
    sys = build_system(spec)
    x1, x2 = complex(init.x1), complex(init.x2)
    p = sum(c * x1**j * x2 ** (sys.r - j) for j, c in enumerate(np.array(sys.p_coeffs, dtype=float)))
    q = sum(c * x1**j * x2 ** (sys.r - j) for j, c in enumerate(np.array(sys.q_coeffs, dtype=float)))
    udot = (p * x2 - x1 * q) / x2**2
    return cmath.phase(scmap.derivative(init.u0_complex) * udot)


def _initial_parity(traj: Trajectory) -> int:
    for z1, z2 in zip(traj.x1s, traj.x2s):
        u = z1 / z2
        if abs(u.imag) > 1e-12 * (1.0 + abs(u)):
            return 0 if u.imag > 0 else 1
    return 0


def folded_samples(traj: Trajectory):
    """(t, segment_index, u~) per sample, u~ folded into the upper half-plane.

    The reflection parity is one boolean toggled at each boundary crossing;
    map-pole passages do not toggle it.
    """
    toggles = [e.t for e in traj.events if e.kind == "boundary"]
    p0 = _initial_parity(traj)
    out = []
    for t, z1, z2 in zip(traj.ts, traj.x1s, traj.x2s):
        n = bisect.bisect_right(toggles, t)
        u = z1 / z2
        if (n + p0) % 2 == 1:
            u = u.conjugate()
        out.append((t, n, u))
    return out


@dataclass
class CorrespondenceReport:
    n_crossings: int
    straightness_residual: float  # max chord deviation / polygon diameter
    speed_residual: float  # max | |dw|/dt - 1 |
    chi_sequence: list
    tau_sequence: list
    max_tau_err: float | None = None
    max_chi_err: float | None = None
    max_hit_err: float | None = None
    bounce_match: bool | None = None
    checks: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "n_crossings": self.n_crossings,
            "straightness_residual": self.straightness_residual,
            "speed_residual": self.speed_residual,
            "chi_sequence": list(self.chi_sequence),
            "tau_sequence": list(self.tau_sequence),
            "max_tau_err": self.max_tau_err,
            "max_chi_err": self.max_chi_err,
            "max_hit_err": self.max_hit_err,
            "bounce_match": self.bounce_match,
            "checks": {
                k: {"value": v[0], "threshold": v[1], "passed": bool(v[2])}
                for k, v in self.checks.items()
            },
        }


def image_orbit(spec: BilliardSpec, traj: Trajectory, scmap: SCMap) -> CorrespondenceReport:
    """Fold the orbit through the map and measure billiard-likeness.

    Between crossings the image must be straight at unit speed; the segment
    directions form the chi sequence, the crossing times the tau sequence.
    """
    if traj.status == "blowup":
        raise CornerEncounter("trajectory hit a corner; image orbit undefined beyond it")
    diam = scmap.polygon.diameter
    segs: dict[int, list] = {}
    for t, n, u in folded_samples(traj):
        if u.imag < -1e-9 * (1.0 + abs(u)):
            raise CornerEncounter(f"folded sample left the half-plane at t={t}")
        segs.setdefault(n, []).append((t, scmap.eval(u)))

    worst_straight = 0.0
    worst_speed = 0.0
    chi_seq: list = []
    for n in sorted(segs):
        pts = segs[n]
        if len(pts) < 2:
            chi_seq.append(None)
            continue
        (ta, wa), (tb, wb) = pts[0], pts[-1]
        chord = wb - wa
        if abs(chord) == 0.0:
            chi_seq.append(None)
            continue
        d = chord / abs(chord)
        chi_seq.append(cmath.phase(d))
        for (t, w) in pts[1:-1]:
            dev = abs(((w - wa) * d.conjugate()).imag)
            if dev > worst_straight:
                worst_straight = dev
        for (t1, w1), (t2, w2) in zip(pts, pts[1:]):
            if t2 - t1 > 1e-9:
                sp = abs(w2 - w1) / (t2 - t1)
                if abs(sp - 1.0) > worst_speed:
                    worst_speed = abs(sp - 1.0)

    taus = [e.t for e in traj.events if e.kind == "boundary"]
    return CorrespondenceReport(
        n_crossings=len(taus),
        straightness_residual=worst_straight / diam,
        speed_residual=worst_speed,
        chi_sequence=chi_seq,
        tau_sequence=taus,
    )


def verify_correspondence(
    spec: BilliardSpec,
    init: InitialCondition,
    traj: Trajectory,
    scmap: SCMap,
    tol: float = 1e-6,
) -> CorrespondenceReport:
    """image_orbit plus the cross-oracle against the geometric billiard."""
    report = image_orbit(spec, traj, scmap)
    poly = scmap.polygon
    w0 = scmap.eval(init.u0_complex)
    chi_w = launch_direction(spec, init, scmap)
    seq = trace(
        poly,
        BilliardState(w0, cmath.exp(1j * chi_w)),
        t_max=traj.ts[-1],
        max_bounces=len(report.tau_sequence) + 2,
    )
    n = min(len(seq.bounces), len(report.tau_sequence))
    max_tau = max_chi = max_hit = 0.0
    efold = {e.t: e for e in traj.events if e.kind == "boundary"}
    folded = folded_samples(traj)
    for k in range(n):
        b = seq.bounces[k]
        max_tau = max(max_tau, abs(b.tau - report.tau_sequence[k]))
        chi_img = report.chi_sequence[k + 1] if k + 1 < len(report.chi_sequence) else None
        if chi_img is not None:
            max_chi = max(
                max_chi, abs((b.chi - chi_img + math.pi) % (2 * math.pi) - math.pi)
            )
        ev = efold.get(report.tau_sequence[k])
        if ev is not None and math.isfinite(ev.u):
            w_ev = scmap.eval(complex(ev.u))
            max_hit = max(max_hit, abs(w_ev - b.point) / poly.diameter)
    report.max_tau_err = max_tau
    report.max_chi_err = max_chi
    report.max_hit_err = max_hit
    report.bounce_match = (
        n >= 1 and max_tau < tol and max_chi < tol and len(seq.bounces) >= n
    )
    report.checks = {
        "straightness": (report.straightness_residual, tol, report.straightness_residual < tol),
        "unit_speed": (report.speed_residual, tol, report.speed_residual < tol),
        "tau_match": (max_tau, tol, max_tau < tol),
        "chi_match": (max_chi, tol, max_chi < tol),
    }
    return report


def ode_from_billiard(
    spec: BilliardSpec,
    scmap: SCMap,
    seq,
    times,
    init: InitialCondition,
):
    """Reconstruct (x1, x2) at the given times from the billiard orbit alone.

    Inverts the map at each sample, restores the half-plane sheet from the
    bounce parity, and carries the factor logs continuously along the path so
    the amplitude follows the conserved product identity.
    """
    ctx = Context()
    u_prev = init.u0_complex
    logs = [log_upper(u_prev - ua) for ua in spec.u_floats]
    mu = spec.mu_floats
    rm1 = spec.r - 1
    c_const = complex(init.x2) * cmath.exp(sum(m * l for m, l in zip(mu, logs)) / rm1)
    # parity of the first segment from the launch velocity
    chi_w = launch_direction(spec, init, scmap)
    d0 = scmap.derivative(init.u0_complex)
    udot0 = cmath.exp(1j * chi_w) / d0
    p0 = 0 if (init.u0_complex.imag > 1e-12 or udot0.imag > 0) else 1
    out = []
    seed = init.u0_complex
    for t in times:
        n = seq.segment_index(t)
        b = seq.position_at(t)
        ut = scmap.inverse(b, seed=seed)
        seed = ut
        u = ut.conjugate() if (n + p0) % 2 == 1 else ut
        for a, ua in enumerate(spec.u_floats):
            logs[a] += cmath.log((u - ua) / (u_prev - ua))
        u_prev = u
        x2 = c_const * cmath.exp(-sum(m * l for m, l in zip(mu, logs)) / rm1)
        out.append((t, u * x2, x2))
    return out


# -- crossing density ----------------------------------------------------------


class CrossingDensity:
    """Normalized crossing-position density prod |u - u_a|^(mu_a - 1) / N."""

    def __init__(self, spec: BilliardSpec, order: int = 48):
        if not spec.bounded:
            raise InvalidSpec("crossing density requires a bounded spec")
        from scipy.special import roots_jacobi, roots_legendre

        self.u = spec.u_floats
        self.beta = [m - 1.0 for m in spec.mu_floats]
        self._gl = roots_legendre(order)
        self._gj = {b: roots_jacobi(order, 0.0, b) for b in set(self.beta)}
        span = max(self.u[-1] - self.u[0], 1.0)
        self.t_lo = min(self.u[0], 0.0) - span
        self.t_hi = max(self.u[-1], 0.0) + span
        knots = [self.t_lo] + self.u + [self.t_hi]
        masses = [self._tail_mass_left()]
        for a in range(len(knots) - 1):
            masses.append(self._interval_mass(knots[a], knots[a + 1]))
        masses.append(self._tail_mass_right())
        self.knots = knots
        self.cum = np.concatenate([[0.0], np.cumsum(masses)])
        self.norm = float(self.cum[-1])

    def _raw(self, x: float) -> float:
        acc = 0.0
        for ua, b in zip(self.u, self.beta):
            d = abs(x - ua)
            if d == 0.0:
                return math.inf
            acc += b * math.log(d)
        return math.exp(acc)

    def _regular(self, x: float, skip: int) -> float:
        acc = 0.0
        for a, (ua, b) in enumerate(zip(self.u, self.beta)):
            if a == skip:
                continue
            acc += b * math.log(abs(x - ua))
        return math.exp(acc)

    def _gj_one_sided(self, alpha: int, b_end: float) -> float:
        """integral from u_alpha to b_end of the raw density (sign by direction)."""
        a_end = self.u[alpha]
        half = 0.5 * (b_end - a_end)
        xj, wj = self._gj[self.beta[alpha]]
        acc = 0.0
        for xi, wi in zip(xj, wj):
            acc += wi * self._regular(a_end + half * (1.0 + xi), alpha)
        return acc * abs(half) ** (self.beta[alpha] + 1.0) * (1 if half > 0 else -1)

    def _gl_panel(self, a: float, b: float) -> float:
        x, w = self._gl
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        return half * sum(wi * self._raw(mid + half * xi) for xi, wi in zip(x, w))

    def _interval_mass(self, a: float, b: float) -> float:
        ia = self._nearest_prevertex(a)
        ib = self._nearest_prevertex(b)
        sing_a = ia is not None and self.u[ia] == a
        sing_b = ib is not None and self.u[ib] == b
        if sing_a and sing_b:
            m = 0.5 * (a + b)
            return self._gj_one_sided(ia, m) - self._gj_one_sided(ib, m)
        if sing_a:
            return self._gj_one_sided(ia, b)
        if sing_b:
            return -self._gj_one_sided(ib, a)
        return self._gl_panel(a, b)

    def _nearest_prevertex(self, x: float):
        for a, ua in enumerate(self.u):
            if ua == x:
                return a
        return None

    def _tail_mass_right(self) -> float:
        # substitute v = 1/u: integrand becomes prod |1 - u_a v|^(mu_a - 1)
        x, w = self._gl
        v_hi = 1.0 / self.t_hi
        mid, half = 0.5 * v_hi, 0.5 * v_hi
        acc = 0.0
        for xi, wi in zip(x, w):
            v = mid + half * xi
            g = 0.0
            for ua, b in zip(self.u, self.beta):
                g += b * math.log(abs(1.0 - ua * v))
            acc += wi * math.exp(g)
        return acc * half

    def _tail_mass_left(self) -> float:
        x, w = self._gl
        v_lo = 1.0 / self.t_lo  # negative
        mid, half = 0.5 * v_lo, -0.5 * v_lo
        acc = 0.0
        for xi, wi in zip(x, w):
            v = mid + half * xi
            g = 0.0
            for ua, b in zip(self.u, self.beta):
                g += b * math.log(abs(1.0 - ua * v))
            acc += wi * math.exp(g)
        return acc * half

    def pdf(self, x: float) -> float:
        return self._raw(x) / self.norm

    def cdf(self, x: float) -> float:
        if x <= self.t_lo:
            # left tail via the 1/u chart from -inf to x
            if x == -math.inf:
                return 0.0
            return self._tail_partial_left(x) / self.norm
        if x >= self.t_hi:
            return 1.0 - self._tail_partial_right(x) / self.norm
        k = bisect.bisect_right(self.knots, x) - 1
        k = max(0, min(k, len(self.knots) - 2))
        base = self.cum[k + 1]
        return (base + self._interval_mass(self.knots[k], x)) / self.norm

    def _tail_partial_right(self, x: float) -> float:
        # mass of (x, inf) for x >= t_hi
        x_nodes, w = self._gl
        v_hi = 1.0 / x
        mid, half = 0.5 * v_hi, 0.5 * v_hi
        acc = 0.0
        for xi, wi in zip(x_nodes, w):
            v = mid + half * xi
            g = 0.0
            for ua, b in zip(self.u, self.beta):
                g += b * math.log(abs(1.0 - ua * v))
            acc += wi * math.exp(g)
        return acc * half

    def _tail_partial_left(self, x: float) -> float:
        x_nodes, w = self._gl
        v_lo = 1.0 / x
        mid, half = 0.5 * v_lo, -0.5 * v_lo
        acc = 0.0
        for xi, wi in zip(x_nodes, w):
            v = mid + half * xi
            g = 0.0
            for ua, b in zip(self.u, self.beta):
                g += b * math.log(abs(1.0 - ua * v))
            acc += wi * math.exp(g)
        return acc * half

    def ks_statistic(self, positions) -> float:
        pos = np.sort(np.asarray([p for p in positions if math.isfinite(p)]))
        n = len(pos)
        if n == 0:
            return 1.0
        f = np.array([self.cdf(float(x)) for x in pos])
        i = np.arange(1, n + 1)
        return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def crossing_density(spec: BilliardSpec) -> CrossingDensity:
    return CrossingDensity(spec)


# -- amplitude tail --------------------------------------------------------------


@dataclass
class TailFit:
    density_slope: float
    fraction_slope: float
    window: tuple
    n_tail: int


def tail_exponent(traj: Trajectory, decades: float = 2.0, bins: int = 14) -> TailFit:
    """Log-log slopes of the |x1| amplitude distribution over its top decades.

    Samples are weighted by their step durations, which makes the fraction
    statistic a genuine fraction of time.  The density slope targets the
    near-corner amplitude law; the complementary fraction adds one power.
    """
    amps = np.array([abs(z) for z in traj.x1s])
    w = np.array(traj.sample_weights())
    if len(amps) < 10 or w.sum() == 0:
        raise InsufficientTail("trajectory too short")
    order = np.argsort(amps)
    amps_s, w_s = amps[order], w[order]
    cw = np.cumsum(w_s) / w_s.sum()
    b_hi = float(amps_s[np.searchsorted(cw, 0.9995)])
    b_lo = b_hi / 10.0**decades
    if b_lo <= np.median(amps):
        b_lo = float(np.median(amps)) * 1.5
    if b_hi <= 3.0 * b_lo:
        raise InsufficientTail("amplitude range below the requested fit decades")
    n_tail = int(np.sum(amps >= b_lo))
    if n_tail < 100:
        raise InsufficientTail(f"{n_tail} samples above the fit window")

    edges = np.geomspace(b_lo, b_hi, bins + 1)
    hist, _ = np.histogram(amps, bins=edges, weights=w)
    widths = np.diff(edges)
    centers = np.sqrt(edges[1:] * edges[:-1])
    dens = hist / (widths * w.sum())
    mask = dens > 0
    if mask.sum() < 4:
        raise InsufficientTail("too few occupied histogram bins")
    density_slope = float(
        np.polyfit(np.log(centers[mask]), np.log(dens[mask]), 1)[0]
    )

    grid = np.geomspace(b_lo, b_hi / 3.0, 12)
    frac = np.array([float(w[amps > b].sum()) / w.sum() for b in grid])
    gmask = frac > 0
    fraction_slope = float(
        np.polyfit(np.log(grid[gmask]), np.log(frac[gmask]), 1)[0]
    )
    return TailFit(density_slope, fraction_slope, (b_lo, b_hi), n_tail)


# -- Lyapunov ---------------------------------------------------------------------


@dataclass
class LyapunovResult:
    lam: float
    stderr: float
    n_chunks: int
    jumps: list
    history: list
    status: str = "completed"


def benettin(
    flow,
    y0,
    delta0: float = 1e-9,
    t_total: float = 1e4,
    dt: float = 1.0,
    renorm_threshold: float = 1e-4,
    jump_factor: float = 50.0,
) -> LyapunovResult:
    """Two-trajectory renormalized divergence estimate of the top exponent.

    flow(y, dt) -> y advanced by dt, over numpy state vectors.  The running
    separation is renormalized back to delta0 whenever it exceeds the
    threshold; direction is preserved.  Chunks whose one-step growth exceeds
    jump_factor are recorded as discontinuity jumps and excluded from the
    average (corner-splitting events are jumps, not stretching).
    """
    y = np.array(y0, dtype=complex)
    z = y.copy()
    z[0] += delta0
    t = 0.0
    included_log = 0.0
    included_time = 0.0
    d_prev = delta0
    rates = []
    jumps = []
    history = []
    status = "completed"
    while t < t_total:
        try:
            y = flow(y, dt)
            z = flow(z, dt)
        except (OverflowError, FloatingPointError, CornerEncounter):
            status = "corner"
            break
        t += dt
        d = float(np.sqrt(np.sum(np.abs(z - y) ** 2)))
        if d == 0.0 or not math.isfinite(d):
            status = "corner" if not math.isfinite(d) else "degenerate"
            break
        g = math.log(d / d_prev)
        if abs(g) > math.log(jump_factor):
            jumps.append(t)
        else:
            included_log += g
            included_time += dt
            rates.append(g / dt)
        history.append((t, d))
        if d > renorm_threshold:
            z = y + (z - y) * (delta0 / d)
            d = delta0
        d_prev = d
    if included_time == 0.0:
        raise FitWindowTooSmall("no usable stretching chunks")
    lam = included_log / included_time
    stderr = float(np.std(rates) / math.sqrt(len(rates))) if len(rates) > 1 else math.inf
    return LyapunovResult(lam, stderr, len(rates), jumps, history, status)


def lyapunov_estimate(
    sys,
    init: InitialCondition,
    delta0: float = 1e-9,
    t_max: float = 1e4,
    dt: float = 1.0,
    cfg: IntegrationConfig | None = None,
) -> LyapunovResult:
    """Benettin estimate for the homogeneous complex system."""
    if cfg is None:
        cfg = IntegrationConfig(rel_tol=1e-12, t_end=t_max)
    eng = _BackendSystem(sys, Context(cfg.precision_digits))

    def flow(y, dtc):
        x1, x2 = eng.advance(complex(y[0]), complex(y[1]), dtc, cfg)
        x1, x2 = complex(x1), complex(x2)
        if abs(x1) + abs(x2) > cfg.blowup_threshold:
            raise CornerEncounter("blow-up during exponent estimation")
        return np.array([x1, x2], dtype=complex)

    y0 = np.array([complex(init.x1), complex(init.x2)], dtype=complex)
    return benettin(flow, y0, delta0=delta0, t_total=t_max, dt=dt)


# -- corner blow-up fit --------------------------------------------------------------


@dataclass
class CornerFit:
    vertex_index: int
    t0: float
    exponent_u: float
    exponent_x2: float
    k_fit: float
    k_theory: float
    ratio_limit_err: float


def corner_blowup_fit(traj: Trajectory, decades: float = 2.0) -> CornerFit:
    """Power-law fit of a corner approach flagged by the blow-up guard.

    Fits |u - u_a| and |x2| against (t0 - t) over the final decades before
    the ratio u loses resolution, estimating t0 by maximizing log-log
    linearity of |x2|.  With dense output available the window is resampled
    log-uniformly, which the geometric step clustering alone cannot provide.
    """
    if traj.status != "blowup":
        raise FitWindowTooSmall("trajectory did not end in a blow-up")
    uf = traj.prevertices
    mu = traj.weights
    u_last = traj.x1s[-1] / traj.x2s[-1]
    alpha0 = min(range(len(uf)), key=lambda a: abs(u_last - uf[a]))

    ts = np.array(traj.ts)
    x2a = np.array([abs(z) for z in traj.x2s])
    m = x2a > 10.0 * np.median(x2a)
    if m.sum() < 8:
        raise FitWindowTooSmall(f"only {int(m.sum())} samples in the growth window")
    tl, xl = ts[m], np.log(x2a[m])

    from scipy.optimize import minimize_scalar

    t_last = float(ts[-1])
    h_last = float(ts[-1] - ts[-2])
    hi = max(traj.t_blowup or (t_last + 2 * h_last), t_last + 1e-3 * h_last)

    def badness(t0):
        if t0 <= t_last:
            return 1e9
        lx = np.log(t0 - tl)
        c = np.polyfit(lx, xl, 1)
        return float(np.mean((np.polyval(c, lx) - xl) ** 2))

    res = minimize_scalar(
        badness, bounds=(t_last + 1e-9 * h_last, t_last + 10 * (hi - t_last)),
        method="bounded",
    )
    t0 = float(res.x)

    # window: the final `decades` of (t0 - t) ending where |x2| is still far
    # from the amplitude at which u - u_a falls below float resolution
    x2_cap = min(1e6, 0.01 * float(x2a.max()))
    idx = int(np.argmax(x2a >= x2_cap)) if np.any(x2a >= x2_cap) else len(x2a) - 1
    d_end = max(t0 - float(ts[idx]), 1e-300)
    d_lo, d_hi = d_end, d_end * 10.0**decades

    if traj.dense:
        ds = np.geomspace(d_lo, d_hi, 80)
        samples = []
        for d in ds:
            t = t0 - d
            if t < traj.ts[0] or t > t_last:
                continue
            z1, z2 = traj.eval(t)
            samples.append((d, abs(z1 / z2 - uf[alpha0]), abs(z2)))
        if len(samples) < 20:
            raise FitWindowTooSmall("dense window does not cover the fit decades")
        dv = np.array([s[0] for s in samples])
        uv = np.array([s[1] for s in samples])
        xv = np.array([s[2] for s in samples])
    else:
        window = (ts > t0 - d_hi) & (ts < t0 - d_lo)
        if window.sum() < 8:
            raise FitWindowTooSmall(f"only {int(window.sum())} samples in the fit window")
        dv = t0 - ts[window]
        uv = np.array(
            [abs(z1 / z2 - uf[alpha0]) for z1, z2 in zip(traj.x1s, traj.x2s)]
        )[window]
        xv = x2a[window]

    good = uv > 0
    lx = np.log(dv[good])
    fit_x2 = np.polyfit(lx, np.log(xv[good]), 1)
    fit_u = np.polyfit(lx, np.log(uv[good]), 1)
    exponent_x2 = float(fit_x2[0])
    exponent_u = float(fit_u[0])
    k_fit = float(math.exp(fit_u[1] / fit_u[0]))
    k_theory = abs(mu[alpha0])
    for a, u_a in enumerate(uf):
        if a != alpha0:
            k_theory *= abs(uf[alpha0] - u_a) ** (1.0 - mu[a])
    ratio_err = abs(u_last - uf[alpha0]) / (1.0 + abs(uf[alpha0]))
    return CornerFit(alpha0, t0, exponent_u, exponent_x2, k_fit, k_theory, ratio_err)


# -- scattering -----------------------------------------------------------------------


@dataclass
class ScatteringReport:
    channel_prevertex: int
    u_limit_error: float
    x2_slope: float
    amplitude_ratio: float
    exp_rate: float | None = None  # parallel channels only


def scattering_asymptotics(spec: BilliardSpec, traj: Trajectory) -> ScatteringReport:
    """Late-time power law of an escaping orbit of an unbounded system."""
    if spec.bounded:
        raise InvalidSpec("scattering analysis requires an unbounded spec")
    uf = spec.u_floats
    mu = spec.mu_floats
    neg = [a for a in range(len(mu)) if mu[a] <= 0]
    u_end = traj.x1s[-1] / traj.x2s[-1]
    alpha = min(neg, key=lambda a: abs(u_end - uf[a]))
    u_lim_err = abs(u_end - uf[alpha])
    if u_lim_err > 0.05 * max(uf[-1] - uf[0], 1.0):
        raise NotEscaped(f"u(t_end) = {u_end} is not near a channel prevertex")

    ts = np.array(traj.ts)
    t_end = ts[-1]
    window = ts > 0.1 * t_end
    x2a = np.array([abs(z) for z in traj.x2s])[window]
    ua = np.array(
        [abs(z1 / z2 - uf[alpha]) for z1, z2 in zip(traj.x1s, traj.x2s)]
    )[window]
    tw = ts[window]

    r = spec.r
    if mu[alpha] < 0:
        fit = np.polyfit(np.log(tw), np.log(x2a), 1)
        x2_slope = float(fit[0])
        k_mod = abs(mu[alpha])
        pre = 1.0
        for a, u_a in enumerate(uf):
            if a != alpha:
                k_mod *= abs(uf[alpha] - u_a) ** (1.0 - mu[a])
                pre *= abs(uf[alpha] - u_a) ** (-mu[a] / (r - 1))
        a_theory = pre * k_mod ** (-1.0 / (r - 1))
        a_fit = float(np.median(x2a * tw ** (1.0 / (r - 1))))
        return ScatteringReport(alpha, u_lim_err, x2_slope, a_fit / a_theory)
    # parallel channel: exponential approach of u to the prevertex, fitted
    # over the band where the distance is both decaying and resolvable
    ua_full = np.array(
        [abs(z1 / z2 - uf[alpha]) for z1, z2 in zip(traj.x1s, traj.x2s)]
    )
    ts_full = np.array(traj.ts)
    band = (ua_full > 1e-12) & (ua_full < 0.1 * max(ua_full[0], 1e-9))
    if band.sum() < 10:
        raise NotEscaped("no resolvable exponential-decay window for u")
    rate = float(np.polyfit(ts_full[band], np.log(ua_full[band]), 1)[0])
    fit = np.polyfit(np.log(tw), np.log(np.maximum(x2a, 1e-300)), 1)
    return ScatteringReport(alpha, u_lim_err, float(fit[0]), math.nan, exp_rate=rate)


def pole_passage_constant(traj: Trajectory, event, u_lo: float = 1e2, u_hi: float = 1e6):
    """Median |(t - t_inf) u(t)| over points with |u| in the given band.

    The state is regular at the passage, so stored steps rarely land inside
    the band; with dense output the neighborhood is resampled directly.
    """
    vals = []
    if traj.dense:
        for off in np.geomspace(1.0 / u_hi, 1.0 / u_lo, 40):
            for t in (event.t - off, event.t + off):
                if not traj.ts[0] <= t <= traj.ts[-1]:
                    continue
                z1, z2 = traj.eval(t)
                if z2 == 0:
                    continue
                u = z1 / z2
                if u_lo < abs(u) < u_hi:
                    vals.append(abs((t - event.t) * u))
    else:
        for t, z1, z2 in zip(traj.ts, traj.x1s, traj.x2s):
            if z2 == 0:
                continue
            u = z1 / z2
            if u_lo < abs(u) < u_hi:
                vals.append(abs((t - event.t) * u))
    if len(vals) < 3:
        raise FitWindowTooSmall("too few samples near the pole passage")
    return float(np.median(vals))


# -- periodic orbits --------------------------------------------------------------------


@dataclass
class PeriodResult:
    period: float
    recurrence_error: float
    crossings_per_period: int


def periodic_from_perpendicular(
    spec: BilliardSpec,
    u0,
    t_max: float = 400.0,
    cfg: IntegrationConfig | None = None,
    tol: float = 1e-6,
) -> PeriodResult | None:
    """Launch perpendicular to the boundary (chi0 = pi/2) and detect the period.

    Returns the full-state period verified by re-integration, None when no
    recurrence shows up within t_max, and raises CornerEncounter when the
    launch runs into a corner blow-up (the excluded measure-zero set).
    """
    if cfg is None:
        cfg = IntegrationConfig(t_end=t_max)
    else:
        cfg = IntegrationConfig(**{**cfg.__dict__, "t_end": t_max})
    sys = build_system(spec)
    init = state_from(spec, u0, math.pi / 2)
    traj = integrate(sys, init, cfg)
    if traj.status == "blowup":
        raise CornerEncounter(f"perpendicular launch from u0={u0} hit a corner")
    ev = traj.boundary_events()
    if len(ev) < 2:
        return None
    scale = 1.0 + abs(complex(init.x1)) + abs(complex(init.x2))
    cand = None
    for k in range(1, len(ev)):
        du = abs(ev[k].u - ev[0].u)
        dx2 = abs(ev[k].x2 - ev[0].x2)
        if ev[k].direction == ev[0].direction and du < 1e-4 and dx2 < 1e-4 * scale:
            cand = ev[k].t - ev[0].t
            break
    if cand is None:
        return None
    eng = _BackendSystem(sys, Context(cfg.precision_digits))
    f1, f2 = eng.advance(complex(init.x1), complex(init.x2), cand, cfg)
    err = max(abs(complex(f1) - complex(init.x1)), abs(complex(f2) - complex(init.x2)))
    if err > tol * scale:
        return None
    return PeriodResult(period=cand, recurrence_error=err, crossings_per_period=k)


# -- sections ------------------------------------------------------------------------------


def poincare_section(traj: Trajectory) -> list:
    """x2 at the real-axis crossings of u (the paper's section variable)."""
    return [e.x2 for e in traj.events if e.kind == "boundary"]


def box_counting_dimension(points, k_min: int = 2, k_max: int = 8):
    """Box-counting estimate over dyadic grids, fitted where unsaturated.

    Returns (dimension, [(eps, count)]).
    """
    pts = np.asarray([[z.real, z.imag] for z in points], dtype=float)
    n = len(pts)
    if n < 50:
        raise FitWindowTooSmall("too few section points")
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    size = float(max(hi[0] - lo[0], hi[1] - lo[1]))
    if size == 0:
        return 0.0, []
    counts = []
    for k in range(k_min, k_max + 1):
        m = 2**k
        eps = size / m
        ij = np.floor((pts - lo) / eps).astype(int)
        ij = np.clip(ij, 0, m - 1)
        cells = len(set(map(tuple, ij)))
        counts.append((eps, cells))
    usable = [(e, c) for e, c in counts if 8 <= c <= n / 3]
    if len(usable) < 2:
        usable = counts[:3]
    le = np.log([1.0 / e for e, _ in usable])
    lc = np.log([c for _, c in usable])
    dim = float(np.polyfit(le, lc, 1)[0])
    return dim, counts
