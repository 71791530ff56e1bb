"""Adaptive Taylor-series integration of the complex 2-ODE system.

Each step expands the solution in a truncated power series whose coefficients
follow from the polynomial right-hand side by convolution recurrences.  The
step size is chosen so the last two retained terms sit below tolerance, which
makes the local error behave like an embedded-pair estimate while the series
itself provides dense output for free.  Steps shrink automatically toward the
power-law blow-ups at polygon corners because the series' convergence radius
is the distance to the nearest complex-time singularity.

Two independent routes are provided: integration of (x1, x2) directly, and
integration of the ratio u = x1/x2 through the product-of-powers field with
continuously tracked factor branches.  Agreement of the two is a stringent
self-check used throughout the test suite.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

from .errors import SingularInitial
from .numeric import Context
from .systems import BilliardSpec, InitialCondition, ODESystem, recover_spec, state_at

STATUS_COMPLETED = "completed"
STATUS_BLOWUP = "blowup"
STATUS_TOLERANCE = "tolerance_failure"


@dataclass(frozen=True)
class IntegrationConfig:
    rel_tol: float = 1e-13
    abs_tol: float | None = None
    precision_digits: int = 15
    t_end: float = 100.0
    max_step: float = math.inf
    min_step: float = 1e-12
    corner_guard: float = 1e-6
    blowup_threshold: float = 1e9
    pole_threshold: float = 1e8
    order: int | None = None
    interior_checks: int = 6
    keep_dense: bool = False
    max_steps: int = 20_000_000
    conservation_every: int = 1

    def __post_init__(self):
        if self.abs_tol is None:
            object.__setattr__(self, "abs_tol", self.rel_tol)
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.precision_digits < 15:
            raise ValueError("precision_digits must be >= 15")

    @property
    def taylor_order(self) -> int:
        if self.order is not None:
            return self.order
        d = -math.log10(self.rel_tol)
        return min(40, max(12, int(round(1.2 * d)) + 4))


@dataclass
class CrossingEvent:
    """One transit of u = x1/x2 through the real axis."""

    t: float
    u: float
    direction: int
    x1: complex
    x2: complex
    kind: str = "boundary"  # "boundary" | "pole"
    near_corner: int | None = None
    chi_before: float | None = None
    chi_after: float | None = None


@dataclass
class Trajectory:
    ts: list
    x1s: list
    x2s: list
    events: list
    status: str
    conservation_max: float
    prevertices: list
    weights: list
    config: IntegrationConfig
    t_blowup: float | None = None
    dense: list | None = None
    final_state: tuple | None = None  # backend (t, x1, x2)
    route: str = "x"

    def u(self, i: int) -> complex:
        return self.x1s[i] / self.x2s[i]

    @property
    def us(self) -> list:
        return [z1 / z2 for z1, z2 in zip(self.x1s, self.x2s)]

    def boundary_events(self) -> list:
        return [e for e in self.events if e.kind == "boundary"]

    def eval(self, t: float):
        """Dense evaluation (x1, x2) at time t; requires keep_dense."""
        if not self.dense:
            raise ValueError("trajectory was integrated without keep_dense")
        idx = bisect.bisect_right([d[0] for d in self.dense], t) - 1
        idx = max(0, min(idx, len(self.dense) - 1))
        t0, h, c1, c2 = self.dense[idx]
        tau = t - t0
        return _horner(c1, tau), _horner(c2, tau)

    def sample_weights(self) -> list:
        """Duration attributable to each sample (trapezoid split of steps)."""
        n = len(self.ts)
        if n < 2:
            return [0.0] * n
        w = [0.0] * n
        for i in range(n - 1):
            dt = self.ts[i + 1] - self.ts[i]
            w[i] += 0.5 * dt
            w[i + 1] += 0.5 * dt
        return w


def _horner(coeffs, tau):
    acc = coeffs[-1]
    for c in reversed(coeffs[:-1]):
        acc = acc * tau + c
    return acc


class _SeriesWork:
    """Reusable coefficient buffers for the degree-r Horner recurrences."""

    def __init__(self, r: int, order: int, zero):
        self.r = r
        self.order = order
        self.zero = zero
        n = order + 1
        self.X1 = [zero] * n
        self.X2 = [zero] * n
        # B[k] holds the x2^k series for k = 2..r (index 0/1 unused)
        self.B = [None, None] + [[zero] * n for _ in range(max(0, r - 1))]
        self.Hp = [[zero] * n for _ in range(r)]  # Horner accumulators H^1..H^r
        self.Hq = [[zero] * n for _ in range(r)]


def _taylor_step(work: _SeriesWork, pc, qc, x1, x2):
    """Fill work.X1/work.X2 with Taylor coefficients at the current state."""
    r, N = work.r, work.order
    X1, X2, B, Hp, Hq = work.X1, work.X2, work.B, work.Hp, work.Hq
    zero = work.zero
    X1[0] = x1
    X2[0] = x2
    for n in range(N):
        # powers of x2 up to r
        for k in range(2, r + 1):
            prev = X2 if k == 2 else B[k - 1]
            B[k][n] = sum((X2[i] * prev[n - i] for i in range(n + 1)), zero)
        # Horner chains: H^1 = a_r x1 + a_{r-1} x2; H^k = H^{k-1} x1 + a_{r-k} x2^k
        Hp[0][n] = pc[r] * X1[n] + pc[r - 1] * X2[n]
        Hq[0][n] = qc[r] * X1[n] + qc[r - 1] * X2[n]
        for k in range(2, r + 1):
            conv_p = sum((Hp[k - 2][i] * X1[n - i] for i in range(n + 1)), zero)
            conv_q = sum((Hq[k - 2][i] * X1[n - i] for i in range(n + 1)), zero)
            Hp[k - 1][n] = conv_p + pc[r - k] * B[k][n]
            Hq[k - 1][n] = conv_q + qc[r - k] * B[k][n]
        X1[n + 1] = Hp[r - 1][n] / (n + 1)
        X2[n + 1] = Hq[r - 1][n] / (n + 1)


def _step_size(X1, X2, order, rel_tol, scale, max_step):
    h = max_step
    for X in (X1, X2):
        for n in (order - 1, order):
            a = abs(X[n])
            if a > 0:
                cand = (rel_tol * scale / a) ** (1.0 / n)
                if cand < h:
                    h = cand
    return 0.8 * h


class _BackendSystem:
    """ODE system compiled into one arithmetic backend, with spec data."""

    def __init__(self, sys: ODESystem, ctx: Context):
        self.sys = sys
        self.ctx = ctx
        self.r = sys.r
        with ctx:
            self.pc = [ctx.real(c) for c in sys.p_coeffs]
            self.qc = [ctx.real(c) for c in sys.q_coeffs]
            spec = recover_spec(sys)
            self.spec = spec
            # refine roots at backend precision from the (possibly exact) S
            s_coeffs = [
                (sys.q_coeffs[j - 1] if j > 0 else 0) - sys.p_coeffs[j]
                for j in range(sys.r + 1)
            ] + [1]
            sc = [ctx.real(c) for c in s_coeffs]
            dc = [k * c for k, c in enumerate(sc)][1:]
            roots = []
            for seed in spec.u_floats:
                x = ctx.real(seed)
                for _ in range(8):
                    fv = _horner(sc, x)
                    dv = _horner(dc, x)
                    if dv == 0:
                        break
                    x = x - fv / dv
                roots.append(x)
            self.prevertices = roots
            qb = [ctx.real(c) for c in sys.q_coeffs]
            self.mu = [
                (sys.r - 1) * _horner(qb, ua) / _horner(dc, ua) for ua in roots
            ]
            self.rm1 = ctx.real(sys.r - 1)

    def conserved_modulus_dev(self, x1, x2) -> float:
        """| |C| - 1 | for the current state, at backend precision.

        Returns nan when a factor cancels to zero outright (corner approaches
        at hardware precision), where the product is unresolvable.
        """
        ctx = self.ctx
        acc = None
        for m, ua in zip(self.mu, self.prevertices):
            f = abs(x1 - ua * x2)
            if f == 0:
                return math.nan
            term = m * ctx.rlog(f)
            acc = term if acc is None else acc + term
        return abs(float(ctx.rexp(acc / self.rm1) - 1))

    def advance(self, x1, x2, dt: float, cfg: IntegrationConfig):
        """Advance a raw state by dt (no events); returns backend (x1, x2)."""
        ctx = self.ctx
        with ctx:
            N = cfg.taylor_order
            work = _SeriesWork(self.r, N, ctx.zero)
            t = 0.0
            while t < dt:
                _taylor_step(work, self.pc, self.qc, x1, x2)
                scale = max(abs(x1), abs(x2), cfg.abs_tol / cfg.rel_tol)
                h = _step_size(work.X1, work.X2, N, cfg.rel_tol, scale, cfg.max_step)
                h = float(h)
                if t + h > dt:
                    h = dt - t
                hb = ctx.real(h)
                x1 = _horner(work.X1, hb)
                x2 = _horner(work.X2, hb)
                t += h
                if abs(x1) + abs(x2) > cfg.blowup_threshold:
                    break
            return x1, x2


def _refine_crossing(ctx, X1, X2, ta, tb, ga, gb):
    """Illinois refinement of Im(x1 conj(x2)) = 0 inside [ta, tb]."""
    fa, fb = ga, gb
    a, b = ta, tb
    side = 0
    root = 0.5 * (a + b)
    for _ in range(90):
        root = (a * fb - b * fa) / (fb - fa) if fb != fa else 0.5 * (a + b)
        if not (min(a, b) < root < max(a, b)):
            root = 0.5 * (a + b)
        z1 = _horner(X1, ctx.real(root))
        z2 = _horner(X2, ctx.real(root))
        g = float((z1 * z2.conjugate()).imag)
        az2 = abs(z2)
        if az2 > 0:
            u = z1 / z2
            if abs(float(u.imag)) <= 1e-12 * (1.0 + abs(float(u.real))):
                return root, z1, z2
        if g == 0.0:
            return root, z1, z2
        if (g > 0) == (fb > 0):
            b, fb = root, g
            if side == -1:
                fa *= 0.5
            side = -1
        else:
            a, fa = root, g
            if side == 1:
                fb *= 0.5
            side = 1
    z1 = _horner(X1, ctx.real(root))
    z2 = _horner(X2, ctx.real(root))
    return root, z1, z2


def integrate(sys: ODESystem, init: InitialCondition, cfg: IntegrationConfig) -> Trajectory:
    """Integrate the system from a normalized initial condition.

    Records step-endpoint samples (hardware precision), refined real-axis
    crossing events of u = x1/x2, the running conservation deviation, and the
    final state at working precision.  Status reports completion, power-law
    blow-up (corner hit), or step-size underflow.
    """
    ctx = Context(cfg.precision_digits)
    bsys = _BackendSystem(sys, ctx)
    return _run_x(bsys, init, cfg)


def _run_x(bsys: _BackendSystem, init: InitialCondition, cfg: IntegrationConfig) -> Trajectory:
    ctx = bsys.ctx
    spec = bsys.spec
    uf = spec.u_floats
    with ctx:
        x1, x2 = state_at(spec, init.u0, init.chi0, ctx)
        N = cfg.taylor_order
        work = _SeriesWork(bsys.r, N, ctx.zero)
        pc, qc = bsys.pc, bsys.qc
        conj = lambda z: z.conjugate()

        t = 0.0
        ts = [0.0]
        x1s = [complex(x1)]
        x2s = [complex(x2)]
        events: list[CrossingEvent] = []
        dense = [] if cfg.keep_dense else None
        status = STATUS_COMPLETED
        t_blowup = None
        cons_max = 0.0
        g_prev = float((x1 * conj(x2)).imag)
        h_prev = None
        nstep = 0
        m = max(2, cfg.interior_checks)

        while t < cfg.t_end:
            _taylor_step(work, pc, qc, x1, x2)
            X1, X2 = work.X1, work.X2
            scale = max(abs(x1), abs(x2), cfg.abs_tol / cfg.rel_tol)
            h = float(_step_size(X1, X2, N, cfg.rel_tol, scale, cfg.max_step))
            clipped = False
            if t + h >= cfg.t_end:
                h = cfg.t_end - t
                clipped = True
            if h < cfg.min_step and not clipped:
                big = abs(float(abs(x1))) + abs(float(abs(x2)))
                status = STATUS_BLOWUP if big > 1e-2 * cfg.blowup_threshold else STATUS_TOLERANCE
                if status == STATUS_BLOWUP:
                    t_blowup = _estimate_blowup_time(t, h, h_prev)
                break

            # scan for crossings of Im u through 0 on this step
            taus = [h * k / m for k in range(1, m + 1)]
            gl = g_prev
            tl = 0.0
            if nstep == 0:
                u0c = complex(x1 / x2)
                if abs(u0c.imag) <= 1e-12 * (1.0 + abs(u0c)):
                    tl = h * 1e-9
                    zz1 = _horner(X1, ctx.real(tl))
                    zz2 = _horner(X2, ctx.real(tl))
                    gl = float((zz1 * conj(zz2)).imag)
            for tau in taus:
                z1 = _horner(X1, ctx.real(tau))
                z2 = _horner(X2, ctx.real(tau))
                g = float((z1 * conj(z2)).imag)
                if gl != 0.0 and g != 0.0 and (gl > 0) != (g > 0):
                    root, e1, e2 = _refine_crossing(ctx, X1, X2, tl, tau, gl, g)
                    events.append(
                        _make_event(t + root, e1, e2, direction=1 if g > gl else -1,
                                    uf=uf, cfg=cfg)
                    )
                gl, tl = g, tau

            hb = ctx.real(h)
            x1 = _horner(X1, hb)
            x2 = _horner(X2, hb)
            t += h
            nstep += 1
            h_prev = h
            g_prev = gl
            ts.append(t)
            x1s.append(complex(x1))
            x2s.append(complex(x2))
            if dense is not None:
                dense.append(
                    (t - h, h, tuple(complex(c) for c in X1), tuple(complex(c) for c in X2))
                )
            if nstep % cfg.conservation_every == 0:
                dev = bsys.conserved_modulus_dev(x1, x2)
                if not math.isnan(dev) and dev > cons_max:
                    cons_max = dev
            if abs(float(abs(x1))) + abs(float(abs(x2))) > cfg.blowup_threshold:
                status = STATUS_BLOWUP
                t_blowup = _estimate_blowup_time(t, h, h_prev)
                break
            if nstep >= cfg.max_steps:
                status = STATUS_TOLERANCE
                break

        return Trajectory(
            ts=ts, x1s=x1s, x2s=x2s, events=events, status=status,
            conservation_max=cons_max,
            prevertices=spec.u_floats, weights=spec.mu_floats,
            config=cfg, t_blowup=t_blowup, dense=dense,
            final_state=(t, x1, x2), route="x",
        )


def _estimate_blowup_time(t, h, h_prev):
    if h_prev is None or h_prev <= h or h <= 0:
        return t + 2 * (h or 0.0)
    ratio = min(max(h / h_prev, 0.05), 0.95)
    return t + h * ratio / (1.0 - ratio)


def _make_event(t, z1, z2, direction, uf, cfg) -> CrossingEvent:
    az2 = abs(float(abs(z2)))
    if az2 == 0.0:
        u_val = math.inf
    else:
        u_val = float((z1 / z2).real)
    kind = "pole" if abs(u_val) > cfg.pole_threshold else "boundary"
    near = None
    if math.isfinite(u_val):
        dists = [abs(u_val - ua) for ua in uf]
        j = min(range(len(uf)), key=lambda i: dists[i])
        if dists[j] < cfg.corner_guard:
            near = j
    return CrossingEvent(
        t=float(t), u=u_val, direction=direction,
        x1=complex(z1), x2=complex(z2), kind=kind, near_corner=near,
    )


def detect_crossings(traj: Trajectory) -> list:
    """Time-ordered crossing events of the trajectory.

    Events are refined during integration on each step's series; this
    accessor re-derives them from stored dense data when present (so a
    trajectory loaded without events can still be scanned) and otherwise
    returns the recorded list.
    """
    if traj.events or not traj.dense:
        return traj.events
    ctx = Context()
    cfg = traj.config
    events = []
    m = max(2, cfg.interior_checks)
    for (t0, h, c1, c2) in traj.dense:
        gl = None
        tl = 0.0
        for k in range(0, m + 1):
            tau = h * k / m
            z1, z2 = _horner(c1, tau), _horner(c2, tau)
            g = (z1 * z2.conjugate()).imag
            if gl is not None and gl != 0.0 and g != 0.0 and (gl > 0) != (g > 0):
                root, e1, e2 = _refine_crossing(ctx, c1, c2, tl, tau, gl, g)
                events.append(
                    _make_event(t0 + root, e1, e2, 1 if g > gl else -1,
                                uf=traj.prevertices, cfg=cfg)
                )
            gl, tl = g, tau
    # dedupe events that appear at shared step boundaries
    out = []
    for e in events:
        if out and abs(e.t - out[-1].t) < 1e-12 * (1 + abs(e.t)):
            continue
        out.append(e)
    return out


# ---------------------------------------------------------------------------
# u-space route: du/dt = F * prod (u - u_a)^(1 - mu_a), branches continued
# ---------------------------------------------------------------------------


def integrate_u(spec: BilliardSpec, init: InitialCondition, cfg: IntegrationConfig) -> Trajectory:
    """Second, independent integration route through the ratio u alone.

    The factor powers are expanded by the series power recurrence, so the
    orbit analytically continues each branch instead of re-evaluating
    principal values; x1, x2 are reconstructed from the tracked logs.
    """
    ctx = Context(cfg.precision_digits)
    with ctx:
        r = spec.r
        x1, x2 = state_at(spec, init.u0, init.chi0, ctx)
        if x2 == 0:
            raise SingularInitial("x2 = 0")
        u = x1 / x2
        ua = [ctx.real(v) for v in spec.u]
        mu = [ctx.real(m) for m in spec.mu]
        # branch-consistent starting logs (limit from the upper half-plane)
        logs = [ctx.log_upper(complex(u) - complex(a)) for a in ua]
        rm1 = ctx.real(r - 1)
        mu_sum = None
        for m_, l_ in zip(mu, logs):
            term = m_ * l_
            mu_sum = term if mu_sum is None else mu_sum + term
        c_const = x2 * ctx.exp(mu_sum / rm1)
        pref = -(c_const ** (r - 1))
        s_exp = [1 - m_ for m_ in mu]

        N = cfg.taylor_order
        zero = ctx.zero
        t = 0.0
        ts = [0.0]
        x1s = [complex(x1)]
        x2s = [complex(x2)]
        events: list[CrossingEvent] = []
        status = STATUS_COMPLETED
        t_blowup = None
        h_prev = None
        nstep = 0
        g_prev = float(complex(u).imag)
        mcheck = max(2, cfg.interior_checks)

        while t < cfg.t_end:
            U = [u] + [zero] * N
            f = [[ctx.exp(s_exp[a] * logs[a])] + [zero] * N for a in range(r + 1)]
            w0 = [u - ua[a] for a in range(r + 1)]
            # running partial products of the factor series (parts[0] aliases f[0])
            parts = [f[0]]
            for a in range(1, r + 1):
                parts.append([parts[a - 1][0] * f[a][0]] + [zero] * N)
            for n in range(N):
                U[n + 1] = pref * parts[r][n] / (n + 1)
                m1 = n + 1
                for a in range(r + 1):
                    acc = zero
                    sa = s_exp[a]
                    fa = f[a]
                    for k in range(1, m1 + 1):
                        acc = acc + ((sa + 1) * k - m1) * U[k] * fa[m1 - k]
                    fa[m1] = acc / (m1 * w0[a])
                for a in range(1, r + 1):
                    pa, pprev, fa = parts[a], parts[a - 1], f[a]
                    pa[m1] = sum((pprev[k] * fa[m1 - k] for k in range(m1 + 1)), zero)

            scale = max(abs(u), 1.0)
            h = cfg.max_step
            for n in (N - 1, N):
                a_ = abs(U[n])
                if a_ > 0:
                    cand = float((cfg.rel_tol * scale / a_) ** (1.0 / n))
                    h = min(h, cand)
            h = 0.8 * float(h)
            clipped = False
            if t + h >= cfg.t_end:
                h = cfg.t_end - t
                clipped = True
            if h < cfg.min_step and not clipped:
                du = min(abs(complex(u) - complex(a)) for a in ua)
                status = STATUS_BLOWUP if du < cfg.corner_guard else STATUS_TOLERANCE
                if status == STATUS_BLOWUP:
                    t_blowup = _estimate_blowup_time(t, h, h_prev)
                break

            # crossing scan on the u-series itself
            gl, tl = g_prev, 0.0
            if nstep == 0 and abs(gl) <= 1e-12 * (1.0 + abs(complex(u))):
                tl = h * 1e-9
                gl = float(_horner(U, ctx.real(tl)).imag)
            for k in range(1, mcheck + 1):
                tau = h * k / mcheck
                g = float(_horner(U, ctx.real(tau)).imag)
                if gl != 0.0 and g != 0.0 and (gl > 0) != (g > 0):
                    root = _refine_u_crossing(ctx, U, tl, tau, gl, g)
                    uev = _horner(U, ctx.real(root))
                    x2ev = _reconstruct_x2(ctx, c_const, mu, rm1, logs, U, u, ua, root)
                    events.append(
                        _make_event(t + root, uev * x2ev, x2ev, 1 if g > gl else -1,
                                    uf=spec.u_floats, cfg=cfg)
                    )
                gl, tl = g, tau

            # advance and continue the branch logs through sub-steps
            hb = ctx.real(h)
            u = _continue_logs(ctx, U, logs, ua, 0.0, h)
            t += h
            nstep += 1
            h_prev = h
            g_prev = gl
            x2v = c_const * ctx.exp(-_dot(mu, logs, zero) / rm1)
            x1v = u * x2v
            ts.append(t)
            x1s.append(complex(x1v))
            x2s.append(complex(x2v))
            if nstep >= cfg.max_steps:
                status = STATUS_TOLERANCE
                break

        return Trajectory(
            ts=ts, x1s=x1s, x2s=x2s, events=events, status=status,
            conservation_max=0.0,
            prevertices=spec.u_floats, weights=spec.mu_floats,
            config=cfg, t_blowup=t_blowup, dense=None,
            final_state=(t, x1s[-1], x2s[-1]), route="u",
        )


def _dot(mu, logs, zero):
    acc = zero
    for m_, l_ in zip(mu, logs):
        acc = acc + m_ * l_
    return acc


def _continue_logs(ctx, U, logs, ua, tau_a, tau_b, depth=0):
    """Advance per-factor logs along the series path from tau_a to tau_b.

    Splits recursively until every factor's phase increment is below pi/2,
    which keeps the analytic continuation unambiguous even when the orbit
    swings around a nearby prevertex.  Returns u(tau_b).  Mutates logs.
    """
    za = _horner(U, ctx.real(tau_a))
    zb = _horner(U, ctx.real(tau_b))
    incs = [ctx.log((zb - a_) / (za - a_)) for a_ in ua]
    if depth < 24 and any(abs(float(inc.imag)) > 1.2 for inc in incs):
        mid = 0.5 * (tau_a + tau_b)
        _continue_logs(ctx, U, logs, ua, tau_a, mid, depth + 1)
        return _continue_logs(ctx, U, logs, ua, mid, tau_b, depth + 1)
    for a in range(len(ua)):
        logs[a] = logs[a] + incs[a]
    return zb


def _reconstruct_x2(ctx, c_const, mu, rm1, logs, U, u0, ua, tau):
    """x2 at an intra-step point, continuing a copy of the step-start logs."""
    work = list(logs)
    _continue_logs(ctx, U, work, ua, 0.0, tau)
    acc = None
    for m_, l_ in zip(mu, work):
        term = m_ * l_
        acc = term if acc is None else acc + term
    return c_const * ctx.exp(-acc / rm1)


def _refine_u_crossing(ctx, U, ta, tb, ga, gb):
    a, b, fa, fb = ta, tb, ga, gb
    side = 0
    root = 0.5 * (a + b)
    for _ in range(90):
        root = (a * fb - b * fa) / (fb - fa) if fb != fa else 0.5 * (a + b)
        if not (min(a, b) < root < max(a, b)):
            root = 0.5 * (a + b)
        uv = _horner(U, ctx.real(root))
        g = float(uv.imag)
        if abs(g) <= 1e-12 * (1.0 + abs(float(uv.real))):
            return root
        if (g > 0) == (fb > 0):
            b, fb = root, g
            if side == -1:
                fa *= 0.5
            side = -1
        else:
            a, fa = root, g
            if side == 1:
                fb *= 0.5
            side = 1
    return root
