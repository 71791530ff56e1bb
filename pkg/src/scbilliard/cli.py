"""Command-line front end: build, simulate, map, billiard, verify, analyze."""

from __future__ import annotations

import argparse
import cmath
import hashlib
import json
import math
import os
import random
import sys
from fractions import Fraction
from pathlib import Path

from . import __version__
from .billiard import BilliardState, trace
from .correspondence import (
    CrossingDensity,
    box_counting_dimension,
    corner_blowup_fit,
    image_orbit,
    launch_direction,
    lyapunov_estimate,
    periodic_from_perpendicular,
    poincare_section,
    scattering_asymptotics,
    tail_exponent,
    verify_correspondence,
)
from .errors import InvalidParameter, InvalidSpec, ScBilliardError
from .integrate import IntegrationConfig, integrate
from .presets import PRESETS, get_preset
from .scmap import SCMap
from .systems import (
    BilliardSpec,
    build_system,
    conserved_modulus,
    spec_from_json,
    spec_to_json,
    state_from,
)

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_INVALID = 2

PRECISION_ENV = "SCBILLIARD_PRECISION"


def _spec_hash(spec: BilliardSpec) -> str:
    blob = json.dumps(spec_to_json(spec), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _fmt_coeff(c) -> str:
    if isinstance(c, Fraction):
        return str(c)
    if isinstance(c, int):
        return str(c)
    return repr(float(c))


def _poly_str(coeffs, r: int) -> str:
    terms = []
    for j in range(r, -1, -1):
        c = coeffs[j]
        if c == 0:
            continue
        if j == r:
            mon = f"x1^{r}" if r > 1 else "x1"
        elif j == 0:
            mon = f"x2^{r}" if r > 1 else "x2"
        else:
            p1 = f"x1^{j}" if j > 1 else "x1"
            p2 = f"x2^{r - j}" if r - j > 1 else "x2"
            mon = f"{p1} {p2}"
        cs = _fmt_coeff(c)
        if cs == "1":
            terms.append(mon)
        elif cs == "-1":
            terms.append(f"-{mon}")
        else:
            terms.append(f"{cs} {mon}")
    out = " + ".join(terms)
    return out.replace("+ -", "- ")


class _Run:
    """Resolved inputs for one command invocation."""

    def __init__(self, spec, u0, chi0, cfg, preset_name, seed, aim_vertex=None, aim_phi_inf=False):
        self.spec = spec
        self.u0 = u0
        self.chi0 = chi0
        self.cfg = cfg
        self.preset_name = preset_name
        self.seed = seed
        self.aim_vertex = aim_vertex
        self.aim_phi_inf = aim_phi_inf

    def header(self, extra=None) -> list:
        lines = [
            f"# tool=scbilliard {__version__}",
            f"# spec_hash={_spec_hash(self.spec)}",
            f"# preset={self.preset_name or '-'}",
            f"# seed={self.seed}",
            f"# precision_digits={self.cfg.precision_digits}",
            f"# rel_tol={self.cfg.rel_tol!r}",
            f"# t_end={self.cfg.t_end!r}",
            f"# u0={self.u0!r}",
            f"# chi0={self.chi0!r}",
        ]
        for k, v in (extra or {}).items():
            lines.append(f"# {k}={v}")
        return lines

    def resolve_chi0(self) -> float:
        """Computed launch angles for corner- and pole-aimed runs."""
        if self.chi0 is not None:
            return self.chi0
        scmap = SCMap(self.spec, base_point=complex(self.u0))
        theta = cmath.phase(scmap.derivative(complex(self.u0)))
        if self.aim_vertex is not None:
            target = scmap.polygon.vertices[self.aim_vertex]
        elif self.aim_phi_inf:
            target = scmap.polygon.phi_inf
        else:
            raise InvalidParameter("chi0 missing and no aim target set")
        self.chi0 = (cmath.phase(target) - theta) % (2 * math.pi)
        return self.chi0


def _resolve(args) -> _Run:
    seed = args.seed
    preset_name = getattr(args, "preset", None)
    cfg_kwargs = {}
    aim_vertex = None
    aim_phi_inf = False
    if preset_name:
        preset = get_preset(preset_name)
        spec, u0, chi0 = preset.spec, preset.u0, preset.chi0
        cfg_kwargs.update(preset.integration_kwargs())
        aim_vertex = preset.aim_vertex
        aim_phi_inf = preset.aim_phi_inf
    elif getattr(args, "config", None):
        with open(args.config) as fh:
            blob = json.load(fh)
        spec, u0, chi0 = spec_from_json(blob)
        if u0 is None:
            u0 = Fraction(1, 4)
        for key in ("t_end", "precision_digits", "rel_tol"):
            if key in blob:
                cfg_kwargs[key] = blob[key]
        if "chi0" in blob:
            chi0 = float(blob["chi0"])
    else:
        raise InvalidSpec("one of --preset or --config is required")

    if getattr(args, "chi0", None) is not None:
        if args.chi0 == "random":
            chi0 = random.Random(seed).uniform(0.0, 2 * math.pi)
        else:
            chi0 = float(args.chi0)
    if getattr(args, "u0", None) is not None:
        u0 = Fraction(args.u0) if "/" in args.u0 else float(args.u0)
    if getattr(args, "t_end", None) is not None:
        cfg_kwargs["t_end"] = args.t_end
    if getattr(args, "rel_tol", None) is not None:
        cfg_kwargs["rel_tol"] = args.rel_tol
    precision = getattr(args, "precision", None)
    if precision is None and os.environ.get(PRECISION_ENV):
        precision = int(os.environ[PRECISION_ENV])
    if precision is not None:
        cfg_kwargs["precision_digits"] = precision
    if getattr(args, "keep_dense", False):
        cfg_kwargs["keep_dense"] = True
    cfg = IntegrationConfig(**cfg_kwargs)
    return _Run(spec, u0, chi0, cfg, preset_name, seed, aim_vertex, aim_phi_inf)


def _outdir(args) -> Path:
    out = Path(getattr(args, "out", ".") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, lines) -> None:
    path.write_text("\n".join(lines) + "\n")


# -- commands -------------------------------------------------------------------


def cmd_build(args) -> int:
    run = _resolve(args)
    preset = get_preset(run.preset_name) if run.preset_name else None
    sys_ = preset.system if preset and preset.system else build_system(run.spec)
    print(f"r = {sys_.r}")
    print(f"x1' = {_poly_str(sys_.p_coeffs, sys_.r)}")
    print(f"x2' = {_poly_str(sys_.q_coeffs, sys_.r)}")
    if args.out:
        out = _outdir(args)
        blob = {
            "r": sys_.r,
            "p_coeffs": [_fmt_coeff(c) for c in sys_.p_coeffs],
            "q_coeffs": [_fmt_coeff(c) for c in sys_.q_coeffs],
            "spec": spec_to_json(run.spec),
            "spec_hash": _spec_hash(run.spec),
            "tool": f"scbilliard {__version__}",
        }
        (out / "system.json").write_text(json.dumps(blob, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_map(args) -> int:
    run = _resolve(args)
    scmap = SCMap(run.spec, base_point=complex(run.u0))
    poly = scmap.polygon
    blob = poly.to_json()
    blob["spec_hash"] = _spec_hash(run.spec)
    blob["tool"] = f"scbilliard {__version__}"
    out = _outdir(args)
    (out / "polygon.json").write_text(json.dumps(blob, indent=2, sort_keys=True) + "\n")
    angle_sum = sum(poly.angles)
    print(f"polygon: {poly.n} vertices, bounded={poly.bounded}, "
          f"angle sum = {angle_sum / math.pi:.12f} pi")
    return EXIT_OK


def _simulate(run: _Run):
    sys_ = build_system(run.spec)
    init = state_from(run.spec, run.u0, run.resolve_chi0())
    traj = integrate(sys_, init, run.cfg)
    return sys_, init, traj


def _traj_csv(run: _Run, traj) -> list:
    lines = run.header({"status": traj.status, "conservation_max": repr(traj.conservation_max)})
    lines.append("t,re_x1,im_x1,re_x2,im_x2,re_u,im_u,absC")
    for t, z1, z2 in zip(traj.ts, traj.x1s, traj.x2s):
        u = z1 / z2 if z2 != 0 else complex("nan")
        try:
            c = conserved_modulus(run.spec, z1, z2)
        except (ValueError, OverflowError, ZeroDivisionError):
            c = float("nan")
        lines.append(
            f"{t!r},{z1.real!r},{z1.imag!r},{z2.real!r},{z2.imag!r},"
            f"{u.real!r},{u.imag!r},{c!r}"
        )
    return lines


def _events_csv(run: _Run, traj) -> list:
    lines = run.header()
    lines.append("t,u,direction,kind,near_corner,re_x2,im_x2")
    for e in traj.events:
        lines.append(
            f"{e.t!r},{e.u!r},{e.direction},{e.kind},"
            f"{'' if e.near_corner is None else e.near_corner},"
            f"{e.x2.real!r},{e.x2.imag!r}"
        )
    return lines


def cmd_simulate(args) -> int:
    run = _resolve(args)
    _, init, traj = _simulate(run)
    out = _outdir(args)
    _write(out / "trajectory.csv", _traj_csv(run, traj))
    _write(out / "events.csv", _events_csv(run, traj))
    summary = {
        "status": traj.status,
        "t_final": traj.ts[-1],
        "n_samples": len(traj.ts),
        "n_events": len(traj.events),
        "conservation_max": traj.conservation_max,
        "t_blowup": traj.t_blowup,
        "spec_hash": _spec_hash(run.spec),
        "seed": run.seed,
        "tool": f"scbilliard {__version__}",
    }
    (out / "run.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"status={traj.status} samples={len(traj.ts)} events={len(traj.events)} "
          f"max||C|-1|={traj.conservation_max:.3e}")
    return EXIT_OK if traj.status in ("completed", "blowup") else EXIT_NUMERICAL


def cmd_billiard(args) -> int:
    run = _resolve(args)
    scmap = SCMap(run.spec, base_point=complex(run.u0))
    init = state_from(run.spec, run.u0, run.resolve_chi0())
    w0 = scmap.eval(init.u0_complex)
    chi_w = launch_direction(run.spec, init, scmap)
    seq = trace(
        scmap.polygon,
        BilliardState(w0, cmath.exp(1j * chi_w)),
        t_max=run.cfg.t_end,
        max_bounces=args.max_bounces,
    )
    out = _outdir(args)
    lines = run.header({"terminal": seq.terminal})
    lines.extend(seq.to_csv().strip().split("\n"))
    _write(out / "bounces.csv", lines)
    print(f"terminal={seq.terminal} bounces={len(seq.bounces)} t={seq.t_total:.3f}")
    return EXIT_OK


def cmd_verify(args) -> int:
    run = _resolve(args)
    sys_, init, traj = _simulate(run)
    scmap = SCMap(run.spec, base_point=init.u0_complex)
    report = verify_correspondence(run.spec, init, traj, scmap, tol=args.tol)
    report.checks["conservation"] = (
        traj.conservation_max,
        args.conservation_tol,
        traj.conservation_max < args.conservation_tol,
    )
    blob = report.to_json()
    blob["spec_hash"] = _spec_hash(run.spec)
    blob["seed"] = run.seed
    blob["tool"] = f"scbilliard {__version__}"
    out = _outdir(args)
    (out / "report.json").write_text(json.dumps(blob, indent=2, sort_keys=True) + "\n")
    ok = True
    for name, (value, threshold, passed) in report.checks.items():
        ok &= bool(passed)
        print(f"{'PASS' if passed else 'FAIL'} {name}: {value:.3e} (tol {threshold:.1e})")
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_analyze(args) -> int:
    run = _resolve(args)
    which = args.which
    out = _outdir(args)
    if which == "period":
        preset = get_preset(run.preset_name) if run.preset_name else None
        grid = list(preset.u0_grid) if preset and preset.u0_grid else [run.u0]
        lines = run.header()
        lines.append("u0,period,recurrence_error,crossings,outcome")
        n_ok = 0
        for u0 in grid:
            try:
                pr = periodic_from_perpendicular(run.spec, u0, t_max=run.cfg.t_end, cfg=run.cfg)
            except ScBilliardError:
                lines.append(f"{u0},,,,corner")
                continue
            if pr is None:
                lines.append(f"{u0},,,,none")
            else:
                n_ok += 1
                lines.append(
                    f"{u0},{pr.period!r},{pr.recurrence_error!r},{pr.crossings_per_period},periodic"
                )
        _write(out / "periods.csv", lines)
        print(f"periodic: {n_ok}/{len(grid)}")
        return EXIT_OK

    sys_, init, traj = _simulate(run)
    if which == "crossings":
        dens = CrossingDensity(run.spec)
        pos = [e.u for e in traj.boundary_events()]
        ks = dens.ks_statistic(pos)
        lines = run.header({"ks": repr(ks), "n_crossings": len(pos)})
        lines.append("u,pdf")
        us = sorted(pos)
        for u in us:
            lines.append(f"{u!r},{dens.pdf(u)!r}")
        _write(out / "crossings.csv", lines)
        print(f"crossings={len(pos)} ks={ks:.4f}")
    elif which == "tail":
        fit = tail_exponent(traj)
        lines = run.header(
            {
                "density_slope": repr(fit.density_slope),
                "fraction_slope": repr(fit.fraction_slope),
                "window_lo": repr(fit.window[0]),
                "window_hi": repr(fit.window[1]),
                "n_tail": fit.n_tail,
            }
        )
        lines.append("quantity,value")
        lines.append(f"density_slope,{fit.density_slope!r}")
        lines.append(f"fraction_slope,{fit.fraction_slope!r}")
        _write(out / "tail.csv", lines)
        print(f"density_slope={fit.density_slope:.3f} fraction_slope={fit.fraction_slope:.3f}")
    elif which == "poincare":
        pts = poincare_section(traj)
        dim, counts = box_counting_dimension(pts)
        lines = run.header({"dimension": repr(dim), "n_points": len(pts)})
        lines.append("re_x2,im_x2")
        for z in pts:
            lines.append(f"{z.real!r},{z.imag!r}")
        _write(out / "poincare.csv", lines)
        print(f"points={len(pts)} dimension={dim:.3f}")
    elif which == "lyapunov":
        res = lyapunov_estimate(sys_, init, t_max=run.cfg.t_end)
        blob = {
            "lambda": res.lam,
            "stderr": res.stderr,
            "n_chunks": res.n_chunks,
            "jumps": res.jumps,
            "status": res.status,
            "spec_hash": _spec_hash(run.spec),
            "tool": f"scbilliard {__version__}",
        }
        (out / "lyapunov.json").write_text(json.dumps(blob, indent=2, sort_keys=True) + "\n")
        print(f"lambda={res.lam:.3e} stderr={res.stderr:.1e}")
    elif which == "scattering":
        rep = scattering_asymptotics(run.spec, traj)
        lines = run.header()
        lines.append("quantity,value")
        lines.append(f"channel_prevertex,{rep.channel_prevertex}")
        lines.append(f"u_limit_error,{rep.u_limit_error!r}")
        lines.append(f"x2_slope,{rep.x2_slope!r}")
        lines.append(f"amplitude_ratio,{rep.amplitude_ratio!r}")
        if rep.exp_rate is not None:
            lines.append(f"exp_rate,{rep.exp_rate!r}")
        _write(out / "scattering.csv", lines)
        print(f"x2_slope={rep.x2_slope:.4f} u_err={rep.u_limit_error:.2e}")
    elif which == "corner":
        fit = corner_blowup_fit(traj)
        lines = run.header()
        lines.append("quantity,value")
        lines.append(f"vertex,{fit.vertex_index}")
        lines.append(f"t0,{fit.t0!r}")
        lines.append(f"exponent_u,{fit.exponent_u!r}")
        lines.append(f"exponent_x2,{fit.exponent_x2!r}")
        lines.append(f"k_fit,{fit.k_fit!r}")
        lines.append(f"k_theory,{fit.k_theory!r}")
        _write(out / "corner.csv", lines)
        print(f"exponent_u={fit.exponent_u:.4f} exponent_x2={fit.exponent_x2:.4f}")
    else:
        raise InvalidParameter(f"unknown analysis {which!r}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="scbilliard",
        description="Homogeneous complex 2-ODE systems and their billiard correspondence",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, dense=False):
        p.add_argument("--preset", choices=sorted(PRESETS), help="named experiment")
        p.add_argument("--config", help="JSON spec file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--precision", type=int, default=None, help="decimal digits")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--t-end", dest="t_end", type=float, default=None)
        p.add_argument("--rel-tol", dest="rel_tol", type=float, default=None)
        p.add_argument("--u0", default=None, help="initial ratio (real, 'p/q' allowed)")
        p.add_argument("--chi0", default=None, help="launch phase, or 'random'")
        if dense:
            p.add_argument("--keep-dense", action="store_true")

    common(sub.add_parser("build", help="print the ODE system for a spec"))
    common(sub.add_parser("map", help="compute the polygon"))
    common(sub.add_parser("simulate", help="integrate and export the trajectory"), dense=True)
    pb = sub.add_parser("billiard", help="trace the geometric billiard")
    common(pb)
    pb.add_argument("--max-bounces", type=int, default=10_000)
    pv = sub.add_parser("verify", help="run the correspondence checks")
    common(pv)
    pv.add_argument("--tol", type=float, default=1e-6)
    pv.add_argument("--conservation-tol", type=float, default=1e-8)
    pa = sub.add_parser("analyze", help="statistical analyses of a run")
    common(pa, dense=True)
    pa.add_argument(
        "--which",
        required=True,
        choices=["crossings", "tail", "poincare", "lyapunov", "scattering", "corner", "period"],
    )
    return ap


_COMMANDS = {
    "build": cmd_build,
    "map": cmd_map,
    "simulate": cmd_simulate,
    "billiard": cmd_billiard,
    "verify": cmd_verify,
    "analyze": cmd_analyze,
}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code not in (0, None) else EXIT_OK
    try:
        return _COMMANDS[args.command](args)
    except (InvalidSpec, InvalidParameter, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ScBilliardError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    raise SystemExit(main())
