"""Batch front door: scenario files in, CSV reports and figures out.

Exit codes: 0 success, 2 validation error (diagnostics on stderr with
file/line), 3 runtime truncation (guard trip, chart exit) with partial
outputs written.  Delimited outputs are deterministic: 17 significant
digits, Unix newlines, no locale formatting.  Figures accompany every
report unless --no-plot is given.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import conserve, fields, hamjac, radial
from . import expr as ex
from .integrate import run, trajectory_to_csv
from .modes import find_equilibrium, normal_modes, quadratic_approx
from .scenario import Scenario, ScenarioError, load_scenario
from .systems import LagrangianSystem

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_TRUNCATED = 3


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _rng() -> np.random.Generator:
    return np.random.default_rng(int(os.environ.get("NOETHERLAB_SEED", "0")))


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _csv(header: list[str], rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _default_monitors(sys: LagrangianSystem, scen: Scenario):
    monitors = [conserve.energy_monitor(sys)] + conserve.momentum_monitors(sys)
    is_cartesian = (sys.has_constant_metric
                    and np.allclose(sys.metric, sys.metric[0, 0] * np.eye(sys.n)))
    if sys.n == 3 and is_cartesian:
        monitors += conserve.angular_momentum_monitors(sys)
        if scen.has("system") and "kepler_mass" in scen.sections["system"]:
            monitors += conserve.runge_lenz_monitors(
                sys, scen.number("system", "kepler_mass"))
    return monitors


def _symmetry_monitors(sys: LagrangianSystem, scen: Scenario):
    from .systems import to_velocities
    monitors = []
    fields_ = []
    for label, comps in scen.symmetries():
        sf = conserve.SymmetryField.parse(comps, sys.coords,
                                          tuple(sys.params.keys()), label=label)
        fields_.append(sf)

        def fn(t, q, p, _sf=sf):
            from .systems import PhaseState
            v = to_velocities(sys, PhaseState(q, p))
            return conserve.noether_charge(sys, _sf, v)
        monitors.append(conserve.Monitor(f"noether:{label}", fn))
    return monitors, fields_


def _simulate_one(scenario_path: str, out_dir: Path, plot: bool) -> int:
    scen = load_scenario(scenario_path)
    sys_ = scen.build_system()
    state0 = scen.build_initial_state(sys_)
    spec = scen.build_run_spec()
    traj = run(sys_, state0, spec)

    out_dir.mkdir(parents=True, exist_ok=True)
    _write(out_dir / "trajectory.csv", trajectory_to_csv(sys_, traj))

    monitors = _default_monitors(sys_, scen)
    sym_monitors, sym_fields = _symmetry_monitors(sys_, scen)
    reports = conserve.audit(traj, monitors + sym_monitors)
    _write(out_dir / "audit.csv", conserve.audit_to_csv(reports))

    lines = [f"scenario = {scenario_path}",
             f"samples = {len(traj)}",
             f"t_final = {_fmt(traj.t[-1])}",
             f"truncated = {traj.truncated}"]
    if traj.truncated:
        lines.append(f"reason = {traj.reason}")
    rng = _rng()
    if sym_fields:
        idx = rng.choice(len(traj), size=min(8, len(traj)), replace=False)
        for sf in sym_fields:
            rep = conserve.killing_residual(sys_, sf, [traj.q[i] for i in idx])
            lines.append(f"killing[{sf.label}] metric_residual = "
                         f"{_fmt(rep.metric_residual)} potential_residual = "
                         f"{_fmt(rep.potential_residual)}")
    for r in reports:
        lines.append(f"drift[{r.label}] = {_fmt(r.max_drift)}"
                     + ("" if r.valid else f" INVALID ({r.error})"))
    _write(out_dir / "summary.txt", "\n".join(lines) + "\n")

    if plot:
        from .plotting import render_trajectory
        render_trajectory(traj, traj.energies(sys_), out_dir / "trajectory.png")
    return EXIT_TRUNCATED if traj.truncated else EXIT_OK


def _simulate_worker(args):
    path, out, plot = args
    try:
        return _simulate_one(path, Path(out), plot)
    except ScenarioError as err:
        print(err, file=sys.stderr)
        return EXIT_VALIDATION


def cmd_simulate(args) -> int:
    out_root = Path(args.out)
    jobs = []
    for path in args.scenario:
        sub = out_root if len(args.scenario) == 1 else out_root / Path(path).stem
        jobs.append((path, str(sub), not args.no_plot))
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            codes = list(pool.map(_simulate_worker, jobs))
    else:
        codes = [_simulate_worker(j) for j in jobs]
    return max(codes)


# ---------------------------------------------------------------------------
# radial
# ---------------------------------------------------------------------------

def cmd_radial(args) -> int:
    scen = load_scenario(args.scenario) if args.scenario else None

    def pick(flag_value, key, default=None):
        if flag_value is not None:
            return flag_value
        if scen is not None and scen.has("radial") and key in scen.sections["radial"]:
            return scen.number("radial", key)
        if default is not None:
            return default
        raise ScenarioError(args.scenario or "<flags>", 0,
                            f"radial needs --{key} or a [radial].{key} entry")

    M = pick(args.M, "M")
    L = pick(args.L, "L")
    E = pick(args.E, "E")
    lo, hi = args.bracket
    V = radial.newton_potential(M)
    params = {"M": M}

    prof = radial.effective_profile(V, L, E, (lo, hi), params)
    r_grid = np.geomspace(lo, hi, args.points)
    veff_vals = np.array([radial.v_eff(V, L, r, params) for r in r_grid])

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "profile.csv", _csv(["r", "V_eff"], zip(r_grid, veff_vals)))

    lines = [f"M = {_fmt(M)}", f"L = {_fmt(L)}", f"E = {_fmt(E)}",
             f"classification = {prof.classification}",
             f"turning_points = {' '.join(_fmt(r) for r in prof.turning_points)}"]
    landmarks = radial.kepler_profile(M, L)
    for key, val in landmarks.items():
        lines.append(f"{key} = {_fmt(val)}")
    el = radial.kepler_elements(M, L, E)
    lines += [f"p = {_fmt(el.p)}", f"eccentricity = {_fmt(el.eccentricity)}",
              f"r_per = {_fmt(el.r_per)}"]
    if el.r_aph is not None:
        lines.append(f"r_aph = {_fmt(el.r_aph)}")
    if el.T is not None:
        lines += [f"a = {_fmt(el.a)}", f"b = {_fmt(el.b)}", f"T = {_fmt(el.T)}"]
    block = "\n".join(lines) + "\n"
    _write(out / "elements.txt", block)
    print(block, end="")

    phi = np.linspace(0.0, 2.0 * math.pi, args.points)
    phi_g, r_tr, x_tr, y_tr, ok = radial.orbit_trace(el, phi)
    rows = [(phi_g[i], r_tr[i], x_tr[i], y_tr[i]) for i in range(len(phi_g)) if ok[i]]
    _write(out / "trace.csv", _csv(["phi", "r", "x", "y"], rows))

    if not args.no_plot:
        from .plotting import render_radial
        render_radial(r_grid, veff_vals, E, prof.turning_points,
                      (x_tr[ok], y_tr[ok]), out / "radial.png")
    return EXIT_OK


# ---------------------------------------------------------------------------
# modes
# ---------------------------------------------------------------------------

def cmd_modes(args) -> int:
    scen = load_scenario(args.scenario)
    sys_ = scen.build_system()
    guess = scen.floats("modes", "guess", " ".join(["0"] * sys_.n))
    eq = find_equilibrium(sys_, guess, newton_tol=args.newton_tol)
    alpha, omega = quadratic_approx(sys_, eq.q0)
    ms = normal_modes(alpha, omega, eig_tol=args.eig_tol)

    line = (f"equilibrium at ({', '.join(_fmt(v) for v in eq.q0)}) "
            f"classification = {eq.classification}")
    print(line)
    for k in range(ms.n):
        wk = ms.frequencies[k]
        print(f"mode {k+1}: lambda = {_fmt(ms.eigenvalues[k])}"
              + (f", omega = {_fmt(wk)}" if np.isfinite(wk) else ""))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = ["mode", "lambda", "omega"] + [f"xi_{i+1}" for i in range(ms.n)]
    rows = [[k + 1, ms.eigenvalues[k],
             ms.frequencies[k] if np.isfinite(ms.frequencies[k]) else float("nan"),
             *ms.eigenvectors[:, k]] for k in range(ms.n)]
    _write(out / "modes.csv", _csv(header, rows))
    _write(out / "modes.txt", line + "\n")

    if not args.no_plot:
        from .plotting import render_modes
        render_modes(ms, out / "modes.png")
    return EXIT_OK


# ---------------------------------------------------------------------------
# hj (two-center)
# ---------------------------------------------------------------------------

def cmd_hj(args) -> int:
    scen = load_scenario(args.scenario)
    c = scen.number("hj", "c", "1")
    k = scen.number("hj", "k", "1")
    dt = scen.number("hj", "dt", "1e-4")
    steps = scen.integer("hj", "steps", "10000")
    xi_anchor = scen.number("hj", "xi_anchor", str(2.2 * c))

    sys_ = hamjac.two_center_system(c, k)
    state0 = scen.build_initial_state(sys_)
    from .integrate import IntegratorSpec
    traj = run(sys_, state0, IntegratorSpec("rk4", dt, steps))
    ts, C, c1 = hamjac.separation_constants(traj, c, k)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "constants.csv", _csv(["t", "C", "c1"], zip(ts, C, c1)))

    fam = hamjac.two_center_family(c, k, xi_anchor)
    gx = scen.floats("hj", "grid_xi", f"{2.1*c} {3.5*c} 7")
    ge = scen.floats("hj", "grid_eta", f"{-1.5*c} {1.5*c} 7")
    grid = [np.array([xi_, eta_])
            for xi_ in np.linspace(gx[0], gx[1], int(gx[2]))
            for eta_ in np.linspace(ge[0], ge[1], int(ge[2]))]

    def h_fn(x, p):
        return hamjac.two_center_hamiltonian([x[0], x[1], p[0], p[1]], c, k)

    rep = hamjac.hj_residual(h_fn, fam, grid, [np.array([C[0], c1[0]])])
    lines = [f"C = {_fmt(C[0])}", f"c1 = {_fmt(c1[0])}",
             f"std_C = {_fmt(float(np.std(C)))}",
             f"std_c1 = {_fmt(float(np.std(c1)))}",
             f"hj_residual_max = {_fmt(rep.max_residual)}",
             f"hj_residual_mean = {_fmt(rep.mean_residual)}",
             f"grid_points_skipped = {rep.skipped}",
             f"trace_truncated = {len(ts) < len(traj)}"]
    block = "\n".join(lines) + "\n"
    _write(out / "hj.txt", block)
    print(block, end="")

    if not args.no_plot:
        from .plotting import render_hj
        render_hj(ts, C, c1, out / "hj.png")
    return EXIT_TRUNCATED if len(ts) < len(traj) else EXIT_OK


# ---------------------------------------------------------------------------
# field kg / maxwell
# ---------------------------------------------------------------------------

def _field_param(scen, args, key, default, kind=float):
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if scen is not None and scen.has("field") and key in scen.sections["field"]:
        return (scen.integer if kind is int else scen.number)("field", key)
    return default


def cmd_field_kg(args) -> int:
    scen = load_scenario(args.scenario) if args.scenario else None
    n = int(_field_param(scen, args, "n", 256, int))
    dx = _field_param(scen, args, "dx", 0.1)
    m = _field_param(scen, args, "m", 1.0)
    dt = _field_param(scen, args, "dt", 1e-3)
    steps = int(_field_param(scen, args, "steps", 10000, int))
    boundary = "periodic"
    amplitude = _field_param(scen, args, "amplitude", 0.3)
    mode = int(_field_param(scen, args, "init_mode", 1, int))
    if scen is not None and scen.has("field") and "boundary" in scen.sections["field"]:
        boundary = scen.raw("field", "boundary")

    lat = fields.Lattice1D(n, dx, boundary)
    kx = 2.0 * math.pi * mode / (n * dx)
    phi = amplitude * np.cos(kx * lat.x)
    pi = amplitude * kx * np.sin(kx * lat.x)
    f = fields.ScalarField(lat, phi, pi)

    every = max(1, steps // 512)
    ts, Es, Ps = [f.t], [fields.kg_energy(f, m)], [fields.kg_momentum(f)]
    for i in range(steps):
        f = fields.kg_step(f, m, dt)
        if (i + 1) % every == 0 or i + 1 == steps:
            ts.append(f.t)
            Es.append(fields.kg_energy(f, m))
            Ps.append(fields.kg_momentum(f))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "snapshot.csv", _csv(["x", "phi", "pi"],
                                      zip(lat.x, f.phi, f.pi)))
    _write(out / "charges.csv", _csv(["t", "E", "P"], zip(ts, Es, Ps)))

    drifts = fields.charge_conservation_audit(
        np.array(ts), {"E": np.array(Es), "P": np.array(Ps)})
    for d in drifts:
        print(f"{d.label}: initial = {_fmt(d.initial)} "
              f"max_drift = {_fmt(d.max_drift)} relative = {_fmt(d.relative_drift)}")

    if not args.no_plot:
        from .plotting import render_field_kg
        render_field_kg(lat.x, f.phi, f.pi, np.array(ts), np.array(Es),
                        np.array(Ps), out / "field_kg.png")
    return EXIT_OK


def cmd_field_maxwell(args) -> int:
    scen = load_scenario(args.scenario) if args.scenario else None
    n = int(_field_param(scen, args, "n", 16, int))
    dx = _field_param(scen, args, "dx", 1.0)
    dt = _field_param(scen, args, "dt", 0.01)
    steps = int(_field_param(scen, args, "steps", 1000, int))
    init = "plane"
    if scen is not None and scen.has("field") and "init" in scen.sections["field"]:
        init = scen.raw("field", "init")
    if args.init is not None:
        init = args.init

    if init == "plane":
        g = fields.plane_wave_grid(n, dx, amplitude=0.1)
    elif init == "random":
        g = fields.random_divergence_free_grid(n, dx, _rng(), scale=0.1)
    else:
        print(f"unknown init {init!r}", file=sys.stderr)
        return EXIT_VALIDATION

    every = max(1, steps // 256)
    de0, db0 = fields.em_divergence(g)
    rows = [(g.t, de0, db0, fields.em_energy(g))]
    for i in range(steps):
        g = fields.maxwell_step(g, dt)
        if (i + 1) % every == 0 or i + 1 == steps:
            de, db = fields.em_divergence(g)
            rows.append((g.t, de, db, fields.em_energy(g)))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "constraints.csv", _csv(["t", "maxdivE", "maxdivB", "energy"], rows))

    arr = np.array(rows)
    print(f"max |div E| = {_fmt(float(arr[:, 1].max()))}")
    print(f"max |div B| = {_fmt(float(arr[:, 2].max()))}")
    print(f"relative energy drift = "
          f"{_fmt(float(np.max(np.abs(arr[:, 3] - arr[0, 3])) / arr[0, 3]))}")

    if not args.no_plot:
        from .plotting import render_maxwell
        render_maxwell(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3],
                       out / "field_maxwell.png")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="noetherlab",
        description="Lagrangian/Hamiltonian mechanics lab: scenarios in, "
                    "CSV reports and figures out.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate a scenario and audit charges")
    p.add_argument("scenario", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel workers for multi-scenario sweeps")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("radial", help="effective-potential / Kepler report")
    p.add_argument("--scenario")
    p.add_argument("--M", type=float)
    p.add_argument("--L", type=float)
    p.add_argument("--E", type=float)
    p.add_argument("--bracket", type=float, nargs=2, default=(1e-3, 100.0))
    p.add_argument("--points", type=int, default=361)
    p.add_argument("--out", required=True)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(fn=cmd_radial)

    p = sub.add_parser("modes", help="equilibrium, stability, normal modes")
    p.add_argument("scenario")
    p.add_argument("--out", required=True)
    p.add_argument("--newton-tol", type=float, default=1e-10)
    p.add_argument("--eig-tol", type=float, default=1e-8)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(fn=cmd_modes)

    p = sub.add_parser("hj", help="two-center separation constants and residual")
    p.add_argument("scenario")
    p.add_argument("--out", required=True)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(fn=cmd_hj)

    p = sub.add_parser("field", help="lattice field theory lab")
    fsub = p.add_subparsers(dest="field_kind", required=True)

    pk = fsub.add_parser("kg", help="1+1D Klein-Gordon")
    pk.add_argument("--scenario")
    pk.add_argument("--n", type=int)
    pk.add_argument("--dx", type=float)
    pk.add_argument("--m", type=float)
    pk.add_argument("--dt", type=float)
    pk.add_argument("--steps", type=int)
    pk.add_argument("--amplitude", type=float)
    pk.add_argument("--init-mode", dest="init_mode", type=int)
    pk.add_argument("--out", required=True)
    pk.add_argument("--no-plot", action="store_true")
    pk.set_defaults(fn=cmd_field_kg)

    pm = fsub.add_parser("maxwell", help="3+1D vacuum Yee stepper")
    pm.add_argument("--scenario")
    pm.add_argument("--n", type=int)
    pm.add_argument("--dx", type=float)
    pm.add_argument("--dt", type=float)
    pm.add_argument("--steps", type=int)
    pm.add_argument("--init", choices=("plane", "random"))
    pm.add_argument("--out", required=True)
    pm.add_argument("--no-plot", action="store_true")
    pm.set_defaults(fn=cmd_field_maxwell)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ScenarioError as err:
        print(err, file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, ex.ParseError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
