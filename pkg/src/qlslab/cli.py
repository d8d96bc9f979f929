"""Command-line front door.

Subcommands cover the standard experiments (ground states, constrained
minimization, threshold-mass bisection, time evolution, stability/blow-up
protocols, the virial check, parameter sweeps) plus a configuration-file
runner and the verification battery. Outputs are deterministic: identical
arguments (and seed) produce bit-identical JSON and CSV files.

Exit codes: 0 success, 1 usage/configuration error, 2 certified identity
violated, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .fields import (Field, ModelParams, line_grid, radial_grid, save_field,
                     load_field)
from . import functionals
from .groundstate import (CertificateError, solve_ground_state_1d,
                          solve_ground_state_radial)
from . import massmin
from . import evolution
from . import verify as verify_mod

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CERTIFICATE = 2
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on malformed arguments, not argparse's 2
        self.print_usage(sys.stderr)
        raise SystemExit((EXIT_USAGE, f"{self.prog}: error: {message}"))


def _json_dump(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2, default=float)
        fh.write("\n")


def _out_dir(args) -> str:
    d = os.environ.get("QLSLAB_OUT_DIR", args.out_dir)
    os.makedirs(d, exist_ok=True)
    return d


def _grid_from(args, N):
    kind = args.grid_kind or ("line" if N == 1 else "radial")
    if kind == "line":
        if N != 1:
            raise ValueError("line grids are one-dimensional")
        return line_grid(h=args.h, R=args.R)
    return radial_grid(N, h=args.h, R=args.R)


def _echo_config(args, extra=None):
    cfg = {k: v for k, v in vars(args).items()
           if k not in ("func",) and not k.startswith("_")}
    if extra:
        cfg.update(extra)
    return cfg


def _report_series(rec: evolution.TrajectoryRecord, out_dir, base, args):
    traj_path = os.path.join(out_dir, base + ".csv")
    rec.to_csv(traj_path)
    return traj_path


# -- scenario runners -----------------------------------------------------------


def run_ground_state(args) -> int:
    params = ModelParams(N=args.N, p=args.p, omega=args.omega)
    grid = _grid_from(args, args.N)
    out = _out_dir(args)
    try:
        if args.N == 1:
            gs = solve_ground_state_1d(params, grid=grid,
                                       certify_tol=args.certify_tol)
        else:
            gs = solve_ground_state_radial(params, grid=grid,
                                           certify_tol=args.certify_tol)
    except CertificateError as exc:
        print(f"certificate failed: {exc}", file=sys.stderr)
        return EXIT_CERTIFICATE
    save_field(os.path.join(out, args.out), gs.u)
    payload = {"certificate": gs.certificate,
               "config": _echo_config(args)}
    _json_dump(os.path.join(out, args.report), payload)
    print(f"ground state N={args.N} p={args.p} omega={args.omega}: "
          f"peak {gs.certificate['peak_amplitude']:.6f}, "
          f"decay {gs.certificate['decay_rate']:.4f}, "
          f"worst identity defect "
          f"{max(gs.certificate[k] for k in ('pohozaev_rel', 'virial_rel', 'nehari_rel')):.2e}")
    return EXIT_OK


def run_mass_min(args) -> int:
    params = ModelParams(N=args.N, p=args.p, c=args.c)
    grid = _grid_from(args, args.N)
    out = _out_dir(args)
    res = massmin.minimize_at_mass(args.c, params, grid,
                                   seed_width=args.seed_width)
    if res.outcome == "step_failure":
        print("flow stalled before convergence", file=sys.stderr)
        return EXIT_NUMERICAL
    save_field(os.path.join(out, args.profile), res.u)
    with open(os.path.join(out, args.flow_csv), "w") as fh:
        fh.write("iteration,energy,constraint_drift\n")
        for i, (e, d) in enumerate(zip(res.history_energy, res.history_drift)):
            fh.write(f"{i},{e:.17g},{d:.17g}\n")
    payload = {"c": res.c, "m_c": res.m_c, "lambda_c": res.lambda_c,
               "outcome": res.outcome, "iterations": res.iterations,
               "stationarity_residual": res.stationarity_residual(),
               "config": _echo_config(args)}
    _json_dump(os.path.join(out, args.report), payload)
    print(f"m({args.c}) = {res.m_c:.8g}  lambda = {res.lambda_c:.8g}  "
          f"[{res.outcome}, {res.iterations} iterations]")
    return EXIT_OK


def run_critical_mass(args) -> int:
    params = ModelParams(N=args.N, p=args.p)
    grid = _grid_from(args, args.N)
    out = _out_dir(args)
    try:
        res = massmin.critical_mass(params, (args.clo, args.chi), grid,
                                    tol_neg=args.tol_neg)
    except ValueError as exc:
        print(f"bracket error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    payload = {"c_hat": res.c_hat, "bracket": list(res.bracket),
               "tol_neg": res.tol_neg,
               "evaluations": [[c, m] for c, m in res.evaluations],
               "config": _echo_config(args)}
    _json_dump(os.path.join(out, args.report), payload)
    print(f"threshold mass c({args.p}, {args.N}) ~ {res.c_hat:.6g} "
          f"(bracket width {res.bracket[1] - res.bracket[0]:.2e})")
    return EXIT_OK


def _initial_data(args, grid) -> Field:
    if args.init is not None:
        f = load_field(args.init)
        return f
    if args.gaussian is not None:
        parts = [float(t) for t in args.gaussian.split(",")]
        amp, width = parts[0], parts[1]
        chirp = parts[2] if len(parts) > 2 else 0.0
        return evolution.gaussian_data(grid, amplitude=amp, width=width,
                                       chirp=chirp)
    raise ValueError("supply --init FILE or --gaussian AMP,WIDTH[,CHIRP]")


def _evo_config(args) -> evolution.EvolutionConfig:
    return evolution.EvolutionConfig(
        dt=args.dt, T=args.T, scheme=args.scheme,
        inner_tol=args.inner_tol, snapshot_every=args.snapshot_every,
        blowup_gradient_factor=args.blowup_factor,
        boundary_leak_tol=args.leak_tol)


def run_evolve(args) -> int:
    params = ModelParams(N=args.N, p=args.p, omega=args.omega)
    out = _out_dir(args)
    try:
        if args.init is not None:
            a0 = load_field(args.init)
            grid = a0.grid
        else:
            grid = _grid_from(args, args.N)
            a0 = _initial_data(args, grid)
        rec = evolution.evolve(a0, _evo_config(args), params)
    except evolution.StepFailureError as exc:
        print(f"evolution failed: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    traj = _report_series(rec, out, args.traj, args)
    if args.save_final:
        save_field(os.path.join(out, args.save_final), rec.final_state)
    payload = {"summary": rec.summary(), "config": _echo_config(args)}
    _json_dump(os.path.join(out, args.report), payload)
    s = rec.summary()
    print(f"evolved to t={s['t_end']:.6g} [{s['outcome']}]  "
          f"mass drift {s['mass_drift']:.2e}  energy drift {s['energy_drift']:.2e}  "
          f"series -> {traj}")
    return EXIT_OK


def run_virial_check(args) -> int:
    params = ModelParams(N=args.N, p=args.p)
    grid = _grid_from(args, args.N)
    out = _out_dir(args)
    a0 = _initial_data(args, grid)
    rec = evolution.evolve(a0, _evo_config(args), params)
    t = rec.times
    if t.size < 5:
        print("too few snapshots for a second difference", file=sys.stderr)
        return EXIT_NUMERICAL
    dt_s = t[1] - t[0]
    vdd = (rec.variance[2:] - 2 * rec.variance[1:-1] + rec.variance[:-2]) / dt_s ** 2
    target = 8.0 * rec.virial[1:-1]
    dev = float(np.max(np.abs(vdd - target) / np.abs(target)))
    _report_series(rec, out, args.traj, args)
    payload = {"max_relative_deviation": dev, "tolerance": args.tol,
               "summary": rec.summary(), "config": _echo_config(args)}
    _json_dump(os.path.join(out, args.report), payload)
    print(f"variance curvature against 8x virial: max deviation {dev:.3%}")
    return EXIT_OK if dev <= args.tol else EXIT_CERTIFICATE


def run_stability(args) -> int:
    out = _out_dir(args)
    grid = _grid_from(args, args.N)
    cfg = _evo_config(args)
    if args.p < 3.0 + 4.0 / args.N:
        params = ModelParams(N=args.N, p=args.p, c=args.c)
        ref = massmin.minimize_at_mass(args.c, params, grid)
        if ref.m_c >= 0:
            print(f"m({args.c}) = {ref.m_c:.3e} is not negative; pick a larger "
                  "mass", file=sys.stderr)
            return EXIT_NUMERICAL
        params = params.with_omega(-ref.lambda_c)
        reference = ref
    else:
        params = ModelParams(N=args.N, p=args.p, omega=args.omega)
        reference = solve_ground_state_1d(params, grid=grid) if args.N == 1 \
            else solve_ground_state_radial(params, grid=grid)
    try:
        rep = evolution.stability_run(reference, args.delta, cfg, params)
    except evolution.StepFailureError as exc:
        print(f"evolution failed: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    _report_series(rep.record, out, args.traj, args)
    payload = {"delta": rep.delta, "sigma": rep.sigma,
               "sup_orbit_distance": rep.sup_distance,
               "ratio_to_delta": rep.sup_distance / rep.delta,
               "summary": rep.record.summary(), "config": _echo_config(args)}
    _json_dump(os.path.join(out, args.report), payload)
    print(f"sup orbit distance {rep.sup_distance:.4g} = "
          f"{rep.sup_distance / rep.delta:.2f} x delta over T = {args.T}")
    return EXIT_OK


def run_blowup(args) -> int:
    params = ModelParams(N=args.N, p=args.p, omega=args.omega)
    grid = _grid_from(args, args.N)
    out = _out_dir(args)
    gs = solve_ground_state_1d(params, grid=grid) if args.N == 1 \
        else solve_ground_state_radial(params, grid=grid)
    cfg = _evo_config(args)
    try:
        rep = evolution.instability_run(gs, args.sigma, cfg)
    except evolution.StepFailureError as exc:
        print(f"evolution failed: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"{exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    _report_series(rep.record, out, args.traj, args)
    payload = {"sigma": rep.sigma, "rho0": rep.rho0,
               "sign_virial": rep.sign_virial, "sign_nehari": rep.sign_nehari,
               "t_bound_root": rep.t_bound_root,
               "virial_stays_below": rep.virial_stays_below,
               "variance_bound_ok": rep.variance_bound_ok,
               "blowup_flagged": rep.blowup_flagged, "t_star": rep.t_star,
               "summary": rep.record.summary(), "config": _echo_config(args)}
    _json_dump(os.path.join(out, args.report), payload)
    flag = "BLEW UP" if rep.blowup_flagged else rep.record.outcome
    print(f"{flag} at t* = {rep.t_star}  (variance bound root {rep.t_bound_root:.3f}, "
          f"rho0 = {rep.rho0:.4g})")
    return EXIT_OK


def run_verify_suite(args) -> int:
    rows = verify_mod.run_battery(fast=args.fast)
    print(verify_mod.format_matrix(rows))
    if args.report:
        out = _out_dir(args)
        payload = {"rows": [vars(r) for r in rows],
                   "passed": all(r.passed for r in rows)}
        _json_dump(os.path.join(out, args.report), payload)
    return EXIT_OK if all(r.passed for r in rows) else EXIT_CERTIFICATE


# -- sweep ------------------------------------------------------------------------


def _sweep_cell(payload):
    scenario, axis_name, value, base = payload
    args = argparse.Namespace(**base)
    setattr(args, axis_name, value)
    if scenario == "critical-mass":
        params = ModelParams(N=args.N, p=args.p)
        grid = line_grid(h=args.h, R=args.R) if args.N == 1 \
            else radial_grid(args.N, h=args.h, R=args.R)
        res = massmin.critical_mass(params, (args.clo, args.chi), grid,
                                    tol_neg=args.tol_neg)
        return {axis_name: value, "c_hat": res.c_hat}
    if scenario == "ground-state":
        params = ModelParams(N=args.N, p=args.p, omega=args.omega)
        grid = line_grid(h=args.h, R=args.R) if args.N == 1 \
            else radial_grid(args.N, h=args.h, R=args.R)
        gs = solve_ground_state_1d(params, grid=grid) if args.N == 1 \
            else solve_ground_state_radial(params, grid=grid)
        return {axis_name: value,
                "action": gs.certificate["action"],
                "mass": gs.certificate["mass"],
                "peak": gs.certificate["peak_amplitude"],
                "decay_rate": gs.certificate["decay_rate"]}
    raise ValueError(f"sweep does not support scenario {scenario!r}")


def run_sweep(args) -> int:
    out = _out_dir(args)
    axis_name, _, values = args.axis.partition("=")
    axis_name = axis_name.strip()
    vals = [float(v) for v in values.split(",") if v.strip()]
    if not vals:
        print("empty sweep axis", file=sys.stderr)
        return EXIT_USAGE
    base = {k: v for k, v in vars(args).items() if k != "func"}
    jobs = [(args.scenario, axis_name, v, base) for v in vals]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_sweep_cell, jobs))
    else:
        results = [_sweep_cell(j) for j in jobs]
    csv_path = os.path.join(out, args.out)
    cols = list(results[0])
    with open(csv_path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in results:
            fh.write(",".join(f"{row[k]:.17g}" for k in cols) + "\n")
    print(f"sweep over {axis_name} in {vals}: wrote {csv_path}")
    return EXIT_OK


# -- config-file runner -------------------------------------------------------------


_SCENARIO_RUNNERS = {}


def run_config(args) -> int:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = cp.read(args.config)
    if not read:
        print(f"cannot read config file {args.config}", file=sys.stderr)
        return EXIT_USAGE
    if "scenario" not in cp or "name" not in cp["scenario"]:
        print(f"{args.config}: missing [scenario] section with 'name ='",
              file=sys.stderr)
        return EXIT_USAGE
    name = cp["scenario"]["name"].strip()
    if name not in _SCENARIO_RUNNERS:
        print(f"{args.config}: unknown scenario {name!r} "
              f"(choose from {sorted(_SCENARIO_RUNNERS)})", file=sys.stderr)
        return EXIT_USAGE
    argv = [name]
    for section in cp.sections():
        if section == "scenario":
            items = {k: v for k, v in cp["scenario"].items() if k != "name"}
        else:
            items = dict(cp[section].items())
        for key, val in items.items():
            flag = f"--{key.replace('_', '-')}"
            v = val.strip()
            if v.lower() == "true":
                argv.append(flag)  # boolean switch
            else:
                argv.extend([flag, v])
    parser = build_parser()
    try:
        sub = parser.parse_args(argv)
    except SystemExit as exc:
        code, msg = exc.code if isinstance(exc.code, tuple) else (EXIT_USAGE, "")
        if msg:
            print(msg, file=sys.stderr)
        print(f"{args.config}: malformed scenario arguments", file=sys.stderr)
        return EXIT_USAGE
    return sub.func(sub)


# -- parser ---------------------------------------------------------------------


def _add_common(sp, *, grid=True, evo=False):
    sp.add_argument("--out-dir", default=".",
                    help="output directory (env QLSLAB_OUT_DIR overrides)")
    sp.add_argument("--seed", type=int, default=0, help="deterministic seed")
    sp.add_argument("--format", choices=("json", "csv"), default="json")
    if grid:
        sp.add_argument("--h", type=float, default=0.02, help="grid spacing")
        sp.add_argument("--R", type=float, default=30.0, help="domain extent")
        sp.add_argument("--grid-kind", choices=("line", "radial"), default=None)
    if evo:
        sp.add_argument("--dt", type=float, default=1e-3)
        sp.add_argument("--T", type=float, default=1.0)
        sp.add_argument("--scheme", default="semi_implicit_relaxation",
                        choices=("semi_implicit_relaxation", "explicit_rk4"))
        sp.add_argument("--snapshot-every", type=int, default=10)
        sp.add_argument("--inner-tol", type=float, default=1e-12)
        sp.add_argument("--blowup-factor", type=float, default=1e3)
        sp.add_argument("--leak-tol", type=float, default=1e-6)
        sp.add_argument("--traj", default="trajectory.csv")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="qlslab",
                 description="numerical laboratory for a quasilinear "
                             "Schrödinger equation")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("ground-state", help="solve and certify a standing-wave profile")
    sp.add_argument("--N", type=int, required=True)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--omega", type=float, required=True)
    sp.add_argument("--certify-tol", type=float, default=1e-3)
    sp.add_argument("--out", default="profile.csv")
    sp.add_argument("--report", default="report.json")
    _add_common(sp)
    sp.set_defaults(func=run_ground_state)

    sp = sub.add_parser("mass-min", help="constrained energy minimization at fixed mass")
    sp.add_argument("--N", type=int, required=True)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--c", type=float, required=True)
    sp.add_argument("--seed-width", type=float, default=1.0)
    sp.add_argument("--report", default="massmin.json")
    sp.add_argument("--flow-csv", default="flow.csv")
    sp.add_argument("--profile", default="minimizer.csv")
    _add_common(sp)
    sp.set_defaults(func=run_mass_min)

    sp = sub.add_parser("critical-mass", help="bisect the threshold constraint mass")
    sp.add_argument("--N", type=int, required=True)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--clo", type=float, required=True)
    sp.add_argument("--chi", type=float, required=True)
    sp.add_argument("--tol-neg", type=float, default=1e-8)
    sp.add_argument("--report", default="critical_mass.json")
    _add_common(sp)
    sp.set_defaults(func=run_critical_mass)

    sp = sub.add_parser("evolve", help="time-evolve initial data")
    sp.add_argument("--N", type=int, required=True)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--omega", type=float, default=None)
    sp.add_argument("--init", default=None, help="field snapshot CSV")
    sp.add_argument("--gaussian", default=None, help="AMP,WIDTH[,CHIRP]")
    sp.add_argument("--report", default="evolve.json")
    sp.add_argument("--save-final", default=None)
    _add_common(sp, evo=True)
    sp.set_defaults(func=run_evolve)

    sp = sub.add_parser("virial-check",
                        help="variance curvature against 8x the virial functional")
    sp.add_argument("--N", type=int, required=True)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--init", default=None)
    sp.add_argument("--gaussian", default="1.0,1.0")
    sp.add_argument("--tol", type=float, default=0.02)
    sp.add_argument("--report", default="virial.json")
    _add_common(sp, evo=True)
    sp.set_defaults(func=run_virial_check)

    sp = sub.add_parser("stability-run",
                        help="dilation-perturb a reference orbit and track distance")
    sp.add_argument("--N", type=int, required=True)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--c", type=float, default=1.0,
                    help="constraint mass (subcritical regime)")
    sp.add_argument("--omega", type=float, default=1.0,
                    help="frequency (supercritical regime)")
    sp.add_argument("--delta", type=float, default=1e-2)
    sp.add_argument("--report", default="stability.json")
    _add_common(sp, evo=True)
    sp.set_defaults(func=run_stability)

    sp = sub.add_parser("blowup-run",
                        help="dilation-perturbed standing wave in the unstable regime")
    sp.add_argument("--N", type=int, required=True)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--omega", type=float, required=True)
    sp.add_argument("--sigma", type=float, default=1.05)
    sp.add_argument("--report", default="blowup.json")
    _add_common(sp, evo=True)
    sp.set_defaults(func=run_blowup)

    sp = sub.add_parser("sweep", help="parameter sweep over one axis")
    sp.add_argument("--scenario", required=True,
                    choices=("critical-mass", "ground-state"))
    sp.add_argument("--axis", required=True, help="e.g. p=5,5.5,6")
    sp.add_argument("--N", type=int, required=True)
    sp.add_argument("--p", type=float, default=5.0)
    sp.add_argument("--omega", type=float, default=1.0)
    sp.add_argument("--clo", type=float, default=1.0)
    sp.add_argument("--chi", type=float, default=8.0)
    sp.add_argument("--tol-neg", type=float, default=1e-8)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--out", default="sweep.csv")
    _add_common(sp)
    sp.set_defaults(func=run_sweep)

    sp = sub.add_parser("run", help="execute a scenario from an INI config file")
    sp.add_argument("--config", required=True)
    sp.set_defaults(func=run_config)

    sp = sub.add_parser("verify-suite", help="run the identity battery")
    sp.add_argument("--fast", action="store_true")
    sp.add_argument("--report", default=None)
    sp.add_argument("--out-dir", default=".")
    sp.set_defaults(func=run_verify_suite)

    return ap


_SCENARIO_RUNNERS.update({
    "ground-state": run_ground_state,
    "mass-min": run_mass_min,
    "critical-mass": run_critical_mass,
    "evolve": run_evolve,
    "virial-check": run_virial_check,
    "stability-run": run_stability,
    "blowup-run": run_blowup,
    "sweep": run_sweep,
    "verify-suite": run_verify_suite,
})


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if isinstance(exc.code, tuple):
            code, msg = exc.code
            print(msg, file=sys.stderr)
            return code
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except CertificateError as exc:
        print(f"certificate failed: {exc}", file=sys.stderr)
        return EXIT_CERTIFICATE
    except (ValueError, configparser.Error) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RuntimeError, evolution.StepFailureError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
