"""Command-line driver: forward, invert, analyze, verify and sweep.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 verification failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import io as tio
from .config import ConfigError, load_config
from .elliptic import EllipticError
from .forward import SolverError, forward_solve
from .geodesics import GeodesicError, critical_times, visibility_map
from .grid import GridError, hd_norm, make_domain
from .medium import Cutoff, MediumError, random_phantom
from .reconstruction import (attenuation_sweep, continuity_bound, continuity_experiment,
                             neumann_reconstruct, reconstruction_metrics, stability_probe)
from .verify import _damped, run_suite

log = logging.getLogger("tatsolve")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 1, 2, 3
COMMANDS = ("forward", "invert", "analyze", "verify", "sweep")


class VerificationFailure(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_CONFIG)


def build_parser():
    p = _Parser(prog="tatsolve", description="Attenuated thermoacoustic tomography experiments.")
    sub = p.add_subparsers(dest="command", metavar="{" + ",".join(COMMANDS) + "}")
    sub.required = True
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="experiment config (INI)")
        s.add_argument("--output-dir", help="override [output] directory")
        s.add_argument("--seed", type=int, help="override [output] seed")
        s.add_argument("--workers", type=int, default=1, help="processes for sweep runs")
        s.add_argument("--max-iters", type=int, help="override [solver] max_iters")
        s.add_argument("--tol", type=float, help="override [solver] tol")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


class _Run:
    """Resolved config plus output helpers for one subcommand."""

    def __init__(self, command, cfg):
        self.command = command
        self.cfg = cfg
        self.out = cfg["output"]["directory"]
        os.makedirs(self.out, exist_ok=True)
        self.tag = f"tatsolve {command} config={cfg.hash()}"

    def path(self, name):
        return os.path.join(self.out, name)

    def csv(self, name, header, rows):
        tio.write_text(self.path(name), tio.dumps_csv(header, rows, self.tag))

    def fgrid(self, name, grid, values):
        tio.write_text(self.path(name), tio.dumps_fgrid(grid, values, self.tag))


def _apply_overrides(cfg, args):
    out = {}
    if args.output_dir is not None:
        out["directory"] = args.output_dir
    if args.seed is not None:
        out["seed"] = args.seed
    if out:
        cfg = cfg.replace("output", **out)
    solver = {}
    if args.max_iters is not None:
        solver["max_iters"] = args.max_iters
    if args.tol is not None:
        solver["tol"] = args.tol
    if solver:
        cfg = cfg.replace("solver", **solver)
    if args.workers < 1:
        raise ConfigError("--workers must be at least 1")
    return cfg


def _setup(run):
    geom = run.cfg.geometry()
    return geom, run.cfg.medium(geom), run.cfg.phantom(geom)


def _measure(run, medium, f):
    m = run.cfg["measurement"]
    trace, state, slog = forward_solve(medium, f, m["T"], m["dt"], m["cfl_safety"])
    if m["noise_std"] > 0:
        rng = np.random.default_rng(run.cfg["output"]["seed"])
        noisy = trace.samples + m["noise_std"] * rng.standard_normal(trace.samples.shape)
        trace = type(trace)(noisy, trace.dt, trace.geometry_hash)
    return trace, state, slog


def _cutoff(run, medium):
    c = run.cfg["cutoff"]
    if c["mode"] == "complete" and c["T0"] is None:
        T0 = critical_times(medium, run.cfg["analysis"]["n_directions"]).T0
        log.info("computed T0 = %.6g for the complete-data cutoff", T0)
        return run.cfg.cutoff(T0)
    return run.cfg.cutoff()


def cmd_forward(run):
    geom, medium, ph = _setup(run)
    trace, state, slog = _measure(run, medium, ph.f)
    tio.write_text(run.path("trace.btrace"), tio.dumps_btrace(trace, run.tag))
    run.fgrid("phantom.fgrid", geom.grid, ph.f)
    run.fgrid("terminal.fgrid", geom.grid, state.position)
    run.fgrid("terminal_velocity.fgrid", geom.grid, state.velocity)
    rows = [(k, (k + 0.5) * slog.dt, eb, eo) for k, (eb, eo) in enumerate(zip(slog.energy_box, slog.energy_omega))]
    run.csv("energy.csv", ["step", "time", "energy_box", "energy_omega"], rows)
    return EXIT_OK


def _load_or_measure(run, geom, medium, f):
    path = run.path("trace.btrace")
    if os.path.exists(path):
        trace = tio.loads_btrace(tio.read_text(path))
        if trace.geometry_hash == geom.hash() and abs(trace.T - run.cfg.T) <= 1e-12 * run.cfg.T:
            log.info("using recorded trace %s", path)
            return trace
        log.warning("recorded trace does not match this configuration; re-measuring")
    return _measure(run, medium, f)[0]


def cmd_invert(run):
    geom, medium, ph = _setup(run)
    trace = _load_or_measure(run, geom, medium, ph.f)
    s = run.cfg["solver"]
    truth = ph.f if np.any(ph.f) else None
    f_hat, rep = neumann_reconstruct(medium, trace, _cutoff(run, medium), s["max_iters"], s["tol"],
                                     f_true=truth, tol_elliptic=s["tol_elliptic"], patience=s["patience"])
    run.fgrid("reconstruction.fgrid", geom.grid, f_hat)
    rows = [tuple("" if v is None else v for v in r) for r in rep.rows()]
    run.csv("series.csv", ["m", "residual_hd", "error_hd", "contraction_ratio"], rows)
    summary = [("converged", str(rep.converged)), ("stop_reason", rep.stop_reason)]
    if truth is not None:
        summary += list(reconstruction_metrics(f_hat, truth, geom).items())
    run.csv("metrics.csv", ["name", "value"], summary)
    if rep.stop_reason == "divergence":
        raise SolverError("Neumann series diverged; best iterate written")
    return EXIT_OK


def cmd_analyze(run):
    geom, medium, _ = _setup(run)
    a = run.cfg["analysis"]
    X, Y = geom.grid.coords()
    r = np.hypot(X - geom.center[0], Y - geom.center[1])
    K = (r <= a["K_radius"] * geom.half_width) & geom.interior_mask
    cutoff = _cutoff(run, medium) if run.cfg["cutoff"]["mode"] == "partial" else Cutoff(run.cfg.T, "partial")
    ct = critical_times(medium, a["n_directions"], K_points=np.stack([X[K], Y[K]], 1)[:: max(1, K.sum() // 64)],
                        arc_range=cutoff.arc_range)
    rows = [(k, float(v) if v is not None else "") for k, v in ct.as_dict().items()]
    run.csv("critical_times.csv", ["name", "value"], rows)
    run.fgrid("visibility.fgrid", geom.grid, visibility_map(medium, cutoff, K, a["map_directions"]))
    if ct.trapped:
        log.warning("some sampled geodesics hit the trapping cap")
    return EXIT_OK


def cmd_verify(run):
    rows = run_suite(run.cfg)
    run.csv("verify.csv", ["check", "value", "threshold", "result"], rows)
    failed = [r[0] for r in rows if r[3] != "pass"]
    if failed:
        raise VerificationFailure("failed checks: " + ", ".join(failed))
    return EXIT_OK


def _sweep_level(args):
    cfg, level, out = args
    geom = cfg.geometry()
    medium = _sweep_medium(cfg, geom)
    f = cfg.phantom(geom).f
    s = cfg["solver"]
    rows, _ = attenuation_sweep(medium, f, cfg.T, [level], cfg["measurement"]["dt"], s["max_iters"], s["tol"])
    os.makedirs(out, exist_ok=True)
    tio.write_text(os.path.join(out, "run.csv"),
                   tio.dumps_csv(["level", "max_ratio", "converged", "rel_hd"],
                                 [(r[0], r[1], str(r[2]), r[3]) for r in rows],
                                 f"tatsolve sweep config={cfg.hash()}"))
    return rows[0]


def _sweep_medium(cfg, geom):
    return _damped(cfg.medium(geom))


def _stability_rows(cfg, n_phantoms=4):
    """Largest ||f||_HD / ||Lambda f||_H1 over random phantoms at each grid size."""
    g = cfg["geometry"]
    rows = []
    for cells in cfg["sweep"]["grid_sizes"]:
        geom = make_domain(g["shape"], g["size"], cells, g["buffer_width"])
        medium = cfg.medium(geom)
        phs = [random_phantom(geom, cfg["output"]["seed"] + k) for k in range(n_phantoms)]
        rows.append((cells, stability_probe(medium, phs, cfg.T)[1]))
    return rows


def cmd_sweep(run, workers=1):
    cfg = run.cfg
    geom = cfg.geometry()
    medium = _sweep_medium(cfg, geom)
    f = cfg.phantom(geom).f
    sw = cfg["sweep"]
    T = cfg.T
    rows, slope = continuity_experiment(medium, f, T, sw["attenuation_scales"], cfg["measurement"]["dt"])
    fn = hd_norm(f, geom.omega_mask, geom.grid.dx)
    table = [(s, a, d, continuity_bound(a, T, 3 * slope, fn)) for s, (a, d) in zip(sw["attenuation_scales"], rows)]
    run.csv("continuity.csv", ["scale", "a_sup", "diff_hd", "bound"], table)
    levels = [lv / T for lv in sw["attenuation_levels"]]
    jobs = [(cfg, lv, run.path(f"sweep_{k:02d}")) for k, lv in enumerate(levels)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_sweep_level, jobs))
    else:
        results = [_sweep_level(j) for j in jobs]
    threshold = next((r[0] for r in results if r[1] >= 1.0), None)
    out = [(r[0], r[0] * T, r[1], str(r[2]), r[3]) for r in results]
    run.csv("attenuation_sweep.csv", ["a_sup", "a_sup_times_T", "max_ratio", "converged", "rel_hd"], out)
    run.csv("threshold.csv", ["name", "value"], [("contraction_fails_at", "" if threshold is None else threshold)])
    run.csv("stability.csv", ["cells", "max_ratio"], _stability_rows(cfg))
    return EXIT_OK


def run_command(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        run = _Run(args.command, cfg)
        if args.command == "sweep":
            return cmd_sweep(run, args.workers)
        return {"forward": cmd_forward, "invert": cmd_invert, "analyze": cmd_analyze,
                "verify": cmd_verify}[args.command](run)
    except (ConfigError, MediumError, GridError, tio.FormatError) as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except (SolverError, EllipticError, GeodesicError, FloatingPointError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERIC
    except VerificationFailure as exc:
        sys.stderr.write(f"verification failed: {exc}\n")
        return EXIT_VERIFY


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
