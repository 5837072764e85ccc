"""Workbench commands: mass, solve, deform, compactify, ale, converge.

Each command reads one JSON scene, drives the matching pipeline, and
emits canonical reports plus a run manifest into the output directory.
Exit codes: 0 success, 1 configuration error, 2 audit or regime
failure, 3 solver or internal numerical fault.  Identical scene and
seed give byte-identical outputs; only run_manifest.json's wall_clock
field varies between repeats.
"""
from __future__ import annotations

import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import click
import numpy as np

from . import adm, config as scene, density, elliptic, groups, lohkamp
from . import oracles, reports
from .curvature import sample_directions, scalar_curvature_bartnik
from .errors import (AuditFailure, ConfigError, DegenerateMetricError,
                     DomainError, InternalFault, RegimeError, SolverError)
from .grids import sphere_area

FLUX_TOL = 1e-8
SCALAR_FLOOR = -1e-8
WITNESS_LEVEL = 1e-6
ORDER_BAND = (1.8, 2.2)
ORACLE_RTOL = 1e-4
RATIO_RTOL = 1e-3
INVARIANCE_TOL = 1e-12
FIXED_POINT_TOL = 1e-12


class Run:
    """Output collector: files, audit outcomes, the closing manifest."""

    def __init__(self, command, cfg, out_dir, seed, threads):
        self.out_dir = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self.seed = seed
        self.threads = threads
        self.manifest = reports.RunManifest(command=command,
                                            config_hash=cfg.sha256,
                                            seed=seed, threads=threads)

    def path(self, name):
        return os.path.join(self.out_dir, name)

    def audit(self, name, op, lhs, rhs, location=None):
        return self.manifest.audit(name, op, lhs, rhs, location=location)

    def emit_json(self, name, obj):
        reports.write_json(self.path(name), obj)
        self.manifest.outputs.append(name)

    def emit_csv(self, name, header, rows):
        reports.write_csv(self.path(name), header, rows)
        self.manifest.outputs.append(name)

    def emit_json_lines(self, name, records):
        reports.write_json_lines(self.path(name), records)
        self.manifest.outputs.append(name)

    def map_ladder(self, fn, items):
        """Order-preserving map; rungs are independent, reduction is left
        to the caller in ladder order, so the result does not depend on
        the worker count."""
        items = list(items)
        if self.threads <= 1 or len(items) <= 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(fn, items))

    def close(self, status, started, error=None):
        self.manifest.status = status
        self.manifest.wall_clock = round(time.perf_counter() - started, 6)
        if error is not None:
            self.manifest.error = {"class": type(error).__name__,
                                   "message": str(error)}
        reports.write_json(self.path("run_manifest.json"),
                           self.manifest.to_json_dict())


def _resolve_threads(option, cfg):
    if option is not None:
        return max(1, int(option))
    env = os.environ.get("MASSKIT_THREADS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError("MASSKIT_THREADS=%r is not an integer" % env)
    if cfg.threads is not None:
        return max(1, int(cfg.threads))
    return 1


def _dispatch(command, body, config_path, out, threads, seed):
    try:
        cfg = scene.load_config(config_path)
        n_threads = _resolve_threads(threads, cfg)
    except ConfigError as exc:
        click.echo("config error: %s" % exc, err=True)
        sys.exit(1)
    run = Run(command, cfg,
              out_dir=out or cfg.output,
              seed=cfg.seed if seed is None else int(seed),
              threads=n_threads)
    started = time.perf_counter()
    try:
        body(cfg, run)
    except (ConfigError, DomainError) as exc:
        run.close("config-error", started, error=exc)
        click.echo("config error: %s" % exc, err=True)
        sys.exit(1)
    except (RegimeError, AuditFailure, DegenerateMetricError) as exc:
        run.close("fail", started, error=exc)
        click.echo("regime failure: %s" % exc, err=True)
        sys.exit(2)
    except (SolverError, InternalFault) as exc:
        run.close("fault", started, error=exc)
        click.echo("numerical fault: %s" % exc, err=True)
        sys.exit(3)
    failures = run.manifest.failures
    if failures:
        run.close("fail", started)
        for rec in failures:
            click.echo("FAIL %s: %.12g %s %.12g (margin %.3g)"
                       % (rec["audit"], rec["lhs"], rec["comparison"],
                          rec["rhs"], rec["margin"]), err=True)
        sys.exit(2)
    run.close("ok", started)
    click.echo("ok: %d audits passed; wrote %d files to %s"
               % (len(run.manifest.outcomes),
                  len(run.manifest.outputs) + 1, run.out_dir))


def _mass_report(metric, radii, order, method, run):
    """Same ladder assembly as adm.adm_mass with the rungs fanned out
    over the worker pool; a parity test keeps the two in lockstep."""
    masses = np.array(run.map_ladder(
        lambda rho: adm.adm_surface_integral(metric, rho, order=order,
                                             method=method),
        radii))
    extrapolated, p_obs, low_conf = adm.extrapolate_ladder(radii, masses,
                                                           metric.n)
    areas = radii ** (metric.n - 1) * sphere_area(metric.n)
    used = method
    if method == "auto":
        used = ("closed_form" if metric.radial_form is not None
                else "quadrature")
    return adm.MassReport(radii=radii, partial_masses=masses,
                          extrapolated=extrapolated, observed_order=p_obs,
                          quadrature_order=order, area_elements=areas,
                          low_confidence=low_conf, method=used, n=metric.n)


def _cmd_mass(cfg, run):
    block = cfg.block("mass")
    metric = scene.build_metric(cfg)
    radii = np.asarray(block["radii"], dtype=float)
    if not np.all(np.diff(radii) > 0):
        raise ConfigError("mass.radii must be strictly increasing")
    order = int(block.get("quadrature_order", adm.DEFAULT_QUADRATURE_ORDER))
    report = _mass_report(metric, radii, order, block.get("method", "auto"),
                          run)
    run.emit_json("mass_report.json", report.to_json_dict())
    run.emit_csv("mass_ladder.csv",
                 ("rho", "partial_mass", "abs_err_vs_extrapolated"),
                 report.to_csv_rows())
    run.audit("extrapolation-confident", "<=", int(report.low_confidence), 0)
    if "expected" in block:
        expected = float(block["expected"])
        rtol = float(block.get("rtol", 0.01))
        atol = float(block.get("atol", 0.0))
        bound = max(atol, rtol * max(1.0, abs(expected)))
        run.audit("mass-matches-expected", "<=",
                  abs(report.extrapolated - expected), bound)


def _cmd_solve(cfg, run):
    block = cfg.block("solve")
    metric = scene.build_metric(cfg)
    f = scene.build_profile(block["potential"], metric.n,
                            where="solve.potential")
    dom = scene.build_domain(block["domain"], metric.n)
    support = float(block["support_radius"])
    problem = elliptic.EllipticProblem(metric, f, support, dom)
    c_S = block.get("c_S")
    if c_S is None:
        from .rayleigh import sobolev_estimate
        c_S = sobolev_estimate(dom, metric).c_S
    small = elliptic.check_smallness(problem, float(c_S))
    run.audit("potential-smallness", "<=", small.lhs, small.threshold)
    problem.require_smallness()
    solution = elliptic.solve_conformal_factor(problem)
    run.emit_json_lines("solve_iterations.jsonl", solution.diagnostics)
    payload = solution.to_json_dict()
    payload["smallness"] = small.to_json_dict()
    oracle_cfg = block.get("oracle", {})
    if oracle_cfg.get("enabled", False):
        shot = oracles.shoot_conformal_factor(metric, f, support)
        tol = float(oracle_cfg.get("tolerance", ORACLE_RTOL))
        run.audit("matches-shooting-oracle", "<=",
                  abs(solution.A_integral - shot.A),
                  tol * max(abs(shot.A), 1e-3))
        payload["oracle_A"] = float(shot.A)
    run.emit_json("solve_report.json", payload)
    run.audit("outer-flux-vanishes", "<=", abs(solution.flux_grad), FLUX_TOL)
    run.audit("energy-flux-vanishes", "<=", abs(solution.flux_u_grad),
              FLUX_TOL)
    run.audit("factor-positive", ">", solution.min_u, 0.0)


def _cmd_deform(cfg, run):
    block = cfg.block("deform")
    metric = scene.build_metric(cfg)
    ladder = tuple(float(s) for s in block.get("s_ladder",
                                               density.DEFAULT_S_LADDER))
    report = density.density_deform(
        metric, float(block["eps_target"]), s_ladder=ladder,
        c_S=block.get("c_S"), m=block.get("mass"),
        annulus_nodes=int(block.get("annulus_nodes", 1100)))
    header = ("s", "delta_s", "A_integral", "A_fit", "tau", "m_bar",
              "min_R", "end_norm", "mass_shift")
    rows = []
    for rung in report.rungs:
        row = rung.to_row()
        rows.append(tuple(row[k] for k in header[:-1]) + (rung.mass_shift,))
    run.emit_csv("deform_trend.csv", header, rows)
    verify_rtol = float(block.get("verify_rtol", 0.01))
    verify = density.verify_mass_shift(report, rtol=verify_rtol)
    payload = report.to_json_dict()
    payload["independent_mass_check"] = verify
    run.emit_json("deform_report.json", payload)

    rungs = report.rungs
    floors = [r.min_R_bar for r in rungs]
    k = int(np.argmin(floors))
    run.audit("curvature-floor", ">=", floors[k], SCALAR_FLOOR,
              location="s=%g" % rungs[k].s)
    # bookkeeping identity: the shifted mass is defined from A_s and tau,
    # so the two recomputations must agree bitwise
    identity = [abs(r.m_bar - (report.m_input + r.mass_shift))
                for r in rungs]
    run.audit("mass-shift-identity", "<=", max(identity), 0.0)
    ceilings = [(r.delta_report.ceiling_margin, r.s) for r in rungs]
    worst_ceiling = min(ceilings)
    run.audit("scale-ceiling", ">=", worst_ceiling[0], 0.0,
              location="s=%g" % worst_ceiling[1])
    small = min((r.delta_report.smallness_margin, r.s) for r in rungs)
    run.audit("size-bound", ">=", small[0], 0.0, location="s=%g" % small[1])
    shifts = [abs(r.mass_shift) for r in rungs]
    if len(shifts) >= 2:
        steps = [shifts[i + 1] - shifts[i] for i in range(len(shifts) - 1)]
        j = int(np.argmax(steps))
        run.audit("shift-trend-decreasing", "<", steps[j], 0.0,
                  location="s=%g" % rungs[j + 1].s)
    run.audit("independent-mass-check", "<=", verify["error"],
              verify_rtol * max(1.0, abs(verify["reported"])))


def _emit_torus_chart(run, metric, torus_report, samples):
    """JSON header plus CSV metric samples on a cube-periodic lattice."""
    n = int(torus_report["n"])
    side = float(torus_report["side"])
    half = 0.5 * side
    # left-closed lattice: +half duplicates -half under face identification
    axis = -half + side * np.arange(samples) / samples
    mesh = np.meshgrid(*([axis] * n), indexing="ij")
    X = np.stack([m.ravel() for m in mesh], axis=1)
    r = np.linalg.norm(X, axis=1)
    keep = r >= 1.05 * metric.r_min
    X = X[keep]
    G = metric.g(X)
    iu = np.triu_indices(n)
    header = tuple("x%d" % (k + 1) for k in range(n)) + tuple(
        "g%d%d" % (i + 1, j + 1) for i, j in zip(*iu))
    rows = np.concatenate([X, G[:, iu[0], iu[1]]], axis=1)
    run.emit_json("torus_chart.json", {
        "dimension": n,
        "side": side,
        "collar": torus_report["collar"],
        "flat_radius": torus_report["flat_radius"],
        "constant_factor": torus_report["constant_factor"],
        "grid_shape": [samples] * n,
        "spacing": side / samples,
        "samples_emitted": int(keep.sum()),
        "samples_skipped_core": int((~keep).sum()),
        "columns": list(header),
    })
    run.emit_csv("torus_chart.csv", header, rows)


def _cmd_compactify(cfg, run):
    block = cfg.block("compactify")
    metric = scene.build_metric(cfg)
    if metric.conformal_u is None:
        raise ConfigError("compactify needs a conformally flat metric "
                          "(schwarzschild or conformally_flat family)")
    state = lohkamp.lohkamp_cutoff(metric.conformal_u, float(block["s1"]),
                                   n=metric.n)
    superharmonic = lohkamp.check_superharmonic(
        state, num=int(block.get("grid_points", 6001)))
    run.audit("cap-never-subharmonic", "<=", superharmonic["max_lap"], 1e-10)
    run.audit("cap-superharmonic-in-band", "<=",
              superharmonic["min_band_lap"], -WITNESS_LEVEL)
    capped, metric_report = lohkamp.lohkamp_metric(state, superharmonic)
    run.audit("curvature-floor", ">=", metric_report["min_R"], SCALAR_FLOOR)
    run.audit("curvature-witness", ">", metric_report["witness_R"],
              WITNESS_LEVEL)
    run.audit("flat-outside-cap", "<=", metric_report["flat_gap"], 0.0)
    torus_cfg = block.get("torus", {})
    spec = lohkamp.TorusGlueSpec(
        flat_radius=float(torus_cfg.get("flat_radius", state.r_flat)),
        side=float(torus_cfg.get("side", 0.0)),
        collar=float(torus_cfg.get("collar", 0.0)))
    torus_report = lohkamp.torus_glue(capped, spec)
    run.audit("torus-collar-constant", "<=",
              torus_report["periodicity_gap"], 0.0)
    run.audit("torus-derivative-match", "<=",
              torus_report["derivative_gap"], 0.0)
    run.audit("torus-curvature-floor", ">=", torus_report["min_R"],
              SCALAR_FLOOR)
    run.audit("torus-curvature-witness", ">", torus_report["witness_R"],
              WITNESS_LEVEL)
    run.emit_json("compactify_report.json", {
        "cut": {"s1": state.s1, "s2": state.s2, "epsilon": state.epsilon,
                "t0": state.t0, "t1": state.t1, "cap": state.cap,
                "m_bar": state.m_bar, "band": list(state.band),
                "r_flat": state.r_flat, "dimension": state.n},
        "superharmonic": superharmonic,
        "capped_metric": metric_report,
        "torus": torus_report,
    })
    _emit_torus_chart(run, capped, torus_report,
                      samples=int(block.get("chart_samples", 5)))


def _cmd_ale(cfg, run):
    block = cfg.block("ale")
    metric = scene.build_metric(cfg)
    generators = [np.asarray(G, dtype=float) for G in block["generators"]]
    for i, G in enumerate(generators):
        if G.shape != (metric.n, metric.n):
            raise ConfigError("ale.generators[%d] must be a %dx%d matrix"
                              % (i, metric.n, metric.n))
    group = (groups.GroupAction.from_generators(generators) if generators
             else groups.GroupAction.trivial(metric.n))
    radii = block.get("radii")
    _, audit = groups.ale_lift(
        metric, group,
        radii=None if radii is None else np.asarray(radii, dtype=float))
    run.audit("chart-invariance", "<=", audit["invariance_gap"],
              INVARIANCE_TOL)
    if audit["mass_ratio"] is None:
        run.audit("masses-both-vanish", "<=",
                  max(abs(audit["cover_mass"]), abs(audit["quotient_mass"])),
                  1e-10)
    else:
        run.audit("mass-ratio-matches-order", "<=",
                  audit["ratio_rel_error"], RATIO_RTOL)
    payload = dict(audit)
    fixed_cfg = block.get("fixed_point")
    if fixed_cfg is not None:
        pairs = []
        for element in fixed_cfg["elements"]:
            T = np.asarray(element["matrix"], dtype=float)
            v = np.asarray(element.get("offset", [0.0] * T.shape[0]),
                           dtype=float)
            pairs.append((T, v))
        point = groups.fixed_point_of_finite_group(pairs)
        payload["fixed_point"] = point
        residual = max(float(np.linalg.norm(T @ point + v - point))
                       for T, v in pairs)
        run.audit("common-fixed-point", "<=", residual,
                  FIXED_POINT_TOL * max(1.0, float(np.linalg.norm(point))))
    run.emit_json("ale_report.json", payload)


def _scalar_refinement(metric, op, seed, run):
    h_values = [float(h) for h in op["h_values"]]
    if any(b >= a for a, b in zip(h_values, h_values[1:])):
        raise ConfigError("converge h_values must be strictly decreasing")
    radii = [float(r) for r in op.get("radii", (8.0, 16.0, 32.0))]
    count = int(op.get("directions", 12))
    U = sample_directions(metric.n, count, rng=seed)
    X = np.concatenate([rho * U for rho in radii], axis=0)
    errs = run.map_ladder(
        lambda h: float(np.abs(scalar_curvature_bartnik(metric, X,
                                                        h=h)).max()),
        h_values)
    orders = [float(np.log(errs[i] / errs[i + 1])
                    / np.log(h_values[i] / h_values[i + 1]))
              for i in range(len(errs) - 1)]
    return h_values, errs, orders


def _cmd_converge(cfg, run):
    block = cfg.block("converge")
    metric = scene.build_metric(cfg)
    summaries = []
    for k, op in enumerate(block["operations"]):
        kind = op["kind"]
        if kind == "scalar_flatness":
            if "h_values" not in op:
                raise ConfigError("converge.operations[%d] of kind "
                                  "scalar_flatness needs h_values" % k)
            h_values, errs, orders = _scalar_refinement(metric, op, run.seed,
                                                        run)
            name = "converge_op%d_scalar.csv" % k
            rows = [(h_values[0], errs[0], None)]
            rows += [(h_values[i + 1], errs[i + 1], orders[i])
                     for i in range(len(orders))]
            run.emit_csv(name, ("h", "max_abs_R", "observed_order"), rows)
            run.audit("scalar-order-low#%d" % k, ">=", orders[-1],
                      ORDER_BAND[0])
            run.audit("scalar-order-high#%d" % k, "<=", orders[-1],
                      ORDER_BAND[1])
            if "ceiling" in op:
                run.audit("scalar-ceiling#%d" % k, "<=", errs[-1],
                          float(op["ceiling"]))
            summaries.append({"kind": kind, "table": name,
                              "h_values": h_values, "max_abs_R": errs,
                              "observed_orders": orders})
        else:
            if "radii" not in op or len(op["radii"]) < 3:
                raise ConfigError("converge.operations[%d] of kind "
                                  "mass_ladder needs at least 3 radii" % k)
            radii = np.asarray(op["radii"], dtype=float)
            if not np.all(np.diff(radii) > 0):
                raise ConfigError("converge.operations[%d].radii must be "
                                  "strictly increasing" % k)
            report = _mass_report(metric, radii,
                                  adm.DEFAULT_QUADRATURE_ORDER, "auto", run)
            name = "converge_op%d_mass.csv" % k
            run.emit_csv(name,
                         ("rho", "partial_mass", "abs_err_vs_extrapolated"),
                         report.to_csv_rows())
            run.audit("mass-extrapolation-confident#%d" % k, "<=",
                      int(report.low_confidence), 0)
            if report.observed_order is not None:
                run.audit("mass-order-positive#%d" % k, ">",
                          report.observed_order, 0.0)
            summaries.append({"kind": kind, "table": name,
                              "extrapolated": report.extrapolated,
                              "observed_order": report.observed_order,
                              "low_confidence": report.low_confidence})
    run.emit_json("converge_report.json", {"operations": summaries})


def _scene_options(fn):
    fn = click.option("--seed", type=int, default=None,
                      help="Override the config seed for sampled audit "
                           "points.")(fn)
    fn = click.option("--threads", type=int, default=None,
                      help="Worker threads for ladder fan-out "
                           "(MASSKIT_THREADS is the fallback).")(fn)
    fn = click.option("--out", type=click.Path(file_okay=False), default=None,
                      help="Output directory (default: the config's "
                           "'output').")(fn)
    fn = click.option("--config", "config_path", required=True,
                      type=click.Path(dir_okay=False),
                      help="Scene configuration JSON.")(fn)
    return fn


@click.group()
def main():
    """Numerical workbench for asymptotically flat end metrics: mass
    ladders, conformal-factor solves, scalar-curvature deformation, end
    compactification, and quotient-end lifts."""


@main.command(name="mass")
@_scene_options
def mass_command(config_path, out, threads, seed):
    """ADM mass ladder with extrapolation for the configured metric."""
    _dispatch("mass", _cmd_mass, config_path, out, threads, seed)


@main.command(name="solve")
@_scene_options
def solve_command(config_path, out, threads, seed):
    """Conformal-factor solve with flux audits and an iteration log."""
    _dispatch("solve", _cmd_solve, config_path, out, threads, seed)


@main.command(name="deform")
@_scene_options
def deform_command(config_path, out, threads, seed):
    """Scalar-curvature deformation ladder with the per-scale trend."""
    _dispatch("deform", _cmd_deform, config_path, out, threads, seed)


@main.command(name="compactify")
@_scene_options
def compactify_command(config_path, out, threads, seed):
    """Cap a negative-mass end flat and glue it into a cubical torus."""
    _dispatch("compactify", _cmd_compactify, config_path, out, threads, seed)


@main.command(name="ale")
@_scene_options
def ale_command(config_path, out, threads, seed):
    """Lift a quotient end to its cover and audit the mass ratio."""
    _dispatch("ale", _cmd_ale, config_path, out, threads, seed)


@main.command(name="converge")
@_scene_options
def converge_command(config_path, out, threads, seed):
    """Refinement studies: step-halving and radius-ladder order tables."""
    _dispatch("converge", _cmd_converge, config_path, out, threads, seed)


if __name__ == "__main__":
    main()
