"""Command-line entry point: ``qflow <command> [--config F | --scenario S] [--set k=v ...]``."""
from __future__ import annotations

import argparse
from concurrent.futures import ProcessPoolExecutor
import json
import math
import os
from pathlib import Path
import sys

import numpy as np

from . import analysis, config as cfgmod, grid, initial, io, radial
from . import qtensor as qt
from . import ldg_model as lm

EXIT_OK, EXIT_VIOLATION, EXIT_DIVERGED, EXIT_CONFIG = 0, 1, 2, 3

# scenarios whose Dirichlet data or initial data lie outside |Q| <= bound_q
_BOUND_EXEMPT_BC = {initial.BoundaryScenario.DISC_BIAXIAL}
_BOUND_EXEMPT_IC = {initial.Family.BIAXIAL_SPHERE}


def _threads(args) -> int:
    if args.threads:
        return args.threads
    env = os.environ.get("QFLOW_THREADS")
    return int(env) if env else 1


def _load_config(args, default_scenario: str | None = None) -> cfgmod.RunConfig:
    overrides = list(args.set or [])
    if args.config:
        text = Path(args.config).read_text(encoding="utf-8")
        if args.scenario:
            text = f"scenario = {args.scenario}\n" + text
        return cfgmod.parse_config(text, overrides)
    name = args.scenario or default_scenario
    if name is None:
        return cfgmod.parse_config("", overrides)
    return cfgmod.parse_config(f"scenario = {name}", overrides)


def _outdir(args, cfg=None) -> Path:
    out = Path(args.out or (cfg.out if cfg is not None else "qflow-out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_summary(out: Path, summary: dict) -> None:
    (out / "summary.json").write_text(json.dumps(summary, indent=2, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if hasattr(x, "value"):
        return x.value
    return str(x)


def _report(summary: dict) -> None:
    for k, v in summary.get("checks", {}).items():
        print(f"{'PASS' if v else 'FAIL'} {k}")
    for k, v in summary.items():
        if k not in ("checks", "config"):
            print(f"{k}: {v}")


# ----------------------------------------------------------------------------
# invariant checks on a diagnostic stream


def series_checks(rows, cfg: cfgmod.RunConfig, p: lm.Parameters, transient: float = 0.0) -> dict:
    energy = np.array([r["energy"] for r in rows])
    checks = {}
    de = np.diff(energy)
    checks["energy_monotone"] = bool(np.all(de <= 1e-10 * np.abs(energy[:-1])))
    if cfg.boundary() not in _BOUND_EXEMPT_BC and cfg.ic not in _BOUND_EXEMPT_IC and "max_abs_q" in rows[0]:
        late = [r["max_abs_q"] for r in rows if r["t"] >= transient]
        checks["linf_bound"] = bool(max(late, default=0.0) <= p.bound_q * 1.01)
    if cfg.ic in initial.PLANAR_FAMILIES and "planarity_residual" in rows[0]:
        checks["planarity"] = bool(max(r["planarity_residual"] for r in rows) <= 1e-8)
    return checks


# ----------------------------------------------------------------------------
# commands


def run_grid(cfg: cfgmod.RunConfig, out: Path, threads: int) -> int:
    grid.set_threads(threads)
    p = cfg.params()
    geom = grid.classify(cfg.N, cfg.dim)
    fs = initial.generate(cfg.ic_spec(), geom, p, bc=cfg.boundary())
    counter = {"k": 0, "band": True}

    def flush(state):
        io.write_field(out / f"snap_{counter['k']:04d}.qf", state)
        counter["band"] &= state.band_exact()
        counter["k"] += 1

    summary = {"config": cfgmod.describe(cfg)}
    try:
        traj = grid.integrate(
            fs, cfg.t_end, dt=cfg.dt, n_snapshots=cfg.snapshots, order=cfg.stencil,
            keep_snapshots=False, on_snapshot=flush,
        )
    except grid.DivergenceError as err:
        summary["error"] = str(err)
        _write_summary(out, summary)
        print(f"diverged: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    io.write_series(out / "series.csv", traj.rows)
    dt = traj.dt
    checks = series_checks(traj.rows, cfg, p, transient=10 * dt)
    checks["band_exact"] = counter["band"]
    times = [r["t"] for r in traj.rows]
    summary.update(
        dt=dt,
        steps=traj.steps,
        t_star=analysis.detect_t_star(times, [r["qnorm_origin_sq"] for r in traj.rows], analysis.interface_threshold(p)),
        final_r_star=traj.rows[-1]["r_star"],
        checks=checks,
    )
    _write_summary(out, summary)
    _report(summary)
    return EXIT_OK if all(checks.values()) else EXIT_VIOLATION


def run_radial(cfg: cfgmod.RunConfig, out: Path) -> int:
    p = cfg.params()
    prof = initial.generate(cfg.ic_spec(), cfg.M, p)
    summary = {"config": cfgmod.describe(cfg)}
    try:
        traj = radial.evolve(prof, cfg.t_end, dt=cfg.dt, n_records=cfg.snapshots)
    except radial.DivergenceError as err:
        summary["error"] = str(err)
        _write_summary(out, summary)
        print(f"diverged: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    rows = [
        {"t": t, "energy": e, "r_star": rs, "qnorm_origin_sq": q0}
        for t, e, rs, q0 in zip(traj.times, traj.energy, traj.r_star, traj.q0_sq)
    ]
    cols = ("t", "energy", "r_star", "qnorm_origin_sq")
    io.write_series(out / "series.csv", rows, cols)
    names = radial.MODELS[traj.final.model]
    prows = [dict(zip(("r",) + names, vals)) for vals in zip(traj.final.r, *traj.final.values)]
    io.write_series(out / "profile.csv", prows, ("r",) + names)
    checks = series_checks(rows, cfg, p)
    summary["checks"] = checks
    summary["final_r_star"] = float(traj.r_star[-1])
    if traj.final.model == "hedgehog":
        r0 = cfg.r0
        t1 = analysis.first_shrink_time(r0)
        try:
            fit = analysis.mean_curvature_fit(traj.times, traj.r_star, dim=3, t_max=0.8 * t1, collapse_radius=3.0 / cfg.M, exclude_initial=True)
            summary.update(curvature_slope=fit.c, curvature_r2=fit.r2, reference_slope=fit.reference)
        except analysis.AnalysisError as err:
            summary["curvature_fit"] = str(err)
    _write_summary(out, summary)
    _report(summary)
    return EXIT_OK if all(checks.values()) else EXIT_VIOLATION


def cmd_run(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args, cfg)
    if cfg.solver == "radial":
        return run_radial(cfg, out)
    return run_grid(cfg, out, _threads(args))


def cmd_radial(args) -> int:
    cfg = _load_config(args, default_scenario="hedgehog_radial")
    if cfg.solver != "radial":
        cfg = cfgmod.RunConfig(**{**cfgmod.describe(cfg), "solver": "radial"}).validate()
    return run_radial(cfg, _outdir(args, cfg))


def _params_from(args) -> tuple[lm.Parameters, cfgmod.RunConfig]:
    cfg = _load_config(args, default_scenario="uv_radial")
    return cfg.params(), cfg


def cmd_uv_static(args) -> int:
    p, cfg = _params_from(args)
    out = _outdir(args, cfg)
    prof = radial.solve_uv_static(p, M=cfg.M)
    io.write_series(out / "uv_static.csv", [{"r": r, "u": u, "v": v} for r, u, v in zip(prof.r, prof.u, prof.v)], ("r", "u", "v"))
    checks = radial.uv_lemma_checks(prof)
    summary = {
        "config": cfgmod.describe(cfg),
        "residual": prof.meta.get("residual"),
        "energy": radial.profile_energy(prof),
        "checks": checks,
    }
    _write_summary(out, summary)
    _report(summary)
    return EXIT_OK if all(checks.values()) else EXIT_VIOLATION


def secvar_scan(log10_L, base: lm.Parameters, M: int = 2000) -> list[dict]:
    rows = []
    for lg in log10_L:
        p = base.with_L(10.0**lg)
        prof = radial.solve_uv_static(p, M=M)
        val = lm.second_variation(prof.r, prof.u, prof.v, p)
        rows.append({"log10_L": float(lg), "L": p.L, "delta2_I": val, "residual": prof.meta.get("residual", float("nan"))})
    return rows


def sign_change_bracket(rows) -> tuple[float, float] | None:
    for a, b in zip(rows[:-1], rows[1:]):
        if a["delta2_I"] < 0 <= b["delta2_I"] or a["delta2_I"] >= 0 > b["delta2_I"]:
            return a["log10_L"], b["log10_L"]
    return None


def cmd_secvar(args) -> int:
    cfg = _load_config(args, default_scenario="uv_radial")
    out = _outdir(args, cfg)
    n = int(round((args.stop - args.start) / args.step)) + 1
    grid_l = np.round(args.start + args.step * np.arange(n), 10)
    rows = secvar_scan(grid_l, cfg.params(), M=args.M)
    io.write_series(out / "secvar.csv", rows, ("log10_L", "L", "delta2_I", "residual"))
    br = sign_change_bracket(rows)
    for r in rows:
        print(f"log10L={r['log10_L']:+.2f}  delta2I={r['delta2_I']:+.6e}")
    summary = {"bracket": br, "checks": {"sign_change_found": br is not None}}
    _write_summary(out, summary)
    _report(summary)
    return EXIT_OK if br is not None else EXIT_VIOLATION


def tstar_run(job) -> dict:
    """One escape run; job = (N, L, u0, v0, eps, t_end, snapshots)."""
    N, L, u0, v0, eps, t_end, snaps = job
    p = lm.Parameters.transition(L)
    geom = grid.classify(N, 2)
    fs = initial.generate(initial.InitialConditionSpec("UV_PERTURBED", u0=u0, v0=v0, epsilon=eps), geom, p)
    traj = grid.integrate(fs, t_end, n_snapshots=snaps, keep_snapshots=False, diagnostics=_escape_row)
    times = [r["t"] for r in traj.rows]
    q0 = [r["qnorm_origin_sq"] for r in traj.rows]
    return {
        "u0": u0, "v0": v0, "epsilon": eps,
        "t_star": analysis.detect_t_star(times, q0, analysis.interface_threshold(p)),
        "final_qnorm_origin_sq": q0[-1],
        "energy_monotone": bool(np.all(np.diff([r["energy"] for r in traj.rows]) <= 1e-10 * np.abs(traj.rows[0]["energy"]))),
    }


def _escape_row(fs) -> dict:
    return {"t": fs.t, "qnorm_origin_sq": analysis.origin_norm_sq(fs), "energy": fs.energy()}


def tstar_fits(rows) -> dict:
    fits = {}
    for u0 in sorted({r["u0"] for r in rows}):
        sel = [r for r in rows if r["u0"] == u0 and math.isfinite(r["t_star"])]
        if len(sel) >= 2:
            f = analysis.linear_fit([-math.log10(r["epsilon"]) for r in sel], [r["t_star"] for r in sel])
            fits[u0] = {"slope": f.slope, "intercept": f.intercept, "r2": f.r2, "n": f.n}
    return fits


def cmd_sweep_tstar(args) -> int:
    cfg = _load_config(args, default_scenario="perturbed_disc")
    out = _outdir(args, cfg)
    p = cfg.params()
    u0s = [float(x) for x in args.u0.split(",")]
    eps = [float(x) for x in args.eps.split(",")]
    jobs = [(cfg.N, p.L, u0, (1.0 - u0) if args.complement else cfg.v0, e, cfg.t_end, cfg.snapshots * 4) for u0 in u0s for e in eps]
    workers = max(1, min(_threads(args), len(jobs)))
    if workers == 1:
        rows = [tstar_run(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(tstar_run, jobs))
    io.write_series(out / "tstar.csv", rows, ("u0", "v0", "epsilon", "t_star", "final_qnorm_origin_sq"))
    fits = tstar_fits(rows)
    target = 2.0 / 3.0 * p.h_plus**2
    checks = {
        "all_escaped": all(math.isfinite(r["t_star"]) for r in rows),
        "positive_slopes": bool(fits) and all(f["slope"] > 0 for f in fits.values()),
        "energy_monotone": all(r["energy_monotone"] for r in rows),
        "origin_ordered": all(abs(r["final_qnorm_origin_sq"] - target) <= 0.01 * target for r in rows),
    }
    summary = {"fits": fits, "checks": checks}
    _write_summary(out, summary)
    _report(summary)
    return EXIT_OK if all(checks.values()) else EXIT_VIOLATION


def cross_validate(N: int, M: int, p: lm.Parameters, r0: float, times, order: int = 2) -> list[dict]:
    """Relative L2 distance between the 3D Case I field and h(|x|, t)(x x/|x|^2 - I/3)."""
    spec = initial.InitialConditionSpec("CASE_I", r0=r0)
    geom = grid.classify(N, 3)
    fs = initial.generate(spec, geom, p)
    prof = initial.generate(spec, M, p)
    coords = geom.coords()
    rr = np.sqrt(np.sum(coords**2, axis=0))
    inner = geom.cls != grid.EXTERIOR
    dt_grid = grid.stable_dt(geom, p, order)
    dt_rad = radial.stable_dt("hedgehog", M, p)
    stepper = grid.Stepper(geom, p, order)
    rows = []
    for t in times:
        n = max(1, math.ceil((t - fs.t) / dt_grid - 1e-9))
        fs = stepper.advance(fs, (t - fs.t) / n, n)
        fs.t = t
        n = max(1, math.ceil((t - prof.t) / dt_rad - 1e-9))
        prof = radial.step_h(prof, (t - prof.t) / n, n)
        prof.t = t
        ref = initial.hedgehog_field(np.interp(rr, prof.r, prof.h), coords)
        diff = (fs.data - ref)[:, inner]
        err = math.sqrt(float(np.sum(qt.norm_sq(diff))) / float(np.sum(qt.norm_sq(ref[:, inner]))))
        rows.append({
            "t": t, "rel_l2": err, "energy": fs.energy(), "max_abs_q": float(np.sqrt(np.max(qt.norm_sq(fs.data)))),
            "r_star_grid": analysis.interface_radius(fs), "r_star_radial": analysis.interface_radius(prof),
        })
    return rows


def cmd_validate(args) -> int:
    cfg = _load_config(args, default_scenario="case1_ball_L005")
    out = _outdir(args, cfg)
    grid.set_threads(_threads(args))
    times = [float(x) for x in args.times.split(",")]
    rows = cross_validate(cfg.N, cfg.M, cfg.params(), cfg.r0, times, cfg.stencil)
    io.write_series(out / "validate.csv", rows, ("t", "rel_l2", "r_star_grid", "r_star_radial"))
    for r in rows:
        print(f"t={r['t']:.4g}  rel_l2={r['rel_l2']:.4e}")
    checks = {"rel_l2_within_2pct": all(r["rel_l2"] <= 0.02 for r in rows)}
    summary = {"rows": rows, "checks": checks}
    _write_summary(out, summary)
    _report(summary)
    return EXIT_OK if all(checks.values()) else EXIT_VIOLATION


# ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value run configuration")
    common.add_argument("--scenario", metavar="NAME", help=f"preset: {', '.join(sorted(cfgmod.SCENARIOS))}")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one key (repeatable)")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--threads", type=int, metavar="K", help="worker threads (default $QFLOW_THREADS or 1)")

    ap = argparse.ArgumentParser(prog="qflow", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="grid or radial run from a config").set_defaults(fn=cmd_run)
    sub.add_parser("radial", parents=[common], help="reduced radial run").set_defaults(fn=cmd_radial)
    sub.add_parser("uv-static", parents=[common], help="static (u, v) critical point").set_defaults(fn=cmd_uv_static)
    sv = sub.add_parser("secvar", parents=[common], help="second variation scan over log10 L")
    sv.add_argument("--start", type=float, default=-2.4)
    sv.add_argument("--stop", type=float, default=-0.8)
    sv.add_argument("--step", type=float, default=0.2)
    sv.add_argument("--M", type=int, default=2000, help="radial mesh size")
    sv.set_defaults(fn=cmd_secvar)
    st = sub.add_parser("sweep-tstar", parents=[common], help="escape time against epsilon")
    st.add_argument("--u0", default="0.6", help="comma separated u0 values")
    st.add_argument("--eps", default="1e-2,1e-3,1e-4,1e-5,1e-6", help="comma separated epsilons")
    st.add_argument("--complement", action="store_true", help="use v0 = 1 - u0")
    st.set_defaults(fn=cmd_sweep_tstar)
    va = sub.add_parser("validate", parents=[common], help="3D ball against the radial hedgehog")
    va.add_argument("--times", default="0.005,0.01,0.02")
    va.set_defaults(fn=cmd_validate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except initial.ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
