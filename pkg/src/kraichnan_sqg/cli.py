"""
Command-line entry point ``kgsq``.

Exit codes: 0 success, 1 configuration error, 2 blow-up or CFL guard,
3 quadrature budget exhausted.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np
import scipy.fft

from . import svg
from .coercivity import CoercivityProfile, QuadratureBudgetError, eval_F_delta, fit_kappas, tail_slope
from .config import FORMAT_VERSION, ConfigError, RunConfig, header_block, load_config
from .data import make_datum
from .experiments import run_stability, run_vanishing_viscosity, trilinear_ratios
from .noise import BrownianDriver, build_noise, corrector_c0, point_increments
from .params import validate
from .solver import BlowUpError, CFLError, StepScheme, horizon_ratio, initial_state, run
from .spectral import Grid, write_checkpoint

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP, EXIT_BUDGET = 0, 1, 2, 3


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _json_doc(cfg: RunConfig, body: dict) -> str:
    doc = {"format_version": FORMAT_VERSION, "run_config": cfg.to_dict()}
    doc.update(body)
    return json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj)}")


def _table_csv(cfg: RunConfig, columns, rows) -> str:
    buf = io.StringIO()
    buf.write(header_block(cfg))
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _datum(cfg: RunConfig, grid: Grid):
    opts = dict(cfg.datum)
    kind = opts.pop("kind")
    try:
        return make_datum(kind, grid, cfg.p, cfg.seed, **opts)
    except TypeError as exc:
        raise ConfigError(f"bad [datum] options: {exc}") from exc


def _scheme(cfg: RunConfig) -> StepScheme:
    return StepScheme(
        cfg.dt,
        cfg.cfl_max,
        corrector=cfg.exp("corrector", "galerkin"),
        multiplier=cfg.exp("multiplier", "balanced"),
    )


def _want_svg(cfg: RunConfig) -> bool:
    return bool(cfg.output.get("svg", True))


# commands -------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig) -> int:
    params = cfg.params
    grid = Grid(params.N, params.L)
    datum, norms = _datum(cfg, grid)
    scheme = _scheme(cfg)
    noise_on = cfg.exp("noise", True)
    noise = build_noise(params.alpha, grid, cfg.modes_cutoff) if noise_on else None
    driver = BrownianDriver(cfg.seed, cfg.dt) if noise_on else None
    state = initial_state(params, datum, noise, driver)
    out = cfg.out_dir
    every = cfg.exp("every", 10)
    ck_every = cfg.exp("checkpoint_every", 0)
    report = validate(params)
    if not report.valid:
        print(f"warning: parameters outside the proven regime ({report.status})", file=sys.stderr)
    status, code, series, final = "ok", EXIT_OK, None, None
    try:
        result = run(
            state,
            cfg.t_end,
            scheme,
            every=every,
            checkpoint_dir=out / "checkpoints" if ck_every else None,
            checkpoint_every=ck_every,
        )
        series, final = result.series, result.state
    except (BlowUpError, CFLError) as exc:
        status, code, series = f"aborted: {exc}", EXIT_BLOWUP, exc.series
        print(f"error: {exc}", file=sys.stderr)
    _write(out / "series.csv", series.to_csv(0, header_block(cfg)))
    if final is not None:
        with open(out / "theta_final.kgsq", "wb") as fh:
            write_checkpoint(fh, final.theta(0), final.t)
    ratio = horizon_ratio(series, params.L)
    if ratio >= 0.25:
        print(f"warning: max|u| t_end / L = {ratio:.3g} >= 1/4, wrap-around may matter", file=sys.stderr)
    body = {
        "status": status,
        "validation": report.to_dict(),
        "datum_norms": norms,
        "horizon_ratio": ratio,
        "horizon_ok": ratio < 0.25,
        "domain": "periodic torus [0, L)^2 standing in for the plane",
        "n_modes": 0 if noise is None else noise.n_modes,
        "steps": 0 if final is None else final.step,
    }
    _write(out / "summary.json", _json_doc(cfg, body))
    if _want_svg(cfg) and series.t:
        curves = [(name, series.times, series[name][:, 0]) for name in ("L2", "H-1") if name in series.columns]
        _write(out / "norms.svg", svg.line_plot(curves, title="norms", xlabel="t", header=header_block(cfg, "")))
    return code


def _radii(cfg: RunConfig):
    lo = cfg.exp("radius_min", 1.0)
    hi = cfg.exp("radius_max", 1e3)
    count = cfg.exp("radius_count", 13)
    if count < 1 or not (0 < lo <= hi) or (count > 1 and lo == hi):
        raise ConfigError(f"empty radius range [{lo}, {hi}] with {count} points")
    return np.geomspace(lo, hi, count)


def cmd_analyze_covariance(cfg: RunConfig) -> int:
    alpha = cfg.alpha
    radii = _radii(cfg)
    deltas = [float(d) for d in cfg.exp("deltas", [0.1, 0.01, 0.001])]
    tol = cfg.exp("tol", 1e-6)
    budget = cfg.exp("budget", 50_000_000)
    try:
        profile = CoercivityProfile.build(alpha, radii, tol, cfg.exp("isotropy", False), budget)
        F_delta = {d: np.array([eval_F_delta(r, alpha, d, tol, budget) for r in radii]) for d in deltas}
    except QuadratureBudgetError as exc:
        print(f"error: quadrature budget exhausted at |n| = {exc.radius!r}", file=sys.stderr)
        return EXIT_BUDGET
    fit, reason = None, None
    try:
        fit = fit_kappas(profile)
    except ValueError as exc:
        reason = str(exc)
    out = cfg.out_dir
    cols = ["radius", "F"] + [f"F_delta_{d:g}" for d in deltas] + ["bound"]
    rows = []
    for i, r in enumerate(radii):
        bound = "" if fit is None else -fit.kappa1 * r ** (-2 * alpha) + fit.kappa2 * r**-2
        rows.append([float(r), float(profile.values[i])] + [float(F_delta[d][i]) for d in deltas] + [bound])
    _write(out / "coercivity.csv", _table_csv(cfg, cols, rows))
    top = radii >= radii[-1] / 10
    slope = None
    if np.sum(top) >= 2 and np.all(profile.values[top] < 0):
        slope = tail_slope(radii[top], profile.values[top])
    body = {
        "alpha": alpha,
        "fit": None if fit is None else fit.to_dict(),
        "fit_error": reason,
        "tail_slope": slope,
        "n0": profile.n0(),
        "quadrature_tolerance": tol,
        "deterministic": True,
    }
    if profile.isotropy_defect is not None:
        body["isotropy_defect_max"] = float(np.max(profile.isotropy_defect))
    _write(out / "kappa.json", _json_doc(cfg, body))
    if _want_svg(cfg):
        curves = []
        for label, vals in [("-F", profile.values)] + [(f"-F delta={d:g}", F_delta[d]) for d in deltas]:
            curves.append((label, radii, -vals))
        _write(out / "coercivity.svg", svg.loglog(curves, title="-F(|n|)", xlabel="|n|", header=header_block(cfg, "")))
    return EXIT_OK


def _report_files(cfg: RunConfig, report, stem: str):
    out = cfg.out_dir
    _write(out / f"{stem}.json", _json_doc(cfg, report.to_dict()))
    for name, (cols, rows) in report.tables.items():
        _write(out / f"{name}.csv", _table_csv(cfg, cols, rows))


def cmd_convergence_study(cfg: RunConfig) -> int:
    params = cfg.params
    grid = Grid(params.N, params.L)
    datum, _ = _datum(cfg, grid)
    ladder = cfg.exp("ladder", [2.0**-j for j in range(3, 9)])
    study = run_vanishing_viscosity(
        params,
        datum,
        ladder,
        cfg.exp("ensemble", 64),
        cfg.t_end,
        cfg.dt,
        seed=cfg.seed,
        k_max=cfg.modes_cutoff,
        every=cfg.exp("every", 10),
        batch=cfg.exp("batch", 96),
        scheme=_scheme(cfg),
    )
    _report_files(cfg, study.report, "convergence")
    if _want_svg(cfg) and len(study.sup_h1):
        curves = [("sup_t E|d|^2 H-1", study.ladder[1:], study.sup_h1), ("E int |d|^2 H-alpha", study.ladder[1:], study.diss)]
        _write(cfg.out_dir / "convergence.svg", svg.loglog(curves, title="adjacent-rung errors", xlabel="nu", header=header_block(cfg, "")))
    return EXIT_OK if study.report.complete else EXIT_BLOWUP


def cmd_stability(cfg: RunConfig) -> int:
    params = cfg.params
    grid = Grid(params.N, params.L)
    datum1, _ = _datum(cfg, grid)
    amp = cfg.exp("perturbation_amplitude", 1e-3)
    kind = cfg.exp("perturbation", "band_limited")
    opts = {"stream": 1}
    if kind == "band_limited":
        opts.update(amplitude=amp, k_max=cfg.exp("perturbation_k_max", 8.0))
        pert, _ = make_datum(kind, grid, cfg.p, cfg.seed, **opts)
    else:
        pert, _ = make_datum(kind, grid, cfg.p, cfg.seed)
        pert = pert * amp
    report = run_stability(
        params,
        datum1,
        datum1 + pert,
        cfg.exp("ensemble", 64),
        cfg.t_end,
        cfg.dt,
        seed=cfg.seed,
        k_max=cfg.modes_cutoff,
        every=cfg.exp("every", 5),
        batch=cfg.exp("batch", 64),
        scheme=_scheme(cfg),
    )
    _report_files(cfg, report, "stability")
    if _want_svg(cfg):
        s = report.stats
        curves = [("E|xi|^2 H-1", s["t"], s["mean_H-1_sq"]), ("E int |xi|^2 H-alpha", s["t"], s["mean_int_H-alpha_sq"])]
        _write(cfg.out_dir / "stability.svg", svg.line_plot(curves, title="coupled difference", xlabel="t", logy=True, header=header_block(cfg, "")))
    return EXIT_OK if report.complete else EXIT_BLOWUP


def cmd_trilinear(cfg: RunConfig) -> int:
    try:
        report = trilinear_ratios(cfg.params, cfg.exp("samples", 1000), seed=cfg.seed, N=cfg.N, L=cfg.L)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    _report_files(cfg, report, "trilinear")
    return EXIT_OK


def cmd_sample_noise(cfg: RunConfig) -> int:
    """Empirical C(0) from point increments at the origin against c0 I."""
    grid = Grid(cfg.N, cfg.L)
    noise = build_noise(cfg.alpha, grid, cfg.modes_cutoff)
    driver = BrownianDriver(cfg.seed, cfg.dt)
    draws = cfg.exp("draws", 10_000)
    if draws < 2:
        raise ConfigError("draws must be >= 2")
    normals = np.stack([driver.standard_normals(i, noise.n_modes) for i in range(draws)])
    w = point_increments(noise, normals, cfg.dt, np.zeros(2))  # (draws, 2)
    prod = w[:, :, None] * w[:, None, :] / cfg.dt
    emp = prod.mean(0)
    se = prod.std(0, ddof=1) / math.sqrt(draws)
    c0 = corrector_c0(noise)
    target = c0 * np.eye(2)
    z = np.abs(emp - target) / np.where(se > 0, se, np.inf)
    body = {
        "draws": draws,
        "c0": c0,
        "empirical_C0": emp,
        "empirical_C0_se": se,
        "within_3se": bool(np.all(z <= 3.0)),
        "n_modes": noise.n_modes,
        "k_max": noise.k_max,
    }
    out = cfg.out_dir
    _write(out / "noise_sample.json", _json_doc(cfg, body))
    _write(out / "noise_modes.csv", header_block(cfg) + noise.mode_table_csv())
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "analyze-covariance": cmd_analyze_covariance,
    "convergence-study": cmd_convergence_study,
    "stability": cmd_stability,
    "trilinear": cmd_trilinear,
    "sample-noise": cmd_sample_noise,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kgsq", description="Stochastic Euler/gSQG with Kraichnan transport noise")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__.splitlines()[0] if fn.__doc__ else None)
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--out", help="output directory (overrides [output].dir)")
        p.add_argument("--threads", type=int, default=1, help="FFT worker threads")
        p.add_argument("--seed", type=int, help="seed override (unsigned 64-bit)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("seed must be an unsigned 64-bit integer")
            cfg.seed = args.seed
        if args.out is not None:
            cfg.output["dir"] = args.out
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        with scipy.fft.set_workers(args.threads):
            return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
