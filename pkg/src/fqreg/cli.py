"""Command-line front end: `analyze` runs the full band-inference pipeline on
CSV data; `simulate` runs the replicate study on a named scenario.

Every output embeds the fully resolved configuration and seed, and reruns
with the same seed are byte-identical regardless of the thread budget
(timestamps excluded).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import pipeline, simlab
from .band_estimators import presmooth_dataset
from .dataset import Contrast, load_dataset
from .inference import FOLD_THRESHOLD
from .qr_pointwise import SolverConfig, fit_all_locations


@dataclass(frozen=True)
class RunConfig:
    command: str
    responses: str | None = None
    design: str | None = None
    grid: str | None = None
    scenario: str | None = None
    taus: tuple = (0.5,)
    contrasts: tuple = ()            # each entry an index or a weight tuple
    method: str = "li"
    methods: tuple = ("li",)
    alpha: float = 0.05
    mc_draws: int = 10_000
    wavelet_smooth: bool = True
    diagonal_mode: str = "analytic"
    fold_threshold: float = FOLD_THRESHOLD
    seed: int = 0
    parallelism: int = 1
    output_dir: str = "fqreg-out"
    eval_refine: int = 4
    dump_sigma: bool = False
    replicates: int = 2
    n_override: int | None = None
    t_override: int | None = None
    chain_length: int = 2500
    burn_in: int = 500
    tolerance: float = 1e-8

    def __post_init__(self):
        if not all(0.0 < t < 1.0 for t in self.taus):
            raise ValueError("all quantile levels must lie in (0, 1)")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")


def _resolve_contrast(spec, d: int) -> Contrast:
    if isinstance(spec, (int, np.integer)):
        if not 0 <= spec < d:
            raise ValueError(f"contrast index {spec} outside design columns [0, {d})")
        return Contrast.unit(int(spec), d)
    w = np.asarray(spec, dtype=float)
    if w.size != d:
        raise ValueError(f"contrast vector has {w.size} weights, design has {d} columns")
    return Contrast(w)


def _contrast_label(spec) -> str:
    if isinstance(spec, (int, np.integer)):
        return str(int(spec))
    return "v" + "_".join(f"{x:g}" for x in spec)


def _write_curve_csv(path, grid, query, analysis, fold_threshold):
    """Curve CSV on the evaluation grid; band columns are linear
    interpolations of the node bands."""
    band = analysis.band
    est = pipeline.evaluate_curve(analysis, grid, query)
    interp = lambda v: np.interp(query, grid.points, v)
    joint_lo, joint_hi = interp(band.joint_lo), interp(band.joint_hi)
    pw_lo, pw_hi = interp(band.pointwise_lo), interp(band.pointwise_hi)
    simbas = interp(band.simbas)
    flags = ((joint_lo > 0) | (joint_hi < 0)) & (np.abs(est) > fold_threshold)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "estimate", "pw_lo", "pw_hi", "joint_lo", "joint_hi",
                         "simbas", "flag"])
        for row in zip(query, est, pw_lo, pw_hi, joint_lo, joint_hi, simbas,
                       flags.astype(int)):
            writer.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in row])


def run_analyze(cfg: RunConfig) -> dict:
    """fit -> covariance -> estimate -> bands for every (tau, contrast) pair.

    Writes one JSON manifest plus one curve CSV per pair; returns the manifest.
    """
    started = time.monotonic()
    try:
        ds = load_dataset(cfg.responses, cfg.design, cfg.grid)
    except Exception as exc:
        raise RuntimeError(f"[stage: load] {exc}") from exc
    if cfg.method == "presmooth-li":
        try:
            ds = presmooth_dataset(ds)
        except Exception as exc:
            raise RuntimeError(f"[stage: presmooth] {exc}") from exc
    os.makedirs(cfg.output_dir, exist_ok=True)

    warnings = []
    dens = pipeline.density_warning(ds.n, ds.t)
    if dens:
        warnings.append(dens)

    contrast_specs = cfg.contrasts or tuple(range(1, ds.d)) or (0,)
    solver_cfg = SolverConfig(tolerance=cfg.tolerance, chain_length=cfg.chain_length,
                              burn_in=cfg.burn_in, seed=cfg.seed)
    refine = max(1, cfg.eval_refine)
    query = np.linspace(ds.grid.points[0], ds.grid.points[-1],
                        (ds.t - 1) * refine + 1)

    results = []
    for tau in cfg.taus:
        try:
            fits = fit_all_locations(ds, tau, solver_cfg, parallelism=cfg.parallelism)
        except Exception as exc:
            raise RuntimeError(f"[stage: fit, tau={tau}] {exc}") from exc
        for spec in contrast_specs:
            contrast = _resolve_contrast(spec, ds.d)
            label = _contrast_label(spec)
            try:
                analysis = pipeline.analyze_contrast(
                    ds, fits, tau, contrast, cfg.method, cfg.alpha, cfg.mc_draws,
                    cfg.seed, wavelet_smooth=cfg.wavelet_smooth,
                    diagonal_mode=cfg.diagonal_mode,
                    fold_threshold=cfg.fold_threshold)
            except Exception as exc:
                raise RuntimeError(
                    f"[stage: inference, tau={tau}, contrast={label}] {exc}") from exc
            curve_name = f"curve_tau{tau:g}_contrast{label}.csv"
            _write_curve_csv(os.path.join(cfg.output_dir, curve_name), ds.grid,
                             query, analysis, cfg.fold_threshold)
            if cfg.dump_sigma:
                np.savetxt(os.path.join(cfg.output_dir,
                                        f"sigma_tau{tau:g}_contrast{label}.csv"),
                           analysis.cov.sigma, delimiter=",", fmt="%.17g")
            block = {
                "tau": tau,
                "contrast": label,
                "contrast_weights": [float(w) for w in contrast.weights],
                "method": cfg.method,
                "c_n_alpha": analysis.band.c_n_alpha,
                "n_flagged": int(np.sum(analysis.band.flags)),
                "min_simbas": float(np.min(analysis.band.simbas)),
                "curve_csv": curve_name,
            }
            if analysis.gp_hyper is not None:
                block["gp_hyper"] = {
                    "theta_sigma": analysis.gp_hyper.theta_sigma,
                    "theta_l": analysis.gp_hyper.theta_l,
                    "adjusted": analysis.gp_hyper.adjusted,
                }
            results.append(block)

    manifest = {
        "config": _config_dict(cfg),
        "dataset": {"n": ds.n, "d": ds.d, "T": ds.t},
        "warnings": warnings,
        "results": results,
        "runtime_seconds": round(time.monotonic() - started, 3),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    _write_manifest(cfg, manifest)
    return manifest


def run_simulate(cfg: RunConfig) -> dict:
    """Run a replicate study on a named scenario and write its reports."""
    scenario = simlab.scenario_by_name(cfg.scenario, n=cfg.n_override, t=cfg.t_override)
    os.makedirs(cfg.output_dir, exist_ok=True)
    solver_cfg = SolverConfig(tolerance=cfg.tolerance, chain_length=cfg.chain_length,
                              burn_in=cfg.burn_in, seed=cfg.seed)
    report = simlab.run_study(scenario, cfg.methods, cfg.taus, cfg.replicates,
                              cfg.seed, parallelism=cfg.parallelism,
                              alpha=cfg.alpha, mc_draws=cfg.mc_draws,
                              solver_config=solver_cfg,
                              wavelet_smooth=cfg.wavelet_smooth)
    report.write_csv(os.path.join(cfg.output_dir, "study_report.csv"))
    report.write_raw_csv(os.path.join(cfg.output_dir, "study_raw.csv"))
    manifest = {
        "config": _config_dict(cfg),
        "scenario": {"kind": scenario.kind, "n": scenario.n, "T": scenario.t,
                     "domain": list(scenario.domain)},
        "replicates": report.replicates,
        "failures": report.failures,
        "runtime_seconds": round(report.runtime_seconds, 3),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    _write_manifest(cfg, manifest)
    return manifest


def _config_dict(cfg: RunConfig) -> dict:
    out = asdict(cfg)
    out["taus"] = list(cfg.taus)
    out["methods"] = list(cfg.methods)
    out["contrasts"] = [list(c) if isinstance(c, tuple) else c for c in cfg.contrasts]
    return out


def _write_manifest(cfg: RunConfig, manifest: dict) -> None:
    with open(os.path.join(cfg.output_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_contrast(text: str):
    if "," in text:
        return tuple(float(x) for x in text.split(","))
    return int(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fqreg",
                                     description="Functional quantile regression")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--tau", type=float, action="append", default=None,
                       help="quantile level; repeatable (default 0.5)")
        p.add_argument("--alpha", type=float, default=0.05)
        p.add_argument("--mc-draws", type=int, default=10_000)
        p.add_argument("--wavelet-smooth", action=argparse.BooleanOptionalAction,
                       default=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int,
                       default=int(os.environ.get("FQR_THREADS", "1")))
        p.add_argument("--out", default="fqreg-out")
        p.add_argument("--chain-length", type=int, default=2500)
        p.add_argument("--burn-in", type=int, default=500)
        p.add_argument("--tolerance", type=float, default=1e-8)

    pa = sub.add_parser("analyze", help="run the pipeline on CSV data")
    pa.add_argument("--responses", required=True)
    pa.add_argument("--design", required=True)
    pa.add_argument("--grid", required=True)
    pa.add_argument("--contrast", action="append", default=None,
                    help="design column index, or comma-separated weights; repeatable")
    pa.add_argument("--method", choices=pipeline.METHODS, default="li")
    pa.add_argument("--diagonal-mode", choices=("analytic", "empirical"),
                    default="analytic")
    pa.add_argument("--fold-threshold", type=float, default=FOLD_THRESHOLD)
    pa.add_argument("--eval-refine", type=int, default=4)
    pa.add_argument("--dump-sigma", action="store_true")
    common(pa)

    ps = sub.add_parser("simulate", help="run a replicate study")
    ps.add_argument("--scenario", required=True)
    ps.add_argument("--replicates", type=int, default=2)
    ps.add_argument("--method", action="append", default=None,
                    choices=pipeline.METHODS)
    ps.add_argument("--n", type=int, default=None, dest="n_override")
    ps.add_argument("--t", type=int, default=None, dest="t_override")
    common(ps)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    taus = tuple(args.tau) if args.tau else (0.5,)
    if args.command == "simulate":
        if args.seed is None:
            raise ValueError("--seed is required for simulate")
        methods = tuple(args.method) if args.method else ("li",)
        return RunConfig(command="simulate", scenario=args.scenario, taus=taus,
                         methods=methods, alpha=args.alpha, mc_draws=args.mc_draws,
                         wavelet_smooth=args.wavelet_smooth, seed=args.seed,
                         parallelism=args.threads, output_dir=args.out,
                         replicates=args.replicates, n_override=args.n_override,
                         t_override=args.t_override, chain_length=args.chain_length,
                         burn_in=args.burn_in, tolerance=args.tolerance)
    contrasts = tuple(_parse_contrast(c) for c in args.contrast) if args.contrast else ()
    return RunConfig(command="analyze", responses=args.responses, design=args.design,
                     grid=args.grid, taus=taus, contrasts=contrasts,
                     method=args.method, alpha=args.alpha, mc_draws=args.mc_draws,
                     wavelet_smooth=args.wavelet_smooth,
                     diagonal_mode=args.diagonal_mode,
                     fold_threshold=args.fold_threshold,
                     seed=args.seed if args.seed is not None else 0,
                     parallelism=args.threads, output_dir=args.out,
                     eval_refine=args.eval_refine, dump_sigma=args.dump_sigma,
                     chain_length=args.chain_length, burn_in=args.burn_in,
                     tolerance=args.tolerance)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        if cfg.command == "analyze":
            manifest = run_analyze(cfg)
        else:
            manifest = run_simulate(cfg)
    except Exception as exc:
        print(f"fqreg: error: {exc}", file=sys.stderr)
        return 1
    for w in manifest.get("warnings", []):
        print(f"fqreg: warning: {w}", file=sys.stderr)
    print(f"fqreg: wrote {os.path.join(cfg.output_dir, 'manifest.json')}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
