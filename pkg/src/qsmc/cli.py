"""Command-line runner: ``qsmc {check,kappa,simulate,spectrum,langevin}``.

Exit codes: 0 success, 1 configuration error, 2 assumption flag,
3 statistical failure (e.g. every replica killed before the first checkpoint).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__
from .config import PRESETS, RunConfig, load_config, load_preset
from .dynamics import SchemeConfig, langevin_drift, long_run_moments
from .ensemble import EnsembleConfig, ModelBundle, mean_decay_fit, run_ensemble, summarize, survival_rate_fit
from .errors import (
    ConfigurationError,
    ContractViolation,
    EmptySampleError,
    ExtinctionError,
    KillingConstructionError,
    NumericError,
    ParameterError,
    QSMCError,
    ShiftSearchError,
    WindowError,
)
from .killing import run_killed_batch
from .model import KillingSpec, build_killing, check_assumptions, kappa_tilde_log, make_model
from .spectral import (
    GridSpec,
    OUParams,
    analytic_eigenvalues,
    discretize_generator,
    discretize_langevin_generator,
    low_eigenvalues,
    ou_killing_constants,
    ou_qprocess,
)

EXIT_OK, EXIT_CONFIG, EXIT_ASSUMPTION, EXIT_STATS = 0, 1, 2, 3


def fmt(x) -> str:
    """17 significant digits; ``nan`` for missing values."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def write_csv(path: Path, header: list[str], rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, payload: dict) -> Path:
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def time_label(t: float) -> str:
    return format(float(t), "g")


# ---------------------------------------------------------------------------
# model assembly


def build_model(cfg: RunConfig):
    target, drift = make_model(cfg.model.key, cfg.model.params)
    k = cfg.killing
    if k.constant_rate is not None:
        killing = KillingSpec.constant(k.constant_rate, target.dim)
    else:
        killing = build_killing(target, drift, k.K_override, k.search_box, k.tol, k.grid_points)
    return target, drift, killing


def _ou_params(cfg: RunConfig) -> OUParams | None:
    if cfg.model.key != "ou-example":
        return None
    p = {"nu": 2.0, "tau2": 4.0, "mu": -1.0, "sigma2": 2.0, **cfg.model.params}
    try:
        return OUParams(**p)
    except ParameterError:
        return None


def _reference_pdf(target):
    if target.dim != 1 or target.mean is None:
        return None
    return stats.norm(target.mean[0], math.sqrt(target.var[0])).pdf


# ---------------------------------------------------------------------------
# subcommands


def cmd_check(cfg: RunConfig, out: Path, figures: bool = False) -> int:
    target, drift = make_model(cfg.model.key, cfg.model.params)
    report = check_assumptions(target, drift, cfg.checks.quad_box, cfg.checks.quad_tol, seed=cfg.ensemble.seed)
    payload = {"model": cfg.model.key, **report.to_dict()}
    try:
        k = cfg.killing
        killing = build_killing(target, drift, k.K_override, k.search_box, k.tol, k.grid_points)
        payload["shift_K"] = killing.shift_K
        payload["minimizer"] = killing.minimizer
    except (ShiftSearchError, KillingConstructionError) as exc:
        payload["killing_error"] = str(exc)
        payload["passed"] = False
    write_json(out / "assumptions.json", payload)
    print(f"integral pi^2/gamma      {report.l2_integral:.6g} ({'finite' if report.l2_finite else 'NOT finite'})")
    print(f"raw rate lower bound     {report.kappa_lower_bound:.6g} ({'bounded' if report.kappa_bounded_below else 'UNBOUNDED'})")
    print(f"tail liminf estimate     {report.liminf_estimate:.6g} (gap condition {'met' if report.spectral_gap_condition else 'NOT met'})")
    if "shift_K" in payload:
        print(f"shift K                  {payload['shift_K']:.10g}")
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if "killing_error" in payload:
        print(f"flag: {payload['killing_error']}", file=sys.stderr)
    if not payload["passed"]:
        return EXIT_ASSUMPTION
    if not report.spectral_gap_condition:
        print("warning: spectral-gap condition not met; expect slow convergence of the conditioned laws", file=sys.stderr)
    return EXIT_OK


def cmd_kappa(cfg: RunConfig, out: Path, figures: bool = False) -> int:
    target, drift, killing = build_model(cfg)
    g = cfg.kappa_grid
    ys = np.linspace(g.lo, g.hi, g.n)
    pts = np.zeros((g.n, target.dim))
    pts[:, 0] = ys
    if cfg.killing.constant_rate is not None:
        kt = np.zeros(g.n)
    else:
        kt = np.asarray(kappa_tilde_log(target, drift, pts), dtype=float)
    kap = kt + killing.shift_K
    write_csv(out / "kappa.csv", ["y", "kappa_tilde", "kappa"], zip(ys, kt, kap))
    write_json(
        out / "kappa_report.json",
        {"model": cfg.model.key, "shift_K": killing.shift_K, "minimizer": killing.minimizer, "notes": list(killing.notes)},
    )
    print(f"shift K = {killing.shift_K:.10g}; wrote {g.n} rows to {out / 'kappa.csv'}")
    if figures:
        from .plotting import plot_kappa

        plot_kappa(ys, kt, kap, out / "kappa.png")
    return EXIT_OK


def ensemble_config(cfg: RunConfig) -> EnsembleConfig:
    e, s = cfg.ensemble, cfg.scheme
    x0 = e.x0.model_dump() if hasattr(e.x0, "model_dump") else e.x0
    return EnsembleConfig(
        replicas=e.replicas,
        horizon=e.horizon,
        checkpoints=tuple(e.checkpoints),
        dt=s.dt,
        seed=e.seed,
        x0=x0,
        scheme=s.scheme,
        bridge_levels=s.bridge_levels,
        workers=cfg.workers,
        chunk_size=e.chunk_size,
        bins=e.bins,
    )


def _export_paths(bundle: ModelBundle, ecfg: EnsembleConfig, count: int, out: Path) -> None:
    from .ensemble import initial_states

    subs = np.arange(min(count, ecfg.replicas))
    x0s = initial_states(ecfg.x0, bundle.target, ecfg.seed, subs)
    res = run_killed_batch(
        bundle.step_drift, bundle.killing, x0s, ecfg.horizon, ecfg.scheme_config, ecfg.seed, subs, record_paths=True
    )
    dim = x0s.shape[1]
    for i in range(len(subs)):
        last = int(res.death_step[i]) if res.death_step[i] >= 0 else len(res.times) - 1
        rows = ([res.times[s], *res.paths[s, i]] for s in range(last + 1))
        write_csv(out / f"path_{i}.csv", ["time", *[f"x_{j + 1}" for j in range(dim)]], rows)


def cmd_simulate(cfg: RunConfig, out: Path, figures: bool = False) -> int:
    target, drift, killing = build_model(cfg)
    bundle = ModelBundle(target, drift, killing)
    ecfg = ensemble_config(cfg)
    result = run_ensemble(bundle, ecfg)
    dim = target.dim

    curve = result.survival
    write_csv(out / "survival.csv", ["t", "p_hat", "stderr"], zip(curve.times, curve.survival, curve.stderr))

    suffix = [""] if dim == 1 else [f"_{j + 1}" for j in range(dim)]
    header = ["t", "n_survivors"] + [f"{name}{s}" for name in ("mean", "var", "se_mean", "se_var") for s in suffix]
    moment_rows = []
    laws_report = []
    for law in result.laws:
        write_csv(
            out / f"law_t{time_label(law.t)}.csv",
            ["bin_lo", "bin_hi", "count", "density"],
            zip(law.bin_edges[:-1], law.bin_edges[1:], law.counts, law.density),
        )
        entry = {"t": law.t, "n_survivors": law.n_survivors, "empty": law.empty}
        if law.n_survivors >= 2:
            sm = summarize(law)
            moment_rows.append([law.t, law.n_survivors, *sm.mean, *sm.var, *sm.se_mean, *sm.se_var])
            entry.update(mean=sm.mean, var=sm.var, se_mean=sm.se_mean, se_var=sm.se_var)
            if target.cdf is not None and dim == 1:
                from .ensemble import ks_statistic

                entry["ks_vs_target"] = ks_statistic(law.survivor_states[:, 0], target.cdf)
        else:
            moment_rows.append([law.t, law.n_survivors] + [float("nan")] * (4 * dim))
        laws_report.append(entry)
    write_csv(out / "moments.csv", header, moment_rows)

    report = {
        "model": cfg.model.key,
        "replicas": ecfg.replicas,
        "seed": ecfg.seed,
        "dt": ecfg.dt,
        "scheme": ecfg.scheme,
        "shift_K": killing.shift_K,
        "laws": laws_report,
        "fits": {},
    }
    fit = None
    if cfg.ensemble.rate_window is not None:
        try:
            fit = survival_rate_fit(result, tuple(cfg.ensemble.rate_window))
            report["fits"]["survival"] = vars(fit)
            report["fits"]["survival"]["reference_slope"] = -killing.shift_K
        except WindowError as exc:
            report["fits"]["survival"] = {"error": str(exc)}
    if cfg.ensemble.mean_window is not None and target.mean is not None:
        try:
            mfit = mean_decay_fit(result, float(target.mean[0]), tuple(cfg.ensemble.mean_window))
            report["fits"]["mean_decay"] = vars(mfit)
            p = _ou_params(cfg)
            if p is not None:
                report["fits"]["mean_decay"]["reference_slope"] = -(2 * p.tau2 - p.sigma2) / (2 * p.sigma2 * p.tau2)
        except WindowError as exc:
            report["fits"]["mean_decay"] = {"error": str(exc)}
    write_json(out / "simulate_report.json", report)

    if cfg.ensemble.export_paths:
        _export_paths(bundle, ecfg, cfg.ensemble.export_paths, out)
    if figures:
        from .plotting import plot_laws, plot_survival

        plot_laws(result.laws, _reference_pdf(target), out / "laws.png")
        plot_survival(curve.times, curve.survival, fit, out / "survival.png")

    for entry in laws_report:
        extra = ""
        if "mean" in entry:
            extra = f"  mean {entry['mean'][0]:.4f}  var {entry['var'][0]:.4f}"
        print(f"t = {entry['t']:<8g} survivors {entry['n_survivors']:>9d}{extra}")
    if result.laws and result.laws[0].empty:
        print(
            f"all {ecfg.replicas} replicas were killed before the first checkpoint t = {result.laws[0].t:g}; "
            "raise ensemble.replicas or lower the checkpoint",
            file=sys.stderr,
        )
        return EXIT_STATS
    return EXIT_OK


def cmd_spectrum(cfg: RunConfig, out: Path, figures: bool = False) -> int:
    target, drift, killing = build_model(cfg)
    if target.dim != 1:
        raise ConfigurationError("spectrum needs a one-dimensional model")
    sp = cfg.spectral
    grid = GridSpec(sp.lo, sp.hi, sp.n)
    m = discretize_generator(target, drift, killing, grid)
    numeric = low_eigenvalues(m, sp.k)
    analytic = analytic_eigenvalues(target, drift, sp.k) if cfg.killing.constant_rate is None else None
    if analytic is not None and cfg.killing.K_override is not None:
        analytic = analytic - analytic[0] + killing.shift_K
    rows = []
    for i, lam in enumerate(numeric):
        a = analytic[i] if analytic is not None else float("nan")
        rows.append([i, lam, a, abs(lam - a)])
    write_csv(out / "spectrum.csv", ["index", "numeric_eigenvalue", "analytic_eigenvalue_if_known", "abs_error"], rows)

    report = {
        "model": cfg.model.key,
        "grid": {"lo": sp.lo, "hi": sp.hi, "n": sp.n, "h": grid.h},
        "shift_K": killing.shift_K,
        "eigenvalues": numeric,
        "gap": float(numeric[1] - numeric[0]) if sp.k > 1 else None,
        "warnings": m.warnings,
    }
    if analytic is not None:
        report["analytic"] = analytic
        report["max_relative_error"] = float(np.max(np.abs(numeric - analytic) / np.abs(analytic)))
    if cfg.killing.constant_rate is None:
        lang = low_eigenvalues(discretize_langevin_generator(target, drift, grid), sp.k)
        report["langevin_eigenvalues_plus_K"] = lang + killing.shift_K
        report["langevin_max_relative_error"] = float(np.max(np.abs(lang + killing.shift_K - numeric) / np.abs(numeric)))
    write_json(out / "spectrum_report.json", report)
    if figures:
        from .plotting import plot_spectrum

        plot_spectrum(numeric, analytic, out / "spectrum.png")
    for i, lam in enumerate(numeric):
        print(f"lambda_{i} = {lam:.10g}" + (f"   (closed form {analytic[i]:.10g})" if analytic is not None else ""))
    if "max_relative_error" in report:
        print(f"max relative error {report['max_relative_error']:.3e}")
    return EXIT_OK


def cmd_langevin(cfg: RunConfig, out: Path, figures: bool = False) -> int:
    target, drift = make_model(cfg.model.key, cfg.model.params)
    lg = cfg.langevin
    fn = langevin_drift(target, drift)
    if lg.x0 is None:
        start = target.mean if target.mean is not None else np.zeros(target.dim)
    else:
        start = np.broadcast_to(np.asarray(lg.x0, dtype=float), (target.dim,))
    x0s = np.tile(np.asarray(start, dtype=float), (lg.replicas, 1))
    scheme = SchemeConfig(cfg.scheme.dt, "euler", cfg.scheme.bridge_levels)
    res = long_run_moments(fn, x0s, lg.horizon, scheme, cfg.ensemble.seed, lg.burn_in)
    ref_mean = ref_var = None
    p = _ou_params(cfg)
    if p is not None:
        ref_mean, ref_var = ou_qprocess(p)
    elif drift.zero and target.mean is not None:
        # pi^2 with pi Gaussian: same mean, half the variance
        ref_mean, ref_var = float(target.mean[0]), float(target.var[0]) / 2.0
    rows = []
    for j in range(target.dim):
        rows.append(
            [j + 1, res.mean[j], res.var[j], res.se_mean[j]]
            + ([ref_mean, ref_var] if ref_mean is not None and j == 0 else [float("nan"), float("nan")])
        )
    write_csv(out / "langevin.csv", ["coordinate", "mean", "var", "se_mean", "reference_mean", "reference_var"], rows)
    write_json(
        out / "langevin_report.json",
        {
            "model": cfg.model.key,
            "replicas": lg.replicas,
            "horizon": lg.horizon,
            "burn_in": lg.burn_in,
            "dt": cfg.scheme.dt,
            "seed": cfg.ensemble.seed,
            "mean": res.mean,
            "var": res.var,
            "se_mean": res.se_mean,
            "reference_mean": ref_mean,
            "reference_var": ref_var,
        },
    )
    if figures and target.dim == 1:
        from .plotting import plot_langevin

        ref = stats.norm(ref_mean, math.sqrt(ref_var)).pdf if ref_mean is not None else None
        plot_langevin(float(res.mean[0]), float(res.var[0]), ref, out / "langevin.png")
    print(f"long-run mean {res.mean[0]:.5f} (se {res.se_mean[0]:.5f})  var {res.var[0]:.5f}")
    if ref_mean is not None:
        print(f"reference     {ref_mean:.5f}                 var {ref_var:.5f}")
    return EXIT_OK


COMMANDS = {
    "check": cmd_check,
    "kappa": cmd_kappa,
    "simulate": cmd_simulate,
    "spectrum": cmd_spectrum,
    "langevin": cmd_langevin,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsmc", description="Killed diffusions with a prescribed quasi-limiting law.")
    parser.add_argument("--version", action="version", version=f"qsmc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "check": "probe the standing assumptions on a box; writes assumptions.json",
        "kappa": "tabulate the killing rate; writes kappa.csv",
        "simulate": "run a killed ensemble; writes survival.csv, law_t*.csv, moments.csv",
        "spectrum": "low eigenvalues of the discretised killed generator; writes spectrum.csv",
        "langevin": "long-run moments of the Q-process; writes langevin.csv",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", type=Path, help="JSON run configuration")
        src.add_argument("--preset", choices=PRESETS)
        p.add_argument("--out", type=Path, help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, help="64-bit seed (overrides the config)")
        p.add_argument("--workers", type=int, help="worker threads for replica chunks")
        p.add_argument("--figures", action="store_true", help="also render PNG figures next to the CSV files")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else load_preset(args.preset)
        cfg = cfg.with_overrides(seed=args.seed, workers=args.workers, out=str(args.out) if args.out else None)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out, args.figures)
    except (ConfigurationError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ShiftSearchError, KillingConstructionError, ContractViolation) as exc:
        print(f"assumption flag: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except (ExtinctionError, EmptySampleError, NumericError) as exc:
        print(f"statistical failure: {exc}", file=sys.stderr)
        return EXIT_STATS
    except QSMCError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STATS


if __name__ == "__main__":
    sys.exit(main())
