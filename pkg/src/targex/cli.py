"""Command-line front end: config parsing, dispatch, result files."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .bounds import scenario_constants
from .experiments import (ExperimentConfig, fig3_harness, fig3_summary,
                          fig4_harness, run_algorithm1, run_exploration_trial,
                          validate_closed_loop, write_csv, write_manifest)
from .estimation import posterior_shape
from .model import substream, unvec_theta
from .synthesis import h_infinity_baseline

CONFIG_KEYS = {
    "system": {"A", "B", "sigma_w"},
    "prior": {"theta_prior", "D0_inv", "delta"},
    "exploration": {"goal_diag", "eps", "T", "frequencies"},
    "dual": {"gamma_p", "gamma_p_list", "use_eps_grid"},
    "experiments": {"alphas", "trials", "n_validation"},
    "scenario": {"beta"},
    "seed": None,
}


def _matrix(value, what):
    """Parse a matrix literal: nested lists or {"scaled-identity": c}."""
    if isinstance(value, dict):
        if set(value) == {"scaled-identity"}:
            return ("scaled-identity", float(value["scaled-identity"]))
        raise ValueError(f"{what}: unknown matrix shorthand {sorted(value)}")
    arr = np.asarray(value, dtype=float)
    return arr


def parse_config(path) -> ExperimentConfig:
    """Load and validate a JSON config file, applying documented defaults."""
    path = Path(path)
    text = path.read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: malformed JSON at line {exc.lineno}, "
                         f"column {exc.colno}: {exc.msg}") from exc
    for key, subkeys in raw.items():
        if key not in CONFIG_KEYS:
            raise ValueError(f"unknown config key {key!r}; valid keys: "
                             f"{sorted(CONFIG_KEYS)}")
        if CONFIG_KEYS[key] is not None and isinstance(subkeys, dict):
            for sub in subkeys:
                if sub not in CONFIG_KEYS[key]:
                    raise ValueError(f"unknown key {key}.{sub!r}; valid: "
                                     f"{sorted(CONFIG_KEYS[key])}")
    system = raw.get("system", {})
    if "A" not in system or "B" not in system:
        raise ValueError("config must provide system.A and system.B")
    kwargs = dict(
        A_true=_matrix(system["A"], "system.A"),
        B_true=_matrix(system["B"], "system.B"),
        sigma_w=float(system.get("sigma_w", 1.0)),
    )
    prior = raw.get("prior", {})
    if "D0_inv" in prior:
        parsed = _matrix(prior["D0_inv"], "prior.D0_inv")
        if isinstance(parsed, tuple):
            kwargs["D0_inv_scale"] = parsed[1]
        else:
            diag = np.diag(parsed)
            if not np.allclose(parsed, np.diag(diag)) or not np.allclose(diag, diag[0]):
                raise ValueError("prior.D0_inv must be a scaled identity "
                                 "(use the scaled-identity shorthand)")
            kwargs["D0_inv_scale"] = float(diag[0])
    if "theta_prior" in prior:
        kwargs["theta_prior"] = np.asarray(prior["theta_prior"], dtype=float)
    kwargs["delta"] = float(prior.get("delta", 0.01))
    expl = raw.get("exploration", {})
    kwargs["T"] = int(expl.get("T", 100))
    if "frequencies" in expl:
        kwargs["frequencies"] = tuple(expl["frequencies"])
    if "goal_diag" in expl:
        kwargs["goal_diag"] = tuple(expl["goal_diag"])
    kwargs["eps"] = float(expl.get("eps", 0.5))
    dual = raw.get("dual", {})
    if "gamma_p" in dual:
        kwargs["gamma_p"] = float(dual["gamma_p"])
    if "gamma_p_list" in dual:
        kwargs["gamma_p_list"] = tuple(dual["gamma_p_list"])
    kwargs["use_eps_grid"] = bool(dual.get("use_eps_grid", False))
    exps = raw.get("experiments", {})
    if "alphas" in exps:
        kwargs["alphas"] = tuple(exps["alphas"])
    kwargs["trials"] = int(exps.get("trials", 10))
    kwargs["n_validation"] = int(exps.get("n_validation", 100))
    kwargs["beta"] = float(raw.get("scenario", {}).get("beta", 1e-10))
    kwargs["seed"] = int(raw.get("seed", 0))
    return ExperimentConfig(**kwargs)


def _cmd_explore(config, out, quiet):
    res, prior, plan = run_exploration_trial(config, 1.0, 0)
    rows = [dict(alpha=res.alpha, trial=res.trial, method="targeted",
                 DT11=res.DT11, energy=res.energy, gamma_e=res.gamma_e,
                 status=res.status, goal_met=res.goal_met_11,
                 gamma_v1=res.gamma_v1)]
    write_csv(out / "explore.csv", rows, ["alpha", "trial", "method", "DT11",
                                          "energy", "gamma_e", "status",
                                          "goal_met", "gamma_v1"])
    write_manifest(out / "manifest.json", config, "explore",
                   extra=dict(status=res.status, gamma_e=res.gamma_e))
    if not quiet:
        print(f"explore: status={res.status} gamma_e={res.gamma_e:.6g} "
              f"DT11={res.DT11:.6g} goal_met={res.goal_met_11}")
        print(f"files: {out / 'explore.csv'}")
    return 0 if res.status == "ok" else 2


def _cmd_design(config, out, quiet):
    perf = config.performance()
    model = config.true_model()
    g_nom, K_nom = h_infinity_baseline(model.A, model.B, perf, mode="nominal")
    prior = _config_prior(config)
    g_rob, K_rob = h_infinity_baseline(*prior.mean_matrices(), perf,
                                       mode="robust", D0=prior.D0)
    rows = [dict(mode="nominal", gamma=g_nom, K=np.array2string(K_nom, precision=6)),
            dict(mode="robust", gamma=g_rob, K=np.array2string(K_rob, precision=6))]
    write_csv(out / "design.csv", rows, ["mode", "gamma", "K"])
    write_manifest(out / "manifest.json", config, "design",
                   extra=dict(gamma_nominal=g_nom, gamma_robust=g_rob))
    if not quiet:
        print(f"design: nominal gamma={g_nom:.4f}, robust gamma={g_rob:.4f}")
    return 0


def _config_prior(config):
    from .experiments import build_prior
    return build_prior(config, 1.0, substream(config.seed, 4, 0, 0))


def _cmd_dual(config, out, quiet):
    if config.gamma_p is None:
        print("dual: config must set dual.gamma_p", file=sys.stderr)
        return 1
    res = run_algorithm1(config)
    write_manifest(out / "manifest.json", config, "dual",
                   extra=dict(status=res.status, stage=res.stage,
                              gamma_e=res.gamma_e, gamma_p=res.gamma_p,
                              closed_loop_gain=res.closed_loop_gain))
    rows = [dict(gamma_p=res.gamma_p, gamma_e=res.gamma_e, status=res.status,
                 stage=res.stage, DT11=res.DT11, closed_loop_gain=res.closed_loop_gain)]
    write_csv(out / "dual.csv", rows, ["gamma_p", "gamma_e", "status", "stage",
                                       "DT11", "closed_loop_gain"])
    if not quiet:
        print(f"dual: status={res.status} stage={res.stage} "
              f"gamma_e={res.gamma_e:.6g} gamma_p={res.gamma_p:.4g} "
              f"closed_loop_gain={res.closed_loop_gain:.4g}")
    if res.status in ("performance target unreachable", "infeasible"):
        return 2
    return 0 if res.status == "ok" else 1


def _cmd_fig3(config, out, quiet):
    rows = fig3_harness(config)
    write_csv(out / "fig3.csv", rows, ["alpha", "trial", "method", "DT11",
                                       "energy", "gamma_e", "status",
                                       "goal_met", "gamma_v1"])
    summary = fig3_summary(rows)
    write_csv(out / "fig3_summary.csv", summary,
              ["alpha", "targeted_mean", "targeted_std", "targeted_count",
               "random_mean", "random_std", "random_count", "feasible",
               "goal_met_all"])
    write_manifest(out / "manifest.json", config, "fig3")
    if not quiet:
        for s in summary:
            print(f"alpha={s['alpha']:g}: targeted mean DT11={s['targeted_mean']:.4g} "
                  f"random={s['random_mean']:.4g} feasible={s['feasible']}")
    return 0


def _cmd_fig4(config, out, quiet):
    rows, info = fig4_harness(config)
    write_csv(out / "fig4.csv", rows, ["gamma_p", "gamma_e", "status"])
    write_manifest(out / "manifest.json", config, "fig4", extra=info)
    if not quiet:
        print(f"baselines: nominal={info['gamma_nominal']:.4f} "
              f"robust={info['gamma_robust']:.4f}")
        for r in rows:
            print(f"gamma_p={r['gamma_p']:.4f}: gamma_e={r['gamma_e']:.6g} "
                  f"({r['status']})")
    return 0


def _cmd_validate(config, out, quiet):
    if config.gamma_p is None:
        print("validate: config must set dual.gamma_p", file=sys.stderr)
        return 1
    res = run_algorithm1(config)
    if res.status != "ok":
        print(f"validate: pipeline failed at {res.stage} ({res.status})",
              file=sys.stderr)
        return 2
    prior = _config_prior(config)
    Dbar_post = posterior_shape(prior, res.Dbar_T)
    report = validate_closed_loop(res.K, res.theta_tilde_T, Dbar_post,
                                  prior.theta0_region(), config.performance(),
                                  config.gamma_p, n_samples=config.n_validation,
                                  seed=config.seed)
    rows = [dict(sample=i, hinf=g, gamma_p=config.gamma_p,
                 violation=bool(g > config.gamma_p + 1e-4))
            for i, g in enumerate(report["gains"])]
    write_csv(out / "validation.csv", rows, ["sample", "hinf", "gamma_p", "violation"])
    write_manifest(out / "manifest.json", config, "validate",
                   extra=dict(max_gain=report["max_gain"],
                              violations=report["violations"]))
    if not quiet:
        print(f"validate: max closed-loop hinf={report['max_gain']:.4f} vs "
              f"gamma_p={config.gamma_p:.4f}, violations={report['violations']}"
              f"/{report['n_samples']}")
    return 0 if report["violations"] == 0 else 2


COMMANDS = {
    "explore": _cmd_explore,
    "design": _cmd_design,
    "dual": _cmd_dual,
    "fig3": _cmd_fig3,
    "fig4": _cmd_fig4,
    "validate": _cmd_validate,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="targex",
        description="Targeted harmonic exploration and gain-scheduled control design")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="path to a JSON config file")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the master seed from the config")
    parser.add_argument("--threads", type=int, default=1,
                        help="reserved; solves run single-threaded")
    parser.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)
    try:
        config = parse_config(args.config)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.seed is not None:
        config.seed = int(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[args.command](config, out, args.quiet)
    except Exception as exc:  # pragma: no cover - defensive
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
