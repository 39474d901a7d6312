"""Command-line front end: powerctl <subcommand> --config <path>.

Subcommands: equilibrium, threshold, fluid, vi, compare. Parameters come
from one flat key = value config file (documented in the README); outputs
are JSON reports and CSV tables written to --out. Exit codes: 0 success,
2 configuration or model-assumption error, 3 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import equilibrium, finite, fluid, policy
from .errors import (
    AssumptionViolation,
    ConvexityUnverified,
    DegenerateRegime,
    MultichainDetected,
    NoConvergence,
    NonConvergent,
    NotADistribution,
    PowerCtlError,
    StepTooLarge,
)
from .model import ModelParams

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

_NUMERICAL_ERRORS = (
    NoConvergence,
    NonConvergent,
    StepTooLarge,
    MultichainDetected,
    ConvexityUnverified,
    DegenerateRegime,
)

_DEFAULTS = {
    "theta": 0.2,
    "beta1": 0.4,
    "lambda": 1.5,
    "n0": 1.0,
    "p_max": 10.0,
    "rho": 0.1,
    "n_users": 10,
    "rho_list": [0.05, 0.1, 0.2, 0.3],
    "pairing": "prop3",
    "bench_policy": "average_optimal",
    "vi_tol": 1e-9,
    "grid_step": 0.005,
    "n_starts": 5,
    "m0": [0.25, 0.25, 0.25, 0.25],
    "horizon": 50.0,
    "dt": 0.01,
    "fluid_policy": "threshold",
}

_LIST_KEYS = {"rho_list", "m0"}
_STR_KEYS = {"pairing", "bench_policy", "fluid_policy"}
_INT_KEYS = {"n_users", "n_starts"}

_PAIRINGS = {
    "prop3": policy.PROP3_CONSISTENT,
    "literal": policy.PAPER_LITERAL,
}


class ConfigError(ValueError):
    pass


def load_config(path) -> dict:
    """Parse the flat key = value config file; '#' starts a comment."""
    cfg = dict(_DEFAULTS)
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in cfg:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            if key in _LIST_KEYS:
                cfg[key] = [float(v) for v in value.split(",") if v.strip()]
            elif key in _STR_KEYS:
                cfg[key] = value
            elif key in _INT_KEYS:
                cfg[key] = int(value)
            else:
                cfg[key] = float(value)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from exc
    return cfg


def _params(cfg, rho=None) -> ModelParams:
    return ModelParams.good_bad(
        theta=cfg["theta"],
        beta1=cfg["beta1"],
        rho=cfg["rho"] if rho is None else rho,
        lam=cfg["lambda"],
        n0=cfg["n0"],
        p_max=cfg["p_max"],
    )


def _pairing(cfg):
    name = cfg["pairing"]
    if name not in _PAIRINGS:
        raise ConfigError(f"pairing must be one of {sorted(_PAIRINGS)}, got {name!r}")
    return _PAIRINGS[name]


def _bench_policy(cfg, params):
    name = cfg["bench_policy"]
    if name == "average_optimal":
        return policy.make_bench_policy(params)
    if name in _PAIRINGS:
        return policy.make_policy(params, _PAIRINGS[name])
    raise ConfigError(
        f"bench_policy must be average_optimal or one of {sorted(_PAIRINGS)}, got {name!r}"
    )


def cmd_equilibrium(cfg, out_dir, seed):
    report = equilibrium.optimal_equilibrium(_params(cfg))
    path = f"{out_dir}/equilibrium.json"
    report.to_json(path)
    print(f"{report.regime}: s4*={report.s4_star:.12g} E*={report.E_star:.12g} -> {path}")
    return EXIT_OK


def cmd_threshold(cfg, out_dir, seed):
    params = _params(cfg)
    pairing = _pairing(cfg)
    pol = policy.make_policy(params, pairing)
    rng = np.random.default_rng(seed)
    starts = [rng.dirichlet(np.ones(4)) for _ in range(cfg["n_starts"])]
    report = policy.bias_optimality_check(
        params, m0_set=starts, grid_step=cfg["grid_step"], pairing=pairing
    )
    path = f"{out_dir}/threshold.json"
    report.to_json(path)
    verdict = report.pairing_verdict or "n/a (interior)"
    print(
        f"{pol.regime}: pi={pol.pi:.12g} grid check "
        f"{'PASS' if report.passed else 'FAIL'}, pairing verdict: {verdict} -> {path}"
    )
    return EXIT_OK


def cmd_fluid(cfg, out_dir, seed):
    params = _params(cfg)
    name = cfg["fluid_policy"]
    if name == "threshold":
        controller = policy.make_policy(params, _pairing(cfg))
    elif name == "passive":
        controller = lambda m: 0.0
    elif name == "active":
        controller = lambda m: 1.0
    elif name.startswith("s4="):
        level = float(name[3:])
        controller = lambda m: level
    else:
        raise ConfigError(f"fluid_policy must be threshold|passive|active|s4=<v>, got {name!r}")
    traj = fluid.integrate(cfg["m0"], controller, cfg["horizon"], params, dt=cfg["dt"])
    path = f"{out_dir}/fluid.csv"
    traj.to_csv(path)
    print(f"{len(traj.t)} samples to t={traj.t[-1]:.12g} -> {path}")
    return EXIT_OK


def cmd_vi(cfg, out_dir, seed):
    params = _params(cfg)
    result = finite.relative_value_iteration(params, cfg["n_users"], tol=cfg["vi_tol"])
    path = f"{out_dir}/vi.json"
    result.to_json(path)
    print(
        f"g={result.g:.12g} after {result.iterations} iterations "
        f"(span {result.span_residual:.3g}) -> {path}"
    )
    return EXIT_OK


def _bench_row(cfg, rho):
    params = _params(cfg, rho=rho)
    controller = _bench_policy(cfg, params)
    n_users = cfg["n_users"]
    g_mf = finite.evaluate_policy_exact(
        lambda counts: policy.apply_finite(controller, counts, n_users), params, n_users
    )
    vi = finite.relative_value_iteration(params, n_users, tol=cfg["vi_tol"])
    rel = abs(g_mf - vi.g) * 100.0 / g_mf
    return {
        "rho": rho,
        "g_mf": g_mf,
        "g_vi": vi.g,
        "rel_err_pct": rel,
        "abs_err_pct": abs(g_mf - vi.g) * 100.0,
    }


def cmd_compare(cfg, out_dir, seed):
    rhos = sorted(cfg["rho_list"])
    with ThreadPoolExecutor(max_workers=min(4, len(rhos))) as pool:
        rows = list(pool.map(lambda r: _bench_row(cfg, r), rhos))
    path = f"{out_dir}/compare.csv"
    with open(path, "w") as fh:
        fh.write("rho,g_mf,g_vi,rel_err_pct,abs_err_pct\n")
        for row in rows:
            fh.write(
                ",".join(
                    f"{row[c]:.12g}"
                    for c in ("rho", "g_mf", "g_vi", "rel_err_pct", "abs_err_pct")
                )
                + "\n"
            )
    worst = max(row["rel_err_pct"] for row in rows)
    print(f"{len(rows)} rows, worst rel err {worst:.4g}% -> {path}")
    return EXIT_OK


_COMMANDS = {
    "equilibrium": cmd_equilibrium,
    "threshold": cmd_threshold,
    "fluid": cmd_fluid,
    "vi": cmd_vi,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="powerctl",
        description="Queue-aware power control: equilibria, threshold policies, benchmarks.",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="flat key = value parameter file")
    parser.add_argument("--out", default=".", help="output directory (default: .)")
    parser.add_argument("--seed", type=int, default=0, help="seed for randomized starts")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        return _COMMANDS[args.command](cfg, args.out, args.seed)
    except (ConfigError, AssumptionViolation, NotADistribution) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERICAL_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except PowerCtlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
