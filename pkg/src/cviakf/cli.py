"""Command-line front end: scenario campaigns, file tracking, self-checks.

Subcommands:
  simulate   run a seeded Monte Carlo campaign over a built-in scenario and
             write ARMSE/RMSE tables plus the run-0 measurement dump
  track      run the adaptive filter over a measurement CSV
  selfcheck  run the gradient and positive-definiteness fuzz suites

Exit codes: 0 success, 1 domain failure (bad inputs, failed checks),
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .distributions import (
    NotPositiveDefiniteError,
    cholesky_lower,
    symmetrize,
)
from .filters import (
    compensated_precision_step,
    initial_joint_belief,
    predict,
    sampled_gradients,
    update_linear,
    update_nonlinear,
    whitened_draws,
)
from .models import H_POSITION, measure, wrap_residual
from .simulator import (
    METHODS,
    default_config,
    make_scenario,
    run_monte_carlo,
    run_seed_sequences,
    simulate_run,
)

USAGE_ERROR = 2
DOMAIN_ERROR = 1

# FilterConfig fields settable through --config files and flags.
_CONFIG_FLOAT_KEYS = ("tau_p", "tau_r", "rho_r", "conv_threshold", "learning_rate")
_CONFIG_INT_KEYS = ("max_iters", "sample_count")


class CliError(Exception):
    """Domain-level failure; message goes to stderr, exit code 1."""


def _fmt(value: float) -> str:
    """Shortest round-tripping decimal representation."""
    return repr(float(value))


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if isinstance(v, float) else str(v)
                              for v in row) + "\n")


def _load_config_file(path: str) -> dict:
    """Flat key=value file mirroring FilterConfig field names."""
    overrides: dict = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key=value")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        try:
            if key in _CONFIG_FLOAT_KEYS:
                overrides[key] = float(value)
            elif key in _CONFIG_INT_KEYS:
                overrides[key] = int(value)
            else:
                raise CliError(f"{path}:{lineno}: unknown config key {key!r}")
        except ValueError as exc:
            raise CliError(f"{path}:{lineno}: bad value for {key}: {value!r}") from exc
    return overrides


def _config_overrides(args) -> dict:
    overrides = {}
    if getattr(args, "config", None):
        overrides.update(_load_config_file(args.config))
    if getattr(args, "samples", None) is not None:
        overrides["sample_count"] = args.samples
    if getattr(args, "learning_rate", None) is not None:
        overrides["learning_rate"] = args.learning_rate
    if getattr(args, "max_iters", None) is not None:
        overrides["max_iters"] = args.max_iters
    return overrides


def _resolve_scenario(scenario_id: str):
    try:
        return make_scenario(scenario_id)
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def cmd_simulate(args) -> int:
    scenario = _resolve_scenario(args.scenario)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    try:
        config = default_config(scenario, **_config_overrides(args))
    except ValueError as exc:
        raise CliError(str(exc)) from exc

    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.touch()
        probe.unlink()
    except OSError as exc:
        raise CliError(f"output directory {out} is not writable: {exc}") from exc

    try:
        result = run_monte_carlo(scenario, methods, args.runs, config, args.seed)
    except ValueError as exc:
        raise CliError(str(exc)) from exc

    _write_csv(out / "armse.csv",
               ["method", "position_armse", "velocity_armse", "mean_iterations"],
               [(m, result.position_armse[m], result.velocity_armse[m],
                 result.mean_iterations[m]) for m in methods])
    for m in methods:
        _write_csv(out / f"rmse_{m}.csv",
                   ["step", "position_rmse", "velocity_rmse"],
                   [(k + 1, result.position_rmse[m][k], result.velocity_rmse[m][k])
                    for k in range(scenario.steps)])

    # Run-0 measurement dump, re-ingestable by `track`.
    truth_ss, _, _ = run_seed_sequences(args.seed, 0)
    _, meas = simulate_run(scenario, np.random.default_rng(truth_ss))
    meas_header = ["k", "x", "y"] if scenario.measurement.is_linear \
        else ["k", "range", "azimuth_rad"]
    _write_csv(out / "measurements_run0.csv", meas_header,
               [(k + 1, float(meas[k, 0]), float(meas[k, 1]))
                for k in range(scenario.steps)])

    manifest = {
        "scenario": scenario.id,
        "methods": methods,
        "runs": args.runs,
        "seed": args.seed,
        "config": {
            "nominal_q": config.nominal_q.tolist(),
            "nominal_r": config.nominal_r.tolist(),
            **{k: getattr(config, k) for k in _CONFIG_FLOAT_KEYS},
            **{k: getattr(config, k) for k in _CONFIG_INT_KEYS},
        },
    }
    with open(out / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    for m in methods:
        print(f"{m}: position ARMSE {result.position_armse[m]:.2f} m, "
              f"velocity ARMSE {result.velocity_armse[m]:.2f} m/s, "
              f"mean iterations {result.mean_iterations[m]:.2f}")
    return 0


def _read_measurements(path: str, linear: bool) -> np.ndarray:
    expect = ["k", "x", "y"] if linear else ["k", "range", "azimuth_rad"]
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise CliError(f"{path}: empty file, expected header {','.join(expect)}")
    header = [c.strip() for c in lines[0].split(",")]
    if header != expect:
        raise CliError(f"{path}:1: expected header {','.join(expect)}, "
                       f"got {lines[0]!r}")
    rows = []
    prev_k = 0
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != 3:
            raise CliError(f"{path}:{lineno}: expected 3 columns, got {len(cells)}")
        try:
            k = int(cells[0])
            values = [float(cells[1]), float(cells[2])]
        except ValueError as exc:
            raise CliError(f"{path}:{lineno}: malformed row: {exc}") from exc
        if k <= prev_k:
            raise CliError(f"{path}:{lineno}: step k={k} not strictly increasing")
        if not linear and not (-np.pi < values[1] <= np.pi):
            raise CliError(f"{path}:{lineno}: azimuth {values[1]!r} outside (-pi, pi]")
        prev_k = k
        rows.append(values)
    if not rows:
        raise CliError(f"{path}: no measurement rows")
    return np.array(rows)


def cmd_track(args) -> int:
    scenario = _resolve_scenario(args.scenario)
    try:
        config = default_config(scenario, **_config_overrides(args))
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    meas = _read_measurements(args.input, scenario.measurement.is_linear)

    _, init_ss, filter_ss = run_seed_sequences(args.seed, args.run_index)
    x0_hat = np.random.default_rng(init_ss).multivariate_normal(
        scenario.x0, scenario.p0)
    rng = np.random.default_rng(filter_ss)

    model = scenario.measurement
    belief = initial_joint_belief(x0_hat, scenario.p0, config)
    rows = []
    try:
        for k in range(meas.shape[0]):
            pred = predict(belief, scenario.transition, config)
            if model.is_linear:
                result = update_linear(pred, meas[k], H_POSITION, config)
            else:
                result = update_nonlinear(pred, meas[k], model, config, rng)
            belief = result.belief
            state = belief.state
            rows.append((k + 1,
                         *(float(v) for v in state.mean),
                         *(float(v) for v in np.diag(state.covariance)),
                         result.iterations))
    except NotPositiveDefiniteError as exc:
        raise CliError(f"filter failed at step {len(rows) + 1}: {exc}") from exc

    out = Path(args.out)
    _write_csv(out, ["k", "x", "vx", "y", "vy",
                     "p_x", "p_vx", "p_y", "p_vy", "iterations"], rows)
    print(f"tracked {len(rows)} steps -> {out}")
    return 0


def _check_gradients(trials: int, rng: np.random.Generator) -> tuple[bool, float]:
    """Reparameterized gradients vs central finite differences of the
    sampled objective, on the range-azimuth model with frozen draws."""
    model = make_scenario("s3").measurement
    er = np.linalg.inv(model.nominal_r)
    worst = 0.0
    for _ in range(trials):
        x = np.array([5.0e5, -100.0, 5.0e5, -100.0]) + rng.normal(scale=1000.0, size=4)
        w = rng.normal(scale=0.3, size=(4, 4))
        p = np.diag([5.0e3, 100.0, 5.0e3, 100.0]) + w @ w.T
        L = cholesky_lower(p, "fuzzed covariance")
        y = measure(model, x) + rng.normal(size=2) * np.array([10.0, 1e-3])
        eps = whitened_draws(rng, 300, 4)
        gm, gc = sampled_gradients(model, y, x, L, er, eps)
        gc = symmetrize(gc)

        def objective(pm, xm):
            lm = cholesky_lower(pm, "perturbed covariance")
            resid = wrap_residual(model, y - measure(model, xm + eps @ lm.T))
            return float(np.mean(np.einsum("sm,mp,sp->s", resid, er, resid)))

        gm_scale = np.abs(gm).max()
        gc_scale = np.abs(np.diag(gc)).max()
        for i in range(4):
            t = 1e-6 * (1.0 + abs(x[i]))
            e = np.zeros(4)
            e[i] = t
            fd = (objective(p, x + e) - objective(p, x - e)) / (2 * t)
            worst = max(worst, abs(fd - gm[i]) / max(abs(fd), gm_scale))
            # larger step than the mean check: the objective passes through a
            # Cholesky whose rounding noise dominates below ~1e-6 relative
            tp = 1e-5 * (1.0 + p[i, i])
            dp = np.zeros((4, 4))
            dp[i, i] = tp
            fd = (objective(p + dp, x) - objective(p - dp, x)) / (2 * tp)
            worst = max(worst, abs(fd - gc[i, i]) / max(abs(fd), gc_scale))
    return worst < 1e-5, worst


def _check_pd(trials: int, rng: np.random.Generator) -> tuple[bool, int]:
    """Compensated mirror steps on fuzzed SPD precisions and symmetric
    (including indefinite) targets must stay SPD."""
    failures = 0
    for _ in range(trials):
        n = int(rng.integers(2, 6))
        w = rng.normal(size=(n, n))
        prec = w @ w.T + 1e-3 * np.eye(n)
        cov = np.linalg.inv(prec)
        t = rng.normal(scale=float(rng.uniform(0.1, 10.0)), size=(n, n))
        target = symmetrize(t + t.T)
        beta = float(rng.uniform(1e-3, 1.0))
        stepped = compensated_precision_step(prec, cov, target, beta)
        try:
            cholesky_lower(stepped, "stepped precision")
        except NotPositiveDefiniteError:
            failures += 1
    return failures == 0, failures


def cmd_selfcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    grad_trials = max(1, args.trials // 20)
    ok_g, worst = _check_gradients(grad_trials, rng)
    print(f"gradient-vs-finite-difference ({grad_trials} states): "
          f"{'PASS' if ok_g else 'FAIL'} (worst relative error {worst:.2e})")
    ok_p, failures = _check_pd(args.trials, rng)
    print(f"positive-definite preservation ({args.trials} steps): "
          f"{'PASS' if ok_p else 'FAIL'} ({failures} failures)")
    return 0 if ok_g and ok_p else DOMAIN_ERROR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cviakf",
        description="Adaptive Kalman filtering benchmarks and self-checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--samples", type=int, help="Monte Carlo sample count S")
        p.add_argument("--learning-rate", type=float, dest="learning_rate")
        p.add_argument("--max-iters", type=int, dest="max_iters")

    sim = sub.add_parser("simulate", help="run a scenario campaign")
    sim.add_argument("--scenario", required=True, help="s1|s2|s3|s4")
    sim.add_argument("--runs", type=int, default=100)
    sim.add_argument("--seed", type=int, default=42)
    sim.add_argument("--methods", default=",".join(METHODS))
    sim.add_argument("--out", default=".")
    add_config_flags(sim)
    sim.set_defaults(func=cmd_simulate)

    trk = sub.add_parser("track", help="filter a measurement CSV")
    trk.add_argument("--input", required=True, help="measurement CSV path")
    trk.add_argument("--scenario", required=True,
                     help="scenario id supplying model and tuning presets")
    trk.add_argument("--seed", type=int, default=42)
    trk.add_argument("--run-index", type=int, default=0, dest="run_index",
                     help="Monte Carlo run index for seed derivation")
    trk.add_argument("--out", default="track.csv")
    add_config_flags(trk)
    trk.set_defaults(func=cmd_track)

    chk = sub.add_parser("selfcheck", help="run invariant fuzz suites")
    chk.add_argument("--trials", type=int, default=1000)
    chk.add_argument("--seed", type=int, default=0)
    chk.set_defaults(func=cmd_selfcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DOMAIN_ERROR


if __name__ == "__main__":
    sys.exit(main())
