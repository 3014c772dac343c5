"""Benchmark command line.

Subcommands reproduce the experiment protocol end to end: `simulate` writes
a dataset, `filter-study` replicates likelihood estimators over a fixed
dataset and tabulates bias/variance against a large-N reference,
`pmcmc` runs the adaptive Metropolis-Hastings sampler with a plug-in filter
and writes chain plus diagnostics, and `figure-data` emits plot-ready CSV
grids (the bimodal disturbance-posterior scene, the asset-data overlay, and
the chain scatter of implied discount factors).

All randomness flows from a single --seed expanded into named sub-streams,
so outputs are byte-identical across runs with the same flags.  Exit codes:
0 success, 2 configuration error, 3 degenerate reference run, 4 invalid
chain initialisation.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys

import numpy as np
from scipy import stats as sp_stats

from . import __version__
from .core import RandomStream
from .errors import AdpfError, InitInvalid, OptimFailed
from .models import MODEL_NAMES, build_model
from .models.habit import ASSET_DATA_HEADER, load_asset_data
from .pmcmc import (FILTER_CODES, FILTER_NAMES, AdaptConfig, adaptive_rwmh,
                    chain_inefficiencies, computing_time, default_prior,
                    kalman_ml_init, make_pmmh_target, posterior_mean_mcse,
                    prior_spec_from_dict, run_filter)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEGENERATE = 3
EXIT_INIT = 4

# grid for the bimodal disturbance scene; the step is fine enough to localise
# the two stationary points of the measurement fit to well under 0.02
BIMODAL_GRID = (-4.0, 2.0, 0.01)
BIMODAL_THETA = {"phi": 0.6, "sigma_u": 1.0, "sigma_eps": 0.2, "delta": 0.5}
BIMODAL_OBSERVATION = 0.5
SCENES = ("bimodal", "asset-data-overlay", "chain-scatter")


class CliError(Exception):
    """Configuration or data problem; carries the process exit code."""

    def __init__(self, message: str, exit_code: int = EXIT_CONFIG):
        super().__init__(message)
        self.exit_code = exit_code


# ---------------------------------------------------------------------------
# formatting and file helpers

def _fmt(value) -> str:
    """Shortest round-trip decimal text (deterministic across runs)."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _json_safe(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.ndarray):
        return [_json_safe(v) for v in value.tolist()]
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def _write_meta(path: str, payload: dict) -> None:
    payload = dict(payload)
    payload["package_version"] = __version__
    with open(path, "w") as handle:
        json.dump(_json_safe(payload), handle, indent=2, sort_keys=True)
        handle.write("\n")


def _ensure_out_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _theta_to_dict(theta) -> dict:
    return dataclasses.asdict(theta)


def _parse_theta(model, argument: str | None):
    """Parameter point from inline JSON, a JSON file, or model defaults."""
    if argument is None:
        return model.default_theta()
    text = argument.strip()
    if not text.startswith("{"):
        try:
            with open(argument) as handle:
                text = handle.read()
        except OSError as exc:
            raise CliError(f"cannot read theta file {argument!r}: {exc}")
    try:
        values = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"bad theta JSON: {exc}")
    if not isinstance(values, dict):
        raise CliError("theta JSON must be an object of parameter values")
    try:
        return model.theta_from_dict(values)
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid theta: {exc}")


def _build_model(args) -> object:
    try:
        return build_model(args.model, fixture_path=getattr(args, "fixture", None))
    except (ValueError, OSError, AdpfError) as exc:
        raise CliError(f"cannot build model {args.model!r}: {exc}")


def _load_observations(model, path: str) -> np.ndarray:
    """Observation matrix from a simulate-format or asset-format CSV."""
    try:
        with open(path, newline="") as handle:
            first = handle.readline()
    except OSError as exc:
        raise CliError(f"cannot read data file {path!r}: {exc}")
    header = tuple(cell.strip() for cell in first.strip().split(","))
    if header[:1] == ("date",):
        if header != ASSET_DATA_HEADER:
            raise CliError(f"unrecognised data header in {path!r}")
        if tuple(model.obs_names) != ("dlog_c", "dlog_pd"):
            raise CliError("dated asset data only feeds the habit model")
        try:
            _, observations = load_asset_data(path)
        except ValueError as exc:
            raise CliError(str(exc))
        return observations
    missing = [name for name in model.obs_names if name not in header]
    if missing:
        raise CliError(f"data file {path!r} lacks columns {missing}")
    rows = []
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        for lineno, record in enumerate(reader, start=2):
            try:
                rows.append([float(record[name]) for name in model.obs_names])
            except (TypeError, ValueError, KeyError) as exc:
                raise CliError(f"{path}:{lineno}: bad observation row ({exc})")
    observations = np.asarray(rows, dtype=float)
    if observations.size == 0:
        observations = observations.reshape(0, len(model.obs_names))
    return observations


def _parse_particle_grid(text: str) -> tuple[int, ...]:
    try:
        grid = tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise CliError(f"bad particle grid {text!r}; use e.g. 100,500")
    if not grid or any(n < 1 for n in grid):
        raise CliError("particle grid must list positive counts")
    return grid


def _load_prior(args):
    if getattr(args, "prior", None):
        try:
            with open(args.prior) as handle:
                payload = json.load(handle)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read prior file {args.prior!r}: {exc}")
        try:
            return prior_spec_from_dict(payload)
        except ValueError as exc:
            raise CliError(f"bad prior file: {exc}")
    try:
        return default_prior(args.model)
    except ValueError as exc:
        raise CliError(str(exc))


# ---------------------------------------------------------------------------
# simulate

def cmd_simulate(args) -> int:
    model = _build_model(args)
    theta = _parse_theta(model, args.theta)
    if args.horizon < 0:
        raise CliError("--horizon must be non-negative")
    out_dir = _ensure_out_dir(args.out_dir)
    stream = RandomStream(args.seed).child("dataset")
    path = model.simulate(theta, args.horizon, stream)

    names = list(path.columns)
    data_path = os.path.join(out_dir, f"{args.model}_data.csv")
    rows = ([t + 1] + [path.columns[name][t] for name in names]
            for t in range(args.horizon))
    _write_csv(data_path, ["t"] + names, rows)
    _write_meta(os.path.join(out_dir, f"{args.model}_data_meta.json"), {
        "command": "simulate",
        "model": args.model,
        "horizon": args.horizon,
        "seed": args.seed,
        "theta": _theta_to_dict(theta),
        "observation_columns": list(model.obs_names),
        "latent_columns": [n for n in names if n not in model.obs_names],
    })
    print(f"wrote {data_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# filter replication study

def run_study(model, theta, observations, filters, particle_grid, reps,
              stream: RandomStream, reference_particles: int,
              collect_traces: bool = False):
    """Replicate each (filter, N) on a fixed dataset against a reference.

    The reference log-likelihood is a single standard-filter run at
    `reference_particles`; its stream child is (0, N_ref, 0), so a study row
    using the same filter, count, and replication index reproduces it
    exactly.  Returns (reference_estimate, rows, traces) where each row is a
    dict of summary statistics.
    """
    reference = run_filter(model, theta, observations, "sir",
                           reference_particles,
                           stream.child(FILTER_CODES["sir"],
                                        reference_particles, 0))
    rows = []
    traces = {}
    for filter_name in filters:
        for n_particles in particle_grid:
            logliks = np.empty(reps)
            tally = 0
            for rep in range(reps):
                child = stream.child(FILTER_CODES[filter_name], n_particles, rep)
                want_trace = collect_traces and rep == 0
                result = run_filter(model, theta, observations, filter_name,
                                    n_particles, child, return_trace=want_trace)
                estimate, trace = result if want_trace else (result, None)
                logliks[rep] = estimate.total_log_likelihood
                tally += estimate.eval_tally
                if trace is not None:
                    traces[(filter_name, n_particles)] = trace
            finite = logliks[np.isfinite(logliks)]
            n_fin = finite.size
            T = len(observations)
            k = (tally / (n_particles * T * reps)
                 if filter_name != "kalman" and T > 0 else float("nan"))
            if n_fin >= 2:
                variance = float(finite.var(ddof=1))
                df = n_fin - 1
                ci_low = df * variance / float(sp_stats.chi2.ppf(0.975, df))
                ci_high = df * variance / float(sp_stats.chi2.ppf(0.025, df))
                q25, q50, q75 = np.percentile(finite, [25.0, 50.0, 75.0])
                row_stats = {
                    "median_loglik": float(q50),
                    "iqr_loglik": float(q75 - q25),
                    "mean_loglik": float(finite.mean()),
                    "std_loglik": math.sqrt(variance),
                    "var_loglik": variance,
                    "var_ci_low": ci_low,
                    "var_ci_high": ci_high,
                    "bias_vs_reference": float(finite.mean()
                                               - reference.total_log_likelihood),
                }
            elif n_fin == 1:
                row_stats = {
                    "median_loglik": float(finite[0]),
                    "iqr_loglik": 0.0,
                    "mean_loglik": float(finite[0]),
                    "std_loglik": float("nan"),
                    "var_loglik": float("nan"),
                    "var_ci_low": float("nan"),
                    "var_ci_high": float("nan"),
                    "bias_vs_reference": float(finite[0]
                                               - reference.total_log_likelihood),
                }
            else:
                row_stats = {key: float("nan") for key in (
                    "median_loglik", "iqr_loglik", "mean_loglik", "std_loglik",
                    "var_loglik", "var_ci_low", "var_ci_high",
                    "bias_vs_reference")}
            rows.append({
                "filter": filter_name,
                "n_particles": n_particles,
                "reps": reps,
                "degenerate_reps": reps - n_fin,
                **row_stats,
                "measured_k": k,
            })
    return reference, rows, traces


STUDY_COLUMNS = ("filter", "n_particles", "reps", "degenerate_reps",
                 "median_loglik", "iqr_loglik", "mean_loglik", "std_loglik",
                 "var_loglik", "var_ci_low", "var_ci_high",
                 "bias_vs_reference", "measured_k")


def cmd_filter_study(args) -> int:
    model = _build_model(args)
    theta = _parse_theta(model, args.theta)
    observations = _load_observations(model, args.data)
    if len(observations) == 0:
        raise CliError("data file has no observation rows")
    filters = args.filter or ["sir", "adpf"]
    bad = [f for f in filters if f not in FILTER_NAMES]
    if bad:
        raise CliError(f"unknown filters {bad}; choose from {FILTER_NAMES}")
    grid = _parse_particle_grid(args.particles)
    if args.reps < 2:
        raise CliError("--reps must be at least 2")
    if args.reference_particles < 1:
        raise CliError("--reference-particles must be positive")
    if "kalman" in filters and getattr(model, "linear_reduction", None) is None:
        raise CliError("kalman rows need a model with a linear reduction")

    out_dir = _ensure_out_dir(args.out_dir)
    stream = RandomStream(args.seed)
    try:
        reference, rows, traces = run_study(
            model, theta, observations, filters, grid, args.reps, stream,
            args.reference_particles, collect_traces=args.trace)
    except AdpfError as exc:
        raise CliError(f"study failed: {exc}", EXIT_DEGENERATE)
    if reference.degenerate:
        raise CliError("reference filter run degenerated (all weights zero); "
                       "increase --reference-particles", EXIT_DEGENERATE)

    study_path = os.path.join(out_dir, f"{args.model}_filter_study.csv")
    _write_csv(study_path, STUDY_COLUMNS,
               ([row[col] for col in STUDY_COLUMNS] for row in rows))
    if args.trace:
        for (filter_name, n_particles), trace in sorted(traces.items()):
            trace_path = os.path.join(
                out_dir, f"{args.model}_trace_{filter_name}_{n_particles}.csv")
            entropy = trace.first_stage_entropy
            trace_rows = []
            for t in range(len(trace.ess)):
                ent = entropy[t] if entropy is not None and t < len(entropy) \
                    else float("nan")
                trace_rows.append([t + 1, trace.ess[t], ent])
            _write_csv(trace_path, ["t", "ess", "first_stage_entropy"],
                       trace_rows)
    _write_meta(os.path.join(out_dir, f"{args.model}_filter_study_meta.json"), {
        "command": "filter-study",
        "model": args.model,
        "seed": args.seed,
        "data": os.path.basename(args.data),
        "theta": _theta_to_dict(theta),
        "filters": list(filters),
        "particle_grid": list(grid),
        "reps": args.reps,
        "reference": {
            "filter": "sir",
            "n_particles": args.reference_particles,
            "log_likelihood": reference.total_log_likelihood,
        },
        "columns": list(STUDY_COLUMNS),
    })
    print(f"wrote {study_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# posterior sampling

def _initial_point(args, model, prior, observations, stream, base_theta):
    mode = args.init
    if mode == "auto":
        mode = ("kalman" if getattr(model, "linear_reduction", None) is not None
                else "default")
    if mode == "kalman":
        try:
            return kalman_ml_init(model, prior, observations,
                                  stream.child("init"), base_theta=base_theta)
        except OptimFailed as exc:
            raise CliError(f"initialisation failed: {exc}", EXIT_INIT)
        except (ValueError, AdpfError) as exc:
            raise CliError(f"initialisation failed: {exc}", EXIT_INIT)
    if mode == "prior-mean":
        return prior.mean()
    if mode == "default":
        return np.array([getattr(base_theta, name) for name in prior.names],
                        dtype=float)
    raise CliError(f"unknown init mode {mode!r}")


def cmd_pmcmc(args) -> int:
    model = _build_model(args)
    base_theta = _parse_theta(model, args.theta)
    observations = _load_observations(model, args.data)
    if len(observations) == 0:
        raise CliError("data file has no observation rows")
    prior = _load_prior(args)
    unknown = [n for n in prior.names if n not in model.theta_names]
    if unknown:
        raise CliError(f"prior names {unknown} not parameters of {args.model}")
    filter_name = args.filter
    if filter_name == "kalman":
        n_particles = 0
        if getattr(model, "linear_reduction", None) is None:
            raise CliError("kalman sampling needs a model with a linear "
                           "reduction")
    else:
        if args.particles is None or args.particles < 1:
            raise CliError("--particles is required for particle filters")
        n_particles = args.particles
    if args.draws < 2:
        raise CliError("--draws must be at least 2")
    burn_in = args.burn_in
    if burn_in < 0:
        raise CliError("--burn-in must be non-negative")
    if args.draws - burn_in < 10:
        burn_in = max(0, args.draws // 5)
        print(f"note: shrinking burn-in to {burn_in} to keep diagnostics "
              "feasible", file=sys.stderr)

    out_dir = _ensure_out_dir(args.out_dir)
    stream = RandomStream(args.seed)
    init = _initial_point(args, model, prior, observations, stream, base_theta)
    target = make_pmmh_target(model, prior, observations, filter_name,
                              n_particles, stream.child("filter"),
                              base_theta=base_theta)
    # pre-adaptation proposal steps sized from the prior, not the init point
    adapt_cfg = AdaptConfig(initial_step_sd=tuple(0.1 * prior.sd()))
    try:
        record = adaptive_rwmh(target, init, args.draws, stream.child("chain"),
                               adapt_cfg=adapt_cfg, param_names=prior.names)
    except InitInvalid as exc:
        raise CliError(f"chain initialisation invalid: {exc}", EXIT_INIT)
    record.eval_tally_total = target.eval_tally_total

    # repeated likelihood estimates at the initial point
    loglik_samples = []
    if filter_name != "kalman" and args.loglik_reps > 0:
        theta_init = target.theta_for(init)
        for rep in range(args.loglik_reps):
            est = run_filter(model, theta_init, observations, filter_name,
                             n_particles, stream.child("loglik-var", rep))
            loglik_samples.append(est.total_log_likelihood)
    finite_samples = [v for v in loglik_samples if math.isfinite(v)]
    loglik_variance = (float(np.var(finite_samples, ddof=1))
                       if len(finite_samples) >= 2 else float("nan"))

    prefix = f"{args.model}_{filter_name}" + (
        str(n_particles) if filter_name != "kalman" else "")
    chain_path = os.path.join(out_dir, f"{prefix}_chain.csv")
    _write_csv(chain_path,
               ["draw_index", *prior.names, "log_posterior", "accepted"],
               ([i, *record.draws[i], record.log_posteriors[i],
                 record.accepted[i]] for i in range(record.n_draws)))

    inefficiencies = chain_inefficiencies(record, burn_in=burn_in)
    means, mcses = posterior_mean_mcse(record, burn_in=burn_in)
    kept = record.draws[burn_in:]
    measured_k = target.measured_k()
    diag_rows = []
    for j, name in enumerate(prior.names):
        factor = inefficiencies[name]
        if filter_name != "kalman" and math.isfinite(measured_k) and factor > 0:
            ct = computing_time(measured_k, n_particles, factor)
        else:
            ct = float("nan")
        diag_rows.append([name, means[j], float(kept[:, j].std(ddof=1)),
                          mcses[j], factor, ct])
    diag_path = os.path.join(out_dir, f"{prefix}_diagnostics.csv")
    _write_csv(diag_path,
               ["parameter", "posterior_mean", "posterior_sd", "mcse",
                "inefficiency", "computing_time"],
               diag_rows)
    if args.trace and loglik_samples:
        _write_csv(os.path.join(out_dir, f"{prefix}_loglik_trace.csv"),
                   ["rep", "loglik"],
                   ([i, v] for i, v in enumerate(loglik_samples)))

    _write_meta(os.path.join(out_dir, f"{prefix}_meta.json"), {
        "command": "pmcmc",
        "model": args.model,
        "filter": filter_name,
        "n_particles": n_particles,
        "draws": args.draws,
        "burn_in": burn_in,
        "seed": args.seed,
        "data": os.path.basename(args.data),
        "prior": prior.to_dict(),
        "base_theta": _theta_to_dict(base_theta),
        "init": list(init),
        "acceptance_rate": record.acceptance_rate,
        "eval_tally_total": target.eval_tally_total,
        "filter_runs": target.filter_runs,
        "measured_k": measured_k,
        "loglik_reps_at_init": len(loglik_samples),
        "loglik_variance_at_init": loglik_variance,
    })
    print(f"wrote {chain_path}")
    print(f"wrote {diag_path}")
    print(f"acceptance rate {record.acceptance_rate:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# figure data

def bimodal_scene_points() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Grids (u, x(u), log fit) for the two-mode disturbance illustration.

    x(u) follows the quadratic state step from x_prev = 0; the log fit is
    the unnormalised measurement log-density of the fixed observation at
    x(u).  With observation noise this small the two maximisers sit at the
    roots of x(u) = y, which is why the scene doubles as an exactness check.
    """
    lo, hi, step = BIMODAL_GRID
    n_points = int(round((hi - lo) / step)) + 1
    u = lo + step * np.arange(n_points)
    theta = BIMODAL_THETA
    x = theta["phi"] * 0.0 + theta["sigma_u"] * (u + theta["delta"] * u * u)
    residual = (BIMODAL_OBSERVATION - x) / theta["sigma_eps"]
    log_fit = -0.5 * residual * residual
    return u, x, log_fit


def cmd_figure_data(args) -> int:
    out_dir = _ensure_out_dir(args.out_dir)
    if args.scene == "bimodal":
        u, x, log_fit = bimodal_scene_points()
        path = os.path.join(out_dir, "figure_bimodal.csv")
        _write_csv(path, ["u", "x", "log_measurement_fit"],
                   (row for row in zip(u, x, log_fit)))
        _write_meta(os.path.join(out_dir, "figure_bimodal_meta.json"), {
            "command": "figure-data",
            "scene": "bimodal",
            "theta": BIMODAL_THETA,
            "observation": BIMODAL_OBSERVATION,
            "x_prev": 0.0,
            "grid": {"low": BIMODAL_GRID[0], "high": BIMODAL_GRID[1],
                     "step": BIMODAL_GRID[2]},
        })
        print(f"wrote {path}")
        return EXIT_OK
    if args.scene == "asset-data-overlay":
        if not args.data:
            raise CliError("--data is required for the asset-data-overlay "
                           "scene")
        try:
            dates, observations = load_asset_data(args.data)
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot read asset data: {exc}")
        path = os.path.join(out_dir, "figure_asset_data.csv")
        _write_csv(path, ["date", "dlog_pd", "dlog_c"],
                   ([dates[t], observations[t, 1], observations[t, 0]]
                    for t in range(len(dates))))
        _write_meta(os.path.join(out_dir, "figure_asset_data_meta.json"), {
            "command": "figure-data",
            "scene": "asset-data-overlay",
            "data": os.path.basename(args.data),
            "rows": len(dates),
        })
        print(f"wrote {path}")
        return EXIT_OK
    if args.scene == "chain-scatter":
        if not args.chain:
            raise CliError("--chain is required for the chain-scatter scene")
        needed = ("gamma", "g", "r_f", "phi")
        try:
            with open(args.chain, newline="") as handle:
                reader = csv.DictReader(handle)
                missing = [n for n in needed
                           if n not in (reader.fieldnames or [])]
                if missing:
                    raise CliError(
                        f"chain file lacks columns {missing}; the scatter "
                        "scene needs a habit-model chain")
                chain_rows = [[float(rec[name]) for name in needed]
                              for rec in reader]
        except OSError as exc:
            raise CliError(f"cannot read chain file: {exc}")
        except ValueError as exc:
            raise CliError(f"bad chain file: {exc}")
        if not chain_rows:
            raise CliError("chain file has no draws")
        values = np.asarray(chain_rows, dtype=float)
        if args.burn_in >= len(values):
            raise CliError("--burn-in leaves no chain draws")
        values = values[args.burn_in:]
        rng = RandomStream(args.seed).child("scatter").generator()
        count = args.count
        replace = len(values) < count
        idx = rng.choice(len(values), size=count, replace=replace)
        picked = values[idx]
        gamma, g, r_f, phi = picked.T
        beta_bar = np.exp(-r_f + gamma * g - gamma * (1.0 - phi) / 2.0)
        path = os.path.join(out_dir, "figure_chain_scatter.csv")
        _write_csv(path, ["beta_bar", "phi"],
                   (row for row in zip(beta_bar, phi)))
        _write_meta(os.path.join(out_dir, "figure_chain_scatter_meta.json"), {
            "command": "figure-data",
            "scene": "chain-scatter",
            "chain": os.path.basename(args.chain),
            "count": count,
            "with_replacement": bool(replace),
            "burn_in": args.burn_in,
            "seed": args.seed,
        })
        print(f"wrote {path}")
        return EXIT_OK
    raise CliError(f"unknown scene {args.scene!r}; choose from {SCENES}")


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adpf-bench",
        description="Benchmarks for the disturbance-proposal particle filter "
                    "library: simulate datasets, replicate likelihood "
                    "estimators, sample posteriors, and emit figure data.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, model_required=True):
        p.add_argument("--model", choices=MODEL_NAMES, required=model_required,
                       help="model identifier")
        p.add_argument("--seed", type=int, default=0,
                       help="root seed for all randomness (default 0)")
        p.add_argument("--out-dir", default=".",
                       help="directory for output files (default .)")
        p.add_argument("--fixture", default=None,
                       help="growth-model coefficient fixture path")
        p.add_argument("--theta", default=None,
                       help="parameter point as inline JSON or a JSON file")

    p_sim = sub.add_parser("simulate", help="simulate a dataset to CSV")
    add_common(p_sim)
    p_sim.add_argument("--horizon", type=int, default=50,
                       help="number of observations (default 50)")
    p_sim.set_defaults(func=cmd_simulate)

    p_study = sub.add_parser("filter-study",
                             help="replicate likelihood estimators on a "
                                  "fixed dataset")
    add_common(p_study)
    p_study.add_argument("--data", required=True, help="dataset CSV")
    p_study.add_argument("--filter", action="append", choices=FILTER_NAMES,
                         help="filter to study (repeatable; default sir and "
                              "adpf)")
    p_study.add_argument("--particles", required=True,
                         help="comma-separated particle counts, e.g. 100,500")
    p_study.add_argument("--reps", type=int, default=1000,
                         help="replications per (filter, N) (default 1000)")
    p_study.add_argument("--reference-particles", type=int, default=1_000_000,
                         help="particle count for the reference run "
                              "(default 1000000)")
    p_study.add_argument("--trace", action="store_true",
                         help="write per-step ESS traces for replication 0")
    p_study.set_defaults(func=cmd_filter_study)

    p_mcmc = sub.add_parser("pmcmc", help="adaptive Metropolis-Hastings with "
                                          "a plug-in likelihood")
    add_common(p_mcmc)
    p_mcmc.add_argument("--data", required=True, help="dataset CSV")
    p_mcmc.add_argument("--filter", choices=FILTER_NAMES, default="adpf",
                        help="likelihood plug-in (default adpf)")
    p_mcmc.add_argument("--particles", type=int, default=None,
                        help="particle count (ignored for kalman)")
    p_mcmc.add_argument("--draws", type=int, required=True,
                        help="number of chain draws")
    p_mcmc.add_argument("--prior", default=None,
                        help="prior spec JSON file (default: bundled prior)")
    p_mcmc.add_argument("--burn-in", type=int, default=1000,
                        help="draws discarded before diagnostics "
                             "(default 1000)")
    p_mcmc.add_argument("--loglik-reps", type=int, default=75,
                        help="repeated likelihood estimates at the initial "
                             "point (default 75)")
    p_mcmc.add_argument("--init",
                        choices=("auto", "kalman", "prior-mean", "default"),
                        default="auto",
                        help="chain initialisation (default auto: Kalman "
                             "posterior mode when a linear reduction exists)")
    p_mcmc.add_argument("--trace", action="store_true",
                        help="write the repeated likelihood estimates to CSV")
    p_mcmc.set_defaults(func=cmd_pmcmc)

    p_fig = sub.add_parser("figure-data", help="emit plot-ready CSV grids")
    p_fig.add_argument("--scene", choices=SCENES, required=True)
    p_fig.add_argument("--seed", type=int, default=0)
    p_fig.add_argument("--out-dir", default=".")
    p_fig.add_argument("--data", default=None,
                       help="asset data CSV (asset-data-overlay)")
    p_fig.add_argument("--chain", default=None,
                       help="chain CSV (chain-scatter)")
    p_fig.add_argument("--count", type=int, default=1500,
                       help="scatter sample size (default 1500)")
    p_fig.add_argument("--burn-in", type=int, default=0,
                       help="chain draws to discard before scattering")
    p_fig.set_defaults(func=cmd_figure_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except InitInvalid as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INIT
    except AdpfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
