"""Command-line interface: config-driven inference runs and analysis tables.

Subcommands
-----------
simulate
    Draw one synthetic dataset at a fixed parameter and write the
    problem's CSV files (toy: ``X.csv`` + ``W.csv``; mlba: ``rt_ch.csv``
    + ``attributes.csv``), printing summary statistics.
run
    Execute a full inference run from a config file and write the run
    directory (``run.json``, ``training.csv``, ``acquisitions.csv``).
posterior
    Sample one likelihood mode of a completed run and write
    ``posterior_<mode>.csv`` plus a diagnostics JSON.
loglik
    Evaluate a completed run's approximate log-likelihood at parameter
    rows read from a CSV.
oracle
    Exact references: closed-form log-likelihood rows for a parameter
    grid, the toy problem's conjugate posterior parameters, or an
    ensemble-MCMC sample of the exact mlba posterior.
scale
    Print the discrepancy scaling factors (median absolute deviations)
    a run with the given config would use.

Config format
-------------
A single INI-style file with sections ``[run]``, ``[sampler]``,
``[toy]``, ``[mlba]``.  Unknown sections or keys are rejected.  All
paths inside the file resolve relative to the file's own directory.

Exit codes
----------
0 success; 1 bad config or arguments; 2 I/O failure (missing files,
refused overwrite); 3 engine/simulation failure; 4 run directory not
complete; 5 capability not available (mode or oracle not defined).

Determinism: every command writes byte-identical primary outputs given
the same config and seed.  ``--threads`` caps the numerical thread
pools; it must be set before the numerical libraries are first loaded,
so it only takes effect for a fresh process.
"""
from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from pathlib import Path

from .exceptions import ContractError, EngineError, FitError, SimulatorError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_ENGINE = 3
EXIT_INCOMPLETE = 4
EXIT_CAPABILITY = 5

_FLOAT_FMT = "%.17g"


class _CliError(Exception):
    """Failure with a designated exit code; message goes to stderr."""

    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    """Argument errors map to the config exit code instead of SystemExit."""

    def error(self, message):
        raise _CliError(EXIT_CONFIG, message)


# -- config file -------------------------------------------------------------

_RUN_KEYS = {
    "problem", "mode", "n_init", "n_acquisitions", "variant", "q_tolerance",
    "scaling", "n_pilot", "filter_quantile", "rt_variance_ratio", "n_sigma",
    "acq_restarts", "acq_candidates", "mc_samples", "eps_eta", "eta_variant",
    "gp_restarts", "gp_refit_restarts", "seed", "data", "out",
}
_SAMPLER_KEYS = {"sampler", "chains", "steps", "burn_in", "scale"}
_TOY_KEYS = {"dim", "theta_true", "n_gaussian", "n_path"}
_MLBA_KEYS = {"theta_true", "attributes", "n_obs", "attributes_seed"}
_SECTIONS = {
    "run": _RUN_KEYS,
    "sampler": _SAMPLER_KEYS,
    "toy": _TOY_KEYS,
    "mlba": _MLBA_KEYS,
}

_INT_KEYS = {
    ("run", "n_init"), ("run", "n_acquisitions"), ("run", "acq_restarts"),
    ("run", "acq_candidates"), ("run", "mc_samples"), ("run", "gp_restarts"),
    ("run", "gp_refit_restarts"), ("run", "seed"),
    ("sampler", "chains"), ("sampler", "steps"), ("sampler", "burn_in"),
    ("toy", "dim"), ("toy", "n_gaussian"), ("toy", "n_path"),
    ("mlba", "n_obs"), ("mlba", "attributes_seed"),
}
_FLOAT_KEYS = {("run", "eps_eta"), ("sampler", "scale")}
_FLOATS_KEYS = {("toy", "theta_true"), ("mlba", "theta_true")}
_PATH_KEYS = {("run", "data"), ("run", "out")}
# [run] keys that accept "auto"/"none" sentinels or a number
_OPTIONAL_NUMERIC = {
    "n_pilot": int, "filter_quantile": float, "rt_variance_ratio": float,
    "n_sigma": int,
}


def _parse_floats(text):
    return tuple(float(tok) for tok in text.replace(",", " ").split())


def load_config(path):
    """Parse and validate a config file into ``{section: {key: value}}``.

    Values are type-converted; path values are resolved relative to the
    config file's directory.  Unknown sections or keys raise.
    """
    path = Path(path)
    if not path.is_file():
        raise _CliError(EXIT_IO, f"config file not found: {path}")
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise _CliError(EXIT_IO, f"cannot read config file: {exc}") from exc
    except configparser.Error as exc:
        raise _CliError(EXIT_CONFIG, f"config parse error: {exc}") from exc
    if cp.defaults():
        raise _CliError(EXIT_CONFIG, "config does not allow a [DEFAULT] section")

    base = path.parent
    out = {}
    for section in cp.sections():
        if section not in _SECTIONS:
            raise _CliError(
                EXIT_CONFIG,
                f"unknown config section [{section}] "
                f"(expected one of: {', '.join(sorted(_SECTIONS))})",
            )
        allowed = _SECTIONS[section]
        out[section] = {}
        for key, value in cp.items(section):
            if key not in allowed:
                raise _CliError(
                    EXIT_CONFIG,
                    f"unknown key '{key}' in section [{section}] "
                    f"(allowed: {', '.join(sorted(allowed))})",
                )
            out[section][key] = _convert(section, key, value.strip(), base)
    return out


def _convert(section, key, value, base):
    where = f"[{section}] {key}"
    try:
        if (section, key) in _INT_KEYS:
            return int(value)
        if (section, key) in _FLOAT_KEYS:
            return float(value)
        if (section, key) in _FLOATS_KEYS:
            floats = _parse_floats(value)
            if not floats:
                raise ValueError("empty value")
            return floats
        if (section, key) in _PATH_KEYS:
            return base / value
        if section == "run" and key in _OPTIONAL_NUMERIC:
            low = value.lower()
            if low == "auto":
                return "auto"
            if low == "none":
                return None
            return _OPTIONAL_NUMERIC[key](value)
        if section == "run" and key == "q_tolerance":
            if value.lower() == "auto":
                return "auto"
            floats = _parse_floats(value)
            return floats[0] if len(floats) == 1 else floats
        if section == "run" and key == "scaling":
            if value.lower() == "auto_mad":
                return "auto_mad"
            return _parse_floats(value)
        if section == "mlba" and key == "attributes":
            if value.lower() == "reference":
                return "reference"
            return base / value
        return value
    except ValueError as exc:
        raise _CliError(EXIT_CONFIG, f"{where}: cannot parse '{value}' ({exc})") from exc


def _require(config, section, key, hint):
    try:
        return config[section][key]
    except KeyError:
        raise _CliError(EXIT_CONFIG, f"config needs [{section}] {key} ({hint})") from None


def _resolved_seed(config, args):
    if getattr(args, "seed", None) is not None:
        return args.seed
    return config.get("run", {}).get("seed", 0)


def _build_run_config(config, seed):
    """Assemble the engine's run configuration from parsed sections."""
    from .engine import RunConfig

    run = dict(config.get("run", {}))
    run.pop("data", None)
    run.pop("out", None)
    run["seed"] = seed
    for src, dst in (("sampler", "sampler"), ("chains", "sampler_chains"),
                     ("steps", "sampler_steps"), ("burn_in", "sampler_burn_in"),
                     ("scale", "sampler_scale")):
        if src in config.get("sampler", {}):
            run[dst] = config["sampler"][src]
    if "dim" in config.get("toy", {}):
        run["toy_dim"] = config["toy"]["dim"]
    for required in ("problem", "mode", "n_init", "n_acquisitions"):
        if required not in run:
            raise _CliError(
                EXIT_CONFIG, f"config needs [run] {required} to define a run"
            )
    return RunConfig(**run)


# -- dataset files -----------------------------------------------------------


def _write_matrix_csv(path, matrix, header, force):
    import numpy as np

    if path.exists() and not force:
        raise _CliError(EXIT_IO, f"refusing to overwrite {path} (pass --force)")
    np.savetxt(path, np.atleast_2d(matrix), delimiter=",", header=header,
               comments="", fmt=_FLOAT_FMT)


def _read_matrix_csv(path, what):
    import numpy as np

    if not Path(path).is_file():
        raise _CliError(EXIT_IO, f"{what} file not found: {path}")
    try:
        body = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise _CliError(EXIT_IO, f"cannot parse {what} file {path}: {exc}") from exc
    if body.size == 0:
        raise _CliError(EXIT_IO, f"{what} file {path} has no data rows")
    return body


def _write_toy_dataset(out_dir, data, force):
    d = data.gaussian.shape[1]
    x_path, w_path = out_dir / "X.csv", out_dir / "W.csv"
    _write_matrix_csv(x_path, data.gaussian,
                      ",".join(f"x_{j + 1}" for j in range(d)), force)
    _write_matrix_csv(w_path, data.path,
                      ",".join(f"w_{j + 1}" for j in range(d)), force)
    return [x_path, w_path]


def _read_toy_dataset(data_dir):
    from .simulators import ToyData

    gaussian = _read_matrix_csv(Path(data_dir) / "X.csv", "toy first-block")
    path = _read_matrix_csv(Path(data_dir) / "W.csv", "toy second-block")
    if gaussian.shape[1] != path.shape[1]:
        raise _CliError(
            EXIT_IO,
            f"X.csv has {gaussian.shape[1]} columns but W.csv has {path.shape[1]}",
        )
    return ToyData(gaussian=gaussian, path=path)


def _write_mlba_dataset(out_dir, data, attributes, force):
    import numpy as np

    from .simulators import write_attributes_csv

    rc_path = out_dir / "rt_ch.csv"
    at_path = out_dir / "attributes.csv"
    _write_matrix_csv(rc_path, np.column_stack([data.rt, data.ch]),
                      "rt,ch1,ch2,ch3", force)
    if at_path.exists() and not force:
        raise _CliError(EXIT_IO, f"refusing to overwrite {at_path} (pass --force)")
    write_attributes_csv(attributes, at_path)
    return [rc_path, at_path]


def _read_mlba_dataset(data_dir, config):
    import numpy as np

    from .simulators import MLBAData

    body = _read_matrix_csv(Path(data_dir) / "rt_ch.csv", "choice/response-time")
    if body.shape[1] != 4:
        raise _CliError(
            EXIT_IO,
            f"rt_ch.csv must have columns rt,ch1,ch2,ch3; found {body.shape[1]} columns",
        )
    rt, ch = body[:, 0], body[:, 1:]
    if not (np.isin(ch, (0.0, 1.0)).all() and np.all(ch.sum(axis=1) == 1.0)):
        raise _CliError(
            EXIT_IO, "rt_ch.csv choice columns must one-hot encode a single choice per row"
        )
    return MLBAData(rt=rt, ch=ch), _mlba_attributes_for(data_dir, config)


def _mlba_attributes_for(data_dir, config):
    from .simulators import read_attributes_csv

    at_path = Path(data_dir) / "attributes.csv"
    if at_path.is_file():
        return read_attributes_csv(at_path)
    return _mlba_attributes_from_config(config)


def _mlba_attributes_from_config(config):
    from .simulators import (
        load_reference_attributes,
        make_reference_attributes,
        read_attributes_csv,
    )

    section = config.get("mlba", {})
    choice = section.get("attributes", "reference")
    if choice == "reference":
        if "n_obs" in section:
            return make_reference_attributes(
                n_obs=section["n_obs"], seed=section.get("attributes_seed", 7)
            )
        return load_reference_attributes()
    if not Path(choice).is_file():
        raise _CliError(EXIT_IO, f"attribute matrix file not found: {choice}")
    return read_attributes_csv(choice)


def _load_observed(config):
    """Read the observed dataset named by [run] data for the config's problem."""
    problem = _require(config, "run", "problem", "toy or mlba")
    data_dir = _require(config, "run", "data", "directory with the observed dataset")
    if not Path(data_dir).is_dir():
        raise _CliError(EXIT_IO, f"observed-data directory not found: {data_dir}")
    if problem == "toy":
        return _read_toy_dataset(data_dir), None
    if problem == "mlba":
        obs, attributes = _read_mlba_dataset(data_dir, config)
        return obs, attributes
    raise _CliError(EXIT_CONFIG, f"unknown problem '{problem}' (expected toy or mlba)")


def _toy_model_from_config(config, dim_default=2):
    from .simulators import ToyConfig

    toy = config.get("toy", {})
    variant = config.get("run", {}).get("variant", "auto")
    if variant == "auto":
        variant = "shared"
    kwargs = {"dim": toy.get("dim", dim_default), "variant": variant}
    if "n_gaussian" in toy:
        kwargs["n_gaussian"] = toy["n_gaussian"]
    if "n_path" in toy:
        kwargs["n_path"] = toy["n_path"]
    return ToyConfig(**kwargs)


# -- completed-run access ----------------------------------------------------


def _load_completed_run(run_dir):
    from .engine import load_run

    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise _CliError(EXIT_IO, f"run directory not found: {run_dir}")
    manifest_path = run_dir / "run.json"
    if not manifest_path.is_file():
        raise _CliError(EXIT_INCOMPLETE, f"{run_dir} has no run.json manifest")
    try:
        status = json.loads(manifest_path.read_text()).get("status")
    except (OSError, json.JSONDecodeError) as exc:
        raise _CliError(EXIT_INCOMPLETE, f"cannot read {manifest_path}: {exc}") from exc
    if status != "complete":
        raise _CliError(
            EXIT_INCOMPLETE, f"run in {run_dir} is not complete (status: {status})"
        )
    return load_run(run_dir)


def _require_mode(result, mode):
    if mode not in result.modes:
        raise _CliError(
            EXIT_CAPABILITY,
            f"mode '{mode}' is not available for this run "
            f"(available: {', '.join(result.modes)})",
        )


def _loglik_csv_text(thetas, values):
    import numpy as np

    p = thetas.shape[1]
    header = ",".join([f"theta_{j + 1}" for j in range(p)] + ["log_likelihood"])
    lines = [header]
    for row, val in zip(thetas, values):
        lines.append(",".join(_FLOAT_FMT % v for v in (*row, val)))
    return "\n".join(lines) + "\n"


def _emit_text(text, out_path):
    if out_path is None:
        sys.stdout.write(text)
    else:
        Path(out_path).write_text(text)
        print(out_path)


# -- subcommands -------------------------------------------------------------


def _cmd_simulate(args):
    import numpy as np

    config = load_config(args.config)
    seed = _resolved_seed(config, args)
    problem = _require(config, "run", "problem", "toy or mlba")
    out_value = args.out if args.out is not None else config.get("run", {}).get("out")
    if out_value is None:
        raise _CliError(EXIT_CONFIG, "simulate needs --out or [run] out")
    out_dir = Path(out_value)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise _CliError(EXIT_IO, f"cannot create output directory: {exc}") from exc

    if problem == "toy":
        from .simulators import simulate_toy

        theta = _require(config, "toy", "theta_true", "generating parameter")
        model = _toy_model_from_config(config)
        try:
            data = simulate_toy(np.asarray(theta), model, seed)
        except (SimulatorError, ContractError) as exc:
            raise _CliError(EXIT_CONFIG, str(exc)) from exc
        files = _write_toy_dataset(out_dir, data, args.force)
        for f in files:
            print(f)
        print(f"first-block rows: {data.gaussian.shape[0]}, "
              f"column means {np.round(data.gaussian.mean(axis=0), 6).tolist()}")
        print(f"second-block rows: {data.path.shape[0]}, "
              f"column means {np.round(data.path.mean(axis=0), 6).tolist()}")
        return EXIT_OK

    if problem == "mlba":
        from .simulators import MLBAConfig, simulate_mlba

        theta = _require(config, "mlba", "theta_true", "generating parameter (6 values)")
        attributes = _mlba_attributes_from_config(config)
        try:
            data = simulate_mlba(np.asarray(theta), MLBAConfig(attributes), seed)
        except (SimulatorError, ContractError) as exc:
            raise _CliError(EXIT_CONFIG, str(exc)) from exc
        files = _write_mlba_dataset(out_dir, data, attributes, args.force)
        for f in files:
            print(f)
        props = data.ch.mean(axis=0)
        print(f"rows: {data.rt.shape[0]}")
        print(f"response-time mean {data.rt.mean():.6g}, variance {data.rt.var():.6g}")
        print(f"choice proportions {np.round(props, 6).tolist()}")
        return EXIT_OK

    raise _CliError(EXIT_CONFIG, f"unknown problem '{problem}' (expected toy or mlba)")


def _cmd_run(args):
    from . import engine

    config = load_config(args.config)
    seed = _resolved_seed(config, args)
    run_cfg = _build_run_config(config, seed)
    obs, attributes = _load_observed(config)

    if args.out is not None:
        base_dir = Path(args.out)
    elif "out" in config.get("run", {}):
        base_dir = config["run"]["out"]
    else:
        base_dir = Path(args.config).parent / "runs"
    target = Path(base_dir) / engine.run_dir_name(run_cfg)
    if target.exists() and not args.force:
        raise _CliError(
            EXIT_IO, f"run directory {target} already exists (pass --force to overwrite)"
        )

    def progress(line):
        print(line, file=sys.stderr, flush=True)

    engine.run(run_cfg, obs, attributes=attributes, base_dir=base_dir,
               force=args.force, progress=progress)
    print(target)
    return EXIT_OK


def _cmd_posterior(args):
    import numpy as np

    from .engine import posterior_sample

    result = _load_completed_run(args.run_dir)
    _require_mode(result, args.mode)
    out_dir = Path(args.out) if args.out is not None else Path(args.run_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise _CliError(EXIT_IO, f"cannot create output directory: {exc}") from exc

    sample = posterior_sample(
        result, args.mode, prior=args.prior, sampler=args.sampler,
        chains=args.chains, steps=args.steps, burn_in=args.burn_in,
        scale=args.scale,
    )
    stem = f"posterior_{args.mode}" + ("_weak" if args.prior == "weak" else "")
    csv_path = out_dir / f"{stem}.csv"
    sample.to_csv(csv_path)

    qs = (0.025, 0.25, 0.5, 0.75, 0.975)
    quantiles = np.quantile(sample.samples, qs, axis=0)
    diag = {
        "mode": args.mode,
        "prior": args.prior,
        "n_samples": int(sample.samples.shape[0]),
        "acceptance_rate": sample.acceptance_rate,
        "settings": sample.settings,
        "mean": sample.samples.mean(axis=0).tolist(),
        "variance": sample.samples.var(axis=0).tolist(),
        "sd": sample.samples.std(axis=0).tolist(),
        "quantiles": {str(q): quantiles[i].tolist() for i, q in enumerate(qs)},
    }
    if sample.ensemble is not None:
        # Pooled demc samples are generation-major: reshape recovers chains.
        n_chains = sample.ensemble.n_chains
        per_chain = sample.samples.reshape(-1, n_chains, sample.samples.shape[1])
        diag["chain_means"] = per_chain.mean(axis=0).tolist()
    diag_path = out_dir / f"{stem}_diagnostics.json"
    diag_path.write_text(json.dumps(diag, indent=2, sort_keys=True) + "\n")
    print(csv_path)
    print(diag_path)
    return EXIT_OK


def _cmd_loglik(args):
    result = _load_completed_run(args.run_dir)
    _require_mode(result, args.mode)
    thetas = _read_matrix_csv(Path(args.thetas), "parameter")
    p = result.training.inputs.shape[1]
    if thetas.shape[1] != p:
        raise _CliError(
            EXIT_CONFIG,
            f"parameter rows have {thetas.shape[1]} columns; this run expects {p}",
        )
    values = result.likelihoods[args.mode].log_likelihood(thetas)
    _emit_text(_loglik_csv_text(thetas, values), args.out)
    return EXIT_OK


def _cmd_oracle(args):
    import numpy as np

    config = load_config(args.config)
    seed = _resolved_seed(config, args)
    problem = _require(config, "run", "problem", "toy or mlba")
    obs, attributes = _load_observed(config)

    if problem == "toy":
        from .simulators import ToyConfig, toy_loglik_exact, toy_true_posterior

        base_model = _toy_model_from_config(config)
        if obs.gaussian.shape[1] != base_model.data_dim:
            raise _CliError(
                EXIT_CONFIG,
                f"observed data dimension {obs.gaussian.shape[1]} does not match "
                f"the configured model dimension {base_model.data_dim}",
            )
        # The exact references describe datasets shaped like the observed one.
        model = ToyConfig(
            dim=base_model.dim, n_gaussian=obs.gaussian.shape[0],
            n_path=obs.path.shape[0], variant=base_model.variant,
        )
        if args.thetas is not None:
            thetas = _read_matrix_csv(Path(args.thetas), "parameter")
            try:
                values = toy_loglik_exact(thetas, obs, model)
            except (SimulatorError, ContractError) as exc:
                raise _CliError(EXIT_CONFIG, str(exc)) from exc
            _emit_text(_loglik_csv_text(thetas, values), args.out)
            return EXIT_OK
        try:
            post = toy_true_posterior(obs, model)
        except ContractError as exc:
            raise _CliError(EXIT_CAPABILITY, str(exc)) from exc
        payload = {
            name: {
                "mean": getattr(post, name).mean.tolist(),
                "variance": getattr(post, name).var,
                "precision": getattr(post, name).precision,
            }
            for name in ("source1", "source2", "joint")
        }
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
        if args.out is None:
            sys.stdout.write(text)
        else:
            out_dir = Path(args.out)
            out_dir.mkdir(parents=True, exist_ok=True)
            path = out_dir / "oracle_posterior.json"
            path.write_text(text)
            print(path)
        return EXIT_OK

    if problem == "mlba":
        from .samplers import LogPosterior, demc_sample
        from .simulators import MLBAConfig, mlba_loglik_batch, mlba_prior_bounds

        model = MLBAConfig(attributes)
        if args.thetas is not None:
            thetas = _read_matrix_csv(Path(args.thetas), "parameter")
            try:
                values = mlba_loglik_batch(thetas, obs, model)
            except (SimulatorError, ContractError) as exc:
                raise _CliError(EXIT_CONFIG, str(exc)) from exc
            _emit_text(_loglik_csv_text(thetas, values), args.out)
            return EXIT_OK

        bounds = mlba_prior_bounds()
        lo, span = bounds[:, 0], bounds[:, 1] - bounds[:, 0]
        lp = LogPosterior(
            lambda th: np.zeros(th.shape[0]),
            lambda th: mlba_loglik_batch(th, obs, model),
            bounds,
        )
        chains = args.chains if args.chains is not None else 9
        steps = args.steps if args.steps is not None else 20000
        burn_in = args.burn_in if args.burn_in is not None else 18000
        rng = np.random.default_rng((seed, 0))
        init = lo + span * rng.uniform(size=(chains, bounds.shape[0]))
        sample = demc_sample(lp, init, steps=steps, burn_in=burn_in, seed=seed)
        out_dir = Path(args.out) if args.out is not None else Path(".")
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / "oracle_posterior.csv"
        sample.to_csv(csv_path)
        diag = {
            "acceptance_rate": sample.acceptance_rate,
            "settings": dict(sample.settings, seed=seed, chains=chains,
                             steps=steps, burn_in=burn_in),
            "mean": sample.samples.mean(axis=0).tolist(),
            "sd": sample.samples.std(axis=0).tolist(),
        }
        diag_path = out_dir / "oracle_posterior_diagnostics.json"
        diag_path.write_text(json.dumps(diag, indent=2, sort_keys=True) + "\n")
        print(csv_path)
        print(diag_path)
        return EXIT_OK

    raise _CliError(EXIT_CONFIG, f"unknown problem '{problem}' (expected toy or mlba)")


def _cmd_scale(args):
    from .engine import calibration_scaling

    config = load_config(args.config)
    seed = _resolved_seed(config, args)
    run_cfg = _build_run_config(config, seed)
    obs, attributes = _load_observed(config)
    scaling, aux = calibration_scaling(run_cfg, obs, attributes=attributes)
    lines = ["component,scale"]
    for j, value in enumerate(scaling.mad):
        lines.append(f"output_{j + 1},{_FLOAT_FMT % value}")
    if aux is not None and aux.get("score_mad") is not None:
        for j, value in enumerate(aux["score_mad"]):
            lines.append(f"score_{j + 1},{_FLOAT_FMT % value}")
    _emit_text("\n".join(lines) + "\n", args.out)
    return EXIT_OK


# -- entry point -------------------------------------------------------------


def _add_common(sp, config_required=False, seed=True, out=True, force=False):
    if config_required:
        sp.add_argument("--config", required=True, metavar="FILE",
                        help="run configuration file")
    if seed:
        sp.add_argument("--seed", type=int, default=None,
                        help="override the config's master seed")
    if out:
        sp.add_argument("--out", default=None, metavar="PATH",
                        help="output file or directory")
    if force:
        sp.add_argument("--force", action="store_true",
                        help="overwrite existing outputs")
    sp.add_argument("--threads", type=int, default=None, metavar="N",
                    help="cap numerical thread pools (fresh process only)")


def build_parser():
    parser = _Parser(
        prog="mobolfi",
        description="Likelihood-free inference runs backed by GP discrepancy surrogates.",
    )
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)

    sp = sub.add_parser("simulate", help="write one synthetic dataset",
                        description="Simulate a dataset at [toy/mlba] theta_true.")
    _add_common(sp, config_required=True, force=True)
    sp.set_defaults(handler=_cmd_simulate)

    sp = sub.add_parser("run", help="execute a full inference run",
                        description="Run initialization, acquisitions, and calibration.")
    _add_common(sp, config_required=True, force=True)
    sp.set_defaults(handler=_cmd_run)

    sp = sub.add_parser("posterior", help="sample a completed run's posterior",
                        description="MCMC on one approximate-likelihood mode.")
    sp.add_argument("run_dir", help="completed run directory")
    sp.add_argument("--mode", default="joint",
                    choices=["joint", "source1", "source2",
                             "cond_2_given_1", "cond_1_given_2"])
    sp.add_argument("--prior", default="standard", choices=["standard", "weak"])
    sp.add_argument("--sampler", default=None, choices=["demc", "rwm"])
    sp.add_argument("--chains", type=int, default=None,
                    help="ensemble size (demc only)")
    sp.add_argument("--steps", type=int, default=None)
    sp.add_argument("--burn-in", dest="burn_in", type=int, default=None,
                    help="discarded generations (demc only; rwm keeps all steps)")
    sp.add_argument("--scale", type=float, default=None,
                    help="random-walk proposal scale (rwm only)")
    _add_common(sp, seed=False)
    sp.set_defaults(handler=_cmd_posterior)

    sp = sub.add_parser("loglik", help="evaluate approximate log-likelihoods",
                        description="Evaluate a run's likelihood mode on parameter rows.")
    sp.add_argument("run_dir", help="completed run directory")
    sp.add_argument("--mode", default="joint",
                    choices=["joint", "source1", "source2",
                             "cond_2_given_1", "cond_1_given_2"])
    sp.add_argument("--thetas", required=True, metavar="FILE",
                    help="CSV of parameter rows (header + one row per evaluation)")
    _add_common(sp, seed=False)
    sp.set_defaults(handler=_cmd_loglik)

    sp = sub.add_parser("oracle", help="exact reference quantities",
                        description="Closed-form log-likelihoods or exact posteriors.")
    _add_common(sp, config_required=True)
    sp.add_argument("--thetas", default=None, metavar="FILE",
                    help="CSV of parameter rows for exact log-likelihood evaluation")
    sp.add_argument("--chains", type=int, default=None,
                    help="ensemble size for the exact-posterior sampler (default 9)")
    sp.add_argument("--steps", type=int, default=None,
                    help="sampler steps (default 20000)")
    sp.add_argument("--burn-in", dest="burn_in", type=int, default=None,
                    help="burn-in steps (default 18000)")
    sp.set_defaults(handler=_cmd_oracle)

    sp = sub.add_parser("scale", help="print discrepancy scaling factors",
                        description="Run the calibration batch and print its scales.")
    _add_common(sp, config_required=True)
    sp.set_defaults(handler=_cmd_scale)

    return parser


def _apply_threads(n):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS"):
        os.environ[var] = str(n)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "threads", None) is not None:
            if args.threads < 1:
                raise _CliError(EXIT_CONFIG, "--threads must be at least 1")
            _apply_threads(args.threads)
        return args.handler(args)
    except _CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EngineError, FitError, SimulatorError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENGINE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
