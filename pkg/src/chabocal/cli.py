"""Command-line front end: simulate, generate, calibrate, summarize.

Exit codes: 0 ok, 2 config/schema error, 3 forward-model failure,
4 sampler stopped before the tempering exponent reached 1.
"""

import argparse
import csv
import datetime
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__, calibrate, config as cfgmod, data as datamod, forward, tmcmc
from .errors import ConfigError, ForwardFailure, StageLimitExceeded
from .forward import PARAM_NAMES
from .kernels import BACKEND

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FORWARD = 3
EXIT_INCOMPLETE = 4


def _write_manifest(outdir, cfg, command):
    doc = {
        "command": command,
        "config": cfg.raw,
        "config_hash": hashlib.sha256(
            json.dumps(cfg.raw, sort_keys=True).encode()
        ).hexdigest(),
        "seed": cfg.seed,
        "versions": {
            "chabocal": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
            "kernel_backend": BACKEND,
        },
        "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    with open(os.path.join(outdir, "manifest.json"), "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _load_config(args):
    overrides = args.set or []
    cfg = cfgmod.load(args.config, overrides)
    if args.out is not None:
        cfg.output = args.out
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.tmcmc.seed = args.seed
    os.makedirs(cfg.output, exist_ok=True)
    return cfg


def cmd_simulate(args):
    cfg = _load_config(args)
    traj = forward.run_forward(cfg.q_true, cfg.fixed, cfg.program, cfg.specimen)
    traj.to_csv(os.path.join(cfg.output, "trajectory.csv"))
    _write_manifest(cfg.output, cfg, "simulate")
    print(f"wrote {len(traj.times)} rows to {cfg.output}/trajectory.csv")
    return EXIT_OK


def cmd_generate(args):
    cfg = _load_config(args)
    mset = datamod.generate(
        cfg.q_true,
        cfg.fixed,
        cfg.program,
        cfg.specimen,
        cfg.sample_times,
        cfg.noise,
        cfg.seed,
    )
    mset.to_json(os.path.join(cfg.output, "measurements.json"))
    mset.to_csv(os.path.join(cfg.output, "measurements.csv"))
    _write_manifest(cfg.output, cfg, "generate")
    print(
        f"wrote {len(mset.values)} observations "
        f"(sigma = {mset.sigma_effective:.3e} m) to {cfg.output}/measurements.json"
    )
    return EXIT_OK


def _check_data_schema(cfg, mset):
    if len(mset.values) != 3 * len(mset.sample_times):
        raise ConfigError("data.values", "length must be 3x the sample times")
    if len(mset.sample_times) != len(cfg.sample_times) or not np.allclose(
        mset.sample_times, cfg.sample_times, rtol=0.0, atol=1e-9
    ):
        raise ConfigError("data.sample_times", "do not match the config observation times")


def _print_summary(summary):
    print(f"{'parameter':>10} {'truth':>12} {'mean':>12} {'std':>12} {'rel.err':>9}")
    for i, name in enumerate(summary.names):
        truth = "-" if summary.truth is None else f"{summary.truth[i]:12.5g}"
        rel = "-" if summary.rel_error is None else f"{100 * summary.rel_error[i]:8.3f}%"
        print(
            f"{name:>10} {truth:>12} {summary.mean[i]:12.5g} "
            f"{summary.std[i]:12.5g} {rel:>9}"
        )
    if np.isnan(summary.log_evidence):
        print(f"stages {summary.n_stages}")
    else:
        print(f"log-evidence {summary.log_evidence:.4f}  stages {summary.n_stages}")


def cmd_calibrate(args):
    cfg = _load_config(args)
    try:
        mset = datamod.MeasurementSet.from_json(args.data)
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        raise ConfigError("data", str(exc)) from None
    _check_data_schema(cfg, mset)

    try:
        spec = calibrate.LikelihoodSpec(data=mset, noise_sigma=args.likelihood_sigma)
    except ValueError as exc:
        raise ConfigError("--likelihood-sigma", str(exc)) from None
    problem = calibrate.build_problem(
        cfg.prior, spec, cfg.fixed, cfg.program, cfg.specimen
    )
    if args.flat_likelihood:
        problem.log_likelihood = lambda q: 0.0

    stage_path = os.path.join(cfg.output, "stages.jsonl")
    with open(stage_path, "w") as stage_fh:

        def on_stage(rec):
            stage_fh.write(json.dumps(rec, sort_keys=True) + "\n")
            stage_fh.flush()

        incomplete = False
        try:
            result = tmcmc.run(problem, cfg.tmcmc, threads=args.threads, on_stage=on_stage)
        except StageLimitExceeded as exc:
            result = exc.result
            incomplete = True

    tmcmc.samples_to_csv(
        os.path.join(cfg.output, "samples.csv"), result.samples, PARAM_NAMES
    )
    summary = calibrate.summarize(
        result, truth=cfg.q_true, bins=args.bins, prior_box=cfg.prior
    )
    summary.to_json(os.path.join(cfg.output, "summary.json"))
    summary.histograms_to_csv(os.path.join(cfg.output, "histograms.csv"))
    _write_manifest(cfg.output, cfg, "calibrate")
    _print_summary(summary)
    if problem.log_likelihood.__class__ is calibrate.ForwardLikelihood:
        fails = problem.log_likelihood.failures
        if fails:
            print(f"forward failures mapped to -inf: {fails}")
    if incomplete:
        print("warning: sampler stopped before reaching exponent 1 (partial result)")
        return EXIT_INCOMPLETE
    return EXIT_OK


def _read_samples_csv(path):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError("data", str(exc)) from None
    if not rows or rows[0] != list(PARAM_NAMES):
        raise ConfigError("data", f"expected header {','.join(PARAM_NAMES)}")
    try:
        samples = np.array([[float(x) for x in row] for row in rows[1:]])
    except ValueError:
        raise ConfigError("data", "non-numeric or ragged sample rows") from None
    if samples.size == 0 or samples.ndim != 2 or samples.shape[1] != len(PARAM_NAMES):
        raise ConfigError("data", "no samples or wrong column count")
    return samples


def cmd_summarize(args):
    cfg = _load_config(args)
    samples = _read_samples_csv(args.data)
    prior_rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(0, 0)))
    lo, hi = cfg.prior.arrays()
    prior_samples = lo + prior_rng.uniform(size=samples.shape) * (hi - lo)
    result = tmcmc.PosteriorResult(
        samples=samples,
        log_evidence=float("nan"),
        stages=[tmcmc.TmcmcStage(index=0, exponent=0.0, samples=prior_samples, log_likes=None)],
        mean=samples.mean(axis=0),
        std=samples.std(axis=0),
    )
    summary = calibrate.summarize(
        result, truth=cfg.q_true, bins=args.bins, prior_box=cfg.prior
    )
    summary.to_json(os.path.join(cfg.output, "summary.json"))
    summary.histograms_to_csv(os.path.join(cfg.output, "histograms.csv"))
    _write_manifest(cfg.output, cfg, "summarize")
    _print_summary(summary)
    return EXIT_OK


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="chabocal",
        description="Viscoplastic cyclic-test simulation and Bayesian calibration.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_data=False):
        p.add_argument("--config", required=True, help="JSON run configuration")
        if needs_data:
            p.add_argument("--data", required=True, help="input data file")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--threads", type=int, default=1, help="worker cap for the sampler")
        p.add_argument(
            "--set",
            action="append",
            metavar="KEY=VALUE",
            help="override a config field by dotted path (repeatable)",
        )

    common(sub.add_parser("simulate", help="write the displacement trajectory CSV"))
    common(sub.add_parser("generate", help="write a noisy virtual measurement set"))
    p_cal = sub.add_parser("calibrate", help="run the sampler against a data file")
    common(p_cal, needs_data=True)
    p_cal.add_argument("--bins", type=int, default=40, help="histogram bins")
    p_cal.add_argument(
        "--flat-likelihood",
        action="store_true",
        help="debug: replace the likelihood with a constant",
    )
    p_cal.add_argument(
        "--likelihood-sigma",
        type=float,
        default=None,
        help="observation sigma for the likelihood (misspecification studies); "
        "defaults to the value recorded in the data file",
    )
    p_sum = sub.add_parser("summarize", help="summarize an existing samples CSV")
    common(p_sum, needs_data=True)
    p_sum.add_argument("--bins", type=int, default=40, help="histogram bins")
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    handler = {
        "simulate": cmd_simulate,
        "generate": cmd_generate,
        "calibrate": cmd_calibrate,
        "summarize": cmd_summarize,
    }[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ForwardFailure as exc:
        print(f"forward model failure: {exc}", file=sys.stderr)
        return EXIT_FORWARD


if __name__ == "__main__":
    sys.exit(main())
