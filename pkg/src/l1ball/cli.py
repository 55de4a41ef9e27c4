"""Batch experiment runner.

``l1ball run <config>`` executes a declarative experiment config end to
end: resolve or generate the data, build the model target, run the
chains, and write a result bundle (per-chain sample CSVs, summary JSON,
diagnostics JSON, and a metrics CSV when ground truth is available).
``generate``, ``summarize``, and ``metrics`` expose the individual
stages.  Exit codes: 0 ok, 2 config error, 3 sampler diagnostics
failure.

Samples are stored one draw per row; literal zeros are written as the
bare digit ``0`` so exact sparsity survives the round trip through text.
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import datagen
from .exceptions import (
    ConfigError,
    ConvergenceError,
    DiagnosticsError,
    DomainError,
    InputError,
)
from .models import (
    GridData,
    LowRankSparseData,
    MixtureData,
    RegressionData,
    StructuredSparsityData,
    build_fused_target,
    build_lowrank_target,
    build_mixture_target,
    build_regression_target,
    build_structured_target,
)
from .priors import (
    ExponentialRadius,
    HalfCauchyRadius,
    TheoryHyperparams,
    theory_lambda_alpha,
)
from .sampler import SampleRecord, nuts_sample
from .summaries import SampleSet, summarize, write_summary

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIAGNOSTICS = 3


# ---------------------------------------------------------------------------
# config handling


def load_config(path):
    try:
        with open(path) as fh:
            config = json.load(fh)
    except FileNotFoundError as err:
        raise ConfigError(f"config file not found: {path}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}") from err
    for key in ("model", "data", "sampler", "output_dir"):
        if key not in config:
            raise ConfigError(f"config missing required key '{key}'")
    sampler = config["sampler"]
    for key in ("warmup", "samples", "seed"):
        if key not in sampler:
            raise ConfigError(f"sampler config missing '{key}'")
    return config


def resolve_data(config):
    """Generate or locate the data directory for a config."""
    data = config["data"]
    if "path" in data:
        return data["path"]
    if "generator" in data:
        spec = dict(data["generator"])
        spec.setdefault("output_dir", os.path.join(config["output_dir"], "data"))
        datagen.generate_from_spec(spec)
        return spec["output_dir"]
    raise ConfigError("data section needs either 'path' or 'generator'")


def _radius_prior_from_spec(spec, default=None):
    if spec is None:
        if default is not None:
            return default
        raise ConfigError("prior config needs a radius section")
    kind = spec.get("type")
    if kind == "halfcauchy":
        return HalfCauchyRadius(spec.get("scale", 1.0))
    if kind == "exponential":
        return ExponentialRadius(spec["alpha"])
    raise ConfigError(f"unknown radius prior '{kind}'")


def _regression_prior(config, X):
    prior = config.get("prior", {})
    if "theory" in prior:
        hp = TheoryHyperparams(**prior["theory"])
        col_norm = float(np.max(np.linalg.norm(X, axis=0)))
        lam, alpha, _ = theory_lambda_alpha(X.shape[1], col_norm, hp)
        radius = _radius_prior_from_spec(
            prior.get("radius"), default=ExponentialRadius(alpha)
        )
        return lam, radius
    if "lambda" not in prior:
        raise ConfigError("regression prior needs 'lambda' or 'theory'")
    return prior["lambda"], _radius_prior_from_spec(prior.get("radius"))


def build_target(config, data_dir):
    model = config["model"]
    prior = config.get("prior", {})
    if model == "regression":
        X = datagen.load_matrix(os.path.join(data_dir, "X.csv"))
        y = datagen.load_matrix(os.path.join(data_dir, "y.csv")).ravel()
        lam, radius = _regression_prior(config, X)
        return build_regression_target(
            RegressionData(X=X, y=y),
            lam=lam,
            radius_prior=radius,
            sigma2=prior.get("sigma2"),
        )
    if model == "mixture":
        y = datagen.load_matrix(os.path.join(data_dir, "y.csv")).ravel()
        data = MixtureData(y=y, K1=config.get("K1", prior.get("K1", 10)))
        return build_mixture_target(
            data, lam=prior.get("lambda", 1.0), r=prior.get("r", 1.0)
        )
    if model == "fused":
        pixels = datagen.load_matrix(os.path.join(data_dir, "pixels.csv"))
        data = GridData(pixels=pixels, sigma2=prior.get("sigma2", 1.0))
        return build_fused_target(data, r=prior["r"], lam=prior.get("lambda", 1.0))
    if model == "lowrank":
        frames = datagen.load_frames(os.path.join(data_dir, "frames.bin"))
        data = LowRankSparseData(frames=frames, frame_shape=frames.shape[1:])
        return build_lowrank_target(
            data,
            radii=tuple(prior["radii"]),
            lam_S=prior.get("lambda", 1.0),
        )
    if model == "structured":
        A = datagen.load_matrix(os.path.join(data_dir, "A.csv"))
        S = datagen.load_matrix(os.path.join(data_dir, "S.csv"))
        data = StructuredSparsityData(A=A, S=S, kappa=prior.get("kappa", 1e-3))
        return build_structured_target(
            data, radii=tuple(prior["radii"]), d=config.get("d", 2)
        )
    raise ConfigError(f"unknown model '{model}'")


# ---------------------------------------------------------------------------
# sample file round trip


def _format_value(v):
    return "0" if v == 0.0 else repr(float(v))


def write_samples(path, records):
    p = records[0].theta.size
    header = ",".join([f"theta_{i}" for i in range(p)] + ["r", "log_posterior"])
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for rec in records:
            row = [_format_value(v) for v in rec.theta]
            row.append(_format_value(rec.r))
            row.append(repr(float(rec.log_posterior)))
            fh.write(",".join(row) + "\n")


def read_samples(path):
    records = []
    with open(path) as fh:
        next(fh)  # header
        for line in fh:
            vals = [float(x) for x in line.rstrip("\n").split(",")]
            records.append(
                SampleRecord(
                    theta=np.array(vals[:-2]),
                    r=vals[-2],
                    extras={},
                    log_posterior=vals[-1],
                    accept_stat=np.nan,
                )
            )
    return records


# ---------------------------------------------------------------------------
# experiment execution


def _chain_worker(config, data_dir, chain_id):
    target = build_target(config, data_dir)
    sampler = config["sampler"]
    start = time.perf_counter()
    result = nuts_sample(
        target,
        n_warmup=sampler["warmup"],
        n_samples=sampler["samples"],
        seed=sampler["seed"] + chain_id,
        target_accept=sampler.get("target_accept", 0.8),
        init=getattr(target, "default_init", None),
    )
    diag = {
        "chain": chain_id,
        "step_size": result.step_size,
        "n_divergent": result.n_divergent,
        "mean_accept": float(result.accept_stats.mean()),
        "e_bfmi": result.e_bfmi,
        "mean_tree_depth": float(result.tree_depths.mean()),
        "runtime_s": time.perf_counter() - start,
    }
    return result.records, diag


def run_experiment(config):
    """Execute a parsed config and return the bundle paths."""
    out_dir = config["output_dir"]
    os.makedirs(out_dir, exist_ok=True)
    data_dir = resolve_data(config)
    n_chains = config["sampler"].get("chains", 1)
    threads = int(os.environ.get("L1BALL_THREADS", os.cpu_count() or 1))

    if n_chains > 1 and threads > 1:
        with ProcessPoolExecutor(max_workers=min(threads, n_chains)) as pool:
            outputs = list(
                pool.map(_chain_worker, [config] * n_chains, [data_dir] * n_chains, range(n_chains))
            )
    else:
        outputs = [_chain_worker(config, data_dir, c) for c in range(n_chains)]

    all_records = []
    diagnostics = []
    bundle = {"output_dir": out_dir, "samples": [], "data_dir": data_dir}
    for chain_id, (records, diag) in enumerate(outputs):
        path = os.path.join(out_dir, f"samples_chain{chain_id}.csv")
        write_samples(path, records)
        bundle["samples"].append(path)
        all_records.extend(records)
        diagnostics.append(diag)

    doc = summarize(
        SampleSet(all_records),
        alpha=config.get("alpha", 0.05),
        diagnostics={"chains": diagnostics},
    )
    summary_path = os.path.join(out_dir, "summary.json")
    write_summary(summary_path, doc)
    diag_path = os.path.join(out_dir, "diagnostics.json")
    with open(diag_path, "w") as fh:
        json.dump({"chains": diagnostics}, fh, indent=2)
    bundle["summary"] = summary_path
    bundle["diagnostics"] = diag_path

    truth_path = os.path.join(data_dir, "truth.json")
    if os.path.exists(truth_path):
        with open(truth_path) as fh:
            truth = json.load(fh)
        if truth.get("model") == "regression":
            fpr, fnr = compute_selection_metrics(doc, truth)
            metrics_path = os.path.join(out_dir, "metrics.csv")
            with open(metrics_path, "w") as fh:
                fh.write("fpr,fnr\n")
                fh.write(f"{fpr},{fnr}\n")
            bundle["metrics"] = metrics_path
    return bundle


def compute_selection_metrics(summary_doc, truth):
    """FPR/FNR of the Fréchet-mean support against the true support."""
    if "support" not in truth:
        raise InputError("ground truth has no support information")
    est = np.asarray(summary_doc["frechet_mean"])
    p = est.size
    true_support = set(truth["support"])
    est_support = set(np.flatnonzero(est != 0.0).tolist())
    true_zero = set(range(p)) - true_support
    fpr = len(est_support & true_zero) / len(true_zero) if true_zero else 0.0
    fnr = len(true_support - est_support) / len(true_support) if true_support else 0.0
    return fpr, fnr


# ---------------------------------------------------------------------------
# summarize / report path


def summarize_bundle(bundle_dir, alpha=0.05, figures=True):
    """Recompute the summary from the stored samples; optionally render
    report figures next to the CSV/JSON outputs."""
    paths = sorted(glob.glob(os.path.join(bundle_dir, "samples_chain*.csv")))
    if not paths:
        raise InputError(f"no sample files found in {bundle_dir}")
    records = []
    for path in paths:
        records.extend(read_samples(path))
    doc = summarize(SampleSet(records), alpha=alpha)
    write_summary(os.path.join(bundle_dir, "summary.json"), doc)
    if figures:
        _render_figures(bundle_dir, doc)
    return doc


def _render_figures(bundle_dir, doc):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    pmf = np.asarray(doc["cardinality_pmf"])
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.bar(np.arange(pmf.size), pmf, color="steelblue")
    ax.set_xlabel("cardinality")
    ax.set_ylabel("posterior probability")
    fig.tight_layout()
    fig.savefig(os.path.join(bundle_dir, "cardinality_pmf.png"), dpi=120)
    plt.close(fig)

    zp = np.asarray(doc["zero_prob_map"])
    fig, ax = plt.subplots(figsize=(6, 2.5))
    ax.plot(zp, marker=".", linestyle="none")
    ax.set_xlabel("coordinate")
    ax.set_ylabel("pr(theta_i = 0 | y)")
    ax.set_ylim(-0.05, 1.05)
    fig.tight_layout()
    fig.savefig(os.path.join(bundle_dir, "zero_prob_map.png"), dpi=120)
    plt.close(fig)


# ---------------------------------------------------------------------------
# entry point


def _cmd_run(args):
    config = load_config(args.config)
    run_experiment(config)
    return EXIT_OK


def _cmd_generate(args):
    try:
        with open(args.spec) as fh:
            spec = json.load(fh)
    except (FileNotFoundError, json.JSONDecodeError) as err:
        raise ConfigError(f"bad generator spec: {err}") from err
    datagen.generate_from_spec(spec)
    return EXIT_OK


def _cmd_summarize(args):
    summarize_bundle(args.bundle, alpha=args.alpha, figures=not args.no_figures)
    return EXIT_OK


def _cmd_metrics(args):
    summary_path = os.path.join(args.bundle, "summary.json")
    if not os.path.exists(summary_path):
        raise InputError(f"bundle has no summary.json: {args.bundle}")
    with open(summary_path) as fh:
        doc = json.load(fh)
    truth_file = args.truth
    if os.path.isdir(truth_file):
        truth_file = os.path.join(truth_file, "truth.json")
    with open(truth_file) as fh:
        truth = json.load(fh)
    fpr, fnr = compute_selection_metrics(doc, truth)
    out = os.path.join(args.bundle, "metrics.csv")
    with open(out, "w") as fh:
        fh.write("fpr,fnr\n")
        fh.write(f"{fpr},{fnr}\n")
    print(f"fpr={fpr} fnr={fnr}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="l1ball")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.set_defaults(func=_cmd_run)

    p_gen = sub.add_parser("generate", help="generate synthetic data from a spec")
    p_gen.add_argument("spec")
    p_gen.set_defaults(func=_cmd_generate)

    p_sum = sub.add_parser("summarize", help="recompute summaries for a bundle")
    p_sum.add_argument("bundle")
    p_sum.add_argument("--alpha", type=float, default=0.05)
    p_sum.add_argument("--no-figures", action="store_true")
    p_sum.set_defaults(func=_cmd_summarize)

    p_met = sub.add_parser("metrics", help="selection metrics against ground truth")
    p_met.add_argument("bundle")
    p_met.add_argument("truth")
    p_met.set_defaults(func=_cmd_metrics)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DomainError, InputError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (DiagnosticsError, ConvergenceError) as err:
        print(f"sampler diagnostics failure: {err}", file=sys.stderr)
        return EXIT_DIAGNOSTICS


if __name__ == "__main__":
    sys.exit(main())
