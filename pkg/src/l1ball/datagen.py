"""Seeded synthetic data generators for the bundled experiments.

Every generator writes CSV matrices (header row, comma delimited) plus a
``truth.json`` sidecar holding the ground-truth quantities the metrics
command needs.  The frame stack for the decomposition model uses a small
binary format instead (magic ``L1FR``, three little-endian int64 dims,
then row-major float64 frames).
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from .exceptions import ConfigError, InputError

FRAME_MAGIC = b"L1FR"


def save_matrix(path, arr):
    arr = np.atleast_2d(np.asarray(arr, dtype=float))
    header = ",".join(f"c{j}" for j in range(arr.shape[1]))
    np.savetxt(path, arr, delimiter=",", header=header, comments="")


def load_matrix(path):
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def save_frames(path, frames):
    """Binary frame stack: magic + (T, m, n) int64 + row-major doubles."""
    frames = np.asarray(frames, dtype=float)
    if frames.ndim != 3:
        raise InputError("frame stack must be (T, m, n)")
    with open(path, "wb") as fh:
        fh.write(FRAME_MAGIC)
        fh.write(struct.pack("<3q", *frames.shape))
        fh.write(np.ascontiguousarray(frames).tobytes())


def load_frames(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != FRAME_MAGIC:
            raise InputError("not a frame-stack file (bad magic)")
        T, m, n = struct.unpack("<3q", fh.read(24))
        data = np.frombuffer(fh.read(8 * T * m * n), dtype=float)
    return data.reshape(T, m, n)


def _truth_path(out_dir):
    return os.path.join(out_dir, "truth.json")


def generate_regression(out_dir, n, p, c0, signal, design="iid", sigma2=1.0, seed=0):
    """Sparse regression draw: y = X theta0 + eps.

    theta0 has its first c0 coordinates set to ``signal``.  design is
    "iid" (standard normal entries) or "correlated" (rows from
    N(0, Sigma) with Sigma_jk = 0.5^{|j-k|}).
    """
    if not 0 <= c0 <= p:
        raise InputError("sparsity c0 must lie in [0, p]")
    rng = np.random.default_rng(seed)
    if design == "iid":
        X = rng.standard_normal((n, p))
    elif design == "correlated":
        cov = 0.5 ** np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
        X = rng.multivariate_normal(np.zeros(p), cov, size=n, method="cholesky")
    else:
        raise ConfigError(f"unknown design '{design}'")
    theta0 = np.zeros(p)
    theta0[:c0] = signal
    y = X @ theta0 + np.sqrt(sigma2) * rng.standard_normal(n)
    os.makedirs(out_dir, exist_ok=True)
    save_matrix(os.path.join(out_dir, "X.csv"), X)
    save_matrix(os.path.join(out_dir, "y.csv"), y[:, None])
    truth = {
        "model": "regression",
        "theta0": theta0.tolist(),
        "support": list(range(c0)),
        "sigma2": sigma2,
    }
    with open(_truth_path(out_dir), "w") as fh:
        json.dump(truth, fh, indent=2)
    return truth


def generate_mixture(out_dir, n, weights, mus, sigma2s, seed=0):
    """Univariate Gaussian mixture sample with known component labels."""
    weights = np.asarray(weights, dtype=float)
    mus = np.asarray(mus, dtype=float)
    sigma2s = np.broadcast_to(np.asarray(sigma2s, dtype=float), mus.shape)
    if not np.isclose(weights.sum(), 1.0):
        raise InputError("mixture weights must sum to 1")
    rng = np.random.default_rng(seed)
    labels = rng.choice(weights.size, size=n, p=weights)
    y = rng.normal(mus[labels], np.sqrt(sigma2s[labels]))
    os.makedirs(out_dir, exist_ok=True)
    save_matrix(os.path.join(out_dir, "y.csv"), y[:, None])
    truth = {
        "model": "mixture",
        "K0": int(weights.size),
        "weights": weights.tolist(),
        "mus": mus.tolist(),
        "sigma2s": np.asarray(sigma2s).tolist(),
    }
    with open(_truth_path(out_dir), "w") as fh:
        json.dump(truth, fh, indent=2)
    return truth


def generate_grid(out_dir, p1, p2, levels=(0.0, 1.0), noise_sd=0.1, seed=0):
    """Two-block piecewise-constant image: top half at levels[1], bottom
    at levels[0], plus iid Gaussian pixel noise."""
    rng = np.random.default_rng(seed)
    truth_img = np.full((p1, p2), levels[0])
    truth_img[: p1 // 2, :] = levels[1]
    pixels = truth_img + noise_sd * rng.standard_normal((p1, p2))
    os.makedirs(out_dir, exist_ok=True)
    save_matrix(os.path.join(out_dir, "pixels.csv"), pixels)
    truth = {
        "model": "fused",
        "truth_image": truth_img.tolist(),
        "noise_sd": noise_sd,
        "block_boundary_row": p1 // 2,
    }
    with open(_truth_path(out_dir), "w") as fh:
        json.dump(truth, fh, indent=2)
    return truth


def generate_lowrank(out_dir, T, m, n, rank=2, n_spikes=5, spike_value=5.0, noise_sd=0.3, seed=0):
    """Rank-``rank`` background shared across frames plus a fixed set of
    sparse spike pixels, with Gaussian noise."""
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((T, rank))
    V = rng.standard_normal((rank, m * n))
    L = U @ V
    spikes = rng.choice(m * n, size=n_spikes, replace=False)
    S = np.zeros((T, m * n))
    S[:, spikes] = spike_value
    frames = (L + S + noise_sd * rng.standard_normal((T, m * n))).reshape(T, m, n)
    os.makedirs(out_dir, exist_ok=True)
    save_frames(os.path.join(out_dir, "frames.bin"), frames)
    truth = {
        "model": "lowrank",
        "rank": rank,
        "spike_pixels": sorted(int(i) for i in spikes),
        "noise_sd": noise_sd,
    }
    with open(_truth_path(out_dir), "w") as fh:
        json.dump(truth, fh, indent=2)
    return truth


def generate_structured(out_dir, p, d=2, noise_sd=0.2, kappa=1e-3, seed=0):
    """Two-community structural matrix S and an observed symmetric A
    built from sparse factors aligned with the communities."""
    rng = np.random.default_rng(seed)
    S = np.full((p, p), 0.5)
    half = p // 2
    S[:half, :half] = 1.0
    S[half:, half:] = 1.0
    np.fill_diagonal(S, 0.0)
    thetas = np.zeros((d, p))
    thetas[0, :half] = 1.0 / half
    thetas[1 % d, half:] = 1.0 / (p - half)
    lams = np.linspace(1.0, 2.0, d)
    A = (thetas.T * lams) @ thetas
    E = rng.standard_normal((p, p)) * noise_sd
    A = A + (E + E.T) / 2
    os.makedirs(out_dir, exist_ok=True)
    save_matrix(os.path.join(out_dir, "A.csv"), A)
    save_matrix(os.path.join(out_dir, "S.csv"), S)
    truth = {
        "model": "structured",
        "factors": thetas.tolist(),
        "lambdas": lams.tolist(),
        "kappa": kappa,
    }
    with open(_truth_path(out_dir), "w") as fh:
        json.dump(truth, fh, indent=2)
    return truth


GENERATORS = {
    "regression": generate_regression,
    "mixture": generate_mixture,
    "fused": generate_grid,
    "lowrank": generate_lowrank,
    "structured": generate_structured,
}


def generate_from_spec(spec):
    """Dispatch a generator-spec dict: {"kind", "output_dir", "seed",
    "params": {...}}."""
    kind = spec.get("kind")
    if kind not in GENERATORS:
        raise ConfigError(f"unknown generator kind '{kind}'")
    params = dict(spec.get("params", {}))
    params["seed"] = spec.get("seed", 0)
    out_dir = spec.get("output_dir")
    if out_dir is None:
        raise ConfigError("generator spec needs an output_dir")
    return GENERATORS[kind](out_dir, **params)
