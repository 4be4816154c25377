"""Seeded sampling of objective values and gradients.

Reproducibility contract: every batch of Gaussian draws is produced by a
Philox counter-based generator keyed through numpy's SeedSequence with
(seed, stream_key), where the stream key encodes problem, noise level,
sample-size level, trial, iteration and purpose.  Identical keys give
bitwise-identical draws on every run regardless of execution order.

The uint64 -> N(0,1) transform is fixed once, Box-Muller on 53-bit
uniforms: for a raw pair (r1, r2),

    u1 = ((r1 >> 11) + 1) * 2^-53         in (0, 1]
    u2 = (r2 >> 11) * 2^-53               in [0, 1)
    z1 = sqrt(-2 ln u1) * cos(2 pi u2)
    z2 = sqrt(-2 ln u1) * sin(2 pi u2)

and a batch of K normals consumes ceil(K/2) pairs in order (all z1 values
first, then all z2 values, truncated to K).
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np
from numpy.random import Philox, SeedSequence

from .problems import ProblemInstance, true_objective

Purpose = Literal["grad", "f0", "fs"]
_PURPOSE_CODE = {"grad": 0, "f0": 1, "fs": 2}


def _key_int(token) -> int:
    if isinstance(token, str):
        return zlib.crc32(token.encode("utf-8"))
    return int(token) & 0xFFFFFFFF


@dataclass(frozen=True)
class RngStream:
    """One addressable noise stream.

    stream_key = (problem id, sigma index, sample-size index, trial,
    iteration, purpose).  String entries are hashed with crc32 so the key is
    platform-independent.
    """

    seed: int
    stream_key: tuple

    def with_purpose(self, purpose: Purpose) -> "RngStream":
        key = tuple(self.stream_key[:5]) + (purpose,)
        return replace(self, stream_key=key)

    def with_iteration(self, iteration: int) -> "RngStream":
        key = tuple(self.stream_key[:4]) + (iteration,) + tuple(self.stream_key[5:])
        return replace(self, stream_key=key)

    def _bit_generator(self) -> Philox:
        spawn = tuple(_key_int(tok) if not isinstance(tok, str) or tok not in _PURPOSE_CODE
                      else _PURPOSE_CODE[tok] for tok in self.stream_key)
        return Philox(SeedSequence(self.seed & 0xFFFFFFFFFFFFFFFF, spawn_key=spawn))

    def standard_normals(self, count: int) -> np.ndarray:
        """Box-Muller batch; see the module docstring for the exact transform."""
        if count == 0:
            return np.zeros(0)
        pairs = (count + 1) // 2
        raw = self._bit_generator().random_raw(2 * pairs)
        u1 = ((raw[:pairs] >> np.uint64(11)) + np.uint64(1)) * 2.0**-53
        u2 = (raw[pairs:] >> np.uint64(11)) * 2.0**-53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = (2.0 * np.pi) * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])
        return z[:count]

    def normal_matrix(self, rows: int, cols: int, scale: float) -> np.ndarray:
        """(rows, cols) draws from N(0, scale^2), row-major consumption order."""
        if scale == 0.0:
            return np.zeros((rows, cols))
        return scale * self.standard_normals(rows * cols).reshape(rows, cols)


@dataclass(frozen=True)
class SampleEstimate:
    value: float | np.ndarray
    sample_size: int
    purpose: Purpose
    stream_key: tuple

    def __post_init__(self):
        if self.sample_size < 1:
            raise ValueError("sample_size must be at least 1")
        if not np.all(np.isfinite(self.value)):
            raise ValueError("estimate is non-finite")


def sample_gradient(prob: ProblemInstance, x: np.ndarray, sigma: float,
                    N: int, rng: RngStream) -> SampleEstimate:
    """Averaged gradient of the noisy objective over N independent draws.

    Each draw perturbs every residual component; the average reduces to the
    exact gradient shifted by the per-component noise means, so only those
    means of the drawn matrix are formed explicitly.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    x = np.asarray(x, dtype=float)
    a = prob.weights()
    vals = prob.component_values(x)
    grads = prob.component_grads(x)
    stream = rng.with_purpose("grad")
    if sigma == 0.0:
        noise_mean = np.zeros(len(a))
    else:
        noise_mean = stream.normal_matrix(N, len(a), sigma).mean(axis=0)
    g = grads @ (2.0 * a * (vals + noise_mean))
    return SampleEstimate(g, N, "grad", stream.stream_key)


def sample_function_value(prob: ProblemInstance, x: np.ndarray, sigma: float,
                          N: int, rng: RngStream, purpose: Purpose) -> SampleEstimate:
    """Averaged noisy objective value at one point from its own stream."""
    if N < 1:
        raise ValueError("N must be at least 1")
    x = np.asarray(x, dtype=float)
    a = prob.weights()
    vals = prob.component_values(x)
    stream = rng.with_purpose(purpose)
    if sigma == 0.0:
        value = float(a @ (vals * vals))
    else:
        xi = stream.normal_matrix(N, len(a), sigma)
        mean = xi.mean(axis=0)
        mean_sq = (xi * xi).mean(axis=0)
        value = float(a @ (vals * vals + 2.0 * vals * mean + mean_sq))
    return SampleEstimate(value, N, purpose, stream.stream_key)


def sample_function_pair(prob: ProblemInstance, x: np.ndarray, x_trial: np.ndarray,
                         sigma: float, N: int, rng: RngStream
                         ) -> tuple[SampleEstimate, SampleEstimate]:
    """Independent value estimates at the current and trial point."""
    f0 = sample_function_value(prob, x, sigma, N, rng, "f0")
    fs = sample_function_value(prob, x_trial, sigma, N, rng, "fs")
    return f0, fs


def required_sample_size(variance_bound: float, kappa: float, alpha: float,
                         d_norm: float, p: float, c_scale: float = 1.0,
                         n_max: int = 10**6) -> int:
    """Sample size sufficient for probabilistic accuracy at level p.

    ceil(c_scale * V / (kappa^2 alpha^2 |d|^2) * log(1/(1-p))), clamped to
    [1, n_max].  Used only by the optional adaptive sampling mode.
    """
    for name, v in (("variance_bound", variance_bound), ("kappa", kappa),
                    ("alpha", alpha), ("d_norm", d_norm), ("c_scale", c_scale)):
        if v <= 0:
            raise ValueError(f"{name} must be positive")
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    raw = c_scale * variance_bound / (kappa**2 * alpha**2 * d_norm**2) * np.log(1.0 / (1.0 - p))
    if not np.isfinite(raw):
        return n_max
    return int(min(max(np.ceil(raw), 1), n_max))


def accuracy_event_check(g_est: np.ndarray, f0_est: float, fs_est: float,
                         prob: ProblemInstance, x: np.ndarray, x_trial: np.ndarray,
                         sigma: float, alpha: float, d: np.ndarray,
                         kappa_g: float, eps_f: float) -> tuple[bool, bool]:
    """Diagnostic accuracy events against the exact objective.

    I: gradient error within kappa_g * alpha * |d|.
    J: both value errors within eps_f * alpha^2 * |d|^2.
    """
    d = np.asarray(d, dtype=float)
    d_norm = float(np.linalg.norm(d))
    f_true, grad_true = true_objective(prob, x, sigma)
    fs_true, _ = true_objective(prob, x_trial, sigma)
    i_event = float(np.linalg.norm(np.asarray(g_est) - grad_true)) <= kappa_g * alpha * d_norm
    bound = eps_f * alpha**2 * d_norm**2
    j_event = abs(f0_est - f_true) <= bound and abs(fs_est - fs_true) <= bound
    return i_event, j_event
