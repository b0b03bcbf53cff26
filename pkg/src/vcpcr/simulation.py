"""Block-covariance Gaussian benchmark data with planted active clusters.

p = 200 variables; four active blocks of five variables (indices 0-4, 10-14,
20-24, 30-34) with coefficients +1, -1, +1, -1; everything else inactive.

Inactive correlation layouts:

* config 1: each active block and the five inactive variables that follow it
  form one 10-variable equicorrelated block;
* config 2: those inactive variables form their own 5-variable blocks,
  uncorrelated with the active ones;
* config 3: inactive variables are uncorrelated with everything.

Random numbers come from numpy's PCG64 generator. A spec seed and a stream
name map to ``SeedSequence([seed, crc32(name)])``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .data import Dataset
from .errors import InvalidSpec, NotPositiveDefinite
from .seeding import rng_for

P = 200
SNR = 10.0
BLOCK = 5
ACTIVE_STARTS = (0, 10, 20, 30)
ACTIVE_SIGNS = (1.0, -1.0, 1.0, -1.0)
CANONICAL_CONFIGS = (1, 2, 3)
CANONICAL_N = (25, 50)
CANONICAL_RHO = (0.3, 0.6)
N_TRUE_CLUSTERS = 5


@dataclass(frozen=True)
class SimSpec:
    config: int = 3
    n: int = 50
    rho: float = 0.6
    seed: int = 0
    p: int = P
    snr: float = SNR
    allow_noncanonical: bool = False

    def __post_init__(self):
        if self.config not in CANONICAL_CONFIGS:
            raise InvalidSpec(f"config must be one of {CANONICAL_CONFIGS}")
        if self.p != P:
            raise InvalidSpec(f"p is fixed at {P}")
        if not self.snr > 0:
            raise InvalidSpec("snr must be positive")
        width = 2 * BLOCK if self.config == 1 else BLOCK
        if not (-1.0 / (width - 1) < self.rho < 1.0):
            raise InvalidSpec(f"rho={self.rho} does not give a positive definite covariance")
        if self.n < 2:
            raise InvalidSpec("n must be at least 2")
        if not self.allow_noncanonical:
            if self.n not in CANONICAL_N:
                raise InvalidSpec(f"n must be one of {CANONICAL_N} (use allow_noncanonical)")
            if self.rho not in CANONICAL_RHO:
                raise InvalidSpec(f"rho must be one of {CANONICAL_RHO} (use allow_noncanonical)")
            if self.snr != SNR:
                raise InvalidSpec(f"snr is fixed at {SNR:g} (use allow_noncanonical)")

    def to_dict(self):
        return asdict(self)


@dataclass
class GroundTruth:
    b: np.ndarray
    labels: np.ndarray  # 0..3 active blocks, 4 for every inactive variable
    sigma_eps2: float
    Sigma: np.ndarray
    spec: SimSpec

    def to_dict(self):
        return {
            "b": self.b.tolist(),
            "labels": self.labels.tolist(),
            "sigma_eps2": self.sigma_eps2,
            "config": self.spec.config,
            "rho": self.spec.rho,
            "n": self.spec.n,
            "seed": self.spec.seed,
            "snr": self.spec.snr,
        }


def true_coefficients():
    b = np.zeros(P)
    for start, sign in zip(ACTIVE_STARTS, ACTIVE_SIGNS):
        b[start:start + BLOCK] = sign
    return b


def true_labels():
    labels = np.full(P, len(ACTIVE_STARTS))
    for k, start in enumerate(ACTIVE_STARTS):
        labels[start:start + BLOCK] = k
    return labels


def _blocks(config):
    if config == 1:
        return [range(s, s + 2 * BLOCK) for s in ACTIVE_STARTS]
    blocks = [range(s, s + BLOCK) for s in ACTIVE_STARTS]
    if config == 2:
        blocks += [range(s + BLOCK, s + 2 * BLOCK) for s in ACTIVE_STARTS]
    return blocks


def build_covariance(config, rho):
    if config not in CANONICAL_CONFIGS:
        raise InvalidSpec(f"config must be one of {CANONICAL_CONFIGS}")
    S = np.eye(P)
    for block in _blocks(config):
        idx = np.asarray(block)
        S[np.ix_(idx, idx)] = rho
        S[idx, idx] = 1.0
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite(f"covariance for config {config}, rho={rho}") from None
    return S


def noise_variance(Sigma, b, snr=SNR):
    if not snr > 0:
        raise InvalidSpec("snr must be positive")
    return float(b @ Sigma @ b) / snr


def generate_dataset(spec: SimSpec, sigma_eps=None):
    """Draw ``(Dataset, GroundTruth)``; ``sigma_eps`` overrides the noise sd."""
    Sigma = build_covariance(spec.config, spec.rho)
    b = true_coefficients()
    s2 = noise_variance(Sigma, b, spec.snr)
    L = np.linalg.cholesky(Sigma)
    Z = rng_for(spec.seed, "data").standard_normal((spec.n, P))
    X = Z @ L.T
    sd = np.sqrt(s2) if sigma_eps is None else float(sigma_eps)
    eps = rng_for(spec.seed, "noise").standard_normal(spec.n) * sd
    y = X @ b + eps
    names = tuple(f"x{j + 1}" for j in range(P))
    truth = GroundTruth(b, true_labels(), s2 if sigma_eps is None else sd ** 2, Sigma, spec)
    return Dataset(X, y, "regression", names), truth


def canonical_specs(seed=0):
    return [SimSpec(c, n, r, seed) for c in CANONICAL_CONFIGS
            for r in CANONICAL_RHO for n in CANONICAL_N]
