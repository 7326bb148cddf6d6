"""Maximum cell probability of a multinomial distribution."""

from __future__ import annotations

import math

import numpy as np

from ..core import Model
from ..design import Constraint, Region

EPS = 1e-12


def simulate_counts(pi, n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Multinomial counts by sequential binomial conditioning, shape ``(size, k)``."""
    pi = np.asarray(pi, dtype=float)
    k = pi.size
    out = np.zeros((size, k), dtype=np.int64)
    remaining = np.full(size, int(n), dtype=np.int64)
    left = 1.0
    for i in range(k - 1):
        p = 0.0 if left <= 0 else min(max(pi[i] / left, 0.0), 1.0)
        out[:, i] = rng.binomial(remaining, p)
        remaining -= out[:, i]
        left -= pi[i]
    out[:, k - 1] = remaining
    return out


def jeffreys_estimate(counts, n: int | None = None, k: int | None = None) -> np.ndarray:
    counts = np.asarray(counts, dtype=float)
    k = counts.shape[-1] if k is None else k
    n = counts.sum(axis=-1, keepdims=True) if n is None else n
    return (counts + 0.5) / (n + k / 2.0)


def pi_max(phi) -> float:
    return float(np.max(phi))


def half_width(n: int, delta: float) -> float:
    return delta * math.log(n) / math.sqrt(n)


def neighborhood(pi_hat, n: int, delta: float, labels=None) -> Region:
    pi_hat = np.asarray(pi_hat, dtype=float)
    h = half_width(n, delta)
    lo = np.clip(pi_hat - h, EPS, 1.0 - EPS)
    hi = np.clip(pi_hat + h, EPS, 1.0 - EPS)
    return Region(lo, hi, (Constraint("simplex"),), labels)


class MultinomialModel(Model):
    name = "multinomial"
    default_design = {"kind": "grid", "U": 3}

    def __init__(self, pi=(0.2, 0.2, 0.2, 0.2, 0.2), n: int = 30, delta: float = 0.1, k: int | None = None):
        self.pi = np.asarray(pi, dtype=float)
        if k is not None and int(k) != self.pi.size:
            raise ValueError("k does not match the length of pi")
        if np.any(self.pi <= 0) or abs(self.pi.sum() - 1.0) > 1e-10:
            raise ValueError("pi must be a positive probability vector")
        self.k = self.pi.size
        self.n = int(n)
        self.default_delta = float(delta)
        self.labels = tuple(f"pi{i + 1}" for i in range(self.k))
        self.target_range = (1.0 / self.k, 1.0)

    def generate(self, rng):
        return simulate_counts(self.pi, self.n, 1, rng)[0]

    def truth(self):
        return self.pi.copy()

    def estimate(self, data):
        return jeffreys_estimate(data, self.n, self.k)

    def simulate(self, data, phi, size, rng, n=None):
        return simulate_counts(phi, self.n if n is None else n, size, rng)

    def observed(self, data):
        return np.asarray(data)[None, :]

    def target(self, phi):
        return pi_max(phi)

    def target_estimate(self, data, batch, phi=None):
        return jeffreys_estimate(batch).max(axis=1)

    def neighborhood(self, data, theta_hat, delta=None):
        return neighborhood(theta_hat, self.n, self.default_delta if delta is None else delta, self.labels)

    def sample_size(self, data):
        return self.n

    def statistic(self, data, batch):
        raise NotImplementedError("the multinomial plug-in is an interval-estimation model")
