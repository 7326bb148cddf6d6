"""Binomial count with a one-sided null ``pi <= pi0``; exact tails make it an oracle model."""

from __future__ import annotations

import numpy as np
from scipy import stats

from ..core import Model
from ..design import Constraint, Region

EPS = 1e-9


class BinomialModel(Model):
    name = "binomial"
    supports_importance = True
    labels = ("pi",)
    default_design = {"kind": "grid", "U": 4}

    def __init__(self, n: int = 20, pi: float = 0.5, pi0: float = 0.5, delta: float = 0.5):
        self.n = int(n)
        self.pi = float(pi)
        self.pi0 = float(pi0)
        self.default_delta = float(delta)
        self.null_constraint = Constraint("upper", (0,), (self.pi0,))

    def generate(self, rng):
        return int(rng.binomial(self.n, self.pi))

    def truth(self):
        return np.array([self.pi])

    def estimate(self, data):
        return np.array([(data + 0.5) / (self.n + 1.0)])

    def simulate(self, data, phi, size, rng, n=None):
        return rng.binomial(self.n if n is None else n, float(phi[0]), size=size)

    def observed(self, data):
        return np.array([data])

    def statistic(self, data, batch):
        return np.asarray(batch, dtype=float)

    def target(self, phi):
        return float(phi[0])

    def target_estimate(self, data, batch, phi=None):
        return (np.asarray(batch, dtype=float) + 0.5) / (self.n + 1.0)

    def log_density(self, data, batch, phi):
        return stats.binom.logpmf(np.asarray(batch), self.n, float(phi[0]))

    def neighborhood(self, data, theta_hat, delta=None):
        d = self.default_delta if delta is None else delta
        c = float(theta_hat[0])
        return Region([max(c - d, EPS)], [min(c + d, 1 - EPS)], labels=self.labels)

    def sample_size(self, data):
        return self.n

    def exact_tail(self, pi: float, t: float) -> float:
        """P_pi(X >= t)."""
        return float(stats.binom.sf(np.ceil(t) - 1, self.n, pi))
