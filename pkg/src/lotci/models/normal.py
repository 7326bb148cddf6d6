"""Regular normal model, reduced to its sufficient statistics.

With ``sigma`` known the parameter is ``(mu,)`` and a dataset is the sample
mean. Otherwise the parameter is ``(mu, sigma)`` and a dataset is
``(mean, sum of squared deviations)``. Simulating the sufficient statistics
directly is exact and keeps large-n experiments cheap; density ratios are
unchanged because the dropped factor does not depend on the parameter.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import stats

from ..core import Model
from ..design import Constraint, Region


class NormalMeanModel(Model):
    name = "normal"
    default_design = {"kind": "grid", "U": 4}

    def __init__(self, n: int = 50, mu: float = 0.0, sigma: float = 1.0, known_sigma: bool = True,
                 delta: float = 0.5, mu0: float = 0.0, scaled: bool = True):
        self.n = int(n)
        self.mu = float(mu)
        self.sigma = float(sigma)
        self.known_sigma = bool(known_sigma)
        self.default_delta = float(delta)
        # scaled: half-width delta * log(n) / sqrt(n); otherwise delta itself
        self.scaled = bool(scaled)
        self.mu0 = float(mu0)
        self.null_constraint = Constraint("upper", (0,), (self.mu0,))
        self.labels = ("mu",) if self.known_sigma else ("mu", "sigma")
        self.supports_importance = self.known_sigma

    def _sig(self, phi):
        return self.sigma if self.known_sigma else float(phi[1])

    def generate(self, rng):
        batch = self.simulate(None, self.truth(), 1, rng)
        return batch[0]

    def truth(self):
        return np.array([self.mu]) if self.known_sigma else np.array([self.mu, self.sigma])

    def estimate(self, data):
        data = np.atleast_1d(data)
        if self.known_sigma:
            return np.array([float(data[0])])
        return np.array([float(data[0]), math.sqrt(float(data[1]) / self.n)])

    def simulate(self, data, phi, size, rng, n=None):
        n = self.n if n is None else n
        sig = self._sig(phi)
        mean = float(phi[0]) + sig / math.sqrt(n) * rng.standard_normal(size)
        if self.known_sigma:
            return mean
        ss = sig**2 * rng.chisquare(n - 1, size) if n > 1 else np.zeros(size)
        return np.stack([mean, ss], axis=1)

    def observed(self, data):
        return np.asarray(data, dtype=float)[None, ...]

    def _means(self, batch):
        b = np.asarray(batch, dtype=float)
        return b if b.ndim == 1 else b[:, 0]

    def statistic(self, data, batch):
        return self._means(batch)

    def target(self, phi):
        return float(phi[0])

    def target_estimate(self, data, batch, phi=None):
        return self._means(batch)

    def log_density(self, data, batch, phi):
        sd = self._sig(phi) / math.sqrt(self.n)
        return stats.norm.logpdf(self._means(batch), float(phi[0]), sd)

    def half_width(self, delta=None):
        d = self.default_delta if delta is None else delta
        return d * math.log(self.n) / math.sqrt(self.n) if self.scaled else d

    def neighborhood(self, data, theta_hat, delta=None):
        h = self.half_width(delta)
        th = np.asarray(theta_hat, dtype=float)
        lo, hi = th - h, th + h
        if not self.known_sigma:
            lo[1] = max(lo[1], 1e-8)
        return Region(lo, hi, labels=self.labels)

    def sample_size(self, data):
        return self.n

    def exact_tail(self, mu: float, t: float) -> float:
        """P_mu(mean >= t) with known sigma."""
        return float(stats.norm.sf((t - mu) * math.sqrt(self.n) / self.sigma))
