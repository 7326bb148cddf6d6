"""Confidence limits for the minimizer of a regression function.

The infinite-dimensional problem is reduced to the finite surrogate
``theta = (a, b_1..b_n, c)``: responses are independent N(b_i, c^2) on the
fixed design and ``a`` plays the role of the true minimizer in the pivot
``a - argmin r_hat``.
"""

from __future__ import annotations

import math

import numpy as np

from ..core import Model
from ..design import Region

EVAL_POINTS = 1001
SIGMA2_FLOOR = 1e-12

FUNCTIONS = {
    "I": (lambda x: 2.0 * (2.0 * x - 1.0) ** 2, 0.5),
    "II": (lambda x: 2.0 / (x + 1.0), 1.0),
    "III": (lambda x: np.sin(2.0 * np.pi * x + 0.75 * np.pi) / 2.0, 0.375),
    "IV": (lambda x: np.abs(x - 0.5), 0.5),
}


def design_points(n: int) -> np.ndarray:
    return (2.0 * np.arange(1, n + 1) - 1.0) / (2.0 * n)


def default_bandwidth(n: int) -> float:
    return n ** (-0.2) / 5.0


def epanechnikov(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)


def smoother_matrix(x_eval, x_design, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Nadaraya-Watson weights, rows summing to one.

    Rows whose kernel window holds no design point fall back to the nearest
    design point; the second return value marks those rows.
    """
    x_eval = np.atleast_1d(np.asarray(x_eval, dtype=float))
    K = epanechnikov((x_eval[:, None] - x_design[None, :]) / h)
    s = K.sum(axis=1)
    empty = s <= 0
    if np.any(empty):
        nearest = np.argmin(np.abs(x_eval[empty, None] - x_design[None, :]), axis=1)
        K[empty] = 0.0
        K[np.flatnonzero(empty), nearest] = 1.0
        s[empty] = 1.0
    return K / s[:, None], empty


def nw_estimate(x, y, h: float, x_design=None):
    """Nadaraya-Watson estimate at ``x`` (scalar or array)."""
    y = np.asarray(y, dtype=float)
    xd = design_points(y.size) if x_design is None else np.asarray(x_design, dtype=float)
    W, _ = smoother_matrix(x, xd, h)
    out = W @ y
    return float(out[0]) if np.ndim(x) == 0 else out


EVAL_GRID = np.linspace(0.0, 1.0, EVAL_POINTS)


def argmin_estimate(y, h: float) -> float:
    y = np.asarray(y, dtype=float)
    W, _ = smoother_matrix(EVAL_GRID, design_points(y.size), h)
    return float(EVAL_GRID[np.argmin(W @ y)])


def sigma2_estimate(y, h: float) -> float:
    y = np.asarray(y, dtype=float)
    W, _ = smoother_matrix(design_points(y.size), design_points(y.size), h)
    r = y - W @ y
    return max(float(r @ r) / y.size, SIGMA2_FLOOR)


def surrogate_simulate(phi, size: int, rng: np.random.Generator) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    b, c = phi[1:-1], phi[-1]
    return b + c * rng.standard_normal((size, b.size))


def neighborhood(theta_hat, delta: float, labels=None) -> Region:
    th = np.asarray(theta_hat, dtype=float)
    s = th[-1]
    lo = th - delta * s
    hi = th + delta * s
    lo[-1], hi[-1] = max(s - delta, 1e-8), s + delta
    lo[0], hi[0] = max(lo[0], 0.0), min(hi[0], 1.0)
    return Region(lo, hi, labels=labels)


class NpRegressionModel(Model):
    name = "npreg"
    target_range = (0.0, 1.0)

    def __init__(self, function: str = "I", n: int = 20, sigma2: float = 0.25, delta: float = 0.25,
                 L: int = 60, h: float | None = None):
        if function not in FUNCTIONS:
            raise ValueError(f"unknown regression function {function!r}")
        self.function = function
        self.r, self.xi = FUNCTIONS[function]
        self.n = int(n)
        self.sigma = math.sqrt(float(sigma2))
        self.default_delta = float(delta)
        self.default_design = {"kind": "lhd", "L": int(L)}
        self.h = default_bandwidth(self.n) if h is None else float(h)
        self.x = design_points(self.n)
        self._W_eval, empty = smoother_matrix(EVAL_GRID, self.x, self.h)
        self._W_design, empty_d = smoother_matrix(self.x, self.x, self.h)
        self.fallback_rows = int(empty.sum() + empty_d.sum())
        self.labels = ("xi",) + tuple(f"r{i + 1}" for i in range(self.n)) + ("sigma",)

    def generate(self, rng):
        return self.r(self.x) + self.sigma * rng.standard_normal(self.n)

    def truth(self):
        return np.concatenate([[self.xi], self.r(self.x), [self.sigma]])

    def estimate(self, data):
        y = np.asarray(data, dtype=float)
        r_hat = self._W_design @ y
        res = y - r_hat
        s = math.sqrt(max(float(res @ res) / self.n, SIGMA2_FLOOR))
        return np.concatenate([[self.point_estimate(y)], r_hat, [s]])

    def simulate(self, data, phi, size, rng, n=None):
        return surrogate_simulate(phi, size, rng)

    def observed(self, data):
        return np.asarray(data, dtype=float)[None, :]

    def target(self, phi):
        return float(phi[0])

    def target_estimate(self, data, batch, phi=None):
        fitted = np.asarray(batch, dtype=float) @ self._W_eval.T
        return EVAL_GRID[np.argmin(fitted, axis=1)]

    def point_estimate(self, data):
        return float(EVAL_GRID[np.argmin(self._W_eval @ np.asarray(data, dtype=float))])

    def neighborhood(self, data, theta_hat, delta=None):
        return neighborhood(theta_hat, self.default_delta if delta is None else delta, self.labels)

    def sample_size(self, data):
        return self.n

    def flags(self):
        return [f"nw-fallback-rows: {self.fallback_rows}"] if self.fallback_rows else []

    def statistic(self, data, batch):
        raise NotImplementedError("the nonparametric plug-in is an interval-estimation model")
