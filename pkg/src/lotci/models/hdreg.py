"""Testing nonnegativity of all coefficients in a high-dimensional linear model.

The statistic is the ratio of residual sums of squares of the nonnegative
lasso (null fit) and the lasso (alternative fit). The design matrix is held
fixed within a dataset; only the response is resimulated.
"""

from __future__ import annotations

import math

import numba
import numpy as np

from ..core import Model
from ..design import Constraint, Region

MAX_SWEEPS = 10_000
CD_TOL = 1e-8
SIGMA2_FLOOR = 1e-12


@numba.njit(cache=True, nogil=True)
def _cd(X, y, lam, colsq, nonneg, max_sweeps, tol):
    n, p = X.shape
    beta = np.zeros(p)
    r = y.copy()
    half = lam / 2.0
    for sweep in range(max_sweeps):
        maxchg = 0.0
        for j in range(p):
            if colsq[j] <= 0.0:
                continue
            bj = beta[j]
            rho = 0.0
            for i in range(n):
                rho += X[i, j] * r[i]
            rho += colsq[j] * bj
            if nonneg:
                new = max(0.0, (rho - half) / colsq[j])
            elif rho > half:
                new = (rho - half) / colsq[j]
            elif rho < -half:
                new = (rho + half) / colsq[j]
            else:
                new = 0.0
            d = new - bj
            if d != 0.0:
                for i in range(n):
                    r[i] -= X[i, j] * d
                beta[j] = new
                if abs(d) > maxchg:
                    maxchg = abs(d)
        if maxchg < tol:
            break
    return beta


@numba.njit(cache=True, nogil=True)
def _rss(X, y, beta):
    n, p = X.shape
    s = 0.0
    for i in range(n):
        e = y[i]
        for j in range(p):
            e -= X[i, j] * beta[j]
        s += e * e
    return s


@numba.njit(cache=True, nogil=True)
def _glr_batch(X, Y, lam, colsq, max_sweeps, tol):
    M = Y.shape[0]
    out = np.empty(M)
    for m in range(M):
        y = Y[m]
        b0 = _cd(X, y, lam, colsq, True, max_sweeps, tol)
        b1 = _cd(X, y, lam, colsq, False, max_sweeps, tol)
        den = _rss(X, y, b1)
        num = _rss(X, y, b0)
        out[m] = num / den if den > 0.0 else np.inf
    return out


def _prep(X):
    X = np.ascontiguousarray(X, dtype=float)
    return X, np.einsum("ij,ij->j", X, X)


def lasso_fit(X, y, lam: float) -> np.ndarray:
    """Minimize ||y - X b||^2 + lam * sum|b_j| by cyclic coordinate descent."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    X, colsq = _prep(X)
    return _cd(X, np.asarray(y, dtype=float), float(lam), colsq, False, MAX_SWEEPS, CD_TOL)


def nnlasso_fit(X, y, lam: float) -> np.ndarray:
    """Minimize ||y - X b||^2 + lam * sum b_j subject to b >= 0."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    X, colsq = _prep(X)
    return _cd(X, np.asarray(y, dtype=float), float(lam), colsq, True, MAX_SWEEPS, CD_TOL)


def lasso_objective(X, y, beta, lam) -> float:
    r = np.asarray(y) - np.asarray(X) @ beta
    return float(r @ r + lam * np.abs(beta).sum())


def kkt_violation(X, y, beta, lam) -> float:
    """Largest violation of the nonnegative-lasso KKT conditions."""
    grad = 2.0 * np.asarray(X).T @ (np.asarray(X) @ beta - y) + lam
    active = beta > 0
    v_active = np.abs(grad[active]).max(initial=0.0)
    v_zero = np.maximum(-grad[~active], 0.0).max(initial=0.0)
    return float(max(v_active, v_zero))


def glr_statistic(X, y, lam: float) -> float:
    X, colsq = _prep(X)
    return float(_glr_batch(X, np.asarray(y, dtype=float)[None, :], float(lam), colsq, MAX_SWEEPS, CD_TOL)[0])


def sigma2_refit(X, y, support) -> float:
    """Residual mean square (divisor n) of least squares on the selected columns."""
    y = np.asarray(y, dtype=float)
    n = y.size
    support = np.asarray(support, dtype=int)
    if support.size == 0:
        return max(float(y @ y) / n, SIGMA2_FLOOR)
    if support.size >= n:
        raise ValueError("support must be smaller than n")
    Xs = np.asarray(X, dtype=float)[:, support]
    coef, *_ = np.linalg.lstsq(Xs, y, rcond=None)
    r = y - Xs @ coef
    return max(float(r @ r) / n, SIGMA2_FLOOR)


def default_lambda(n: int, p: int) -> float:
    return 4.0 * math.sqrt(math.log(p) / n)


def neighborhood(beta_h0, sigma2_hat, delta: float, labels=None) -> Region:
    """Box with inactive coefficients frozen at 0, active ones +-delta*sigma, sigma^2 +-delta."""
    beta_h0 = np.asarray(beta_h0, dtype=float)
    p = beta_h0.size
    s = math.sqrt(sigma2_hat)
    active = beta_h0 != 0
    lo = np.where(active, np.maximum(beta_h0 - delta * s, 0.0), 0.0)
    hi = np.where(active, beta_h0 + delta * s, 0.0)
    lo = np.append(lo, max(sigma2_hat - delta, SIGMA2_FLOOR))
    hi = np.append(hi, sigma2_hat + delta)
    fixed = tuple(int(j) for j in np.flatnonzero(~active))
    cons = (Constraint("nonnegative", tuple(range(p))),)
    if fixed:
        cons = (Constraint("fixed", fixed, tuple(0.0 for _ in fixed)),) + cons
    return Region(lo, hi, cons, labels)


def beta_config(name, p: int, c: float | None = None) -> np.ndarray:
    """Coefficient vectors (i)-(iv) under the null, and ``power`` with beta_2 = c < 0."""
    beta = np.zeros(p)
    if name in ("i", "1", 1):
        pass
    elif name in ("ii", "2", 2):
        beta[0] = 2.0
    elif name in ("iii", "3", 3):
        beta[:2] = 2.0
    elif name in ("iv", "4", 4):
        beta[:3] = 2.0
    elif name == "power":
        beta[0] = 2.0
        beta[1] = -0.5 if c is None else float(c)
    else:
        raise ValueError(f"unknown beta configuration {name!r}")
    return beta


class RegressionData:
    __slots__ = ("X", "y")

    def __init__(self, X, y):
        self.X = np.ascontiguousarray(X, dtype=float)
        self.y = np.asarray(y, dtype=float)
        if self.X.shape[0] != self.y.size or self.y.size < 2:
            raise ValueError("X rows must match y and n >= 2")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise ValueError("non-finite entries in regression data")


class HdRegressionModel(Model):
    name = "hdreg"
    supports_importance = True

    def __init__(self, n: int = 20, p: int = 40, beta_spec="i", c: float | None = None, sigma2: float = 1.0,
                 delta: float = 0.03, L: int = 30, rho: float = 0.1, lam: float | None = None,
                 design_sigma: bool = True, sigma2_divisor: str = "n"):
        self.n, self.p = int(n), int(p)
        self.beta = beta_config(beta_spec, self.p, c)
        self.sigma2 = float(sigma2)
        self.default_delta = float(delta)
        self.default_design = {"kind": "lhd", "L": int(L)}
        self.rho = float(rho)
        self.lam = default_lambda(self.n, self.p) if lam is None else float(lam)
        # include the sigma^2 coordinate in the try-point design
        self.design_sigma = bool(design_sigma)
        # "n" is the plain residual mean square; "n-df" divides by n minus the support size
        if sigma2_divisor not in ("n", "n-df"):
            raise ValueError("sigma2_divisor must be 'n' or 'n-df'")
        self.sigma2_divisor = sigma2_divisor
        self.labels = tuple(f"beta{j + 1}" for j in range(self.p)) + ("sigma2",)
        self.null_constraint = Constraint("nonnegative", tuple(range(self.p)))
        self._chol = None

    def _cov_chol(self):
        if self._chol is None:
            S = np.full((self.p, self.p), self.rho)
            np.fill_diagonal(S, 1.0)
            self._chol = np.linalg.cholesky(S)
        return self._chol

    def generate(self, rng):
        X = rng.standard_normal((self.n, self.p)) @ self._cov_chol().T
        y = X @ self.beta + math.sqrt(self.sigma2) * rng.standard_normal(self.n)
        return RegressionData(X, y)

    def truth(self):
        return np.append(self.beta, self.sigma2)

    def estimate(self, data):
        b0 = nnlasso_fit(data.X, data.y, self.lam)
        support = np.flatnonzero(b0)
        s2 = sigma2_refit(data.X, data.y, support)
        if self.sigma2_divisor == "n-df":
            n = data.X.shape[0]
            s2 *= n / (n - support.size)
        return np.append(b0, s2)

    def simulate(self, data, phi, size, rng, n=None):
        phi = np.asarray(phi, dtype=float)
        mean = data.X @ phi[:-1]
        return mean + math.sqrt(phi[-1]) * rng.standard_normal((size, data.X.shape[0]))

    def observed(self, data):
        return data.y[None, :]

    def statistic(self, data, batch):
        X, colsq = _prep(data.X)
        return _glr_batch(X, np.ascontiguousarray(batch, dtype=float), self.lam, colsq, MAX_SWEEPS, CD_TOL)

    def log_density(self, data, batch, phi):
        phi = np.asarray(phi, dtype=float)
        s2 = phi[-1]
        r = np.asarray(batch) - data.X @ phi[:-1]
        n = r.shape[-1]
        return -0.5 * n * math.log(2 * math.pi * s2) - 0.5 * np.einsum("...i,...i->...", r, r) / s2

    def neighborhood(self, data, theta_hat, delta=None):
        d = self.default_delta if delta is None else delta
        reg = neighborhood(theta_hat[:-1], float(theta_hat[-1]), d, self.labels)
        if not self.design_sigma:
            s2 = float(theta_hat[-1])
            lo, hi = reg.lower.copy(), reg.upper.copy()
            lo[-1] = hi[-1] = s2
            reg = Region(lo, hi, reg.constraints, reg.labels)
        return reg

    def sample_size(self, data):
        return data.X.shape[0]

    def target(self, phi):
        raise NotImplementedError("the regression plug-in is a testing model")
