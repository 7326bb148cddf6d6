"""Location parameter of the three-parameter Weibull via maximum product of spacings (MPS).

Fits run in the unconstrained coordinates ``(log a, log b, u)`` with
``tau = x_(1) - exp(u)``, so every iterate keeps ``tau < x_(1)``. The observed
sample is fitted by multistart Nelder-Mead followed by a Newton polish; the
many resample fits inside the neighborhood bootstrap use the same Newton
solver warm-started at the parameter each resample was drawn from.
"""

from __future__ import annotations

import math

import numba
import numpy as np

from ..core import Model
from ..design import Region
from ..numopt import nelder_mead

LOG_FLOOR = math.log(1e-300)
POS_FLOOR = 1e-6


@numba.njit(cache=True, nogil=True)
def _g(D):
    # log(1 - exp(-D)), floored
    if D <= 0.0:
        return LOG_FLOOR
    v = math.log(-math.expm1(-D))
    return v if v > LOG_FLOOR else LOG_FLOOR


@numba.njit(cache=True, nogil=True)
def mps_logobj(a, b, tau, xs):
    """Sum of log spacings of the Weibull CDF over the sorted sample ``xs``."""
    n = xs.shape[0]
    if a <= 0.0 or b <= 0.0 or not tau < xs[0]:
        return -np.inf
    total = 0.0
    wprev = 0.0
    for i in range(n):
        w = math.exp(b * (math.log(xs[i] - tau) - math.log(a)))
        total += _g(w - wprev) - w
        wprev = w
    return total


@numba.njit(cache=True, nogil=True)
def _reparam_obj(th, xs):
    a = math.exp(th[0])
    b = math.exp(th[1])
    tau = xs[0] - math.exp(th[2])
    if not tau < xs[0]:
        return -np.inf
    n = xs.shape[0]
    eu = math.exp(th[2])
    total = 0.0
    wprev = 0.0
    for i in range(n):
        d = xs[i] - xs[0] + eu
        w = math.exp(b * (math.log(d) - th[0]))
        total += _g(w - wprev) - w
        wprev = w
    return total


@numba.njit(cache=True, nogil=True)
def _reparam_derivs(th, xs, grad, hess):
    """Objective, gradient and Hessian in (log a, log b, u)."""
    n = xs.shape[0]
    b = math.exp(th[1])
    eu = math.exp(th[2])
    for r in range(3):
        grad[r] = 0.0
        for c in range(3):
            hess[r, c] = 0.0
    total = 0.0
    wprev = 0.0
    gw_prev = np.zeros(3)
    hw_prev = np.zeros((3, 3))
    gw = np.zeros(3)
    hw = np.zeros((3, 3))
    dv = np.zeros(3)
    for i in range(n):
        d = xs[i] - xs[0] + eu
        ell = math.log(d) - th[0]
        v = b * ell
        w = math.exp(v)
        dv[0] = -b
        dv[1] = v
        dv[2] = b * eu / d
        # second derivatives of v
        v_ab = -b
        v_bb = v
        v_bu = dv[2]
        v_uu = b * eu * (xs[i] - xs[0]) / (d * d)
        for r in range(3):
            gw[r] = w * dv[r]
            for c in range(3):
                hw[r, c] = w * dv[r] * dv[c]
        hw[0, 1] += w * v_ab
        hw[1, 0] += w * v_ab
        hw[1, 1] += w * v_bb
        hw[1, 2] += w * v_bu
        hw[2, 1] += w * v_bu
        hw[2, 2] += w * v_uu
        D = w - wprev
        gD = _g(D)
        total += gD - w
        if gD > LOG_FLOOR:
            em = math.expm1(D)
            g1 = 1.0 / em
            g2 = -(em + 1.0) / (em * em)
            for r in range(3):
                dDr = gw[r] - gw_prev[r]
                grad[r] += g1 * dDr
                for c in range(3):
                    dDc = gw[c] - gw_prev[c]
                    hess[r, c] += g2 * dDr * dDc + g1 * (hw[r, c] - hw_prev[r, c])
        for r in range(3):
            grad[r] -= gw[r]
            for c in range(3):
                hess[r, c] -= hw[r, c]
        wprev = w
        for r in range(3):
            gw_prev[r] = gw[r]
            for c in range(3):
                hw_prev[r, c] = hw[r, c]
    return total


@numba.njit(cache=True, nogil=True)
def _newton(th0, xs, lo, hi, max_iter):
    """Safeguarded Newton ascent; returns (theta, value, converged)."""
    th = th0.copy()
    for r in range(3):
        th[r] = min(max(th[r], lo[r]), hi[r])
    grad = np.zeros(3)
    hess = np.zeros((3, 3))
    f = _reparam_derivs(th, xs, grad, hess)
    if not np.isfinite(f):
        return th, f, False
    converged = False
    for it in range(max_iter):
        gmax = 0.0
        for r in range(3):
            gmax = max(gmax, abs(grad[r]))
        if gmax < 1e-9:
            converged = True
            break
        if not (np.isfinite(gmax) and np.all(np.isfinite(hess))):
            break
        lam, vec = np.linalg.eigh(-hess)
        lmax = 0.0
        for r in range(3):
            lmax = max(lmax, abs(lam[r]))
        floor = max(1e-10 * lmax, 1e-12)
        step = np.zeros(3)
        for r in range(3):
            proj = 0.0
            for c in range(3):
                proj += vec[c, r] * grad[c]
            denom = max(abs(lam[r]), floor)
            for c in range(3):
                step[c] += vec[c, r] * proj / denom
        smax = 0.0
        for r in range(3):
            smax = max(smax, abs(step[r]))
        if smax > 2.0:
            for r in range(3):
                step[r] *= 2.0 / smax
        slope = 0.0
        for r in range(3):
            slope += step[r] * grad[r]
        t = 1.0
        accepted = False
        trial = np.zeros(3)
        for _ in range(40):
            for r in range(3):
                trial[r] = min(max(th[r] + t * step[r], lo[r]), hi[r])
            ft = _reparam_obj(trial, xs)
            if np.isfinite(ft) and ft >= f + 1e-4 * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            converged = gmax < 1e-5
            break
        moved = 0.0
        for r in range(3):
            moved = max(moved, abs(trial[r] - th[r]))
            th[r] = trial[r]
        fnew = _reparam_derivs(th, xs, grad, hess)
        small = abs(fnew - f) <= 1e-14 * (1.0 + abs(f))
        f = fnew
        if moved < 1e-12 or small:
            gmax = 0.0
            for r in range(3):
                gmax = max(gmax, abs(grad[r]))
            converged = gmax < 1e-5
            break
    return th, f, converged


@numba.njit(cache=True, nogil=True)
def _bounds(xs):
    rng = xs[-1] - xs[0]
    if rng <= 0.0:
        rng = 1.0
    lo = np.array([math.log(1e-8 * rng), math.log(0.02), math.log(1e-12 * rng)])
    hi = np.array([math.log(1e8 * rng), math.log(100.0), math.log(1e4 * rng)])
    return lo, hi


@numba.njit(cache=True, nogil=True)
def _heuristic_start(xs, b0, c):
    n = xs.shape[0]
    gap = xs[1] - xs[0] if n > 1 else 1.0
    if gap <= 0.0:
        gap = max(xs[-1] - xs[0], 1.0) / n
    eu = c * gap
    med = xs[n // 2] - xs[0] + eu
    a0 = med / math.log(2.0) ** (1.0 / b0)
    return np.array([math.log(a0), math.log(b0), math.log(eu)])


@numba.njit(cache=True, nogil=True)
def _fit_batch(X, starts):
    """Fit every sorted row of ``X`` from its warm start; returns (params (M,3), flags (M,))."""
    M = X.shape[0]
    out = np.empty((M, 3))
    flags = np.zeros(M, dtype=np.int64)
    for m in range(M):
        xs = X[m]
        lo, hi = _bounds(xs)
        th0 = starts[m].copy()
        th0[2] = math.log(max(xs[0] - starts[m, 2], 1e-300))
        th0[0] = math.log(starts[m, 0])
        th0[1] = math.log(starts[m, 1])
        th, f, ok = _newton(th0, xs, lo, hi, 200)
        if not ok:
            th2, f2, ok2 = _newton(_heuristic_start(xs, 1.5, 1.0), xs, lo, hi, 200)
            if f2 > f:
                th, f, ok = th2, f2, ok2
        out[m, 0] = math.exp(th[0])
        out[m, 1] = math.exp(th[1])
        out[m, 2] = xs[0] - math.exp(th[2])
        flags[m] = 0 if ok else 1
    return out, flags


def mps_objective(a: float, b: float, tau: float, sorted_sample) -> float:
    """Log product of spacings; -inf when tau >= min(sample)."""
    xs = np.ascontiguousarray(sorted_sample, dtype=float)
    return float(mps_logobj(float(a), float(b), float(tau), xs))


HEURISTIC_STARTS = ((0.7, 0.5), (1.5, 1.0), (2.5, 3.0), (1.0, 0.1))


def mps_estimate(sample, budget: int = 1500, tol: float = 1e-10) -> tuple[np.ndarray, bool]:
    """MPS fit of ``(a, b, tau)``; returns the parameters and a convergence flag."""
    xs = np.sort(np.asarray(sample, dtype=float))
    if np.unique(xs).size < 3:
        raise ValueError("MPS estimation needs at least 3 distinct values")
    lo, hi = _bounds(xs)

    def obj(th):
        return float(_reparam_obj(np.clip(th, lo, hi), xs))

    best_th, best_f, ok = None, -np.inf, False
    for b0, c in HEURISTIC_STARTS:
        start = _heuristic_start(xs, b0, c)
        res = nelder_mead(obj, start, scale=np.array([0.3, 0.3, 0.5]), budget=budget, tol=tol, lower=lo, upper=hi)
        if res.value > best_f:
            best_th, best_f, ok = res.x, res.value, res.converged
    th, f, nok = _newton(np.asarray(best_th, dtype=float), xs, lo, hi, 200)
    if f >= best_f:
        best_th, best_f, ok = th, f, bool(nok) or ok
    at_bound = bool(np.any(np.isclose(best_th, lo) | np.isclose(best_th, hi)))
    params = np.array([math.exp(best_th[0]), math.exp(best_th[1]), xs[0] - math.exp(best_th[2])])
    return params, ok and not at_bound


def simulate_weibull(a, b, tau, n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    u = rng.random((size, n))
    x = tau + a * (-np.log1p(-u)) ** (1.0 / b)
    x.sort(axis=1)
    return x


def weibull_cdf(x, a, b, tau):
    z = np.maximum(np.asarray(x, dtype=float) - tau, 0.0) / a
    return -np.expm1(-(z**b))


def delta_n(b_hat: float, n: int) -> float:
    return 4.0 * math.exp(-((1.0 / b_hat) ** 5)) * math.log(n) / math.sqrt(n)


def neighborhood(a_hat, b_hat, tau_hat, n, labels=("a", "b", "tau")) -> Region:
    d = delta_n(b_hat, n)
    c = np.array([a_hat, b_hat, tau_hat], dtype=float)
    lo, hi = c - d, c + d
    lo[:2] = np.maximum(lo[:2], POS_FLOOR)
    return Region(lo, hi, labels=labels)


class WeibullModel(Model):
    name = "weibull"
    supports_importance = False  # supports move with tau
    labels = ("a", "b", "tau")
    default_design = {"kind": "grid", "U": 3}

    def __init__(self, a: float = 2.5, b: float = 2.5, tau: float = 1.0, n: int = 20):
        self.a, self.b, self.tau = float(a), float(b), float(tau)
        self.n = int(n)
        self._cache_key = None
        self._cache_val = None
        self._flags = 0

    def _fit(self, data):
        key = data.tobytes()
        if key != self._cache_key:
            params, ok = mps_estimate(data)
            self._cache_key, self._cache_val = key, (params, ok)
            if not ok:
                self._flags += 1
        return self._cache_val[0]

    def generate(self, rng):
        return simulate_weibull(self.a, self.b, self.tau, self.n, 1, rng)[0]

    def truth(self):
        return np.array([self.a, self.b, self.tau])

    def estimate(self, data):
        return self._fit(np.asarray(data, dtype=float)).copy()

    def simulate(self, data, phi, size, rng, n=None):
        return simulate_weibull(phi[0], phi[1], phi[2], self.n if n is None else n, size, rng)

    def observed(self, data):
        return np.asarray(data, dtype=float)[None, :]

    def target(self, phi):
        return float(phi[2])

    def target_estimate(self, data, batch, phi=None):
        batch = np.ascontiguousarray(batch, dtype=float)
        if phi is None:
            return np.array([self._fit(row)[2] for row in batch])
        starts = np.tile(np.asarray(phi, dtype=float), (batch.shape[0], 1))
        params, flags = _fit_batch(batch, starts)
        self._flags += int(flags.sum())
        return params[:, 2]

    def point_estimate(self, data):
        return float(self.estimate(data)[2])

    def neighborhood(self, data, theta_hat, delta=None):
        return neighborhood(theta_hat[0], theta_hat[1], theta_hat[2], self.n, self.labels)

    def sample_size(self, data):
        return self.n

    def flags(self):
        out = [f"optimizer-flags: {self._flags}"] if self._flags else []
        self._flags = 0
        return out
