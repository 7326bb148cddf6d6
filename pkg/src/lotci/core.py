"""Local optimization-based tests (LOT) and confidence intervals (LOCI).

All procedures are generic over a :class:`Model`. Randomness comes from a
:class:`~lotci.streams.Streams` object: try point ``l`` always draws its
resamples from substream ``l``, so results do not depend on evaluation order
and appending try points leaves the existing ones untouched. Importance
sampling draws one shared resample set from substream 0, the same stream the
plain bootstrap uses, which is what makes the center-only designs reduce
exactly to the bootstrap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .design import Region, TryDesign
from .numopt import multistart_max
from .streams import as_streams

ESS_WARN = 50.0


class InferenceError(ValueError):
    pass


class Model:
    """Plug-in interface.

    A dataset is whatever :meth:`generate` returns. A *batch* is a stack of
    simulated datasets with the resample index on axis 0; ``observed(data)`` is
    the observed dataset as a batch of one. Batch methods receive the observed
    dataset as context (e.g. a fixed design matrix).
    """

    name = "model"
    supports_importance = False
    null_constraint = None
    labels: tuple[str, ...] | None = None
    default_delta: float | None = None
    default_design: dict | None = None
    # known range of the target functional; interval limits are clipped into it
    target_range: tuple[float, float] | None = None

    def generate(self, rng: np.random.Generator):
        raise NotImplementedError

    def truth(self) -> np.ndarray:
        raise NotImplementedError

    def true_target(self) -> float:
        return self.target(self.truth())

    def estimate(self, data) -> np.ndarray:
        raise NotImplementedError

    def simulate(self, data, phi, size: int, rng: np.random.Generator, n: int | None = None):
        raise NotImplementedError

    def observed(self, data):
        raise NotImplementedError

    def statistic(self, data, batch) -> np.ndarray:
        raise NotImplementedError

    def target(self, phi) -> float:
        raise NotImplementedError

    def target_estimate(self, data, batch, phi=None) -> np.ndarray:
        raise NotImplementedError

    def log_density(self, data, batch, phi) -> np.ndarray:
        raise NotImplementedError

    def neighborhood(self, data, theta_hat, delta: float | None = None) -> Region:
        raise NotImplementedError

    def sample_size(self, data) -> int:
        raise NotImplementedError

    def point_estimate(self, data) -> float:
        return float(self.target_estimate(data, self.observed(data))[0])

    def observed_statistic(self, data) -> float:
        return float(self.statistic(data, self.observed(data))[0])

    def flags(self) -> list[str]:
        """Runtime warnings accumulated since the last call (cleared on read)."""
        return []


@dataclass
class PValueResult:
    p: float
    points: np.ndarray
    per_point: np.ndarray
    method: str
    resamples: int
    statistic: float
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "method": self.method,
            "resamples": self.resamples,
            "statistic": self.statistic,
            "per_point": [
                {"point": pt.tolist(), "value": float(v)} for pt, v in zip(self.points, self.per_point)
            ],
            "warnings": list(self.warnings),
        }


@dataclass
class CiResult:
    lower: float
    upper: float
    level: float
    method: str
    estimate: float
    points: np.ndarray
    lower_quantiles: np.ndarray
    upper_quantiles: np.ndarray
    warnings: list[str] = field(default_factory=list)

    @property
    def length(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper

    def to_dict(self) -> dict:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "level": self.level,
            "method": self.method,
            "estimate": self.estimate,
            "per_point_quantiles": [
                {"point": pt.tolist(), "lower": float(a), "upper": float(b)}
                for pt, a, b in zip(self.points, self.lower_quantiles, self.upper_quantiles)
            ],
            "warnings": list(self.warnings),
        }


def _order_index(gamma: float, M: int) -> int:
    # ceil(gamma * M), guarded against products like 0.975 * 1000 = 975.0000000000001
    k = math.ceil(gamma * M - 1e-9)
    return min(max(k, 1), M)


def sample_quantile(values, gamma: float) -> float:
    """The ceil(gamma * M)-th order statistic."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise InferenceError("sample_quantile of empty input")
    if not 0.0 < gamma < 1.0:
        raise InferenceError("gamma must lie in (0, 1)")
    k = _order_index(gamma, v.size)
    return float(np.partition(v, k - 1)[k - 1])


def weighted_quantile(values, weights, gamma: float, M: int | None = None) -> float:
    """Smallest v with (1/M) * sum(w_m * 1{x_m <= v}) >= gamma; +inf when the mass never gets there."""
    v = np.asarray(values, dtype=float).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    if v.size != w.size or v.size == 0:
        raise InferenceError("values and weights must be non-empty and of equal length")
    if np.any(w < 0) or not np.any(w > 0):
        raise InferenceError("weights must be nonnegative with some positive")
    M = v.size if M is None else M
    order = np.argsort(v, kind="stable")
    cum = np.cumsum(w[order])
    target = gamma * M - 1e-9 * M
    hit = np.flatnonzero(cum >= target)
    if hit.size == 0:
        return math.inf
    return float(v[order][hit[0]])


def effective_sample_size(weights) -> float:
    w = np.asarray(weights, dtype=float)
    s2 = float(np.dot(w, w))
    return float(w.sum() ** 2 / s2) if s2 > 0 else 0.0


def _check_M(M):
    if int(M) <= 0:
        raise InferenceError("number of resamples M must be positive")
    return int(M)


def _rejection_fraction(model, data, phi, M, gen, t) -> float:
    batch = model.simulate(data, phi, M, gen)
    T = model.statistic(data, batch)
    return float(np.count_nonzero(T >= t)) / M


def bootstrap_pvalue(model: Model, data, M: int, rng) -> PValueResult:
    M = _check_M(M)
    streams = as_streams(rng)
    theta_hat = np.asarray(model.estimate(data), dtype=float)
    t = model.observed_statistic(data)
    p = _rejection_fraction(model, data, theta_hat, M, streams.generator(0), t)
    return PValueResult(p, theta_hat[None, :], np.array([p]), "bootstrap", M, t, model.flags())


def nb_pvalue(model: Model, data, region: Region, design: TryDesign, M: int, rng) -> PValueResult:
    """Neighborhood-bootstrap p-value: fresh resamples at every try point, maximum rejection fraction."""
    M = _check_M(M)
    if len(design) == 0:
        raise InferenceError("empty design")
    streams = as_streams(rng)
    t = model.observed_statistic(data)
    vals = np.array(
        [_rejection_fraction(model, data, phi, M, streams.generator(l), t) for l, phi in enumerate(design.points)]
    )
    warnings = model.flags()
    if design.center_projected:
        warnings.append("center-projected")
    return PValueResult(float(vals.max()), design.points.copy(), vals, "neighborhood-bootstrap", M, t, warnings)


class ImportanceObjective:
    """Sample-average approximation of the rejection probability at phi.

    The resamples are drawn once at ``theta_hat`` and reused for every phi;
    each evaluation only reweights them by f(X*, phi) / f(X*, theta_hat).
    """

    def __init__(self, model: Model, data, theta_hat, batch, t: float):
        self.model = model
        self.data = data
        self.theta_hat = np.asarray(theta_hat, dtype=float)
        self.batch = batch
        self.indicator = (model.statistic(data, batch) >= t).astype(float)
        self.base_logf = np.asarray(model.log_density(data, batch, self.theta_hat), dtype=float)
        if not np.all(np.isfinite(self.base_logf)):
            raise InferenceError("log_density is not finite at the center")
        self.M = self.indicator.size

    def weights(self, phi) -> np.ndarray:
        phi = np.asarray(phi, dtype=float)
        if np.array_equal(phi, self.theta_hat):
            return np.ones(self.M)
        logf = np.asarray(self.model.log_density(self.data, self.batch, phi), dtype=float)
        if not np.all(np.isfinite(logf)):
            raise InferenceError("log_density is not finite at a try point")
        return np.exp(logf - self.base_logf)

    def __call__(self, phi) -> float:
        return float(np.dot(self.indicator, self.weights(phi)) / self.M)


def is_objective(model: Model, data, phi, resamples, theta_hat=None) -> float:
    if not model.supports_importance:
        raise InferenceError(f"model {model.name!r} has no common support; importance sampling is unavailable")
    theta_hat = model.estimate(data) if theta_hat is None else theta_hat
    obj = ImportanceObjective(model, data, theta_hat, resamples, model.observed_statistic(data))
    return obj(phi)


def _importance_setup(model, data, M, rng):
    if not model.supports_importance:
        raise InferenceError(f"model {model.name!r} has no common support; importance sampling is unavailable")
    M = _check_M(M)
    streams = as_streams(rng)
    theta_hat = np.asarray(model.estimate(data), dtype=float)
    batch = model.simulate(data, theta_hat, M, streams.generator(0))
    return ImportanceObjective(model, data, theta_hat, batch, model.observed_statistic(data))


def _design_values(obj: ImportanceObjective, design: TryDesign):
    vals = np.empty(len(design))
    warnings = []
    for l, phi in enumerate(design.points):
        w = obj.weights(phi)
        vals[l] = float(np.dot(obj.indicator, w) / obj.M)
        ess = effective_sample_size(w)
        if ess < ESS_WARN:
            warnings.append(f"low-ess point {l}: {ess:.1f}")
    return vals, warnings


def is_pvalue_design(model: Model, data, design: TryDesign, M: int, rng) -> PValueResult:
    if len(design) == 0:
        raise InferenceError("empty design")
    obj = _importance_setup(model, data, M, rng)
    vals, warnings = _design_values(obj, design)
    p = min(1.0, float(vals.max()))
    t = model.observed_statistic(data)
    return PValueResult(p, design.points.copy(), vals, "importance-design", obj.M, t, warnings + model.flags())


def _free_objective(fn, region: Region, center):
    # optimise over the free axes only; other coordinates follow the center
    from .design import UnitDesign, expand_design

    axes = region.free_axes()
    width = region.upper[axes] - region.lower[axes]

    def full(z):
        psi = (np.asarray(z, dtype=float) - region.lower[axes]) / np.where(width > 0, width, 1.0)
        return expand_design(UnitDesign(psi[None, :]), region, center)[0]

    def objective(z):
        x = full(z)
        if not region.contains(x):
            return -math.inf
        return fn(x)

    return axes, full, objective


def is_pvalue_refined(
    model: Model, data, region: Region, design: TryDesign, M: int, rng, budget: int | None = None, tol: float = 1e-8
) -> PValueResult:
    """Design values followed by Nelder-Mead refinement of the top three try points."""
    if len(design) == 0:
        raise InferenceError("empty design")
    obj = _importance_setup(model, data, M, rng)
    vals, warnings = _design_values(obj, design)
    points = design.points.copy()
    best = float(vals.max())
    axes, full, objective = _free_objective(obj, region, design.points[0])
    if axes.size:
        top = np.argsort(-vals, kind="stable")[:3]
        starts = [design.points[i][axes] for i in top]
        sub = Region(region.lower[axes], region.upper[axes])
        res = multistart_max(objective, starts, sub, budget, tol)
        if res.value > best:
            best = res.value
            points = np.vstack([points, full(res.x)])
            vals = np.append(vals, res.value)
    t = model.observed_statistic(data)
    return PValueResult(min(1.0, best), points, vals, "importance-refined", obj.M, t, warnings + model.flags())


def _tail_levels(alpha: float, side: str):
    if not 0.0 < alpha < 1.0:
        raise InferenceError("alpha must lie in (0, 1)")
    if side == "two-sided":
        return alpha / 2.0, 1.0 - alpha / 2.0
    if side == "upper":
        return None, 1.0 - alpha
    if side == "lower":
        return alpha, None
    raise InferenceError(f"unknown side {side!r}")


def _clip_range(model, lower, upper):
    if model.target_range is None:
        return lower, upper
    lo, hi = model.target_range
    return min(max(lower, lo), hi), min(max(upper, lo), hi)


def _limits(xi_hat, qlo, qhi, lo_level, hi_level):
    lower = xi_hat + float(np.min(qlo)) if lo_level is not None else -math.inf
    upper = xi_hat + float(np.max(qhi)) if hi_level is not None else math.inf
    return lower, upper


def nb_ci(
    model: Model, data, region: Region | None, design: TryDesign, M: int, rng, alpha: float = 0.05, side: str = "two-sided"
) -> CiResult:
    """Neighborhood-bootstrap LOCI: extreme per-point pivot quantiles over the try points."""
    M = _check_M(M)
    if len(design) == 0:
        raise InferenceError("empty design")
    lo_level, hi_level = _tail_levels(alpha, side)
    streams = as_streams(rng)
    xi_hat = model.point_estimate(data)
    L = len(design)
    qlo = np.full(L, np.nan)
    qhi = np.full(L, np.nan)
    for l, phi in enumerate(design.points):
        batch = model.simulate(data, phi, M, streams.generator(l))
        piv = model.target(phi) - np.asarray(model.target_estimate(data, batch, phi), dtype=float)
        piv = np.sort(piv)
        if lo_level is not None:
            qlo[l] = piv[_order_index(lo_level, M) - 1]
        if hi_level is not None:
            qhi[l] = piv[_order_index(hi_level, M) - 1]
    lower, upper = _limits(xi_hat, qlo, qhi, lo_level, hi_level)
    method = "bootstrap-hybrid" if L == 1 else "neighborhood-bootstrap"
    warnings = model.flags()
    if design.center_projected:
        warnings.append("center-projected")
    lower, upper = _clip_range(model, lower, upper)
    return CiResult(lower, upper, 1 - alpha, method, xi_hat, design.points.copy(), qlo, qhi, warnings)


def hybrid_bootstrap_ci(model: Model, data, M: int, rng, alpha: float = 0.05, side: str = "two-sided") -> CiResult:
    theta_hat = np.asarray(model.estimate(data), dtype=float)
    return nb_ci(model, data, None, TryDesign(theta_hat[None, :]), M, rng, alpha, side)


def is_ci(
    model: Model, data, region: Region | None, design: TryDesign, M: int, rng, alpha: float = 0.05, side: str = "two-sided"
) -> CiResult:
    """Importance-weighted LOCI: weighted pivot quantiles on one shared resample set."""
    if len(design) == 0:
        raise InferenceError("empty design")
    lo_level, hi_level = _tail_levels(alpha, side)
    if not model.supports_importance:
        raise InferenceError(f"model {model.name!r} has no common support; importance sampling is unavailable")
    M = _check_M(M)
    streams = as_streams(rng)
    theta_hat = np.asarray(model.estimate(data), dtype=float)
    batch = model.simulate(data, theta_hat, M, streams.generator(0))
    est = np.asarray(model.target_estimate(data, batch, theta_hat), dtype=float)
    base = np.asarray(model.log_density(data, batch, theta_hat), dtype=float)
    xi_hat = model.point_estimate(data)
    L = len(design)
    qlo = np.full(L, np.nan)
    qhi = np.full(L, np.nan)
    warnings = []
    for l, phi in enumerate(design.points):
        if np.array_equal(phi, theta_hat):
            w = np.ones(M)
        else:
            w = np.exp(np.asarray(model.log_density(data, batch, phi), dtype=float) - base)
        ess = effective_sample_size(w)
        if ess < ESS_WARN:
            warnings.append(f"low-ess point {l}: {ess:.1f}")
        piv = model.target(phi) - est
        if lo_level is not None:
            qlo[l] = weighted_quantile(piv, w, lo_level, M)
        if hi_level is not None:
            qhi[l] = weighted_quantile(piv, w, hi_level, M)
    lower, upper = _limits(xi_hat, qlo, qhi, lo_level, hi_level)
    if math.isinf(upper) and hi_level is not None:
        warnings.append("infinite-upper: weighted mass below level")
    lower, upper = _clip_range(model, lower, upper)
    return CiResult(lower, upper, 1 - alpha, "importance-weighted", xi_hat, design.points.copy(), qlo, qhi, warnings)


def is_ci_upper(model: Model, data, region: Region | None, design: TryDesign, M: int, rng, gamma: float) -> CiResult:
    return is_ci(model, data, region, design, M, rng, 1.0 - gamma, "upper")


def m_out_of_n_ci(model: Model, data, m: int, M: int, rng, alpha: float = 0.05) -> CiResult:
    """Equal-tailed m-out-of-n bootstrap interval from pivots sqrt(m) * (xi(theta_hat) - xi_hat*)."""
    M = _check_M(M)
    n = model.sample_size(data)
    if not 1 <= int(m) <= n:
        raise InferenceError(f"m must lie in [1, n={n}]")
    m = int(m)
    lo_level, hi_level = _tail_levels(alpha, "two-sided")
    streams = as_streams(rng)
    theta_hat = np.asarray(model.estimate(data), dtype=float)
    xi_hat = model.point_estimate(data)
    batch = model.simulate(data, theta_hat, M, streams.generator(0), n=m)
    piv = model.target(theta_hat) - np.asarray(model.target_estimate(data, batch, theta_hat), dtype=float)
    if m != n:
        piv = piv * math.sqrt(m) / math.sqrt(n)
    piv = np.sort(piv)
    qlo = piv[_order_index(lo_level, M) - 1]
    qhi = piv[_order_index(hi_level, M) - 1]
    lower, upper = _clip_range(model, xi_hat + qlo, xi_hat + qhi)
    return CiResult(
        lower, upper, 1 - alpha, "m-out-of-n", xi_hat, theta_hat[None, :], np.array([qlo]), np.array([qhi]),
        model.flags(),
    )
