"""CSV input schemas for observed data, one per model.

=============  ==============================================================
model          columns
=============  ==============================================================
binomial       ``x,n``: a single row with the success count and trial count
normal         ``x``: one observation per row
multinomial    ``count``: one cell count per row
weibull        ``x``: one observation per row
hdreg          ``y,x1,...,xp``: response then covariates, one unit per row
npreg          ``y``: responses on the equally spaced design, in design order
=============  ==============================================================
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .models import make_model
from .models.hdreg import RegressionData


class DataError(ValueError):
    pass


def _read_rows(path) -> tuple[list[str], np.ndarray]:
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if len(rows) < 2:
        raise DataError(f"{path}: need a header row and at least one data row")
    header = [h.strip() for h in rows[0]]
    width = len(header)
    try:
        values = np.array([[float(c) for c in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric entry ({exc})") from exc
    if any(len(r) != width for r in rows[1:]):
        raise DataError(f"{path}: ragged rows")
    if not np.all(np.isfinite(values)):
        raise DataError(f"{path}: non-finite entry")
    return header, values


def _require(header, expected, path):
    if header != expected:
        raise DataError(f"{path}: expected columns {expected}, got {header}")


def _whole(v, what):
    if np.any(v < 0) or np.any(v != np.round(v)):
        raise DataError(f"{what} must be nonnegative integers")
    return v.astype(np.int64)


def load_data(model_name: str, path, config: dict | None = None):
    """Parse ``path`` for ``model_name`` and return ``(model, data)``.

    Sample-size style settings (n, k, p) are taken from the file and override ``config``.
    """
    config = dict(config or {})
    header, v = _read_rows(path)
    path = Path(path)
    if model_name == "binomial":
        _require(header, ["x", "n"], path)
        if v.shape[0] != 1:
            raise DataError(f"{path}: binomial data is a single row")
        x, n = _whole(v[0], "x and n")
        if x > n or n < 1:
            raise DataError("need 0 <= x <= n and n >= 1")
        config["n"] = int(n)
        return make_model("binomial", config), int(x)
    if model_name == "normal":
        _require(header, ["x"], path)
        x = v[:, 0]
        if x.size < 2:
            raise DataError("need at least two observations")
        config["n"] = int(x.size)
        model = make_model("normal", config)
        mean = float(x.mean())
        if model.known_sigma:
            return model, mean
        return model, np.array([mean, float(((x - mean) ** 2).sum())])
    if model_name == "multinomial":
        _require(header, ["count"], path)
        c = _whole(v[:, 0], "counts")
        if c.size < 2 or c.sum() < 1:
            raise DataError("need at least two cells and one observation")
        config["n"] = int(c.sum())
        config.setdefault("pi", tuple(np.full(c.size, 1.0 / c.size)))
        config.pop("k", None)
        return make_model("multinomial", config), c
    if model_name == "weibull":
        _require(header, ["x"], path)
        x = np.sort(v[:, 0])
        if x.size < 3 or np.any(np.diff(x) <= 0):
            raise DataError("need at least three distinct observations")
        config["n"] = int(x.size)
        return make_model("weibull", config), x
    if model_name == "hdreg":
        p = len(header) - 1
        _require(header, ["y"] + [f"x{j + 1}" for j in range(p)], path)
        if p < 2:
            raise DataError("need at least two covariates")
        config["n"], config["p"] = int(v.shape[0]), p
        return make_model("hdreg", config), RegressionData(v[:, 1:], v[:, 0])
    if model_name == "npreg":
        _require(header, ["y"], path)
        if v.shape[0] < 3:
            raise DataError("need at least three responses")
        config["n"] = int(v.shape[0])
        return make_model("npreg", config), v[:, 0].copy()
    raise DataError(f"unknown model {model_name!r}")


def write_data(model_name: str, data, path) -> None:
    """Inverse of :func:`load_data` for generated datasets (normal needs raw observations)."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if model_name == "binomial":
            x, n = data
            w.writerow(["x", "n"])
            w.writerow([int(x), int(n)])
        elif model_name == "multinomial":
            w.writerow(["count"])
            w.writerows([[int(c)] for c in data])
        elif model_name in ("weibull", "normal"):
            w.writerow(["x"])
            w.writerows([[repr(float(x))] for x in data])
        elif model_name == "npreg":
            w.writerow(["y"])
            w.writerows([[repr(float(x))] for x in data])
        elif model_name == "hdreg":
            p = data.X.shape[1]
            w.writerow(["y"] + [f"x{j + 1}" for j in range(p)])
            for yi, row in zip(data.y, data.X):
                w.writerow([repr(float(yi))] + [repr(float(t)) for t in row])
        else:
            raise DataError(f"unknown model {model_name!r}")


__all__ = ["DataError", "load_data", "write_data"]
