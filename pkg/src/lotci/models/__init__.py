"""Model plug-ins and the name registry used by the harness and the CLI."""

from __future__ import annotations

from .binomial import BinomialModel
from .hdreg import HdRegressionModel
from .multinomial import MultinomialModel
from .normal import NormalMeanModel
from .npreg import NpRegressionModel
from .weibull import WeibullModel

REGISTRY = {
    "binomial": BinomialModel,
    "normal": NormalMeanModel,
    "multinomial": MultinomialModel,
    "weibull": WeibullModel,
    "hdreg": HdRegressionModel,
    "npreg": NpRegressionModel,
}


def make_model(name: str, config: dict | None = None):
    try:
        cls = REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(REGISTRY)}") from None
    return cls(**(config or {}))


__all__ = [
    "REGISTRY",
    "make_model",
    "BinomialModel",
    "HdRegressionModel",
    "MultinomialModel",
    "NormalMeanModel",
    "NpRegressionModel",
    "WeibullModel",
]
