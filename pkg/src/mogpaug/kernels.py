"""Isotropic stationary covariance functions and their algebra.

Every kernel here depends on its inputs only through the Euclidean distance
``r = ||x - x'||``, so a kernel expression is evaluated by computing one
distance matrix and mapping the expression tree over it elementwise.

The squared-exponential atom uses the ``exp(-r**2 / gamma**2)``
parameterisation.  To convert from the more common ``exp(-r**2 / (2 l**2))``
form use ``gamma = sqrt(2) * l``.

Atoms carry unit amplitude; amplitude lives in :class:`Scaled` wrappers or in
the coregionalisation matrix of the multi-output model, never in both unless
you mean it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _accel
from .errors import InputError, ParameterError

SQRT5 = math.sqrt(5.0)


def _check_positive(name, value):
    value = float(value)
    if not (math.isfinite(value) and value > 0.0):
        raise ParameterError(f"{name} must be a positive finite number, got {value!r}")
    return value


class KernelSpec:
    """Immutable node of a kernel expression tree."""

    def value(self, r):
        raise NotImplementedError

    def grad(self, r):
        """Partial derivatives w.r.t. :meth:`params`, one array per parameter."""
        raise NotImplementedError

    def params(self) -> tuple:
        raise NotImplementedError

    def param_names(self, prefix="") -> list:
        raise NotImplementedError

    def positive_mask(self) -> list:
        """All hyperparameters are positive; kept explicit for the optimiser."""
        return [True] * len(self.params())

    def with_params(self, values: Sequence[float]) -> "KernelSpec":
        values = list(values)
        if len(values) != len(self.params()):
            raise ParameterError(
                f"expected {len(self.params())} parameters, got {len(values)}"
            )
        spec, rest = self._consume(values)
        assert not rest
        return spec

    def _consume(self, values):
        raise NotImplementedError

    def rescaled(self, factor: float) -> "KernelSpec":
        """Same kernel expressed in coordinates multiplied by ``factor``."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def __add__(self, other):
        return Sum(self, other)

    def __mul__(self, other):
        return Product(self, other)


@dataclass(frozen=True)
class RBF(KernelSpec):
    gamma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "gamma", _check_positive("gamma", self.gamma))

    def value(self, r):
        r = np.asarray(r, dtype=float)
        return np.exp(-(r * r) / (self.gamma * self.gamma))

    def grad(self, r):
        r = np.asarray(r, dtype=float)
        g = self.gamma
        return [2.0 * r * r / g**3 * np.exp(-(r * r) / (g * g))]

    def params(self):
        return (self.gamma,)

    def param_names(self, prefix=""):
        return [prefix + "rbf.gamma"]

    def _consume(self, values):
        return RBF(values[0]), values[1:]

    def rescaled(self, factor):
        return RBF(self.gamma * factor)

    def to_dict(self):
        return {"type": "rbf", "gamma": self.gamma}


@dataclass(frozen=True)
class Matern52(KernelSpec):
    h: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "h", _check_positive("h", self.h))

    def value(self, r):
        u = SQRT5 * np.asarray(r, dtype=float) / self.h
        return (1.0 + u + u * u / 3.0) * np.exp(-u)

    def grad(self, r):
        u = SQRT5 * np.asarray(r, dtype=float) / self.h
        return [u * u * (1.0 + u) / (3.0 * self.h) * np.exp(-u)]

    def params(self):
        return (self.h,)

    def param_names(self, prefix=""):
        return [prefix + "matern52.h"]

    def _consume(self, values):
        return Matern52(values[0]), values[1:]

    def rescaled(self, factor):
        return Matern52(self.h * factor)

    def to_dict(self):
        return {"type": "matern52", "h": self.h}


@dataclass(frozen=True)
class Scaled(KernelSpec):
    variance: float
    inner: KernelSpec

    def __post_init__(self):
        v = float(self.variance)
        if not (math.isfinite(v) and v >= 0.0):
            raise ParameterError(f"variance must be finite and >= 0, got {v!r}")
        object.__setattr__(self, "variance", v)

    def value(self, r):
        return self.variance * self.inner.value(r)

    def grad(self, r):
        return [self.inner.value(r)] + [self.variance * g for g in self.inner.grad(r)]

    def params(self):
        return (self.variance,) + self.inner.params()

    def param_names(self, prefix=""):
        return [prefix + "scaled.variance"] + self.inner.param_names(prefix + "scaled.")

    def _consume(self, values):
        inner, rest = self.inner._consume(values[1:])
        return Scaled(values[0], inner), rest

    def rescaled(self, factor):
        return Scaled(self.variance, self.inner.rescaled(factor))

    def to_dict(self):
        return {"type": "scaled", "variance": self.variance, "inner": self.inner.to_dict()}


@dataclass(frozen=True)
class Sum(KernelSpec):
    left: KernelSpec
    right: KernelSpec

    def value(self, r):
        return self.left.value(r) + self.right.value(r)

    def grad(self, r):
        return self.left.grad(r) + self.right.grad(r)

    def params(self):
        return self.left.params() + self.right.params()

    def param_names(self, prefix=""):
        return self.left.param_names(prefix + "sum.0.") + self.right.param_names(prefix + "sum.1.")

    def _consume(self, values):
        left, rest = self.left._consume(values)
        right, rest = self.right._consume(rest)
        return Sum(left, right), rest

    def rescaled(self, factor):
        return Sum(self.left.rescaled(factor), self.right.rescaled(factor))

    def to_dict(self):
        return {"type": "sum", "left": self.left.to_dict(), "right": self.right.to_dict()}


@dataclass(frozen=True)
class Product(KernelSpec):
    left: KernelSpec
    right: KernelSpec

    def value(self, r):
        return self.left.value(r) * self.right.value(r)

    def grad(self, r):
        lv, rv = self.left.value(r), self.right.value(r)
        return [g * rv for g in self.left.grad(r)] + [lv * g for g in self.right.grad(r)]

    def params(self):
        return self.left.params() + self.right.params()

    def param_names(self, prefix=""):
        return self.left.param_names(prefix + "product.0.") + self.right.param_names(
            prefix + "product.1."
        )

    def _consume(self, values):
        left, rest = self.left._consume(values)
        right, rest = self.right._consume(rest)
        return Product(left, right), rest

    def rescaled(self, factor):
        return Product(self.left.rescaled(factor), self.right.rescaled(factor))

    def to_dict(self):
        return {"type": "product", "left": self.left.to_dict(), "right": self.right.to_dict()}


def kernel_from_dict(d: dict) -> KernelSpec:
    try:
        kind = d["type"]
        if kind == "rbf":
            return RBF(d["gamma"])
        if kind == "matern52":
            return Matern52(d["h"])
        if kind == "scaled":
            return Scaled(d["variance"], kernel_from_dict(d["inner"]))
        if kind == "sum":
            return Sum(kernel_from_dict(d["left"]), kernel_from_dict(d["right"]))
        if kind == "product":
            return Product(kernel_from_dict(d["left"]), kernel_from_dict(d["right"]))
    except (KeyError, TypeError) as exc:
        raise ParameterError(f"malformed kernel spec {d!r}: {exc}") from None
    raise ParameterError(f"unknown kernel type {kind!r}")


def _as_points(X, name="X"):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InputError(f"{name} must be a 2-D array of points, got shape {X.shape}")
    return X


def _as_point(x):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1:
        raise InputError(f"a point must be 1-D, got shape {x.shape}")
    return x


def _distance(x, x2):
    x, x2 = _as_point(x), _as_point(x2)
    if x.shape != x2.shape:
        raise InputError(f"dimension mismatch: {x.shape[0]} vs {x2.shape[0]}")
    return float(np.sqrt(np.sum((x - x2) ** 2)))


def eval_kernel(spec: KernelSpec, x, x2) -> float:
    """k(x, x') for two points of equal dimension."""
    return float(spec.value(_distance(x, x2)))


def kernel_gradient(spec: KernelSpec, x, x2) -> np.ndarray:
    """Partials of k(x, x') w.r.t. ``spec.params()`` in the same order."""
    return np.array([float(g) for g in spec.grad(_distance(x, x2))])


def distance_matrix(X1, X2=None):
    X1 = _as_points(X1, "X1")
    if X2 is None:
        return _accel.self_distances(X1)
    X2 = _as_points(X2, "X2")
    if X1.shape[1] != X2.shape[1]:
        raise InputError(f"dimension mismatch: {X1.shape[1]} vs {X2.shape[1]}")
    return _accel.pairwise_distances(X1, X2)


def gram_matrix(spec: KernelSpec, X) -> np.ndarray:
    """Exactly symmetric N x N matrix of k(x_i, x_j)."""
    try:
        X = _as_points(X)
    except ValueError as exc:  # ragged nested lists
        raise InputError(f"ragged input points: {exc}") from None
    if X.shape[0] < 1:
        raise InputError("gram_matrix needs at least one point")
    return spec.value(distance_matrix(X))


def cross_matrix(spec: KernelSpec, X1, X2) -> np.ndarray:
    return spec.value(distance_matrix(X1, X2))
