"""Dual (conjugate) activations for unit-variance-normalized nonlinearities.

For an activation ``sigma`` with Gaussian mean 0 and variance 1 the dual is

    dual(rho) = E[sigma(u) sigma(v)],  (u, v) ~ N(0, [[1, rho], [rho, 1]]),

which for a Hermite expansion ``sigma = sum_i a_i h_i`` equals
``sum_i a_i**2 rho**i``.  Kernel code only ever sees a :class:`DualActivation`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import hermite_e
from numpy.polynomial import polynomial as poly
from scipy import integrate
from scipy.special import erf

QUADRATURE_NODES = 128
NORMALIZATION_TOL = 1e-10
DOMAIN_SLACK = 1e-12

_ASIN_TWO_THIRDS = math.asin(2.0 / 3.0)
# E[erf(X)^2] for X ~ N(0, 1)
_ERF_SCALE = math.sqrt(2.0 / math.pi * _ASIN_TWO_THIRDS)
_RELU_SHIFT = 1.0 / math.sqrt(2.0 * math.pi)
_RELU_VAR = 0.5 - 1.0 / (2.0 * math.pi)

KINDS = ("erf_normalized", "relu_normalized", "hermite_series")


class DomainError(ValueError):
    """Raised when a correlation lies outside [-1, 1]."""


def _check_rho(rho):
    r = np.asarray(rho, dtype=np.float64)
    if np.any(np.abs(r) > 1.0 + DOMAIN_SLACK) or np.any(np.isnan(r)):
        raise DomainError(f"correlation outside [-1, 1]: max |rho| = {np.nanmax(np.abs(r))!r}")
    return np.clip(r, -1.0, 1.0)


def _maybe_scalar(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


@dataclass(frozen=True)
class ActivationSpec:
    """Which normalized activation to use.

    ``coefficients`` are the normalized Hermite coefficients a_1, a_2, ...
    (a_0 is implicitly zero) and are only meaningful for ``hermite_series``.
    """

    kind: str
    coefficients: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown activation kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "coefficients", tuple(float(a) for a in self.coefficients))
        if self.kind == "hermite_series":
            if not self.coefficients:
                raise ValueError("hermite_series needs at least one coefficient")
            total = math.fsum(a * a for a in self.coefficients)
            if abs(total - 1.0) > NORMALIZATION_TOL:
                raise ValueError(
                    f"Hermite coefficients must satisfy sum a_i^2 = 1, got {total!r}"
                )
        elif self.coefficients:
            raise ValueError(f"{self.kind} takes no coefficients")

    @classmethod
    def from_config(cls, value) -> "ActivationSpec":
        """Parse ``"erf"``, ``"relu"`` or ``{"hermite": [a1, a2, ...]}``."""
        if isinstance(value, str):
            aliases = {"erf": "erf_normalized", "relu": "relu_normalized"}
            return cls(aliases.get(value, value))
        if isinstance(value, dict) and set(value) == {"hermite"}:
            return cls("hermite_series", tuple(value["hermite"]))
        raise ValueError(f"cannot parse activation spec {value!r}")

    def to_config(self):
        if self.kind == "hermite_series":
            return {"hermite": list(self.coefficients)}
        return {"erf_normalized": "erf", "relu_normalized": "relu"}[self.kind]


@dataclass(frozen=True)
class DualActivation:
    """Dual activation together with the pointwise activation it came from.

    ``activation``/``activation_deriv`` act on pre-activations and are used by
    the finite-width gradient-kernel oracle; kernel evaluation uses only
    ``eval`` and ``deriv``.
    """

    name: str
    eval: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray]
    activation: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    activation_deriv: Callable[[np.ndarray], np.ndarray] = field(repr=False)

    @cached_property
    def deriv_at_one(self) -> float:
        return float(self.deriv(1.0))

    @cached_property
    def mu(self) -> float:
        return nonlinearity_coefficient(self)

    def __call__(self, rho):
        return self.eval(rho)


# -- closed forms ---------------------------------------------------------


def dual_erf(rho):
    """Dual of erf normalized to unit Gaussian variance: asin(2 rho/3)/asin(2/3)."""
    r = _check_rho(rho)
    return _maybe_scalar(np.arcsin(2.0 * r / 3.0) / _ASIN_TWO_THIRDS)


def dual_erf_derivative(rho):
    r = _check_rho(rho)
    out = (2.0 / 3.0) / (_ASIN_TWO_THIRDS * np.sqrt(1.0 - 4.0 * r * r / 9.0))
    return _maybe_scalar(out)


def dual_relu(rho):
    """Arc-cosine kernel of degree one, centred and rescaled to unit variance."""
    r = _check_rho(rho)
    raw = (np.sqrt(np.maximum(1.0 - r * r, 0.0)) + (math.pi - np.arccos(r)) * r) / (2.0 * math.pi)
    return _maybe_scalar((raw - _RELU_SHIFT**2) / _RELU_VAR)


def dual_relu_derivative(rho):
    r = _check_rho(rho)
    return _maybe_scalar((math.pi - np.arccos(r)) / (2.0 * math.pi) / _RELU_VAR)


def _erf_act(x):
    return erf(x) / _ERF_SCALE


def _erf_act_deriv(x):
    return 2.0 / math.sqrt(math.pi) * np.exp(-np.square(x)) / _ERF_SCALE


def _relu_act(x):
    return (np.maximum(x, 0.0) - _RELU_SHIFT) / math.sqrt(_RELU_VAR)


def _relu_act_deriv(x):
    return (np.asarray(x) > 0).astype(np.float64) / math.sqrt(_RELU_VAR)


# -- Hermite series -------------------------------------------------------


def dual_from_hermite(spec: ActivationSpec, rho):
    """Evaluate ``sum_i a_i^2 rho^i`` over the stored coefficients."""
    if spec.kind != "hermite_series":
        raise ValueError(f"expected a hermite_series spec, got {spec.kind}")
    r = _check_rho(rho)
    return _maybe_scalar(poly.polyval(r, _power_coefficients(spec.coefficients)))


def _power_coefficients(coefficients: Sequence[float]) -> np.ndarray:
    a = np.asarray(coefficients, dtype=np.float64)
    return np.concatenate([[0.0], a * a])


def _normalized_hermite_table(x: np.ndarray, degree: int) -> np.ndarray:
    """Rows h_0..h_degree of He_i / sqrt(i!) evaluated at ``x``."""
    x = np.asarray(x, dtype=np.float64)
    table = np.empty((degree + 1,) + x.shape)
    table[0] = 1.0
    if degree >= 1:
        table[1] = x
    for i in range(1, degree):
        table[i + 1] = (x * table[i] - math.sqrt(i) * table[i - 1]) / math.sqrt(i + 1)
    return table


def _hermite_activation(coefficients: Sequence[float]):
    a = np.asarray(coefficients, dtype=np.float64)
    degree = len(a)
    # h_i' = sqrt(i) h_{i-1}
    da = a * np.sqrt(np.arange(1, degree + 1))

    def act(x):
        table = _normalized_hermite_table(x, degree)
        return np.tensordot(a, table[1:], axes=1)

    def act_deriv(x):
        table = _normalized_hermite_table(x, degree)
        return np.tensordot(da, table[:-1], axes=1)

    return act, act_deriv


def _gauss_moment(fn: Callable[[float], float]) -> float:
    """E[fn(X)] for X ~ N(0, 1) by adaptive quadrature (robust to kinks)."""

    def integrand(x):
        return float(fn(np.asarray(x))) * math.exp(-0.5 * x * x)

    parts = [integrate.quad(integrand, lo, hi, limit=400, epsabs=1e-13, epsrel=1e-12)[0]
             for lo, hi in ((-40.0, 0.0), (0.0, 40.0))]
    return math.fsum(parts) / math.sqrt(2.0 * math.pi)


def normalize_activation(raw: Callable[[np.ndarray], np.ndarray]):
    """Return ``(shift, scale)`` so that ``(raw(x) - shift) / scale`` is normalized.

    Gaussian moments come from adaptive quadrature, so activations with
    kinks (ReLU and friends) are handled to full precision.
    """
    shift = _gauss_moment(raw)
    var = _gauss_moment(lambda x: (raw(x) - shift) ** 2)
    if var < 1e-12:
        raise ValueError(f"activation has (near) zero Gaussian variance: {var!r}")
    return shift, math.sqrt(var)


def hermite_spec_from_function(
    raw: Callable[[np.ndarray], np.ndarray],
    max_degree: int = 96,
    tol: float = NORMALIZATION_TOL,
    nodes: int = QUADRATURE_NODES,
) -> ActivationSpec:
    """Normalize ``raw`` and extract its Hermite coefficients by quadrature.

    The series is cut at the first index where the squared-coefficient tail
    drops below ``tol``.
    """
    shift, scale = normalize_activation(raw)
    x, w = hermite_e.hermegauss(nodes)
    sigma = (np.asarray(raw(x), dtype=np.float64) - shift) / scale
    table = _normalized_hermite_table(x, max_degree)
    coeffs = table[1:] @ (w * sigma) / math.sqrt(2.0 * math.pi)
    tail = 1.0 - np.cumsum(coeffs**2)
    cut = np.flatnonzero(tail < tol)
    if cut.size == 0:
        raise ValueError(
            f"Hermite tail still {tail[-1]:.3e} after {max_degree} terms; "
            "use a closed-form dual or raise max_degree"
        )
    kept = coeffs[: cut[0] + 1]
    # absorb the sub-tolerance residual so the stored list is exactly normalized
    kept = kept / math.sqrt(math.fsum(kept**2))
    return ActivationSpec("hermite_series", tuple(kept))


# -- construction ---------------------------------------------------------


def make_dual(spec: ActivationSpec | str | dict) -> DualActivation:
    if not isinstance(spec, ActivationSpec):
        spec = ActivationSpec.from_config(spec)
    if spec.kind == "erf_normalized":
        return DualActivation("erf", dual_erf, dual_erf_derivative, _erf_act, _erf_act_deriv)
    if spec.kind == "relu_normalized":
        return DualActivation("relu", dual_relu, dual_relu_derivative, _relu_act, _relu_act_deriv)

    c = _power_coefficients(spec.coefficients)
    dc = poly.polyder(c)

    def ev(rho):
        return _maybe_scalar(poly.polyval(_check_rho(rho), c))

    def dev(rho):
        return _maybe_scalar(poly.polyval(_check_rho(rho), dc))

    act, act_deriv = _hermite_activation(spec.coefficients)
    return DualActivation("hermite", ev, dev, act, act_deriv)


def dual_derivative(dual: DualActivation, rho):
    return dual.deriv(rho)


def nonlinearity_coefficient(dual: DualActivation) -> float:
    """mu = 1 - dual'(0), i.e. one minus the squared first Hermite coefficient."""
    mu = 1.0 - float(dual.deriv(0.0))
    if mu <= 0.0:
        raise ValueError(f"activation is linear (mu = {mu!r}); mu must lie in (0, 1]")
    return mu
