"""Loudspeaker saturation modelled by the Scaled Error Function (SEF).

``f(y) = integral_0^y exp(-z^2 / (2 eta^2)) dz = eta*sqrt(pi/2)*erf(y / (sqrt(2)*eta))``
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ConfigurationError
from .signal import Signal

_TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)
# erfc(6) ~ 2.2e-17, below double-precision resolution of 1.0
_ERF_SATURATION = 6.0


def erf(x) -> np.ndarray:
    """Error function, absolute accuracy ~1e-15 on the whole real line.

    Uses the all-positive-terms series
    ``erf(x) = 2/sqrt(pi) * exp(-x^2) * sum_n 2^n x^(2n+1) / (1*3*...*(2n+1))``
    which has no cancellation, and returns +-1 for ``|x| >= 6``.
    """
    x = np.asarray(x, dtype=np.float64)
    ax = np.minimum(np.abs(x), _ERF_SATURATION)
    x2 = ax * ax
    term = ax.copy()
    total = ax.copy()
    n = 0
    while True:
        n += 1
        term = term * (2.0 * x2) / (2 * n + 1)
        total = total + term
        # terms decay monotonically once 2n+1 > 2x^2
        if 2 * n + 1 > 2.0 * float(np.max(x2, initial=0.0)) and np.all(term <= 1e-17 * total):
            break
    out = _TWO_OVER_SQRT_PI * np.exp(-x2) * total
    out = np.where(np.abs(x) >= _ERF_SATURATION, 1.0, np.minimum(out, 1.0))
    return np.copysign(out, x)


@dataclass(frozen=True)
class LoudspeakerModel:
    """Linear loudspeaker (``eta_sq is None``) or SEF saturation with ``eta_sq``."""

    eta_sq: float | None = None

    def __post_init__(self):
        if self.eta_sq is not None:
            if not (self.eta_sq > 0 and math.isfinite(self.eta_sq)):
                raise ConfigurationError(f"eta_sq must be a positive finite number, got {self.eta_sq!r}")

    @classmethod
    def linear(cls) -> "LoudspeakerModel":
        return cls(None)

    @classmethod
    def saturating(cls, eta_sq: float) -> "LoudspeakerModel":
        return cls(float(eta_sq))

    @classmethod
    def from_config(cls, value: Union[str, float, None]) -> "LoudspeakerModel":
        """Accept a positive number or the literal ``"inf"`` (linear)."""
        return cls(parse_eta_sq(value))

    @property
    def is_linear(self) -> bool:
        return self.eta_sq is None

    @property
    def eta(self) -> float:
        return math.inf if self.eta_sq is None else math.sqrt(self.eta_sq)

    @property
    def ceiling(self) -> float:
        """Output magnitude limit ``eta*sqrt(pi/2)`` (inf when linear)."""
        return self.eta * math.sqrt(math.pi / 2.0)

    def config_value(self) -> Union[str, float]:
        return "inf" if self.eta_sq is None else self.eta_sq

    def apply_array(self, y: np.ndarray) -> np.ndarray:
        if self.eta_sq is None:
            return np.asarray(y, dtype=np.float64)
        eta = self.eta
        return eta * math.sqrt(math.pi / 2.0) * erf(np.asarray(y) / (math.sqrt(2.0) * eta))

    def derivative_array(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if self.eta_sq is None:
            return np.ones_like(y)
        return np.exp(-(y * y) / (2.0 * self.eta_sq))


def parse_eta_sq(value) -> float | None:
    """``"inf"``/``None``/``inf`` mean linear; anything else must be a positive number."""
    if value is None:
        return None
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinity"):
            return None
        try:
            value = float(value)
        except ValueError:
            raise ConfigurationError(f"eta_sq must be a positive number or 'inf', got {value!r}") from None
    value = float(value)
    if math.isinf(value) and value > 0:
        return None
    if not value > 0 or math.isnan(value):
        raise ConfigurationError(f"eta_sq must be positive, got {value!r}")
    return value


def apply(model: LoudspeakerModel, y: Signal) -> Signal:
    return y.with_samples(model.apply_array(y.samples))


def derivative(model: LoudspeakerModel, y):
    """``f'(y) = exp(-y^2 / (2 eta^2))``; 1 for the linear model. Scalars stay scalars."""
    out = model.derivative_array(y)
    return float(out) if out.ndim == 0 else out
