"""SCAD and LASSO penalties."""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, PenaltyDomainError

FAMILIES = ("scad", "lasso", "none")
DEFAULT_A = 3.7


@dataclass(frozen=True)
class PenaltySpec:
    """Penalty family with its tuning constants.

    ``family="none"`` ignores ``lam``; ``a`` is only used by SCAD.
    """

    family: str = "scad"
    lam: float = 0.0
    a: float = DEFAULT_A

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown penalty family {self.family!r}")
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ConfigurationError(f"lambda must be finite and >= 0, got {self.lam}")
        if self.family == "scad" and not self.a > 2:
            raise ConfigurationError(f"SCAD needs a > 2, got {self.a}")

    @property
    def active(self):
        """True when the penalty can shrink anything."""
        return self.family != "none" and self.lam > 0

    def with_lambda(self, lam):
        return PenaltySpec(self.family, float(lam), self.a)


def penalty_value(spec, theta):
    """Penalty evaluated elementwise at ``theta`` (scalar or array)."""
    theta = np.abs(np.asarray(theta, dtype=float))
    lam, a = spec.lam, spec.a
    if spec.family == "none":
        out = np.zeros_like(theta)
    elif spec.family == "lasso":
        out = lam * theta
    else:
        mid = -(theta ** 2 - 2 * a * lam * theta + lam ** 2) / (2 * (a - 1))
        out = np.where(theta <= lam, lam * theta,
                       np.where(theta <= a * lam, mid, (a + 1) * lam ** 2 / 2))
    return out[()] if out.ndim == 0 else out


def penalty_derivative(spec, theta):
    """Derivative of the penalty at magnitudes ``theta > 0``.

    At the joints ``theta = lam`` and ``theta = a * lam`` the left-piece
    value is returned.
    """
    theta = np.asarray(theta, dtype=float)
    if np.any(~(theta > 0)):
        raise PenaltyDomainError("penalty derivative requested at theta <= 0")
    return _derivative_unchecked(spec, theta)


def _derivative_unchecked(spec, theta):
    lam, a = spec.lam, spec.a
    if spec.family == "none":
        out = np.zeros_like(theta, dtype=float)
    elif spec.family == "lasso":
        out = np.full_like(theta, lam, dtype=float)
    else:
        out = np.where(theta <= lam, lam,
                       np.where(theta <= a * lam, (a * lam - theta) / (a - 1), 0.0))
    out = np.asarray(out, dtype=float)
    return out[()] if out.ndim == 0 else out
