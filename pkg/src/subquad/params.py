"""Operator parameters and validation errors shared across modules."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass


class ParameterError(ValueError):
    """Raised when parameters leave their admissible range."""


class NumericalError(RuntimeError):
    """Raised when a numerical procedure fails (singular system, no convergence)."""


@dataclass(frozen=True)
class OperatorParams:
    """The quadruple (N, alpha, c, p) for S = -Delta + c|x|^-alpha in L^p(R^N).

    Parameters
    ----------
    N : int
        Space dimension, at least 2.
    alpha : float
        Strength of the singularity, 0 < alpha < 2.
    c : float
        Coupling constant (any real).
    p : float
        Lebesgue exponent, 1 < p < inf.
    """

    N: int
    alpha: float
    c: float = 0.0
    p: float = 2.0

    def __post_init__(self):
        if isinstance(self.N, bool) or int(self.N) != self.N or self.N < 2:
            raise ParameterError(f"dimension N must be an integer >= 2, got {self.N!r}")
        object.__setattr__(self, "N", int(self.N))
        if not (0.0 < self.alpha < 2.0):
            raise ParameterError(f"alpha must lie in the open interval (0, 2), got {self.alpha!r}")
        if not math.isfinite(self.c):
            raise ParameterError(f"coupling c must be finite, got {self.c!r}")
        if not (1.0 < self.p < math.inf):
            raise ParameterError(f"p must lie in the open interval (1, inf), got {self.p!r}")

    @property
    def s(self) -> float:
        """Base exponent 2 - alpha of the correction series."""
        return 2.0 - self.alpha

    def replace(self, **changes) -> "OperatorParams":
        d = asdict(self)
        d.update(changes)
        return OperatorParams(**d)

    def to_dict(self) -> dict:
        return asdict(self)
