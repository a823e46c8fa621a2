"""Analytic benchmark functions with known sensitivity structure."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

G_FUNCTION_A = (0.0, 1.0, 4.5, 9.0, 99.0, 99.0, 99.0, 99.0)
ARCTAN_RANGE = (-7.0, 7.0)


class DomainError(ValueError):
    """Input outside the function's domain."""


def sobol_g(x, a=G_FUNCTION_A) -> np.ndarray:
    """Sobol g-function ``prod_i (|4 x_i - 2| + a_i) / (1 + a_i)``.

    Parameters
    ----------
    x : array_like of shape (..., p)
        Points in the unit cube.
    a : array_like of shape (p,)
        Non-negative importance coefficients; smaller means more important.
    """
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    if x.shape[-1] != a.size:
        raise DomainError(f"x has {x.shape[-1]} coordinates, a has {a.size}")
    if np.any(a < 0):
        raise DomainError("coefficients a must be non-negative")
    if np.any(x < 0) or np.any(x > 1):
        raise DomainError("sobol_g is defined on the unit cube")
    return np.prod((np.abs(4.0 * x - 2.0) + a) / (1.0 + a), axis=-1)


def sobol_g_oracle(a=G_FUNCTION_A):
    """Exact first-order and total indices of the g-function.

    Returns
    -------
    S, ST : ndarray of shape (p,)
    """
    a = np.asarray(a, dtype=float)
    if np.any(a < 0):
        raise DomainError("coefficients a must be non-negative")
    Vi = (1.0 / 3.0) / (1.0 + a) ** 2
    V = np.prod(1.0 + Vi) - 1.0
    S = Vi / V
    rest = np.array([np.prod(np.delete(1.0 + Vi, i)) for i in range(a.size)])
    return S, Vi * rest / V


def time_grid(q: int = 100) -> np.ndarray:
    """``q`` equally spaced times ``2 pi (l - 1) / q`` on ``[0, 2 pi)``."""
    if q < 2:
        raise DomainError("q must be at least 2")
    return 2.0 * np.pi * np.arange(q) / q


def arctan_temporal(x, q: int = 100) -> np.ndarray:
    """``atan(x1) cos(t) + atan(x2) sin(t)`` on :func:`time_grid`.

    Parameters
    ----------
    x : array_like of shape (..., 2)
        Points in ``[-7, 7]^2``.
    q : int
        Number of time steps (outputs).

    Returns
    -------
    ndarray of shape (..., q)
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 2:
        raise DomainError("arctan_temporal takes two inputs")
    lo, hi = ARCTAN_RANGE
    if np.any(x < lo) or np.any(x > hi):
        raise DomainError(f"arctan_temporal is defined on [{lo}, {hi}]^2")
    t = time_grid(q)
    return (np.arctan(x[..., 0])[..., None] * np.cos(t)
            + np.arctan(x[..., 1])[..., None] * np.sin(t))


@dataclass(frozen=True)
class TestFunction:
    """A benchmark with a uniform input distribution on a box."""

    name: str
    p: int
    m: int
    fn: Callable
    lower: tuple
    upper: tuple

    __test__ = False

    def __call__(self, x):
        return self.fn(x)

    def from_scaled(self, z) -> np.ndarray:
        """Map points from ``[-1, 1]^p`` to the natural domain."""
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        return lo + (np.asarray(z, dtype=float) + 1.0) * (hi - lo) / 2.0

    def scaled(self, z) -> np.ndarray:
        """Evaluate on scaled inputs in ``[-1, 1]^p``; returns ``(..., m)``."""
        y = self.fn(np.clip(self.from_scaled(z), self.lower, self.upper))
        return y[..., None] if self.m == 1 else y


def get_test_function(name: str, a=G_FUNCTION_A, q: int = 100) -> TestFunction:
    """Registry lookup for ``sobol-g`` and ``arctan-temporal``."""
    if name in ("sobol-g", "sobol_g", "g"):
        a = tuple(float(v) for v in a)
        p = len(a)
        return TestFunction("sobol-g", p, 1, lambda x: sobol_g(x, a),
                            (0.0,) * p, (1.0,) * p)
    if name in ("arctan-temporal", "arctan_temporal", "arctan"):
        lo, hi = ARCTAN_RANGE
        return TestFunction("arctan-temporal", 2, q, lambda x: arctan_temporal(x, q),
                            (lo, lo), (hi, hi))
    raise DomainError(f"unknown test function {name!r}")


def g_function_spec(a: Optional[tuple] = None):
    """Variable specs for the g-function on the unit cube."""
    from .design import VariableSpec

    a = G_FUNCTION_A if a is None else a
    return [VariableSpec.continuous(f"x{i + 1}", 0.0, 1.0) for i in range(len(a))]
