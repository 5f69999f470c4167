"""Special functions, semi-infinite quadrature and bracketing root finding.

Every integral of the form ``int_0^inf d * exp(-c d^2) * g(d) dd`` that shows up
in the coverage kernels is mapped onto ``(0, 1]`` with ``u = exp(-c d^2)``.
The Gaussian factor then becomes the Lebesgue measure and what is left for the
adaptive Gauss-Kronrod rule is the slowly varying residual ``g``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


class ConvergenceError(ArithmeticError):
    """A numerical routine failed to reach its tolerance."""


class BracketError(ValueError):
    """The target value is not bracketed by the search interval."""


@dataclass(frozen=True)
class QuadratureConfig:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-9
    max_subdivisions: int = 200

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be > 0")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be > 0")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")


DEFAULT_QUADRATURE = QuadratureConfig()


def beta(x: float, y: float) -> float:
    """Complete Beta function B(x, y)."""
    if not (x > 0 and y > 0):
        raise DomainError(f"beta requires x > 0 and y > 0, got ({x}, {y})")
    return float(special.beta(x, y))


def comp_inc_beta(x: float, y: float, z: float) -> float:
    """Complementary incomplete Beta function, the integral of
    ``u^(x-1) (1-u)^(y-1)`` over ``[z, 1]``.

    ``y`` may lie in (0, 1); the endpoint singularity at ``u = 1`` is handled
    by the regularized complement, which is evaluated directly rather than as
    ``1 - I_z`` so no cancellation occurs as ``z -> 1``.
    """
    if not x > 0:
        raise DomainError(f"comp_inc_beta requires x > 0, got {x}")
    if not y > 0:
        raise DomainError(f"comp_inc_beta requires y > 0, got {y}")
    if not 0.0 <= z <= 1.0:
        raise DomainError(f"comp_inc_beta requires z in [0, 1], got {z}")
    if z == 0.0:
        return beta(x, y)
    if z == 1.0:
        return 0.0
    return float(special.betaincc(x, y, z)) * beta(x, y)


def _quad_unit(h: Callable[[float], float], cfg: QuadratureConfig) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, err = integrate.quad(
                h, 0.0, 1.0,
                epsabs=cfg.abs_tol, epsrel=cfg.rel_tol, limit=cfg.max_subdivisions,
            )
        except integrate.IntegrationWarning as exc:
            raise ConvergenceError(str(exc)) from exc
    if not math.isfinite(value):
        raise ConvergenceError("quadrature produced a non-finite value")
    return value


def integrate_gaussian_weighted(g: Callable[[float], float], rate: float,
                                cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """Return ``int_0^inf d exp(-rate d^2) g(d) dd`` for bounded ``g``."""
    if not rate > 0:
        raise DomainError(f"rate must be > 0, got {rate}")

    def h(u):
        return g(math.sqrt(-math.log(u) / rate))

    return _quad_unit(h, cfg) / (2.0 * rate)


def integrate_semi_infinite(f: Callable[[float], float],
                            cfg: QuadratureConfig = DEFAULT_QUADRATURE,
                            rate: float = 1.0) -> float:
    """Integrate ``f`` over ``[0, inf)``.

    ``rate`` is the coefficient ``c`` of the dominating ``exp(-c d^2)`` factor of
    ``f``; it sets the substitution ``u = exp(-c d^2)``.
    """
    if not rate > 0:
        raise DomainError(f"rate must be > 0, got {rate}")

    def h(u):
        d = math.sqrt(-math.log(u) / rate)
        if d == 0.0:
            return 0.0
        return f(d) / (2.0 * rate * d * u)

    return _quad_unit(h, cfg)


def bisect_monotone(g: Callable[[float], float], target: float, lo: float, hi: float,
                    tol: float = 1e-12, max_iter: int = 400) -> float:
    """Solve ``g(v) = target`` for nondecreasing ``g`` on ``[lo, hi]``.

    Returns as soon as ``|g(v) - target| <= tol`` or the bracket is narrower
    than ``tol``.
    """
    g_lo, g_hi = g(lo), g(hi)
    if not g_lo <= target <= g_hi:
        raise BracketError(f"target {target} outside [g(lo), g(hi)] = [{g_lo}, {g_hi}]")
    if abs(g_lo - target) <= tol:
        return lo
    if abs(g_hi - target) <= tol:
        return hi
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        g_mid = g(mid)
        if abs(g_mid - target) <= tol or hi - lo <= tol:
            return mid
        if g_mid < target:
            lo = mid
        else:
            hi = mid
        if mid in (lo, hi) and hi - lo <= np.spacing(abs(mid)) * 4:
            return mid
    return 0.5 * (lo + hi)
