"""Analytical success probability of the typical user.

File loads are Poisson-binomial: each other file served by the same BS is
requested by at least one of its users independently, with the activity
probabilities below.  Coverage kernels are conditioned on the load ``k``,
which splits the bandwidth ``W`` across ``k`` multicast streams.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .combinatorics import CombinationIndex
from .model import ContentParams, HybridDesign, Marginals, PhyParams, validate_design
from .numerics import (DEFAULT_QUADRATURE, DomainError, QuadratureConfig, beta,
                       comp_inc_beta, integrate_gaussian_weighted)

__all__ = [
    "LoadPmf", "EvalReport", "poisson_binomial_pmf", "poisson_binomial_g",
    "activity_prob_macro", "activity_prob_pico", "macro_load_pmfs", "pico_load_pmf",
    "f1k", "f2k", "f1k_inf", "f2k_inf", "f2k_inf_grad", "closed_form_constants",
    "f1k_inf_closed", "f2k_inf_closed", "q1_general", "pico_combination_values",
    "q_general", "q_asymptotic", "q_asymptotic_closed",
]


@dataclass(frozen=True)
class LoadPmf:
    support_min: int
    probs: tuple

    def __post_init__(self):
        object.__setattr__(self, "probs", tuple(float(v) for v in self.probs))

    @property
    def support(self) -> range:
        return range(self.support_min, self.support_min + len(self.probs))

    def pmf(self, k: int) -> float:
        j = k - self.support_min
        return self.probs[j] if 0 <= j < len(self.probs) else 0.0

    def mean(self) -> float:
        return float(np.dot(np.asarray(self.support), self.probs))


@dataclass(frozen=True)
class EvalReport:
    q: float
    q1: float
    q2: float
    per_file: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"q": self.q, "q1": self.q1, "q2": self.q2,
                "per_file": {str(n): v for n, v in sorted(self.per_file.items())}}


# ---------------------------------------------------------------- loads

def poisson_binomial_pmf(probs: Sequence[float]) -> np.ndarray:
    """Distribution of the number of successes among independent Bernoulli
    trials, by sequential convolution."""
    pmf = np.zeros(len(probs) + 1)
    pmf[0] = 1.0
    for j, p in enumerate(probs):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"probability {p} outside [0, 1]")
        pmf[1:j + 2] = pmf[1:j + 2] * (1.0 - p) + pmf[:j + 1] * p
        pmf[0] *= 1.0 - p
    return pmf


def poisson_binomial_g(probs_active: Sequence[float], k: int) -> float:
    """Probability that exactly ``k`` of the indicators fire."""
    if not 0 <= k <= len(probs_active):
        raise ValueError(f"k={k} outside [0, {len(probs_active)}]")
    return float(poisson_binomial_pmf(probs_active)[k])


def activity_prob_macro(a_m: float, lambda_u: float, lambda1: float) -> float:
    """Probability that file ``m`` is requested in the serving macro cell."""
    return -math.expm1(-4.5 * math.log1p(a_m * lambda_u / (3.5 * lambda1)))


def activity_prob_pico(a_m: float, lambda_u: float, T_m: float, lambda2: float) -> float:
    """Same for a pico cell; files never cached at picos are never active."""
    if T_m <= 0.0:
        return 0.0
    return -math.expm1(-4.5 * math.log1p(a_m * lambda_u / (3.5 * T_m * lambda2)))


def macro_load_pmfs(content: ContentParams, phy: PhyParams, F1c, F1b, n: int):
    """Loads seen by a macro user requesting ``n``.

    For ``n`` cached: (cached load on 1..K1c, backhaul demand on 0..F1b).
    For ``n`` fetched: (cached load on 0..K1c, backhaul demand on 1..F1b).
    """
    F1c, F1b = sorted(F1c), sorted(F1b)

    def act(ms):
        return [activity_prob_macro(content.pop(m), phy.lambda_u, phy.lambda1) for m in ms if m != n]

    if n in F1c:
        cached = LoadPmf(1, poisson_binomial_pmf(act(F1c)))
        back = LoadPmf(0, poisson_binomial_pmf(act(F1b)))
    elif n in F1b:
        cached = LoadPmf(0, poisson_binomial_pmf(act(F1c)))
        back = LoadPmf(1, poisson_binomial_pmf(act(F1b)))
    else:
        raise ValueError(f"file {n} is neither cached at nor fetched by macro BSs")
    return cached, back


def _T_lookup(idx: CombinationIndex, T) -> dict:
    if isinstance(T, Marginals):
        return T.T
    if isinstance(T, Mapping):
        return {int(k): float(v) for k, v in T.items()}
    return dict(zip(idx.F2c, (float(v) for v in T)))


def _combo_member_pmfs(content: ContentParams, phy: PhyParams, combo, Tmap: dict) -> dict:
    """For each file in ``combo``, the pico load pmf on 1..K2c given that
    the serving pico stores ``combo``."""
    act = {m: activity_prob_pico(content.pop(m), phy.lambda_u, Tmap[m], phy.lambda2) for m in combo}
    return {n: poisson_binomial_pmf([act[m] for m in combo if m != n]) for n in combo}


def pico_load_pmf(content: ContentParams, phy: PhyParams, idx: CombinationIndex, p, T, n: int) -> LoadPmf:
    """Load at the serving pico of a user requesting ``n``, mixed over the
    combinations that contain ``n`` with weights ``p_i / T_n``."""
    Tmap = _T_lookup(idx, T)
    if n not in idx.position:
        raise ValueError(f"file {n} is not in F2c")
    Tn = Tmap[n]
    if Tn <= 0.0:
        raise ZeroDivisionError(f"T_{n} = 0: file {n} is never cached at picos")
    out = np.zeros(idx.K2c)
    for i in idx.containing[n]:
        if p[i] == 0.0:
            continue
        combo = idx.combos[i]
        act = [activity_prob_pico(content.pop(m), phy.lambda_u, Tmap[m], phy.lambda2) for m in combo if m != n]
        out += p[i] / Tn * poisson_binomial_pmf(act)
    return LoadPmf(1, out)


# ---------------------------------------------------------------- kernels

def _shape(alpha: float):
    d = 2.0 / alpha
    return d, beta(d, 1.0 - d)


@lru_cache(maxsize=None)
def _f1k(phy: PhyParams, k: int, cfg: QuadratureConfig) -> float:
    s = phy.threshold(k)
    z = 1.0 / (1.0 + s)
    d1, _ = _shape(phy.alpha1)
    d2, B2 = _shape(phy.alpha2)
    B1c = comp_inc_beta(d1, 1.0 - d1, z)
    rate = math.pi * phy.lambda1 + 2.0 * math.pi * phy.lambda1 / phy.alpha1 * s ** d1 * B1c
    cross = 2.0 * math.pi * phy.lambda2 / phy.alpha2 * (s * phy.P2 / phy.P1) ** d2 * B2
    cross_pow = 2.0 * phy.alpha1 / phy.alpha2
    noise = s * phy.N0 / phy.P1

    def g(d):
        return math.exp(-noise * d ** phy.alpha1 - cross * d ** cross_pow)

    return 2.0 * math.pi * phy.lambda1 * integrate_gaussian_weighted(g, rate, cfg)


def _pico_terms(phy: PhyParams, k: int, x: float):
    s = phy.threshold(k)
    z = 1.0 / (1.0 + s)
    d1, B1 = _shape(phy.alpha1)
    d2, B2 = _shape(phy.alpha2)
    B2c = comp_inc_beta(d2, 1.0 - d2, z)
    self_coef = 2.0 * math.pi * phy.lambda2 / phy.alpha2 * s ** d2
    rate = math.pi * phy.lambda2 * x + self_coef * (x * B2c + (1.0 - x) * B2)
    kappa = math.pi * phy.lambda2 + self_coef * (B2c - B2)
    cross = 2.0 * math.pi * phy.lambda1 / phy.alpha1 * (s * phy.P1 / phy.P2) ** d1 * B1
    cross_pow = 2.0 * phy.alpha2 / phy.alpha1
    noise = s * phy.N0 / phy.P2

    def g(d):
        return math.exp(-noise * d ** phy.alpha2 - cross * d ** cross_pow)

    return rate, kappa, g


@lru_cache(maxsize=None)
def _f2k(phy: PhyParams, k: int, x: float, cfg: QuadratureConfig) -> float:
    if x == 0.0:
        return 0.0
    rate, _, g = _pico_terms(phy, k, x)
    return 2.0 * math.pi * phy.lambda2 * x * integrate_gaussian_weighted(g, rate, cfg)


def _check_k(k):
    if k < 1:
        raise DomainError(f"load k must be >= 1 (got {k})")


def f1k(phy: PhyParams, k: int, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """Coverage of a macro user when its serving macro multicasts ``k`` files."""
    _check_k(k)
    return _f1k(phy, int(k), cfg)


def f2k(phy: PhyParams, k: int, x: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """Coverage of a pico user whose file is cached with probability ``x``."""
    _check_k(k)
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"x must lie in [0, 1] (got {x})")
    return _f2k(phy, int(k), float(x), cfg)


def f1k_inf(phy: PhyParams, k: int, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    return f1k(phy.asymptotic(), k, cfg)


def f2k_inf(phy: PhyParams, k: int, x: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    return f2k(phy.asymptotic(), k, x, cfg)


@lru_cache(maxsize=None)
def _f2k_inf_grad(phy: PhyParams, k: int, x: float, cfg: QuadratureConfig) -> float:
    rate, kappa, g = _pico_terms(phy, k, x)
    j0 = integrate_gaussian_weighted(g, rate, cfg)
    j2 = integrate_gaussian_weighted(lambda d: g(d) * d * d, rate, cfg) if x > 0 else 0.0
    return 2.0 * math.pi * phy.lambda2 * (j0 - x * kappa * j2)


def f2k_inf_grad(phy: PhyParams, k: int, x: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """Derivative in ``x`` of the noise-free pico kernel.

    At ``x = 0`` the right-hand limit is returned; it is finite because the
    ``f/x`` term tends to ``2 pi lambda2`` times the ``x = 0`` integral.
    """
    _check_k(k)
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"x must lie in [0, 1] (got {x})")
    return _f2k_inf_grad(phy.asymptotic(), int(k), float(x), cfg)


def closed_form_constants(phy: PhyParams, k: int):
    """``(omega_k, theta1_k, theta2_k)`` of the equal path-loss noise-free case."""
    if not phy.equal_alpha:
        raise DomainError("closed forms need alpha1 == alpha2")
    _check_k(k)
    alpha = phy.alpha1
    d, B = _shape(alpha)
    s = phy.threshold(k)
    Bc = comp_inc_beta(d, 1.0 - d, 1.0 / (1.0 + s))
    beta_ = phy.beta
    sd = s ** d
    omega = d * sd * Bc + 2.0 * phy.lambda2 / (alpha * phy.lambda1) * (s / beta_) ** d * B + 1.0
    theta1 = d * sd * (Bc - B) + 1.0
    theta2 = d * sd * B + 2.0 * phy.lambda1 / (alpha * phy.lambda2) * (beta_ * s) ** d * B
    return omega, theta1, theta2


def f1k_inf_closed(phy: PhyParams, k: int) -> float:
    return 1.0 / closed_form_constants(phy, k)[0]


def f2k_inf_closed(phy: PhyParams, k: int, x):
    _, t1, t2 = closed_form_constants(phy, k)
    x = np.asarray(x, dtype=float)
    out = x / (t2 + t1 * x)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------- q

def q1_general(phy: PhyParams, content: ContentParams, F1c, F1b,
               cfg: QuadratureConfig = DEFAULT_QUADRATURE):
    """Macro-tier part of the success probability and per-file values."""
    K1b = content.K1b
    per_file = {}
    f1 = {}

    def kern(k):
        if k not in f1:
            f1[k] = f1k(phy, k, cfg)
        return f1[k]

    for n in sorted(set(F1c) | set(F1b)):
        cached, back = macro_load_pmfs(content, phy, F1c, F1b, n)
        total = 0.0
        for kc, pc in zip(cached.support, cached.probs):
            if pc == 0.0:
                continue
            for kb, pb in zip(back.support, back.probs):
                if pb == 0.0:
                    continue
                served = min(K1b, kb)
                k = kc + served
                if n in F1b:
                    # the requested file must win the backhaul lottery
                    w = served / kb
                else:
                    w = 1.0
                if w == 0.0 or k == 0:
                    continue
                total += pc * pb * w * kern(k)
        per_file[n] = total
    q1 = math.fsum(content.pop(n) * v for n, v in per_file.items())
    return q1, per_file


def pico_combination_values(phy: PhyParams, content: ContentParams, idx: CombinationIndex, T,
                            cfg: QuadratureConfig = DEFAULT_QUADRATURE):
    """Per-combination coefficients ``c`` with ``q2 = c @ p`` for any ``p``
    whose marginals are ``T``.

    Also returns ``h[i][n]``, the success probability of file ``n`` given that
    the serving pico stores combination ``i``.
    """
    Tmap = _T_lookup(idx, T)
    K2c = idx.K2c
    c = np.zeros(idx.I)
    h = []
    f2 = {}
    for i, combo in enumerate(idx.combos):
        if any(Tmap[m] <= 0.0 for m in combo):
            h.append({})
            continue
        pmfs = _combo_member_pmfs(content, phy, combo, Tmap)
        hi = {}
        for n in combo:
            Tn = Tmap[n]
            val = 0.0
            for kk in range(1, K2c + 1):
                w = pmfs[n][kk - 1]
                if w == 0.0:
                    continue
                key = (kk, Tn)
                if key not in f2:
                    f2[key] = f2k(phy, kk, min(Tn, 1.0), cfg)
                val += w * f2[key]
            hi[n] = val
            c[i] += content.pop(n) / Tn * val
        h.append(hi)
    return c, h


def q_general(phy: PhyParams, content: ContentParams, design: HybridDesign,
              cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> EvalReport:
    """Success probability in the general (finite SNR, finite user density) region."""
    from .combinatorics import enumerate_combinations, marginals_from_p

    vd = validate_design(phy, content, design)
    q1, per_file = q1_general(phy, content, vd.F1c, vd.F1b, cfg)
    idx = enumerate_combinations(vd.F2c, content.K2c)
    p = np.asarray(vd.p)
    T = marginals_from_p(idx, p).T
    _, h = pico_combination_values(phy, content, idx, T, cfg)
    for n in vd.F2c:
        Tn = T[n]
        if Tn <= 0.0:
            per_file[n] = 0.0
            continue
        per_file[n] = math.fsum(p[i] / Tn * h[i][n] for i in idx.containing[n] if p[i] > 0.0)
    q2 = math.fsum(content.pop(n) * per_file[n] for n in vd.F2c)
    return _report(q1, q2, per_file, content)


def _report(q1, q2, per_file, content) -> EvalReport:
    for n in content.files:
        per_file.setdefault(n, 0.0)
    return EvalReport(q=q1 + q2, q1=q1, q2=q2, per_file=dict(sorted(per_file.items())))


def _asym_common(content: ContentParams, F1c, F2c, T):
    F1c = sorted(F1c)
    F2c = tuple(sorted(F2c))
    if set(F1c) & set(F2c):
        raise ValueError("F1c and F2c must be disjoint")
    F1b = sorted(set(content.files) - set(F1c) - set(F2c))
    if isinstance(T, Marginals):
        Tmap = T.T
    elif isinstance(T, Mapping):
        Tmap = {int(k): float(v) for k, v in T.items()}
    else:
        Tmap = dict(zip(F2c, (float(v) for v in T)))
    if set(Tmap) != set(F2c):
        raise ValueError("marginals must be given for exactly the files in F2c")
    if abs(math.fsum(Tmap.values()) - content.K2c) > 1e-8:
        raise ValueError(f"marginals must sum to K2c={content.K2c}")
    served = min(content.K1b, len(F1b))
    return F1c, F2c, F1b, Tmap, served


def _asym_report(content, F1c, F2c, F1b, Tmap, served, f1_val, f2_fun) -> EvalReport:
    per_file = {n: f1_val for n in F1c}
    frac = served / len(F1b) if F1b else 0.0
    for n in F1b:
        per_file[n] = f1_val * frac
    for n in F2c:
        per_file[n] = f2_fun(Tmap[n]) if Tmap[n] > 0 else 0.0
    q1 = math.fsum(content.pop(n) * per_file[n] for n in list(F1c) + list(F1b))
    q2 = math.fsum(content.pop(n) * per_file[n] for n in F2c)
    return _report(q1, q2, per_file, content)


def q_asymptotic(phy: PhyParams, content: ContentParams, F1c, F2c, T,
                 cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> EvalReport:
    """High-SNR, high-user-density limit evaluated by quadrature."""
    F1c, F2c, F1b, Tmap, served = _asym_common(content, F1c, F2c, T)
    f1_val = f1k_inf(phy, content.K1c + served, cfg)
    return _asym_report(content, F1c, F2c, F1b, Tmap, served, f1_val,
                        lambda x: f2k_inf(phy, content.K2c, min(x, 1.0), cfg))


def q_asymptotic_closed(phy: PhyParams, content: ContentParams, F1c, F2c, T) -> EvalReport:
    """Same limit for equal path-loss exponents, in closed form."""
    if not phy.equal_alpha:
        raise DomainError("closed forms need alpha1 == alpha2")
    F1c, F2c, F1b, Tmap, served = _asym_common(content, F1c, F2c, T)
    f1_val = f1k_inf_closed(phy, content.K1c + served)
    _, t1, t2 = closed_form_constants(phy, content.K2c)
    return _asym_report(content, F1c, F2c, F1b, Tmap, served, f1_val, lambda x: x / (t2 + t1 * x))
