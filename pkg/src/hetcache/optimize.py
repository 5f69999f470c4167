"""Two-step design optimization.

The continuous step finds the pico caching marginals ``T`` that maximize the
noise-free, saturated-load objective ``sum_n a_n f2(T_n)`` over the capped
simplex ``{0 <= T_n <= 1, sum T_n = K2c}``.  The discrete step searches the
consecutive-file family of macro cache / backhaul / pico pool partitions.  A
linear program then picks, among all combination distributions with the
optimal marginals, the one that is best at finite SNR and user density.
"""
from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from .analysis import (closed_form_constants, f1k_inf, f2k_inf, f2k_inf_grad,
                       pico_combination_values, q1_general, q_asymptotic, q_general)
from .combinatorics import CombinationIndex, enumerate_combinations, feasible_p_from_T, solve_marginal_lp
from .model import (ContentParams, HybridDesign, Marginals, PhyParams, ValidationError)
from .numerics import DEFAULT_QUADRATURE, ConvergenceError, DomainError, QuadratureConfig, bisect_monotone

__all__ = [
    "OptConfig", "Candidate", "Solution", "GradientResult", "project_capped_simplex",
    "optimize_T_gradient", "waterfill_closed_form", "waterfill_kkt_violation",
    "enumerate_structured_candidates", "tier_preference_conditions",
    "apply_tier_preference_filter", "lp_refine", "optimal_marginals", "near_optimal",
    "structured_asymptotic_optimum", "brute_force_oracle", "PicoKernelTable",
]

SNAP = 1e-12


@dataclass(frozen=True)
class OptConfig:
    step_c: float = 0.5
    max_iters: int = 100_000
    conv_tol: float = 1e-8
    lp_tol: float = 1e-9
    grid_points: int = 601
    polish: bool = True
    random_starts: int = 5
    seed: int = 0
    quadrature: QuadratureConfig = DEFAULT_QUADRATURE

    def __post_init__(self):
        errors = []
        if not self.step_c > 0:
            errors.append("step_c must be > 0")
        if not self.conv_tol > 0:
            errors.append("conv_tol must be > 0")
        if not self.lp_tol > 0:
            errors.append("lp_tol must be > 0")
        if self.max_iters < 1:
            errors.append("max_iters must be >= 1")
        if self.grid_points < 8:
            errors.append("grid_points must be >= 8")
        if errors:
            raise ValidationError(errors)

    def step(self, t: int) -> float:
        # c/t: vanishing, not summable, square summable
        return self.step_c / t


# ---------------------------------------------------------------- projection

def project_capped_simplex(x: Sequence[float], K: float, return_nu: bool = False):
    """Euclidean projection of ``x`` onto ``{0 <= T_n <= 1, sum T_n = K}``.

    The projection is ``T_n = min(max(x_n - nu, 0), 1)``.  The level ``nu`` is
    located by a bracketing search over the kinks of the piecewise linear,
    nonincreasing map ``nu -> sum_n T_n(nu)`` and then solved exactly on the
    bracketing segment.  When a whole interval of levels works the largest is
    reported.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if not 0 <= K <= n:
        raise ValueError(f"K={K} outside [0, {n}]")
    if n == 0:
        return (x.copy(), 0.0) if return_nu else x.copy()
    kinks = np.sort(np.concatenate([x, x - 1.0]))
    sums = np.clip(x[None, :] - kinks[:, None], 0.0, 1.0).sum(axis=1)
    tol = 1e-12 * max(1.0, n)
    ok = np.flatnonzero(sums >= K - tol)
    j = ok[-1]
    if j == kinks.size - 1 or abs(sums[j] - K) <= tol:
        nu = kinks[j]
    else:
        b0, b1 = kinks[j], kinks[j + 1]
        h0, h1 = sums[j], sums[j + 1]
        nu = b0 + (h0 - K) * (b1 - b0) / (h0 - h1)
    T = np.clip(x - nu, 0.0, 1.0)
    free = (T > 0.0) & (T < 1.0)
    if free.any():
        # exact level on the free set
        ones = np.count_nonzero(T >= 1.0)
        nu = (x[free].sum() - (K - ones)) / np.count_nonzero(free)
        T = np.clip(x - nu, 0.0, 1.0)
    return (T, float(nu)) if return_nu else T


# ---------------------------------------------------------------- kernel tables

class PicoKernelTable:
    """Noise-free pico kernel and its derivative tabulated on ``[0, 1]``.

    Nodes are quadratically spaced to resolve the steep region near ``x = 0``.
    ``f`` is a Hermite spline through exact values and slopes; ``fp`` is a
    cubic spline of the slopes.
    """

    def __init__(self, phy: PhyParams, k: int, points: int = 601,
                 cfg: QuadratureConfig = DEFAULT_QUADRATURE):
        self.phy = phy.asymptotic()
        self.k = k
        u = np.linspace(0.0, 1.0, points)
        self.x = u * u
        self.f = np.array([f2k_inf(self.phy, k, xi, cfg) for xi in self.x])
        self.fp = np.array([f2k_inf_grad(self.phy, k, xi, cfg) for xi in self.x])
        self._f = CubicHermiteSpline(self.x, self.f, self.fp)
        self._fp = CubicSpline(self.x, self.fp)
        self._fpp = self._fp.derivative()
        self.cfg = cfg

    def value(self, x):
        return self._f(np.clip(x, 0.0, 1.0))

    def grad(self, x):
        return self._fp(np.clip(x, 0.0, 1.0))

    def curvature(self, x):
        return self._fpp(np.clip(x, 0.0, 1.0))

    def exact_grad(self, x: float) -> float:
        return f2k_inf_grad(self.phy, self.k, float(min(max(x, 0.0), 1.0)), self.cfg)

    @property
    def concave(self) -> bool:
        # slopes must not increase anywhere on the grid
        return bool(np.all(np.diff(self.fp) <= 1e-12 * max(1.0, np.abs(self.fp).max())))


@lru_cache(maxsize=64)
def _table(phy: PhyParams, k: int, points: int, cfg: QuadratureConfig) -> PicoKernelTable:
    return PicoKernelTable(phy, k, points, cfg)


def kernel_table(phy: PhyParams, k: int, points: int = 601,
                 cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> PicoKernelTable:
    return _table(phy.asymptotic(), int(k), int(points), cfg)


# ---------------------------------------------------------------- continuous step

@dataclass
class GradientResult:
    T: Marginals
    nu: float | None
    iterations: int
    converged: bool
    raw_T: Marginals
    polished: bool
    concave: bool
    objective: float
    diagnostics: dict = field(default_factory=dict)


def _pop(content: ContentParams, F2c) -> np.ndarray:
    return np.array([content.pop(n) for n in F2c])


def _gradient_ascent(a, K, table, cfg: OptConfig, T0):
    T = T0.copy()
    converged = False
    t = 0
    for t in range(1, cfg.max_iters + 1):
        Tbar = T + cfg.step(t) * a * table.grad(T)
        T_new = project_capped_simplex(Tbar, K)
        delta = np.max(np.abs(T_new - T))
        T = T_new
        if delta < cfg.conv_tol:
            converged = True
            break
    return T, t, converged


def _kkt_from_table(a, K, table):
    """Water-filling with a concave kernel: ``T_n = (f')^-1(nu / a_n)``
    clipped to ``[0, 1]`` and ``nu`` set by the budget."""
    xs, gs = table.x, table.fp
    gs_rev, xs_rev = gs[::-1], xs[::-1]

    def T_of(nu):
        return np.clip(np.interp(nu / a, gs_rev, xs_rev, left=1.0, right=0.0), 0.0, 1.0)

    n = a.size
    if K >= n:
        return np.ones(n), float(np.min(a) * gs[-1])
    if K <= 0:
        return np.zeros(n), float(np.max(a) * gs[0])
    lo, hi = float(np.min(a) * gs[-1]) * (1 - 1e-12), float(np.max(a) * gs[0]) * (1 + 1e-12)
    nu = bisect_monotone(lambda v: -T_of(v).sum(), -K, lo, hi, tol=1e-13)
    return T_of(nu), nu


def _newton_polish(a, K, table, T, nu, tol=1e-13, max_iter=30):
    """Refine the stationarity system on a fixed active set with exact slopes."""
    T = T.copy()
    free = (T > SNAP) & (T < 1.0 - SNAP)
    T[T <= SNAP] = 0.0
    T[T >= 1.0 - SNAP] = 1.0
    budget = K - np.count_nonzero(T == 1.0)
    if not free.any():
        return T, nu, True
    idx = np.flatnonzero(free)
    for _ in range(max_iter):
        r = np.array([a[i] * table.exact_grad(T[i]) for i in idx])
        curv = a[idx] * table.curvature(T[idx])
        if np.any(curv >= 0):
            return T, nu, False
        inv = 1.0 / curv
        nu = (budget - T[idx].sum() + np.sum(r * inv)) / np.sum(inv)
        step = (nu - r) * inv
        T[idx] = T[idx] + step
        if np.any(T[idx] <= 0.0) or np.any(T[idx] >= 1.0):
            return T, nu, False
        # keep the budget exact against rounding
        T[idx] += (budget - T[idx].sum()) / idx.size
        if np.max(np.abs(step)) < tol:
            break
    r = np.array([a[i] * table.exact_grad(T[i]) for i in idx])
    return T, float(np.mean(r)), True


def optimize_T_gradient(phy: PhyParams, content: ContentParams, F2c: Sequence[int],
                        cfg: OptConfig = OptConfig()) -> GradientResult:
    """Projected gradient ascent with diminishing steps ``step_c / t``, started
    from the uniform point ``T_n = K2c / |F2c|``.

    With a concave kernel the iterate is finished by solving the stationarity
    conditions exactly; the unpolished iterate is kept in ``raw_T``.  With a
    non-concave kernel several random feasible starts are run and the best
    stationary point is kept.
    """
    F2c = tuple(sorted(F2c))
    K = content.K2c
    if len(F2c) < K:
        raise ValueError("|F2c| must be >= K2c")
    a = _pop(content, F2c)
    table = kernel_table(phy, K, cfg.grid_points, cfg.quadrature)
    T0 = np.full(len(F2c), K / len(F2c))
    T_raw, iters, converged = _gradient_ascent(a, K, table, cfg, T0)
    concave = table.concave
    diag = {"iterations": iters, "converged": converged, "concave": concave}
    T = T_raw
    nu = None
    polished = False
    if not concave:
        rng = np.random.default_rng(cfg.seed)
        best = float(a @ table.value(T_raw))
        for s in range(cfg.random_starts):
            start = project_capped_simplex(rng.uniform(0, 1, len(F2c)) * K * 2 / len(F2c), K)
            Ts, it_s, conv_s = _gradient_ascent(a, K, table, cfg, start)
            val = float(a @ table.value(Ts))
            if val > best:
                best, T = val, Ts
        diag["random_starts"] = cfg.random_starts
    elif cfg.polish:
        T_kkt, nu_kkt = _kkt_from_table(a, K, table)
        T_pol, nu_pol, ok = _newton_polish(a, K, table, T_kkt, nu_kkt)
        if ok:
            T, nu, polished = T_pol, nu_pol, True
        else:
            T, nu = T_kkt, nu_kkt
        diag["raw_gap_inf"] = float(np.max(np.abs(T - T_raw)))
    T = np.clip(T, 0.0, 1.0)
    obj = float(sum(content.pop(n) * f2k_inf(phy, K, float(x), cfg.quadrature) for n, x in zip(F2c, T)))
    return GradientResult(Marginals(F2c, T), nu, iters, converged, Marginals(F2c, T_raw),
                          polished, concave, obj, diag)


def waterfill_closed_form(phy: PhyParams, content: ContentParams, F2c: Sequence[int],
                          return_nu: bool = False):
    """Reverse water-filling optimum for equal path-loss exponents:
    ``T_n = min(max((sqrt(a_n theta2 / nu) - theta2) / theta1, 0), 1)``."""
    if not phy.equal_alpha:
        raise DomainError("closed-form water-filling needs alpha1 == alpha2")
    F2c = tuple(sorted(F2c))
    K = content.K2c
    if len(F2c) < K:
        raise ValueError("|F2c| must be >= K2c")
    _, t1, t2 = closed_form_constants(phy, K)
    if not t1 > 0:
        raise DomainError("objective is not concave (theta1 <= 0)")
    a = _pop(content, F2c)

    def T_of(nu):
        return np.clip((np.sqrt(a * t2 / nu) - t2) / t1, 0.0, 1.0)

    lo = float(np.min(a)) * t2 / (t1 + t2) ** 2
    hi = float(np.max(a)) / t2
    if K == len(F2c):
        T, nu = np.ones(len(F2c)), lo
    else:
        nu = bisect_monotone(lambda v: -T_of(v).sum(), -K, lo, hi, tol=1e-14)
        T = T_of(nu)
        for _ in range(len(F2c) + 1):
            free = (T > 0.0) & (T < 1.0)
            if not free.any():
                break
            ones = np.count_nonzero(T >= 1.0)
            root = np.sqrt(a[free]).sum()
            nu_new = t2 * root ** 2 / (t1 * (K - ones) + t2 * np.count_nonzero(free)) ** 2
            T_new = T_of(nu_new)
            same = np.array_equal((T_new > 0) & (T_new < 1), free)
            nu, T = nu_new, T_new
            if same:
                break
        # absorb rounding in the budget on the free coordinates
        free = (T > 0.0) & (T < 1.0)
        if free.any():
            T[free] += (K - T.sum()) / np.count_nonzero(free)
    marg = Marginals(F2c, T)
    return (marg, float(nu)) if return_nu else marg


def waterfill_kkt_violation(phy: PhyParams, content: ContentParams, T: Marginals, nu: float | None = None):
    """Largest violation of the optimality conditions of the closed-form
    problem: interior ``a_n theta2 / (theta2 + theta1 T_n)^2 = nu``, zeros
    ``a_n / theta2 <= nu`` and ones ``a_n theta2 / (theta2 + theta1)^2 >= nu``.

    When ``nu`` is omitted it is estimated from the interior coordinates.
    Returns ``(violation, nu)``.
    """
    _, t1, t2 = closed_form_constants(phy, content.K2c)
    a = _pop(content, T.F2c)
    x = T.as_array()
    zero = x <= SNAP
    one = x >= 1.0 - SNAP
    free = ~zero & ~one
    marg = a * t2 / (t2 + t1 * x) ** 2
    if nu is None:
        if free.any():
            nu = float(np.mean(marg[free]))
        else:
            lo = float(np.max((a / t2)[zero])) if zero.any() else 0.0
            up = float(np.min((a * t2 / (t2 + t1) ** 2)[one])) if one.any() else np.inf
            nu = lo if not np.isfinite(up) else 0.5 * (lo + up)
    viol = 0.0
    if free.any():
        viol = max(viol, float(np.max(np.abs(marg[free] - nu))))
    if zero.any():
        viol = max(viol, float(np.max((a / t2)[zero] - nu)))
    if one.any():
        viol = max(viol, float(np.max(nu - (a * t2 / (t2 + t1) ** 2)[one])))
    return max(viol, 0.0), float(nu)


def optimal_marginals(phy: PhyParams, content: ContentParams, F2c: Sequence[int],
                      cfg: OptConfig = OptConfig()):
    """Optimal marginals for a pico pool: closed form when available,
    projected gradient otherwise.  Returns ``(Marginals, method, info)``."""
    if phy.equal_alpha:
        _, t1, _ = closed_form_constants(phy, content.K2c)
        if t1 > 0:
            T, nu = waterfill_closed_form(phy, content, F2c, return_nu=True)
            return T, "waterfill", {"nu": nu}
    res = optimize_T_gradient(phy, content, F2c, cfg)
    return res.T, "gradient", dict(res.diagnostics, nu=res.nu)


# ---------------------------------------------------------------- discrete step

@dataclass(frozen=True)
class Candidate:
    F1c: tuple
    F2c: tuple
    F1b: tuple
    n1: int

    @property
    def key(self):
        return (len(self.F2c), self.n1)


def enumerate_structured_candidates(content: ContentParams) -> list:
    """Partitions where the macro cache is a run of ``K1c`` consecutive files
    starting at ``n1``, the backhaul set is the run right after it and the
    pico pool is everything else.  Pool sizes range from
    ``max(K2c, N - K1c - K1b)`` to ``N - K1c``."""
    N, K1c, K2c, K1b = content.N, content.K1c, content.K2c, content.K1b
    out = []
    for F2 in range(max(K2c, N - K1c - K1b), N - K1c + 1):
        F1b_size = N - K1c - F2
        for n1 in range(1, F2 + 2):
            F1c = tuple(range(n1, n1 + K1c))
            F1b = tuple(range(n1 + K1c, n1 + K1c + F1b_size))
            used = set(F1c) | set(F1b)
            F2c = tuple(n for n in range(1, N + 1) if n not in used)
            out.append(Candidate(F1c, F2c, F1b, n1))
    return out


def tier_preference_conditions(phy: PhyParams, content: ContentParams,
                               cfg: QuadratureConfig = DEFAULT_QUADRATURE):
    """``(macro_first, pico_first)``.

    ``macro_first``: a macro stream at its largest load beats the best pico
    stream, so the most popular files belong to the macro tier.
    ``pico_first``: a macro stream at its smallest load loses to a pico stream
    at the uniform marginal, so file 1 belongs to the pico tier.
    """
    K1c, K2c, K1b, N = content.K1c, content.K2c, content.K1b, content.N
    macro_first = f1k_inf(phy, K1c + K1b, cfg) > f2k_inf(phy, K2c, 1.0, cfg)
    pico_first = f1k_inf(phy, K1c, cfg) < f2k_inf(phy, K2c, K2c / (N - K1c), cfg)
    return bool(macro_first), bool(pico_first)


def apply_tier_preference_filter(phy: PhyParams, content: ContentParams, candidates,
                                 cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> list:
    macro_first, pico_first = tier_preference_conditions(phy, content, cfg)
    if macro_first:
        return [c for c in candidates if c.n1 == 1]
    if pico_first:
        return [c for c in candidates if c.n1 != 1]
    return list(candidates)


# ---------------------------------------------------------------- LP step

def _snap(T: np.ndarray) -> np.ndarray:
    T = T.copy()
    T[T <= SNAP] = 0.0
    T[T >= 1.0 - SNAP] = 1.0
    return T


def lp_refine(phy: PhyParams, content: ContentParams, idx: CombinationIndex, T_star,
              cfg: QuadratureConfig = DEFAULT_QUADRATURE):
    """Best combination distribution with the given marginals at finite SNR
    and user density.

    Combinations holding a file with ``T = 0`` or missing a file with
    ``T = 1`` are fixed to zero first.  Returns ``(p, q2, info)``.
    """
    T = _snap(T_star.as_array() if isinstance(T_star, Marginals) else np.asarray(T_star, float))
    Tm = dict(zip(idx.F2c, T))
    zeros = {n for n, v in Tm.items() if v == 0.0}
    ones = {n for n, v in Tm.items() if v == 1.0}
    fixed = np.array([bool(zeros & set(c)) or not ones <= set(c) for c in idx.combos])
    c, _ = pico_combination_values(phy, content, idx, Tm, cfg)
    p, res = solve_marginal_lp(idx, T, c=c, fixed_zero=fixed)
    info = {"status": int(res.status), "message": str(res.message), "fixed_zero": int(fixed.sum()),
            "free": int(idx.I - fixed.sum())}
    return p, float(c @ p), info


# ---------------------------------------------------------------- Algorithm driver

@dataclass
class Solution:
    F1c: tuple
    F2c: tuple
    T: Marginals
    p: tuple
    q_general: float
    q_asymptotic: float
    F1b: tuple = ()
    diagnostics: dict = field(default_factory=dict)

    @property
    def design(self) -> HybridDesign:
        return HybridDesign(frozenset(self.F1c), self.F2c, self.p)

    def to_dict(self) -> dict:
        combos = itertools.combinations(self.F2c, int(round(sum(self.T.values))))
        sparse = {",".join(map(str, c)): pi for c, pi in zip(combos, self.p) if pi > 0}
        return {
            "F1c": sorted(self.F1c), "F2c": sorted(self.F2c), "F1b": sorted(self.F1b),
            "T": {str(n): v for n, v in zip(self.T.F2c, self.T.values)},
            "p": sparse, "q_general": self.q_general, "q_asymptotic": self.q_asymptotic,
            "diagnostics": self.diagnostics,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _evaluate_candidate(phy, content, cand: Candidate, cfg: OptConfig, asymptotic_scoring: bool, Tcache):
    T, method, tinfo = Tcache(cand.F2c)
    idx = enumerate_combinations(cand.F2c, content.K2c)
    p, q2, lpinfo = lp_refine(phy, content, idx, T, cfg.quadrature)
    q1, _ = q1_general(phy, content, cand.F1c, cand.F1b, cfg.quadrature)
    q_inf = q_asymptotic(phy, content, cand.F1c, cand.F2c, T, cfg.quadrature).q
    score = q_inf if asymptotic_scoring else q1 + q2
    return {"candidate": cand, "T": T, "p": p, "q1": q1, "q2": q2, "q_general": q1 + q2,
            "q_asymptotic": q_inf, "score": score, "T_method": method, "lp": lpinfo}


def _argmax(results):
    # candidates arrive sorted by (pool size, n1): earliest wins near-ties
    best = None
    for r in results:
        if best is None or r["score"] > best["score"] + 1e-12:
            best = r
    return best


def near_optimal(phy: PhyParams, content: ContentParams, cfg: OptConfig = OptConfig(),
                 asymptotic_scoring: bool = False, workers: int = 1) -> Solution:
    """Search the structured candidates, compute optimal marginals for each
    pico pool, refine the combination distribution by LP and keep the best
    candidate by ``q1 + q2`` (or by the asymptotic value if requested)."""
    cands = sorted(enumerate_structured_candidates(content), key=lambda c: c.key)
    macro_first, pico_first = tier_preference_conditions(phy, content, cfg.quadrature)
    kept = apply_tier_preference_filter(phy, content, cands, cfg.quadrature)
    cache: dict = {}

    def Tcache(F2c):
        if F2c not in cache:
            cache[F2c] = optimal_marginals(phy, content, F2c, cfg)
        return cache[F2c]

    def run(c):
        try:
            return _evaluate_candidate(phy, content, c, cfg, asymptotic_scoring, Tcache)
        except Exception as exc:  # recorded and skipped
            return {"candidate": c, "error": f"{type(exc).__name__}: {exc}"}

    if workers > 1:
        for c in kept:
            Tcache(c.F2c)
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(run, kept))
    else:
        results = [run(c) for c in kept]
    ok = [r for r in results if "error" not in r]
    failures = [{"F1c": list(r["candidate"].F1c), "error": r["error"]} for r in results if "error" in r]
    if not ok:
        raise ConvergenceError(f"every candidate failed: {failures}")
    best = _argmax(ok)
    cand = best["candidate"]
    diag = {
        "candidates_total": len(cands),
        "candidates_after_filter": len(kept),
        "macro_first": macro_first,
        "pico_first": pico_first,
        "scoring": "asymptotic" if asymptotic_scoring else "general",
        "n1": cand.n1,
        "T_method": best["T_method"],
        "lp_status": best["lp"]["status"],
        "q1": best["q1"],
        "q2": best["q2"],
        "failures": failures,
        "scores": [{"F1c": list(r["candidate"].F1c), "F2c_size": len(r["candidate"].F2c),
                    "n1": r["candidate"].n1, "score": r["score"]} for r in ok],
    }
    return Solution(cand.F1c, cand.F2c, best["T"], tuple(float(v) for v in best["p"]),
                    best["q_general"], best["q_asymptotic"], cand.F1b, diag)


def structured_asymptotic_optimum(phy: PhyParams, content: ContentParams, cfg: OptConfig = OptConfig(),
                                  use_filter: bool = True):
    """Best asymptotic value over the structured family.

    Returns ``(q_inf, candidate, T)``.
    """
    cands = sorted(enumerate_structured_candidates(content), key=lambda c: c.key)
    if use_filter:
        cands = apply_tier_preference_filter(phy, content, cands, cfg.quadrature)
    best = None
    cache = {}
    for c in cands:
        if c.F2c not in cache:
            cache[c.F2c] = optimal_marginals(phy, content, c.F2c, cfg)[0]
        T = cache[c.F2c]
        q = q_asymptotic(phy, content, c.F1c, c.F2c, T, cfg.quadrature).q
        if best is None or q > best[0] + 1e-12:
            best = (q, c, T)
    return best


# ---------------------------------------------------------------- oracle

def _armijo_ascent(a, K, table, T0, max_iter=5000, tol=1e-10):
    """Projected gradient ascent, Barzilai-Borwein trial steps with Armijo
    backtracking along the projection arc."""
    T = T0
    val = float(a @ table.value(T))
    g = a * table.grad(T)
    step = 1.0
    for _ in range(max_iter):
        while True:
            T_new = project_capped_simplex(T + step * g, K)
            val_new = float(a @ table.value(T_new))
            if val_new >= val + 1e-4 * float(g @ (T_new - T)) or step < 1e-14:
                break
            step *= 0.5
        moved = np.max(np.abs(T_new - T))
        g_new = a * table.grad(T_new)
        s_vec, y_vec = T_new - T, g_new - g
        sy = float(s_vec @ y_vec)
        # concave objective: y.s < 0 gives a positive curvature estimate
        step = float(s_vec @ s_vec) / -sy if sy < 0 else min(step * 2.0, 1e3)
        step = min(max(step, 1e-6), 1e6)
        T, val, g = T_new, val_new, g_new
        if moved < tol:
            break
    return T, val


def brute_force_oracle(phy: PhyParams, content: ContentParams, grid_resolution: int = 801,
                       starts: int = 3, seed: int = 0,
                       cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> Solution:
    """Exhaustive search over every disjoint (macro cache, pico pool) pair.

    For each pool the marginals are optimized by projected gradient with
    Armijo backtracking from several starts, using a tabulated kernel.
    """
    N, K1c, K2c, K1b = content.N, content.K1c, content.K2c, content.K1b
    if N > 10:
        raise ValueError("brute force is limited to N <= 10")
    for F2 in range(K2c, N - K1c + 1):
        if math.comb(F2, K2c) > 200:
            raise ValueError("brute force is limited to at most 200 combinations per pool")
    table = kernel_table(phy, K2c, grid_resolution, cfg)
    rng = np.random.default_rng(seed)
    files = range(1, N + 1)
    pool_best = {}

    def pool_value(F2c):
        if F2c in pool_best:
            return pool_best[F2c]
        a = _pop(content, F2c)
        n = len(F2c)
        inits = [np.full(n, K2c / n)]
        for _ in range(starts - 1):
            inits.append(project_capped_simplex(rng.uniform(0, 2 * K2c / n, n), K2c))
        best = None
        for T0 in inits:
            T, _ = _armijo_ascent(a, K2c, table, T0)
            T = _snap(T)
            val = float(a @ table.value(T))
            if best is None or val > best[0]:
                best = (val, T)
        pool_best[F2c] = best
        return best

    f1 = {}
    best = None
    for F2 in range(K2c, N - K1c + 1):
        for F2c in itertools.combinations(files, F2):
            q2, T = pool_value(F2c)
            rest = [n for n in files if n not in F2c]
            for F1c in itertools.combinations(rest, K1c):
                F1b = [n for n in rest if n not in F1c]
                served = min(K1b, len(F1b))
                k = K1c + served
                if k not in f1:
                    f1[k] = f1k_inf(phy, k, cfg)
                mass = sum(content.pop(n) for n in F1c)
                if F1b:
                    mass += served / len(F1b) * sum(content.pop(n) for n in F1b)
                q = f1[k] * mass + q2
                if best is None or q > best[0] + 1e-13:
                    best = (q, F1c, F2c, T)
    q, F1c, F2c, T = best
    idx = enumerate_combinations(F2c, K2c)
    p = feasible_p_from_T(idx, T)
    design = HybridDesign(frozenset(F1c), F2c, tuple(p))
    qg = q_general(phy, content, design, cfg).q
    F1b = tuple(n for n in files if n not in F1c and n not in F2c)
    return Solution(tuple(F1c), tuple(F2c), Marginals(F2c, T), tuple(p), qg, q, F1b,
                    {"pools": len(pool_best)})
