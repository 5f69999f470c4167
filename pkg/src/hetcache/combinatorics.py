"""Combinations of pico-cached files and the marginal map ``T = A p``."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .model import Marginals

__all__ = [
    "CombinationLimitError", "InfeasibleMarginalsError", "CombinationIndex",
    "DEFAULT_COMBINATION_CAP", "enumerate_combinations", "marginals_from_p",
    "feasible_p_from_T", "random_p_with_marginals", "solve_marginal_lp",
]

DEFAULT_COMBINATION_CAP = 2_000_000


class CombinationLimitError(ValueError):
    """Too many combinations to enumerate; work with marginals instead."""


class InfeasibleMarginalsError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CombinationIndex:
    F2c: tuple
    K2c: int
    combos: tuple

    @property
    def I(self) -> int:
        return len(self.combos)

    @cached_property
    def position(self) -> dict:
        return {n: j for j, n in enumerate(self.F2c)}

    @cached_property
    def containing(self) -> dict:
        """Map file id to the indices of the combinations that hold it."""
        out = {n: [] for n in self.F2c}
        for i, c in enumerate(self.combos):
            for n in c:
                out[n].append(i)
        return {n: tuple(v) for n, v in out.items()}

    @cached_property
    def incidence(self) -> np.ndarray:
        """0/1 matrix with rows indexed by F2c and columns by combination."""
        A = np.zeros((len(self.F2c), self.I))
        pos = self.position
        for i, c in enumerate(self.combos):
            for n in c:
                A[pos[n], i] = 1.0
        A.setflags(write=False)
        return A


def enumerate_combinations(F2c: Sequence[int], K2c: int, cap: int = DEFAULT_COMBINATION_CAP) -> CombinationIndex:
    """All size-``K2c`` subsets of ``F2c`` in lexicographic order."""
    F2c = tuple(sorted(int(n) for n in F2c))
    if len(set(F2c)) != len(F2c):
        raise ValueError("F2c contains duplicates")
    if K2c < 1:
        raise ValueError("K2c must be >= 1")
    if len(F2c) < K2c:
        raise ValueError(f"|F2c| = {len(F2c)} is smaller than K2c = {K2c}")
    count = math.comb(len(F2c), K2c)
    if count > cap:
        raise CombinationLimitError(
            f"C({len(F2c)}, {K2c}) = {count} combinations exceeds the cap of {cap}; "
            "use the marginal (T) workflow instead")
    return CombinationIndex(F2c, K2c, tuple(itertools.combinations(F2c, K2c)))


def marginals_from_p(idx: CombinationIndex, p: Sequence[float]) -> Marginals:
    p = np.asarray(p, dtype=float)
    if p.shape != (idx.I,):
        raise ValueError(f"p has shape {p.shape}, expected ({idx.I},)")
    return Marginals(idx.F2c, idx.incidence @ p)


def _as_T(idx: CombinationIndex, T) -> np.ndarray:
    if isinstance(T, Marginals):
        if T.F2c != idx.F2c:
            raise ValueError("marginals are defined over a different F2c")
        return T.as_array()
    T = np.asarray(T, dtype=float)
    if T.shape != (len(idx.F2c),):
        raise ValueError("T has the wrong length")
    return T


def solve_marginal_lp(idx: CombinationIndex, T, c: np.ndarray | None = None,
                      fixed_zero: np.ndarray | None = None, tol: float = 1e-9):
    """Maximize ``c @ p`` over the simplex subject to ``A p = T``.

    Returns a basic optimal ``p``. The row ``sum(p) = 1`` is implied by the
    marginal rows (their sum is ``K2c * sum(p)``), so only the marginal rows
    are passed to the solver after checking ``sum(T) = K2c``.
    """
    T = _as_T(idx, T)
    if np.any(T < -tol) or np.any(T > 1 + tol):
        raise InfeasibleMarginalsError("marginals outside [0, 1]")
    if abs(T.sum() - idx.K2c) > tol * max(1, len(T)):
        raise InfeasibleMarginalsError(f"sum(T) = {T.sum()!r} differs from K2c = {idx.K2c}")
    A = idx.incidence
    free = np.ones(idx.I, dtype=bool) if fixed_zero is None else ~np.asarray(fixed_zero, dtype=bool)
    cols = np.flatnonzero(free)
    if cols.size == 0:
        raise InfeasibleMarginalsError("every combination is fixed to zero")
    obj = np.zeros(cols.size) if c is None else -np.asarray(c, dtype=float)[cols]
    res = linprog(obj, A_eq=A[:, cols], b_eq=T, bounds=(0, None), method="highs-ds",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise InfeasibleMarginalsError(f"LP failed: {res.message}")
    p = np.zeros(idx.I)
    p[cols] = np.clip(res.x, 0.0, None)
    p = _polish(A, T, p)
    return p, res


def _polish(A: np.ndarray, T: np.ndarray, p: np.ndarray) -> np.ndarray:
    # Re-solve on the support so the marginals hold to rounding error.
    support = np.flatnonzero(p > 1e-13)
    M = np.vstack([A[:, support], np.ones(support.size)])
    rhs = np.concatenate([T, [1.0]])
    sol, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    if np.all(sol >= -1e-12) and np.max(np.abs(M @ sol - rhs)) <= np.max(np.abs(M @ p[support] - rhs)):
        p = np.zeros_like(p)
        p[support] = np.clip(sol, 0.0, None)
    return p


def feasible_p_from_T(idx: CombinationIndex, T) -> np.ndarray:
    """A vertex ``p`` of the simplex whose marginals equal ``T``."""
    p, _ = solve_marginal_lp(idx, T)
    return p


def random_p_with_marginals(idx: CombinationIndex, T, rng: np.random.Generator,
                            n_vertices: int = 4) -> np.ndarray:
    """Random feasible ``p`` with marginals ``T``: a random convex combination
    of LP vertices reached from random objectives."""
    weights = rng.dirichlet(np.ones(n_vertices))
    p = np.zeros(idx.I)
    for w in weights:
        v, _ = solve_marginal_lp(idx, T, c=rng.standard_normal(idx.I))
        p += w * v
    return p
