"""Comparison caching schemes for the simulator.

Every macro BS holds a multiset of ``K1c + K1b`` files.  The first ``K1c``
slots are stored and the last ``K1b`` slots are fetched over the backhaul.
Every pico BS holds ``K2c`` slots.  Users attach to the qualifying BS with
the largest ``P * D**-alpha`` across both tiers, which the simulator does for
any :class:`~hetcache.simulate.Placement`.
"""
from __future__ import annotations

from enum import Enum

import numpy as np

from .model import ContentParams
from .simulate import Placement

__all__ = ["BaselineKind", "BaselineScheme", "baseline_cache_assignment"]


class BaselineKind(str, Enum):
    MOST_POPULAR = "most_popular"
    IID_POPULARITY = "iid_popularity"
    UNIFORM_COMBINATION = "uniform_combination"


class BaselineScheme:
    """Sampler for one baseline.  ``sample_multisets`` returns file ids
    (1-based) slot by slot; ``sample`` turns them into a :class:`Placement`."""

    def __init__(self, kind: BaselineKind | str, content: ContentParams):
        self.kind = BaselineKind(kind)
        self.content = content
        self.name = self.kind.value

    def _draw(self, rng: np.random.Generator, count: int, size: int) -> np.ndarray:
        N = self.content.N
        if self.kind is not BaselineKind.IID_POPULARITY:
            # distinct-file rules cannot hold more than the whole library
            size = min(size, N)
        if self.kind is BaselineKind.MOST_POPULAR:
            # popularity is sorted, so the top files are 1..size
            return np.broadcast_to(np.arange(1, size + 1), (count, size)).copy()
        if self.kind is BaselineKind.IID_POPULARITY:
            return rng.choice(N, size=(count, size), p=np.asarray(self.content.a)) + 1
        # a random permutation prefix is a uniform size-subset
        return np.argsort(rng.random((count, N)), axis=1)[:, :size] + 1

    def sample_multisets(self, rng: np.random.Generator, M: int, P: int):
        c = self.content
        macro = self._draw(rng, M, c.K1c + c.K1b)
        pico = self._draw(rng, P, c.K2c)
        return macro, pico

    def sample(self, rng: np.random.Generator, M: int, P: int) -> Placement:
        N, K1c = self.content.N, self.content.K1c
        macro, pico = self.sample_multisets(rng, M, P)
        return Placement(
            macro_has=_to_mask(macro[:, :K1c], N),
            macro_fetch=_to_mask(macro[:, K1c:], N),
            pico_has=_to_mask(pico, N),
        )


def _to_mask(files: np.ndarray, N: int) -> np.ndarray:
    mask = np.zeros((files.shape[0], N), dtype=bool)
    if files.size:
        rows = np.repeat(np.arange(files.shape[0]), files.shape[1])
        mask[rows, files.ravel() - 1] = True
    return mask


def baseline_cache_assignment(kind: BaselineKind | str, content: ContentParams, rng: np.random.Generator):
    """Return ``sampler(M, P) -> Placement`` drawing from ``rng``."""
    scheme = BaselineScheme(kind, content)

    def sampler(M: int, P: int) -> Placement:
        return scheme.sample(rng, M, P)

    sampler.scheme = scheme
    return sampler
