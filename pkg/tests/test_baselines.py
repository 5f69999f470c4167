import math
from collections import Counter

import numpy as np
import pytest

from hetcache.baselines import BaselineKind, BaselineScheme, baseline_cache_assignment
from hetcache.model import ContentParams, reference_phy, zipf_popularity
from hetcache.simulate import SimConfig, associate_and_schedule, monte_carlo_q, sample_realization


def test_most_popular_is_deterministic(content):
    s = BaselineScheme(BaselineKind.MOST_POPULAR, content)
    macro, pico = s.sample_multisets(np.random.default_rng(0), 4, 6)
    assert macro.tolist() == [[1, 2, 3, 4]] * 4
    assert pico.tolist() == [[1, 2]] * 6
    pl = s.sample(np.random.default_rng(1), 2, 3)
    assert np.flatnonzero(pl.macro_has[0]).tolist() == [0, 1, 2]
    assert np.flatnonzero(pl.macro_fetch[0]).tolist() == [3]
    assert np.flatnonzero(pl.pico_has[2]).tolist() == [0, 1]


def test_kind_from_string(content):
    assert BaselineScheme("uniform_combination", content).kind is BaselineKind.UNIFORM_COMBINATION
    with pytest.raises(ValueError):
        BaselineScheme("random", content)


def test_iid_duplicate_probability(content):
    draws = 10_000
    s = BaselineScheme(BaselineKind.IID_POPULARITY, content)
    _, pico = s.sample_multisets(np.random.default_rng(2), 0, draws)
    dup = np.mean(pico[:, 0] == pico[:, 1])
    p = sum(x * x for x in content.a)
    assert abs(dup - p) < 3 * math.sqrt(p * (1 - p) / draws)
    # slot marginals follow popularity
    freq = np.bincount(pico.ravel(), minlength=11)[1:] / pico.size
    for f, a in zip(freq, content.a):
        assert abs(f - a) < 3 * math.sqrt(a * (1 - a) / pico.size)


def test_uniform_combinations_equiprobable(content):
    draws = 10_000
    s = BaselineScheme(BaselineKind.UNIFORM_COMBINATION, content)
    macro, pico = s.sample_multisets(np.random.default_rng(3), 50, draws)
    assert all(len(set(row)) == 4 for row in macro.tolist())
    counts = Counter(tuple(sorted(r)) for r in pico.tolist())
    p = 1 / math.comb(10, 2)
    assert len(counts) == math.comb(10, 2)
    for c in counts.values():
        assert abs(c / draws - p) < 3.5 * math.sqrt(p * (1 - p) / draws)


def test_distinct_rules_capped_by_library():
    c = ContentParams(N=5, a=zipf_popularity(5, 1.0), K1c=3, K2c=2, K1b=4)
    for kind in (BaselineKind.MOST_POPULAR, BaselineKind.UNIFORM_COMBINATION):
        macro, _ = BaselineScheme(kind, c).sample_multisets(np.random.default_rng(0), 3, 2)
        assert macro.shape == (3, 5)
        assert all(sorted(r) == [1, 2, 3, 4, 5] for r in macro.tolist())


def test_iid_masks_within_slot_budget(content):
    # duplicates collapse, so distinct files never exceed the slot count
    s = BaselineScheme(BaselineKind.IID_POPULARITY, content)
    cfg = SimConfig(realizations=1)
    for r in range(5):
        world = sample_realization(reference_phy(100), content, s, cfg, r)
        pl = world.placement
        assert pl.macro_has.sum(axis=1).max() <= content.K1c
        assert pl.macro_fetch.sum(axis=1).max() <= content.K1b


def test_sampler_wrapper(content):
    rng = np.random.default_rng(4)
    sampler = baseline_cache_assignment("iid_popularity", content, rng)
    pl = sampler(3, 7)
    assert pl.macro_has.shape == (3, 10) and pl.pico_has.shape == (7, 10)
    assert sampler.scheme.kind is BaselineKind.IID_POPULARITY


@pytest.mark.parametrize("kind", list(BaselineKind))
def test_baselines_serve_users(phy, content, kind):
    res = monte_carlo_q(phy, content, BaselineScheme(kind, content), SimConfig(realizations=150, seed=2))
    assert 0.05 < res.q_hat < 1.0


def test_cross_tier_association(phy, content):
    # with most-popular caching file 1 sits in both tiers; the typical user picks the stronger
    s = BaselineScheme(BaselineKind.MOST_POPULAR, content)
    world = sample_realization(phy, content, s, SimConfig(), 0)
    sch = associate_and_schedule(world, phy, content)
    pos = np.vstack([world.macro_positions, world.pico_positions])
    d = np.hypot(*pos.T)
    pw = np.concatenate([phy.P1 * d[:world.M] ** -phy.alpha1, phy.P2 * d[world.M:] ** -phy.alpha2])
    assert sch.serving[0] == int(np.argmax(pw))
