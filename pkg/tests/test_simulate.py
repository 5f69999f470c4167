import dataclasses
import math
import warnings

import numpy as np
import pytest

from hetcache.analysis import q_general
from hetcache.baselines import BaselineKind, BaselineScheme
from hetcache.model import ValidationError, reference_phy
from hetcache.simulate import (EdgeEffectWarning, MCResult, NetworkRealization, ProposedScheme, SimConfig,
                               associate_and_schedule, compare_schemes, evaluate_success, monte_carlo_q,
                               sample_geometry, sample_realization, simulate_records)


def direct_schedule(world, phy, content):
    """Per-user loop: every user picks the strongest BS able to deliver its
    file, then the typical user's server, load and lottery are read off."""
    pl = world.placement
    M, N, K1b = world.M, content.N, content.K1b
    pos = np.vstack([world.macro_positions, world.pico_positions])
    Ptx = np.array([phy.P1] * M + [phy.P2] * world.P)
    alpha = np.array([phy.alpha1] * M + [phy.alpha2] * world.P)
    qual = np.vstack([pl.macro_has | (pl.macro_fetch & (K1b > 0)), pl.pico_has])
    has = np.vstack([pl.macro_has, pl.pico_has])
    fetch = np.vstack([pl.macro_fetch & ~pl.macro_has, np.zeros_like(pl.pico_has)])

    def server(pt, m):
        d = np.hypot(*(pos - pt).T)
        score = np.where(qual[:, m], Ptx * d ** (-alpha), -np.inf)
        return int(np.argmax(score)) if qual[:, m].any() else -1

    assoc = [server(u, m) for u, m in zip(world.user_positions, world.user_request)]
    d0 = np.hypot(*pos.T)
    fad = np.concatenate([world.fading_macro[0], world.fading_pico[0]])
    rp = Ptx * fad * d0 ** (-alpha)
    out = []
    for m in range(N):
        b = server(np.zeros(2), m)
        if b < 0:
            out.append((-1, 0, False, 0.0))
            continue
        files = {int(r) for r, s in zip(world.user_request, assoc) if s == b} | {m}
        kc = sum(has[b, f] for f in files)
        kb = sum(fetch[b, f] for f in files)
        k = kc + min(K1b, kb)
        tx = bool(has[b, m]) or world.lottery[m] < min(K1b, kb) / kb
        out.append((b, k, tx, rp[b]))
    return out, rp.sum()


def test_sim_config_validation():
    with pytest.raises(ValidationError):
        SimConfig(realizations=0)
    with pytest.raises(ValidationError):
        SimConfig(window_side=-1.0)
    with pytest.raises(ValidationError):
        SimConfig(edge_policy="reflect")
    with pytest.raises(ValidationError):
        SimConfig(threads=0)
    assert SimConfig(window_side=100.0).area == 1e4


def test_poisson_counts(phy, content):
    cfg = SimConfig(realizations=1500)
    w = [sample_geometry(phy, content, cfg, r) for r in range(cfg.realizations)]
    A = cfg.area
    for lam, counts in ((phy.lambda1, [x.M for x in w]), (phy.lambda2, [x.P for x in w]),
                        (phy.lambda_u, [len(x.user_positions) for x in w])):
        mean = lam * A
        assert abs(np.mean(counts) - mean) < 4 * math.sqrt(mean / len(counts))
    reqs = np.concatenate([x.user_request[:200] for x in w[:200]])
    freq = np.bincount(reqs, minlength=10) / reqs.size
    assert freq == pytest.approx(content.a, abs=0.01)


@pytest.mark.parametrize("edge", ["plain-window", "torus"])
def test_schedule_matches_direct_loop(phy, content, design, edge):
    dense = dataclasses.replace(phy, lambda_u=2e-4)
    cfg = SimConfig(window_side=6000.0, edge_policy=edge)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EdgeEffectWarning)
        for r in range(6):
            world = sample_realization(dense, content, design, cfg, r)
            sch = associate_and_schedule(world, dense, content)
            if edge == "torus":
                full = associate_and_schedule(world, dense, content, prune=False)
                assert np.array_equal(sch.load, full.load)
                assert np.array_equal(sch.serving, full.serving)
                assert np.array_equal(sch.transmitted, full.transmitted)
                continue
            want, total = direct_schedule(world, dense, content)
            for m, (b, k, tx, s) in enumerate(want):
                assert sch.serving[m] == b
                if b >= 0:
                    assert sch.load[m] == k
                    assert sch.transmitted[m] == tx
                    assert sch.signal[m] == pytest.approx(s, rel=1e-12)
            assert sch.total_power[0] == pytest.approx(total, rel=1e-12)


@pytest.mark.parametrize("edge", ["plain-window", "torus"])
def test_pruning_is_exact_for_all_schemes(phy, content, design, edge):
    cfg = SimConfig(edge_policy=edge)
    schemes = [ProposedScheme(content, design)] + [BaselineScheme(k, content) for k in BaselineKind]
    for r in range(10):
        for s in schemes:
            world = sample_realization(phy, content, s, cfg, r)
            a = associate_and_schedule(world, phy, content)
            b = associate_and_schedule(world, phy, content, prune=False)
            assert np.array_equal(a.serving, b.serving)
            assert np.array_equal(a.load, b.load)
            assert np.array_equal(a.transmitted, b.transmitted)
            assert a.served_sets == b.served_sets


def test_evaluate_success_matches_records(phy, content, design):
    cfg = SimConfig(realizations=30)
    rec = simulate_records(phy, content, [design], cfg)[0]
    S = rec.success(phy.N0, phy.tau, phy.W_hz)
    for r in range(cfg.realizations):
        world = sample_realization(phy, content, design, cfg, r)
        sch = associate_and_schedule(world, phy, content)
        for n in range(1, 11):
            assert evaluate_success(world, phy, sch, n) == S[r, n - 1]


def test_deterministic_and_thread_invariant(phy, content, design):
    cfg = SimConfig(realizations=120, seed=5)
    a = simulate_records(phy, content, [design], cfg)[0]
    b = simulate_records(phy, content, [design], dataclasses.replace(cfg, threads=3))[0]
    c = simulate_records(phy, content, [design], cfg)[0]
    for f in dataclasses.fields(a):
        x, y, z = getattr(a, f.name), getattr(b, f.name), getattr(c, f.name)
        assert x.tobytes() == y.tobytes() == z.tobytes()
    d = simulate_records(phy, content, [design], dataclasses.replace(cfg, seed=6))[0]
    assert not np.array_equal(a.signal, d.signal)


def test_common_random_numbers(phy, content, design):
    cfg = SimConfig(realizations=20)
    base = BaselineScheme(BaselineKind.MOST_POPULAR, content)
    both = simulate_records(phy, content, [design, base], cfg)
    alone = simulate_records(phy, content, [base], dataclasses.replace(cfg))[0]
    assert np.array_equal(both[0].u0_request, both[1].u0_request)
    assert np.array_equal(both[0].macro_count, both[1].macro_count)
    # placements are keyed by scheme position, geometry is shared
    assert np.array_equal(both[1].total_power, alone.total_power)


def test_rescoring_equals_resimulating(phy, content, design):
    cfg = SimConfig(realizations=200)
    rec = monte_carlo_q(phy, content, design, cfg).records
    phy80 = reference_phy(80)
    direct = monte_carlo_q(phy80, content, design, cfg)
    assert rec.estimate(content.a, phy80.N0, phy80.tau, phy80.W_hz) == (direct.q_hat, direct.stderr,
                                                                        direct.per_file)


def test_agrees_with_analysis(phy, content, design):
    res = monte_carlo_q(phy, content, design, SimConfig(realizations=1500, seed=3))
    assert isinstance(res, MCResult)
    q_hat, se, per_file = res
    q = q_general(phy, content, design).q
    assert abs(q_hat - q) <= max(0.03, 4 * se)
    assert set(per_file) == set(range(1, 11))


def test_naive_estimator_consistent(phy, content, design):
    cfg = SimConfig(realizations=800, seed=9)
    rec = monte_carlo_q(phy, content, design, cfg).records
    q_s, se_s, _ = rec.estimate(content.a, phy.N0, phy.tau, phy.W_hz, stratified=True)
    q_n, se_n, _ = rec.estimate(content.a, phy.N0, phy.tau, phy.W_hz, stratified=False)
    assert se_s < se_n
    assert abs(q_s - q_n) < 4 * math.hypot(se_s, se_n)


def test_stderr_scales_with_realizations(phy, content, design):
    small = monte_carlo_q(phy, content, design, SimConfig(realizations=200, seed=1))
    large = monte_carlo_q(phy, content, design, SimConfig(realizations=800, seed=1))
    assert large.stderr / small.stderr == pytest.approx(0.5, abs=0.15)


def test_small_window_warns(phy, content, design):
    with pytest.warns(EdgeEffectWarning):
        monte_carlo_q(phy, content, design, SimConfig(window_side=5000.0, realizations=2))


def test_torus_runs_and_adds_interference(phy, content, design):
    cfg = SimConfig(realizations=40, edge_policy="torus")
    rec = monte_carlo_q(phy, content, design, cfg).records
    plain = monte_carlo_q(phy, content, design, dataclasses.replace(cfg, edge_policy="plain-window")).records
    assert np.all(np.isfinite(rec.total_power))
    assert np.array_equal(rec.macro_count, plain.macro_count)
    # same world seen with and without its periodic images
    world = sample_realization(phy, content, design, cfg, 0)
    torus = associate_and_schedule(world, phy, content)
    centre = 4
    world.fading_macro = world.fading_macro[centre:centre + 1]
    world.fading_pico = world.fading_pico[centre:centre + 1]
    world.edge_policy = "plain-window"
    flat = associate_and_schedule(world, phy, content)
    assert np.array_equal(torus.signal[torus.serving >= 0], flat.signal[flat.serving >= 0])
    assert torus.total_power[0] > flat.total_power[0]


def test_compare_schemes_keys(phy, content, design):
    out = compare_schemes(phy, content, {"proposed": design,
                                         "b1": BaselineScheme(BaselineKind.MOST_POPULAR, content)},
                          SimConfig(realizations=10))
    assert list(out) == ["proposed", "b1"]
    assert all(0 <= r.q_hat <= 1 for r in out.values())


def test_empty_tier_world(content, design):
    sparse = dataclasses.replace(reference_phy(100), lambda1=1e-12, lambda2=2e-12)
    cfg = SimConfig(realizations=3, window_side=2000.0)
    with pytest.warns(EdgeEffectWarning):
        res = monte_carlo_q(sparse, content, design, cfg)
    assert res.q_hat == 0.0


def _lone_macro_world(content, design, fading, request=0):
    # one macro 100 m east of the typical user, one other user, no picos
    return NetworkRealization(
        macro_positions=np.array([[100.0, 0.0]]), pico_positions=np.zeros((0, 2)),
        user_positions=np.array([[50.0, 50.0]]), user_request=np.array([request]),
        fading_macro=np.array([[fading]]), fading_pico=np.zeros((1, 0)), lottery=np.full(10, 0.5),
        u0_request=1, placement=ProposedScheme(content, design).sample(np.random.default_rng(0), 1, 0),
        window_side=1000.0)


def test_lone_requester_load_and_missing_files(phy, content, design):
    world = _lone_macro_world(content, design, 1.0)
    sch = associate_and_schedule(world, phy, content)
    assert sch.serving[0] == 0 and sch.load[0] == 1
    # pico files have no server at all
    assert np.all(sch.serving[3:6] == -1)
    assert not evaluate_success(world, phy, sch, 5)
    other = associate_and_schedule(_lone_macro_world(content, design, 1.0, request=1), phy, content)
    assert other.load[0] == 2
    free = dataclasses.replace(phy, tau=1e-300)
    assert evaluate_success(world, free, sch, 1)


def test_noise_limited_link_matches_rayleigh_formula(content, design):
    base = reference_phy(100)
    theta = base.threshold(1)
    N0 = base.P1 / (theta * 100.0 ** 4)
    phy = dataclasses.replace(base, N0=N0)
    rng = np.random.default_rng(12)
    draws = 4000
    hits = 0
    for h in rng.exponential(size=draws):
        world = _lone_macro_world(content, design, h)
        hits += evaluate_success(world, phy, associate_and_schedule(world, phy, content), 1)
    expected = math.exp(-theta * 100.0 ** 4 * N0 / phy.P1)
    assert abs(hits / draws - expected) < 4 * math.sqrt(expected * (1 - expected) / draws)


def test_poisson_count_variance(phy, content):
    cfg = SimConfig(realizations=1500)
    counts = np.array([sample_geometry(phy, content, cfg, r).M for r in range(cfg.realizations)])
    mean = phy.lambda1 * cfg.area
    # variance of the sample variance of a Poisson(m) count is about (m + 2 m^2) / n
    assert abs(counts.var(ddof=1) - mean) < 4 * math.sqrt((mean + 2 * mean ** 2) / counts.size)


def test_plain_window_not_below_torus(phy, content, design):
    cfg = SimConfig(window_side=6000.0, realizations=1500, seed=4)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EdgeEffectWarning)
        plain = monte_carlo_q(phy, content, design, cfg)
        torus = monte_carlo_q(phy, content, design, dataclasses.replace(cfg, edge_policy="torus"))
    assert plain.q_hat - torus.q_hat > -3 * math.hypot(plain.stderr, torus.stderr)
