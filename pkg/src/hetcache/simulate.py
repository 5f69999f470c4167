"""Monte Carlo simulation of the two-tier network.

Each replicate samples macro BSs, pico BSs and users as Poisson processes in
a square window with the typical user at its centre.  Every user attaches to
the BS with the largest average received power among those able to deliver
its file.  Under the hybrid design each file lives in a single tier, so this
is the nearest macro for macro files and the nearest pico holding the file
for pico files.  The typical user is scored for every file in every world,
and the per-file outcomes are mixed by popularity.

Outcomes are stored as (signal, total received power, load, transmitted) per
world and file.  Neither noise nor the rate target changes association or
loads, so one set of worlds can be rescored for several SNR values.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .combinatorics import enumerate_combinations
from .model import ContentParams, HybridDesign, PhyParams, ValidationError, validate_design

__all__ = [
    "SimConfig", "Placement", "NetworkRealization", "Schedule", "MCRecords", "MCResult",
    "ProposedScheme", "sample_realization", "associate_and_schedule", "evaluate_success",
    "simulate_records", "monte_carlo_q", "compare_schemes", "EdgeEffectWarning",
]

EDGE_POLICIES = ("plain-window", "torus")

# stream ids for per-replicate seed sequences
_GEOMETRY, _FADING, _LOTTERY, _REQUEST, _CACHE = range(5)


class EdgeEffectWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SimConfig:
    window_side: float = 15000.0
    realizations: int = 10_000
    seed: int = 0
    edge_policy: str = "plain-window"
    stratified: bool = True
    threads: int = 1

    def __post_init__(self):
        errors = []
        if not self.window_side > 0:
            errors.append("window_side must be > 0")
        if not isinstance(self.realizations, (int, np.integer)) or self.realizations < 1:
            errors.append("realizations must be an integer >= 1")
        if self.edge_policy not in EDGE_POLICIES:
            errors.append(f"edge_policy must be one of {EDGE_POLICIES}")
        if not 0 <= int(self.seed) < 2 ** 64:
            errors.append("seed must be a 64-bit unsigned integer")
        if self.threads < 1:
            errors.append("threads must be >= 1")
        if errors:
            raise ValidationError(errors)

    @property
    def area(self) -> float:
        return self.window_side ** 2


def _seed(cfg: SimConfig, replicate: int, stream: int, *extra: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(cfg.seed), spawn_key=(int(replicate), stream) + tuple(extra))
    return np.random.default_rng(ss)


# ---------------------------------------------------------------- placements

@dataclass
class Placement:
    """What each BS can deliver: ``macro_has``/``macro_fetch`` are ``(M, N)``
    boolean arrays, ``pico_has`` is ``(P, N)``.  Column ``j`` is file ``j+1``."""

    macro_has: np.ndarray
    macro_fetch: np.ndarray
    pico_has: np.ndarray
    pico_combo: np.ndarray | None = None


class ProposedScheme:
    """Identical macro caches, backhaul for the rest of the macro files and
    random pico combinations drawn from ``p``."""

    name = "proposed"

    def __init__(self, content: ContentParams, design: HybridDesign):
        vd = validate_design(None, content, design)
        self.content = content
        N = content.N
        self.F1c_mask = np.zeros(N, bool)
        self.F1c_mask[[n - 1 for n in vd.F1c]] = True
        self.F1b_mask = np.zeros(N, bool)
        self.F1b_mask[[n - 1 for n in vd.F1b]] = True
        idx = enumerate_combinations(vd.F2c, content.K2c)
        self.combo_masks = np.zeros((idx.I, N), bool)
        for i, c in enumerate(idx.combos):
            self.combo_masks[i, [n - 1 for n in c]] = True
        p = np.clip(np.asarray(vd.p, float), 0.0, None)
        self.p = p / p.sum()
        self.cdf = np.cumsum(self.p)
        self.cdf[-1] = 1.0

    def sample(self, rng: np.random.Generator, M: int, P: int) -> Placement:
        choice = np.searchsorted(self.cdf, rng.random(P), side="right")
        choice = np.minimum(choice, len(self.p) - 1)
        return Placement(
            macro_has=np.broadcast_to(self.F1c_mask, (M, self.content.N)),
            macro_fetch=np.broadcast_to(self.F1b_mask, (M, self.content.N)),
            pico_has=self.combo_masks[choice],
            pico_combo=choice,
        )


# ---------------------------------------------------------------- worlds

@dataclass
class NetworkRealization:
    """One sampled world.  Coordinates are relative to the typical user.

    ``fading_macro`` / ``fading_pico`` hold the power gains towards the typical
    user, one row per periodic image (a single row for the plain window).
    """

    macro_positions: np.ndarray
    pico_positions: np.ndarray
    user_positions: np.ndarray
    user_request: np.ndarray
    fading_macro: np.ndarray
    fading_pico: np.ndarray
    lottery: np.ndarray
    u0_request: int
    placement: Placement | None = None
    window_side: float = 0.0
    edge_policy: str = "plain-window"

    @property
    def M(self) -> int:
        return len(self.macro_positions)

    @property
    def P(self) -> int:
        return len(self.pico_positions)


_IMAGE_OFFSETS = np.array([(i, j) for i in (-1, 0, 1) for j in (-1, 0, 1)], float)


def _uniform_points(rng, count, L):
    return rng.uniform(-L / 2, L / 2, size=(count, 2))


def sample_geometry(phy: PhyParams, content: ContentParams, cfg: SimConfig, replicate: int) -> NetworkRealization:
    g = _seed(cfg, replicate, _GEOMETRY)
    L = cfg.window_side
    A = cfg.area
    M = g.poisson(phy.lambda1 * A)
    P = g.poisson(phy.lambda2 * A)
    U = g.poisson(phy.lambda_u * A)
    macro = _uniform_points(g, M, L)
    pico = _uniform_points(g, P, L)
    users = _uniform_points(g, U, L)
    a = np.asarray(content.a)
    cdf = np.cumsum(a)
    cdf[-1] = 1.0
    req = np.minimum(np.searchsorted(cdf, g.random(U), side="right"), content.N - 1)
    f = _seed(cfg, replicate, _FADING)
    images = 9 if cfg.edge_policy == "torus" else 1
    fm = f.exponential(1.0, size=(images, M))
    fp = f.exponential(1.0, size=(images, P))
    lottery = _seed(cfg, replicate, _LOTTERY).random(content.N)
    r = _seed(cfg, replicate, _REQUEST).random()
    u0 = int(min(np.searchsorted(cdf, r, side="right"), content.N - 1)) + 1
    return NetworkRealization(macro, pico, users, req.astype(np.int64), fm, fp, lottery, u0,
                              None, L, cfg.edge_policy)


def sample_realization(phy: PhyParams, content: ContentParams, design, cfg: SimConfig,
                       replicate_index: int, scheme_index: int = 0) -> NetworkRealization:
    """Sample a world and the caches for ``design`` (a :class:`HybridDesign`
    or any object with a ``sample(rng, M, P)`` method)."""
    scheme = ProposedScheme(content, design) if isinstance(design, HybridDesign) else design
    world = sample_geometry(phy, content, cfg, replicate_index)
    world.placement = scheme.sample(_seed(cfg, replicate_index, _CACHE, scheme_index), world.M, world.P)
    return world


# ---------------------------------------------------------------- association

@dataclass
class Schedule:
    """Per-file outcome for the typical user in one world.

    Arrays are indexed by file id minus one.  ``serving`` is a global BS index
    (macros first, then picos) or -1 when no BS can deliver the file.
    """

    serving: np.ndarray
    load: np.ndarray
    transmitted: np.ndarray
    signal: np.ndarray
    total_power: np.ndarray
    served_sets: dict = field(default_factory=dict)
    backhaul_selected_prob: np.ndarray | None = None


def _received_power(world: NetworkRealization, phy: PhyParams):
    """Power at the typical user from every BS, and the total over all
    periodic images."""
    L = world.window_side
    if world.edge_policy == "torus":
        offs = _IMAGE_OFFSETS * L
    else:
        offs = np.zeros((1, 2))
    total = 0.0
    central = {}
    for tier, pos, fad, P, alpha in (("m", world.macro_positions, world.fading_macro, phy.P1, phy.alpha1),
                                     ("p", world.pico_positions, world.fading_pico, phy.P2, phy.alpha2)):
        if len(pos) == 0:
            central[tier] = np.zeros(0)
            continue
        shifted = pos[None, :, :] + offs[:, None, :]
        d = np.hypot(shifted[..., 0], shifted[..., 1])
        with np.errstate(divide="ignore"):
            pw = P * fad * d ** (-alpha)
        total += pw.sum()
        centre = int(np.flatnonzero((offs == 0).all(axis=1))[0])
        central[tier] = pw[centre]
    return np.concatenate([central["m"], central["p"]]), float(total)


_SECTOR_NEIGHBOURS = 48


class _TreeCache:
    """Per-tier k-d trees keyed by the mask of BSs that qualify for a file."""

    def __init__(self, positions: np.ndarray, L: float, torus: bool):
        self.L = L
        self.torus = torus
        self.raw = positions
        self.pos = np.mod(positions + L / 2, L) if torus else positions
        self.cache = {}

    def get(self, mask: np.ndarray):
        key = mask.tobytes()
        t = self.cache.get(key)
        if t is None:
            ids = np.flatnonzero(mask)
            if ids.size == 0:
                t = (ids, None)
            else:
                tree = cKDTree(self.pos[ids], boxsize=self.L if self.torus else None)
                t = (ids, tree)
            self.cache[key] = t
        return t

    def query_points(self, pts: np.ndarray) -> np.ndarray:
        if self.torus:
            return np.mod(pts + self.L / 2, self.L)
        return pts

    def displacement(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        d = a - b
        if self.torus:
            d -= self.L * np.round(d / self.L)
        return d

    def cell_radius(self, mask: np.ndarray, bs: np.ndarray) -> np.ndarray:
        """Upper bound on the distance from each BS in ``bs`` to any point of
        its Voronoi cell among the qualifying BSs of this tier.

        If every 60-degree sector around ``b`` holds a qualifying BS within
        ``r``, a point farther than ``r`` from ``b`` is strictly closer to that
        neighbour, so the cell fits in the disc of radius ``r``.
        """
        ids, tree = self.get(mask)
        out = np.full(len(bs), np.inf)
        k = min(_SECTOR_NEIGHBOURS, ids.size)
        if k < 7:
            return out
        _, j = tree.query(self.pos[bs], k=k)
        nb = ids[j]
        v = self.displacement(self.raw[nb], self.raw[bs][:, None, :])
        dist = np.hypot(v[..., 0], v[..., 1])
        sector = (np.floor(np.arctan2(v[..., 1], v[..., 0]) / (np.pi / 3)).astype(int)) % 6
        dist[nb == bs[:, None]] = np.inf
        r = np.full(len(bs) * 6, np.inf)
        np.minimum.at(r, (np.arange(len(bs))[:, None] * 6 + sector).ravel(), dist.ravel())
        out = r.reshape(-1, 6).max(axis=1)
        if self.torus:
            out[out > self.L / 4] = np.inf
        return out


def _best_server(tiers, m: int, pts: np.ndarray) -> np.ndarray:
    """Global index of the strongest qualifying BS for file index ``m``."""
    best = np.full(len(pts), -1, dtype=np.int64)
    best_pw = np.full(len(pts), -np.inf)
    best_d = np.full(len(pts), np.inf)
    for cache, qual, Ptx, alpha, offset in tiers:
        ids, tree = cache.get(np.ascontiguousarray(qual[:, m]))
        if tree is None:
            continue
        d, j = tree.query(cache.query_points(pts))
        with np.errstate(divide="ignore"):
            pw = Ptx * d ** (-alpha)
        gid = ids[j] + offset
        better = (pw > best_pw) | ((pw == best_pw) & ((d < best_d) | ((d == best_d) & (gid < best))))
        best = np.where(better, gid, best)
        best_pw = np.where(better, pw, best_pw)
        best_d = np.where(better, d, best_d)
    return best


def associate_and_schedule(world: NetworkRealization, phy: PhyParams, content: ContentParams,
                           design=None, prune: bool = True) -> Schedule:
    """Associate all users, build each candidate server's set of requested
    files and work out, for every file the typical user might request, its
    server, the multicast load there and whether the file is transmitted.

    With ``prune`` only users that can fall inside a candidate server's cell
    are associated; ``prune=False`` associates every user.
    """
    placement = world.placement
    if placement is None:
        if design is None:
            raise ValueError("world has no cache placement and no design was given")
        raise ValueError("sample the world with sample_realization to attach caches")
    N, K1b = content.N, content.K1b
    M, P = world.M, world.P
    torus = world.edge_policy == "torus"
    L = world.window_side
    q_macro = placement.macro_has | (placement.macro_fetch & (K1b > 0))
    q_pico = placement.pico_has
    tiers = []
    if M:
        tiers.append((_TreeCache(world.macro_positions, L, torus), q_macro, phy.P1, phy.alpha1, 0))
    if P:
        tiers.append((_TreeCache(world.pico_positions, L, torus), q_pico, phy.P2, phy.alpha2, M))

    req = world.user_request
    order = np.argsort(req, kind="stable")
    bounds = np.searchsorted(req[order], np.arange(N + 1))
    assoc = np.full(len(req), -1, dtype=np.int64)
    serving = np.full(N, -1, dtype=np.int64)
    # files whose qualifying BSs coincide are handled together
    groups = {}
    for m in range(N):
        key = b"".join(np.ascontiguousarray(qual[:, m]).tobytes() for _, qual, *_ in tiers)
        groups.setdefault(key, []).append(m)
    groups = list(groups.values())
    # typical user: strongest qualifying BS per file (ties go to the lower id)
    qual_all = np.vstack([q_macro[:M], q_pico[:P]])
    if len(qual_all):
        d0 = np.hypot(*np.vstack([world.macro_positions, world.pico_positions]).T)
        with np.errstate(divide="ignore"):
            pw0 = np.concatenate([phy.P1 * d0[:M] ** (-phy.alpha1), phy.P2 * d0[M:] ** (-phy.alpha2)])
        scores = np.where(qual_all, pw0[:, None], -np.inf)
        serving = np.argmax(scores, axis=0)
        serving[~qual_all.any(axis=0)] = -1
    cands = np.unique(serving[serving >= 0])

    # only users inside a candidate's cell can add to that candidate's load
    for files in groups:
        m0 = files[0]
        local = []
        for cache, qual, _, _, offset in tiers:
            n_bs = len(cache.raw)
            c = cands[(cands >= offset) & (cands < offset + n_bs)] - offset
            c = c[qual[c, m0]]
            if c.size:
                local.append((cache, c, cache.cell_radius(np.ascontiguousarray(qual[:, m0]), c)))
        if not local:
            continue
        users = np.concatenate([order[bounds[m]:bounds[m + 1]] for m in files])
        if users.size == 0:
            continue
        upos = world.user_positions[users]
        near = np.zeros(users.size, dtype=bool)
        for cache, c, radius in local:
            for bpos, r in zip(cache.raw[c], radius):
                if not prune or not np.isfinite(r):
                    near[:] = True
                    break
                v = cache.displacement(upos, bpos)
                near |= v[:, 0] ** 2 + v[:, 1] ** 2 <= r * r
        users = users[near]
        if users.size:
            assoc[users] = _best_server(tiers, m0, world.user_positions[users])

    sets = np.zeros((len(cands), N), dtype=bool)
    if len(cands):
        sel = np.isin(assoc, cands)
        sets[np.searchsorted(cands, assoc[sel]), req[sel]] = True

    rp, total = _received_power(world, phy)
    load = np.zeros(N, dtype=np.int64)
    transmitted = np.zeros(N, dtype=bool)
    signal = np.zeros(N)
    sel_prob = np.zeros(N)
    has_server = serving >= 0
    if has_server.any():
        files = np.flatnonzero(has_server)
        b = serving[files]
        rows = sets[np.searchsorted(cands, b)].copy()
        rows[np.arange(len(files)), files] = True
        is_macro = b < M
        has = np.zeros_like(rows)
        fetch = np.zeros_like(rows)
        if M:
            has[is_macro] = placement.macro_has[b[is_macro]]
            fetch[is_macro] = placement.macro_fetch[b[is_macro]] & ~has[is_macro]
        if P:
            has[~is_macro] = placement.pico_has[b[~is_macro] - M]
        kc = np.count_nonzero(rows & has, axis=1)
        kb = np.count_nonzero(rows & fetch, axis=1)
        load[files] = kc + np.minimum(K1b, kb)
        cached = has[np.arange(len(files)), files]
        with np.errstate(divide="ignore", invalid="ignore"):
            prob = np.where(cached, 1.0, np.minimum(K1b, kb) / np.maximum(kb, 1))
        sel_prob[files] = prob
        # the requested file wins the uniform backhaul lottery with prob min(K1b, kb)/kb
        transmitted[files] = cached | (world.lottery[files] < prob)
        signal[files] = rp[b]
    served = {int(c): tuple(int(n) + 1 for n in np.flatnonzero(sets[i])) for i, c in enumerate(cands)}
    return Schedule(serving, load, transmitted, signal, np.full(N, total), served, sel_prob)


def evaluate_success(world: NetworkRealization, phy: PhyParams, schedule: Schedule, u0_request: int) -> bool:
    """Whether the typical user decodes file ``u0_request`` at rate ``tau``."""
    j = u0_request - 1
    if schedule.serving[j] < 0 or not schedule.transmitted[j]:
        return False
    k = schedule.load[j]
    s = schedule.signal[j]
    interference = schedule.total_power[j] - s
    return bool(s >= phy.threshold(int(k)) * (interference + phy.N0))


# ---------------------------------------------------------------- estimation

@dataclass
class MCRecords:
    """Per-world, per-file outcomes (rows: replicates, columns: files)."""

    signal: np.ndarray
    total_power: np.ndarray
    load: np.ndarray
    transmitted: np.ndarray
    u0_request: np.ndarray
    macro_count: np.ndarray
    pico_count: np.ndarray

    def success(self, N0: float, tau: float, W_hz: float) -> np.ndarray:
        thr = np.expm1(self.load * (tau / W_hz) * math.log(2.0))
        interference = self.total_power - self.signal
        return self.transmitted & (self.load > 0) & (self.signal >= thr * (interference + N0))

    def estimate(self, a: Sequence[float], N0: float, tau: float, W_hz: float, stratified: bool = True):
        S = self.success(N0, tau, W_hz)
        R = S.shape[0]
        if stratified:
            Y = S @ np.asarray(a, float)
        else:
            Y = S[np.arange(R), self.u0_request - 1].astype(float)
        q = float(Y.mean())
        se = float(Y.std(ddof=1) / math.sqrt(R)) if R > 1 else float("nan")
        per_file = {n + 1: float(v) for n, v in enumerate(S.mean(axis=0))}
        return q, se, per_file


@dataclass
class MCResult:
    q_hat: float
    stderr: float
    per_file: dict
    records: MCRecords | None = None

    def __iter__(self):
        return iter((self.q_hat, self.stderr, self.per_file))


def _as_scheme(content, design):
    if isinstance(design, HybridDesign):
        return ProposedScheme(content, design)
    if hasattr(design, "sample"):
        return design
    raise TypeError("design must be a HybridDesign or a scheme with a sample(rng, M, P) method")


def _run_replicate(phy, content, schemes, cfg, r):
    world = sample_geometry(phy, content, cfg, r)
    out = []
    for s_idx, scheme in enumerate(schemes):
        world.placement = scheme.sample(_seed(cfg, r, _CACHE, s_idx), world.M, world.P)
        sch = associate_and_schedule(world, phy, content)
        out.append((sch.signal, sch.total_power, sch.load, sch.transmitted))
    return world.u0_request, world.M, world.P, out


def _check_window(phy: PhyParams, cfg: SimConfig):
    if cfg.window_side < 10.0 / math.sqrt(phy.lambda1):
        warnings.warn(
            f"window side {cfg.window_side:g} m is under ten macro spacings; edge effects "
            "will understate interference (consider a larger window or edge_policy='torus')",
            EdgeEffectWarning, stacklevel=3)


def simulate_records(phy: PhyParams, content: ContentParams, schemes: Sequence, cfg: SimConfig) -> list:
    """Run the replicates once and return one :class:`MCRecords` per scheme.

    All schemes share geometry, fading, lottery draws and the typical user's
    request (common random numbers); only cache placements differ.
    """
    _check_window(phy, cfg)
    schemes = [_as_scheme(content, s) for s in schemes]
    R, N, S = cfg.realizations, content.N, len(schemes)
    sig = np.zeros((S, R, N))
    tot = np.zeros((S, R, N))
    load = np.zeros((S, R, N), dtype=np.int64)
    tx = np.zeros((S, R, N), dtype=bool)
    u0 = np.zeros(R, dtype=np.int64)
    mc = np.zeros(R, dtype=np.int64)
    pc = np.zeros(R, dtype=np.int64)

    def work(r):
        return r, _run_replicate(phy, content, schemes, cfg, r)

    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as ex:
            results = ex.map(work, range(R), chunksize=64)
            _collect(results, sig, tot, load, tx, u0, mc, pc)
    else:
        _collect(map(work, range(R)), sig, tot, load, tx, u0, mc, pc)
    return [MCRecords(sig[s], tot[s], load[s], tx[s], u0, mc, pc) for s in range(S)]


def _collect(results, sig, tot, load, tx, u0, mc, pc):
    for r, (req, M, P, out) in results:
        u0[r], mc[r], pc[r] = req, M, P
        for s, (a, b, c, d) in enumerate(out):
            sig[s, r], tot[s, r], load[s, r], tx[s, r] = a, b, c, d


def monte_carlo_q(phy: PhyParams, content: ContentParams, design, cfg: SimConfig) -> MCResult:
    """Estimate the success probability of ``design`` with its standard error
    and per-file success rates."""
    rec = simulate_records(phy, content, [design], cfg)[0]
    q, se, per_file = rec.estimate(content.a, phy.N0, phy.tau, phy.W_hz, cfg.stratified)
    return MCResult(q, se, per_file, rec)


def compare_schemes(phy: PhyParams, content: ContentParams, schemes: Mapping[str, object],
                    cfg: SimConfig) -> dict:
    """Estimates for several schemes under common random numbers, plus the
    per-replicate outcomes for paired comparisons."""
    names = list(schemes)
    recs = simulate_records(phy, content, [schemes[k] for k in names], cfg)
    out = {}
    for name, rec in zip(names, recs):
        q, se, per_file = rec.estimate(content.a, phy.N0, phy.tau, phy.W_hz, cfg.stratified)
        out[name] = MCResult(q, se, per_file, rec)
    return out
