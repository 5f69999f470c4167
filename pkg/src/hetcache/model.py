"""Parameter and design types for the two-tier cache-enabled network.

File ids are 1-based and ordered by popularity, so file 1 is the most popular.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

__all__ = [
    "ValidationError", "PopularityTieWarning", "PhyParams", "ContentParams",
    "HybridDesign", "ValidatedDesign", "Marginals", "validate_design",
    "zipf_popularity", "db_to_linear", "reference_phy", "reference_content",
    "reference_design", "load_config", "parse_config",
]

SUM_TOL = 1e-9


class ValidationError(ValueError):
    """Raised with the full list of violated constraints in ``errors``."""

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class PopularityTieWarning(UserWarning):
    pass


def _positive(name, value, errors):
    if not (isinstance(value, (int, float, np.floating, np.integer)) and math.isfinite(value) and value > 0):
        errors.append(f"{name} must be a finite number > 0 (got {value!r})")


@dataclass(frozen=True)
class PhyParams:
    """Physical layer constants. ``N0 = 0`` is the interference-limited regime."""

    lambda1: float
    lambda2: float
    lambda_u: float
    P1: float
    P2: float
    N0: float
    alpha1: float
    alpha2: float
    W_hz: float
    tau: float

    def __post_init__(self):
        errors = []
        for name in ("lambda1", "lambda2", "lambda_u", "P1", "P2", "alpha1", "alpha2", "W_hz", "tau"):
            _positive(name, getattr(self, name), errors)
        if not (math.isfinite(self.N0) and self.N0 >= 0):
            errors.append(f"N0 must be >= 0 (got {self.N0!r})")
        if not errors:
            if not self.lambda1 < self.lambda2:
                errors.append("network model requires lambda1 < lambda2")
            if not self.P1 > self.P2:
                errors.append("network model requires P1 > P2")
            if not self.alpha1 > 2:
                errors.append("path-loss exponent alpha1 must be > 2")
            if not self.alpha2 > 2:
                errors.append("path-loss exponent alpha2 must be > 2")
        if errors:
            raise ValidationError(errors)

    @property
    def beta(self) -> float:
        """Macro-to-pico power ratio."""
        return self.P1 / self.P2

    @property
    def equal_alpha(self) -> bool:
        return self.alpha1 == self.alpha2

    def threshold(self, k: int) -> float:
        """SINR threshold ``2^(k tau / W) - 1`` for multicast load ``k``."""
        return math.expm1(k * self.tau / self.W_hz * math.log(2.0))

    def asymptotic(self) -> "PhyParams":
        """Same constants with the noise removed."""
        return replace(self, N0=0.0)

    def with_snr_db(self, snr_db: float) -> "PhyParams":
        """Set ``N0`` so that ``P2 / N0`` equals ``snr_db``."""
        return replace(self, N0=self.P2 / db_to_linear(snr_db))


@dataclass(frozen=True)
class ContentParams:
    N: int
    a: tuple
    K1c: int
    K2c: int
    K1b: int

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(v) for v in self.a))
        errors = []
        for name in ("N", "K1c", "K2c", "K1b"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool):
                errors.append(f"{name} must be an integer (got {v!r})")
        if errors:
            raise ValidationError(errors)
        N, a = self.N, self.a
        if N < 1:
            errors.append(f"N must be >= 1 (got {N})")
        if len(a) != N:
            errors.append(f"popularity vector has length {len(a)}, expected N={N}")
        if any(not (0.0 < v < 1.0) for v in a):
            errors.append("each popularity a_n must lie in (0, 1)")
        if a and abs(math.fsum(a) - 1.0) > SUM_TOL:
            errors.append(f"popularity must sum to 1 (sum={math.fsum(a)!r})")
        diffs = np.diff(np.asarray(a))
        if np.any(diffs > 0):
            errors.append("popularity must be nonincreasing in file id (a_1 > a_2 > ... > a_N)")
        if self.K1c < 1:
            errors.append(f"K1c must be >= 1 (got {self.K1c})")
        if self.K2c < 1:
            errors.append(f"K2c must be >= 1 (got {self.K2c})")
        if self.K1b < 0:
            errors.append(f"K1b must be >= 0 (got {self.K1b})")
        if not self.K1c < N:
            errors.append(f"K1c must be < N (got K1c={self.K1c}, N={N})")
        if not self.K2c < N:
            errors.append(f"K2c must be < N (got K2c={self.K2c}, N={N})")
        if not self.K1b < N:
            errors.append(f"K1b must be < N (got K1b={self.K1b}, N={N})")
        if not self.K1c + self.K2c <= N:
            errors.append(f"cache sizes must satisfy K1c + K2c <= N (got {self.K1c} + {self.K2c} > {N})")
        if errors:
            raise ValidationError(errors)
        if np.any(diffs == 0):
            warnings.warn("popularity has ties; strict ordering is assumed by the structural results",
                          PopularityTieWarning, stacklevel=3)

    @property
    def files(self) -> range:
        return range(1, self.N + 1)

    def pop(self, n: int) -> float:
        return self.a[n - 1]

    def with_popularity(self, a: Sequence[float]) -> "ContentParams":
        return replace(self, a=tuple(a))


@dataclass(frozen=True)
class HybridDesign:
    """Identical macro cache ``F1c``, pico file pool ``F2c`` and the
    probabilities ``p`` over the size-``K2c`` combinations of ``F2c`` in
    lexicographic order."""

    F1c: frozenset
    F2c: tuple
    p: tuple

    def __post_init__(self):
        object.__setattr__(self, "F1c", frozenset(int(n) for n in self.F1c))
        object.__setattr__(self, "F2c", tuple(sorted(int(n) for n in self.F2c)))
        object.__setattr__(self, "p", tuple(float(v) for v in self.p))


@dataclass(frozen=True)
class ValidatedDesign:
    content: ContentParams
    F1c: frozenset
    F2c: tuple
    F1b: tuple
    p: tuple

    @property
    def design(self) -> HybridDesign:
        return HybridDesign(self.F1c, self.F2c, self.p)


@dataclass(frozen=True)
class Marginals:
    """Per-file pico caching probabilities over ``F2c`` (ascending ids)."""

    F2c: tuple
    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "F2c", tuple(int(n) for n in self.F2c))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.F2c) != len(self.values):
            raise ValidationError(["marginals and F2c have different lengths"])

    @property
    def T(self) -> dict:
        return dict(zip(self.F2c, self.values))

    def __getitem__(self, n: int) -> float:
        return self.T[n]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def check(self, K2c: int, tol: float = 1e-9) -> list:
        errors = []
        T = self.as_array()
        if np.any(T < -tol) or np.any(T > 1 + tol):
            errors.append("each T_n must lie in [0, 1]")
        if abs(T.sum() - K2c) > tol * max(1, len(T)):
            errors.append(f"marginals must sum to K2c={K2c} (sum={T.sum()!r})")
        return errors


def validate_design(phy: PhyParams | None, content: ContentParams, design: HybridDesign) -> ValidatedDesign:
    """Check a design against the content parameters.

    Returns the design with the backhaul set ``F1b`` attached, or raises
    :class:`ValidationError` listing every violated constraint.
    """
    if phy is not None and not isinstance(phy, PhyParams):
        raise TypeError("phy must be a PhyParams instance")
    errors = []
    N = content.N
    F1c, F2c = design.F1c, design.F2c
    universe = set(content.files)
    if not F1c <= universe:
        errors.append(f"F1c must be a subset of files 1..{N} (extra: {sorted(F1c - universe)})")
    if not set(F2c) <= universe:
        errors.append(f"F2c must be a subset of files 1..{N} (extra: {sorted(set(F2c) - universe)})")
    if len(set(F2c)) != len(F2c):
        errors.append("F2c contains duplicate file ids")
    if F1c & set(F2c):
        errors.append(f"F1c and F2c must be disjoint (common: {sorted(F1c & set(F2c))})")
    if len(F1c) != content.K1c:
        errors.append(f"|F1c| != K1c ({len(F1c)} != {content.K1c})")
    if len(F2c) < content.K2c:
        errors.append(f"|F2c| must be >= K2c ({len(F2c)} < {content.K2c})")
    else:
        n_comb = math.comb(len(F2c), content.K2c)
        p = np.asarray(design.p, dtype=float)
        if len(p) != n_comb:
            errors.append(f"sum(p) != 1 / length mismatch: p has {len(p)} entries, "
                          f"expected C({len(F2c)}, {content.K2c}) = {n_comb}")
        else:
            if np.any(p < 0) or np.any(p > 1):
                errors.append("each p_i must lie in [0, 1]")
            if abs(p.sum() - 1.0) > SUM_TOL:
                errors.append(f"sum(p) != 1 / length mismatch: sum(p) = {p.sum()!r}")
    if errors:
        raise ValidationError(errors)
    F1b = tuple(sorted(universe - F1c - set(F2c)))
    return ValidatedDesign(content, F1c, F2c, F1b, design.p)


def zipf_popularity(N: int, gamma: float) -> tuple:
    """Zipf popularity ``a_n = n^-gamma / sum_m m^-gamma`` for ``n = 1..N``."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    w = np.arange(1, N + 1, dtype=float) ** (-float(gamma))
    return tuple((w / math.fsum(w)).tolist())


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def _parse_db(value: Any, name: str) -> float:
    """Accept a linear number or a string with an explicit ``dB`` suffix."""
    if isinstance(value, str):
        s = value.strip()
        if s.lower().endswith("db"):
            return db_to_linear(float(s[:-2]))
        raise ValidationError([f"{name}: string values need a 'dB' suffix (got {value!r})"])
    return float(value)


def reference_phy(snr_db: float | None = 100.0, lambda_u: float = 5e-5) -> PhyParams:
    """Reference small-network constants; ``snr_db=None`` gives ``N0 = 0``."""
    P = 1.0
    N0 = 0.0 if snr_db is None else P / db_to_linear(snr_db)
    return PhyParams(lambda1=5e-7, lambda2=3e-6, lambda_u=lambda_u, P1=10 ** 1.5 * P, P2=P,
                     N0=N0, alpha1=4.0, alpha2=4.0, W_hz=20e6, tau=2e4)


def reference_content(N: int = 10, K1c: int = 3, K2c: int = 2, K1b: int = 1, gamma: float = 1.0) -> ContentParams:
    return ContentParams(N=N, a=zipf_popularity(N, gamma), K1c=K1c, K2c=K2c, K1b=K1b)


def reference_design() -> HybridDesign:
    return HybridDesign(F1c=frozenset({1, 2, 3}), F2c=(4, 5, 6), p=(0.7, 0.2, 0.1))


_PHY_FIELDS = ("lambda1", "lambda2", "lambda_u", "P1", "P2", "N0", "alpha1", "alpha2", "W_hz", "tau")


def _phy_from_dict(d: Mapping[str, Any]) -> PhyParams:
    d = dict(d)
    errors = []
    P2 = float(d.pop("P2", 1.0))
    if "P1_over_P2" in d:
        if "P1" in d:
            errors.append("phy: give either P1 or P1_over_P2, not both")
        d["P1"] = P2 * _parse_db(d.pop("P1_over_P2"), "phy.P1_over_P2")
    if "P_over_N0" in d:
        if "N0" in d:
            errors.append("phy: give either N0 or P_over_N0, not both")
        d["N0"] = P2 / _parse_db(d.pop("P_over_N0"), "phy.P_over_N0")
    d["P2"] = P2
    unknown = set(d) - set(_PHY_FIELDS)
    if unknown:
        errors.append(f"phy: unknown fields {sorted(unknown)}")
    missing = set(_PHY_FIELDS) - set(d)
    if missing:
        errors.append(f"phy: missing fields {sorted(missing)}")
    if errors:
        raise ValidationError(errors)
    return PhyParams(**{k: float(d[k]) for k in _PHY_FIELDS})


def _content_from_dict(d: Mapping[str, Any]) -> ContentParams:
    d = dict(d)
    errors = []
    if "gamma" in d:
        if "a" in d:
            errors.append("content: give either a or gamma, not both")
        gamma = d.pop("gamma")
        if "N" not in d:
            errors.append("content: N is required with gamma")
        else:
            d["a"] = zipf_popularity(int(d["N"]), float(gamma))
    fields_ = ("N", "a", "K1c", "K2c", "K1b")
    unknown = set(d) - set(fields_)
    if unknown:
        errors.append(f"content: unknown fields {sorted(unknown)}")
    missing = set(fields_) - set(d)
    if missing:
        errors.append(f"content: missing fields {sorted(missing)}")
    if errors:
        raise ValidationError(errors)
    return ContentParams(N=int(d["N"]), a=tuple(d["a"]), K1c=int(d["K1c"]),
                         K2c=int(d["K2c"]), K1b=int(d["K1b"]))


def _design_from_dict(d: Mapping[str, Any]) -> HybridDesign:
    unknown = set(d) - {"F1c", "F2c", "p"}
    missing = {"F1c", "F2c", "p"} - set(d)
    errors = []
    if unknown:
        errors.append(f"design: unknown fields {sorted(unknown)}")
    if missing:
        errors.append(f"design: missing fields {sorted(missing)}")
    if errors:
        raise ValidationError(errors)
    return HybridDesign(F1c=frozenset(d["F1c"]), F2c=tuple(d["F2c"]), p=tuple(d["p"]))


def parse_config(cfg: Mapping[str, Any]):
    """Build ``(phy, content, design_or_None)`` from a config mapping."""
    errors = []
    unknown = set(cfg) - {"phy", "content", "design"}
    if unknown:
        errors.append(f"unknown top-level sections {sorted(unknown)}")
    for sec in ("phy", "content"):
        if sec not in cfg:
            errors.append(f"missing section '{sec}'")
    if errors:
        raise ValidationError(errors)
    # report problems in every section at once
    built = {}
    for sec, build in (("phy", _phy_from_dict), ("content", _content_from_dict)):
        try:
            built[sec] = build(cfg[sec])
        except ValidationError as exc:
            errors.extend(exc.errors)
    if errors:
        raise ValidationError(errors)
    phy, content = built["phy"], built["content"]
    design = None
    if cfg.get("design") is not None:
        design = _design_from_dict(cfg["design"])
        validate_design(phy, content, design)
    return phy, content, design


def load_config(path: str | Path):
    with open(path) as fh:
        return parse_config(json.load(fh))
