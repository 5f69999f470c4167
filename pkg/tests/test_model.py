import dataclasses
import json
import math

import pytest

from hetcache.model import (ContentParams, HybridDesign, Marginals, PhyParams, PopularityTieWarning,
                            ValidationError, db_to_linear, load_config, parse_config, reference_phy,
                            validate_design, zipf_popularity)


def _phy_kwargs():
    return dict(lambda1=5e-7, lambda2=3e-6, lambda_u=5e-5, P1=10 ** 1.5, P2=1.0, N0=1e-10,
                alpha1=4.0, alpha2=4.0, W_hz=20e6, tau=2e4)


def test_zipf_examples():
    assert zipf_popularity(2, 0.0) == pytest.approx((0.5, 0.5))
    assert zipf_popularity(2, 1.0) == pytest.approx((2 / 3, 1 / 3), rel=1e-15)
    harmonic = sum(1 / n for n in range(1, 11))
    assert zipf_popularity(10, 1.0)[0] == pytest.approx(1 / harmonic, rel=1e-14)
    assert zipf_popularity(10, 1.0)[0] == pytest.approx(0.3414, abs=5e-5)


@pytest.mark.parametrize("N", [1, 7, 100, 10_000])
def test_zipf_sums_to_one(N):
    a = zipf_popularity(N, 0.8)
    assert math.fsum(a) == pytest.approx(1.0, abs=1e-12)
    assert all(x > y for x, y in zip(a, a[1:]))


def test_zipf_rejects_negative_gamma():
    with pytest.raises(ValueError):
        zipf_popularity(5, -0.1)


def test_reference_design_is_valid(content, design):
    vd = validate_design(reference_phy(), content, design)
    assert vd.F1b == (7, 8, 9, 10)
    assert vd.F2c == (4, 5, 6)


def test_cardinality_violation_message():
    c = ContentParams(N=4, a=zipf_popularity(4, 1.0), K1c=2, K2c=1, K1b=0)
    with pytest.raises(ValidationError) as exc:
        validate_design(None, c, HybridDesign({1}, (2, 3), (0.5, 0.5)))
    assert any("|F1c| != K1c" in e for e in exc.value.errors)


def test_simplex_violation_message(content):
    with pytest.raises(ValidationError) as exc:
        validate_design(None, content, HybridDesign({1, 2, 3}, (4, 5, 6), (0.5, 0.4)))
    assert any("sum(p) != 1 / length mismatch" in e for e in exc.value.errors)
    with pytest.raises(ValidationError) as exc:
        validate_design(None, content, HybridDesign({1, 2, 3}, (4, 5, 6), (0.5, 0.4, 0.0)))
    assert any("sum(p) != 1" in e for e in exc.value.errors)


def test_all_violations_reported_together(content):
    bad = HybridDesign({1, 2, 4}, (4, 11), (0.5,))
    with pytest.raises(ValidationError) as exc:
        validate_design(None, content, bad)
    text = " ".join(exc.value.errors)
    assert "disjoint" in text and "subset" in text


@pytest.mark.parametrize("mutation", [
    lambda d: HybridDesign(d.F1c | {9}, d.F2c, d.p),          # too many macro files
    lambda d: HybridDesign({1, 2, 4}, d.F2c, d.p),            # overlap with F2c
    lambda d: HybridDesign(d.F1c, (4,), (1.0,)),              # pool smaller than K2c
    lambda d: HybridDesign(d.F1c, d.F2c, (1.2, -0.1, -0.1)),  # p outside [0, 1]
    lambda d: HybridDesign(d.F1c, (4, 5, 0), d.p),            # file id out of range
])
def test_single_field_mutations_rejected(content, design, mutation):
    with pytest.raises(ValidationError):
        validate_design(None, content, mutation(design))


@pytest.mark.parametrize("field,value", [
    ("lambda1", 4e-6), ("P1", 0.5), ("alpha1", 2.0), ("alpha2", 1.5), ("N0", -1.0),
    ("tau", 0.0), ("lambda_u", -1.0), ("W_hz", float("nan")),
])
def test_phy_invariants(field, value):
    kw = _phy_kwargs()
    kw[field] = value
    with pytest.raises(ValidationError):
        PhyParams(**kw)


def test_phy_zero_noise_allowed_and_threshold():
    phy = PhyParams(**{**_phy_kwargs(), "N0": 0.0})
    assert phy.threshold(1) == pytest.approx(2 ** (2e4 / 20e6) - 1, rel=1e-12)
    assert phy.threshold(3) == pytest.approx(2 ** (3e-3) - 1, rel=1e-12)
    assert phy.beta == pytest.approx(10 ** 1.5)


def test_with_snr_db():
    phy = reference_phy(None).with_snr_db(80)
    assert phy.N0 == pytest.approx(1e-8)
    assert reference_phy(100).asymptotic().N0 == 0.0


@pytest.mark.parametrize("kw", [
    dict(K1c=10), dict(K2c=0), dict(K1b=-1), dict(K1c=6, K2c=5), dict(K1b=10),
    dict(a=(0.5,) * 10), dict(a=tuple(reversed(zipf_popularity(10, 1.0)))), dict(N=11),
])
def test_content_invariants(kw):
    base = dict(N=10, a=zipf_popularity(10, 1.0), K1c=3, K2c=2, K1b=1)
    base.update(kw)
    with pytest.raises(ValidationError):
        ContentParams(**base)


def test_content_ties_warn_not_error():
    with pytest.warns(PopularityTieWarning):
        ContentParams(N=4, a=(0.25,) * 4, K1c=1, K2c=1, K1b=0)


def test_marginals_check():
    T = Marginals((4, 5, 6), (0.9, 0.7, 0.4))
    assert T.check(2) == []
    assert T[5] == 0.7
    assert Marginals((4, 5), (1.2, 0.8)).check(2)
    assert Marginals((4, 5), (0.5, 0.8)).check(2)


def test_parse_config_with_db_strings(tmp_path):
    cfg = {"phy": {"lambda1": 5e-7, "lambda2": 3e-6, "lambda_u": 5e-5, "P1_over_P2": "15 dB",
                   "P_over_N0": "100 dB", "alpha1": 4, "alpha2": 4, "W_hz": 2e7, "tau": 2e4},
           "content": {"N": 10, "gamma": 1.0, "K1c": 3, "K2c": 2, "K1b": 1},
           "design": {"F1c": [1, 2, 3], "F2c": [4, 5, 6], "p": [0.7, 0.2, 0.1]}}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    phy, content, design = load_config(path)
    ref = reference_phy(100)
    for f in dataclasses.fields(ref):
        assert getattr(phy, f.name) == pytest.approx(getattr(ref, f.name), rel=1e-12)
    assert content.a == pytest.approx(zipf_popularity(10, 1.0))
    assert design.F1c == frozenset({1, 2, 3})


def test_parse_config_errors():
    with pytest.raises(ValidationError) as exc:
        parse_config({"phy": {"lambda1": 1, "bogus": 2}, "content": {"N": 3}})
    assert any("unknown fields" in e for e in exc.value.errors)
    with pytest.raises(ValidationError):
        parse_config({"phy": {}})
    with pytest.raises(ValidationError):
        parse_config({"phy": {**_phy_kwargs(), "P_over_N0": "80"}, "content": {}})


def test_db_to_linear():
    assert db_to_linear(30) == pytest.approx(1000.0)
