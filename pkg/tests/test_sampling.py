import numpy as np
import pytest

from xlda_kit.corpus import CorpusStats, LanguageStats
from xlda_kit.errors import ConfigError, DataError
from xlda_kit.sampling import (
    MixturePlan,
    SamplerConfig,
    constraint_flags,
    draw_language,
    language_distribution,
)


def make_stats(tokens: dict[str, int]) -> CorpusStats:
    return CorpusStats(
        per_language={c: LanguageStats(documents=1, tokens=t) for c, t in tokens.items()}
    )


IMBALANCED_SIZES = {"en": 8500, "ko": 1000, "other": 500}
UNIFORM_BETA = {"en": 0.2, "ko": 0.6, "other": 0.2}


def test_alpha_one_reduces_to_proportional():
    config = SamplerConfig(alpha_temp=1.0, beta=UNIFORM_BETA)
    dist = language_distribution(config, make_stats(IMBALANCED_SIZES))
    assert dist == {"en": 0.85, "ko": 0.10, "other": 0.05}


def test_alpha_zero_reduces_to_beta():
    config = SamplerConfig(alpha_temp=0.0, beta=UNIFORM_BETA)
    dist = language_distribution(config, make_stats(IMBALANCED_SIZES))
    assert dist == UNIFORM_BETA


def test_alpha_half_interpolates():
    config = SamplerConfig(alpha_temp=0.5, beta=UNIFORM_BETA)
    dist = language_distribution(config, make_stats(IMBALANCED_SIZES))
    assert dist["ko"] == pytest.approx(0.5 * 0.10 + 0.5 * 0.60, abs=1e-15)


def test_distribution_sums_to_one_randomized():
    gen = np.random.Generator(np.random.Philox(key=np.array([5, 0], dtype=np.uint64)))
    for _ in range(500):
        m = int(gen.integers(1, 8))
        codes = [f"l{i}" for i in range(m)]
        sizes = {c: int(gen.integers(1, 10_000)) for c in codes}
        raw = gen.uniform(0, 1, m)
        raw = raw / raw.sum()
        beta = dict(zip(codes, raw))
        beta[codes[0]] += 1.0 - sum(beta.values())
        config = SamplerConfig(alpha_temp=float(gen.uniform(0, 1)), beta=beta)
        dist = language_distribution(config, make_stats(sizes))
        assert abs(sum(dist.values()) - 1.0) <= 1e-12
        assert all(p >= 0 for p in dist.values())


def test_empty_corpus_is_error():
    config = SamplerConfig(alpha_temp=1.0, beta={"en": 1.0})
    with pytest.raises(DataError):
        language_distribution(config, make_stats({}))


def test_language_mismatch_is_error():
    config = SamplerConfig(alpha_temp=1.0, beta={"en": 1.0})
    with pytest.raises(ConfigError, match="missing from beta"):
        language_distribution(config, make_stats({"en": 5, "ko": 5}))
    config2 = SamplerConfig(alpha_temp=1.0, beta={"en": 0.5, "ja": 0.5})
    with pytest.raises(ConfigError, match="missing from stats"):
        language_distribution(config2, make_stats({"en": 5}))


def test_beta_must_be_distribution():
    with pytest.raises(ConfigError):
        SamplerConfig(alpha_temp=0.5, beta={"en": 0.5, "ko": 0.6})
    with pytest.raises(ConfigError):
        SamplerConfig(alpha_temp=0.5, beta={"en": 1.5, "ko": -0.5})
    with pytest.raises(ConfigError):
        SamplerConfig(alpha_temp=1.5, beta={"en": 1.0})


def test_draw_language_degenerate():
    config = SamplerConfig(alpha_temp=1.0, beta={"en": 1.0}, seed=9)
    dist = {"en": 1.0, "ko": 0.0, "other": 0.0}
    assert all(draw_language(config, dist, i) == "en" for i in range(50))


def test_draw_language_deterministic_given_seed():
    config = SamplerConfig(alpha_temp=1.0, beta=UNIFORM_BETA, seed=123)
    dist = {"en": 0.85, "ko": 0.10, "other": 0.05}
    run1 = [draw_language(config, dist, i) for i in range(200)]
    run2 = [draw_language(config, dist, i) for i in range(200)]
    assert run1 == run2
    other_seed = SamplerConfig(alpha_temp=1.0, beta=UNIFORM_BETA, seed=124)
    assert [draw_language(other_seed, dist, i) for i in range(200)] != run1


def test_draw_language_empirical_frequencies():
    config = SamplerConfig(alpha_temp=1.0, beta=UNIFORM_BETA, seed=7)
    dist = {"en": 0.85, "ko": 0.10, "other": 0.05}
    n = 100_000
    draws = [draw_language(config, dist, i) for i in range(n)]
    for code, p in dist.items():
        freq = draws.count(code) / n
        assert abs(freq - p) <= 0.01


def test_constraint_flags_boundaries():
    all_on = SamplerConfig(alpha_temp=1.0, beta={"en": 1.0}, rho=1.0, seed=1)
    assert constraint_flags(all_on, 500).all()
    all_off = SamplerConfig(alpha_temp=1.0, beta={"en": 1.0}, rho=0.0, seed=1)
    assert not constraint_flags(all_off, 500).any()


def test_constraint_flags_fraction():
    config = SamplerConfig(alpha_temp=1.0, beta={"en": 1.0}, rho=0.5, seed=0)
    flags = constraint_flags(config, 10_000)
    assert 0.48 <= flags.mean() <= 0.52


def test_mixture_plan_from_ratios():
    plan = MixturePlan.from_ratios({"en": 8.5, "ko": 1.0, "other": 0.5})
    assert plan.shares["en"] == pytest.approx(0.85, abs=1e-15)
    assert sum(plan.shares.values()) == 1.0


def test_mixture_plan_upsample():
    plan = MixturePlan.from_ratios({"en": 8.5, "ko": 1.0, "other": 0.5})
    tripled = plan.upsample({"ko": 3.0, "other": 3.0})
    assert abs(sum(tripled.shares.values()) - 1.0) <= 1e-12
    assert tripled.shares["ko"] == pytest.approx(3.0 / (8.5 + 3.0 + 1.5), rel=1e-12)
    with pytest.raises(ConfigError):
        plan.upsample({"zz": 2.0})
