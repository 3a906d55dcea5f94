import math

import numpy as np
import pytest

from hetnetcache.config import SystemConfig
from hetnetcache.model import (
    Destination,
    InfeasibleCacheError,
    LinkState,
    ModelDomainError,
    Placement,
    Tier,
    cache_hit_ratio,
    gain_distribution,
    hit_ratio,
    los_nlos_crossover,
    los_probability,
    max_feasible_cache,
    nlos_probability,
    path_loss,
    spectrum_split,
    transmit_power_mbs,
    transmit_power_sbs,
    uniform_hit_ratio,
    zipf_popularity,
)


# -------------------------------------------------------------------
# Popularity and caching
# -------------------------------------------------------------------
@pytest.mark.parametrize("gamma_p", [0.8, 1.0, 1.4])
def test_hit_ratio_matches_direct_summation(cfg, gamma_p):
    cfg = cfg.with_overrides(gamma_p=gamma_p)
    terms = [f ** (-gamma_p) for f in range(1, cfg.F + 1)]
    total = math.fsum(terms)
    running = 0.0
    for C in range(cfg.F + 1):
        if C:
            running = math.fsum(terms[:C])
        assert hit_ratio(C, cfg) == pytest.approx(running / total, abs=1e-12)


def test_hit_ratio_endpoints(cfg):
    assert hit_ratio(0, cfg) == 0.0
    assert hit_ratio(cfg.F, cfg) == 1.0


def test_zero_skewness_is_uniform(cfg):
    flat = cfg.with_overrides(gamma_p=0.0)
    for C in (0, 1, 250, 999):
        assert hit_ratio(C, flat) == pytest.approx(C / flat.F, abs=1e-12)


def test_popularity_dominates_uniform(cfg):
    for C in range(0, cfg.F + 1, 50):
        assert cache_hit_ratio(C, cfg, Placement.POPULARITY) >= uniform_hit_ratio(C, cfg) - 1e-15


def test_zipf_popularity_sums_to_one(cfg):
    assert math.fsum(zipf_popularity(f, cfg) for f in range(1, cfg.F + 1)) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("f", [0, 1001, 2.5])
def test_zipf_popularity_domain(cfg, f):
    with pytest.raises(ModelDomainError):
        zipf_popularity(f, cfg)


def test_hit_ratio_domain(cfg):
    with pytest.raises(ModelDomainError):
        hit_ratio(cfg.F + 1, cfg)


@pytest.mark.parametrize("C", [1, 100, 500, 999])
def test_hit_ratio_grows_with_skewness(cfg, C):
    ratios = [hit_ratio(C, cfg.with_overrides(gamma_p=g)) for g in (0.0, 0.8, 1.0, 1.2, 1.4, 2.0)]
    assert all(b > a for a, b in zip(ratios, ratios[1:]))


# -------------------------------------------------------------------
# Power model
# -------------------------------------------------------------------
@pytest.mark.parametrize("C", [0, 1, 200, 800])
def test_sbs_power_budget_identity(cfg, C):
    p = transmit_power_sbs(C, cfg)
    assert cfg.rho_s * p + cfg.P_s_fc + cfg.omega_ca * cfg.s_bits * C == pytest.approx(cfg.P_s_max, rel=1e-12)


def test_sbs_power_decreases_with_cache(cfg):
    assert transmit_power_sbs(0, cfg) > transmit_power_sbs(200, cfg) > transmit_power_sbs(800, cfg) > 0


def test_mbs_power_stores_full_library(cfg):
    expected = (cfg.P_m_max - cfg.P_m_fc - cfg.omega_ca * cfg.s_bits * cfg.F) / cfg.rho_m
    assert transmit_power_mbs(cfg) == pytest.approx(expected)


def test_max_feasible_cache_at_defaults(cfg):
    assert max_feasible_cache(cfg) == cfg.C_max


def test_max_feasible_cache_excludes_zero_power():
    cfg = SystemConfig(P_s_max=2.0, P_s_fc=1.0, omega_ca=0.25, s_bits=1.0)
    assert max_feasible_cache(cfg) == 3
    assert transmit_power_sbs(3, cfg) == pytest.approx(0.25)
    with pytest.raises(InfeasibleCacheError):
        transmit_power_sbs(4, cfg)


def test_negative_cache_is_infeasible(cfg):
    with pytest.raises(InfeasibleCacheError):
        transmit_power_sbs(-1, cfg)


def test_cache_above_capacity_is_infeasible(cfg):
    # P_s^tr would still be positive at C_max + 1, the cap alone rules it out
    assert cfg.P_s_max - cfg.P_s_fc - cfg.omega_ca * cfg.s_bits * (cfg.C_max + 1) > 0
    with pytest.raises(InfeasibleCacheError):
        transmit_power_sbs(cfg.C_max + 1, cfg)
    with pytest.raises(InfeasibleCacheError):
        transmit_power_sbs(cfg.F, cfg)
    assert transmit_power_sbs(cfg.C_max, cfg) > 0


# -------------------------------------------------------------------
# Channel
# -------------------------------------------------------------------
def test_link_probabilities_sum_to_one(cfg):
    r = np.linspace(0.0, 3000.0, 301)
    np.testing.assert_allclose(los_probability(r, cfg) + nlos_probability(r, cfg), 1.0, rtol=0, atol=1e-15)
    assert los_probability(0.0, cfg) == 1.0
    assert nlos_probability(0.0, cfg) == 0.0


def test_negative_distance_rejected(cfg):
    with pytest.raises(ModelDomainError):
        los_probability(-1.0, cfg)


def test_path_loss(cfg):
    assert path_loss(10.0, LinkState.LOS, cfg) == pytest.approx(1e-12)
    assert path_loss(10.0, LinkState.NLOS, cfg) == pytest.approx(1e-18)
    with pytest.raises(ModelDomainError):
        path_loss(0.0, LinkState.LOS, cfg)


def test_los_nlos_crossover(cfg):
    r = los_nlos_crossover(cfg)
    assert r == pytest.approx(100.0)
    assert path_loss(r, LinkState.LOS, cfg) == pytest.approx(path_loss(r, LinkState.NLOS, cfg))


def test_gain_distribution(cfg):
    gains = gain_distribution(cfg)
    assert sum(gains.probabilities) == pytest.approx(1.0, abs=1e-12)
    assert gains.gains == pytest.approx((100.0, 1.0, 0.01))
    assert gains.probabilities[0] == pytest.approx(1 / 144)


@pytest.mark.parametrize("theta", [math.pi / 6, math.pi / 2, 1.9 * math.pi])
def test_expected_interfering_gain(cfg, theta):
    cfg = cfg.with_overrides(theta=theta)
    gains = gain_distribution(cfg)
    share = theta / (2 * math.pi)
    expected = (cfg.M_gain * share + cfg.m_gain * (1 - share)) ** 2
    mean = math.fsum(g * p for g, p in zip(gains.gains, gains.probabilities))
    assert mean == pytest.approx(expected, rel=1e-12)


def test_omnidirectional_beam_always_main_lobe(cfg):
    gains = gain_distribution(cfg.with_overrides(theta=2 * math.pi))
    assert gains.probabilities == pytest.approx((1.0, 0.0, 0.0))


def test_spectrum_split(cfg):
    assert spectrum_split(0.25, cfg) == pytest.approx((1e8, 3e8))
    with pytest.raises(ModelDomainError):
        spectrum_split(1.5, cfg)


def test_destination_tiers():
    assert Destination.BACKHAUL.serving_tier is Tier.MBS
    assert Destination.BACKHAUL.candidate_tiers == (Tier.MBS,)
    assert Destination.USER_TO_SBS.serving_tier is Tier.SBS
    assert Destination.USER_TO_MBS.candidate_tiers == (Tier.SBS, Tier.MBS)
