import csv
import math

import numpy as np
import pytest

from hetnetcache.analytic import (
    COVERAGE_MEMO,
    BindingSide,
    apt,
    association_density,
    association_probability,
    coverage_backhaul,
    coverage_mbs,
    coverage_noise_limited,
    coverage_sbs,
    coverage_snr_reference,
    dump_integrand,
    laplace_interference,
    nearest_distance_pdf,
    precompute_coverage,
    void_probability,
)
from hetnetcache.config import db_to_linear
from hetnetcache.model import (
    Destination,
    InfeasibleCacheError,
    LinkState,
    ModelDomainError,
    Tier,
    TxPowers,
    tx_powers,
)
from hetnetcache.quadrature import adaptive_gauss_kronrod


@pytest.fixture(autouse=True)
def fresh_memo():
    COVERAGE_MEMO.clear()
    yield
    COVERAGE_MEMO.clear()


# -------------------------------------------------------------------
# Distance distributions
# -------------------------------------------------------------------
def test_nearest_distance_pdf_normalizes(cfg):
    assert nearest_distance_pdf(0.0, Tier.SBS, LinkState.LOS, cfg) == 0.0

    def total(r):
        return (nearest_distance_pdf(r, Tier.SBS, LinkState.LOS, cfg)
                + nearest_distance_pdf(r, Tier.SBS, LinkState.NLOS, cfg))

    assert adaptive_gauss_kronrod(total, 0.0, 2000.0).value == pytest.approx(1.0, abs=1e-8)


def test_nearest_distance_pdf_peak_without_blockage(cfg):
    clear = cfg.with_overrides(beta=0.0)
    r = np.linspace(1.0, 200.0, 19901)
    pdf = nearest_distance_pdf(r, Tier.SBS, LinkState.LOS, clear)
    assert r[np.argmax(pdf)] == pytest.approx(1.0 / math.sqrt(2 * math.pi * clear.lambda_s), abs=0.01)
    assert np.all(nearest_distance_pdf(r, Tier.SBS, LinkState.NLOS, clear) == 0.0)


def test_void_probabilities_combine_to_full_process(cfg):
    x = np.array([1e-2, 0.4, 0.6, 10.0, 250.0, 900.0])
    combined = (void_probability(Tier.MBS, LinkState.LOS, x, cfg)
                * void_probability(Tier.MBS, LinkState.NLOS, x, cfg))
    np.testing.assert_allclose(combined, np.exp(-math.pi * cfg.lambda_m * x * x), rtol=1e-12)


def test_void_probability_is_continuous_at_series_switch(cfg):
    x0 = 1e-3 / cfg.beta
    for link in (LinkState.LOS, LinkState.NLOS):
        below = void_probability(Tier.SBS, link, x0 * (1 - 1e-9), cfg)
        above = void_probability(Tier.SBS, link, x0 * (1 + 1e-9), cfg)
        assert below == pytest.approx(above, rel=1e-12)


# -------------------------------------------------------------------
# Association
# -------------------------------------------------------------------
@pytest.mark.parametrize("C", [0, 400])
def test_user_association_sums_to_one(cfg, C):
    total = (association_probability(Destination.USER_TO_SBS, cfg, C).value
             + association_probability(Destination.USER_TO_MBS, cfg, C).value)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_backhaul_association_is_certain(cfg):
    assert association_probability(Destination.BACKHAUL, cfg).value == pytest.approx(1.0, abs=1e-6)


def test_less_sbs_power_shifts_users_to_mbs(cfg):
    assert (association_probability(Destination.USER_TO_SBS, cfg, 800).value
            < association_probability(Destination.USER_TO_SBS, cfg, 0).value)


def test_association_density_near_origin(cfg):
    r = 1e-3
    density = association_density(Destination.USER_TO_SBS, LinkState.LOS, r, cfg)
    assert density / (2 * math.pi * cfg.lambda_s * r) == pytest.approx(1.0, rel=1e-4)
    with pytest.raises(ModelDomainError):
        association_density(Destination.USER_TO_SBS, LinkState.LOS, 0.0, cfg)


def test_single_tier_equal_paths_noise_coverage_closed_form(cfg):
    flat = cfg.with_overrides(lambda_m=0.0, A_NL=cfg.A_L, alpha_NL=cfg.alpha_L)
    assert association_probability(Destination.USER_TO_SBS, flat).value == pytest.approx(1.0, abs=1e-6)

    gamma = db_to_linear(20.0)
    p_s = tx_powers(0, flat).sbs
    c = gamma * flat.N0 / (p_s * flat.B_s * flat.M_gain ** 2 * flat.A_L)
    expected = math.pi * flat.lambda_s / (math.pi * flat.lambda_s + c)
    assert coverage_sbs(gamma, 0, flat, interference=False).value == pytest.approx(expected, rel=1e-6)


# -------------------------------------------------------------------
# Interference
# -------------------------------------------------------------------
def test_laplace_vanishing_threshold(cfg):
    value = laplace_interference(Destination.USER_TO_SBS, LinkState.LOS, 50.0, 1e-9, cfg)
    assert value == pytest.approx(1.0, abs=1e-6)


def test_laplace_without_interferers(cfg):
    lonely = cfg.with_overrides(lambda_m=0.0)
    value = laplace_interference(Destination.USER_TO_SBS, LinkState.LOS, 50.0, 10.0, lonely,
                                 tiers=(Tier.MBS,))
    assert value == 1.0


def test_laplace_decreases_with_threshold(cfg):
    r = np.array([10.0, 80.0, 300.0])
    values = [laplace_interference(Destination.USER_TO_MBS, LinkState.LOS, r, db_to_linear(g), cfg)
              for g in (-10, 0, 10, 20)]
    for hi, lo in zip(values, values[1:]):
        assert np.all(lo <= hi)
        assert np.all((lo >= 0) & (hi <= 1))


def test_same_tier_interference_ignores_transmit_power(cfg):
    r = np.array([5.0, 60.0, 400.0])
    weak = laplace_interference(Destination.USER_TO_SBS, LinkState.NLOS, r, 10.0, cfg,
                                powers=TxPowers(sbs=1.0, mbs=600.0), tiers=(Tier.SBS,))
    strong = laplace_interference(Destination.USER_TO_SBS, LinkState.NLOS, r, 10.0, cfg,
                                  powers=TxPowers(sbs=6.5, mbs=600.0), tiers=(Tier.SBS,))
    assert np.array_equal(weak, strong)


def test_laplace_domain(cfg):
    with pytest.raises(ModelDomainError):
        laplace_interference(Destination.BACKHAUL, LinkState.LOS, 10.0, 0.0, cfg)


# -------------------------------------------------------------------
# Coverage
# -------------------------------------------------------------------
def test_coverage_vanishes_for_huge_threshold(cfg):
    gamma = db_to_linear(120.0)
    assert coverage_sbs(gamma, 0, cfg).value < 1e-6
    assert coverage_mbs(gamma, 0, cfg).value < 1e-6
    assert coverage_backhaul(gamma, cfg).value < 1e-6


def test_coverage_tends_to_association(cfg):
    gamma = db_to_linear(-60.0)
    for dest, cov in ((Destination.USER_TO_SBS, coverage_sbs(gamma, 0, cfg)),
                      (Destination.USER_TO_MBS, coverage_mbs(gamma, 0, cfg))):
        assert cov.value == pytest.approx(association_probability(dest, cfg).value, abs=1e-3)


def test_coverage_decreases_with_threshold(cfg):
    for fn in (lambda g: coverage_sbs(g, 200, cfg), lambda g: coverage_mbs(g, 200, cfg),
               lambda g: coverage_backhaul(g, cfg)):
        values = [fn(db_to_linear(g)).value for g in (0, 5, 10, 15)]
        assert all(a > b for a, b in zip(values, values[1:]))
        assert all(0 <= v <= 1 for v in values)


def test_coverage_moves_with_cache_size(cfg):
    sizes = (0, 200, 400, 800)
    sbs = [coverage_sbs(cfg.gamma0, C, cfg).value for C in sizes]
    mbs = [coverage_mbs(cfg.gamma0, C, cfg).value for C in sizes]
    assert all(a > b for a, b in zip(sbs, sbs[1:]))
    assert all(a < b for a, b in zip(mbs, mbs[1:]))


def test_backhaul_coverage_ignores_cache_size(cfg):
    assert coverage_backhaul(cfg.gamma0, cfg, C=0).value == coverage_backhaul(cfg.gamma0, cfg, C=800).value


def test_interference_only_lowers_coverage(cfg):
    gamma = db_to_linear(5.0)
    assert coverage_mbs(gamma, 0, cfg).value <= coverage_mbs(gamma, 0, cfg, interference=False).value


@pytest.mark.parametrize("tier", [Tier.SBS, Tier.MBS])
@pytest.mark.parametrize("gamma_db", [30.0, 50.0, 70.0])
def test_noise_limited_closed_form_matches_distance_integral(cfg, tier, gamma_db):
    gamma = db_to_linear(gamma_db)
    closed = coverage_noise_limited(tier, gamma, 200, cfg)
    reference = coverage_snr_reference(tier, gamma, 200, cfg)
    assert closed == pytest.approx(reference, abs=1e-6)
    assert 0.0 <= closed <= 1.0


def test_noise_limited_without_base_stations(cfg):
    assert coverage_noise_limited(Tier.SBS, 10.0, 0, cfg.with_overrides(lambda_s=0.0)) == 0.0


# -------------------------------------------------------------------
# Throughput
# -------------------------------------------------------------------
def test_apt_with_no_access_share_is_zero(cfg):
    assert apt(0.0, 200, cfg).total == 0.0


def test_apt_with_no_backhaul_share_and_no_cache(cfg):
    result = apt(1.0, 0, cfg)
    assert result.backhaul_uncached == 0.0
    assert result.cached_sbs == 0.0
    assert result.total == result.mbs_term
    assert result.binding_side is BindingSide.BACKHAUL


def test_apt_terms_add_up(cfg):
    result = apt(0.7, 300, cfg)
    expected = min(result.access_sbs_uncached, result.backhaul_uncached) + result.cached_sbs + result.mbs_term
    assert result.total == pytest.approx(expected, rel=1e-15)
    assert result.cov_sbs == coverage_sbs(cfg.gamma0, 300, cfg).value


def test_binding_side_switches_at_most_once(cfg):
    sides = [apt(eta, 200, cfg).binding_side for eta in np.linspace(0.0, 1.0, 21)]
    switches = sum(a is not b for a, b in zip(sides, sides[1:]))
    assert sides[0] is BindingSide.ACCESS
    assert switches <= 1


def test_apt_never_drops_with_free_cache(cfg):
    free = cfg.with_overrides(omega_ca=0.0)
    totals = [apt(0.9, C, free).total for C in range(0, 801, 100)]
    assert all(b >= a * (1 - 1e-12) for a, b in zip(totals, totals[1:]))


def test_apt_rejects_bad_eta(cfg):
    with pytest.raises(ModelDomainError):
        apt(1.2, 0, cfg)


def test_apt_rejects_cache_above_capacity(cfg):
    with pytest.raises(InfeasibleCacheError):
        apt(0.9, cfg.C_max + 1, cfg)


def test_apt_rises_then_falls_in_eta(cfg):
    etas = np.linspace(0.0, 1.0, 101)
    totals = np.array([apt(float(eta), 0, cfg).total for eta in etas])
    peak = int(np.argmax(totals))
    assert 0 < peak < len(etas) - 1
    assert np.all(np.diff(totals[:peak + 1]) > 0)
    assert np.all(np.diff(totals[peak:]) < 0)


def test_cache_power_steepens_apt_decline(cfg):
    costly = cfg.with_overrides(omega_ca=1.5 * cfg.omega_ca)
    drops = [apt(0.9, 200, c).total - apt(0.9, 800, c).total for c in (cfg, costly)]
    assert 0 < drops[0] < drops[1]


# -------------------------------------------------------------------
# Memo and diagnostics
# -------------------------------------------------------------------
def test_coverage_memo_reuses_results(cfg):
    first = coverage_sbs(cfg.gamma0, 100, cfg)
    assert len(COVERAGE_MEMO) == 1
    assert coverage_sbs(cfg.gamma0, 100, cfg) is first
    assert len(COVERAGE_MEMO) == 1


def test_precompute_fills_memo(cfg):
    assert precompute_coverage(cfg, cfg.gamma0, [0, 100, 200]) == 3
    assert len(COVERAGE_MEMO) == 7


def test_dump_integrand(cfg, tmp_path):
    path = dump_integrand(Destination.USER_TO_SBS, cfg.gamma0, 0, cfg, tmp_path / "integrand.csv", n_points=50)
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 100
    assert {row["link"] for row in rows} == {"los", "nlos"}
    assert all(float(row["integrand"]) >= 0 for row in rows)
