"""
Stochastic-geometry evaluation of the two-tier network.

Association is by biased mean received power over LOS-thinned and
NLOS-thinned Poisson processes, so every association density is an intensity
times a product of void probabilities, and the interferers of each
(tier, link) class are the points beyond the same exclusion radius. Coverage
integrals run over t = ln r with the adaptive Gauss-Kronrod rule; the inner
interference integrals run over s = ln(u / x) on fixed composite
Gauss-Legendre panels so one outer round is a handful of array operations.
"""
import csv
import math
import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import gamma as gamma_function
from scipy.special import log_expit

from hetnetcache.config import SystemConfig
from hetnetcache.model import (
    ArrayLike,
    Destination,
    LinkState,
    ModelDomainError,
    Placement,
    Tier,
    TxPowers,
    biased_power,
    cache_hit_ratio,
    gain_distribution,
    link_probability,
    path_loss_params,
    serving_gain,
    tier_bias,
    tier_density,
    tx_powers,
)
from hetnetcache.quadrature import QuadratureError, QuadratureResult, adaptive_gauss_kronrod, panel_rule
from hetnetcache.utils import format_value, get_logger

TWO_PI = 2.0 * math.pi
LINKS = (LinkState.LOS, LinkState.NLOS)
# in-band extra e-folds past the tail cutoff before the blockage factor is treated as zero
_BLOCKAGE_MARGIN = 8.0
_MAX_LOG_SPAN = 60.0
_LOWER_LIMIT_FACTOR = 1e-9


class BindingSide(Enum):
    ACCESS = "access"
    BACKHAUL = "backhaul"


@dataclass(frozen=True)
class CoverageResult:
    value: float
    est_abs_error: float
    evaluations: int

    def __add__(self, other: "CoverageResult") -> "CoverageResult":
        return CoverageResult(
            self.value + other.value,
            self.est_abs_error + other.est_abs_error,
            self.evaluations + other.evaluations,
        )


@dataclass(frozen=True)
class AptBreakdown:
    """Per-term decomposition of the average potential throughput (bits/s/m^2)."""
    access_sbs_uncached: float
    backhaul_uncached: float
    cached_sbs: float
    mbs_term: float
    total: float
    binding_side: BindingSide
    eta: float
    C: int
    hit_ratio: float
    cov_sbs: float
    cov_mbs: float
    cov_bh: float


# -------------------------------------------------------------------
# Void probabilities of the thinned processes
# -------------------------------------------------------------------
def _los_mass(x: np.ndarray, beta: float) -> np.ndarray:
    """Integral of e^{-beta u} u over [0, x]."""
    x = np.asarray(x, dtype=float)
    if beta == 0:
        return 0.5 * x * x
    y = beta * x
    small = y < 1e-3
    ys = np.where(small, y, 0.0)
    series = ys * ys * (0.5 - ys / 3.0 + ys * ys / 8.0 - ys ** 3 / 30.0 + ys ** 4 / 144.0)
    yl = np.where(small, 1.0, y)
    exact = -np.expm1(-yl) - yl * np.exp(-yl)
    return np.where(small, series, exact) / (beta * beta)


def _nlos_mass(x: np.ndarray, beta: float) -> np.ndarray:
    """Integral of (1 - e^{-beta u}) u over [0, x]."""
    x = np.asarray(x, dtype=float)
    if beta == 0:
        return np.zeros_like(x)
    y = beta * x
    small = y < 1e-3
    ys = np.where(small, y, 0.0)
    series = ys ** 3 * (1.0 / 3.0 - ys / 8.0 + ys * ys / 30.0 - ys ** 3 / 144.0) / (beta * beta)
    return np.where(small, series, 0.5 * x * x - _los_mass(x, beta))


def _link_mass(x: np.ndarray, link: LinkState, beta: float) -> np.ndarray:
    return _los_mass(x, beta) if link is LinkState.LOS else _nlos_mass(x, beta)


def void_probability(tier: Tier, link: LinkState, x: ArrayLike, cfg: SystemConfig) -> ArrayLike:
    """Probability that no `link`-type BS of `tier` lies within distance x of the probe."""
    value = np.exp(-TWO_PI * tier_density(tier, cfg) * _link_mass(np.asarray(x, dtype=float), link, cfg.beta))
    return float(value) if value.ndim == 0 else value


def _log_link_probability(r: np.ndarray, link: LinkState, beta: float) -> np.ndarray:
    if link is LinkState.LOS:
        return -beta * r
    if beta == 0:
        return np.full_like(r, -np.inf)
    with np.errstate(divide="ignore"):
        return np.log(-np.expm1(-beta * r))


def _log_exclusion_radius(log_r: np.ndarray, log_ratio: float, serving: LinkState,
                          competitor: LinkState, cfg: SystemConfig) -> np.ndarray:
    """
    ln x where a competitor with biased power ratio exp(log_ratio) to the
    serving BS has equal mean received power at distance x.
    """
    A_serv, a_serv = path_loss_params(serving, cfg)
    A_comp, a_comp = path_loss_params(competitor, cfg)
    return (log_ratio + math.log(A_comp) - math.log(A_serv) + a_serv * log_r) / a_comp


def _log_ratio(tier: Tier, serving_tier: Tier, powers: TxPowers, cfg: SystemConfig) -> float:
    # same tier: the ratio is exactly one, so transmit power never enters
    if tier is serving_tier:
        return 0.0
    return math.log(biased_power(tier, powers, cfg)) - math.log(biased_power(serving_tier, powers, cfg))


def _competitor_radii(dest: Destination, link: LinkState, log_r: np.ndarray, cfg: SystemConfig,
                      powers: TxPowers) -> Iterable[Tuple[Tier, LinkState, np.ndarray]]:
    """(tier, link, ln x) for every class of candidate BS other than the serving class."""
    t = dest.serving_tier
    for tier in dest.candidate_tiers:
        log_ratio = _log_ratio(tier, t, powers, cfg)
        for other in LINKS:
            if tier is t and other is link:
                yield tier, other, log_r
            else:
                yield tier, other, _log_exclusion_radius(log_r, log_ratio, link, other, cfg)


def _log_association_density(dest: Destination, link: LinkState, log_r: np.ndarray, cfg: SystemConfig,
                             powers: TxPowers) -> np.ndarray:
    t = dest.serving_tier
    lam_t = tier_density(t, cfg)
    if lam_t == 0:
        return np.full_like(log_r, -np.inf)
    r = np.exp(log_r)
    log_density = math.log(TWO_PI * lam_t) + log_r + _log_link_probability(r, link, cfg.beta)
    for tier, other, log_x in _competitor_radii(dest, link, log_r, cfg, powers):
        lam = tier_density(tier, cfg)
        if lam == 0:
            continue
        log_density = log_density - TWO_PI * lam * _link_mass(np.exp(log_x), other, cfg.beta)
    return log_density


def _resolve_powers(C: int, cfg: SystemConfig, powers: Optional[TxPowers]) -> TxPowers:
    return powers if powers is not None else tx_powers(C, cfg)


# -------------------------------------------------------------------
# Densities
# -------------------------------------------------------------------
def nearest_distance_pdf(r: ArrayLike, tier: Tier, link: LinkState, cfg: SystemConfig) -> ArrayLike:
    """
    Density of the nearest BS of `tier` lying at r and reached over a `link` path:
    P_k(r) * exp(-pi*lambda*r^2) * 2*pi*lambda*r.
    """
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise ModelDomainError("distance must be >= 0")
    lam = tier_density(tier, cfg)
    value = link_probability(r_arr, link, cfg) * np.exp(-math.pi * lam * r_arr * r_arr) * TWO_PI * lam * r_arr
    value = np.asarray(value, dtype=float)
    return float(value) if value.ndim == 0 else value


def association_density(dest: Destination, link: LinkState, r: ArrayLike, cfg: SystemConfig,
                        C: int = 0, *, powers: Optional[TxPowers] = None) -> ArrayLike:
    """
    Density of the serving BS for `dest` being at distance r over a `link` path.

    Parameters:
    - dest (Destination): user to SBS, user to MBS, or SBS to MBS backhaul.
    - link (LinkState): state of the serving link.
    - r (float or ndarray): distance, r > 0.
    - cfg (SystemConfig): network configuration.
    - C (int): SBS cache size, fixes the SBS transmit power.
    - powers (TxPowers): explicit transmit powers, overriding C.

    Returns:
    - float or ndarray: density in 1/m.
    """
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr <= 0):
        raise ModelDomainError("association density is defined for r > 0 only")
    value = np.exp(_log_association_density(dest, link, np.log(r_arr), cfg, _resolve_powers(C, cfg, powers)))
    return float(value) if value.ndim == 0 else value


# -------------------------------------------------------------------
# Interference
# -------------------------------------------------------------------
def _inner_upper_limit(log_x: np.ndarray, kappa_max: float, competitor: LinkState, cfg: SystemConfig
                       ) -> np.ndarray:
    """
    Upper limit of s = ln(u/x) beyond which the interference integrand stays
    below tail_cutoff times its peak: algebraic decay past the transition
    point, blockage decay for LOS interferers, capped at a span of 60.
    """
    _, alpha = path_loss_params(competitor, cfg)
    tail = math.log(1.0 / cfg.numeric.tail_cutoff)
    transition = max(0.0, kappa_max / alpha)
    power_span = tail / (alpha - 2.0) if alpha > 2.0 else math.inf
    s_hi = np.full_like(log_x, transition + power_span)
    if competitor is LinkState.LOS and cfg.beta > 0:
        s_block = math.log(tail + _BLOCKAGE_MARGIN) - math.log(cfg.beta) - log_x
        s_hi = np.minimum(s_hi, np.maximum(s_block, transition) + 1.0)
    return np.clip(s_hi, transition + 1.0, _MAX_LOG_SPAN)


def _log_laplace(dest: Destination, link: LinkState, log_r: np.ndarray, gamma: float, cfg: SystemConfig,
                 powers: TxPowers, tiers: Optional[Sequence[Tier]] = None) -> np.ndarray:
    """
    ln of the Laplace transform of the interference at threshold gamma.

    Each interferer class (tier, link) is a Poisson process beyond its exclusion
    radius x, thinned by gain class; class i contributes
    -2*pi*lambda*p_i * x^2 * integral_0^inf P(x e^s) e^{2s} expit(kappa_i - alpha s) ds
    with kappa_i = ln(gamma * G_i / M^2).
    """
    gains = gain_distribution(cfg)
    log_serving_gain = math.log(serving_gain(cfg))
    kappas = [math.log(gamma) + math.log(g) - log_serving_gain for g in gains.gains]
    nodes, weights = panel_rule(cfg.numeric.inner_order, cfg.numeric.inner_panels)
    wanted = dest.candidate_tiers if tiers is None else tuple(t for t in dest.candidate_tiers if t in tiers)

    total = np.zeros_like(log_r)
    for tier, other, log_x in _competitor_radii(dest, link, log_r, cfg, powers):
        lam = tier_density(tier, cfg)
        if tier not in wanted or lam == 0:
            continue
        if other is LinkState.NLOS and cfg.beta == 0:
            continue
        _, alpha = path_loss_params(other, cfg)
        s_hi = _inner_upper_limit(log_x, max(kappas), other, cfg)
        s = s_hi[:, None] * nodes[None, :]
        ds = s_hi[:, None] * weights[None, :]
        u = np.exp(log_x[:, None] + s)
        base = _log_link_probability(u, other, cfg.beta) + 2.0 * s
        exponent = np.zeros_like(log_r)
        for kappa, p in zip(kappas, gains.probabilities):
            if p == 0:
                continue
            integrand = np.exp(base + log_expit(kappa - alpha * s))
            exponent += p * np.sum(integrand * ds, axis=1)
        total -= TWO_PI * lam * np.exp(2.0 * log_x) * exponent
    return total


def laplace_interference(dest: Destination, link: LinkState, r: ArrayLike, gamma: float, cfg: SystemConfig,
                         C: int = 0, *, powers: Optional[TxPowers] = None,
                         tiers: Optional[Sequence[Tier]] = None) -> ArrayLike:
    """
    Laplace transform of the aggregate interference (scaled by gamma over the
    desired mean power) for a serving link of type `link` at distance r.
    `tiers` restricts the product to the given interfering tiers.
    """
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r_arr <= 0):
        raise ModelDomainError("Laplace transform is defined for r > 0 only")
    if gamma <= 0:
        raise ModelDomainError("gamma must be > 0")
    value = np.exp(_log_laplace(dest, link, np.log(r_arr), gamma, cfg, _resolve_powers(C, cfg, powers), tiers))
    return float(value[0]) if np.ndim(r) == 0 else value


# -------------------------------------------------------------------
# Outer integrals
# -------------------------------------------------------------------
def _outer_limits(tier: Tier, link: LinkState, cfg: SystemConfig) -> Tuple[float, float]:
    """
    [r_lo, r_hi] for the outer integral of a serving class. r_hi starts at the
    radius where exp(-pi*lambda*r^2) reaches void_cutoff and doubles while the
    class's own void envelope is still above it.
    """
    lam = tier_density(tier, cfg)
    cutoff = cfg.numeric.void_cutoff
    r_up = math.sqrt(math.log(1.0 / cutoff) / (math.pi * lam))
    r_lo = r_up * _LOWER_LIMIT_FACTOR
    r_hi = r_up
    for _ in range(40):
        envelope = TWO_PI * lam * r_hi * r_hi * float(
            link_probability(r_hi, link, cfg) * np.exp(-TWO_PI * lam * _link_mass(r_hi, link, cfg.beta))
        )
        if envelope <= cutoff:
            break
        r_hi *= 2.0
    return r_lo, r_hi


def _noise_log_factor(dest: Destination, link: LinkState, log_r: np.ndarray, gamma: float, cfg: SystemConfig,
                      powers: TxPowers) -> np.ndarray:
    """-gamma * N0 / (desired mean power at r)."""
    t = dest.serving_tier
    A, alpha = path_loss_params(link, cfg)
    log_desired_inv = (math.log(cfg.N0) - math.log(biased_power(t, powers, cfg)) - math.log(serving_gain(cfg))
                       - math.log(A) + alpha * log_r)
    return -np.exp(math.log(gamma) + log_desired_inv)


def _integrate_link(dest: Destination, link: LinkState, cfg: SystemConfig, powers: TxPowers,
                    gamma: Optional[float], interference: bool) -> QuadratureResult:
    if tier_density(dest.serving_tier, cfg) == 0:
        return QuadratureResult(0.0, 0.0, 0, 0)
    if link is LinkState.NLOS and cfg.beta == 0:
        return QuadratureResult(0.0, 0.0, 0, 0)

    def integrand(t: np.ndarray) -> np.ndarray:
        log_value = _log_association_density(dest, link, t, cfg, powers) + t
        if gamma is not None:
            log_value = log_value + _noise_log_factor(dest, link, t, gamma, cfg, powers)
            if interference:
                log_value = log_value + _log_laplace(dest, link, t, gamma, cfg, powers)
        return np.exp(log_value)

    r_lo, r_hi = _outer_limits(dest.serving_tier, link, cfg)
    n = cfg.numeric
    try:
        return adaptive_gauss_kronrod(integrand, math.log(r_lo), math.log(r_hi), rtol=n.quad_rtol,
                                      atol=n.quad_atol, max_intervals=n.quad_max_intervals)
    except QuadratureError as e:
        get_logger(__name__).error("%s %s integral failed (gamma=%s): %s", dest.value, link.value, gamma, e)
        raise


def association_probability(dest: Destination, cfg: SystemConfig, C: int = 0, *,
                            powers: Optional[TxPowers] = None) -> CoverageResult:
    """Probability that the probe of `dest` is served by that destination's tier (the gamma -> 0 limit)."""
    powers = _resolve_powers(C, cfg, powers)
    result = CoverageResult(0.0, 0.0, 0)
    for link in LINKS:
        q = _integrate_link(dest, link, cfg, powers, None, False)
        result = result + CoverageResult(q.value, q.abs_error, q.evaluations)
    return result


# -------------------------------------------------------------------
# Coverage memo
# -------------------------------------------------------------------
class CoverageMemo:
    """
    Thread-safe memo of coverage results. Concurrent misses may compute the
    same key twice; the first stored value wins.
    """

    def __init__(self):
        self._values: Dict[tuple, CoverageResult] = {}
        self._lock = threading.Lock()

    def get_or_compute(self, key: tuple, compute: Callable[[], CoverageResult]) -> CoverageResult:
        with self._lock:
            hit = self._values.get(key)
        if hit is not None:
            return hit
        result = compute()
        with self._lock:
            return self._values.setdefault(key, result)

    def clear(self):
        with self._lock:
            self._values.clear()

    def __len__(self) -> int:
        with self._lock:
            return len(self._values)


COVERAGE_MEMO = CoverageMemo()


def _coverage(dest: Destination, gamma: float, cfg: SystemConfig, powers: TxPowers, interference: bool
              ) -> CoverageResult:
    if gamma <= 0:
        raise ModelDomainError("gamma must be > 0")
    sbs_power = None if dest is Destination.BACKHAUL else powers.sbs
    key = (cfg.physical_key(), dest.value, float(gamma), sbs_power, powers.mbs, interference)

    def compute() -> CoverageResult:
        result = CoverageResult(0.0, 0.0, 0)
        for link in LINKS:
            q = _integrate_link(dest, link, cfg, powers, gamma, interference)
            result = result + CoverageResult(q.value, q.abs_error, q.evaluations)
        get_logger(__name__).debug(
            "coverage %s gamma=%.6g P_s=%.6g -> %.12g (+/- %.2g, %d evaluations)",
            dest.value, gamma, powers.sbs, result.value, result.est_abs_error, result.evaluations,
        )
        return result

    return COVERAGE_MEMO.get_or_compute(key, compute)


def coverage_sbs(gamma: float, C: int, cfg: SystemConfig, *, interference: bool = True,
                 powers: Optional[TxPowers] = None) -> CoverageResult:
    """Joint probability that a typical user is served by an SBS and its SINR exceeds gamma."""
    return _coverage(Destination.USER_TO_SBS, gamma, cfg, _resolve_powers(C, cfg, powers), interference)


def coverage_mbs(gamma: float, C: int, cfg: SystemConfig, *, interference: bool = True,
                 powers: Optional[TxPowers] = None) -> CoverageResult:
    """Joint probability that a typical user is served by an MBS and its SINR exceeds gamma."""
    return _coverage(Destination.USER_TO_MBS, gamma, cfg, _resolve_powers(C, cfg, powers), interference)


def coverage_backhaul(gamma: float, cfg: SystemConfig, *, C: int = 0, interference: bool = True,
                      powers: Optional[TxPowers] = None) -> CoverageResult:
    """Probability that a typical SBS's backhaul SINR from its MBS exceeds gamma."""
    return _coverage(Destination.BACKHAUL, gamma, cfg, _resolve_powers(C, cfg, powers), interference)


def coverage(dest: Destination, gamma: float, C: int, cfg: SystemConfig, *, interference: bool = True
             ) -> CoverageResult:
    if dest is Destination.USER_TO_SBS:
        return coverage_sbs(gamma, C, cfg, interference=interference)
    if dest is Destination.USER_TO_MBS:
        return coverage_mbs(gamma, C, cfg, interference=interference)
    return coverage_backhaul(gamma, cfg, C=C, interference=interference)


def precompute_coverage(cfg: SystemConfig, gamma: float, c_values: Iterable[int]) -> int:
    """Fill the memo for every C in c_values at threshold gamma; returns the number of cache sizes visited."""
    count = 0
    coverage_backhaul(gamma, cfg)
    for C in c_values:
        coverage_sbs(gamma, C, cfg)
        coverage_mbs(gamma, C, cfg)
        count += 1
    return count


# -------------------------------------------------------------------
# Noise-limited coverage
# -------------------------------------------------------------------
def _snr_scale(tier: Tier, gamma: float, C: int, cfg: SystemConfig) -> float:
    """xi_0 = P B M^2 / (N0 gamma)."""
    powers = tx_powers(C, cfg)
    return powers.of(tier) * tier_bias(tier, cfg) * serving_gain(cfg) / (cfg.N0 * gamma)


def _displacement_term(link: LinkState, xi0: float, cfg: SystemConfig) -> float:
    """
    ((A xi0)^{2/alpha} / 2) * integral_0^1 g(xi0 w^{alpha/2}) dw with
    g(xi) = integral_0^inf v^{2/alpha} exp(-v - beta (A xi v)^{1/alpha}) dv.

    Evaluated with w = z^2 and v = y^alpha, which make both integrands smooth.
    """
    A, alpha = path_loss_params(link, cfg)
    y_max = (math.log(1.0 / cfg.numeric.tail_cutoff) + 8.0) ** (1.0 / alpha)
    nodes, weights = panel_rule(16, 8)
    y = y_max * nodes
    wy = y_max * weights
    log_kernel = math.log(alpha) + (alpha + 1.0) * np.log(y) - y ** alpha

    def outer(z: np.ndarray) -> np.ndarray:
        xi = xi0 * z ** alpha
        b = cfg.beta * (A * xi) ** (1.0 / alpha)
        g = np.exp(log_kernel[None, :] - b[:, None] * y[None, :]) @ wy
        return 2.0 * z * g

    n = cfg.numeric
    q = adaptive_gauss_kronrod(outer, 0.0, 1.0, rtol=n.quad_rtol, atol=n.quad_atol,
                               max_intervals=n.quad_max_intervals)
    return 0.5 * (A * xi0) ** (2.0 / alpha) * q.value


def coverage_noise_limited(tier: Tier, gamma: float, C: int, cfg: SystemConfig) -> float:
    """
    Closed-form coverage of the best-SNR BS of `tier` when interference is ignored:
    1 - exp(-pi*lambda*(A_NL xi0)^{2/a_NL} Gamma(2/a_NL + 1) - 2*pi*lambda*(Y_L - Y_NL)).
    """
    if gamma <= 0:
        raise ModelDomainError("gamma must be > 0")
    lam = tier_density(tier, cfg)
    if lam == 0:
        return 0.0
    xi0 = _snr_scale(tier, gamma, C, cfg)
    nlos_full = math.pi * lam * (cfg.A_NL * xi0) ** (2.0 / cfg.alpha_NL) * gamma_function(2.0 / cfg.alpha_NL + 1.0)
    y_los = _displacement_term(LinkState.LOS, xi0, cfg)
    y_nlos = _displacement_term(LinkState.NLOS, xi0, cfg)
    exponent = nlos_full + TWO_PI * lam * (y_los - y_nlos)
    return float(-math.expm1(-exponent))


def coverage_snr_reference(tier: Tier, gamma: float, C: int, cfg: SystemConfig) -> float:
    """
    Noise-limited coverage as a single distance-domain integral,
    1 - exp(-2*pi*lambda * integral u * sum_k P_k(u) exp(-u^{a_k} / (A_k xi0)) du).
    """
    if gamma <= 0:
        raise ModelDomainError("gamma must be > 0")
    lam = tier_density(tier, cfg)
    if lam == 0:
        return 0.0
    xi0 = _snr_scale(tier, gamma, C, cfg)
    tail = math.log(1.0 / cfg.numeric.tail_cutoff) + 8.0
    u_hi = max((path_loss_params(link, cfg)[0] * xi0 * tail) ** (1.0 / path_loss_params(link, cfg)[1])
               for link in LINKS)
    u_lo = u_hi * _LOWER_LIMIT_FACTOR

    def integrand(t: np.ndarray) -> np.ndarray:
        u = np.exp(t)
        total = np.zeros_like(u)
        for link in LINKS:
            A, alpha = path_loss_params(link, cfg)
            total += link_probability(u, link, cfg) * np.exp(-u ** alpha / (A * xi0))
        return u * u * total

    n = cfg.numeric
    q = adaptive_gauss_kronrod(integrand, math.log(u_lo), math.log(u_hi), rtol=n.quad_rtol, atol=n.quad_atol,
                               max_intervals=n.quad_max_intervals)
    return float(-math.expm1(-TWO_PI * lam * q.value))


# -------------------------------------------------------------------
# Throughput
# -------------------------------------------------------------------
def rate_per_hz(gamma0: float) -> float:
    return math.log2(1.0 + gamma0)


def apt(eta: float, C: int, cfg: SystemConfig, *, placement: Placement = Placement.POPULARITY,
        gamma0: Optional[float] = None) -> AptBreakdown:
    """
    Average potential throughput of both tiers at spectrum partition eta and SBS cache size C.

    Parameters:
    - eta (float): fraction of the bandwidth given to access links.
    - C (int): SBS cache size in file units.
    - cfg (SystemConfig): configuration (gamma0 is the threshold unless overridden).
    - placement (Placement): popularity-ordered (Zipf hit ratio) or uniform caching.
    - gamma0 (float): linear threshold override.

    Returns:
    - AptBreakdown: the four terms, their total and the binding side of the SBS min.
    """
    if not 0.0 <= eta <= 1.0:
        raise ModelDomainError(f"eta {eta!r} outside [0, 1]")
    threshold = cfg.gamma0 if gamma0 is None else gamma0
    spectral = cfg.W * rate_per_hz(threshold)
    p_h = cache_hit_ratio(C, cfg, placement)

    cov_s = coverage_sbs(threshold, C, cfg).value
    cov_m = coverage_mbs(threshold, C, cfg).value
    cov_bh = coverage_backhaul(threshold, cfg, C=C).value

    access = (1.0 - p_h) * cfg.lambda_s * eta * spectral * cov_s
    backhaul = (1.0 - p_h) * cfg.lambda_m * (1.0 - eta) * spectral * cov_bh
    cached = p_h * cfg.lambda_s * eta * spectral * cov_s
    mbs = cfg.lambda_m * eta * spectral * cov_m
    binding = BindingSide.ACCESS if access <= backhaul else BindingSide.BACKHAUL
    return AptBreakdown(
        access_sbs_uncached=access,
        backhaul_uncached=backhaul,
        cached_sbs=cached,
        mbs_term=mbs,
        total=min(access, backhaul) + cached + mbs,
        binding_side=binding,
        eta=eta,
        C=int(C),
        hit_ratio=p_h,
        cov_sbs=cov_s,
        cov_mbs=cov_m,
        cov_bh=cov_bh,
    )


# -------------------------------------------------------------------
# Diagnostics
# -------------------------------------------------------------------
def dump_integrand(dest: Destination, gamma: float, C: int, cfg: SystemConfig, path: Union[str, Path],
                   n_points: int = 400) -> Path:
    """Write samples of the coverage integrand (per unit r) on a geometric grid to CSV."""
    path = Path(path)
    powers = tx_powers(C, cfg)
    rows = []
    for link in LINKS:
        r_lo, r_hi = _outer_limits(dest.serving_tier, link, cfg)
        log_r = np.linspace(math.log(r_lo), math.log(r_hi), n_points)
        log_value = (_log_association_density(dest, link, log_r, cfg, powers)
                     + _noise_log_factor(dest, link, log_r, gamma, cfg, powers)
                     + _log_laplace(dest, link, log_r, gamma, cfg, powers))
        for r, value in zip(np.exp(log_r), np.exp(log_value)):
            rows.append({"r": float(r), "link": link.value, "integrand": float(value)})

    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=["r", "link", "integrand"])
        writer.writeheader()
        writer.writerows({k: format_value(v) for k, v in row.items()} for row in rows)
    return path


if __name__ == "__main__":
    cfg = SystemConfig()
    for db in (0, 5, 10, 15):
        g = 10 ** (db / 10)
        print(db, "dB:",
              coverage_sbs(g, 0, cfg).value, coverage_mbs(g, 0, cfg).value, coverage_backhaul(g, cfg).value)
    print(apt(0.9, 200, cfg))
