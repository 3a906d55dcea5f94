import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Tuple, Union

import numpy as np

from hetnetcache.config import SystemConfig

ArrayLike = Union[float, np.ndarray]


class ModelDomainError(ValueError):
    """Argument outside the domain of a sub-model (file index, distance, cache size)."""


class InfeasibleCacheError(ValueError):
    """Cache size for which the SBS would be left with no transmit power."""


# -------------------------------------------------------------------
# Enumerations
# -------------------------------------------------------------------
class Tier(Enum):
    MBS = "mbs"
    SBS = "sbs"


class LinkState(Enum):
    LOS = "los"
    NLOS = "nlos"


class Destination(Enum):
    """Which link is being served: a typical user by either tier, or a typical SBS by its backhaul MBS."""
    USER_TO_SBS = "user_to_sbs"
    USER_TO_MBS = "user_to_mbs"
    BACKHAUL = "backhaul"

    @property
    def serving_tier(self) -> "Tier":
        return Tier.SBS if self is Destination.USER_TO_SBS else Tier.MBS

    @property
    def candidate_tiers(self) -> Tuple["Tier", ...]:
        # also the interfering tiers: the backhaul band carries MBS transmissions only
        if self is Destination.BACKHAUL:
            return (Tier.MBS,)
        return (Tier.SBS, Tier.MBS)


class Placement(Enum):
    """Cache placement policy: most-popular-first (Zipf hit ratio) or uniform (C/F)."""
    POPULARITY = "popularity"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class GainDistribution:
    """Sectored-antenna gain seen on an interfering link: values and probabilities for MM, Mm, mm."""
    gains: Tuple[float, float, float]
    probabilities: Tuple[float, float, float]
    labels: Tuple[str, str, str] = ("MM", "Mm", "mm")

    def __post_init__(self):
        if abs(sum(self.probabilities) - 1.0) > 1e-12:
            raise ModelDomainError(f"gain probabilities sum to {sum(self.probabilities)!r}, expected 1")
        if any(g <= 0 for g in self.gains):
            raise ModelDomainError("gains must be positive")
        if any(p < 0 for p in self.probabilities):
            raise ModelDomainError("gain probabilities must be non-negative")

    def mean(self) -> float:
        return sum(g * p for g, p in zip(self.gains, self.probabilities))


@dataclass(frozen=True)
class TxPowers:
    """Transmit powers (W) of the two tiers for a given cache decision."""
    sbs: float
    mbs: float

    def of(self, tier: Tier) -> float:
        return self.sbs if tier is Tier.SBS else self.mbs


# -------------------------------------------------------------------
# Content popularity and caching
# -------------------------------------------------------------------
@lru_cache(maxsize=64)
def _zipf_cumulative(F: int, gamma_p: float) -> np.ndarray:
    """Unnormalized partial sums S[C] = sum_{f<=C} f^-gamma_p, with S[0] = 0."""
    weights = np.arange(1, F + 1, dtype=float) ** (-gamma_p)
    cumulative = np.concatenate(([0.0], np.cumsum(weights)))
    cumulative.flags.writeable = False
    return cumulative


def zipf_popularity(f: int, cfg: SystemConfig) -> float:
    """
    Request probability of the f-th most popular file.

    Parameters:
    - f (int): popularity rank, 1 <= f <= F.
    - cfg (SystemConfig): supplies F and the skewness gamma_p.

    Returns:
    - float: f^-gamma_p normalized over the library.
    """
    if int(f) != f or not 1 <= f <= cfg.F:
        raise ModelDomainError(f"file index {f!r} outside 1..{cfg.F}")
    cumulative = _zipf_cumulative(cfg.F, float(cfg.gamma_p))
    return float(int(f) ** (-cfg.gamma_p) / cumulative[-1])


def _check_cache_size(C: int, cfg: SystemConfig) -> int:
    if int(C) != C or not 0 <= C <= cfg.F:
        raise ModelDomainError(f"cache size {C!r} outside 0..{cfg.F}")
    return int(C)


def hit_ratio(C: int, cfg: SystemConfig) -> float:
    """Probability that a request hits an SBS caching the C most popular files."""
    C = _check_cache_size(C, cfg)
    if C == 0:
        return 0.0
    cumulative = _zipf_cumulative(cfg.F, float(cfg.gamma_p))
    if C == cfg.F:
        return 1.0
    return float(cumulative[C] / cumulative[-1])


def uniform_hit_ratio(C: int, cfg: SystemConfig) -> float:
    C = _check_cache_size(C, cfg)
    if cfg.F == 0:
        return 0.0
    return C / cfg.F


def cache_hit_ratio(C: int, cfg: SystemConfig, placement: Placement = Placement.POPULARITY) -> float:
    if placement is Placement.UNIFORM:
        return uniform_hit_ratio(C, cfg)
    return hit_ratio(C, cfg)


# -------------------------------------------------------------------
# Power model
# -------------------------------------------------------------------
def cache_power(C: int, cfg: SystemConfig) -> float:
    return cfg.omega_ca * cfg.s_bits * C


def transmit_power_sbs(C: int, cfg: SystemConfig) -> float:
    """
    SBS transmit power when the SBS spends its whole budget.

    P_s^tr = (P_s_max - P_s_fc - omega_ca * s * C) / rho_s

    Raises InfeasibleCacheError when C is not a cache size in 0..C_max or
    leaves no transmit power.
    """
    if int(C) != C or not 0 <= C <= cfg.C_max:
        raise InfeasibleCacheError(f"cache size {C!r} outside 0..{cfg.C_max}")
    power = (cfg.P_s_max - cfg.P_s_fc - cache_power(int(C), cfg)) / cfg.rho_s
    if power <= 0:
        raise InfeasibleCacheError(f"cache size {C} leaves SBS transmit power {power!r} W")
    return power


def transmit_power_mbs(cfg: SystemConfig) -> float:
    # MBS stores the full library
    return (cfg.P_m_max - cfg.P_m_fc - cache_power(cfg.F, cfg)) / cfg.rho_m


def tx_powers(C: int, cfg: SystemConfig) -> TxPowers:
    return TxPowers(sbs=transmit_power_sbs(C, cfg), mbs=transmit_power_mbs(cfg))


def max_feasible_cache(cfg: SystemConfig) -> int:
    """Largest C <= C_max that keeps P_s^tr strictly positive."""
    per_file = cfg.omega_ca * cfg.s_bits
    if per_file == 0:
        return cfg.C_max
    headroom = cfg.P_s_max - cfg.P_s_fc
    limit = math.floor(headroom / per_file)
    if headroom - per_file * limit <= 0:
        limit -= 1
    return max(0, min(cfg.C_max, limit))


# -------------------------------------------------------------------
# Channel
# -------------------------------------------------------------------
def los_probability(r: ArrayLike, cfg: SystemConfig) -> ArrayLike:
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise ModelDomainError("distance must be >= 0")
    value = np.exp(-cfg.beta * r_arr)
    return float(value) if value.ndim == 0 else value


def nlos_probability(r: ArrayLike, cfg: SystemConfig) -> ArrayLike:
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise ModelDomainError("distance must be >= 0")
    value = -np.expm1(-cfg.beta * r_arr)
    return float(value) if value.ndim == 0 else value


def link_probability(r: ArrayLike, link: LinkState, cfg: SystemConfig) -> ArrayLike:
    if link is LinkState.LOS:
        return los_probability(r, cfg)
    return nlos_probability(r, cfg)


def path_loss_params(link: LinkState, cfg: SystemConfig) -> Tuple[float, float]:
    """(intercept A_k, exponent alpha_k) of the link state."""
    if link is LinkState.LOS:
        return cfg.A_L, cfg.alpha_L
    return cfg.A_NL, cfg.alpha_NL


def path_loss(r: ArrayLike, link: LinkState, cfg: SystemConfig) -> ArrayLike:
    """Mean path gain A_k * r^-alpha_k; r = 0 is outside the domain."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr <= 0):
        raise ModelDomainError("path loss is defined for r > 0 only")
    A, alpha = path_loss_params(link, cfg)
    value = A * r_arr ** (-alpha)
    return float(value) if value.ndim == 0 else value


def los_nlos_crossover(cfg: SystemConfig) -> float:
    """Distance beyond which the LOS path gain is at least the NLOS one (inf when the exponents agree)."""
    if cfg.alpha_NL == cfg.alpha_L:
        return 0.0 if cfg.A_L >= cfg.A_NL else math.inf
    return (cfg.A_L / cfg.A_NL) ** (1.0 / (cfg.alpha_NL - cfg.alpha_L))


def gain_distribution(cfg: SystemConfig) -> GainDistribution:
    two_pi = 2 * math.pi
    theta = min(cfg.theta, two_pi)
    M, m = cfg.M_gain, cfg.m_gain
    return GainDistribution(
        gains=(M * M, M * m, m * m),
        probabilities=(
            theta * theta / (two_pi * two_pi),
            2 * theta * (two_pi - theta) / (two_pi * two_pi),
            (two_pi - theta) ** 2 / (two_pi * two_pi),
        ),
    )


def serving_gain(cfg: SystemConfig) -> float:
    # perfectly aligned main lobes on the serving link
    return cfg.M_gain * cfg.M_gain


# -------------------------------------------------------------------
# Tiers and spectrum
# -------------------------------------------------------------------
def tier_density(tier: Tier, cfg: SystemConfig) -> float:
    return cfg.lambda_s if tier is Tier.SBS else cfg.lambda_m


def tier_bias(tier: Tier, cfg: SystemConfig) -> float:
    return cfg.B_s if tier is Tier.SBS else cfg.B_m


def biased_power(tier: Tier, powers: TxPowers, cfg: SystemConfig) -> float:
    """P^tr * B, the quantity compared (with the path gain) during association."""
    return powers.of(tier) * tier_bias(tier, cfg)


def spectrum_split(eta: float, cfg: SystemConfig) -> Tuple[float, float]:
    """(access bandwidth, backhaul bandwidth) in Hz for partition coefficient eta."""
    if not 0.0 <= eta <= 1.0:
        raise ModelDomainError(f"eta {eta!r} outside [0, 1]")
    return eta * cfg.W, (1.0 - eta) * cfg.W


if __name__ == "__main__":
    cfg = SystemConfig()
    print("P_s^tr(0)   =", transmit_power_sbs(0, cfg))
    print("P_s^tr(200) =", transmit_power_sbs(200, cfg))
    print("P_m^tr      =", transmit_power_mbs(cfg))
    print("max C       =", max_feasible_cache(cfg))
    print("p_h(100)    =", hit_ratio(100, cfg))
    print("gains       =", gain_distribution(cfg))
