"""
System-level simulation of the two-tier network, used as an independent
check on the analytic module.

Each realization is drawn from its own PCG64 substream keyed by the
realization index, so results for a given (seed, n) do not depend on how the
index range is chunked across workers. A realization does not depend on the
cache size: the same points are re-associated and re-evaluated for every C.
"""
import csv
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from hetnetcache.config import SystemConfig
from hetnetcache.model import (
    Destination,
    LinkState,
    Placement,
    Tier,
    TxPowers,
    biased_power,
    cache_hit_ratio,
    gain_distribution,
    serving_gain,
    tx_powers,
)
from hetnetcache.utils import format_value, get_logger

RNG_ALGORITHM = "PCG64/SeedSequence.spawn"
Z_99 = 2.5758293035489004
MIN_DISTANCE = 1e-6

# tier codes stored in SimulationBatch arrays
NO_TIER, SBS_CODE, MBS_CODE = 0, 1, 2
_TIER_CODES = {Tier.SBS: SBS_CODE, Tier.MBS: MBS_CODE}
_CODE_TIERS = {SBS_CODE: Tier.SBS, MBS_CODE: Tier.MBS}


class ProbeKind(Enum):
    USER = "user"
    BACKHAUL_SBS = "backhaul_sbs"

    @property
    def candidate_tiers(self) -> Tuple[Tier, ...]:
        return (Tier.MBS,) if self is ProbeKind.BACKHAUL_SBS else (Tier.SBS, Tier.MBS)


# -------------------------------------------------------------------
# Realizations
# -------------------------------------------------------------------
@dataclass(frozen=True)
class TierPoints:
    """BSs of one tier as seen from the probe at the origin."""
    positions: np.ndarray
    distances: np.ndarray
    los: np.ndarray
    fading: np.ndarray
    gain_class: np.ndarray

    def __len__(self) -> int:
        return int(self.distances.size)


@dataclass(frozen=True)
class NetworkRealization:
    index: int
    sbs: TierPoints
    mbs: TierPoints
    window_radius: float

    def points(self, tier: Tier) -> TierPoints:
        return self.sbs if tier is Tier.SBS else self.mbs


@dataclass(frozen=True)
class Association:
    tier: Tier
    index: int
    link: LinkState
    distance: float


@dataclass(frozen=True)
class EmpiricalEstimate:
    mean: float
    ci_half_width_99: float
    n: int
    seed: int
    rng_algorithm: str = RNG_ALGORITHM


def realization_rng(seed: int, index: int) -> np.random.Generator:
    """Generator of realization `index`; equal to the index-th child of SeedSequence(seed).spawn."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def _sample_tier(rng: np.random.Generator, lam: float, cfg: SystemConfig) -> TierPoints:
    R = cfg.numeric.window_radius
    count = int(rng.poisson(lam * math.pi * R * R)) if lam > 0 else 0
    radius = np.maximum(R * np.sqrt(rng.random(count)), MIN_DISTANCE)
    angle = 2.0 * math.pi * rng.random(count)
    los = rng.random(count) < np.exp(-cfg.beta * radius)
    fading = rng.exponential(1.0, count)
    gain_class = rng.choice(3, size=count, p=gain_distribution(cfg).probabilities)
    positions = np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])
    return TierPoints(positions=positions, distances=radius, los=los, fading=fading, gain_class=gain_class)


def sample_realization(cfg: SystemConfig, rng: np.random.Generator, index: int = 0) -> NetworkRealization:
    """
    Draw one deployment in a disc of radius numeric.window_radius around the probe.

    Parameters:
    - cfg (SystemConfig): densities, blockage and antenna pattern.
    - rng (numpy.random.Generator): stream for this realization.
    - index (int): realization index, kept for traces.

    Returns:
    - NetworkRealization: SBS and MBS points with link state, fading and gain class.
    """
    sbs = _sample_tier(rng, cfg.lambda_s, cfg)
    mbs = _sample_tier(rng, cfg.lambda_m, cfg)
    return NetworkRealization(index=index, sbs=sbs, mbs=mbs, window_radius=cfg.numeric.window_radius)


# -------------------------------------------------------------------
# Association and SINR
# -------------------------------------------------------------------
def _mean_path_gain(points: TierPoints, cfg: SystemConfig) -> np.ndarray:
    A = np.where(points.los, cfg.A_L, cfg.A_NL)
    alpha = np.where(points.los, cfg.alpha_L, cfg.alpha_NL)
    return A * points.distances ** (-alpha)


def associate(realization: NetworkRealization, probe: ProbeKind, cfg: SystemConfig, C: int = 0, *,
              powers: Optional[TxPowers] = None) -> Optional[Association]:
    """
    Serving BS by maximum biased mean received power, or None when no candidate
    BS exists in the window (counted as not covered).
    """
    powers = powers if powers is not None else tx_powers(C, cfg)
    best: Optional[Association] = None
    best_metric = -math.inf
    for tier in probe.candidate_tiers:
        points = realization.points(tier)
        if len(points) == 0:
            continue
        metric = biased_power(tier, powers, cfg) * _mean_path_gain(points, cfg)
        i = int(np.argmax(metric))
        if metric[i] > best_metric:
            best_metric = float(metric[i])
            link = LinkState.LOS if points.los[i] else LinkState.NLOS
            best = Association(tier=tier, index=i, link=link, distance=float(points.distances[i]))
    return best


def sinr(realization: NetworkRealization, association: Association, probe: ProbeKind, cfg: SystemConfig,
         C: int = 0, *, powers: Optional[TxPowers] = None, interference: bool = True) -> float:
    """
    SINR at the probe from its serving BS.

    The serving link has main-lobe gain on both ends; every other BS of the
    probe's interfering tiers contributes with its sampled gain class and fading.
    """
    powers = powers if powers is not None else tx_powers(C, cfg)
    gains = np.asarray(gain_distribution(cfg).gains)
    serving = realization.points(association.tier)
    desired = (biased_power(association.tier, powers, cfg) * serving_gain(cfg)
               * serving.fading[association.index] * _mean_path_gain(serving, cfg)[association.index])

    total = 0.0
    if interference:
        for tier in probe.candidate_tiers:
            points = realization.points(tier)
            mask = np.ones(len(points), dtype=bool)
            if tier is association.tier:
                mask[association.index] = False
            received = (biased_power(tier, powers, cfg) * gains[points.gain_class] * points.fading
                        * _mean_path_gain(points, cfg))
            total += float(received[mask].sum())
    return float(desired / (total + cfg.N0))


def best_snr(realization: NetworkRealization, tier: Tier, cfg: SystemConfig, C: int = 0, *,
             powers: Optional[TxPowers] = None) -> float:
    """Largest interference-free SNR over all BSs of `tier`, 0 when the tier is empty."""
    powers = powers if powers is not None else tx_powers(C, cfg)
    points = realization.points(tier)
    if len(points) == 0:
        return 0.0
    received = biased_power(tier, powers, cfg) * serving_gain(cfg) * points.fading * _mean_path_gain(points, cfg)
    return float(received.max() / cfg.N0)


# -------------------------------------------------------------------
# Batches
# -------------------------------------------------------------------
@dataclass(frozen=True)
class SimulationBatch:
    """
    Per-realization outcomes for realizations [start, stop) and every cache size
    in C_values. Arrays indexed [c, i] for C_values[c] and realization start + i.
    """
    seed: int
    start: int
    stop: int
    C_values: Tuple[int, ...]
    user_tier: np.ndarray
    user_link: np.ndarray
    user_sinr: np.ndarray
    user_snr: np.ndarray
    backhaul_sinr: np.ndarray
    backhaul_snr: np.ndarray
    best_snr_sbs: np.ndarray
    best_snr_mbs: np.ndarray

    @property
    def n(self) -> int:
        return self.stop - self.start

    def row(self, C: int) -> int:
        try:
            return self.C_values.index(int(C))
        except ValueError:
            raise KeyError(f"cache size {C} was not simulated") from None


def simulate(cfg: SystemConfig, C_values: Sequence[int], start: int, stop: int, seed: int) -> SimulationBatch:
    """
    Simulate realizations start..stop-1 for every cache size in C_values.

    Parameters:
    - cfg (SystemConfig): network configuration.
    - C_values (sequence of int): feasible cache sizes to evaluate each realization at.
    - start, stop (int): realization index range.
    - seed (int): root seed.

    Returns:
    - SimulationBatch
    """
    C_values = tuple(int(c) for c in C_values)
    shape = (len(C_values), stop - start)
    user_tier = np.zeros(shape, dtype=np.int8)
    user_link = np.zeros(shape, dtype=np.int8)
    user_sinr = np.zeros(shape)
    user_snr = np.zeros(shape)
    backhaul_sinr = np.zeros(shape)
    backhaul_snr = np.zeros(shape)
    snr_sbs = np.zeros(shape)
    snr_mbs = np.zeros(shape)
    powers = [tx_powers(C, cfg) for C in C_values]

    for i in range(start, stop):
        realization = sample_realization(cfg, realization_rng(seed, i), index=i)
        col = i - start
        for c, p in enumerate(powers):
            user = associate(realization, ProbeKind.USER, cfg, powers=p)
            if user is not None:
                user_tier[c, col] = _TIER_CODES[user.tier]
                user_link[c, col] = 0 if user.link is LinkState.LOS else 1
                user_sinr[c, col] = sinr(realization, user, ProbeKind.USER, cfg, powers=p)
                user_snr[c, col] = sinr(realization, user, ProbeKind.USER, cfg, powers=p, interference=False)
            bh = associate(realization, ProbeKind.BACKHAUL_SBS, cfg, powers=p)
            if bh is not None:
                backhaul_sinr[c, col] = sinr(realization, bh, ProbeKind.BACKHAUL_SBS, cfg, powers=p)
                backhaul_snr[c, col] = sinr(realization, bh, ProbeKind.BACKHAUL_SBS, cfg, powers=p,
                                            interference=False)
            snr_sbs[c, col] = best_snr(realization, Tier.SBS, cfg, powers=p)
            snr_mbs[c, col] = best_snr(realization, Tier.MBS, cfg, powers=p)

    return SimulationBatch(seed, start, stop, C_values, user_tier, user_link, user_sinr, user_snr,
                           backhaul_sinr, backhaul_snr, snr_sbs, snr_mbs)


def combine_batches(batches: Iterable[SimulationBatch]) -> SimulationBatch:
    """Concatenate batches of one run in realization order; they must tile a contiguous range."""
    ordered = sorted(batches, key=lambda b: b.start)
    if not ordered:
        raise ValueError("no batches to combine")
    first = ordered[0]
    for prev, nxt in zip(ordered, ordered[1:]):
        if nxt.start != prev.stop or nxt.C_values != first.C_values or nxt.seed != first.seed:
            raise ValueError(f"batch [{nxt.start}, {nxt.stop}) does not continue [{prev.start}, {prev.stop})")

    def cat(name: str) -> np.ndarray:
        return np.concatenate([getattr(b, name) for b in ordered], axis=1)

    return SimulationBatch(
        first.seed, first.start, ordered[-1].stop, first.C_values,
        cat("user_tier"), cat("user_link"), cat("user_sinr"), cat("user_snr"),
        cat("backhaul_sinr"), cat("backhaul_snr"), cat("best_snr_sbs"), cat("best_snr_mbs"),
    )


@lru_cache(maxsize=16)
def _simulated(cfg: SystemConfig, C_values: Tuple[int, ...], n: int, seed: int) -> SimulationBatch:
    get_logger(__name__).info("simulating %d realizations (seed %d) for C in %s", n, seed, C_values)
    return simulate(cfg, C_values, 0, n, seed)


def _check_n(n: int) -> int:
    if int(n) != n or n < 1:
        raise ValueError(f"number of realizations must be >= 1, got {n!r}")
    return int(n)


# -------------------------------------------------------------------
# Estimators
# -------------------------------------------------------------------
def _proportion(hits: np.ndarray, n: int, seed: int) -> EmpiricalEstimate:
    if n == 0:
        return EmpiricalEstimate(0.0, 0.0, 0, seed)
    p = float(np.count_nonzero(hits)) / n
    return EmpiricalEstimate(p, Z_99 * math.sqrt(p * (1.0 - p) / n), n, seed)


def association_indicator(batch: SimulationBatch, dest: Destination, C: int) -> np.ndarray:
    row = batch.row(C)
    if dest is Destination.BACKHAUL:
        return batch.backhaul_sinr[row] > 0
    return batch.user_tier[row] == _TIER_CODES[dest.serving_tier]


def coverage_indicator(batch: SimulationBatch, dest: Destination, gamma: float, C: int, *,
                       interference: bool = True) -> np.ndarray:
    """Per-realization indicator of (associated to dest) and (SINR > gamma)."""
    row = batch.row(C)
    if dest is Destination.BACKHAUL:
        values = batch.backhaul_sinr[row] if interference else batch.backhaul_snr[row]
    else:
        values = batch.user_sinr[row] if interference else batch.user_snr[row]
    return association_indicator(batch, dest, C) & (values > gamma)


def estimate_coverage(batch: SimulationBatch, dest: Destination, gamma: float, C: int, *,
                      conditional: bool = False, interference: bool = True) -> EmpiricalEstimate:
    covered = coverage_indicator(batch, dest, gamma, C, interference=interference)
    if conditional:
        associated = association_indicator(batch, dest, C)
        return _proportion(covered[associated], int(np.count_nonzero(associated)), batch.seed)
    return _proportion(covered, batch.n, batch.seed)


def estimate_coverage_snr(batch: SimulationBatch, tier: Tier, gamma: float, C: int) -> EmpiricalEstimate:
    row = batch.row(C)
    values = batch.best_snr_sbs[row] if tier is Tier.SBS else batch.best_snr_mbs[row]
    return _proportion(values > gamma, batch.n, batch.seed)


def empirical_coverage(kind: Destination, gamma: float, C: int, n: int, seed: int, cfg: SystemConfig, *,
                       conditional: bool = False, interference: bool = True) -> EmpiricalEstimate:
    """
    Fraction of realizations associated to `kind` with SINR above gamma (the joint
    probability), or the fraction among associated realizations when `conditional`.
    """
    batch = _simulated(cfg, (int(C),), _check_n(n), seed)
    return estimate_coverage(batch, kind, gamma, C, conditional=conditional, interference=interference)


def estimate_association(batch: SimulationBatch, dest: Destination, C: int) -> EmpiricalEstimate:
    return _proportion(association_indicator(batch, dest, C), batch.n, batch.seed)


def empirical_association(dest: Destination, C: int, n: int, seed: int, cfg: SystemConfig) -> EmpiricalEstimate:
    batch = _simulated(cfg, (int(C),), _check_n(n), seed)
    return estimate_association(batch, dest, C)


def empirical_coverage_snr(tier: Tier, gamma: float, C: int, n: int, seed: int, cfg: SystemConfig
                           ) -> EmpiricalEstimate:
    """Fraction of realizations in which some BS of `tier` alone gives SNR above gamma."""
    batch = _simulated(cfg, (int(C),), _check_n(n), seed)
    return estimate_coverage_snr(batch, tier, gamma, C)


def estimate_apt(batch: SimulationBatch, eta: float, C: int, gamma0: float, cfg: SystemConfig,
                 placement: Placement = Placement.POPULARITY) -> EmpiricalEstimate:
    """
    Throughput from empirical coverage: the analytic APT composition applied to
    per-realization coverage indicators. The CI uses the per-realization linear
    combination on the binding side of the SBS min.
    """
    spectral = cfg.W * math.log2(1.0 + gamma0)
    p_h = cache_hit_ratio(C, cfg, placement)
    cov_s = coverage_indicator(batch, Destination.USER_TO_SBS, gamma0, C).astype(float)
    cov_m = coverage_indicator(batch, Destination.USER_TO_MBS, gamma0, C).astype(float)
    cov_bh = coverage_indicator(batch, Destination.BACKHAUL, gamma0, C).astype(float)

    access = (1.0 - p_h) * cfg.lambda_s * eta * spectral * cov_s
    backhaul = (1.0 - p_h) * cfg.lambda_m * (1.0 - eta) * spectral * cov_bh
    rest = p_h * cfg.lambda_s * eta * spectral * cov_s + cfg.lambda_m * eta * spectral * cov_m
    binding = access if access.mean() <= backhaul.mean() else backhaul
    per_realization = binding + rest

    n = batch.n
    mean = float(min(access.mean(), backhaul.mean()) + rest.mean())
    spread = float(per_realization.std(ddof=1)) if n > 1 else 0.0
    return EmpiricalEstimate(mean, Z_99 * spread / math.sqrt(n), n, batch.seed)


def empirical_apt(eta: float, C: int, gamma0: float, n: int, seed: int, cfg: SystemConfig, *,
                  placement: Placement = Placement.POPULARITY) -> EmpiricalEstimate:
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta {eta!r} outside [0, 1]")
    batch = _simulated(cfg, (int(C),), _check_n(n), seed)
    return estimate_apt(batch, eta, C, gamma0, cfg, placement)


def clear_simulation_cache():
    _simulated.cache_clear()


# -------------------------------------------------------------------
# Trace
# -------------------------------------------------------------------
TRACE_FIELDS = ["realization", "kind", "C", "associated_tier", "link", "sinr"]


def trace_rows(batch: SimulationBatch) -> List[Dict[str, object]]:
    rows = []
    for c, C in enumerate(batch.C_values):
        for col in range(batch.n):
            code = int(batch.user_tier[c, col])
            tier = _CODE_TIERS.get(code)
            rows.append({
                "realization": batch.start + col,
                "kind": ProbeKind.USER.value,
                "C": C,
                "associated_tier": tier.value if tier else "none",
                "link": ("los", "nlos")[batch.user_link[c, col]] if tier else "",
                "sinr": float(batch.user_sinr[c, col]),
            })
            served = batch.backhaul_sinr[c, col] > 0
            rows.append({
                "realization": batch.start + col,
                "kind": ProbeKind.BACKHAUL_SBS.value,
                "C": C,
                "associated_tier": Tier.MBS.value if served else "none",
                "link": "",
                "sinr": float(batch.backhaul_sinr[c, col]),
            })
    return rows


def write_trace(batch: SimulationBatch, path: Union[str, Path]) -> Path:
    """Write one row per (realization, probe, C) to CSV."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=TRACE_FIELDS)
        writer.writeheader()
        for row in trace_rows(batch):
            writer.writerow({k: format_value(v) for k, v in row.items()})
    return path


if __name__ == "__main__":
    cfg = SystemConfig()
    for db in (0, 5, 10, 15):
        g = 10 ** (db / 10)
        print(db, "dB:", empirical_coverage(Destination.USER_TO_SBS, g, 0, 2000, 1, cfg))
