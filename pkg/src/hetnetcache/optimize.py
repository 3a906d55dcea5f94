"""
Joint cache size, SBS power and spectrum partition optimization.

The SBS power is tied to the cache size by the power budget, so the decision
variables are the cache size C and the access share eta. For fixed C the
throughput is the minimum of two linear functions of eta and is maximized in
closed form; for fixed eta the cache size is searched by a genetic algorithm
(or exhaustively). The two steps alternate until the throughput stops moving.
"""
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from hetnetcache.analytic import apt, coverage_backhaul, coverage_mbs, coverage_sbs, rate_per_hz
from hetnetcache.config import SystemConfig
from hetnetcache.model import Placement, cache_hit_ratio, max_feasible_cache, transmit_power_sbs
from hetnetcache.utils import get_logger

RESTART_SPREAD_WARNING = 0.01


@dataclass(frozen=True)
class GaParams:
    population_size: int = 40
    generations: int = 50
    chromosome_bits: int = 10
    crossover_rate: float = 0.8
    mutation_rate: float = 0.02
    elitism_count: int = 2
    tournament_size: int = 2
    seed: int = 20240601

    def __post_init__(self):
        if self.population_size < 1 or self.generations < 1 or self.chromosome_bits < 1:
            raise ValueError("population_size, generations and chromosome_bits must be >= 1")
        if not 0.0 <= self.crossover_rate <= 1.0 or not 0.0 <= self.mutation_rate <= 1.0:
            raise ValueError("crossover_rate and mutation_rate must lie in [0, 1]")
        if not 0 <= self.elitism_count <= self.population_size:
            raise ValueError("elitism_count must lie in [0, population_size]")
        if self.tournament_size < 1:
            raise ValueError("tournament_size must be >= 1")


@dataclass(frozen=True)
class OptimizationState:
    """One BCD iteration: APT after the spectrum step (apt1) and after the cache step (apt2)."""
    iteration: int
    eta: float
    C: int
    apt1: float
    apt2: float


@dataclass(frozen=True)
class SolveResult:
    algorithm: str
    C_star: int
    eta_star: float
    P_s_tr_star: float
    apt_star: float
    trace: List[OptimizationState] = field(default_factory=list)
    converged: bool = True
    restart_spread: float = 0.0

    def gain_over(self, other: "SolveResult") -> float:
        """Relative APT gain of this result over `other`."""
        if other.apt_star == 0:
            return math.inf if self.apt_star > 0 else 0.0
        return self.apt_star / other.apt_star - 1.0


@dataclass(frozen=True)
class GaOutcome:
    c_star: int
    fitness_star: float
    best_by_generation: List[float]


class BaselineKind(Enum):
    NO_CACHE_DSA = "no_cache_dsa"
    OPT_CACHE_FSA = "opt_cache_fsa"
    FULL_CACHE_DSA = "full_cache_dsa"
    UNIFORM_CACHE_DSA = "uniform_cache_dsa"


# -------------------------------------------------------------------
# Objective pieces
# -------------------------------------------------------------------
def _rate_coefficients(cfg: SystemConfig, gamma0: Optional[float]) -> Tuple[float, float, float]:
    spectral = cfg.W * rate_per_hz(cfg.gamma0 if gamma0 is None else gamma0)
    return cfg.lambda_m * spectral, cfg.lambda_s * spectral, cfg.lambda_m * spectral


def _coverages(C: int, cfg: SystemConfig, gamma0: Optional[float]) -> Tuple[float, float, float]:
    threshold = cfg.gamma0 if gamma0 is None else gamma0
    return (coverage_sbs(threshold, C, cfg).value, coverage_mbs(threshold, C, cfg).value,
            coverage_backhaul(threshold, cfg, C=C).value)


def fitness_terms(C: int, eta: float, cfg: SystemConfig, *, placement: Placement = Placement.POPULARITY,
                  gamma0: Optional[float] = None) -> Tuple[float, float]:
    """
    The backhaul-limited (f1) and access-limited (f2) throughput of the SBS tier
    plus the MBS tier; min(f1, f2) is the APT at (eta, C).
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta {eta!r} outside [0, 1]")
    A1, A2, A3 = _rate_coefficients(cfg, gamma0)
    p_h = cache_hit_ratio(C, cfg, placement)
    cov_s, cov_m, cov_bh = _coverages(C, cfg, gamma0)
    f1 = A1 * (1.0 - p_h) * (1.0 - eta) * cov_bh + A2 * p_h * eta * cov_s + A3 * eta * cov_m
    f2 = A2 * eta * cov_s + A3 * eta * cov_m
    return f1, f2


def spectrum_partition_from_rates(a: float, b: float, d: float) -> Tuple[float, float]:
    """
    Maximize min(a(1 - eta) + b eta, d eta) over eta in [0, 1].

    The maximum of the minimum of two lines sits at an endpoint or at their
    crossing; candidates are scanned in ascending eta and only a strictly
    larger value replaces the incumbent, so ties go to the smaller eta.
    """
    candidates = [0.0]
    denominator = a - b + d
    if denominator > 0:
        crossing = a / denominator
        if 0.0 < crossing < 1.0:
            candidates.append(crossing)
    candidates.append(1.0)

    best_eta, best_value = 0.0, -math.inf
    for eta in candidates:
        value = min(a * (1.0 - eta) + b * eta, d * eta)
        if value > best_value:
            best_eta, best_value = eta, value
    return best_eta, best_value


def solve_spectrum_partition(C: int, cfg: SystemConfig, *, placement: Placement = Placement.POPULARITY,
                             gamma0: Optional[float] = None) -> Tuple[float, float]:
    """
    Best access share eta for a fixed cache size.

    Returns:
    - tuple: (eta_star, Y_star) with Y_star the APT at (eta_star, C).
    """
    A1, A2, A3 = _rate_coefficients(cfg, gamma0)
    p_h = cache_hit_ratio(C, cfg, placement)
    cov_s, cov_m, cov_bh = _coverages(C, cfg, gamma0)
    a = A1 * (1.0 - p_h) * cov_bh
    b = A2 * p_h * cov_s + A3 * cov_m
    d = A2 * cov_s + A3 * cov_m
    return spectrum_partition_from_rates(a, b, d)


# -------------------------------------------------------------------
# Cache search
# -------------------------------------------------------------------
def _apt_fitness(eta: float, cfg: SystemConfig, placement: Placement, gamma0: Optional[float]
                 ) -> Callable[[int], float]:
    def fitness(C: int) -> float:
        return apt(eta, C, cfg, placement=placement, gamma0=gamma0).total
    return fitness


def exhaustive_cache(eta: float, cfg: SystemConfig, *, placement: Placement = Placement.POPULARITY,
                     gamma0: Optional[float] = None) -> Tuple[int, float]:
    """Exact argmax of APT over every feasible cache size; ties go to the smaller C."""
    fitness = _apt_fitness(eta, cfg, placement, gamma0)
    best_C, best_value = 0, fitness(0)
    for C in range(1, max_feasible_cache(cfg) + 1):
        value = fitness(C)
        if value > best_value:
            best_C, best_value = C, value
    return best_C, best_value


def _decode(population: np.ndarray, c_max: int) -> np.ndarray:
    weights = 1 << np.arange(population.shape[1] - 1, -1, -1)
    return np.minimum(population @ weights, c_max)


def _encode(C: int, bits: int) -> np.ndarray:
    return np.array([(C >> k) & 1 for k in range(bits - 1, -1, -1)], dtype=np.int64)


def _better(value: float, C: int, best_value: float, best_C: int) -> bool:
    return value > best_value or (value == best_value and C < best_C)


def gcdpa(eta: float, cfg: SystemConfig, ga: GaParams = GaParams(), *,
          placement: Placement = Placement.POPULARITY, gamma0: Optional[float] = None,
          incumbent: Optional[int] = None, fitness: Optional[Callable[[int], float]] = None) -> GaOutcome:
    """
    Genetic search for the cache size at a fixed spectrum partition.

    Parameters:
    - eta (float): access share, held fixed.
    - cfg (SystemConfig): configuration; C ranges over 0..max_feasible_cache(cfg).
    - ga (GaParams): population, generations, encoding width, rates, elitism, seed.
    - placement (Placement): cache placement policy used by the fitness.
    - gamma0 (float): threshold override.
    - incumbent (int): cache size placed in the initial population.
    - fitness (callable): C -> value, the APT at (eta, C) when omitted.

    Returns:
    - GaOutcome: best-ever cache size and fitness, and the best-so-far value after each generation.
    """
    c_max = max_feasible_cache(cfg)
    fitness = fitness or _apt_fitness(eta, cfg, placement, gamma0)
    if c_max == 0:
        value = fitness(0)
        return GaOutcome(0, value, [value])
    if 2 ** ga.chromosome_bits <= c_max:
        raise ValueError(f"{ga.chromosome_bits} bits cannot encode cache sizes up to {c_max}")

    rng = np.random.default_rng(ga.seed)
    bits, size = ga.chromosome_bits, ga.population_size
    memo: Dict[int, float] = {}

    def evaluate(population: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        decoded = _decode(population, c_max)
        values = np.empty(size)
        for k, C in enumerate(decoded):
            C = int(C)
            if C not in memo:
                memo[C] = fitness(C)
            values[k] = memo[C]
        return decoded, values

    def tournament(values: np.ndarray, decoded: np.ndarray) -> int:
        entrants = rng.integers(0, size, size=ga.tournament_size)
        winner = int(entrants[0])
        for k in entrants[1:]:
            if _better(values[k], decoded[k], values[winner], decoded[winner]):
                winner = int(k)
        return winner

    population = rng.integers(0, 2, size=(size, bits))
    if incumbent is not None:
        population[0] = _encode(min(int(incumbent), c_max), bits)

    decoded, values = evaluate(population)
    best_C, best_value = 0, -math.inf
    history: List[float] = []
    for generation in range(ga.generations + 1):
        for C, value in zip(decoded, values):
            if _better(value, int(C), best_value, best_C):
                best_C, best_value = int(C), float(value)
        history.append(best_value)
        if generation == ga.generations:
            break

        order = np.lexsort((decoded, -values))
        children = [population[k].copy() for k in order[:ga.elitism_count]]
        while len(children) < size:
            first = population[tournament(values, decoded)].copy()
            second = population[tournament(values, decoded)].copy()
            if bits > 1 and rng.random() < ga.crossover_rate:
                point = int(rng.integers(1, bits))
                first[point:], second[point:] = second[point:].copy(), first[point:].copy()
            for child in (first, second):
                flips = rng.random(bits) < ga.mutation_rate
                child[flips] ^= 1
                children.append(child)
        population = np.array(children[:size])
        decoded, values = evaluate(population)

    return GaOutcome(best_C, best_value, history)


# -------------------------------------------------------------------
# Alternating optimization
# -------------------------------------------------------------------
def _iteration_seed(seed: int, restart: int, iteration: int) -> int:
    return int(np.random.SeedSequence([seed, restart, iteration]).generate_state(1)[0])


def _bcd(cfg: SystemConfig, C0: int, restart: int, epsilon: float, iter_max: int, ga: GaParams,
         placement: Placement, gamma0: Optional[float]) -> Tuple[int, float, float, List[OptimizationState], bool]:
    logger = get_logger(__name__)
    C = C0
    eta, apt2 = 0.0, 0.0
    trace: List[OptimizationState] = []
    for t in range(1, iter_max + 1):
        eta, apt1 = solve_spectrum_partition(C, cfg, placement=placement, gamma0=gamma0)
        outcome = gcdpa(eta, cfg, replace(ga, seed=_iteration_seed(ga.seed, restart, t)),
                        placement=placement, gamma0=gamma0, incumbent=C)
        if outcome.fitness_star > apt1:
            C, apt2 = outcome.c_star, outcome.fitness_star
        else:
            apt2 = apt1
        trace.append(OptimizationState(t, eta, C, apt1, apt2))
        logger.info("restart %d iteration %d: eta=%.6f C=%d apt1=%.6g apt2=%.6g", restart, t, eta, C, apt1, apt2)
        if abs(apt2 - apt1) <= epsilon * max(1.0, abs(apt2)):
            return C, eta, apt2, trace, True
    return C, eta, apt2, trace, False


def jcspa(cfg: SystemConfig, epsilon: float = 1e-5, iter_max: int = 20, *, ga: GaParams = GaParams(),
          restarts: int = 3, placement: Placement = Placement.POPULARITY, gamma0: Optional[float] = None,
          algorithm: str = "jcspa") -> SolveResult:
    """
    Alternate the closed-form spectrum step and the genetic cache step.

    The first run starts from C = 0, `restarts` more start from seeded random
    cache sizes; the best run is returned. The C = 0 run can stall at the
    no-cache point, so the recorded spread compares the random starts only.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    if iter_max < 1:
        raise ValueError("iter_max must be >= 1")
    logger = get_logger(__name__)
    c_max = max_feasible_cache(cfg)
    start_rng = np.random.default_rng(np.random.SeedSequence(ga.seed, spawn_key=(restarts,)))
    starts = [0] + [int(c) for c in start_rng.integers(0, c_max + 1, size=restarts)]

    runs = [_bcd(cfg, C0, k, epsilon, iter_max, ga, placement, gamma0) for k, C0 in enumerate(starts)]
    best = runs[0]
    for run in runs[1:]:
        if run[2] > best[2]:
            best = run
    if runs[0][0] == 0 and len(runs[0][3]) == 1 and runs[0][2] < best[2]:
        logger.info("%s: start C=0 stalled at the no-cache point (APT %.6g)", algorithm, runs[0][2])
    values = [run[2] for run in runs[1:]] or [runs[0][2]]
    spread = (max(values) - min(values)) / max(values) if max(values) > 0 else 0.0
    if spread > RESTART_SPREAD_WARNING:
        logger.warning("%s restarts disagree by %.2f%% (APT %s)", algorithm, 100 * spread, values)

    C, eta, value, trace, converged = best
    return SolveResult(algorithm, C, eta, transmit_power_sbs(C, cfg), value, trace, converged, spread)


def _fixed_cache(algorithm: str, C: int, cfg: SystemConfig, gamma0: Optional[float]) -> SolveResult:
    eta, value = solve_spectrum_partition(C, cfg, gamma0=gamma0)
    return SolveResult(algorithm, C, eta, transmit_power_sbs(C, cfg), value,
                       [OptimizationState(1, eta, C, value, value)], True)


def baseline(kind: BaselineKind, cfg: SystemConfig, *, ga: GaParams = GaParams(), epsilon: float = 1e-5,
             iter_max: int = 20, restarts: int = 3, gamma0: Optional[float] = None) -> SolveResult:
    """Reference strategies: no cache, fixed half split, full cache, and uniform placement."""
    if kind is BaselineKind.NO_CACHE_DSA:
        return _fixed_cache(kind.value, 0, cfg, gamma0)
    if kind is BaselineKind.FULL_CACHE_DSA:
        return _fixed_cache(kind.value, max_feasible_cache(cfg), cfg, gamma0)
    if kind is BaselineKind.OPT_CACHE_FSA:
        C, value = exhaustive_cache(0.5, cfg, gamma0=gamma0)
        return SolveResult(kind.value, C, 0.5, transmit_power_sbs(C, cfg), value,
                           [OptimizationState(1, 0.5, C, value, value)], True)
    return jcspa(cfg, epsilon, iter_max, ga=ga, restarts=restarts, placement=Placement.UNIFORM, gamma0=gamma0,
                 algorithm=kind.value)


def solve_all(cfg: SystemConfig, *, ga: GaParams = GaParams(), epsilon: float = 1e-5, iter_max: int = 20,
              restarts: int = 3, gamma0: Optional[float] = None) -> List[SolveResult]:
    """JCSPA followed by every baseline, in BaselineKind order."""
    results = [jcspa(cfg, epsilon, iter_max, ga=ga, restarts=restarts, gamma0=gamma0)]
    for kind in BaselineKind:
        results.append(baseline(kind, cfg, ga=ga, epsilon=epsilon, iter_max=iter_max, restarts=restarts,
                                gamma0=gamma0))
    return results


if __name__ == "__main__":
    cfg = SystemConfig()
    result = jcspa(cfg)
    print(result.algorithm, result.C_star, result.eta_star, result.apt_star, result.converged)
