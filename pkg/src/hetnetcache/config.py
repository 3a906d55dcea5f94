import math
import os
from dataclasses import dataclass, field, fields, replace, asdict
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from dotenv import dotenv_values, load_dotenv

from hetnetcache.utils import get_logger

# -------------------------------------------------------------------
# Locations
# -------------------------------------------------------------------
CONFIG_DIR = Path.home() / ".hetnetcache"
BUNDLED_CONFIG_DIR = Path(__file__).parent / ".config"
CONFIG_FILE_NAME = "system_config.txt"
DEFAULT_SEED = 20240601


class ConfigError(ValueError):
    """Raised when a configuration value violates an invariant; `key` names the offending field."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


# -------------------------------------------------------------------
# Unit conversion at the boundary
# -------------------------------------------------------------------
def dbm_to_watts(value_dbm: float) -> float:
    return 10.0 ** (value_dbm / 10.0) / 1000.0


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


def watts_to_dbm(value_w: float) -> float:
    return 10.0 * math.log10(value_w * 1000.0)


def linear_to_db(value: float) -> float:
    return 10.0 * math.log10(value)


# -------------------------------------------------------------------
# Dataclasses
# -------------------------------------------------------------------
@dataclass(frozen=True)
class NumericConfig:
    quad_rtol: float = 1e-8
    quad_atol: float = 1e-12
    quad_max_intervals: int = 400
    void_cutoff: float = 1e-12
    tail_cutoff: float = 1e-14
    inner_panels: int = 16
    inner_order: int = 10
    seed: int = DEFAULT_SEED
    window_radius: float = 2000.0

    def __post_init__(self):
        checks = [
            ("quad_rtol", self.quad_rtol > 0, "must be > 0"),
            ("quad_atol", self.quad_atol > 0, "must be > 0"),
            ("quad_max_intervals", self.quad_max_intervals >= 1, "must be >= 1"),
            ("void_cutoff", 0 < self.void_cutoff < 1, "must lie in (0, 1)"),
            ("tail_cutoff", 0 < self.tail_cutoff < 1, "must lie in (0, 1)"),
            ("inner_panels", self.inner_panels >= 1, "must be >= 1"),
            ("inner_order", self.inner_order >= 2, "must be >= 2"),
            ("seed", self.seed >= 0, "must be >= 0"),
            ("window_radius", self.window_radius > 0, "must be > 0"),
        ]
        for key, ok, message in checks:
            if not ok:
                raise ConfigError(f"numeric.{key}", message)


@dataclass(frozen=True)
class SystemConfig:
    """
    Every physical, caching and numeric parameter of the network model.

    All values are linear / SI internally: powers and noise in W, gains and
    the SINR threshold linear, theta in radians, s_bits in bits. Conversion
    from dBm / dB / degrees happens once in `parse_system_config`.
    """
    lambda_m: float = 4e-5
    lambda_s: float = 1e-4
    W: float = 4e8
    P_m_max: float = dbm_to_watts(60.0)
    P_s_max: float = dbm_to_watts(38.2)
    P_m_fc: float = dbm_to_watts(46.0)
    P_s_fc: float = dbm_to_watts(20.0)
    rho_m: float = 1.5
    rho_s: float = 1.0
    B_m: float = 5.0
    B_s: float = 10.0
    M_gain: float = db_to_linear(10.0)
    m_gain: float = db_to_linear(-10.0)
    theta: float = math.radians(30.0)
    A_L: float = 1e-10
    A_NL: float = 1e-14
    alpha_L: float = 2.0
    alpha_NL: float = 4.0
    beta: float = 2e-3
    N0: float = dbm_to_watts(-90.0)
    gamma0: float = db_to_linear(10.0)
    F: int = 1000
    C_max: int = 800
    gamma_p: float = 1.0
    s_bits: float = 8e8
    omega_ca: float = 6.25e-12
    numeric: NumericConfig = field(default_factory=NumericConfig)

    def __post_init__(self):
        for key in ("F", "C_max"):
            value = getattr(self, key)
            if int(value) != value:
                raise ConfigError(key, "must be an integer number of file units")
            object.__setattr__(self, key, int(value))

        checks = [
            ("lambda_m", self.lambda_m >= 0, "must be >= 0"),
            ("lambda_s", self.lambda_s >= 0, "must be >= 0"),
            ("W", self.W > 0, "must be > 0"),
            ("P_m_max", self.P_m_max > 0, "must be > 0"),
            ("P_s_max", self.P_s_max > 0, "must be > 0"),
            ("P_m_fc", self.P_m_fc >= 0, "must be >= 0"),
            ("P_s_fc", self.P_s_fc >= 0, "must be >= 0"),
            ("rho_m", self.rho_m > 0, "must be > 0"),
            ("rho_s", self.rho_s > 0, "must be > 0"),
            ("B_m", self.B_m > 0, "must be > 0"),
            ("B_s", self.B_s > 0, "must be > 0"),
            ("M_gain", self.M_gain > 0, "must be > 0"),
            ("m_gain", self.m_gain > 0, "must be > 0"),
            ("theta", 0 < self.theta <= 2 * math.pi * (1 + 1e-12), "must lie in (0, 360] degrees"),
            ("A_L", self.A_L > 0, "must be > 0"),
            ("A_NL", self.A_NL > 0, "must be > 0"),
            ("alpha_L", self.alpha_L >= 2, "must be >= 2"),
            ("alpha_NL", self.alpha_NL >= self.alpha_L, "must be >= alpha_L"),
            ("beta", self.beta >= 0, "must be >= 0"),
            ("N0", self.N0 > 0, "must be > 0"),
            ("gamma0", self.gamma0 > 0, "must be > 0"),
            ("F", self.F >= 0, "must be >= 0"),
            ("C_max", 0 <= self.C_max <= self.F, "must satisfy 0 <= C_max <= F"),
            ("gamma_p", self.gamma_p >= 0, "must be >= 0"),
            ("s_bits", self.s_bits > 0, "must be > 0"),
            ("omega_ca", self.omega_ca >= 0, "must be >= 0"),
            ("P_s_fc", self.P_s_fc < self.P_s_max, "circuit power must stay below P_s_max"),
            (
                "P_m_fc",
                self.P_m_fc + self.omega_ca * self.s_bits * self.F < self.P_m_max,
                "circuit plus full-library cache power must stay below P_m_max",
            ),
        ]
        for key, ok, message in checks:
            if not ok:
                raise ConfigError(key, message)

    # ---------------------------------------------------------------
    # Derived views
    # ---------------------------------------------------------------
    def physical_key(self) -> tuple:
        """
        Fields that change coverage for fixed transmit powers.

        Caching-only fields (F, C_max, gamma_p, s_bits, omega_ca) and the power
        budget are absent: they act on coverage only through P_s^tr / P_m^tr,
        which the coverage memo keys on explicitly.
        """
        n = self.numeric
        return (
            self.lambda_m, self.lambda_s, self.B_m, self.B_s, self.M_gain, self.m_gain,
            self.theta, self.A_L, self.A_NL, self.alpha_L, self.alpha_NL, self.beta, self.N0,
            n.quad_rtol, n.quad_atol, n.quad_max_intervals, n.void_cutoff, n.tail_cutoff,
            n.inner_panels, n.inner_order,
        )

    def as_flat_dict(self) -> Dict[str, Any]:
        """Internal (linear) values keyed as in the config file, numeric fields prefixed."""
        flat = {k: v for k, v in asdict(self).items() if k != "numeric"}
        for k, v in asdict(self.numeric).items():
            flat[f"numeric.{k}"] = v
        return flat

    def with_overrides(self, **overrides) -> "SystemConfig":
        numeric_overrides = {k[len("numeric."):]: v for k, v in overrides.items() if k.startswith("numeric.")}
        plain = {k: v for k, v in overrides.items() if not k.startswith("numeric.")}
        numeric = replace(self.numeric, **numeric_overrides) if numeric_overrides else self.numeric
        return replace(self, numeric=numeric, **plain)


# -------------------------------------------------------------------
# Parsing
# -------------------------------------------------------------------
# key -> converter from boundary units to internal units
_BOUNDARY_CONVERTERS = {
    "P_m_max": dbm_to_watts,
    "P_s_max": dbm_to_watts,
    "P_m_fc": dbm_to_watts,
    "P_s_fc": dbm_to_watts,
    "N0": dbm_to_watts,
    "M_gain": db_to_linear,
    "m_gain": db_to_linear,
    "gamma0": db_to_linear,
    "theta": math.radians,
}
_INTEGER_KEYS = {"F", "C_max", "numeric.quad_max_intervals", "numeric.inner_panels",
                 "numeric.inner_order", "numeric.seed"}


def _parse_number(key: str, raw: Optional[str]) -> Union[int, float]:
    if raw is None or not str(raw).strip():
        raise ConfigError(key, "missing value")
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(key, f"not a number: {raw!r}")
    if not math.isfinite(value):
        raise ConfigError(key, f"must be finite, got {raw!r}")
    if key in _INTEGER_KEYS:
        if int(value) != value:
            raise ConfigError(key, f"must be an integer, got {raw!r}")
        return int(value)
    return value


def parse_system_config(values: Mapping[str, Optional[str]]) -> SystemConfig:
    """
    Build a SystemConfig from boundary-unit key/value pairs.

    Parameters:
    - values (Mapping[str, str]): keys named as the SystemConfig fields, numeric
      settings as `numeric.<field>`. Missing keys keep their defaults.

    Returns:
    - SystemConfig: validated configuration in internal units.

    Raises ConfigError naming the first unknown key or violated invariant.
    """
    plain_keys = {f.name for f in fields(SystemConfig) if f.name != "numeric"}
    numeric_keys = {f.name for f in fields(NumericConfig)}

    plain: Dict[str, Any] = {}
    numeric: Dict[str, Any] = {}
    for key, raw in values.items():
        if key.startswith("numeric."):
            name = key[len("numeric."):]
            if name not in numeric_keys:
                raise ConfigError(key, "unknown key")
            numeric[name] = _parse_number(key, raw)
        elif key in plain_keys:
            value = _parse_number(key, raw)
            converter = _BOUNDARY_CONVERTERS.get(key)
            plain[key] = converter(value) if converter else value
        else:
            raise ConfigError(key, "unknown key")

    return SystemConfig(numeric=NumericConfig(**numeric), **plain)


def default_config_path() -> Path:
    return BUNDLED_CONFIG_DIR / CONFIG_FILE_NAME


def default_config_text() -> str:
    return default_config_path().read_text(encoding="utf-8")


def resolve_config_path(config_path: Optional[Union[str, Path]] = None) -> Path:
    """
    Locate the config file: explicit path, then $HETNETCACHE_CONFIG, then the
    user's ~/.hetnetcache copy, then the bundled defaults.
    """
    if config_path:
        path = Path(config_path).expanduser()
        if not path.exists():
            raise FileNotFoundError(f"Config file not found: {path}")
        return path

    env_path = os.getenv("HETNETCACHE_CONFIG")
    candidates = []
    if env_path:
        candidates.append(Path(os.path.expandvars(env_path)).expanduser())
    candidates.append(CONFIG_DIR / CONFIG_FILE_NAME)
    candidates.append(default_config_path())
    for path in candidates:
        if path.exists():
            return path
    raise FileNotFoundError(f"{CONFIG_FILE_NAME} not found in {', '.join(str(p) for p in candidates)}")


def load_system_config(config_path: Optional[Union[str, Path]] = None) -> SystemConfig:
    path = resolve_config_path(config_path)
    cfg = parse_system_config(dotenv_values(path))
    get_logger(__name__).info("Loaded system config from %s", path)
    return cfg


def load_environment() -> Optional[Path]:
    """
    Load a .env from next to the package (development) or ~/.hetnetcache (installed).
    Returns the file loaded, or None when only the process environment applies.
    """
    dev_env = Path(__file__).parent / ".env"
    prod_env = CONFIG_DIR / ".env"
    for env_path in (dev_env, prod_env):
        if env_path.exists():
            load_dotenv(env_path)
            return env_path
    return None


def default_seed(fallback: int = DEFAULT_SEED) -> int:
    """$HETNETCACHE_SEED when set, else `fallback` (the config file's numeric.seed)."""
    raw = os.getenv("HETNETCACHE_SEED")
    if raw is None:
        return fallback
    try:
        return int(raw)
    except ValueError:
        raise ConfigError("HETNETCACHE_SEED", f"not an integer: {raw!r}")


def default_out_dir() -> Path:
    return Path(os.getenv("HETNETCACHE_OUT_DIR", "results")).expanduser()


if __name__ == "__main__":
    cfg = load_system_config()
    for key, value in cfg.as_flat_dict().items():
        print(f"{key} = {value!r}")
