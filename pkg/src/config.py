import logging
from dataclasses import asdict, dataclass, replace
from typing import Any, Dict, Optional

from dotenv import dotenv_values

from .exceptions import ConfigError

logger = logging.getLogger(__name__)

ONLINE = "online"
NEAR_ONLINE = "near_online"
LOCATION_AWARE = "location_aware"
NAIVE = "naive"

MODES = (ONLINE, NEAR_ONLINE)
BUFFER_MODES = (LOCATION_AWARE, NAIVE)


# 1. The Dataclass defines the tracker settings
@dataclass(frozen=True)
class TrackerConfig:
    mode: str = NEAR_ONLINE
    clip_length: Optional[int] = None  # 2 near-online, 1 online
    overlap: Optional[int] = None  # 1 near-online, 0 online
    lam: float = 0.8
    temperature: float = 1.0
    tau: Optional[int] = None  # 10 location_aware, 1 naive
    alpha: float = 0.3
    alpha_stitch: float = 0.0
    buffer_mode: str = LOCATION_AWARE
    rng_seed: int = 0
    use_stitching: Optional[bool] = None
    use_location: Optional[bool] = None
    use_appearance: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.buffer_mode not in BUFFER_MODES:
            raise ConfigError(f"buffer_mode must be one of {BUFFER_MODES}, got {self.buffer_mode!r}")

        if self.mode == ONLINE:
            if self.clip_length not in (None, 1) or self.overlap not in (None, 0):
                raise ConfigError(
                    f"online mode processes clips of length one without overlap "
                    f"(got clip_length={self.clip_length}, overlap={self.overlap})"
                )
            if self.use_stitching:
                raise ConfigError("online mode cannot use video stitching")
            object.__setattr__(self, "clip_length", 1)
            object.__setattr__(self, "overlap", 0)
        else:
            if self.clip_length is None:
                object.__setattr__(self, "clip_length", 2)
            if self.overlap is None:
                object.__setattr__(self, "overlap", 1)
            if self.overlap < 1 or self.clip_length <= self.overlap:
                raise ConfigError(
                    f"near_online needs overlap >= 1 and clip_length > overlap "
                    f"(got clip_length={self.clip_length}, overlap={self.overlap})"
                )

        if self.tau is None:
            object.__setattr__(self, "tau", 10 if self.buffer_mode == LOCATION_AWARE else 1)
        if self.tau < 0:
            raise ConfigError(f"tau must be >= 0, got {self.tau}")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lam must lie in [0, 1], got {self.lam}")
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        if not (self.use_appearance or self.location_enabled):
            raise ConfigError("at least one of appearance and location features must be enabled")

    @property
    def stride(self) -> int:
        return self.clip_length - self.overlap

    @property
    def stitching_enabled(self) -> bool:
        if self.mode == ONLINE:
            return False
        if self.use_stitching is not None:
            return self.use_stitching
        return self.buffer_mode == LOCATION_AWARE

    @property
    def location_enabled(self) -> bool:
        if self.use_location is not None:
            return self.use_location
        return self.buffer_mode == LOCATION_AWARE

    def with_overrides(self, **overrides) -> "TrackerConfig":
        """Copy with `overrides`; layout and tau re-resolve when their mode changes."""
        if "mode" in overrides:
            overrides.setdefault("clip_length", None)
            overrides.setdefault("overlap", None)
        if "buffer_mode" in overrides:
            overrides.setdefault("tau", None)
        return replace(self, **overrides)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


# 2. The Map connects the config-file keys to the dataclass attributes
CONFIG_KEY_TO_ATTRIBUTE_MAP = {
    "MODE": "mode",
    "CLIP_LENGTH": "clip_length",
    "OVERLAP": "overlap",
    "LAMBDA": "lam",
    "TEMPERATURE": "temperature",
    "TAU": "tau",
    "ALPHA": "alpha",
    "ALPHA_STITCH": "alpha_stitch",
    "BUFFER_MODE": "buffer_mode",
    "RNG_SEED": "rng_seed",
    "USE_STITCHING": "use_stitching",
    "USE_LOCATION": "use_location",
    "USE_APPEARANCE": "use_appearance",
}

_FIELD_TYPES = {
    "mode": str,
    "clip_length": int,
    "overlap": int,
    "lam": float,
    "temperature": float,
    "tau": int,
    "alpha": float,
    "alpha_stitch": float,
    "buffer_mode": str,
    "rng_seed": int,
    "use_stitching": bool,
    "use_location": bool,
    "use_appearance": bool,
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(key: str, attribute: str, raw: Optional[str]):
    kind = _FIELD_TYPES[attribute]
    if raw is None or raw.strip() == "":
        raise ConfigError(f"{key} has no value")
    text = raw.strip()
    try:
        if kind is bool:
            lowered = text.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(text)
        return kind(text)
    except ValueError:
        raise ConfigError(f"{key}={text!r} is not a valid {kind.__name__}") from None


def config_from_mapping(values: Dict[str, Optional[str]]) -> TrackerConfig:
    kwargs = {}
    for key, raw in values.items():
        attribute = CONFIG_KEY_TO_ATTRIBUTE_MAP.get(key.strip().upper())
        if attribute is None:
            raise ConfigError(f"Unknown config key: {key}")
        kwargs[attribute] = _coerce(key, attribute, raw)
    return TrackerConfig(**kwargs)


def load_config(path) -> TrackerConfig:
    """Read a flat KEY=value file. The process environment is never consulted."""
    logger.info(f"Loading tracker config from: {path}")
    try:
        with open(path, encoding="utf-8") as handle:
            values = dotenv_values(stream=handle)
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e}") from e
    config = config_from_mapping(values)
    logger.debug(f"Resolved config: {config}")
    return config


def dump_config(config: TrackerConfig) -> str:
    lines = []
    for key, attribute in CONFIG_KEY_TO_ATTRIBUTE_MAP.items():
        value = getattr(config, attribute)
        if value is None:
            continue
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"


# 3. The Headers list defines the sweep/bench table columns and their order
SWEEP_HEADERS = ["tau", "alpha", "aq_proxy"]
BENCH_HEADERS = [
    "scenario", "buffer_mode", "tau", "id_switches", "aq_proxy",
    "matching_space_avg", "matching_space_max",
]
