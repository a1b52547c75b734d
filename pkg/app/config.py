"""
Experiment configuration
Runtime settings come from the environment (optionally a .env file); experiment
manifests are INI files with one section per module and a versioned [meta].
"""

import configparser
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from app.errors import ConfigError
from app.schemas.params import (
    CapacityParams,
    ChannelParams,
    EavesdropperStrategy,
    MappingParams,
    OamConfig,
    ProtocolConfig,
    SqueezingParams,
)
from app.utils.logging_setup import get_logger

load_dotenv()

logger = get_logger(__name__)

CONFIG_VERSION = 1
KINDS = ("session", "capacity", "estimate", "codec")


# =============================================================================
# RUNTIME SETTINGS
# =============================================================================

@dataclass(frozen=True)
class Settings:
    seed: Optional[int]
    output_dir: Path
    jobs: int
    log_level: str


def get_settings() -> Settings:
    """Environment settings: QSDC_SEED, QSDC_OUTPUT_DIR, QSDC_JOBS, QSDC_LOG_LEVEL."""
    raw_seed = os.getenv("QSDC_SEED")
    try:
        seed = int(raw_seed) if raw_seed not in (None, "") else None
        jobs = int(os.getenv("QSDC_JOBS", "1"))
    except ValueError as e:
        raise ConfigError(f"invalid QSDC_* environment value: {e}") from e
    return Settings(
        seed=seed,
        output_dir=Path(os.getenv("QSDC_OUTPUT_DIR", "results")),
        jobs=max(jobs, 1),
        log_level=os.getenv("QSDC_LOG_LEVEL", "INFO"),
    )


# =============================================================================
# FILE SCHEMA
# =============================================================================

def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_optional_float(text: str) -> Optional[float]:
    return None if text.strip().lower() in ("", "none") else float(text)


def _parse_optional_str(text: str) -> Optional[str]:
    return None if text.strip().lower() in ("", "none") else text.strip()


def _parse_charges(text: str) -> Tuple[int, ...]:
    return tuple(int(part) for part in text.replace(" ", "").split(",") if part)


# section -> key -> parser; float and int keys are the sweepable ones
SCHEMA: Dict[str, Dict[str, Callable[[str], Any]]] = {
    "meta": {"config_version": int, "seed": int},
    "squeezing": {"r": float},
    "channel": {
        "distance_km": float,
        "alpha_db_per_km": float,
        "transmittance": _parse_optional_float,
        "excess_noise": float,
        "eta": float,
        "v_el": float,
        "noise_model": str,
    },
    "eavesdropper": {"kind": str, "fraction": float},
    "oam": {"n_modes": int, "topological_charges": _parse_charges, "crosstalk": float},
    "mapping": {"bits_per_block": int, "variance": float, "clamp": _parse_optional_float, "tail_mode": str},
    "codec": {"k": int, "n": int},
    "protocol": {
        "blocks": int,
        "block_bits": int,
        "check_fraction": float,
        "auth_fraction": float,
        "pilot_fraction": float,
        "min_check_slots": int,
        "epsilon_pe": float,
        "modulated_quadrature": str,
        "security_sign": str,
        "whitening": _parse_bool,
        "impostor_bob": _parse_bool,
        "masking": _parse_bool,
    },
    "capacity": {
        "modulation_variance": float,
        "q_b": float,
        "q_e": float,
        "rep_rate_hz": float,
        "distance_start": float,
        "distance_stop": float,
        "distance_step": float,
    },
    "estimate": {
        "samples_csv": _parse_optional_str,
        "vacuum_csv": _parse_optional_str,
        "n_samples": int,
        "n_vacuum": int,
        "epsilon_pe": float,
    },
    "codec_roundtrip": {"frames": int, "max_k": int, "max_n": int, "seeds": int},
    "sweep": {"key": str, "start": float, "stop": float, "step": float},
}

NUMERIC_PARSERS = (float, int, _parse_optional_float)


class CapacityGrid(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    distance_start: float = Field(0.0, ge=0.0)
    distance_stop: float = Field(100.0, ge=0.0)
    distance_step: float = Field(1.0, gt=0.0)

    def distances(self) -> np.ndarray:
        return inclusive_grid(self.distance_start, self.distance_stop, self.distance_step)


class EstimateSettings(BaseModel):
    """CSV inputs, or synthetic data from the configured channel when both paths are unset."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    samples_csv: Optional[str] = None
    vacuum_csv: Optional[str] = None
    n_samples: int = Field(1_000_000, ge=1)
    n_vacuum: int = Field(1_000_000, ge=1)
    epsilon_pe: float = Field(0.01, gt=0.0, lt=1.0)

    @property
    def synthesize(self) -> bool:
        return self.samples_csv is None and self.vacuum_csv is None


class CodecRoundtripSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    frames: int = Field(10_000, ge=1)
    max_k: int = Field(4, ge=1)
    max_n: int = Field(8, ge=2)
    seeds: int = Field(200, ge=1)


@dataclass(frozen=True)
class SweepSpec:
    section: str
    key: str
    start: float
    stop: float
    step: float

    @property
    def name(self) -> str:
        return f"{self.section}.{self.key}"

    def values(self) -> List[Union[int, float]]:
        grid = inclusive_grid(self.start, self.stop, self.step)
        if SCHEMA[self.section][self.key] is int:
            return [int(round(v)) for v in grid]
        return [float(v) for v in grid]


def inclusive_grid(start: float, stop: float, step: float) -> np.ndarray:
    """start, start+step, ... up to stop within half a step."""
    if not step > 0:
        raise ConfigError(f"grid step must be > 0, got {step}")
    count = int(math.floor((stop - start) / step + 0.5)) + 1
    if count < 1:
        raise ConfigError(f"empty grid {start}:{stop}:{step}")
    return start + step * np.arange(count)


def parse_sweep(text: str) -> SweepSpec:
    """Parse 'section.key=START:STOP:STEP'."""
    try:
        name, bounds = text.split("=", 1)
        section, key = name.strip().split(".", 1)
        start, stop, step = (float(v) for v in bounds.split(":"))
    except ValueError as e:
        raise ConfigError(f"sweep must read section.key=START:STOP:STEP, got {text!r}") from e
    return make_sweep(section, key, start, stop, step)


def make_sweep(section: str, key: str, start: float, stop: float, step: float) -> SweepSpec:
    parser = SCHEMA.get(section, {}).get(key)
    if parser is None or parser not in NUMERIC_PARSERS or section in ("meta", "sweep"):
        raise ConfigError(f"sweep key {section}.{key} is not a numeric config key")
    if not step > 0:
        raise ConfigError(f"sweep step must be > 0, got {step}")
    return SweepSpec(section, key, float(start), float(stop), float(step))


# =============================================================================
# EXPERIMENT
# =============================================================================

@dataclass
class ExperimentSpec:
    """Parsed manifest plus command-line overrides."""

    kind: str
    raw: Dict[str, Dict[str, Any]]
    output_dir: Path
    seed: int
    jobs: int = 1
    sweep: Optional[SweepSpec] = None
    source: Optional[Path] = None
    protocol: ProtocolConfig = field(init=False)
    capacity: CapacityParams = field(init=False)
    capacity_grid: CapacityGrid = field(init=False)
    estimate: EstimateSettings = field(init=False)
    codec_roundtrip: CodecRoundtripSettings = field(init=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        self.rebuild()

    def rebuild(self) -> None:
        models = build_models(self.raw, self.seed)
        self.protocol = models["protocol"]
        self.capacity = models["capacity"]
        self.capacity_grid = models["capacity_grid"]
        self.estimate = models["estimate"]
        self.codec_roundtrip = models["codec_roundtrip"]

    def with_override(self, section: str, key: str, value: Any) -> "ExperimentSpec":
        """Copy with one config value replaced (sweep points)."""
        raw = {name: dict(values) for name, values in self.raw.items()}
        raw.setdefault(section, {})[key] = value
        return ExperimentSpec(self.kind, raw, self.output_dir, self.seed, self.jobs, None, self.source)


def _validated(name: str, factory: Callable[..., Any], values: Dict[str, Any]) -> Any:
    try:
        return factory(**values)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"])
        key = f"{name}.{location}" if location else name
        raise ConfigError(f"invalid value for {key}: {first['msg']}") from e


def build_models(raw: Dict[str, Dict[str, Any]], seed: int) -> Dict[str, Any]:
    """Validated parameter models from parsed sections."""

    def section(name: str) -> Dict[str, Any]:
        return dict(raw.get(name, {}))

    squeezing = _validated("squeezing", SqueezingParams, section("squeezing"))
    channel = _validated("channel", ChannelParams, section("channel"))
    eavesdropper = _validated("eavesdropper", EavesdropperStrategy, section("eavesdropper"))
    oam = _validated("oam", OamConfig, section("oam"))
    mapping = _validated("mapping", MappingParams, section("mapping"))
    codec = section("codec")
    protocol_values = section("protocol")
    if "k" in codec:
        protocol_values["codec_k"] = codec.pop("k")
    if "n" in codec:
        protocol_values["codec_n"] = codec.pop("n")
    protocol = _validated(
        "protocol",
        ProtocolConfig,
        dict(
            squeezing=squeezing,
            channel=channel,
            eavesdropper=eavesdropper,
            oam=oam,
            mapping=mapping,
            seed=seed,
            **protocol_values,
        ),
    )

    capacity_values = section("capacity")
    grid_values = {k: capacity_values.pop(k) for k in list(capacity_values) if k.startswith("distance_")}
    capacity = _validated(
        "capacity",
        CapacityParams,
        dict(channel=channel, n_modes=oam.n_modes, **capacity_values),
    )
    return {
        "protocol": protocol,
        "capacity": capacity,
        "capacity_grid": _validated("capacity", CapacityGrid, grid_values),
        "estimate": _validated("estimate", EstimateSettings, section("estimate")),
        "codec_roundtrip": _validated("codec_roundtrip", CodecRoundtripSettings, section("codec_roundtrip")),
    }


def _line_of(lines: List[str], section: str, key: Optional[str] = None) -> Optional[int]:
    current = None
    for number, line in enumerate(lines, start=1):
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1].strip()
            if key is None and current == section:
                return number
        elif key is not None and current == section and stripped.split("=", 1)[0].strip() == key:
            return number
    return None


def _where(path: Path, lines: List[str], section: str, key: Optional[str] = None) -> str:
    number = _line_of(lines, section, key)
    return f"{path}:{number}" if number else str(path)


def parse_config_file(path: Union[str, Path]) -> Dict[str, Dict[str, Any]]:
    """
    Read and type-check an INI manifest.

    Raises:
        ConfigError: unreadable file, unknown section or key, bad value,
            missing or unsupported config_version
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    lines = text.splitlines()

    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as e:
        raise ConfigError(f"cannot parse {path}: {e}") from e

    raw: Dict[str, Dict[str, Any]] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{_where(path, lines, section)}: unknown section [{section}]")
        raw[section] = {}
        for key, value in parser.items(section):
            convert = SCHEMA[section].get(key)
            if convert is None:
                raise ConfigError(f"{_where(path, lines, section, key)}: unknown key {section}.{key}")
            try:
                raw[section][key] = convert(value)
            except ValueError as e:
                raise ConfigError(f"{_where(path, lines, section, key)}: bad value for {section}.{key}: {e}") from e

    version = raw.get("meta", {}).get("config_version")
    if version is None:
        raise ConfigError(f"{path}: missing required key meta.config_version")
    if version != CONFIG_VERSION:
        raise ConfigError(f"{_where(path, lines, 'meta', 'config_version')}: unsupported config_version {version}")
    logger.debug(f"Parsed config {path} with sections {sorted(raw)}")
    return raw


def load_experiment(
    kind: str,
    config_path: Optional[Union[str, Path]] = None,
    seed: Optional[int] = None,
    output_dir: Optional[Union[str, Path]] = None,
    jobs: Optional[int] = None,
    sweep: Optional[str] = None,
) -> ExperimentSpec:
    """
    Merge manifest, environment and command line.

    Seed precedence: argument > QSDC_SEED > [meta] seed > ProtocolConfig default.
    Sweep precedence: argument > [sweep] section.
    """
    settings = get_settings()
    raw = parse_config_file(config_path) if config_path else {"meta": {"config_version": CONFIG_VERSION}}

    chosen_seed = seed if seed is not None else settings.seed
    if chosen_seed is None:
        chosen_seed = raw.get("meta", {}).get("seed", ProtocolConfig.model_fields["seed"].default)
    if not 0 <= int(chosen_seed) <= 2**64 - 1:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {chosen_seed}")

    sweep_spec = None
    if sweep:
        sweep_spec = parse_sweep(sweep)
    elif "sweep" in raw:
        values = raw["sweep"]
        missing = [k for k in ("key", "start", "stop", "step") if k not in values]
        if missing:
            raise ConfigError(f"[sweep] is missing keys {missing}")
        try:
            section, key = values["key"].split(".", 1)
        except ValueError as e:
            raise ConfigError(f"sweep.key must read section.key, got {values['key']!r}") from e
        sweep_spec = make_sweep(section, key, values["start"], values["stop"], values["step"])

    return ExperimentSpec(
        kind=kind,
        raw=raw,
        output_dir=Path(output_dir) if output_dir is not None else settings.output_dir,
        seed=int(chosen_seed),
        jobs=max(int(jobs if jobs is not None else settings.jobs), 1),
        sweep=sweep_spec,
        source=Path(config_path) if config_path else None,
    )
