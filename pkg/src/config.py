import logging
import math
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.errors import ConfigError

load_dotenv()

ADVGAN_LOG = os.getenv("ADVGAN_LOG", "info")
ADVGAN_WORKERS = int(os.getenv("ADVGAN_WORKERS", "4"))
ADVGAN_RUNS_DIR = Path(os.getenv("ADVGAN_RUNS_DIR", "runs"))

_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}

Variant = Literal["vanilla", "wegan", "gewegan", "gimgan", "gewegimgan"]

# Defaults for each regime: weGAN eta_gen=0.1, geweGAN eta_gen=eta_dis=0.9, gimGAN rho_gen=0.9.
VARIANT_DEFAULTS: Dict[str, Dict[str, float]] = {
    "vanilla": {"eta_gen": 0.0, "eta_dis": 0.0, "rho_gen": 1.0},
    "wegan": {"eta_gen": 0.1, "eta_dis": 0.0, "rho_gen": 1.0},
    "gewegan": {"eta_gen": 0.9, "eta_dis": 0.9, "rho_gen": 1.0},
    "gimgan": {"eta_gen": 0.0, "eta_dis": 0.0, "rho_gen": 0.9},
    "gewegimgan": {"eta_gen": 0.9, "eta_dis": 0.9, "rho_gen": 0.9},
}
WEIGHTED_VARIANTS = ("wegan", "gewegan", "gewegimgan")


def setup_logging(level: Optional[str] = None) -> None:
    """Configure the root logger from ADVGAN_LOG (error|info|debug)."""
    name = (level or ADVGAN_LOG).lower()
    if name not in _LOG_LEVELS:
        raise ConfigError(f"ADVGAN_LOG must be one of {sorted(_LOG_LEVELS)}, got '{name}'")
    logging.basicConfig(
        level=_LOG_LEVELS[name],
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )


class TrainConfig(BaseModel):
    """All hyper-parameters of a training run."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    variant: Variant = "vanilla"
    eta_gen: float = Field(0.0, ge=0.0)
    eta_dis: float = Field(0.0, ge=0.0)
    rho_gen: float = Field(1.0, ge=0.0, le=1.0)
    lambda_c: float = Field(0.3, ge=0.0)
    lambda_e: float = Field(1.0, ge=0.0)
    lr_g: float = Field(0.0002, gt=0.0)
    lr_d: float = Field(0.0001, gt=0.0)
    batch_size: int = Field(1, ge=1)
    iterations: int = Field(5000, ge=0)
    seed: int = Field(0, ge=0)
    width_mult: float = Field(0.125, gt=0.0, le=1.0)
    patch_bins: int = Field(32, ge=16)
    patch_frames: int = Field(128, ge=16)
    deterministic: bool = True
    checkpoint_every: int = Field(1000, ge=1)
    log_every: int = Field(100, ge=1)
    norm_scope: Literal["pooled", "domain"] = "pooled"

    @model_validator(mode="before")
    @classmethod
    def _fill_variant_defaults(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        data = dict(data)
        variant = data.get("variant", "vanilla")
        for key, value in VARIANT_DEFAULTS.get(variant, {}).items():
            data.setdefault(key, value)
        data.setdefault("batch_size", 4 if variant in WEIGHTED_VARIANTS else 1)
        return data

    @model_validator(mode="after")
    def _check_geometry(self) -> "TrainConfig":
        # Four stride-2 discriminator stages fix the patch geometry.
        if self.patch_bins % 16 or self.patch_frames % 16:
            raise ValueError("patch_bins and patch_frames must be divisible by 16")
        return self


class ToyDomainSpec(BaseModel):
    """Synthetic envelope domain: two Gaussian formant bumps over a flat floor."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    mu1: float
    mu2: float
    sigma: float = Field(2.0, gt=0.0)
    amp_low: float = 2.0
    amp_high: float = 3.0
    floor: float = -2.0
    mod_rate: float = Field(0.02, ge=0.0)
    mod_depth: float = Field(0.3, ge=0.0, lt=1.0)
    center_jitter: float = Field(0.4, ge=0.0, lt=0.5)
    n_bins: int = Field(32, ge=2)

    @model_validator(mode="after")
    def _check_centres(self) -> "ToyDomainSpec":
        if not 0 < self.mu1 < self.mu2 < self.n_bins:
            raise ValueError("need 0 < mu1 < mu2 < n_bins")
        if self.amp_low > self.amp_high:
            raise ValueError("amp_low must not exceed amp_high")
        return self


TOY_X = ToyDomainSpec(mu1=6, mu2=20)
TOY_Y = ToyDomainSpec(mu1=10, mu2=24)
TOY_PATCHES = 200

_PATH_KEYS = ("x", "y", "out")
_TOY_SHARED = ("sigma", "amp_low", "amp_high", "floor", "mod_rate", "mod_depth", "center_jitter")


class RunConfig(BaseModel):
    """Resolved configuration of one CLI invocation."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    train: TrainConfig = TrainConfig()
    toy_x: ToyDomainSpec = TOY_X
    toy_y: ToyDomainSpec = TOY_Y
    toy_patches: int = Field(TOY_PATCHES, ge=1)
    paths: Dict[str, str] = {}

    def lines(self) -> List[str]:
        """Fully resolved config as key=value lines (the config file format)."""
        out = train_config_lines(self.train)
        for key in _TOY_SHARED:
            out.append(f"toy_{key}={_fmt(getattr(self.toy_x, key))}")
        out += [
            f"toy_x_mu1={_fmt(self.toy_x.mu1)}",
            f"toy_x_mu2={_fmt(self.toy_x.mu2)}",
            f"toy_y_mu1={_fmt(self.toy_y.mu1)}",
            f"toy_y_mu2={_fmt(self.toy_y.mu2)}",
            f"toy_patches={self.toy_patches}",
        ]
        out += [f"{k}={v}" for k, v in sorted(self.paths.items())]
        return out


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config_text(text: str) -> Dict[str, str]:
    """Parse key=value lines; '#' starts a comment."""
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got '{raw.strip()}'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        values[key] = value
    return values


def load_config_file(path: Path) -> Dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    return parse_config_text(text)


def resolve_run_config(
    values: Optional[Dict[str, Any]] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> RunConfig:
    """Merge file values and flag overrides (flags win) into a validated RunConfig."""
    merged: Dict[str, Any] = dict(values or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})

    train: Dict[str, Any] = {}
    shared: Dict[str, Any] = {}
    per_domain: Dict[str, Dict[str, Any]] = {"x": {}, "y": {}}
    paths: Dict[str, str] = {}
    toy_patches: Any = TOY_PATCHES

    for key, value in merged.items():
        if key in _PATH_KEYS:
            paths[key] = str(value)
        elif key == "toy_patches":
            toy_patches = value
        elif key.startswith("toy_x_") or key.startswith("toy_y_"):
            per_domain[key[4]][key[6:]] = value
        elif key.startswith("toy_"):
            shared[key[4:]] = value
        else:
            train[key] = value

    try:
        toy_x = ToyDomainSpec(**{**TOY_X.model_dump(), **shared, **per_domain["x"]})
        toy_y = ToyDomainSpec(**{**TOY_Y.model_dump(), **shared, **per_domain["y"]})
        return RunConfig(
            train=TrainConfig(**train),
            toy_x=toy_x,
            toy_y=toy_y,
            toy_patches=toy_patches,
            paths=paths,
        )
    except ValidationError as e:
        raise ConfigError(_describe_validation(e)) from e


def train_config_lines(config: TrainConfig) -> List[str]:
    return [f"{k}={_fmt(v)}" for k, v in config.model_dump().items()]


def train_config_from_lines(lines: List[str]) -> TrainConfig:
    """Rebuild a TrainConfig from a key=value snapshot (checkpoints store one)."""
    values = parse_config_text("\n".join(lines))
    known = set(TrainConfig.model_fields)
    try:
        return TrainConfig(**{k: v for k, v in values.items() if k in known})
    except ValidationError as e:
        raise ConfigError(_describe_validation(e)) from e


def _describe_validation(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        loc = ".".join(str(p) for p in item.get("loc", ()))
        parts.append(f"{loc or 'config'}: {item.get('msg')}")
    return "; ".join(parts)


def scaled_width(width: int, mult: float) -> int:
    return max(1, math.ceil(width * mult))


def patch_shape(config: TrainConfig) -> Tuple[int, int]:
    return config.patch_bins, config.patch_frames
