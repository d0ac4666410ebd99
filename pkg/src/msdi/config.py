"""Pipeline configuration (one YAML document)."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .copulas import DEFAULT_BOOTSTRAP, CopulaFamily
from .distributions import Family
from .errors import DataIOError, ValidationError
from .ingestion import FavorableBounds

__all__ = ["PipelineConfig", "load_config"]

_KNOWN = {
    "input",
    "rainfall_candidates",
    "temperature_candidates",
    "gmm_components",
    "copula_candidates",
    "bootstrap_n",
    "windows",
    "thresholds",
    "spi_thresholds",
    "spi_per_month",
    "seed",
    "output_dir",
    "cache_dir",
    "events",
    "allow_rejected",
    "clamp",
    "favorable",
}


@dataclass
class PipelineConfig:
    seed: int
    input_csv: Path | None = None
    remote: dict | None = None
    rainfall_candidates: list = field(default_factory=lambda: [Family.BETA, Family.GAMMA, Family.HALF_GAUSSIAN])
    temperature_candidates: list = field(default_factory=lambda: [Family.GAUSSIAN_MIXTURE])
    gmm_components: int = 2
    copula_candidates: list = field(default_factory=lambda: [CopulaFamily.FRANK, CopulaFamily.FGM])
    bootstrap_n: int = DEFAULT_BOOTSTRAP
    windows: list = field(default_factory=lambda: [3, 6, 9, 12])
    thresholds: dict = field(default_factory=dict)
    spi_thresholds: dict = field(default_factory=dict)
    spi_per_month: bool = False
    output_dir: Path = Path("msdi-out")
    cache_dir: Path | None = None
    events: Path | None = None
    allow_rejected: bool = False
    clamp: float = 5.0
    favorable: FavorableBounds = field(default_factory=FavorableBounds)
    raw: dict = field(default_factory=dict, repr=False)

    def validate(self):
        if isinstance(self.seed, bool) or not isinstance(self.seed, int):
            raise ValidationError("config needs an integer 'seed'")
        if (self.input_csv is None) == (self.remote is None):
            raise ValidationError("config input must name exactly one of 'csv' or 'remote'")
        if not self.windows:
            raise ValidationError("'windows' must be non-empty")
        if any(int(w) < 1 for w in self.windows):
            raise ValidationError("windows must be positive month counts")
        if self.bootstrap_n < 100:
            raise ValidationError("'bootstrap_n' must be >= 100")
        if not self.rainfall_candidates or not self.temperature_candidates or not self.copula_candidates:
            raise ValidationError("candidate lists must be non-empty")
        if self.gmm_components < 1:
            raise ValidationError("'gmm_components' must be >= 1")
        if not self.clamp > 0:
            raise ValidationError("'clamp' must be positive")
        return self

    @property
    def sha256(self) -> str:
        """Hash of the settings that shape results (output and cache locations excluded)."""
        doc = {k: v for k, v in self.raw.items() if k not in ("output_dir", "cache_dir")}
        doc["seed"] = self.seed
        return hashlib.sha256(json.dumps(doc, sort_keys=True, default=str).encode()).hexdigest()

    @classmethod
    def from_dict(cls, doc: dict, base: Path | None = None) -> "PipelineConfig":
        if not isinstance(doc, dict):
            raise ValidationError("config must be a mapping")
        unknown = set(doc) - _KNOWN
        if unknown:
            raise ValidationError(f"unknown config keys: {', '.join(sorted(unknown))}")
        base = base or Path.cwd()

        def resolve(p):
            p = Path(p).expanduser()
            return p if p.is_absolute() else base / p

        inp = doc.get("input") or {}
        if not isinstance(inp, dict):
            raise ValidationError("'input' must be a mapping with 'csv' or 'remote'")
        kwargs = {}
        try:
            if "csv" in inp:
                kwargs["input_csv"] = resolve(inp["csv"])
            if "remote" in inp:
                remote = dict(inp["remote"])
                for key in ("latitude", "longitude", "start", "end"):
                    if key not in remote:
                        raise ValidationError(f"remote input needs '{key}'")
                kwargs["remote"] = remote
            for key, parse in (
                ("rainfall_candidates", Family.parse),
                ("temperature_candidates", Family.parse),
                ("copula_candidates", CopulaFamily.parse),
            ):
                if key in doc:
                    kwargs[key] = [parse(x) for x in doc[key]]
            for key in ("gmm_components", "bootstrap_n"):
                if key in doc:
                    kwargs[key] = int(doc[key])
            if "windows" in doc:
                kwargs["windows"] = [int(w) for w in doc["windows"]]
            for key in ("thresholds", "spi_thresholds"):
                if key in doc:
                    kwargs[key] = {int(k): tuple(float(x) for x in v) for k, v in (doc[key] or {}).items()}
            for key in ("spi_per_month", "allow_rejected"):
                if key in doc:
                    kwargs[key] = bool(doc[key])
            if "clamp" in doc:
                kwargs["clamp"] = float(doc["clamp"])
            if "favorable" in doc:
                kwargs["favorable"] = FavorableBounds(**doc["favorable"])
            for key in ("output_dir", "cache_dir", "events"):
                if doc.get(key) is not None:
                    kwargs[key] = resolve(doc[key])
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"bad config value: {exc}") from exc
        seed = doc.get("seed")
        cfg = cls(seed=seed, raw=dict(doc), **kwargs)
        return cfg


def load_config(path, *, seed=None, output_dir=None) -> PipelineConfig:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataIOError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ValidationError(f"config is not valid YAML: {exc}") from exc
    doc = doc or {}
    if seed is not None:
        doc["seed"] = int(seed)
    cfg = PipelineConfig.from_dict(doc, base=path.parent.resolve())
    if output_dir is not None:
        cfg.output_dir = Path(output_dir)
    return cfg.validate()
