"""Pipeline configuration: a flat YAML mapping, paths relative to the file."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .detector import DEFAULT_THRESHOLD

PATH_KEYS = (
    "posts", "accounts", "patterns", "predictions", "country_grid", "gold",
    "resolutions", "review", "output_dir", "secret_file", "id_map",
    "baselines_comorbidity", "baselines_age_groups", "baselines_gender", "baselines_countries",
)
OTHER_KEYS = ("threshold_chars", "mdd_policy", "top_n_countries", "gold_selfreport_sampled", "schema_map")


class ConfigError(ValueError):
    """Unusable configuration (exit code 1)."""


def bundled_patterns() -> Path:
    return Path(__file__).parent / "resources" / "patterns"


def bundled_grid() -> Path:
    return Path(__file__).parent / "resources" / "country_grid.csv"


@dataclass
class PipelineConfig:
    output_dir: Path
    posts: Path | None = None
    accounts: Path | None = None
    patterns: Path = field(default_factory=bundled_patterns)
    predictions: Path | None = None
    country_grid: Path = field(default_factory=bundled_grid)
    gold: Path | None = None
    resolutions: Path | None = None
    review: Path | None = None
    secret_file: Path | None = None
    id_map: Path | None = None
    baselines_comorbidity: Path | None = None
    baselines_age_groups: Path | None = None
    baselines_gender: Path | None = None
    baselines_countries: Path | None = None
    threshold_chars: int = DEFAULT_THRESHOLD
    mdd_policy: str = "plain"
    top_n_countries: int = 5
    # variables whose gold users were sampled among self-report matches
    gold_selfreport_sampled: tuple[str, ...] = ()
    schema_map: dict | None = None

    @property
    def store_dir(self) -> Path:
        return self.output_dir / "store"

    def require(self, *keys: str) -> None:
        """Fail unless every named path is configured and exists."""
        for key in keys:
            value = getattr(self, key)
            if value is None:
                raise ConfigError(f"config key {key!r} is required for this command")
            if not Path(value).exists():
                raise ConfigError(f"{key}: {value} does not exist")


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a flat key: value mapping")
    unknown = set(raw) - set(PATH_KEYS) - set(OTHER_KEYS)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    base = path.parent
    kwargs: dict = {}
    for key in PATH_KEYS:
        if raw.get(key) is not None:
            kwargs[key] = (base / str(raw[key])).resolve()
    if "output_dir" not in kwargs:
        raise ConfigError(f"{path}: output_dir is required")
    try:
        threshold = int(raw.get("threshold_chars", DEFAULT_THRESHOLD))
        top_n = int(raw.get("top_n_countries", 5))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if threshold < 1:
        raise ConfigError("threshold_chars must be >= 1")
    if top_n < 1:
        raise ConfigError("top_n_countries must be >= 1")
    policy = raw.get("mdd_policy", "plain")
    if policy not in ("plain", "conservative"):
        raise ConfigError("mdd_policy must be plain or conservative")
    sampled = raw.get("gold_selfreport_sampled") or ()
    if isinstance(sampled, str):
        sampled = (sampled,)
    schema_map = raw.get("schema_map")
    if schema_map is not None and not isinstance(schema_map, dict):
        raise ConfigError("schema_map must map canonical fields to source keys")
    cfg = PipelineConfig(
        threshold_chars=threshold,
        mdd_policy=policy,
        top_n_countries=top_n,
        gold_selfreport_sampled=tuple(sampled),
        schema_map=schema_map,
        **kwargs,
    )
    for key in PATH_KEYS:
        value = getattr(cfg, key)
        if key in ("output_dir", "id_map") or value is None:
            continue
        if not Path(value).exists():
            raise ConfigError(f"{key}: {value} does not exist")
    return cfg
