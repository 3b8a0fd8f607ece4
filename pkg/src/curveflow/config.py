"""Run configuration: flat key = value files, one key per line, # comments.

A configuration either names a preset (whose curve and solver parameters act
as defaults, individually overridable) or supplies explicit control points
through points_file together with the space and scheme parameters.  Exactly
one of tau_cap (adaptive stepping) and uniform_dt (fixed stepping) must be in
effect after defaults are applied.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import ConfigError
from .presets import PRESETS

__all__ = ["RunConfig", "SCHEMES", "parse_config", "config_from_mapping"]

SCHEMES = ("willmore_plain", "willmore_tv", "apw_tv", "helfrich_tv")


@dataclass(frozen=True)
class RunConfig:
    scheme: str
    preset: str | None = None
    points_file: str | None = None
    n_basis: int = 0
    degree: int = 3
    quad_order: int | None = None
    k0: float = 0.0
    alpha0: float = 0.0
    t_end: float = 0.0
    tau_cap: float | None = None
    uniform_dt: float | None = None
    residual_tol: float = 1e-11
    max_iters: int = 50
    jacobian_fd_step: float = 1e-7
    retry_on_failure: bool = False
    max_retries: int = 3
    output_dir: str = "out"
    snapshot_stride: int = 0
    svg: bool = False
    log_timing: bool = False

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if (self.preset is None) == (self.points_file is None):
            raise ConfigError("exactly one of preset / points_file must be set")
        if self.preset is not None and self.preset not in PRESETS:
            raise ConfigError(
                f"unknown preset {self.preset!r}; available: {', '.join(PRESETS)}"
            )
        if (self.tau_cap is None) == (self.uniform_dt is None):
            raise ConfigError("exactly one of tau_cap / uniform_dt must be set")
        if self.tau_cap is not None and self.tau_cap <= 0:
            raise ConfigError("tau_cap must be positive")
        if self.uniform_dt is not None and self.uniform_dt <= 0:
            raise ConfigError("uniform_dt must be positive")
        if self.n_basis < 1:
            raise ConfigError("n_basis must be set to a positive integer")
        if self.degree < 1:
            raise ConfigError("degree must be >= 1")
        if self.quad_order is not None and self.quad_order < self.degree + 2:
            raise ConfigError("quad_order must be >= degree + 2")
        if self.t_end < 0:
            raise ConfigError("t_end must be >= 0")
        if self.k0 < 0 or self.alpha0 < 0:
            raise ConfigError("k0 and alpha0 must be >= 0")
        if self.snapshot_stride < 0:
            raise ConfigError("snapshot_stride must be >= 0 (0 disables snapshots)")
        if self.max_iters < 1 or self.max_retries < 0:
            raise ConfigError("max_iters must be >= 1 and max_retries >= 0")
        if self.residual_tol <= 0 or self.jacobian_fd_step <= 0:
            raise ConfigError("residual_tol and jacobian_fd_step must be positive")

    @property
    def effective_quad_order(self) -> int:
        return self.quad_order if self.quad_order is not None else self.degree + 2

    def with_overrides(self, **kwargs) -> "RunConfig":
        return replace(self, **kwargs)


_BOOL_VALUES = {"true": True, "false": False, "yes": True, "no": False, "1": True, "0": False}

_INT_KEYS = {"n_basis", "degree", "quad_order", "max_iters", "max_retries", "snapshot_stride"}
_FLOAT_KEYS = {"k0", "alpha0", "t_end", "tau_cap", "uniform_dt", "residual_tol", "jacobian_fd_step"}
_BOOL_KEYS = {"retry_on_failure", "svg", "log_timing"}
_STR_KEYS = {"scheme", "preset", "points_file", "output_dir"}
_ALL_KEYS = _INT_KEYS | _FLOAT_KEYS | _BOOL_KEYS | _STR_KEYS


def _convert(key: str, raw: str, lineno: int):
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _BOOL_KEYS:
            return _BOOL_VALUES[raw.lower()]
        return raw
    except (ValueError, KeyError):
        raise ConfigError(f"line {lineno}: invalid value {raw!r} for key {key!r}") from None


def parse_config(path) -> RunConfig:
    """Parse and validate a configuration file."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            lines = handle.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc

    entries: dict = {}
    for lineno, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = (part.strip() for part in text.split("=", 1))
        if key not in _ALL_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in entries:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if not raw:
            raise ConfigError(f"line {lineno}: empty value for key {key!r}")
        entries[key] = _convert(key, raw, lineno)
    return config_from_mapping(entries)


def config_from_mapping(entries: dict) -> RunConfig:
    """Build a RunConfig from explicit entries, applying preset defaults.

    Values given explicitly win over the preset's defaults.  An explicit
    tau_cap suppresses a preset's uniform_dt and vice versa, so the
    one-of-two invariant refers to the merged result.
    """
    unknown = set(entries) - _ALL_KEYS
    if unknown:
        raise ConfigError(f"unknown keys: {sorted(unknown)}")
    merged = dict(entries)
    preset_name = merged.get("preset")
    if preset_name is not None:
        preset = PRESETS.get(preset_name)
        if preset is None:
            raise ConfigError(
                f"unknown preset {preset_name!r}; available: {', '.join(PRESETS)}"
            )
        explicit_stepping = ("tau_cap" in merged) or ("uniform_dt" in merged)
        for key, value in preset.defaults.items():
            if explicit_stepping and key in ("tau_cap", "uniform_dt"):
                continue
            merged.setdefault(key, value)
    try:
        return RunConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
