"""Flat key=value experiment configuration with command-line overrides."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, replace

__all__ = ["ExperimentConfig", "ConfigError", "load_config", "apply_overrides",
           "config_text", "config_hash", "KEYMAP"]


class ConfigError(ValueError):
    """Malformed configuration file or override."""


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "identity-suite"
    hurst: float = 0.85
    sigma2: float = 1.0
    eps: float = 1.0
    T: float = 64.0
    dt: float = 0.125
    replicates: int = 100
    master_seed: int = 20240501
    out_dir: str = "results"
    workers: int = 1
    u1: float = 0.0
    u2: float = 1.0
    eps_grid: tuple = (2.0 ** -4, 2.0 ** -6, 2.0 ** -8, 2.0 ** -10, 2.0 ** -12)
    T_grid: tuple = (32.0, 64.0, 128.0, 256.0)
    smallnoise_samples: int = 2 ** 19
    # module tolerances (flattened; dotted aliases in KEYMAP)
    quad_rel_tol: float = 1e-9
    quad_max_panels: int = 8192
    quad_tail_cut: float = 1e-16
    fredholm_n_nodes: int = 256
    fredholm_residual_tol: float = 1e-8
    pq_max_iter: int = 500
    pq_fp_tol: float = 1e-10
    lik_backend: str = "discrete-exact"
    lik_fd_step: float = 1e-4
    mle_max_evals: int = 600
    mle_known_sigma2: bool = True
    lan_replicates: int = 400
    wav_family: str = "db2"
    wav_j_lower: int = 3
    wav_cascade_levels: int = 12
    emp_n_t: int = 32

    def __post_init__(self):
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        for name in ("eps_grid", "T_grid"):
            grid = getattr(self, name)
            diffs = [b - a for a, b in zip(grid, grid[1:])]
            if diffs and not (all(d > 0 for d in diffs) or all(d < 0 for d in diffs)):
                raise ConfigError(f"{name} must be strictly monotone")

    @property
    def theta0(self):
        from .model import Theta
        return Theta(self.hurst, self.sigma2)


# dotted config keys (the external interface) -> dataclass attributes
KEYMAP = {f.name.replace("_", ".", 1) if f.name.startswith(("quad_", "pq_", "lik_", "mle_", "lan_", "wav_", "emp_"))
          else f.name: f.name
          for f in fields(ExperimentConfig)}
KEYMAP.update({
    "fredholm.n_nodes": "fredholm_n_nodes",
    "fredholm.residual_tol": "fredholm_residual_tol",
    "smallnoise.n_samples": "smallnoise_samples",
    "theta0.hurst": "hurst",
    "theta0.sigma2": "sigma2",
})


def _parse_value(raw, default):
    raw = raw.strip()
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return tuple(float(v) for v in raw.split(",") if v.strip())
    return raw


def _set_key(cfg: ExperimentConfig, key, raw):
    key = key.strip()
    attr = KEYMAP.get(key, key if any(f.name == key for f in fields(ExperimentConfig)) else None)
    if attr is None:
        raise ConfigError(f"unknown config key {key!r}")
    default = getattr(cfg, attr)
    try:
        value = _parse_value(str(raw), default)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return replace(cfg, **{attr: value})


def load_config(path=None, base: ExperimentConfig | None = None) -> ExperimentConfig:
    cfg = base or ExperimentConfig()
    if path is None:
        return cfg
    try:
        text = open(path, encoding="utf-8").read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, raw = line.split("=", 1)
        cfg = _set_key(cfg, key, raw)
    return cfg


def apply_overrides(cfg: ExperimentConfig, pairs) -> ExperimentConfig:
    """Apply (key, value) override pairs, e.g. from --key value arguments."""
    for key, raw in pairs:
        cfg = _set_key(cfg, key, raw)
    return cfg


def config_text(cfg: ExperimentConfig) -> str:
    """Canonical key=value rendering (stable ordering, round-trip floats).

    Execution-only parameters (workers, out_dir) are omitted: they do not
    affect any computed number, so runs that differ only in them hash alike.
    """
    inverse = {attr: key for key, attr in sorted(KEYMAP.items())}
    lines = []
    for f in sorted(fields(cfg), key=lambda f: f.name):
        if f.name in ("workers", "out_dir"):
            continue
        key = inverse.get(f.name, f.name)
        val = getattr(cfg, f.name)
        if isinstance(val, tuple):
            val = ",".join(repr(v) for v in val)
        lines.append(f"{key}={val!r}" if isinstance(val, str) else f"{key}={val}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(config_text(cfg).encode()).hexdigest()[:16]
