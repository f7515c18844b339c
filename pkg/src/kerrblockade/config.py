"""Structured-text (TOML) run configuration with strict validation.

Keys carry their SI units in their names (omega_rad_s, veff_m3, ...) so that
quantities quoted in MHz or ns in the literature are converted once, at the
boundary. Unknown keys are rejected with the offending key path.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .errors import ConfigError

SWEEP_AXES = ("delta_alpha", "lambda1_init_err", "lambda2_init_err",
              "hold_err_grid", "tau", "q", "veff", "alpha")
SWEEP_METRICS = ("g2", "p1_peak", "loss", "p1_watt", "n_peak")


@dataclass(frozen=True)
class CavitySection:
    omega_rad_s: float = 1.215e15
    q_factor: float = 1e7
    kappa_rad_s: float | None = None     # default omega/Q
    veff_m3: float = 1e-20
    vmode_m3: float | None = None
    mode_spacing_rad_s: float = 0.0

    def kappa(self) -> float:
        return self.kappa_rad_s if self.kappa_rad_s is not None \
            else self.omega_rad_s / self.q_factor


@dataclass(frozen=True)
class MaterialSection:
    chi3_m2_v2: float = 0.45e-18
    epsilon_r: float = 12.1


@dataclass(frozen=True)
class BlockadeSection:
    alpha: float = 2.0
    n: int = 1


@dataclass(frozen=True)
class ProtocolSection:
    tau_init_s: float | None = None
    l1_fractions: tuple = (0.25, 0.5, 0.25)
    l2_mid_fraction: float = 0.5
    hold_duration_s: float | None = None
    scan_to_peak: bool = False
    final_displacement: str = "exact-operator"
    lab_dim: int | None = None
    displaced_dim: int = 15
    eval_window_s: float | None = None
    delta_alpha: float | None = None
    l1_init_err: float = 0.0
    l2_init_err: float = 0.0
    l1_hold_err: float = 0.0
    l2_hold_err: float = 0.0
    samples: int = 400
    rtol: float = 1e-8
    atol: float = 1e-12


@dataclass(frozen=True)
class OptimizerSection:
    weights: tuple = (10.0, 1.0, 1.0, 1.0)
    initial_step: float = 0.05
    backtrack: float = 0.5
    max_iterations: int = 500
    loss_tol: float = 1e-4
    fd_step_rel: float = 1e-6
    smoothing_eps: float = 1e-12


@dataclass(frozen=True)
class SweepSection:
    axis: str = "delta_alpha"
    min: float = -0.05
    max: float = 0.05
    count: int = 11
    scale: str = "linear"
    metrics: tuple = ("g2", "p1_peak", "loss")
    fixed_p1_watt: float | None = None
    target_n_peak: float | None = None


@dataclass(frozen=True)
class OutputSection:
    directory: str = "out"
    formats: tuple = ("csv", "json")


@dataclass(frozen=True)
class RunConfig:
    cavity: CavitySection = field(default_factory=CavitySection)
    material: MaterialSection = field(default_factory=MaterialSection)
    blockade: BlockadeSection = field(default_factory=BlockadeSection)
    protocol: ProtocolSection = field(default_factory=ProtocolSection)
    optimizer: OptimizerSection = field(default_factory=OptimizerSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    output: OutputSection = field(default_factory=OutputSection)


_SECTIONS = {
    "cavity": CavitySection,
    "material": MaterialSection,
    "blockade": BlockadeSection,
    "protocol": ProtocolSection,
    "optimizer": OptimizerSection,
    "sweep": SweepSection,
    "output": OutputSection,
}

_LIST_KEYS = {"l1_fractions", "weights", "metrics", "formats"}


def _coerce(section, key, value, cls):
    keypath = f"{section}.{key}"
    if key in _LIST_KEYS:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(keypath, "expected a list")
        return tuple(value)
    if isinstance(value, bool):
        return value
    if isinstance(value, (int, float)):
        # ints pass through for integer-typed fields, floats otherwise
        return value
    if isinstance(value, str):
        return value
    raise ConfigError(keypath, f"unsupported value type {type(value).__name__}")


def _build_section(name, data):
    cls = _SECTIONS[name]
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"{name}.{key}", "unknown key")
        kwargs[key] = _coerce(name, key, value, cls)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(name, str(exc)) from exc


def _validate(cfg: RunConfig) -> RunConfig:
    c = cfg.cavity
    if c.omega_rad_s <= 0 or c.q_factor <= 0 or c.veff_m3 <= 0:
        raise ConfigError("cavity", "omega_rad_s, q_factor, veff_m3 must be positive")
    if cfg.material.chi3_m2_v2 < 0:
        raise ConfigError("material.chi3_m2_v2", "must be nonnegative")
    if cfg.material.epsilon_r < 1:
        raise ConfigError("material.epsilon_r", "must be >= 1")
    if cfg.blockade.n < 1:
        raise ConfigError("blockade.n", "must be a positive integer")
    s = cfg.sweep
    if s.axis not in SWEEP_AXES:
        raise ConfigError("sweep.axis", f"must be one of {', '.join(SWEEP_AXES)}")
    if s.count < 2:
        raise ConfigError("sweep.count", "must be >= 2")
    if not s.min < s.max:
        raise ConfigError("sweep.min", "must be strictly below sweep.max")
    if s.scale not in ("linear", "log"):
        raise ConfigError("sweep.scale", "must be 'linear' or 'log'")
    if s.scale == "log" and s.min <= 0:
        raise ConfigError("sweep.min", "log-scale sweeps need positive bounds")
    for m in s.metrics:
        if m not in SWEEP_METRICS:
            raise ConfigError("sweep.metrics", f"unknown metric {m!r}")
    p = cfg.protocol
    if p.final_displacement not in ("exact-operator", "reversed-schedule"):
        raise ConfigError("protocol.final_displacement",
                          "must be 'exact-operator' or 'reversed-schedule'")
    if p.displaced_dim < 4:
        raise ConfigError("protocol.displaced_dim", "must be >= 4")
    return cfg


def parse_config(text: str, required=()) -> RunConfig:
    """Parse TOML text into a RunConfig; ``required`` names mandatory sections."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<toml>", str(exc)) from exc
    for name in data:
        if name not in _SECTIONS:
            raise ConfigError(name, "unknown section")
    for name in required:
        if name not in data:
            raise ConfigError(name, "required section missing")
    sections = {name: _build_section(name, data.get(name, {})) for name in _SECTIONS}
    return _validate(RunConfig(**sections))


def load_config(path, required=()) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), required=required)


def _fmt_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt_value(x) for x in v) + "]"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    raise TypeError(f"cannot serialize {type(v).__name__}")


def dump_config(cfg: RunConfig) -> str:
    """Serialize to TOML; parse(dump(parse(x))) == parse(x)."""
    lines = []
    for name in _SECTIONS:
        section = getattr(cfg, name)
        lines.append(f"[{name}]")
        for f in fields(section):
            v = getattr(section, f.name)
            if v is None:
                continue
            lines.append(f"{f.name} = {_fmt_value(v)}")
        lines.append("")
    return "\n".join(lines)


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def default_config_text() -> str:
    return dump_config(RunConfig())
