"""Run configuration: a flat ``key = value`` text format with ``[sections]``.

Comments start with ``#`` or ``;``.  Every key must be known for its section;
unknown keys and duplicates are reported with line numbers.  The standard
library ``configparser`` is not used because it cannot report the line of an
unknown key or the first occurrence of a duplicate.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Union

import numpy as np

from .core import BiofilmError, Grid, LateralMode, ModelParams, build_grid
from .coupled import CoupledConfig, CoupledMode
from .interface import EvolutionConfig, HeightClosure, HeightProfile

COMMANDS = ("solve", "evolve", "mms", "verify")
FORMATS = ("csv", "vtk")


class ConfigError(BiofilmError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class GridSpec:
    """Grid resolution and the initial height profile.

    ``profile`` is ``"constant"`` (``h0``), ``"cosine"``
    (``h0 + amp cos(2 pi modes x / L)``) or ``"file"`` (whitespace-separated
    column heights read from ``h_file``).
    """

    L: float = 1.0
    nx: int = 32
    nz: int = 8
    lateral: LateralMode = LateralMode.PERIODIC
    profile: str = "cosine"
    h0: float = 0.3
    amp: float = 0.01
    modes: int = 1
    h_file: str = ""
    h_min: Optional[float] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "lateral", LateralMode(self.lateral))
        if self.profile not in ("constant", "cosine", "file"):
            raise ConfigError(f"grid.profile must be constant, cosine or file, got {self.profile!r}")
        if self.profile == "file" and not self.h_file:
            raise ConfigError("grid.h_file is required when profile = file")

    def heights(self) -> np.ndarray:
        x = np.linspace(0.0, self.L, self.nx + 1)
        if self.profile == "constant":
            return np.full(self.nx + 1, self.h0)
        if self.profile == "cosine":
            return self.h0 + self.amp * np.cos(2.0 * np.pi * self.modes * x / self.L)
        try:
            h = np.loadtxt(self.h_file, dtype=float).reshape(-1)
        except OSError as exc:
            raise ConfigError(f"cannot read grid.h_file: {exc}") from exc
        return h

    def build(self) -> Grid:
        return build_grid(self.L, self.heights(), self.nx, self.nz, self.lateral, self.h_min)

    def profile_at_t0(self) -> HeightProfile:
        return HeightProfile(self.heights(), t=0.0, L=self.L)


@dataclass(frozen=True)
class MMSSpec:
    levels: tuple = ((16, 8), (32, 16), (64, 32))
    min_order_transport: float = 0.9
    min_order_pressure: float = 1.8
    min_order_velocity: float = 1.0
    min_order_nutrient: float = 1.8
    min_order_divergence: float = 1.0


@dataclass(frozen=True)
class VerifySpec:
    family_size: int = 50
    inject_sign_violation: bool = False


@dataclass(frozen=True)
class RunSpec:
    command: str = "solve"
    output_dir: str = "out"
    formats: tuple = ("csv",)
    seed: int = 0
    grid: GridSpec = field(default_factory=GridSpec)
    params: ModelParams = field(default_factory=ModelParams)
    coupled: CoupledConfig = field(default_factory=CoupledConfig)
    evolution: EvolutionConfig = field(default_factory=lambda: EvolutionConfig(dt=0.01, T_final=0.1))
    mms: MMSSpec = field(default_factory=MMSSpec)
    verify: VerifySpec = field(default_factory=VerifySpec)

    def __post_init__(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"run.command must be one of {', '.join(COMMANDS)}, got {self.command!r}")
        bad = [f for f in self.formats if f not in FORMATS]
        if bad or not self.formats:
            raise ConfigError(f"run.formats must be a non-empty subset of {FORMATS}, got {self.formats!r}")


# -- value codecs -----------------------------------------------------------


def _bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_float(s: str) -> Optional[float]:
    return None if s.strip().lower() in ("", "none", "auto") else float(s)


def _vec(s: str) -> tuple[float, float]:
    parts = [p for p in s.replace(",", " ").split() if p]
    if len(parts) != 2:
        raise ValueError(f"expected two numbers, got {s!r}")
    return (float(parts[0]), float(parts[1]))


def _tnormal(s: str) -> Union[float, str]:
    return "balanced" if s.strip() == "balanced" else float(s)


def _levels(s: str) -> tuple:
    out = []
    for tok in s.replace(",", " ").split():
        a, b = tok.lower().split("x")
        out.append((int(a), int(b)))
    if len(out) < 3:
        raise ValueError("at least three grid levels are required")
    return tuple(out)


def _formats(s: str) -> tuple:
    return tuple(p for p in s.replace(",", " ").split() if p)


def _fmt_float(v) -> str:
    return "none" if v is None else repr(float(v))


# section -> key -> (target attribute path, parser, formatter)
Codec = tuple[str, Callable[[str], Any], Callable[[Any], str]]

_F = (float, _fmt_float)
_I = (int, str)
_S = (str.strip, str)
_B = (_bool, lambda b: "true" if b else "false")

SCHEMA: dict[str, dict[str, Codec]] = {
    "run": {
        "command": ("command", *_S),
        "output_dir": ("output_dir", *_S),
        "formats": ("formats", _formats, lambda t: ", ".join(t)),
        "seed": ("seed", *_I),
    },
    "grid": {
        "L": ("grid.L", *_F),
        "nx": ("grid.nx", *_I),
        "nz": ("grid.nz", *_I),
        "lateral": ("grid.lateral", str.strip, lambda m: LateralMode(m).value),
        "profile": ("grid.profile", *_S),
        "h0": ("grid.h0", *_F),
        "amp": ("grid.amp", *_F),
        "modes": ("grid.modes", *_I),
        "h_file": ("grid.h_file", *_S),
        "h_min": ("grid.h_min", _opt_float, _fmt_float),
    },
    "params": {
        **{k: (f"params.{k}", *_F) for k in (
            "k_b", "K_b", "k_c", "K_c", "d", "mu_b", "Pi", "xi_inf", "phi_inf", "g_inf", "c0", "p_b0")},
        "t_normal": ("params.t_normal", _tnormal, lambda v: v if isinstance(v, str) else repr(float(v))),
        "t_top": ("params.t_ext.top", _vec, lambda v: f"{v[0]!r}, {v[1]!r}"),
        "t_left": ("params.t_ext.left", _vec, lambda v: f"{v[0]!r}, {v[1]!r}"),
        "t_right": ("params.t_ext.right", _vec, lambda v: f"{v[0]!r}, {v[1]!r}"),
    },
    "coupled": {
        "mode": ("coupled.mode", str.strip, lambda m: CoupledMode(m).value),
        "outer_tol": ("coupled.outer_tol", *_F),
        "outer_max_iter": ("coupled.outer_max_iter", *_I),
        "omega": ("coupled.omega", *_F),
        "phi_init": ("coupled.phi_init", _opt_float, _fmt_float),
        "epsilon": ("coupled.epsilon", *_F),
        "sign_tol": ("coupled.sign_tol", *_F),
        "abort_factor": ("coupled.abort_factor", *_F),
        "abort_on_sign": ("coupled.abort_on_sign", *_B),
        "mobility": ("coupled.mobility", *_S),
        "inner_tol": ("coupled.inner_tol", *_F),
        "picard_tol": ("coupled.picard_tol", *_F),
        "picard_max_iter": ("coupled.picard_max_iter", *_I),
    },
    "evolution": {
        "dt": ("evolution.dt", *_F),
        "T_final": ("evolution.T_final", *_F),
        "cfl": ("evolution.cfl", *_F),
        "closure": ("evolution.closure", str.strip, lambda c: HeightClosure(c).value),
        "h_min": ("evolution.h_min", _opt_float, _fmt_float),
    },
    "mms": {
        "levels": ("mms.levels", _levels, lambda lv: ", ".join(f"{a}x{b}" for a, b in lv)),
        "min_order_transport": ("mms.min_order_transport", *_F),
        "min_order_pressure": ("mms.min_order_pressure", *_F),
        "min_order_velocity": ("mms.min_order_velocity", *_F),
        "min_order_nutrient": ("mms.min_order_nutrient", *_F),
        "min_order_divergence": ("mms.min_order_divergence", *_F),
    },
    "verify": {
        "family_size": ("verify.family_size", *_I),
        "inject_sign_violation": ("verify.inject_sign_violation", *_B),
    },
}

_GROUPS = {
    "grid": GridSpec,
    "params": ModelParams,
    "coupled": CoupledConfig,
    "evolution": EvolutionConfig,
    "mms": MMSSpec,
    "verify": VerifySpec,
}


def parse_text(text: str) -> dict[str, dict[str, tuple[str, int]]]:
    """Split config text into ``{section: {key: (raw value, line)}}``."""
    out: dict[str, dict[str, tuple[str, int]]] = {}
    section: Optional[str] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", lineno)
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]", lineno)
            out.setdefault(section, {})
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        if section is None:
            raise ConfigError("key outside of any section", lineno)
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {key!r} in section [{section}]", lineno)
        if key in out[section]:
            first = out[section][key][1]
            raise ConfigError(f"duplicate key {key!r} in [{section}] (first on line {first}, again on line {lineno})", lineno)
        out[section][key] = (value, lineno)
    return out


def spec_from_text(text: str) -> RunSpec:
    raw = parse_text(text)
    top: dict[str, Any] = {}
    groups: dict[str, dict[str, Any]] = {g: {} for g in _GROUPS}
    t_ext: dict[str, tuple[float, float]] = {}
    for section, entries in raw.items():
        for key, (value, lineno) in entries.items():
            path, parse, _ = SCHEMA[section][key]
            try:
                parsed = parse(value)
            except ValueError as exc:
                raise ConfigError(f"bad value for {section}.{key}: {exc}", lineno) from None
            parts = path.split(".")
            if len(parts) == 1:
                top[parts[0]] = parsed
            elif parts[1] == "t_ext":
                t_ext[parts[2]] = parsed
            else:
                groups[parts[0]][parts[1]] = parsed
    if t_ext:
        groups["params"]["t_ext"] = t_ext
    kwargs: dict[str, Any] = dict(top)
    try:
        evo = groups["evolution"]
        if evo:
            evo.setdefault("dt", 0.01)
            evo.setdefault("T_final", 0.1)
        for name, cls in _GROUPS.items():
            if groups[name]:
                kwargs[name] = cls(**groups[name])
        return RunSpec(**kwargs)
    except ConfigError:
        raise
    except (BiofilmError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> RunSpec:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    return spec_from_text(text)


def _get(spec: RunSpec, path: str):
    obj: Any = spec
    for part in path.split("."):
        obj = obj[part] if isinstance(obj, dict) else getattr(obj, part)
    return obj


def spec_to_text(spec: RunSpec) -> str:
    """Serialise every field; ``spec_from_text`` of the result reproduces ``spec``."""
    lines = []
    for section, keys in SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (path, _, fmt) in keys.items():
            lines.append(f"{key} = {fmt(_get(spec, path))}")
        lines.append("")
    return "\n".join(lines)


def replace(spec: RunSpec, **changes) -> RunSpec:
    return dataclasses.replace(spec, **changes)
