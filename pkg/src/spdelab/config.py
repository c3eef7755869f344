"""Experiment configuration files (TOML) and their translation to run objects.

A config has an optional top-level ``name`` and the sections ``operator``,
``noise``, ``coefficients``, ``initial``, ``run`` and ``analysis``.  Unknown
sections or keys are errors; every error message carries the line of the
offending key when it can be located.
"""
from __future__ import annotations

import hashlib
import math
import re
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from spdelab.coefficients import NemytskiiPair, preset as coefficient_preset
from spdelab.noise_model import CovarianceSpectrum
from spdelab.spectral_space import OperatorSpec, SpectralField
from spdelab.simulator import SCHEMES, SimulationConfig

__all__ = [
    "ConfigError",
    "OperatorSection",
    "NoiseSection",
    "CoefficientSection",
    "InitialSection",
    "RunSection",
    "AnalysisSection",
    "ExperimentConfig",
    "loads",
    "load",
    "dumps",
    "config_hash",
    "initial_state",
    "simulation_config",
    "preset_path",
    "list_presets",
]

PRESET_DIR = Path(__file__).with_name("presets")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        if source:
            where = f"{source}:{line}: " if line is not None else f"{source}: "
        else:
            where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


@dataclass(frozen=True)
class OperatorSection:
    d: int = 1
    kappa: float = 1.0


@dataclass(frozen=True)
class NoiseSection:
    kind: str = "commutative"
    nu: float = 1.0
    rho: float = 2.0
    J: int | None = None  # omitted: follows N
    basis: str = "cosine"  # custom kind only
    mu: tuple[float, ...] = ()  # custom kind only


@dataclass(frozen=True)
class CoefficientSection:
    preset: str | None = "additive_one"
    f: str | None = None
    b: str | None = None
    q: float | None = None
    lip_f: float | None = None


@dataclass(frozen=True)
class InitialSection:
    profile: str = "zero"  # zero | first_mode | parabola | coeffs
    amplitude: float = 1.0
    coeffs: tuple[float, ...] = ()


@dataclass(frozen=True)
class RunSection:
    T: float = 1.0
    n_steps: int = 1024
    N: int = 128
    n_traj: int = 1000
    p: float = 2.0
    seed: int = 0
    checkpoints: tuple[float, ...] = (1.0,)
    scheme: str = "accelerated"
    noise_refinement: int = 1


@dataclass(frozen=True)
class AnalysisSection:
    r_list: tuple[float, ...] = (0.0,)
    gamma_grid: tuple[float, ...] = ()
    N_list: tuple[int, ...] = ()
    h_list: tuple[float, ...] = ()
    increment_base: float | None = None
    alpha_list: tuple[float, ...] = ()
    slope_tol: float = 0.05
    growth_samples: int = 20
    oracle_N_list: tuple[int, ...] = ()
    oracle_h_list: tuple[float, ...] = ()
    p_list: tuple[float, ...] = ()


_SECTIONS = {
    "operator": OperatorSection,
    "noise": NoiseSection,
    "coefficients": CoefficientSection,
    "initial": InitialSection,
    "run": RunSection,
    "analysis": AnalysisSection,
}


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "custom"
    operator: OperatorSection = field(default_factory=OperatorSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    coefficients: CoefficientSection = field(default_factory=CoefficientSection)
    initial: InitialSection = field(default_factory=InitialSection)
    run: RunSection = field(default_factory=RunSection)
    analysis: AnalysisSection = field(default_factory=AnalysisSection)

    # derived objects
    def op(self) -> OperatorSpec:
        return OperatorSpec(d=self.operator.d, kappa=self.operator.kappa)

    def spectrum(self) -> CovarianceSpectrum:
        n = self.noise
        return CovarianceSpectrum(
            n.kind, n.nu, n.rho, d=self.operator.d, n_noise=n.J, basis=n.basis, mu_values=tuple(n.mu)
        )

    def pair(self) -> NemytskiiPair:
        c = self.coefficients
        if c.preset is not None:
            return coefficient_preset(c.preset)
        return NemytskiiPair(c.f or "0", c.b or "0", q=c.q, lip_f=c.lip_f or 0.0, name="custom")

    def with_traj(self, n_traj: int) -> "ExperimentConfig":
        return replace(self, run=replace(self.run, n_traj=int(n_traj)))


# --- parsing -----------------------------------------------------------------

_HEADER = re.compile(r"^\s*\[\s*([A-Za-z0-9_]+)\s*\]")
_KEY = re.compile(r"^\s*([A-Za-z0-9_]+)\s*=")


def _locate(text: str, section: str | None, key: str | None) -> int | None:
    current = None
    for lineno, line in enumerate(text.splitlines(), 1):
        m = _HEADER.match(line)
        if m:
            current = m.group(1)
            if key is None and current == section:
                return lineno
            continue
        m = _KEY.match(line)
        if m and current == section and m.group(1) == key:
            return lineno
    return None


def _coerce(value, annotation: str, where: str):
    """Check a TOML value against a field annotation string."""
    optional = "None" in annotation
    if value is None:
        if optional:
            return None
        raise ValueError(f"{where} must not be empty")
    base = annotation.replace(" | None", "")
    if base.startswith("tuple"):
        if not isinstance(value, list):
            raise ValueError(f"{where} must be a list")
        inner = "int" if "int" in base else "float"
        return tuple(_coerce(v, inner, where) for v in value)
    if base == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(f"{where} must be an integer")
        return value
    if base == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"{where} must be a number")
        return float(value)
    if base == "str":
        if not isinstance(value, str):
            raise ValueError(f"{where} must be a string")
        return value
    raise TypeError(annotation)


def _build_section(name: str, data: dict, text: str, source: str | None):
    cls = _SECTIONS[name]
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(
                f"unknown key {key!r} in [{name}]; allowed: {sorted(known)}", _locate(text, name, key), source
            )
        try:
            kwargs[key] = _coerce(value, known[key].type, f"{name}.{key}")
        except ValueError as exc:
            raise ConfigError(str(exc), _locate(text, name, key), source) from None
    if name == "coefficients" and "preset" not in kwargs and kwargs.keys() & {"f", "b", "q", "lip_f"}:
        kwargs["preset"] = None  # expressions replace the default preset
    return cls(**kwargs)


def loads(text: str, source: str | None = None) -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"malformed TOML: {exc}", int(m.group(1)) if m else None, source) from None
    sections = {}
    name = "custom"
    for key, value in raw.items():
        if key == "name":
            if not isinstance(value, str):
                raise ConfigError("name must be a string", _locate(text, None, "name"), source)
            name = value
        elif key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"{key} must be a table", _locate(text, None, key), source)
            sections[key] = _build_section(key, value, text, source)
        else:
            line = _locate(text, key, None) or _locate(text, None, key)
            raise ConfigError(f"unknown section or key {key!r}; allowed: {sorted(_SECTIONS)}", line, source)
    cfg = ExperimentConfig(name=name, **sections)
    _validate(cfg, text, source)
    return cfg


def load(path) -> ExperimentConfig:
    path = Path(path)
    return loads(path.read_text(), source=str(path))


def _validate(cfg: ExperimentConfig, text: str, source: str | None) -> None:
    def fail(section, key, msg):
        raise ConfigError(msg, _locate(text, section, key), source)

    run, an = cfg.run, cfg.analysis
    if run.p < 2:
        fail("run", "p", f"moment order p must be >= 2, got {run.p}")
    if any(q < 2 for q in an.p_list):
        fail("analysis", "p_list", "moment orders must be >= 2")
    if run.scheme not in SCHEMES:
        fail("run", "scheme", f"scheme must be one of {SCHEMES}")
    if cfg.noise.kind not in ("cosine", "commutative", "custom"):
        fail("noise", "kind", "noise kind must be cosine, commutative or custom")
    c = cfg.coefficients
    if c.preset is not None and any(v is not None for v in (c.f, c.b, c.q, c.lip_f)):
        fail("coefficients", "preset", "give either a preset or f/b/q expressions, not both")
    if c.preset is None and c.q is None:
        fail("coefficients", "q", "custom coefficients need the Lipschitz constant q")
    if cfg.initial.profile not in ("zero", "first_mode", "parabola", "coeffs"):
        fail("initial", "profile", "profile must be zero, first_mode, parabola or coeffs")
    if cfg.initial.profile == "coeffs" and not cfg.initial.coeffs:
        fail("initial", "coeffs", "profile 'coeffs' needs a coeffs list")
    # build every derived object so that semantic errors surface here
    for section, key, build in (
        ("operator", "d", cfg.op),
        ("noise", "kind", cfg.spectrum),
        ("coefficients", "preset" if c.preset is not None else "b", cfg.pair),
        ("run", "N", lambda: simulation_config(cfg)),
    ):
        try:
            build()
        except (ValueError, TypeError) as exc:
            fail(section, key, str(exc))
    for n in (*an.N_list, *an.oracle_N_list):
        if n < 1:
            fail("analysis", "N_list", "truncations must be positive")


# --- serialization -----------------------------------------------------------

def _section_dict(obj) -> dict:
    out = {}
    for f in fields(obj):
        v = getattr(obj, f.name)
        if v is None:
            continue
        out[f.name] = list(v) if isinstance(v, tuple) else v
    return out


def to_dict(cfg: ExperimentConfig) -> dict:
    out = {"name": cfg.name}
    for key in _SECTIONS:
        out[key] = _section_dict(getattr(cfg, key))
    return out


def dumps(cfg: ExperimentConfig) -> str:
    return tomli_w.dumps(to_dict(cfg))


def from_dict(data: dict) -> ExperimentConfig:
    return loads(tomli_w.dumps(data))


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(dumps(cfg).encode()).hexdigest()


# --- run objects ---------------------------------------------------------------

def initial_state(cfg: ExperimentConfig, n_modes: int) -> SpectralField | None:
    op = cfg.op()
    init = cfg.initial
    d = op.d
    if init.profile == "zero":
        return None
    if init.profile == "first_mode":
        return SpectralField.basis(op, n_modes, (1,) * d).scaled(init.amplitude)
    if init.profile == "parabola":
        # x(1-x) per coordinate: <x(1-x), sqrt2 sin(k pi x)> = 4 sqrt2 / (k pi)^3 for odd k
        k = np.arange(1, n_modes + 1)
        c1 = np.where(k % 2 == 1, 4.0 * math.sqrt(2.0) / (k * math.pi) ** 3, 0.0)
        coeffs = c1
        for _ in range(d - 1):
            coeffs = np.multiply.outer(coeffs, c1)
        return SpectralField(op, init.amplitude * coeffs)
    vals = np.asarray(init.coeffs, dtype=np.float64)
    if d != 1:
        raise ValueError("explicit coefficient lists are supported for d = 1")
    c = np.zeros(n_modes)
    m = min(n_modes, vals.size)
    c[:m] = vals[:m]
    return SpectralField(op, init.amplitude * c)


def simulation_config(cfg: ExperimentConfig, n_modes: int | None = None, n_traj: int | None = None) -> SimulationConfig:
    run, an = cfg.run, cfg.analysis
    N = run.N if n_modes is None else n_modes
    r_values = tuple(sorted(set(an.r_list) | set(an.gamma_grid)))
    return SimulationConfig(
        op=cfg.op(),
        spec=cfg.spectrum(),
        pair=cfg.pair(),
        n_modes=N,
        initial=initial_state(cfg, N),
        T=run.T,
        n_steps=run.n_steps,
        n_traj=run.n_traj if n_traj is None else n_traj,
        p=run.p,
        seed=run.seed,
        checkpoints=run.checkpoints,
        r_list=r_values or (0.0,),
        p_list=an.p_list,
        increment_base=an.increment_base if an.h_list else None,
        h_list=an.h_list,
        scheme=run.scheme,
        noise_refinement=run.noise_refinement,
    )


def preset_path(name: str) -> Path:
    path = PRESET_DIR / f"{name}.toml"
    if not path.exists():
        raise ConfigError(f"unknown preset {name!r}; known: {list_presets()}")
    return path


def list_presets() -> list[str]:
    return sorted(p.stem for p in PRESET_DIR.glob("*.toml"))
