"""Case configuration: flat INI sections parsed with configparser."""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from pathlib import Path

from .dynamics import Schedule
from .errors import InvalidParameterError

# Documented defaults for every tolerance; a config's [tolerances] section
# overrides individual keys.
DEFAULT_TOLERANCES = {
    "pod_rank": 1e-12,            # drop POD eigenvalues below this fraction of the first
    "hsv_rank": 1e-10,            # Hankel singular values treated as zero
    "hsv_tie": 0.02,              # relative gap below which two HSVs count as a pair
    "bound_slack": 0.02,          # H-infinity bound assertions
    "blowup": 1e12,               # divergence detection factor
    "pair1_fraction": 0.9045,     # single-wavenumber POD targets and half-widths
    "pair1_tol": 0.01,
    "pairs3_fraction": 0.996,
    "pairs3_tol": 0.003,
    "op4_fraction": 0.983,
    "op4_tol": 0.005,
    "op8_fraction": 0.999,
    "op8_tol": 0.001,
    "hsv_match": 0.01,            # BPOD vs output-projected exact HSVs
    "error_match": 0.10,          # BPOD vs exact BT impulse error ratio
    "peak_freq_match": 0.05,
    "freq_match": 0.05,
    "modes5_fraction": 0.9972,    # localized case POD targets
    "modes5_tol": 0.003,
    "modes10_fraction": 0.999,
    "modes10_tol": 0.001,
    "pair45_fraction": 0.0040,
    "pair45_tol": 0.001,
    "hsv_pair_match": 0.02,
    "peak_energy_match": 0.10,
    "pod_peak_factor": 3.0,
    "re_tracking": 0.20,
    "trace_min": 2.95,
    "terminal_ratio": 0.015,
    "terminal_ratio_tol": 0.005,
}


class CaseKind(str, Enum):
    SINGLE = "single_wavenumber"
    LOCALIZED = "localized3d"


def _floats(s: str) -> list[float]:
    return [float(x) for x in s.replace(",", " ").split()]


def _ints(s: str) -> list[int]:
    out = []
    for tok in s.replace(",", " ").split():
        if "-" in tok:
            a, b = tok.split("-")
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(tok))
    return out


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off", ""):
        return False
    raise InvalidParameterError(f"not a boolean: {s!r}")


@dataclass(frozen=True)
class CaseConfig:
    name: str = "case"
    kind: CaseKind = CaseKind.SINGLE
    alpha: float = 1.0
    beta: float = 1.0
    Re: float = 1000.0
    N: int = 64
    Nx: int = 16
    Nz: int = 16
    actuator_amplitude: float = 1.0
    actuator_alpha: float = 0.7
    actuator_alpha_y: float = 0.6
    # snapshots
    count: int = 500
    dt: float = 0.01
    T: float | None = None
    decay_threshold: float = 1e-4
    T_max: float = 5000.0
    fine_fraction: float | None = None
    fine_horizon: float = 0.1
    adjoint_count: int | None = None
    # reduction
    output_projection_ranks: tuple[int, ...] = (4, 8)
    model_ranks: tuple[int, ...] = tuple(range(1, 16))
    pod_modes: int = 40
    force_rank: bool = False
    # evaluation toggles
    impulse: bool = True
    freq: bool = True
    spectrum: bool = True
    bounds: bool = True
    re_sweep: tuple[float, ...] = ()
    traces: bool = False
    omega_min: float = 1e-3
    omega_max: float = 1e2
    omega_count: int = 400
    seed: int = 0
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))

    def __post_init__(self):
        for name in ("alpha", "beta"):
            if getattr(self, name) < 0:
                raise InvalidParameterError(f"{name} must be non-negative")
        if self.kind is CaseKind.SINGLE and self.alpha**2 + self.beta**2 == 0:
            raise InvalidParameterError("the (0, 0) wavenumber pair is excluded")
        for name in ("Re", "dt", "decay_threshold", "T_max", "actuator_amplitude",
                     "actuator_alpha", "actuator_alpha_y", "omega_min", "omega_max"):
            if getattr(self, name) <= 0:
                raise InvalidParameterError(f"{name} must be positive")
        if self.T is not None and self.T <= 0:
            raise InvalidParameterError("T must be positive")
        if self.count < 1 or self.pod_modes < 1:
            raise InvalidParameterError("counts must be positive")
        for name in ("output_projection_ranks", "model_ranks"):
            v = list(getattr(self, name))
            if v != sorted(v) or any(r < 1 for r in v):
                raise InvalidParameterError(f"{name} must be positive and sorted ascending")
        if any(r <= 0 for r in self.re_sweep):
            raise InvalidParameterError("re_sweep values must be positive")

    @property
    def any_evaluation(self) -> bool:
        return any((self.impulse, self.freq, self.spectrum, self.bounds, self.re_sweep,
                    self.traces))

    def schedule(self, adjoint: bool = False) -> Schedule:
        count = self.adjoint_count if adjoint and self.adjoint_count else self.count
        return Schedule(count=count, dt=self.dt, T=self.T, decay_threshold=self.decay_threshold,
                        T_max=self.T_max, fine_fraction=self.fine_fraction,
                        fine_horizon=self.fine_horizon)

    def tol(self, key: str) -> float:
        return float(self.tolerances[key])

    def canonical(self) -> str:
        d = asdict(self)
        d["kind"] = self.kind.value
        tol = d.pop("tolerances")
        lines = [f"{k} = {d[k]!r}" for k in sorted(d)]
        lines += [f"tolerances.{k} = {tol[k]!r}" for k in sorted(tol)]
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def stage_digest(self, keys: tuple[str, ...]) -> str:
        d = asdict(self)
        d["kind"] = self.kind.value
        text = "\n".join(f"{k}={d[k]!r}" for k in sorted(keys))
        return hashlib.sha256(text.encode()).hexdigest()


# section -> {key: parser}
_SCHEMA = {
    "case": {
        "name": str, "kind": CaseKind, "alpha": float, "beta": float, "Re": float, "N": int,
        "Nx": int, "Nz": int, "actuator_amplitude": float, "actuator_alpha": float,
        "actuator_alpha_y": float,
    },
    "snapshots": {
        "count": int, "dt": float, "T": float, "decay_threshold": float, "T_max": float,
        "fine_fraction": float, "fine_horizon": float, "adjoint_count": int,
    },
    "reduction": {
        "output_projection_ranks": lambda s: tuple(_ints(s)),
        "model_ranks": lambda s: tuple(_ints(s)), "pod_modes": int, "force_rank": _bool,
    },
    "evaluation": {
        "impulse": _bool, "freq": _bool, "spectrum": _bool, "bounds": _bool,
        "re_sweep": lambda s: tuple(_floats(s)), "traces": _bool, "omega_min": float,
        "omega_max": float, "omega_count": int,
    },
    "run": {"seed": int},
}
_NULLABLE = {"T", "fine_fraction", "adjoint_count"}


def _ini_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, Enum):
        return v.value
    if isinstance(v, tuple):
        return " ".join(repr(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def to_ini(cfg: CaseConfig) -> str:
    """INI text that :func:`parse_config` reads back to an equal config."""
    out = []
    for section, keys in _SCHEMA.items():
        out.append(f"[{section}]")
        out += [f"{k} = {_ini_value(getattr(cfg, k))}" for k in keys]
        out.append("")
    out.append("[tolerances]")
    out += [f"{k} = {cfg.tolerances[k]!r}" for k in sorted(cfg.tolerances)]
    return "\n".join(out) + "\n"


def parse_config(text: str, overrides: dict | None = None) -> CaseConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read_string(text)
    values: dict = {}
    tolerances = dict(DEFAULT_TOLERANCES)
    for section in cp.sections():
        if section == "tolerances":
            for k, v in cp.items(section):
                if k not in DEFAULT_TOLERANCES:
                    raise InvalidParameterError(f"unknown tolerance {k!r}")
                tolerances[k] = float(v)
            continue
        schema = _SCHEMA.get(section)
        if schema is None:
            raise InvalidParameterError(f"unknown config section [{section}]")
        for k, v in cp.items(section):
            if k not in schema:
                raise InvalidParameterError(f"unknown key {k!r} in [{section}]")
            if k in _NULLABLE and v.strip().lower() in ("", "none", "auto"):
                values[k] = None
            else:
                try:
                    values[k] = schema[k](v)
                except ValueError as exc:
                    raise InvalidParameterError(f"[{section}] {k}: {exc}") from None
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = v
    valid = {f.name for f in fields(CaseConfig)}
    bad = set(values) - valid
    if bad:
        raise InvalidParameterError(f"unknown settings {sorted(bad)}")
    return CaseConfig(tolerances=tolerances, **values)


def load_config(path, overrides: dict | None = None) -> CaseConfig:
    p = Path(path)
    if not p.is_file():
        raise InvalidParameterError(f"config file {path} not found")
    return parse_config(p.read_text(), overrides)


def bundled_config(name: str) -> Path:
    p = Path(__file__).parent / "configs" / name
    if not p.is_file():
        raise InvalidParameterError(f"no bundled config named {name!r}")
    return p
