"""Parameter containers for the markup SDE and its simulation."""
from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from .errors import ConfigError


class SizeDist(str, enum.Enum):
    NORMAL = "Normal"
    CONSTANT = "Constant"


class NegativityScheme(str, enum.Enum):
    FULL_TRUNCATION = "FullTruncation"
    REFLECTION = "Reflection"


def _finite(name: str, value: float) -> None:
    if not math.isfinite(value):
        raise ConfigError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class ModelParams:
    """Coefficients of the controlled CIR markup model and its running cost.

    ``theta_tilde`` is the mean-reversion rate, ``u`` the long-run mean,
    ``sigma`` the square-root diffusion coefficient, ``rho`` the discount
    rate, ``xi`` and ``phi`` weight the flow cost xi*((1+phi)x + m)^2 and
    ``c0`` prices the control through c0*m^2/2.
    """

    theta_tilde: float
    u: float
    sigma: float
    rho: float
    xi: float
    phi: float
    c0: float

    def __post_init__(self):
        for f in fields(self):
            _finite(f.name, getattr(self, f.name))
        if self.theta_tilde <= 0:
            raise ConfigError("theta_tilde must be > 0")
        if self.u <= 0:
            raise ConfigError("u must be > 0")
        if self.sigma < 0 or self.rho < 0 or self.c0 < 0:
            raise ConfigError("sigma, rho and c0 must be >= 0")


@dataclass(frozen=True)
class JumpSpec:
    nu: float = 0.0
    gamma: float = 0.0
    sigma_j: float = 0.0
    size_dist: SizeDist = SizeDist.NORMAL

    def __post_init__(self):
        object.__setattr__(self, "size_dist", SizeDist(self.size_dist))
        for name in ("nu", "gamma", "sigma_j"):
            _finite(name, getattr(self, name))
        if self.nu < 0 or self.sigma_j < 0:
            raise ConfigError("nu and sigma_j must be >= 0")
        if self.size_dist is SizeDist.CONSTANT and self.sigma_j != 0:
            raise ConfigError("Constant jump sizes require sigma_j = 0")

    @property
    def mean_total(self) -> float:
        return self.nu * self.gamma

    @property
    def second_moment(self) -> float:
        return self.gamma**2 + self.sigma_j**2


NO_JUMPS = JumpSpec()


@dataclass(frozen=True)
class SimConfig:
    """Grid and ensemble settings.

    ``x0`` defaults to the model's long-run mean when left as None.
    """

    dt: float
    horizon: float
    n_paths: int = 1
    seed: int = 0
    negativity_scheme: NegativityScheme = NegativityScheme.FULL_TRUNCATION
    x0: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "negativity_scheme", NegativityScheme(self.negativity_scheme))
        _finite("dt", self.dt)
        _finite("horizon", self.horizon)
        if self.dt <= 0:
            raise ConfigError("dt must be > 0")
        if self.horizon < self.dt * (1 - 1e-12):
            raise ConfigError("horizon must be >= dt")
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise ConfigError("n_paths must be a positive integer")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must fit in 64 bits")
        if self.x0 is not None:
            _finite("x0", self.x0)

    @property
    def n_steps(self) -> int:
        return max(1, math.ceil(self.horizon / self.dt - 1e-9))

    def start(self, p: ModelParams) -> float:
        return p.u if self.x0 is None else self.x0


@dataclass(frozen=True)
class PolicySpec:
    """Serializable control policy: ``zero`` or a ``constant`` m."""

    kind: str = "zero"
    m: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "constant"):
            raise ConfigError(f"unknown policy kind {self.kind!r}")
        _finite("m", self.m)

    def __call__(self, s, x):
        # Vectorized: returns an array shaped like x.
        return x * 0.0 + (self.m if self.kind == "constant" else 0.0)


@dataclass(frozen=True)
class RunConfig:
    model: ModelParams
    jumps: JumpSpec = NO_JUMPS
    sim: SimConfig = field(default_factory=lambda: SimConfig(dt=0.01, horizon=1.0))
    policy: PolicySpec = PolicySpec()

    def to_dict(self) -> dict[str, Any]:
        return to_jsonable(self)


def to_jsonable(obj: Any) -> Any:
    """dataclass/enum tree -> plain JSON types."""
    if hasattr(obj, "__dataclass_fields__"):
        return {k: to_jsonable(v) for k, v in asdict(obj).items()}
    if isinstance(obj, dict):
        return {k: to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, enum.Enum):
        return obj.value
    return obj


def _build(cls, data: Any, section: str):
    if not isinstance(data, dict):
        raise ConfigError(f"section {section!r} must be an object")
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown field(s) in {section!r}: {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"section {section!r}: {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"section {section!r}: {exc}") from exc


def run_config_from_dict(doc: dict[str, Any]) -> RunConfig:
    """Build a RunConfig from ``{"model": ..., "jumps": ..., "sim": ..., "policy": ...}``."""
    if not isinstance(doc, dict) or "model" not in doc:
        raise ConfigError("config must be an object with a 'model' section")
    unknown = set(doc) - {"model", "jumps", "sim", "policy"}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    model = _build(ModelParams, doc["model"], "model")
    jumps = _build(JumpSpec, doc.get("jumps", {}), "jumps")
    sim = _build(SimConfig, doc["sim"], "sim") if "sim" in doc else SimConfig(dt=0.01, horizon=1.0)
    policy = _build(PolicySpec, doc.get("policy", {}), "policy")
    return RunConfig(model, jumps, sim, policy)


def load_run_config(path: str | Path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return run_config_from_dict(doc)
