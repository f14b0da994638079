"""Run configuration: nested dataclasses loaded from YAML with unknown keys rejected."""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SystemCfg:
    kind: str = "planar"  # or "linear"
    A: Optional[list] = None
    B: Optional[list] = None

    def validate(self, where: str) -> None:
        if self.kind not in ("planar", "linear"):
            raise ConfigError(f"{where}.kind must be 'planar' or 'linear'")
        if self.kind == "linear" and (self.A is None or self.B is None):
            raise ConfigError(f"{where}: a linear system needs A and B")


@dataclass(frozen=True)
class ClfCfg:
    # user decay rate W0(x) = decay_scale * |x|^2
    decay_scale: float = 1.0

    def validate(self, where: str) -> None:
        if not self.decay_scale > 0:
            raise ConfigError(f"{where}.decay_scale must be positive")


@dataclass(frozen=True)
class CbfCfg:
    center: list = field(default_factory=lambda: [0.0, 4.0])
    radius: float = 2.0
    alpha_slope: float = 1.0
    eta_h: float = 0.5
    zeta_slope: float = 0.5

    def validate(self, where: str) -> None:
        if not self.radius > 0:
            raise ConfigError(f"{where}.radius must be positive")
        if not self.alpha_slope > 0:
            raise ConfigError(f"{where}.alpha_slope must be positive")
        if self.eta_h < 0 or self.zeta_slope < 0:
            raise ConfigError(f"{where}: eta_h and zeta_slope must be nonnegative")


@dataclass(frozen=True)
class CertificatesCfg:
    clf: ClfCfg = field(default_factory=ClfCfg)
    cbf: CbfCfg = field(default_factory=CbfCfg)


@dataclass(frozen=True)
class GridCfg:
    lo: list = field(default_factory=lambda: [-5.0, -1.0])
    hi: list = field(default_factory=lambda: [5.0, 9.0])
    shape: list = field(default_factory=lambda: [100, 100])

    def validate(self, where: str) -> None:
        if not (len(self.lo) == len(self.hi) == len(self.shape)):
            raise ConfigError(f"{where}: lo, hi and shape must have equal length")
        if any(h <= l for l, h in zip(self.lo, self.hi)) or any(s < 2 for s in self.shape):
            raise ConfigError(f"{where}: need hi > lo and at least 2 points per axis")


@dataclass(frozen=True)
class ModelCfg:
    kind: str = "exact"  # or "dataset"
    K_f: float = 3.0
    K_g: float = 0.5
    dataset_csv: Optional[str] = None
    # used when no CSV is given: uniform samples over a box
    n_points: int = 400
    box_lo: list = field(default_factory=lambda: [-5.0, -1.0])
    box_hi: list = field(default_factory=lambda: [5.0, 9.0])

    def validate(self, where: str) -> None:
        if self.kind not in ("exact", "dataset"):
            raise ConfigError(f"{where}.kind must be 'exact' or 'dataset'")
        if not (self.K_f > 0 and self.K_g > 0):
            raise ConfigError(f"{where}: Lipschitz constants must be positive")


@dataclass(frozen=True)
class SolverCfg:
    tol_feas: float = 1e-8
    tol_kkt: float = 1e-8
    tol_strict: float = 1e-9
    max_iterations: int = 200
    mu_factor: float = 8.0


@dataclass(frozen=True)
class BoundCfg:
    mode: str = "analysis"  # or "constant"
    value: float = 10.0
    factor: float = 1.5
    grid: GridCfg = field(default_factory=lambda: GridCfg(shape=[41, 41]))

    def validate(self, where: str) -> None:
        if self.mode not in ("analysis", "constant"):
            raise ConfigError(f"{where}.mode must be 'analysis' or 'constant'")


@dataclass(frozen=True)
class SoccCfg:
    Q: list
    r: list
    b: list
    c: float


@dataclass(frozen=True)
class SolveCfg:
    state: list = field(default_factory=lambda: [2.0, 6.0])
    # explicit constraints replace the certificate-built pair
    program: Optional[list] = None


@dataclass(frozen=True)
class UniversalCfg:
    # an explicit constraint, or the certificate-built one named by ``which``
    socc: Optional[SoccCfg] = None
    which: str = "clf"
    state: list = field(default_factory=lambda: [2.0, 6.0])

    def validate(self, where: str) -> None:
        if self.which not in ("clf", "cbf"):
            raise ConfigError(f"{where}.which must be 'clf' or 'cbf'")


@dataclass(frozen=True)
class FeasmapCfg:
    grid: GridCfg = field(default_factory=GridCfg)
    origin_radius: float = 1e-2


@dataclass(frozen=True)
class SimulateCfg:
    x0: list = field(default_factory=lambda: [2.0, 6.0])
    t_end: float = 10.0
    control_period: float = 0.01
    substeps: int = 10
    stop_policy: str = "halt_on_infeasible"
    convergence_radius: float = 0.05


@dataclass(frozen=True)
class ExperimentCfg:
    kind: str = "offline_n"  # or "online"
    sizes: list = field(default_factory=lambda: [25, 100, 400])
    x0: list = field(default_factory=lambda: [2.0, 6.0])
    pool_lo: list = field(default_factory=lambda: [-1.0, -1.0])
    pool_hi: list = field(default_factory=lambda: [3.0, 7.0])
    initial_conditions: list = field(default_factory=lambda: [[2.0, 6.0], [-2.5, 5.0], [3.0, 1.0]])
    n_initial: int = 25
    half_width: float = 0.5
    pattern_radius: float = 0.1
    workspace_lo: list = field(default_factory=lambda: [-5.0, -1.0])
    workspace_hi: list = field(default_factory=lambda: [5.0, 9.0])
    t_end: float = 10.0

    def validate(self, where: str) -> None:
        if self.kind not in ("offline_n", "online"):
            raise ConfigError(f"{where}.kind must be 'offline_n' or 'online'")
        if not self.sizes or any(int(n) < 1 for n in self.sizes):
            raise ConfigError(f"{where}.sizes must be positive integers")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    out: str = "out"
    system: SystemCfg = field(default_factory=SystemCfg)
    certificates: CertificatesCfg = field(default_factory=CertificatesCfg)
    model: ModelCfg = field(default_factory=ModelCfg)
    solver: SolverCfg = field(default_factory=SolverCfg)
    bound_B: BoundCfg = field(default_factory=BoundCfg)
    solve: SolveCfg = field(default_factory=SolveCfg)
    universal: UniversalCfg = field(default_factory=UniversalCfg)
    feasmap: FeasmapCfg = field(default_factory=FeasmapCfg)
    simulate: SimulateCfg = field(default_factory=SimulateCfg)
    experiment: ExperimentCfg = field(default_factory=ExperimentCfg)


def _check_scalar(tp, value, where: str):
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if tp is list:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        return value
    raise ConfigError(f"{where}: unsupported field type {tp}")


def _coerce(tp, value, where: str):
    origin = typing.get_origin(tp)
    if origin is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _coerce(args[0], value, where)
    if dataclasses.is_dataclass(tp):
        return build(tp, value, where)
    return _check_scalar(tp, value, where)


def build(cls, data: Any, where: str = "config"):
    """Construct dataclass ``cls`` from a mapping, rejecting unknown or ill-typed keys."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    kwargs = {k: _coerce(hints[k], v, f"{where}.{k}") for k, v in data.items()}
    try:
        obj = cls(**kwargs)
    except TypeError as e:
        raise ConfigError(f"{where}: {e}") from None
    if hasattr(obj, "validate"):
        obj.validate(where)
    return obj


def load_config(path: Optional[str | Path]) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from None
    except yaml.YAMLError as e:
        raise ConfigError(f"{path} is not valid YAML: {e}") from None
    return build(RunConfig, data)


def to_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)
