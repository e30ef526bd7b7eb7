"""Scenario configuration: YAML file <-> validated dataclasses."""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from ..errors import ConfigurationError
from ..flow import DriftField, SpatialGrid, bump_drift, constant_drift, linear_drift, sine_drift, zero_drift
from ..noise import NoiseKind
from ..transport import InitialDatum, TestBump, bump_datum, smoothed_step, zero_datum

DRIFT_PRESETS = {
    "zero": zero_drift,
    "constant": constant_drift,
    "linear": linear_drift,
    "bump": bump_drift,
    "sine": sine_drift,
}

DATUM_PRESETS = {
    "zero": zero_datum,
    "bump": bump_datum,
    "step": smoothed_step,
}

DEFAULT_CONFIG = Path(__file__).with_name("default.yaml")


@dataclass
class NoiseSection:
    kind: str = "wiener"
    hurst: float | None = None
    horizon: float = 1.0
    base_seed: int = 0


@dataclass
class SpaceSection:
    half_width: float = 10.0
    n_points: int = 2001


@dataclass
class PresetSection:
    preset: str = "zero"
    params: dict[str, float] = field(default_factory=dict)


@dataclass
class LadderSection:
    levels: list[int] = field(default_factory=lambda: [256, 512, 1024, 2048])


@dataclass
class BatterySection:
    centers: list[float] = field(default_factory=lambda: [-2.0, 0.0, 1.5])
    widths: list[float] = field(default_factory=lambda: [0.5, 1.0, 2.0])
    time_fractions: list[float] = field(default_factory=lambda: [0.25, 0.5, 0.75, 1.0])


@dataclass
class ChainRuleStudy:
    enabled: bool = True
    integrand: str = "sin_exp"
    levels: list[int] = field(default_factory=lambda: [256, 512, 1024, 2048, 4096])
    n_seeds: int = 50
    threshold: float = 1e-2
    min_median_ratio: float = 1.2
    min_pass_fraction: float = 0.9


@dataclass
class FubiniStudy:
    enabled: bool = True
    n_steps: int = 2048
    half_width: float = 10.0
    n_panels: int = 2000
    tolerance: float = 1e-6


@dataclass
class FlowStudy:
    enabled: bool = True
    n_steps: int = 1024
    tail_r: list[float] = field(default_factory=lambda: [1.0, 2.0, 4.0, 8.0, 16.0])
    csv_x_stride: int = 50
    csv_t_stride: int = 64


@dataclass
class ResidualStudy:
    enabled: bool = True
    n_seeds: int = 20
    n_panels: int = 256
    min_median_ratio: float = 1.2
    min_frozen_factor: float = 10.0


@dataclass
class CommutatorStudy:
    enabled: bool = True
    eps: list[float] = field(default_factory=lambda: [0.4, 0.2, 0.1, 0.05])
    n_pairs: int = 10
    half_width: float = 6.0
    n_points: int = 2401
    min_median_ratio: float = 1.5


@dataclass
class EnergyStudy:
    enabled: bool = True
    r: float = 2.0
    n_steps: int = 256
    n_panels: int = 800
    max_energy: float = 1e-12


@dataclass
class StudiesSection:
    chain_rule: ChainRuleStudy = field(default_factory=ChainRuleStudy)
    fubini: FubiniStudy = field(default_factory=FubiniStudy)
    flow: FlowStudy = field(default_factory=FlowStudy)
    residual: ResidualStudy = field(default_factory=ResidualStudy)
    commutator: CommutatorStudy = field(default_factory=CommutatorStudy)
    energy: EnergyStudy = field(default_factory=EnergyStudy)


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    output_dir: str = "out"
    noise: NoiseSection = field(default_factory=NoiseSection)
    space: SpaceSection = field(default_factory=SpaceSection)
    drift: PresetSection = field(default_factory=lambda: PresetSection("bump", {}))
    initial: PresetSection = field(default_factory=lambda: PresetSection("bump", {}))
    ladder: LadderSection = field(default_factory=LadderSection)
    battery: BatterySection = field(default_factory=BatterySection)
    studies: StudiesSection = field(default_factory=StudiesSection)

    # -- construction -----------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScenarioConfig":
        errors: list[str] = []
        cfg = _build(cls, data or {}, "", errors)
        if errors:
            raise ConfigurationError("invalid configuration:\n  " + "\n  ".join(errors))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        with open(path) as fh:
            data = yaml.safe_load(fh)
        return cls.from_dict(data)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=None)

    def save(self, path) -> None:
        Path(path).write_text(self.dump())

    def replace(self, **changes) -> "ScenarioConfig":
        data = copy.deepcopy(self.to_dict())
        for dotted, value in changes.items():
            node = data
            *parents, leaf = dotted.split(".")
            for key in parents:
                node = node[key]
            node[leaf] = value
        return ScenarioConfig.from_dict(data)

    # -- validation -------------------------------------------------------

    def validate(self) -> None:
        errors = []
        try:
            kind = NoiseKind(self.noise.kind)
        except ValueError:
            errors.append(f"noise.kind: unknown kind {self.noise.kind!r}")
            kind = None
        if kind is NoiseKind.DETERMINISTIC:
            errors.append("noise.kind: deterministic paths are not configurable scenarios")
        if kind in (NoiseKind.FBM, NoiseKind.SUBFBM):
            h = self.noise.hurst
            if h is None or not 0.5 <= h < 1.0:
                errors.append(f"noise.hurst: must lie in [0.5, 1) for {kind.value}, got {h!r}")
        if self.noise.horizon <= 0:
            errors.append(f"noise.horizon: must be positive, got {self.noise.horizon}")
        if self.noise.base_seed < 0:
            errors.append("noise.base_seed: must be non-negative")
        if self.drift.preset not in DRIFT_PRESETS:
            errors.append(f"drift.preset: unknown preset {self.drift.preset!r} "
                          f"(choose from {sorted(DRIFT_PRESETS)})")
        if self.initial.preset not in DATUM_PRESETS:
            errors.append(f"initial.preset: unknown preset {self.initial.preset!r} "
                          f"(choose from {sorted(DATUM_PRESETS)})")
        for name, levels in (("ladder.levels", self.ladder.levels),
                             ("studies.chain_rule.levels", self.studies.chain_rule.levels)):
            if len(levels) < 3:
                errors.append(f"{name}: need at least 3 levels")
            elif levels[0] < 4 or any(b != 2 * a for a, b in zip(levels[:-1], levels[1:])):
                errors.append(f"{name}: levels must start at >= 4 and double, got {levels}")
        b = self.battery
        if len(b.centers) != len(b.widths) or not b.centers:
            errors.append("battery: centers and widths must be non-empty and of equal length")
        elif any(w <= 0 for w in b.widths):
            errors.append("battery.widths: must be positive")
        else:
            reach = max(abs(c) + w for c, w in zip(b.centers, b.widths))
            if self.space.half_width <= reach + 3.0:
                errors.append(f"space.half_width: must exceed max bump support {reach} + 3")
        if any(not 0 < f <= 1 for f in b.time_fractions):
            errors.append("battery.time_fractions: must lie in (0, 1]")
        if self.space.n_points < 3:
            errors.append("space.n_points: need at least 3")
        if self.studies.chain_rule.integrand not in CHAIN_RULE_INTEGRANDS:
            errors.append(f"studies.chain_rule.integrand: unknown {self.studies.chain_rule.integrand!r}")
        if errors:
            raise ConfigurationError("invalid configuration:\n  " + "\n  ".join(errors))
        try:
            self.make_drift()
            self.make_datum()
        except TypeError as exc:
            raise ConfigurationError(f"preset parameters: {exc}") from exc

    # -- factories --------------------------------------------------------

    def make_drift(self) -> DriftField:
        return DRIFT_PRESETS[self.drift.preset](**self.drift.params)

    def make_datum(self) -> InitialDatum:
        return DATUM_PRESETS[self.initial.preset](**self.initial.params)

    def make_grid(self) -> SpatialGrid:
        return SpatialGrid(self.space.half_width, self.space.n_points)

    def make_battery(self) -> list[TestBump]:
        return [TestBump(c, w) for c, w in zip(self.battery.centers, self.battery.widths)]


CHAIN_RULE_INTEGRANDS = ("sin_exp", "cos", "identity", "square")


def _build(cls, data, prefix, errors):
    if not isinstance(data, dict):
        errors.append(f"{prefix.rstrip('.') or '<root>'}: expected a mapping, got {type(data).__name__}")
        return cls()
    known = {f.name: f for f in fields(cls)}
    for key in data:
        if key not in known:
            errors.append(f"{prefix}{key}: unknown field")
    kwargs = {}
    for name, f in known.items():
        if name not in data:
            continue
        value = data[name]
        default = cls().__getattribute__(name)
        path = f"{prefix}{name}"
        if hasattr(default, "__dataclass_fields__"):
            kwargs[name] = _build(type(default), value, path + ".", errors)
        else:
            kwargs[name] = _coerce(value, default, path, errors)
    return cls(**kwargs)


def _coerce(value, default, path, errors):
    if value is None:
        return None
    if isinstance(default, bool):
        if not isinstance(value, bool):
            errors.append(f"{path}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if not isinstance(value, int) or isinstance(value, bool):
            errors.append(f"{path}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            errors.append(f"{path}: expected a number, got {value!r}")
            return value
        return float(value)
    if isinstance(default, list):
        if not isinstance(value, list):
            errors.append(f"{path}: expected a list, got {value!r}")
            return value
        if default and isinstance(default[0], float):
            return [float(v) for v in value]
        return list(value)
    if isinstance(default, dict):
        if not isinstance(value, dict):
            errors.append(f"{path}: expected a mapping, got {value!r}")
            return value
        return {str(k): float(v) for k, v in value.items()}
    if isinstance(default, str) and not isinstance(value, str):
        errors.append(f"{path}: expected a string, got {value!r}")
    return value
