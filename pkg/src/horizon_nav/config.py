"""Simulation configuration and config-file parsing.

Config files use INI syntax (flat key=value pairs grouped into sections).
Every field of :class:`SimConfig` has a default, so a config file only needs
to list the keys it overrides.  Example::

    [sim]
    dt = 0.25
    n_cooperative = 5
    n_noncooperative = 15

    [orca]
    neighbor_dist = 5.0
    time_horizon = 2.0
    max_neighbors = 10

    [sf]
    A = 2.0
    B = 0.35
    relaxation_time = 0.5
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace


@dataclass(frozen=True)
class OrcaParams:
    neighbor_dist: float = 5.0
    time_horizon: float = 2.0
    max_neighbors: int = 10


@dataclass(frozen=True)
class SfParams:
    A: float = 2.0
    B: float = 0.35
    relaxation_time: float = 0.5


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.25
    arena_spawn_radius: float = 6.0
    n_cooperative: int = 5
    n_noncooperative: int = 15
    robot_radius: float = 0.3
    ped_radius: float = 0.3
    v_min: float = -0.5
    v_max: float = 1.0
    w_max: float = 1.0
    robot_ref_speed: float = 1.0
    ped_pref_speed: float = 1.0
    timeout: float = 30.0
    sensing_range: float = 5.0
    orca_params: OrcaParams = field(default_factory=OrcaParams)
    sf_params: SfParams = field(default_factory=SfParams)

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.n_cooperative + self.n_noncooperative < 0:
            raise ValueError("pedestrian counts must be nonnegative")
        if self.timeout <= self.dt:
            raise ValueError("timeout must exceed dt")

    @property
    def n_pedestrians(self) -> int:
        return self.n_cooperative + self.n_noncooperative

    def with_crowd(self, n_cooperative: int, n_noncooperative: int) -> "SimConfig":
        return replace(self, n_cooperative=n_cooperative,
                       n_noncooperative=n_noncooperative)


#: Scenario presets: (cooperative, non-cooperative) pedestrian counts.
SCENARIO_PRESETS = {
    "low": (0, 20),
    "mid": (5, 15),
    "high": (10, 10),
}


def scenario_config(name: str, base: SimConfig | None = None) -> SimConfig:
    """Return the SimConfig for a named interaction preset (low/mid/high)."""
    if name not in SCENARIO_PRESETS:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(SCENARIO_PRESETS)}")
    base = base if base is not None else SimConfig()
    n_coop, n_noncoop = SCENARIO_PRESETS[name]
    return base.with_crowd(n_coop, n_noncoop)


_SIM_FLOAT_KEYS = ("dt", "arena_spawn_radius", "robot_radius", "ped_radius",
                   "v_min", "v_max", "w_max", "robot_ref_speed",
                   "ped_pref_speed", "timeout", "sensing_range")
_SIM_INT_KEYS = ("n_cooperative", "n_noncooperative")


def load_config(path: str) -> SimConfig:
    """Parse a SimConfig from an INI file; missing keys keep their defaults."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(path)

    kwargs = {}
    if parser.has_section("sim"):
        sim = parser["sim"]
        for key in _SIM_FLOAT_KEYS:
            if key in sim:
                kwargs[key] = sim.getfloat(key)
        for key in _SIM_INT_KEYS:
            if key in sim:
                kwargs[key] = sim.getint(key)
    if parser.has_section("orca"):
        orca = parser["orca"]
        kwargs["orca_params"] = OrcaParams(
            neighbor_dist=orca.getfloat("neighbor_dist", OrcaParams.neighbor_dist),
            time_horizon=orca.getfloat("time_horizon", OrcaParams.time_horizon),
            max_neighbors=orca.getint("max_neighbors", OrcaParams.max_neighbors),
        )
    if parser.has_section("sf"):
        sf = parser["sf"]
        kwargs["sf_params"] = SfParams(
            A=sf.getfloat("A", SfParams.A),
            B=sf.getfloat("B", SfParams.B),
            relaxation_time=sf.getfloat("relaxation_time", SfParams.relaxation_time),
        )
    return SimConfig(**kwargs)
