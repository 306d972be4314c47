"""Lumped-parameter (RC) thermal model of a five-zone office building.

Each zone is a single thermal node with a capacitance, a conductance to
outdoors (absent for the interior zone), symmetric conductances to its
neighbors, solar and occupant gains, and an ideal thermostatic electric
heater.  Time marches in 1-hour steps, each integrated with explicit Euler
over 60 one-minute sub-steps; at every sub-step the heater delivers exactly
the power needed to land on the setpoint, clamped to [0, max power]
(heating only).

The hourly integration kernel is JIT-compiled with numba; all arithmetic is
plain float64, so results are reproducible and match a pure-Python
transcription bit for bit.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numba import njit

SETPOINT_MIN = 15.0
SETPOINT_MAX = 25.0
OBS_TEMP_MIN = 10.0
OBS_TEMP_MAX = 34.0
SUBSTEPS_PER_HOUR = 60
SUBSTEP_SECONDS = 60.0

# Share of the window gain factor applied to diffuse radiation (diffuse light
# arrives from the whole sky, only part of it through the aperture).
DIFFUSE_APERTURE_SHARE = 0.5


class WeatherParseError(ValueError):
    """Raised for malformed weather files; message names the offending row."""


@dataclass(frozen=True)
class ZoneConfig:
    """Static RC parameters of one thermal zone.

    ``resistance_to_outdoor`` is None for zones without an exterior
    envelope.  ``window_solar_gain_factor`` is an effective aperture in m2
    (glazing area times transmittance); ``resistance_to_neighbors`` lists
    (zone index, K/W) pairs and must be symmetric across the building.
    """

    name: str
    floor_area: float
    thermal_capacitance: float
    resistance_to_outdoor: Optional[float]
    resistance_to_neighbors: Tuple[Tuple[int, float], ...]
    window_solar_gain_factor: float
    heater_max_power: float
    internal_gain_per_person: float = 100.0

    def __post_init__(self) -> None:
        if self.thermal_capacitance <= 0:
            raise ValueError(f"{self.name}: thermal_capacitance must be positive")
        if self.resistance_to_outdoor is not None and self.resistance_to_outdoor <= 0:
            raise ValueError(f"{self.name}: resistance_to_outdoor must be positive")
        for j, r in self.resistance_to_neighbors:
            if r <= 0:
                raise ValueError(f"{self.name}: neighbor resistance to zone {j} must be positive")
        if self.heater_max_power <= 0:
            raise ValueError(f"{self.name}: heater_max_power must be positive")
        if self.window_solar_gain_factor < 0:
            raise ValueError(f"{self.name}: window_solar_gain_factor must be >= 0")


@dataclass(frozen=True)
class WeatherRecord:
    """One hour of weather: outdoor temperature and solar irradiance."""

    timestamp: int
    outdoor_temp: float
    direct_solar: float
    diffuse_solar: float

    def __post_init__(self) -> None:
        values = (self.outdoor_temp, self.direct_solar, self.diffuse_solar)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"hour {self.timestamp}: non-finite weather value")
        if not (-60.0 <= self.outdoor_temp <= 60.0):
            raise ValueError(f"hour {self.timestamp}: outdoor_temp {self.outdoor_temp} outside [-60, 60]")
        if self.direct_solar < 0 or self.diffuse_solar < 0:
            raise ValueError(f"hour {self.timestamp}: negative solar value")


@dataclass(frozen=True)
class ZoneThermalState:
    """Per-zone result of one hourly step.

    ``temperature`` is clamped to the observation bounds [10, 34] C; the
    simulator keeps the unclamped temperature internally.  ``heat_delivered``
    is in Wh, ``energy_consumed`` in kWh and includes this zone's share of
    the central base load.
    """

    temperature: float
    heat_delivered: float
    energy_consumed: float


@dataclass(frozen=True)
class BuildingConfig:
    """Zone set plus the central-plant parameters shared by all zones."""

    zones: Tuple[ZoneConfig, ...]
    heater_efficiency: float = 0.9
    base_load_active_kwh: float = 2.0
    base_load_idle_kwh: float = 0.5

    def __post_init__(self) -> None:
        if not (0 < self.heater_efficiency <= 1):
            raise ValueError("heater_efficiency must be in (0, 1]")
        if self.base_load_idle_kwh < 0 or self.base_load_active_kwh < self.base_load_idle_kwh:
            raise ValueError("base loads must satisfy 0 <= idle <= active")
        links = {}
        for i, zone in enumerate(self.zones):
            for j, r in zone.resistance_to_neighbors:
                if not (0 <= j < len(self.zones)) or j == i:
                    raise ValueError(f"{zone.name}: bad neighbor index {j}")
                links[(i, j)] = r
        for (i, j), r in links.items():
            if links.get((j, i)) != r:
                raise ValueError(
                    f"asymmetric neighbor link between zones {i} and {j}: "
                    f"{r} vs {links.get((j, i))}"
                )

    @property
    def zone_names(self) -> Tuple[str, ...]:
        return tuple(z.name for z in self.zones)


class Building:
    """Mutable simulator state for one building instance.

    Single-threaded by design: one instance must only be stepped by one
    loop at a time, while independent instances are fully isolated.
    """

    def __init__(self, config: BuildingConfig, initial_temp: float = 15.0):
        self.config = config
        n = len(config.zones)
        self._capacitance = np.array([z.thermal_capacitance for z in config.zones])
        self._g_out = np.array(
            [0.0 if z.resistance_to_outdoor is None else 1.0 / z.resistance_to_outdoor
             for z in config.zones]
        )
        self._g_link = np.zeros((n, n))
        for i, zone in enumerate(config.zones):
            for j, r in zone.resistance_to_neighbors:
                self._g_link[i, j] = 1.0 / r
        self._solar_factor = np.array([z.window_solar_gain_factor for z in config.zones])
        self._gain_pp = np.array([z.internal_gain_per_person for z in config.zones])
        self._p_max = np.array([z.heater_max_power for z in config.zones])
        self._temps = np.full(n, float(initial_temp))

    @property
    def n_zones(self) -> int:
        return len(self.config.zones)

    @property
    def temperatures(self) -> np.ndarray:
        """Unclamped zone temperatures (the physics state)."""
        return self._temps.copy()

    def reset(self, initial_temp: float = 15.0) -> None:
        self._temps[:] = float(initial_temp)

    def step(
        self,
        setpoints: Sequence[float],
        weather: WeatherRecord,
        occupancy: Sequence[int],
    ) -> Tuple[List[ZoneThermalState], float]:
        """Advance one hour; returns per-zone states and total energy E_all.

        Heater output per zone is whatever the explicit-Euler update needs
        to land on the setpoint, clamped to [0, max power].  E_all sums the
        zones' electrical energy plus the central base load, which is
        2 kWh/h while any heater runs and 0.5 kWh/h otherwise; the base
        load is attributed to zones in equal shares.
        """
        n = self.n_zones
        if len(setpoints) != n or len(occupancy) != n:
            raise ValueError(
                f"expected {n} setpoints and occupancy counts, "
                f"got {len(setpoints)} and {len(occupancy)}"
            )
        for s in setpoints:
            if not (SETPOINT_MIN <= s <= SETPOINT_MAX):
                raise ValueError(f"setpoint {s} outside [{SETPOINT_MIN}, {SETPOINT_MAX}]")
        if any(c < 0 for c in occupancy):
            raise ValueError("occupancy counts must be non-negative")
        if not all(
            math.isfinite(v)
            for v in (weather.outdoor_temp, weather.direct_solar, weather.diffuse_solar)
        ):
            raise ValueError("non-finite weather values")

        gains = (
            self._solar_factor * weather.direct_solar
            + DIFFUSE_APERTURE_SHARE * self._solar_factor * weather.diffuse_solar
            + self._gain_pp * np.asarray(occupancy, dtype=float)
        )
        heat_wh = _step_hour(
            self._temps,
            np.asarray(setpoints, dtype=float),
            self._capacitance,
            self._g_out,
            self._g_link,
            gains,
            self._p_max,
            weather.outdoor_temp,
        )
        any_heating = bool(np.any(heat_wh > 0.0))
        base = (
            self.config.base_load_active_kwh
            if any_heating
            else self.config.base_load_idle_kwh
        )
        base_share = base / n
        eff = self.config.heater_efficiency
        states = []
        heater_kwh_total = 0.0
        for i in range(n):
            heater_kwh = heat_wh[i] / eff / 1000.0
            heater_kwh_total += heater_kwh
            states.append(
                ZoneThermalState(
                    temperature=min(OBS_TEMP_MAX, max(OBS_TEMP_MIN, float(self._temps[i]))),
                    heat_delivered=float(heat_wh[i]),
                    energy_consumed=heater_kwh + base_share,
                )
            )
        e_all = heater_kwh_total + base
        return states, e_all


@njit(cache=True)
def _step_hour(temps, setpoints, capacitance, g_out, g_link, gains, p_max, t_out):
    """Explicit-Euler hour step over 60 one-minute sub-steps (in-place)."""
    n = temps.shape[0]
    heat_wh = np.zeros(n)
    passive = np.empty(n)
    dt = SUBSTEP_SECONDS
    for _ in range(SUBSTEPS_PER_HOUR):
        for i in range(n):
            flow = gains[i]
            if g_out[i] > 0.0:
                flow += g_out[i] * (t_out - temps[i])
            for j in range(n):
                g = g_link[i, j]
                if g > 0.0:
                    flow += g * (temps[j] - temps[i])
            passive[i] = flow
        for i in range(n):
            q = (setpoints[i] - temps[i]) * capacitance[i] / dt - passive[i]
            if q < 0.0:
                q = 0.0
            elif q > p_max[i]:
                q = p_max[i]
            heat_wh[i] += q * (dt / 3600.0)
            temps[i] += (passive[i] + q) * dt / capacitance[i]
    return heat_wh


# ---------------------------------------------------------------------------
# Five-zone preset
# ---------------------------------------------------------------------------

BUILDING_WIDTH = 30.5
BUILDING_LENGTH = 15.2
BUILDING_HEIGHT = 3.05

# Air heat capacity times a x40 multiplier for furniture/fabric thermal mass.
_AIR_RHO_CP = 1.2 * 1005.0
_MASS_MULTIPLIER = 40.0
# Partition conductance per m2 of interior wall.
_PARTITION_U = 2.0
# The unheated building should lose roughly 1 C/h at a 35 K indoor-outdoor
# difference; that pins the total envelope conductance.
_ENVELOPE_REFERENCE_DT = 35.0


def building_5zone() -> BuildingConfig:
    """Default five-zone office: four perimeter rooms around an interior core.

    Spaces 1 and 3 are the long south/north rooms, Spaces 2 and 4 the short
    east/west rooms, Space 5 the windowless core.  Envelope conductances are
    distributed over the perimeter zones by exterior-wall share.
    """
    areas = {
        "Space 1": 99.16,
        "Space 2": 42.73,
        "Space 3": 96.48,
        "Space 4": 42.73,
        "Space 5": 182.49,
    }
    wall_areas = {
        "Space 1": BUILDING_WIDTH * BUILDING_HEIGHT,
        "Space 2": BUILDING_LENGTH * BUILDING_HEIGHT,
        "Space 3": BUILDING_WIDTH * BUILDING_HEIGHT,
        "Space 4": BUILDING_LENGTH * BUILDING_HEIGHT,
    }
    capacitance = {
        name: area * BUILDING_HEIGHT * _AIR_RHO_CP * _MASS_MULTIPLIER
        for name, area in areas.items()
    }
    total_capacitance = sum(capacitance.values())
    # 1 C/h at dT = 35 K pins the envelope: UA_total * 35 = C_total / 3600.
    ua_total = total_capacitance / (3600.0 * _ENVELOPE_REFERENCE_DT)
    total_wall = sum(wall_areas.values())
    r_out = {
        name: total_wall / (ua_total * wall)
        for name, wall in wall_areas.items()
    }

    # Interior partitions: core long sides face Spaces 1/3, short sides face
    # Spaces 2/4; small corner walls couple adjacent perimeter rooms.
    core_long = 23.2 * BUILDING_HEIGHT
    core_short = 7.9 * BUILDING_HEIGHT
    corner = 3.65 * BUILDING_HEIGHT

    def link_r(wall_area: float) -> float:
        return 1.0 / (_PARTITION_U * wall_area)

    r_core_long = link_r(core_long)
    r_core_short = link_r(core_short)
    r_corner = link_r(corner)

    zones = (
        ZoneConfig(
            name="Space 1",
            floor_area=areas["Space 1"],
            thermal_capacitance=capacitance["Space 1"],
            resistance_to_outdoor=r_out["Space 1"],
            resistance_to_neighbors=((1, r_corner), (3, r_corner), (4, r_core_long)),
            window_solar_gain_factor=6.0,
            heater_max_power=18000.0,
        ),
        ZoneConfig(
            name="Space 2",
            floor_area=areas["Space 2"],
            thermal_capacitance=capacitance["Space 2"],
            resistance_to_outdoor=r_out["Space 2"],
            resistance_to_neighbors=((0, r_corner), (2, r_corner), (4, r_core_short)),
            window_solar_gain_factor=3.0,
            heater_max_power=9000.0,
        ),
        ZoneConfig(
            name="Space 3",
            floor_area=areas["Space 3"],
            thermal_capacitance=capacitance["Space 3"],
            resistance_to_outdoor=r_out["Space 3"],
            resistance_to_neighbors=((1, r_corner), (3, r_corner), (4, r_core_long)),
            window_solar_gain_factor=3.5,
            heater_max_power=18000.0,
        ),
        ZoneConfig(
            name="Space 4",
            floor_area=areas["Space 4"],
            thermal_capacitance=capacitance["Space 4"],
            resistance_to_outdoor=r_out["Space 4"],
            resistance_to_neighbors=((0, r_corner), (2, r_corner), (4, r_core_short)),
            window_solar_gain_factor=3.0,
            heater_max_power=9000.0,
        ),
        ZoneConfig(
            name="Space 5",
            floor_area=areas["Space 5"],
            thermal_capacitance=capacitance["Space 5"],
            resistance_to_outdoor=None,
            resistance_to_neighbors=(
                (0, r_core_long),
                (1, r_core_short),
                (2, r_core_long),
                (3, r_core_short),
            ),
            window_solar_gain_factor=0.0,
            heater_max_power=20000.0,
        ),
    )
    return BuildingConfig(zones=zones)


def load_building(path) -> BuildingConfig:
    """Load a building description from a JSON config file."""
    import json

    with open(path) as f:
        raw = json.load(f)
    zones = tuple(
        ZoneConfig(
            name=z["name"],
            floor_area=float(z["floor_area"]),
            thermal_capacitance=float(z["thermal_capacitance"]),
            resistance_to_outdoor=(
                None if z.get("resistance_to_outdoor") is None else float(z["resistance_to_outdoor"])
            ),
            resistance_to_neighbors=tuple(
                (int(j), float(r)) for j, r in z.get("resistance_to_neighbors", [])
            ),
            window_solar_gain_factor=float(z.get("window_solar_gain_factor", 0.0)),
            heater_max_power=float(z["heater_max_power"]),
            internal_gain_per_person=float(z.get("internal_gain_per_person", 100.0)),
        )
        for z in raw["zones"]
    )
    return BuildingConfig(
        zones=zones,
        heater_efficiency=float(raw.get("heater_efficiency", 0.9)),
        base_load_active_kwh=float(raw.get("base_load_active_kwh", 2.0)),
        base_load_idle_kwh=float(raw.get("base_load_idle_kwh", 0.5)),
    )


# ---------------------------------------------------------------------------
# Weather
# ---------------------------------------------------------------------------

# Synthetic cold-climate January profile: sinusoidal daily cycle around
# -15 C with 8 K amplitude (coldest ~03:00), plus a seeded day-to-day
# offset; solar follows a sin^2 bell between 10:00 and 16:00.
WEATHER_MEAN_TEMP = -15.0
WEATHER_DAILY_AMPLITUDE = 8.0
SOLAR_WINDOW = (10, 16)
DIRECT_SOLAR_PEAK = 150.0
DIFFUSE_SOLAR_PEAK = 40.0


def generate_weather(seed: int, days: int = 31) -> List[WeatherRecord]:
    """Seeded synthetic hourly weather for ``days`` days."""
    if days <= 0:
        raise ValueError("days must be positive")
    rng = np.random.default_rng(seed)
    records = []
    for day in range(days):
        day_offset = float(rng.normal(0.0, 2.5))
        clearness = float(rng.uniform(0.3, 1.0))
        diffuse_level = float(rng.uniform(0.5, 1.5))
        for hod in range(24):
            t = day * 24 + hod
            temp = (
                WEATHER_MEAN_TEMP
                - WEATHER_DAILY_AMPLITUDE * math.cos(2.0 * math.pi * (hod - 3.0) / 24.0)
                + day_offset
            )
            lo, hi = SOLAR_WINDOW
            if lo <= hod <= hi:
                bell = math.sin(math.pi * (hod - lo) / (hi - lo)) ** 2
            else:
                bell = 0.0
            records.append(
                WeatherRecord(
                    timestamp=t,
                    outdoor_temp=temp,
                    direct_solar=DIRECT_SOLAR_PEAK * clearness * bell,
                    diffuse_solar=DIFFUSE_SOLAR_PEAK * diffuse_level * bell,
                )
            )
    return records


def save_weather(records: Sequence[WeatherRecord], path) -> None:
    """Write records as ``hour,outdoor_temp,direct_solar,diffuse_solar`` CSV."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["hour", "outdoor_temp", "direct_solar", "diffuse_solar"])
        for rec in records:
            writer.writerow([rec.timestamp, repr(rec.outdoor_temp), repr(rec.direct_solar), repr(rec.diffuse_solar)])


def load_weather(path) -> List[WeatherRecord]:
    """Load an hourly weather CSV; hours must be contiguous from the start.

    Parse errors name the offending data row (1-based, excluding the
    header).
    """
    try:
        f = open(path, newline="")
    except OSError as exc:
        raise WeatherParseError(f"cannot open weather file {path}: {exc}") from exc
    with f:
        reader = csv.reader(f)
        header = next(reader, None)
        expected = ["hour", "outdoor_temp", "direct_solar", "diffuse_solar"]
        if header is None or [c.strip() for c in header] != expected:
            raise WeatherParseError(f"{path}: missing or bad header, expected {','.join(expected)}")
        records = []
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != 4:
                raise WeatherParseError(f"{path} row {row_no}: expected 4 columns, got {len(row)}")
            try:
                hour = int(row[0])
                temp = float(row[1])
                direct = float(row[2])
                diffuse = float(row[3])
            except ValueError as exc:
                raise WeatherParseError(f"{path} row {row_no}: {exc}") from exc
            if not all(math.isfinite(v) for v in (temp, direct, diffuse)):
                raise WeatherParseError(f"{path} row {row_no}: non-finite value")
            if hour != len(records):
                raise WeatherParseError(
                    f"{path} row {row_no}: hour {hour} breaks contiguity (expected {len(records)})"
                )
            try:
                records.append(
                    WeatherRecord(timestamp=hour, outdoor_temp=temp, direct_solar=direct, diffuse_solar=diffuse)
                )
            except ValueError as exc:
                raise WeatherParseError(f"{path} row {row_no}: {exc}") from exc
    if not records:
        raise WeatherParseError(f"{path}: no weather rows")
    return records
