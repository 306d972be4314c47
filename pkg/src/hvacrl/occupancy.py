"""Weekly occupancy schedules: per-zone headcounts and mean comfort wishes.

A schedule stores one week (168 hourly entries) per zone and repeats
indefinitely, except on holidays, where the whole building is empty.  Each
occupied entry carries the occupants' mean comfort temperature; storing the
already-averaged wish is enough because the reward only ever reads the
average.  Presence forecasts are perfect-foresight lookups into the same
schedule.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

HOURS_PER_WEEK = 168

# Default roles in the five-zone office: the core room and one side room are
# open-plan offices, the remaining side rooms are booked as conference rooms.
OFFICE_ZONES = ("Space 3", "Space 5")
CONFERENCE_ZONES = ("Space 1", "Space 2", "Space 4")
DEFAULT_CAPACITIES = {
    "Space 1": 16,
    "Space 2": 10,
    "Space 3": 12,
    "Space 4": 10,
    "Space 5": 24,
}
OFFICE_COMFORT = 21.0

# Fraction of capacity present during office hours 8:00-15:00 (lunch dip at
# noon); deterministic so the occupied-hours mean wish is exactly 21.0.
_OFFICE_PATTERN = (0.6, 1.0, 1.0, 1.0, 0.5, 1.0, 1.0, 0.8)
_OFFICE_START = 8


class ScheduleParseError(ValueError):
    """Raised for malformed schedule files; message names the offending row."""


@dataclass(frozen=True)
class ZoneOccupancy:
    """One zone's weekly profile: (headcount, mean comfort wish) per hour."""

    name: str
    max_capacity: int
    week: tuple  # 168 entries of (headcount: int, comfort_temp: float | None)

    def __post_init__(self) -> None:
        if self.max_capacity <= 0:
            raise ValueError(f"{self.name}: max_capacity must be positive")
        if len(self.week) != HOURS_PER_WEEK:
            raise ValueError(f"{self.name}: week profile must have {HOURS_PER_WEEK} entries")
        for h, (count, comfort) in enumerate(self.week):
            if count < 0 or count > self.max_capacity:
                raise ValueError(f"{self.name} hour {h}: headcount {count} outside [0, capacity]")
            if count > 0 and comfort is None:
                raise ValueError(f"{self.name} hour {h}: occupied entry lacks comfort temperature")
            if count == 0 and comfort is not None:
                raise ValueError(f"{self.name} hour {h}: empty entry carries a comfort temperature")
            if comfort is not None and not (18.0 <= comfort <= 24.0):
                raise ValueError(f"{self.name} hour {h}: comfort {comfort} outside [18, 24]")


@dataclass(frozen=True)
class OccupancySchedule:
    """Weekly repeating occupancy for every zone plus building-wide holidays."""

    zones: tuple
    holidays: frozenset = field(default_factory=frozenset)

    @property
    def zone_names(self) -> tuple:
        return tuple(z.name for z in self.zones)

    def _is_holiday(self, t: int) -> bool:
        return (t // 24) in self.holidays

    def occupancy_at(self, t: int):
        """Relative count and mean comfort wish per zone at hour ``t``.

        Returns a list of (relative_count in [0, 1], comfort_temp or None).
        """
        if t < 0:
            raise ValueError("hour index must be non-negative")
        if self._is_holiday(t):
            return [(0.0, None) for _ in self.zones]
        h = t % HOURS_PER_WEEK
        out = []
        for zone in self.zones:
            count, comfort = zone.week[h]
            out.append((count / zone.max_capacity, comfort))
        return out

    def headcounts_at(self, t: int):
        """Absolute person counts per zone at hour ``t`` (0 on holidays)."""
        if self._is_holiday(t):
            return [0] * len(self.zones)
        h = t % HOURS_PER_WEEK
        return [zone.week[h][0] for zone in self.zones]

    def occupancy_forecast(self, t: int, horizon: int):
        """Perfect-foresight relative counts ``horizon`` hours ahead (1 or 2)."""
        if horizon not in (1, 2):
            raise ValueError("forecast horizon must be 1 or 2 hours")
        return [rel for rel, _ in self.occupancy_at(t + horizon)]


def generate_schedule(seed: int, capacities: Optional[dict] = None) -> OccupancySchedule:
    """Seeded weekly schedule for the five-zone building.

    Offices (Space 3, Space 5) follow a fixed weekday 8:00-16:00 pattern at
    comfort 21.0 C.  Conference rooms get randomly placed weekday meeting
    blocks whose occupants wish temperatures in [19, 23] C, different per
    block.  The same seed always yields the same schedule.
    """
    caps = dict(DEFAULT_CAPACITIES)
    if capacities:
        caps.update(capacities)
    rng = np.random.default_rng(seed)
    zones = []
    for name in sorted(caps):
        cap = caps[name]
        week = [(0, None)] * HOURS_PER_WEEK
        if name in OFFICE_ZONES:
            for day in range(5):
                for i, frac in enumerate(_OFFICE_PATTERN):
                    count = max(1, round(frac * cap))
                    week[day * 24 + _OFFICE_START + i] = (count, OFFICE_COMFORT)
        else:
            _fill_conference_week(week, cap, rng)
        zones.append(ZoneOccupancy(name=name, max_capacity=cap, week=tuple(week)))
    return OccupancySchedule(zones=tuple(zones))


def _fill_conference_week(week: list, cap: int, rng: np.random.Generator) -> None:
    """Place seeded meeting blocks on weekdays, one of them at full capacity."""
    full_house = (int(rng.integers(0, 5)), True)  # (day, pending) marker
    for day in range(5):
        n_blocks = int(rng.integers(1, 4))
        for b in range(n_blocks):
            start = int(rng.integers(8, 16))
            length = int(rng.integers(1, 4))
            if day == full_house[0] and b == 0:
                count = cap
            else:
                count = int(rng.integers(2, cap + 1))
            comfort = round(float(rng.uniform(19.0, 23.0)) * 2) / 2
            for h in range(start, min(start + length, 17)):
                week[day * 24 + h] = (count, comfort)


def save_schedule(schedule: OccupancySchedule, path) -> None:
    """Write the occupied hours as CSV rows ``zone,day,hour,headcount,comfort_temp``."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["zone", "day", "hour", "headcount", "comfort_temp"])
        for zone in schedule.zones:
            for h, (count, comfort) in enumerate(zone.week):
                if count > 0:
                    writer.writerow([zone.name, h // 24, h % 24, count, comfort])


def load_schedule(path, capacities: Optional[dict] = None) -> OccupancySchedule:
    """Load a schedule CSV written by :func:`save_schedule`.

    Zone capacities default to each zone's weekly peak headcount; pass
    ``capacities`` to override (the generator's defaults are used for zone
    names it knows).
    """
    per_zone: dict = {}
    try:
        f = open(path, newline="")
    except OSError as exc:
        raise ScheduleParseError(f"cannot open schedule file {path}: {exc}") from exc
    with f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != ["zone", "day", "hour", "headcount", "comfort_temp"]:
            raise ScheduleParseError(f"{path}: bad or missing header row")
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise ScheduleParseError(f"{path} row {row_no}: expected 5 columns, got {len(row)}")
            name = row[0].strip()
            try:
                day = int(row[1])
                hour = int(row[2])
                count = int(row[3])
            except ValueError as exc:
                raise ScheduleParseError(f"{path} row {row_no}: {exc}") from exc
            if not (0 <= day <= 6) or not (0 <= hour <= 23):
                raise ScheduleParseError(f"{path} row {row_no}: day/hour out of range")
            comfort_text = row[4].strip()
            if count > 0:
                if not comfort_text:
                    raise ScheduleParseError(f"{path} row {row_no}: occupied row needs comfort_temp")
                try:
                    comfort = float(comfort_text)
                except ValueError as exc:
                    raise ScheduleParseError(f"{path} row {row_no}: {exc}") from exc
            else:
                comfort = None
            week = per_zone.setdefault(name, [(0, None)] * HOURS_PER_WEEK)
            idx = day * 24 + hour
            if week[idx][0] != 0:
                raise ScheduleParseError(f"{path} row {row_no}: duplicate entry for {name} day {day} hour {hour}")
            week[idx] = (count, comfort)
    if not per_zone:
        raise ScheduleParseError(f"{path}: no schedule rows")
    zones = []
    for name, week in per_zone.items():
        if capacities and name in capacities:
            cap = capacities[name]
        else:
            cap = max((c for c, _ in week), default=0) or 1
        try:
            zones.append(ZoneOccupancy(name=name, max_capacity=cap, week=tuple(week)))
        except ValueError as exc:
            raise ScheduleParseError(f"{path}: {exc}") from exc
    return OccupancySchedule(zones=tuple(zones))
