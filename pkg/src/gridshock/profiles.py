"""Hourly regional demand profiles and the scenario transforms.

A profile holds one year (or a selected subset) of hourly MW demand per
region. The synthetic generator layers a winter-peaking seasonal sinusoid
and a double-peaked diurnal shape over each region's annual mean, with a
little seeded noise, then rescales so annual energy is preserved. The
scenario transforms derive the efficiency, heat-pump, combined, and flat
variants from a current-day profile.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import (
    MisalignedHours,
    ParseError,
    SharesNotNormalized,
    ValidationError,
)
from .grid import RegionTable

__all__ = [
    "SCENARIO_KINDS",
    "DemandProfile",
    "ScenarioSpec",
    "synthesize_current",
    "apply_heat_pump",
    "apply_efficiency",
    "apply_flat",
    "extract_extreme_days",
    "load_profile",
    "save_profile",
    "load_end_use_shares",
    "save_end_use_shares",
]

SCENARIO_KINDS = ("current", "efficiency", "heat_pump", "heat_pump_efficiency", "flat")

HOURS_PER_YEAR = 8760

# Relative within-day demand shape; evening maximum at 19:00, overnight
# minimum at 03:00. Normalized to unit mean when applied.
DIURNAL_SHAPE = np.array(
    [
        0.86, 0.83, 0.81, 0.79, 0.80, 0.83,
        0.88, 0.95, 1.00, 1.03, 1.05, 1.06,
        1.07, 1.06, 1.05, 1.05, 1.07, 1.11,
        1.14, 1.18, 1.12, 1.05, 0.97, 0.90,
    ]
)

SEASONAL_AMPLITUDE = 0.08
SEASONAL_PEAK_DAY = 15
NOISE_HALF_WIDTH = 0.005


@dataclass(frozen=True)
class DemandProfile:
    """Per-region hourly demand in MW on a shared hour axis."""

    scenario: str
    regions: tuple[str, ...]
    hours: np.ndarray
    demand_mw: np.ndarray

    def __post_init__(self):
        hours = np.asarray(self.hours, dtype=int)
        demand = np.asarray(self.demand_mw, dtype=float)
        object.__setattr__(self, "hours", hours)
        object.__setattr__(self, "demand_mw", demand)
        if demand.shape != (len(self.regions), hours.size):
            raise ValidationError(
                f"demand array {demand.shape} does not match "
                f"{len(self.regions)} regions x {hours.size} hours"
            )
        if len(set(self.regions)) != len(self.regions):
            raise ValidationError("profile regions must be unique")
        if hours.size and (np.diff(hours) <= 0).any():
            raise ValidationError("hour axis must be strictly increasing")
        if hours.size and (hours[0] < 0 or hours[-1] >= HOURS_PER_YEAR):
            raise ValidationError("hour indices must lie in [0, 8760)")
        if not np.isfinite(demand).all() or (demand < 0).any():
            raise ValidationError("demand must be finite and nonnegative")

    @cached_property
    def region_pos(self) -> dict[str, int]:
        return {r: k for k, r in enumerate(self.regions)}

    @cached_property
    def hour_pos(self) -> dict[int, int]:
        return {int(h): k for k, h in enumerate(self.hours)}

    def national(self) -> np.ndarray:
        """Total demand across regions per hour."""
        return self.demand_mw.sum(axis=0)

    def peak_hour(self) -> int:
        """Hour index of the national maximum (first on ties)."""
        return int(self.hours[int(np.argmax(self.national()))])

    def trough_hour(self) -> int:
        """Hour index of the national minimum (first on ties)."""
        return int(self.hours[int(np.argmin(self.national()))])

    def demand_at(self, region: str, hour: int) -> float:
        return float(self.demand_mw[self.region_pos[region], self.hour_pos[hour]])

    def annual_gwh(self, region: str) -> float:
        return float(self.demand_mw[self.region_pos[region]].sum()) / 1000.0


@dataclass(frozen=True)
class ScenarioSpec:
    """Parameters for deriving one scenario from the current-day profile."""

    kind: str
    hp_penetration: float = 0.20
    hp_cop: float = 3.0
    efficiency_factors: Mapping[str, float] | None = None

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ValidationError(f"unknown scenario kind {self.kind!r}")
        if not 0.0 <= self.hp_penetration <= 1.0:
            raise ValidationError("heat pump penetration must lie in [0, 1]")
        if not self.hp_cop > 0.0:
            raise ValidationError("heat pump COP must be positive")
        if self.efficiency_factors is not None:
            for use, factor in self.efficiency_factors.items():
                if not 0.0 < factor <= 1.0:
                    raise ValidationError(
                        f"efficiency factor for {use!r} must lie in (0, 1]"
                    )


def synthesize_current(
    regions: RegionTable,
    seed: int = 0,
    *,
    seasonal_amplitude: float = SEASONAL_AMPLITUDE,
    seasonal_peak_day: int = SEASONAL_PEAK_DAY,
    noise_half_width: float = NOISE_HALF_WIDTH,
) -> DemandProfile:
    """Build a full-year current-day profile from regional annual energy.

    Per region: annual mean MW, scaled by a winter-peaking seasonal cosine
    and the diurnal shape, perturbed by seeded uniform noise, then rescaled
    so the region's annual energy is met exactly. The noise stream for row
    k of the region table is seeded by (seed, k), so a given file and seed
    always reproduce the same profile.
    """
    hours = np.arange(HOURS_PER_YEAR)
    day = hours // 24
    seasonal = 1.0 + seasonal_amplitude * np.cos(
        2.0 * np.pi * (day - seasonal_peak_day) / 365.0
    )
    diurnal = (DIURNAL_SHAPE / DIURNAL_SHAPE.mean())[hours % 24]
    shape = seasonal * diurnal

    rows = []
    names = []
    for k, region in enumerate(regions.regions):
        rng = np.random.default_rng([seed, k])
        noise = 1.0 + rng.uniform(-noise_half_width, noise_half_width, HOURS_PER_YEAR)
        target_mwh = region.annual_gwh * 1000.0
        mean_mw = target_mwh / HOURS_PER_YEAR
        row = mean_mw * shape * noise
        row *= target_mwh / row.sum()
        rows.append(row)
        names.append(region.id)
    return DemandProfile(
        scenario="current",
        regions=tuple(names),
        hours=hours,
        demand_mw=np.array(rows),
    )


def apply_heat_pump(
    profile: DemandProfile, spec: ScenarioSpec, heat_demand: DemandProfile
) -> DemandProfile:
    """Add electrified heating: demand + penetration * heat / COP.

    `heat_demand` carries thermal MW on the same hour axis and region set;
    a mismatched hour axis raises MisalignedHours.
    """
    if not np.array_equal(profile.hours, heat_demand.hours):
        raise MisalignedHours("heat demand is not on the profile's hour axis")
    missing = sorted(set(profile.regions) - set(heat_demand.regions))
    if missing:
        raise ValidationError(f"heat demand missing regions: {', '.join(missing)}")
    heat_rows = np.array(
        [heat_demand.demand_mw[heat_demand.region_pos[r]] for r in profile.regions]
    )
    uplift = spec.hp_penetration * heat_rows / spec.hp_cop
    return replace(profile, scenario=spec.kind, demand_mw=profile.demand_mw + uplift)


def apply_efficiency(
    profile: DemandProfile,
    spec: ScenarioSpec,
    end_use_shares: Mapping[str, Mapping[str, float]],
) -> DemandProfile:
    """Scale each region by its share-weighted mean efficiency factor."""
    if spec.efficiency_factors is None:
        raise ValidationError("scenario spec carries no efficiency factors")
    multipliers = np.empty(len(profile.regions))
    for k, region in enumerate(profile.regions):
        if region not in end_use_shares:
            raise ValidationError(f"no end-use shares for region {region}")
        shares = end_use_shares[region]
        total = sum(shares.values())
        if abs(total - 1.0) > 1e-6:
            raise SharesNotNormalized(
                f"end-use shares for region {region} sum to {total!r}"
            )
        acc = 0.0
        for use, share in sorted(shares.items()):
            if use not in spec.efficiency_factors:
                raise ValidationError(f"no efficiency factor for end use {use!r}")
            acc += share * spec.efficiency_factors[use]
        multipliers[k] = acc
    return replace(
        profile,
        scenario=spec.kind,
        demand_mw=profile.demand_mw * multipliers[:, None],
    )


def apply_flat(profile: DemandProfile) -> DemandProfile:
    """Replace every region's series with its own mean value."""
    means = profile.demand_mw.mean(axis=1)
    flat = np.repeat(means[:, None], profile.hours.size, axis=1)
    return replace(profile, scenario="flat", demand_mw=flat)


def extract_extreme_days(profile: DemandProfile) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Hour indices of the national-peak day and the national-minimum day.

    Ties resolve to the earliest day. Requires a full-year hour axis.
    """
    if profile.hours.size != HOURS_PER_YEAR:
        raise ValidationError("extreme-day extraction needs a full-year profile")
    national = profile.national()

    def day_hours(hour_index: int) -> tuple[int, ...]:
        day = hour_index // 24
        return tuple(range(day * 24, day * 24 + 24))

    return day_hours(int(np.argmax(national))), day_hours(int(np.argmin(national)))


def load_profile(path, scenario: str | None = None, value_column: str | None = None) -> DemandProfile:
    """Read `region,hour,demand_mw` rows (or `heat_mw` for thermal series)."""
    path = Path(path)
    series: dict[str, dict[int, float]] = {}
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise ParseError("empty profile file", 1)
        header = [h.strip() for h in header]
        if value_column is None:
            value_column = header[2] if len(header) == 3 else "demand_mw"
        if header != ["region", "hour", value_column]:
            raise ParseError(
                f"expected header region,hour,{value_column}, got {','.join(header)}", 1
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise ParseError(f"expected 3 fields, got {len(row)}", lineno)
            region = row[0].strip()
            try:
                hour = int(row[1])
                value = float(row[2])
            except ValueError:
                raise ParseError(f"bad numeric value in {row!r}", lineno) from None
            series.setdefault(region, {})
            if hour in series[region]:
                raise ParseError(f"duplicate hour {hour} for region {region}", lineno)
            series[region][hour] = value

    if not series:
        raise ValidationError(f"profile {path.name} contains no data rows")
    regions = tuple(sorted(series))
    hour_sets = {frozenset(hours) for hours in series.values()}
    if len(hour_sets) != 1:
        raise MisalignedHours(f"regions in {path.name} disagree on the hour axis")
    hours = np.array(sorted(next(iter(hour_sets))), dtype=int)
    demand = np.array([[series[r][int(h)] for h in hours] for r in regions])
    return DemandProfile(
        scenario=scenario or path.stem,
        regions=regions,
        hours=hours,
        demand_mw=demand,
    )


def save_profile(profile: DemandProfile, path, value_column: str = "demand_mw") -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["region", "hour", value_column])
        for k, region in enumerate(profile.regions):
            for j, hour in enumerate(profile.hours):
                writer.writerow([region, int(hour), repr(float(profile.demand_mw[k, j]))])


def load_end_use_shares(path) -> dict[str, dict[str, float]]:
    """Read `region,end_use,share` rows into a nested mapping."""
    shares: dict[str, dict[str, float]] = {}
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["region", "end_use", "share"]:
            raise ParseError("expected header region,end_use,share", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise ParseError(f"expected 3 fields, got {len(row)}", lineno)
            try:
                value = float(row[2])
            except ValueError:
                raise ParseError(f"bad share in {row!r}", lineno) from None
            region, use = row[0].strip(), row[1].strip()
            if use in shares.get(region, {}):
                raise ParseError(f"duplicate end use {use} for region {region}", lineno)
            shares.setdefault(region, {})[use] = value
    return shares


def save_end_use_shares(shares: Mapping[str, Mapping[str, float]], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["region", "end_use", "share"])
        for region in sorted(shares):
            for use in sorted(shares[region]):
                writer.writerow([region, use, repr(float(shares[region][use]))])
