"""Post-processing of experiment results into headline statistics.

Takes the sweep records plus their assessed per-record costs and produces
cost-versus-loss curves (median/min/max over orderings and hours), the
first loss fraction with any economic impact, marginal cost per GW across
scenario peaks, regional relative change against the current-day profile,
and population-weighted shares of regions that end up better or worse off.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from statistics import median
from typing import Mapping, Sequence

from .errors import DegeneratePeaks, MissingCosts, ValidationError
from .failures import ResultTable
from .grid import RegionTable
from .profiles import DemandProfile

__all__ = [
    "CurvePoint",
    "CostCurve",
    "RegionalChange",
    "build_cost_curve",
    "first_impact_fraction",
    "marginal_cost_per_gw",
    "lost_load_slope",
    "regional_relative_change",
    "population_share",
    "population_shares",
    "zero_impact_demand_gw",
    "write_cost_curves",
    "write_marginal_slopes",
    "write_regional_change",
    "write_population_shares",
]

RecordKey = tuple[int, float, str, int]


@dataclass(frozen=True)
class CurvePoint:
    fraction: float
    median: float
    minimum: float
    maximum: float

    def __post_init__(self):
        if not self.minimum <= self.median <= self.maximum:
            raise ValidationError(
                f"curve point at {self.fraction!r} is not ordered: "
                f"{self.minimum!r}, {self.median!r}, {self.maximum!r}"
            )


@dataclass(frozen=True)
class CostCurve:
    """Cost statistics per loss fraction for one scenario."""

    scenario: str
    points: tuple[CurvePoint, ...]

    def __post_init__(self):
        fractions = [p.fraction for p in self.points]
        if any(b <= a for a, b in zip(fractions, fractions[1:])):
            raise ValidationError("curve fractions must be strictly ascending")

    def median_at(self, fraction: float) -> float:
        for point in self.points:
            if point.fraction == fraction:
                return point.median
        raise ValidationError(
            f"curve for {self.scenario} has no point at fraction {fraction!r}"
        )


@dataclass(frozen=True)
class RegionalChange:
    """Per-region cost ratios of a scenario against the baseline scenario.

    A ratio of None marks 0/0 (no cost under either profile); inf marks a
    cost that appears only under the compared scenario.
    """

    scenario: str
    baseline: str
    fraction: float
    ratios: Mapping[str, float | None]

    def __post_init__(self):
        for region, ratio in self.ratios.items():
            if ratio is not None and not ratio >= 0.0:
                raise ValidationError(f"ratio for region {region} must be >= 0")


def build_cost_curve(
    results: ResultTable, costs: Mapping[RecordKey, float], scenario: str
) -> CostCurve:
    """Median/min/max cost per fraction, pooled over orderings and hours."""
    by_fraction: dict[float, list[float]] = {}
    for record in results.records:
        if record.scenario != scenario:
            continue
        if record.key not in costs:
            raise MissingCosts(f"no assessed cost for record {record.key}")
        by_fraction.setdefault(record.loss_fraction, []).append(costs[record.key])
    if not by_fraction:
        raise ValidationError(f"no records for scenario {scenario!r}")
    points = tuple(
        CurvePoint(
            fraction=fraction,
            median=float(median(values)),
            minimum=min(values),
            maximum=max(values),
        )
        for fraction, values in sorted(by_fraction.items())
    )
    return CostCurve(scenario=scenario, points=points)


def first_impact_fraction(curve: CostCurve, threshold: float = 0.0) -> float | None:
    """Smallest fraction whose median cost exceeds the threshold, else None."""
    if not curve.points:
        raise ValidationError("cost curve has no points")
    for point in curve.points:
        if point.median > threshold:
            return point.fraction
    return None


def marginal_cost_per_gw(
    curves: Mapping[str, CostCurve],
    peak_demands_gw: Mapping[str, float],
    fraction: float,
) -> float:
    """Cost increase per GW of peak demand at a fixed loss fraction.

    Fits median cost against scenario peak demand: the exact secant for
    two scenarios, otherwise the least-squares slope.
    """
    scenarios = sorted(curves)
    if len(scenarios) < 2:
        raise ValidationError("marginal cost needs at least two scenarios")
    missing = [s for s in scenarios if s not in peak_demands_gw]
    if missing:
        raise ValidationError(f"no peak demand for scenarios: {', '.join(missing)}")
    pairs = [
        (peak_demands_gw[s], curves[s].median_at(fraction)) for s in scenarios
    ]
    xs = [x for x, _ in pairs]
    ys = [y for _, y in pairs]
    if max(xs) == min(xs):
        raise DegeneratePeaks("all scenario peak demands are equal")
    if len(pairs) == 2:
        return float((ys[1] - ys[0]) / (xs[1] - xs[0]))
    x_mean = sum(xs) / len(xs)
    y_mean = sum(ys) / len(ys)
    sxx = sum((x - x_mean) ** 2 for x in xs)
    sxy = sum((x - x_mean) * (y - y_mean) for x, y in zip(xs, ys))
    return float(sxy / sxx)


def lost_load_slope(
    results: ResultTable, costs: Mapping[RecordKey, float], scenario: str
) -> float | None:
    """Cost per GW of median unserved load, fitted across loss fractions.

    The companion reading of the marginal cost: instead of comparing
    scenarios at one fraction, one scenario's curve is regressed on its
    own median unserved power. None when the scenario never sheds.
    """
    unserved: dict[float, list[float]] = {}
    cost: dict[float, list[float]] = {}
    for record in results.records:
        if record.scenario != scenario:
            continue
        if record.key not in costs:
            raise MissingCosts(f"no assessed cost for record {record.key}")
        unserved.setdefault(record.loss_fraction, []).append(
            record.total_unserved_mw / 1000.0
        )
        cost.setdefault(record.loss_fraction, []).append(costs[record.key])
    if not unserved:
        raise ValidationError(f"no records for scenario {scenario!r}")
    xs = [float(median(v)) for _, v in sorted(unserved.items())]
    ys = [float(median(v)) for _, v in sorted(cost.items())]
    if max(xs) == min(xs):
        return None
    if len(xs) == 2:
        return float((ys[1] - ys[0]) / (xs[1] - xs[0]))
    x_mean = sum(xs) / len(xs)
    y_mean = sum(ys) / len(ys)
    sxx = sum((x - x_mean) ** 2 for x in xs)
    sxy = sum((x - x_mean) * (y - y_mean) for x, y in zip(xs, ys))
    return float(sxy / sxx)


def regional_relative_change(
    results: ResultTable,
    regional_costs: Mapping[RecordKey, Mapping[str, float]],
    scenario: str,
    fraction: float,
    *,
    baseline: str = "current",
) -> RegionalChange:
    """Ratio of median regional cost to the baseline scenario's."""

    def medians_for(name: str) -> dict[str, float]:
        samples: dict[str, list[float]] = {}
        seen = False
        for record in results.records:
            if record.scenario != name or record.loss_fraction != fraction:
                continue
            seen = True
            if record.key not in regional_costs:
                raise MissingCosts(f"no assessed cost for record {record.key}")
            for region, value in regional_costs[record.key].items():
                samples.setdefault(region, []).append(value)
        if not seen:
            raise ValidationError(
                f"no records for scenario {name!r} at fraction {fraction!r}"
            )
        return {region: float(median(v)) for region, v in samples.items()}

    scenario_medians = medians_for(scenario)
    baseline_medians = medians_for(baseline)
    if set(scenario_medians) != set(baseline_medians):
        raise ValidationError("scenario and baseline records disagree on regions")
    ratios: dict[str, float | None] = {}
    for region in sorted(scenario_medians):
        num, den = scenario_medians[region], baseline_medians[region]
        if den == 0.0:
            ratios[region] = None if num == 0.0 else math.inf
        else:
            ratios[region] = num / den
    return RegionalChange(
        scenario=scenario, baseline=baseline, fraction=fraction, ratios=ratios
    )


def _region_populations(change: RegionalChange, regions: RegionTable) -> dict[str, float]:
    ids = set(change.ratios)
    direct = {r.id: r.population for r in regions.regions}
    if ids <= set(direct):
        return {name: direct[name] for name in ids}
    by_parent: dict[str, float] = {}
    for region in regions.regions:
        by_parent[region.parent] = by_parent.get(region.parent, 0.0) + region.population
    if ids <= set(by_parent):
        return {name: by_parent[name] for name in ids}
    missing = sorted(ids - set(by_parent) - set(direct))
    raise ValidationError(f"no population data for regions: {', '.join(missing)}")


def population_share(
    change: RegionalChange, regions: RegionTable, direction: str
) -> float:
    """Population fraction living where costs moved the given direction.

    direction is "worse" (ratio > 1) or "better" (ratio < 1); unchanged
    and no-change regions count in neither.
    """
    if direction not in ("worse", "better"):
        raise ValidationError(f"direction must be worse or better, got {direction!r}")
    populations = _region_populations(change, regions)
    total = sum(populations.values())
    if total <= 0.0:
        raise ValidationError("total population must be positive")
    selected = 0.0
    for region, ratio in change.ratios.items():
        if ratio is None or ratio == 1.0:
            continue
        if (ratio > 1.0) == (direction == "worse"):
            selected += populations[region]
    return selected / total


def population_shares(
    change: RegionalChange, regions: RegionTable
) -> tuple[float, float, float]:
    """(worse, better, unchanged) shares; unchanged closes the sum to 1.

    The complement is taken against the rounded worse + better so the
    returned triple sums to exactly 1.0 in floating point.
    """
    worse = population_share(change, regions, "worse")
    better = population_share(change, regions, "better")
    return worse, better, 1.0 - (worse + better)


def zero_impact_demand_gw(
    results: ResultTable,
    costs: Mapping[RecordKey, float],
    profiles: Mapping[str, DemandProfile],
) -> float | None:
    """Largest national demand whose cells show zero median cost everywhere.

    Scans each studied (scenario, hour), computes that hour's national
    demand, and keeps it when the median cost over orderings is zero at
    every loss fraction. None when no such hour exists.
    """
    cells: dict[tuple[str, int], dict[float, list[float]]] = {}
    for record in results.records:
        if record.key not in costs:
            raise MissingCosts(f"no assessed cost for record {record.key}")
        cell = cells.setdefault((record.scenario, record.hour), {})
        cell.setdefault(record.loss_fraction, []).append(costs[record.key])
    best = None
    for (scenario, hour), by_fraction in cells.items():
        if scenario not in profiles:
            raise ValidationError(f"no profile provided for scenario {scenario!r}")
        if all(float(median(v)) == 0.0 for v in by_fraction.values()):
            profile = profiles[scenario]
            demand = float(profile.national()[profile.hour_pos[hour]]) / 1000.0
            if best is None or demand > best:
                best = demand
    return best


def write_cost_curves(curves: Sequence[CostCurve], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["scenario", "fraction", "median", "min", "max"])
        for curve in curves:
            for point in curve.points:
                writer.writerow(
                    [
                        curve.scenario,
                        repr(point.fraction),
                        repr(point.median),
                        repr(point.minimum),
                        repr(point.maximum),
                    ]
                )


def write_marginal_slopes(rows: Sequence[tuple[str, str, float | None, float]], path) -> None:
    """Rows are (axis, scenario, fraction, slope); both slope readings share
    the file, distinguished by the axis column."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["axis", "scenario", "fraction", "slope_per_gw"])
        for axis, scenario, fraction, slope in rows:
            writer.writerow(
                [
                    axis,
                    scenario,
                    "" if fraction is None else repr(float(fraction)),
                    repr(float(slope)),
                ]
            )


def write_regional_change(change: RegionalChange, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["region", "ratio"])
        for region in sorted(change.ratios):
            ratio = change.ratios[region]
            writer.writerow([region, "" if ratio is None else repr(ratio)])


def write_population_shares(
    rows: Sequence[tuple[str, float, float, float]], path
) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["scenario", "worse", "better", "unchanged"])
        for scenario, worse, better, unchanged in rows:
            writer.writerow([scenario, repr(worse), repr(better), repr(unchanged)])
