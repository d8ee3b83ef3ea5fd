"""Multiregional supply-use impact model.

Production is a cost-minimizing LP over regional supply-use tables:
industry outputs supply products via baseline market shares, consume
products via fixed technology coefficients, and regions exchange products
where trade is allowed. A capacity shock caps industry output; unmet final
demand is rationed at a heavy penalty. The change in value added per
region-industry prices the shock, and trade lets unaffected regions
substitute lost production (which can make their impact positive).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import (
    BaselineMismatch,
    ParseError,
    UnbalancedTables,
    ValidationError,
)
from .grid import RegionTable
from .numerics import LinearProgram, lp_solve
from .profiles import DemandProfile

__all__ = [
    "HOURS_PER_YEAR",
    "SupplyUseModel",
    "TechnologyCoefficients",
    "CapacityShock",
    "ImpactResult",
    "load_supply_use",
    "save_supply_use",
    "technology_coefficients",
    "assemble_program",
    "solve_baseline",
    "assess_impact",
    "shock_from_unserved",
]

HOURS_PER_YEAR = 8760

BALANCE_RTOL = 1e-6
SHARE_TOL = 1e-9
BASELINE_RTOL = 1e-6


@dataclass(frozen=True)
class SupplyUseModel:
    """Annual multiregional supply-use tables with a trade policy.

    supply[r, i, p] is industry i's output of product p in region r;
    use[r, p, i] is industry i's consumption of product p; final_demand
    [r, p] closes the balance. Tables must self-balance per (region,
    product): baseline interregional trade is zero by convention, trade
    only activates under shocks where trade_allowed[from, to, p] permits.
    """

    regions: tuple[str, ...]
    industries: tuple[str, ...]
    products: tuple[str, ...]
    supply: np.ndarray
    use: np.ndarray
    final_demand: np.ndarray
    value_added_coeff: np.ndarray
    trade_allowed: np.ndarray
    overcapacity: float = 0.025

    def __post_init__(self):
        nr, ni, np_ = len(self.regions), len(self.industries), len(self.products)
        if not (nr and ni and np_):
            raise ValidationError("model needs at least one region, industry, product")
        arrays = {
            "supply": (np.asarray(self.supply, dtype=float), (nr, ni, np_)),
            "use": (np.asarray(self.use, dtype=float), (nr, np_, ni)),
            "final_demand": (np.asarray(self.final_demand, dtype=float), (nr, np_)),
            "value_added_coeff": (np.asarray(self.value_added_coeff, dtype=float), (nr, ni)),
        }
        for name, (array, shape) in arrays.items():
            object.__setattr__(self, name, array)
            if array.shape != shape:
                raise ValidationError(f"{name} must have shape {shape}, got {array.shape}")
            if not np.isfinite(array).all() or (array < 0).any():
                raise ValidationError(f"{name} entries must be finite and nonnegative")
        trade = np.asarray(self.trade_allowed, dtype=bool)
        object.__setattr__(self, "trade_allowed", trade)
        if trade.shape != (nr, nr, np_):
            raise ValidationError(f"trade_allowed must have shape {(nr, nr, np_)}")
        if (self.value_added_coeff > 1.0).any():
            raise ValidationError("value-added coefficients must not exceed 1")
        if not 0.0 <= self.overcapacity < 1.0:
            raise ValidationError("overcapacity must lie in [0, 1)")
        self._check_balance()

    def _check_balance(self):
        supplied = self.supply.sum(axis=1)
        consumed = self.use.sum(axis=2) + self.final_demand
        scale = np.maximum(1.0, np.maximum(np.abs(supplied), np.abs(consumed)))
        residual = np.abs(supplied - consumed) / scale
        worst = np.unravel_index(int(np.argmax(residual)), residual.shape)
        if residual[worst] > BALANCE_RTOL:
            region = self.regions[worst[0]]
            product = self.products[worst[1]]
            raise UnbalancedTables(
                f"region {region}, product {product}: supplied "
                f"{supplied[worst]!r} vs consumed {consumed[worst]!r}"
            )

    @cached_property
    def baseline_output(self) -> np.ndarray:
        """x0[r, i]: industry output implied by the supply table."""
        return self.supply.sum(axis=2)

    @cached_property
    def region_pos(self) -> dict[str, int]:
        return {r: k for k, r in enumerate(self.regions)}


@dataclass(frozen=True)
class TechnologyCoefficients:
    """Per-unit-output production recipes.

    a[r, p, i] is product input per unit of industry output; s[r, i, p]
    is the market-share split of output over products (rows sum to one
    for active industries).
    """

    a: np.ndarray
    s: np.ndarray


def technology_coefficients(model: SupplyUseModel) -> TechnologyCoefficients:
    x0 = model.baseline_output
    active = x0 > 0.0
    safe = np.where(active, x0, 1.0)
    a = model.use / safe[:, None, :]
    s = model.supply / safe[:, :, None]
    a[~np.repeat(active[:, None, :], len(model.products), axis=1)] = 0.0
    s[~active] = 0.0
    sums = s.sum(axis=2)
    bad = active & (np.abs(sums - 1.0) > SHARE_TOL)
    if bad.any():
        r, i = map(int, np.argwhere(bad)[0])
        raise ValidationError(
            f"market shares for region {model.regions[r]}, industry "
            f"{model.industries[i]} sum to {sums[r, i]!r}"
        )
    return TechnologyCoefficients(a=a, s=s)


@dataclass(frozen=True)
class CapacityShock:
    """Fractional capacity loss per region, uniform or per industry.

    delta maps region -> fraction, or region -> {industry: fraction};
    regions absent from the mapping are unshocked.
    """

    delta: Mapping[str, float | Mapping[str, float]]
    duration_hours: float = 1.0

    def __post_init__(self):
        if not self.duration_hours > 0.0:
            raise ValidationError("event duration must be positive")
        for region, value in self.delta.items():
            fractions = value.values() if isinstance(value, Mapping) else (value,)
            for fraction in fractions:
                if not 0.0 <= fraction <= 1.0:
                    raise ValidationError(
                        f"shock fraction for region {region} must lie in [0, 1]"
                    )

    def resolve(self, model: SupplyUseModel) -> np.ndarray:
        """Dense delta[r, i] aligned with the model's axes."""
        unknown = sorted(set(self.delta) - set(model.regions))
        if unknown:
            raise ValidationError(f"shock names unknown regions: {', '.join(unknown)}")
        out = np.zeros((len(model.regions), len(model.industries)))
        for region, value in self.delta.items():
            r = model.region_pos[region]
            if isinstance(value, Mapping):
                bad = sorted(set(value) - set(model.industries))
                if bad:
                    raise ValidationError(
                        f"shock names unknown industries: {', '.join(bad)}"
                    )
                for industry, fraction in value.items():
                    out[r, model.industries.index(industry)] = fraction
            else:
                out[r, :] = value
        return out


@dataclass(frozen=True)
class ImpactResult:
    """Value-added changes and rationing for one shock event."""

    regions: tuple[str, ...]
    industries: tuple[str, ...]
    products: tuple[str, ...]
    delta_va: np.ndarray
    rationing: np.ndarray
    total_cost: float
    duration_hours: float

    def __post_init__(self):
        implied = -np.minimum(0.0, self.delta_va).sum()
        if abs(implied - self.total_cost) > 1e-6 * max(1.0, abs(implied)):
            raise ValidationError(
                f"total cost {self.total_cost!r} does not match losses {implied!r}"
            )

    def va_of(self, region: str, industry: str) -> float:
        return float(
            self.delta_va[self.regions.index(region), self.industries.index(industry)]
        )

    def regional_cost(self) -> dict[str, float]:
        """Per-region loss: the negative value-added changes, sign-flipped."""
        losses = -np.minimum(0.0, self.delta_va).sum(axis=1)
        return {region: float(losses[k]) for k, region in enumerate(self.regions)}


def _trade_routes(model: SupplyUseModel) -> list[tuple[int, int, int]]:
    routes = []
    nr = len(model.regions)
    for r_from in range(nr):
        for r_to in range(nr):
            if r_from == r_to:
                continue
            for p in range(len(model.products)):
                if model.trade_allowed[r_from, r_to, p]:
                    routes.append((r_from, r_to, p))
    return routes


def default_penalty(model: SupplyUseModel) -> float:
    """Rationing penalty: 10x the largest technology-implied unit cost.

    The unit cost of product p in region r is the total output required
    per unit of net final delivery, read off the production-chain inverse
    when it exists; otherwise a flat 10 is used.
    """
    tech = technology_coefficients(model)
    worst = 1.0
    ni, np_ = len(model.industries), len(model.products)
    if ni == np_:
        for r in range(len(model.regions)):
            net = tech.s[r].T - tech.a[r]
            try:
                inv = np.linalg.inv(net)
            except np.linalg.LinAlgError:
                continue
            if (inv < -1e-9).any():
                continue
            worst = max(worst, float(np.abs(inv).sum(axis=0).max()))
    return 10.0 * worst


def assemble_program(
    model: SupplyUseModel,
    delta: np.ndarray,
    *,
    penalty: float | None = None,
    trade_epsilon: float = 1e-7,
) -> tuple[LinearProgram, list[tuple[int, int, int]]]:
    """Build the production LP for a dense shock array.

    Variables are industry outputs x[r, i], trade flows t[from, to, p]
    over allowed routes, and rationed final demand m[r, p] <= f[r, p].
    Each (region, product) balance requires supply plus imports plus
    rationing to cover intermediate use, final demand, and exports. The
    tiny trade epsilon breaks ties so unused trade stays at zero.
    """
    nr, ni, np_ = len(model.regions), len(model.industries), len(model.products)
    tech = technology_coefficients(model)
    routes = _trade_routes(model)
    x0 = model.baseline_output
    if penalty is None:
        penalty = default_penalty(model)

    n_x = nr * ni
    n_t = len(routes)
    n_m = nr * np_
    n = n_x + n_t + n_m

    def xpos(r, i):
        return r * ni + i

    def mpos(r, p):
        return n_x + n_t + r * np_ + p

    objective = np.concatenate(
        [np.ones(n_x), np.full(n_t, trade_epsilon), np.full(n_m, penalty)]
    )
    bounds = np.zeros((n, 2))
    bounds[:, 1] = np.inf
    cap = (1.0 - delta) * (1.0 + model.overcapacity) * x0
    bounds[:n_x, 1] = cap.reshape(-1)
    bounds[n_x + n_t :, 1] = model.final_demand.reshape(-1)

    a_ub = np.zeros((nr * np_, n))
    b_ub = np.zeros(nr * np_)
    for r in range(nr):
        for p in range(np_):
            row = r * np_ + p
            for i in range(ni):
                a_ub[row, xpos(r, i)] = tech.a[r, p, i] - tech.s[r, i, p]
            a_ub[row, mpos(r, p)] = -1.0
            b_ub[row] = -model.final_demand[r, p]
    for k, (r_from, r_to, p) in enumerate(routes):
        a_ub[r_to * np_ + p, n_x + k] = -1.0
        a_ub[r_from * np_ + p, n_x + k] = 1.0

    program = LinearProgram(
        objective=objective, a_ub=a_ub, b_ub=b_ub, bounds=bounds
    )
    return program, routes


def _solve(model: SupplyUseModel, delta: np.ndarray, penalty, trade_epsilon):
    program, routes = assemble_program(
        model, delta, penalty=penalty, trade_epsilon=trade_epsilon
    )
    solution = lp_solve(program)
    if solution.status != "optimal":
        raise ValidationError(f"impact program unexpectedly {solution.status}")
    nr, ni, np_ = len(model.regions), len(model.industries), len(model.products)
    n_x = nr * ni
    x = solution.x[:n_x].reshape(nr, ni)
    t = solution.x[n_x : n_x + len(routes)]
    m = solution.x[n_x + len(routes) :].reshape(nr, np_)
    return x, t, m, routes, float(solution.objective_value)


def solve_baseline(
    model: SupplyUseModel, *, penalty: float | None = None, trade_epsilon: float = 1e-7
) -> np.ndarray:
    """Re-derive baseline outputs from the LP and check calibration.

    The unshocked optimum must reproduce the supply-table row sums with
    zero rationing; any drift means the tables do not describe a
    cost-minimal baseline.
    """
    delta = np.zeros((len(model.regions), len(model.industries)))
    x, _, m, _, _ = _solve(model, delta, penalty, trade_epsilon)
    x0 = model.baseline_output
    scale = np.maximum(1.0, x0)
    drift = np.abs(x - x0) / scale
    worst = np.unravel_index(int(np.argmax(drift)), drift.shape)
    if drift[worst] > BASELINE_RTOL or m.max() > BASELINE_RTOL:
        if drift[worst] > BASELINE_RTOL:
            r, i = worst
            detail = (
                f"region {model.regions[r]}, industry {model.industries[i]}: "
                f"LP output {x[worst]!r} vs table {x0[worst]!r}"
            )
        else:
            r, p = np.unravel_index(int(np.argmax(m)), m.shape)
            detail = (
                f"region {model.regions[r]}, product {model.products[p]}: "
                f"baseline rationing {m.max()!r}"
            )
        raise BaselineMismatch(detail)
    return x


def assess_impact(
    model: SupplyUseModel,
    shock: CapacityShock,
    *,
    penalty: float | None = None,
    trade_epsilon: float = 1e-7,
) -> ImpactResult:
    """Price a capacity shock as value-added change per region-industry.

    Annual-basis LP results are scaled by duration/8760. The value-added
    change is v * (x - x0) minus each industry's baseline-market-share
    slice of any rationing not already explained by its region's supply
    drop, so losses are never double counted. A shock with no capacity
    reduction anywhere is an identity and skips the program entirely.
    """
    delta = shock.resolve(model)
    if not delta.any():
        zero = np.zeros_like(model.value_added_coeff)
        return ImpactResult(
            regions=model.regions,
            industries=model.industries,
            products=model.products,
            delta_va=zero,
            rationing=np.zeros_like(model.final_demand),
            total_cost=0.0,
            duration_hours=shock.duration_hours,
        )
    x, _, m, _, _ = _solve(model, delta, penalty, trade_epsilon)
    x0 = model.baseline_output
    tech = technology_coefficients(model)

    drop = np.einsum("rip,ri->rp", tech.s, np.maximum(0.0, x0 - x))
    unexplained = np.maximum(0.0, m - drop)
    supply_by_product = model.supply.sum(axis=1)
    share = model.supply / np.where(
        supply_by_product > 0.0, supply_by_product, 1.0
    )[:, None, :]
    allocated = np.einsum("rip,rp->ri", share, unexplained)

    annual_va = model.value_added_coeff * (x - x0) - model.value_added_coeff * allocated
    delta_va = annual_va * shock.duration_hours / HOURS_PER_YEAR
    rationing = m * shock.duration_hours / HOURS_PER_YEAR
    total_cost = float(-np.minimum(0.0, delta_va).sum())
    return ImpactResult(
        regions=model.regions,
        industries=model.industries,
        products=model.products,
        delta_va=delta_va,
        rationing=rationing,
        total_cost=total_cost,
        duration_hours=shock.duration_hours,
    )


def shock_from_unserved(record, regions: RegionTable, profile: DemandProfile) -> CapacityShock:
    """Convert a dispatch record into per-economic-region capacity loss.

    Districts aggregate into their parent economic region; the loss
    fraction is unserved power over demanded power at the record's hour,
    capped at 1. Regions with zero demand take a zero shock. The event
    lasts one hour.
    """
    unserved: dict[str, float] = {}
    demand: dict[str, float] = {}
    for district, mw in record.unserved_mw_per_region.items():
        if district not in regions.by_id:
            raise ValidationError(f"record names unknown district {district}")
        parent = regions.by_id[district].parent
        unserved[parent] = unserved.get(parent, 0.0) + mw
        demand[parent] = demand.get(parent, 0.0) + profile.demand_at(district, record.hour)
    delta = {}
    for parent in sorted(unserved):
        if demand[parent] <= 0.0:
            delta[parent] = 0.0
        else:
            delta[parent] = min(1.0, unserved[parent] / demand[parent])
    return CapacityShock(delta=delta, duration_hours=1.0)


SUPPLY_USE_FILES = (
    "supply.csv",
    "use.csv",
    "final_demand.csv",
    "value_added.csv",
    "trade.csv",
)


def _read_rows(path: Path, header: list[str]) -> list[tuple[list[str], int]]:
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        first = next(reader, None)
        if first is None or [h.strip() for h in first] != header:
            raise ParseError(f"{path.name}: expected header {','.join(header)}", 1)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"{path.name}: expected {len(header)} fields, got {len(row)}", lineno
                )
            rows.append(([field.strip() for field in row], lineno))
    return rows


def _value(text: str, path: Path, lineno: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"{path.name}: bad numeric value {text!r}", lineno) from None


def load_supply_use(directory, *, overcapacity: float = 0.025) -> SupplyUseModel:
    """Assemble a model from the five-file CSV set in one directory.

    supply.csv `region,industry,product,value`; use.csv
    `region,product,industry,value`; final_demand.csv
    `region,product,value`; value_added.csv `region,industry,coefficient`;
    trade.csv `from,to,product,allowed`. Unlisted combinations default to
    zero (trade: disallowed).
    """
    directory = Path(directory)
    supply_rows = _read_rows(directory / "supply.csv", ["region", "industry", "product", "value"])
    use_rows = _read_rows(directory / "use.csv", ["region", "product", "industry", "value"])
    final_rows = _read_rows(directory / "final_demand.csv", ["region", "product", "value"])
    va_rows = _read_rows(directory / "value_added.csv", ["region", "industry", "coefficient"])
    trade_rows = _read_rows(directory / "trade.csv", ["from", "to", "product", "allowed"])

    regions = sorted(
        {row[0] for row, _ in supply_rows}
        | {row[0] for row, _ in use_rows}
        | {row[0] for row, _ in final_rows}
        | {row[0] for row, _ in va_rows}
        | {row[0] for row, _ in trade_rows}
        | {row[1] for row, _ in trade_rows}
    )
    industries = sorted(
        {row[1] for row, _ in supply_rows}
        | {row[2] for row, _ in use_rows}
        | {row[1] for row, _ in va_rows}
    )
    products = sorted(
        {row[2] for row, _ in supply_rows}
        | {row[1] for row, _ in use_rows}
        | {row[1] for row, _ in final_rows}
        | {row[2] for row, _ in trade_rows}
    )
    rpos = {r: k for k, r in enumerate(regions)}
    ipos = {i: k for k, i in enumerate(industries)}
    ppos = {p: k for k, p in enumerate(products)}

    supply = np.zeros((len(regions), len(industries), len(products)))
    use = np.zeros((len(regions), len(products), len(industries)))
    final = np.zeros((len(regions), len(products)))
    va = np.zeros((len(regions), len(industries)))
    trade = np.zeros((len(regions), len(regions), len(products)), dtype=bool)

    supply_path = directory / "supply.csv"
    for row, lineno in supply_rows:
        supply[rpos[row[0]], ipos[row[1]], ppos[row[2]]] += _value(row[3], supply_path, lineno)
    use_path = directory / "use.csv"
    for row, lineno in use_rows:
        use[rpos[row[0]], ppos[row[1]], ipos[row[2]]] += _value(row[3], use_path, lineno)
    final_path = directory / "final_demand.csv"
    for row, lineno in final_rows:
        final[rpos[row[0]], ppos[row[1]]] += _value(row[2], final_path, lineno)
    va_path = directory / "value_added.csv"
    for row, lineno in va_rows:
        va[rpos[row[0]], ipos[row[1]]] = _value(row[2], va_path, lineno)
    trade_path = directory / "trade.csv"
    for row, lineno in trade_rows:
        allowed = row[3].strip().lower()
        if allowed not in {"0", "1", "true", "false"}:
            raise ParseError(f"trade.csv: allowed must be 0/1/true/false", lineno)
        trade[rpos[row[0]], rpos[row[1]], ppos[row[2]]] = allowed in {"1", "true"}

    return SupplyUseModel(
        regions=tuple(regions),
        industries=tuple(industries),
        products=tuple(products),
        supply=supply,
        use=use,
        final_demand=final,
        value_added_coeff=va,
        trade_allowed=trade,
        overcapacity=overcapacity,
    )


def save_supply_use(model: SupplyUseModel, directory) -> None:
    """Write the five-file CSV set (omitting zero rows, except value added)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    def dump(name, header, rows):
        with open(directory / name, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            writer.writerows(rows)

    dump(
        "supply.csv",
        ["region", "industry", "product", "value"],
        (
            [model.regions[r], model.industries[i], model.products[p], repr(float(v))]
            for (r, i, p), v in np.ndenumerate(model.supply)
            if v != 0.0
        ),
    )
    dump(
        "use.csv",
        ["region", "product", "industry", "value"],
        (
            [model.regions[r], model.products[p], model.industries[i], repr(float(v))]
            for (r, p, i), v in np.ndenumerate(model.use)
            if v != 0.0
        ),
    )
    dump(
        "final_demand.csv",
        ["region", "product", "value"],
        (
            [model.regions[r], model.products[p], repr(float(v))]
            for (r, p), v in np.ndenumerate(model.final_demand)
            if v != 0.0
        ),
    )
    dump(
        "value_added.csv",
        ["region", "industry", "coefficient"],
        (
            [model.regions[r], model.industries[i], repr(float(v))]
            for (r, i), v in np.ndenumerate(model.value_added_coeff)
        ),
    )
    dump(
        "trade.csv",
        ["from", "to", "product", "allowed"],
        (
            [model.regions[a], model.regions[b], model.products[p], "1"]
            for (a, b, p), allowed in np.ndenumerate(model.trade_allowed)
            if allowed
        ),
    )
