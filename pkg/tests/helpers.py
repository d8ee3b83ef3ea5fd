"""Shared fixture factories for the test suite."""

from __future__ import annotations

import numpy as np

from gridshock.grid import Branch, Bus, Generator, Grid


def random_connected_grid(rng: np.random.Generator, max_buses: int = 30) -> Grid:
    """A random connected single-voltage network: spanning tree plus chords."""
    n = int(rng.integers(2, max_buses + 1))
    buses = []
    for k in range(n):
        if k == 0:
            kind = "generation"
        elif k == 1 or rng.random() < 0.5:
            kind = "demand"
        else:
            kind = "substation"
        region = f"r{k}" if kind == "demand" else None
        buses.append(Bus(id=f"n{k:02d}", voltage_kv=400.0, kind=kind, region=region))

    edges = set()
    branches = []

    def add_edge(i, j):
        key = (min(i, j), max(i, j))
        if i == j or key in edges:
            return
        edges.add(key)
        branches.append(
            Branch(
                id=f"e{len(branches):03d}",
                from_bus=f"n{i:02d}",
                to_bus=f"n{j:02d}",
                kind="line",
                susceptance_pu=float(np.round(rng.uniform(1.0, 20.0), 3)),
                rating_mw=1e6,
            )
        )

    for k in range(1, n):
        add_edge(int(rng.integers(0, k)), k)
    for _ in range(int(rng.integers(0, n // 2 + 1))):
        add_edge(int(rng.integers(0, n)), int(rng.integers(0, n)))

    generators = (Generator(id="g0", bus="n00", rated_mw=1000.0, capacity_factor=1.0, technology="thermal"),)
    return Grid(buses=tuple(buses), branches=tuple(branches), generators=generators)


def random_injections(rng: np.random.Generator, grid: Grid) -> dict[str, float]:
    return {bus.id: float(np.round(rng.uniform(-500.0, 500.0), 3)) for bus in grid.buses}


def bus_balances(grid: Grid, injections: dict[str, float], solution) -> dict[str, float]:
    """Net injection minus net outgoing flow per bus; zero means conserved."""
    balance = {bus.id: float(injections.get(bus.id, 0.0)) for bus in grid.buses}
    for br_id, flow in zip(solution.branch_ids, solution.flows_mw):
        br = grid.branch_by_id[br_id]
        balance[br.from_bus] -= float(flow)
        balance[br.to_bus] += float(flow)
    return balance
