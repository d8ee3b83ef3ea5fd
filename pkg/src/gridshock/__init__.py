"""Simulation of electricity generation shortages and their economic impact.

The package couples a DC power-flow network model with Monte Carlo sampling
of generation outages, optimal redispatch with load shedding, and a
multiregional supply-use model that prices unserved electricity in lost
value added.
"""

__version__ = "0.1.0"
