"""Relaxation Crank-Nicolson finite element solver for the Schrodinger-Poisson system."""
from .grid import BcKind, ConfigurationError, Domain, Grid, build_grid
from .stepper import (CosmologyModel, NumericalError, PhysParams, SchemeState, SolverSettings,
                      SourceTerms, TimeGrid, initialize, step, step_cosmology)
from .invariants import InvariantRecord, energy, mass, momentum, record

__version__ = "0.1.0"

__all__ = [
    "BcKind", "ConfigurationError", "Domain", "Grid", "build_grid",
    "CosmologyModel", "NumericalError", "PhysParams", "SchemeState", "SolverSettings",
    "SourceTerms", "TimeGrid", "initialize", "step", "step_cosmology",
    "InvariantRecord", "energy", "mass", "momentum", "record",
]
