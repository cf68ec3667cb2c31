"""Two-scale solver for elastoplastic truss-based lattice structures.

A macroscale plane FE solver obtains its constitutive response at every
integration point from a periodic truss unit-cell solve; a full-resolution
lattice solver provides the reference solutions.
"""

__version__ = "0.1.0"

from .material import (ALSI10MG, ConstitutiveError, MaterialParams, PlasticState,
                       StrutResponse, VIRGIN, return_map, yield_function)
from .unitcell import (CellKind, MicroDivergenceError, MicroResult, UnitCellTopology,
                       macro_stress, macro_tangent, make_unit_cell, micro_solve,
                       pinv, sensitivity, strut_strain)
from .macrofe import (DirichletSet, LoadSchedule, MacroModel, MicroPoint,
                      assemble_global, element_strain, reaction_sum, shape_functions,
                      solve_increment, solve_macro)
from .dns import DnsLattice, dns_solve, generate_lattice, yield_map
from .scenarios import (CurveRecord, Scenario, ScenarioSpec, build, build_beam,
                        build_notched, build_plate, poisson_ratio,
                        run_dns, run_homogenization)
from .stepping import SolveError, SolverOptions

__all__ = [
    "ALSI10MG", "CellKind", "ConstitutiveError", "CurveRecord", "DirichletSet",
    "DnsLattice", "LoadSchedule", "MacroModel", "MaterialParams",
    "MicroDivergenceError", "MicroPoint", "MicroResult", "PlasticState",
    "Scenario", "ScenarioSpec", "SolveError", "SolverOptions", "StrutResponse",
    "UnitCellTopology", "VIRGIN", "assemble_global", "build", "build_beam",
    "build_notched", "build_plate", "dns_solve", "element_strain",
    "generate_lattice", "macro_stress", "macro_tangent", "make_unit_cell",
    "micro_solve", "pinv", "poisson_ratio", "reaction_sum", "return_map",
    "run_dns", "run_homogenization", "sensitivity", "shape_functions",
    "solve_increment", "solve_macro", "strut_strain", "yield_function",
    "yield_map",
]
