"""Classical baselines: ALNS, a giant-tour GA and a giant-tour tabu search."""
from .alns import AlnsParams, AlnsSolver, solve_alns
from .ga import GaParams, GaSolver, solve_ga
from .ts import TsParams, TsSolver, solve_ts

__all__ = [
    "AlnsParams", "AlnsSolver", "solve_alns",
    "GaParams", "GaSolver", "solve_ga",
    "TsParams", "TsSolver", "solve_ts",
]
