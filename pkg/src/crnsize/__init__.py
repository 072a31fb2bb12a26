"""Small chemical reaction networks that haltingly compute integers."""

__version__ = "0.1.0"

from .analysis import (
    ExploreCaps,
    Verdict,
    coverability,
    haltingly_computes,
    lumped_haltingly_computes,
    simulate,
    stably_computes,
    stochastic_halting_check,
    well_led_invariance,
)
from .crn import Configuration, Crn, Reaction
from .encoders import EncodeOptions, compile_binary, compile_permutation, compile_program, ks_upper_bound
from .machines import RegisterMachineProgram, TuringMachine, parse_rm, run_rm, run_tm
from .rm_compiler import BoundSpec, compile_rm

__all__ = [
    "BoundSpec", "Configuration", "Crn", "EncodeOptions", "ExploreCaps", "Reaction",
    "RegisterMachineProgram", "TuringMachine", "Verdict", "compile_binary", "compile_permutation",
    "compile_program", "compile_rm", "coverability", "haltingly_computes", "ks_upper_bound",
    "lumped_haltingly_computes", "parse_rm", "run_rm", "run_tm", "simulate", "stably_computes",
    "stochastic_halting_check", "well_led_invariance",
]
