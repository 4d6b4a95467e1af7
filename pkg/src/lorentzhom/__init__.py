"""Homogenization of elastodynamics with soft inclusions under a strong Lorentz term.

Cell problems and effective coefficients (``unitcell``, ``perfem``,
``correctors``), the constrained spectrum and memory kernels (``spectrum``,
``kernel``), the homogenized time stepper (``macro``), the direct fine-scale
simulator (``finescale``) and the artifact pipeline behind the ``lorentzhom``
command (``pipeline``, ``cli``).
"""
from .correctors import HomogenizedCoefficients, homogenized_coefficients, solve_correctors
from .errors import LorentzHomError
from .finescale import FineSolver, assemble_fine, phase_average, run_fine, step_fine
from .kernel import kernel_series, kernel_wave_oracle, resolvent_kernel, volterra_resolve
from .kernels import BACKEND
from .macro import MacroGrid, MacroProblem, assemble_forcing_F, reconstruct_limits, run_macro, step_macro
from .perfem import ElasticTensor, assemble_constrained_forms, assemble_periodic_elasticity
from .pipeline import Study, emit_report, load_config
from .spectrum import ModeSet, solve_modes, sum_rule_defect
from .unitcell import FieldSpec, build_geometry, sample_field

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ElasticTensor", "FieldSpec", "FineSolver", "HomogenizedCoefficients", "LorentzHomError",
    "MacroGrid", "MacroProblem", "ModeSet", "Study", "assemble_constrained_forms", "assemble_fine",
    "assemble_forcing_F", "assemble_periodic_elasticity", "build_geometry", "emit_report", "homogenized_coefficients",
    "kernel_series", "kernel_wave_oracle", "load_config", "phase_average", "reconstruct_limits", "resolvent_kernel",
    "run_fine", "run_macro", "sample_field", "solve_correctors", "solve_modes", "step_fine", "step_macro",
    "sum_rule_defect", "volterra_resolve",
]
