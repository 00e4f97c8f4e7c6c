"""Grid-strength and synchronization margins of converter-dominated grids."""

from ._core import (
    ComplexDressing,
    ConverterModel,
    MarginReport,
    Mode,
    NmpzError,
    NmpzResult,
    OperatingPoint,
    Scenario,
    analyze_zeros,
    assess,
    build_laplacian,
    compute_heq,
    dress,
    eval_jcig,
    eval_jnet,
    linearize_converter,
    load_scenario,
    make_dressing,
    modes,
    scalar_rho_z,
    solve_powerflow,
    to_complex_jnet,
)

__all__ = [name for name in dir() if not name.startswith("_")]
