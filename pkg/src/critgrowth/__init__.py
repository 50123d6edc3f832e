"""Growth/extinction classification for critical multidimensional
stochastic population models, with Monte Carlo verification tooling."""

__version__ = "0.1.0"

from .criterion import (Criticality, Growth, GwiVerdict, cell_division_threshold,
                        classify_criticality, classify_growth, classify_gwi,
                        estimate_c1_d1, growth_ratio)
from .models import (BonusDriftSdgw, CellDivisionModel, GwiModel, Model,
                     OffspringLaw, SdgwModel, TableSdgw)
from .montecarlo import (SimConfig, dichotomy_probe, run_ensemble,
                         simulate_trajectory, substream, wilson_interval)
from .lyapunov import (Phi, Verdict, assumption_audit, check_supermartingale,
                       default_state_grid, moment_scan, scan_k)
from .spectral import PerronData, contraction_factor, is_primitive, perron

__all__ = [
    "__version__",
    "BonusDriftSdgw", "CellDivisionModel", "Criticality", "Growth",
    "GwiModel", "GwiVerdict", "Model", "OffspringLaw", "PerronData", "Phi",
    "SdgwModel", "SimConfig", "TableSdgw", "Verdict", "assumption_audit",
    "cell_division_threshold", "check_supermartingale", "classify_criticality",
    "classify_growth", "classify_gwi", "contraction_factor",
    "default_state_grid", "dichotomy_probe", "estimate_c1_d1", "growth_ratio",
    "is_primitive", "moment_scan", "perron", "run_ensemble", "scan_k",
    "simulate_trajectory", "substream", "wilson_interval",
]
