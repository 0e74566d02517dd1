"""Optimal finite-dimensional probe states for lossy two-mode interferometry."""
from .channels import Transmission, apply_loss, loss_via_trace_out
from .fock import DensityMatrix, FockCutoff, Operator, TwoModePureState, generator
from .metrology import Povm, cfi, parity_povm, pc_povm, qfi, sld, sldm_povm
from .probes import OfpsSpec, noiseless_ofps, noiseless_ofps_qfi

__version__ = "0.1.0"

__all__ = [
    "DensityMatrix",
    "FockCutoff",
    "OfpsSpec",
    "Operator",
    "Povm",
    "Transmission",
    "TwoModePureState",
    "__version__",
    "apply_loss",
    "cfi",
    "generator",
    "loss_via_trace_out",
    "noiseless_ofps",
    "noiseless_ofps_qfi",
    "parity_povm",
    "pc_povm",
    "qfi",
    "sld",
    "sldm_povm",
]
