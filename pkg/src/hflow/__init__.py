"""Geometric H-structures on flat tori and their harmonic flow."""
from .algebra import (
    DenseTensor,
    DimensionError,
    MultiTensor,
    TensorShape,
    diamond,
    expm_skew,
    group_act,
    inner,
    sym_skew_split,
)
from .fields import PeriodicGrid, StructureField, integrate, partial_derivative, read_checkpoint, write_checkpoint
from .flow import DiagRecord, FlowState, energies, flow_step, run_flow
from .models import HKind, HModel, model, verify_model
from .torsion import TorsionValue, diamond_adjoint, pi_m, torsion_from_gradient

__version__ = "0.1.0"
