"""Quantized electromagnetic fields in absorbing, dispersive chi(2) dielectrics.

Scalar 1D reduction in natural units (hbar = eps0 = c = 1): Green functions
of layered media, linear field assemblies, the nonlinear coupling tensor and
its consistency checks, nonlinear noise polarization, and a first-order
parametric down-conversion demo.
"""

from .errors import *  # noqa: F401,F403
from .materials import (
    Chi2Model,
    ConstantPermittivity,
    FrequencyGrid,
    LossScaled,
    Material,
    Oscillator,
    PermittivityModel,
    TabulatedPermittivity,
    check_kramers_kronig,
)
from .greens import Geometry1D, GreenField, Layer, SpatialGrid1D, apply_helmholtz, green_1d, green_fields
from .quantization import (
    ModeLattice,
    SlowVariableSet,
    assemble_D_linear,
    assemble_E,
    check_E_commutator,
    linear_noise_polarization,
    reduce_to_bands,
)
from .coupling import (
    CouplingTensor,
    EffectiveHamiltonian,
    PolarizationField,
    assemble_H_NL,
    compute_alpha,
    decompose_polarization,
    fredholm_residual,
    nonlinear_noise_polarization_via_alpha,
    nonlinear_noise_polarization_via_field,
    reactive_polarization,
)
from .pdc import BiphotonAmplitude, PumpSpec, biphoton_first_order, heralded_purity

__version__ = "0.1.0"
