"""Group-covariant tomograms and randomly generated quantum semigroups.

Submodules:

``core_ops``     dense operators, density validation, JSON encoding
``groups``       Z_d x Z_d and the phase plane, measures, convolution semigroups
``phase_space``  grids and the symplectic Fourier transform
``weyl``         Weyl systems, Fourier-Wigner and Wigner transforms
``star``         twisted convolution and twisted product
``semigroups``   twirling and tomographic semigroups, generators
``runner``       JSON-configured experiments (``cli`` is the command line)
"""

from .core_ops import DensityReport, hs_inner, hs_norm, random_density, validate_density
from .groups import (
    CompoundPoisson,
    DiscreteMeasure,
    GaussianMeasure,
    GaussianSemigroup,
    GroupContext,
    symplectic_char,
)
from .phase_space import PhaseGrid, symplectic_fourier
from .weyl import (
    Representation,
    Tomogram,
    discrete_weyl_representation,
    fock_representation,
    fw_inverse,
    fw_transform,
    wigner_transform,
)

__all__ = [
    "CompoundPoisson",
    "DensityReport",
    "DiscreteMeasure",
    "GaussianMeasure",
    "GaussianSemigroup",
    "GroupContext",
    "PhaseGrid",
    "Representation",
    "Tomogram",
    "discrete_weyl_representation",
    "fock_representation",
    "fw_inverse",
    "fw_transform",
    "hs_inner",
    "hs_norm",
    "random_density",
    "symplectic_char",
    "symplectic_fourier",
    "validate_density",
    "wigner_transform",
]
