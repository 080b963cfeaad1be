"""Plane-wave spectral toolkit for the Bistritzer-MacDonald model of
twisted bilayer graphene.

Core surface:

* lattice/basis: :func:`make_convention`, :func:`build_basis`
* Hamiltonian:   :func:`assemble`
* symmetries:    :func:`rotation_rep`, :func:`sector_projectors`,
                 :func:`antiunitary_rep`, :func:`cross_fiber_rep`
* spectra:       :func:`bands`, :func:`find_touchings`, :func:`cone_profile`
* zero modes:    :func:`protected_pair`, :func:`fermi_velocity`,
                 :func:`quadratic_coefficients`
* magic angles:  :func:`find_magic_chiral`, :func:`trace_magic_curve`,
                 :func:`taylor_coefficients`
* topology:      :func:`pt_real_frame`, :func:`winding_number`,
                 :func:`euler_sum`, :func:`classify_touching`
"""

from .config import RunConfig
from .hamiltonian import BlochHamiltonian, PotentialModes, assemble, \
    potential_modes, symmetry_residuals
from .lattice import LatticeConvention, Momentum, PlaneWaveBasis, \
    build_basis, make_convention, write_convention_json
from .magic import MagicCurve, MagicRoot, TaylorCoefficients, \
    find_magic_chiral, taylor_coefficients, trace_magic_curve
from .protected import FermiSample, ProtectedPair, QuadraticCoefficients, \
    fermi_velocity, fermi_velocity_fd, protected_pair, quadratic_coefficients
from .spectra import BandSet, TouchingPoint, TouchingScan, bands, \
    cone_profile, eigs_hermitian, find_touchings, middle_window
from .symmetry import SectorProjectors, SymmetryRep, antiunitary_rep, \
    cross_fiber_rep, rotation_rep, sector_projectors, \
    translation_phase_residual
from .topology import EulerSum, RealFrame, WindingResult, classify_touching, \
    euler_sum, pt_real_frame, transport_frame, winding_number

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
