"""Protected zero modes and the real Fermi velocity.

At the fibers 0 and -K the Hamiltonian has a two-dimensional kernel for
all real parameters, split across rotation sectors 0 and 1.  The sector-0
vector phi is gauge fixed, its partner is psi = -i * SM(phi) (the -i makes
the pairing <u, v~> real in the pinned lattice scaling), and the signed
Fermi velocity is the gauge-invariant real number v_F = Re <u, v~> where
u is the upper 2-spinor of phi and v~ the lower 2-spinor of psi.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse.linalg as spla

from .errors import KernelAmbiguousError, SectorSplitError, SolverError
from .hamiltonian import assemble
from .lattice import PlaneWaveBasis
from .spectra import band_labels, middle_window
from .symmetry import SectorProjectors, antiunitary_rep, sector_projectors

#: absolute tolerance for calling a sector mode a kernel vector
KERNEL_TOL = 1e-7


def inner(a, b):
    """Hermitian inner product <a, b> = sum a conj(b)."""
    return np.vdot(b, a)


def _fiber_structures(basis: PlaneWaveBasis, fiber):
    """Cached (sector projectors, SM rep) for the basis at its fiber."""
    fiber = complex(fiber)
    cache = getattr(basis, "_fiber_structs", None)
    if cache is None:
        cache = {}
        basis._fiber_structs = cache
    key = (fiber.real, fiber.imag)
    if key not in cache:
        sectors = sector_projectors(basis, fiber)
        sm = antiunitary_rep("SM", basis, fiber)
        cache[key] = (sectors, sm)
    return cache[key]


@dataclass
class ProtectedPair:
    """Gauge-fixed kernel pair at a Dirac fiber."""

    phi: np.ndarray
    psi: np.ndarray
    kernel_residuals: tuple
    third_eigenvalue: float
    gauge: dict
    alpha: float
    lam: float
    fiber: complex


@dataclass
class FermiSample:
    """Signed Fermi velocity with its reality and isolation diagnostics."""

    alpha: float
    lam: float
    v_f: float
    im_leak: float
    kernel_gap: float


def protected_pair(alpha, lam, basis: PlaneWaveBasis, fiber=0.0,
                   reference: "ProtectedPair" = None,
                   ambig_tol: float = 1e-8) -> ProtectedPair:
    """Extract and gauge the protected kernel pair at a Dirac fiber.

    Raises KernelAmbiguousError when a third eigenvalue approaches zero
    (possible higher-dimensional kernel) and SectorSplitError when the
    two near-zero modes do not sit in sectors 0 and 1.
    """
    fiber = complex(fiber)
    sectors, sm = _fiber_structures(basis, fiber)
    ham = assemble(fiber, alpha, lam, basis)
    h = ham.matrix

    per_sector = []
    for p in range(3):
        block = sectors.restrict(p, h)
        vals, vecs = la.eigh(block)
        order = np.argsort(np.abs(vals), kind="stable")
        per_sector.append((vals[order], vecs[:, order]))

    e0 = abs(per_sector[0][0][0])
    e1 = abs(per_sector[1][0][0])
    third = min(abs(per_sector[0][0][1]), abs(per_sector[1][0][1]),
                abs(per_sector[2][0][0]))
    if third < ambig_tol:
        raise KernelAmbiguousError(
            f"third eigenvalue {third:.3e} below {ambig_tol:.1e}; kernel "
            f"dimension may exceed two at alpha={alpha}, lambda={lam}",
            third_eigenvalue=third)
    if max(e0, e1) > KERNEL_TOL:
        raise SectorSplitError(
            f"kernel does not split into sectors 0 and 1: sector zero-mode "
            f"energies ({e0:.3e}, {e1:.3e}) at alpha={alpha}, lambda={lam}")

    phi = sectors.lift(0, per_sector[0][1][:, 0])
    phi = phi / np.linalg.norm(phi)
    gauge = {"sm_phase": "-i"}
    if reference is not None:
        ov = inner(phi, reference.phi)
        if abs(ov) < 1e-6:
            raise SectorSplitError("reference pair is orthogonal to phi; "
                                   "cannot align the continuation gauge")
        phi = phi * (np.conj(ov) / abs(ov))
        gauge["rule"] = "reference-overlap"
    else:
        i = int(np.argmax(np.abs(phi)))
        phi = phi * (np.conj(phi[i]) / abs(phi[i]))
        gauge["rule"] = "largest-coeff"
    psi = -1j * sm.apply(phi)

    # psi must be the sector-1 kernel partner
    psi_in_1 = sectors.project(1, psi)
    if np.linalg.norm(psi_in_1 - psi) > 1e-10:
        raise SectorSplitError("SM image of phi left sector 1")
    return ProtectedPair(phi=phi, psi=psi, kernel_residuals=(e0, e1),
                         third_eigenvalue=float(third), gauge=gauge,
                         alpha=float(alpha), lam=float(lam), fiber=fiber)


def fermi_velocity(alpha, lam, basis: PlaneWaveBasis, fiber=0.0,
                   reference: ProtectedPair = None,
                   ambig_tol: float = 1e-8):
    """Signed Fermi velocity v_F = Re<u, v~> in the SM gauge.

    The pairing is invariant under the phase gauge of phi, so the sign is
    intrinsic; ``reference`` only fixes the phase of the returned pair for
    continuation consumers.  Returns (FermiSample, ProtectedPair).
    """
    pair = protected_pair(alpha, lam, basis, fiber=fiber,
                          reference=reference, ambig_tol=ambig_tol)
    u = pair.phi[basis.upper_slice]
    v_t = pair.psi[basis.lower_slice]
    val = inner(u, v_t)
    return (FermiSample(alpha=float(alpha), lam=float(lam),
                        v_f=float(val.real), im_leak=float(abs(val.imag)),
                        kernel_gap=pair.third_eigenvalue),
            pair)


def fermi_velocity_fd(alpha, lam, basis: PlaneWaveBasis, h: float = 0.02,
                      n_directions: int = 8) -> float:
    """Finite-difference cone slope: direction-averaged E_1(h e^{i t})/h.

    Richardson extrapolation over radii (h, h/2) cancels the second-order
    band term, so the result approximates |v_F| to O(h^2).
    """
    if not 1e-4 <= h <= 1e-1:
        raise ValueError(f"radius h = {h} outside [1e-4, 1e-1]")

    def mean_slope(radius):
        acc = 0.0
        for j in range(n_directions):
            k = radius * np.exp(2j * np.pi * j / n_directions)
            ham = assemble(k, alpha, lam, basis)
            res = middle_window(ham, 1, want_vectors=False)
            acc += band_labels(res.values, 1)[1] / radius
        return acc / n_directions

    f_h = mean_slope(h)
    f_h2 = mean_slope(h / 2)
    return float(2.0 * f_h2 - f_h)


@dataclass
class QuadraticCoefficients:
    """Second-order band coefficients at a Dirac fiber.

    For a quadratic touching the two middle bands behave as
    ``E_{+-1}(k) = c2_{+-} |k|^2 + O(|k|^3)`` with
    ``c2_{+-} = +-|cross| - diag``.
    """

    c2_plus: float
    c2_minus: float
    cross: complex
    diag: float
    diag_imag: float
    solver_iterations: int


def _apply_a(basis, v):
    w = np.zeros_like(v)
    w[basis.lower_slice] = v[basis.upper_slice]
    return w


def _apply_a_star(basis, v):
    w = np.zeros_like(v)
    w[basis.upper_slice] = v[basis.lower_slice]
    return w


def _minres_hermitian(apply_op, b, rtol=1e-10, maxiter=4000):
    """MINRES for a complex Hermitian operator via its real symmetric form."""
    n = b.shape[0]

    def real_op(x):
        v = x[:n] + 1j * x[n:]
        w = apply_op(v)
        return np.concatenate([w.real, w.imag])

    lin = spla.LinearOperator((2 * n, 2 * n), matvec=real_op, dtype=float)
    rb = np.concatenate([b.real, b.imag])
    iters = [0]

    def count(_):
        iters[0] += 1

    try:
        x, info = spla.minres(lin, rb, rtol=rtol, maxiter=maxiter,
                              callback=count)
    except TypeError:  # older scipy spells the tolerance 'tol'
        x, info = spla.minres(lin, rb, tol=rtol, maxiter=maxiter,
                              callback=count)
    if info != 0:
        raise SolverError(f"MINRES did not converge (info={info})")
    sol = x[:n] + 1j * x[n:]
    res = np.linalg.norm(apply_op(sol) - b)
    if res > 1e-8 * max(np.linalg.norm(b), 1e-30):
        raise SolverError(f"complement solve residual {res:.3e} too large")
    return sol, iters[0]


def quadratic_coefficients(alpha, lam, basis: PlaneWaveBasis, fiber=0.0,
                           pair: ProtectedPair = None) -> QuadraticCoefficients:
    """Second-order coefficients from the reduced two-level expansion.

    Solves the zero-energy complement problem (P H P) x = P b with P the
    projector off span{phi, psi}, using projected MINRES at tolerance
    1e-10, and assembles ``cross = <x_1, A psi>`` for ``x_1 = (PHP)^-1
    A* phi`` together with the real diagonal term for (A + A*) phi.
    """
    fiber = complex(fiber)
    if pair is None:
        pair = protected_pair(alpha, lam, basis, fiber=fiber)
    ham = assemble(fiber, alpha, lam, basis)
    h = ham.matrix
    phi, psi = pair.phi, pair.psi

    def project(v):
        return v - phi * np.vdot(phi, v) - psi * np.vdot(psi, v)

    def op(v):
        return project(h @ project(v))

    b1 = project(_apply_a_star(basis, phi))
    x1, it1 = _minres_hermitian(op, b1)
    a_psi = _apply_a(basis, psi)
    cross = inner(x1, a_psi)

    b2 = project(_apply_a(basis, phi) + _apply_a_star(basis, phi))
    x2, it2 = _minres_hermitian(op, b2)
    diag = inner(x2, b2)

    return QuadraticCoefficients(
        c2_plus=float(abs(cross) - diag.real),
        c2_minus=float(-abs(cross) - diag.real),
        cross=complex(cross),
        diag=float(diag.real),
        diag_imag=float(abs(diag.imag)),
        solver_iterations=it1 + it2,
    )
