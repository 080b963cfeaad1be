"""Symmetry representations on the truncated basis.

Every operator here is a signed permutation with per-index phases,
optionally composed with complex conjugation (antilinear).  Application
is O(dim); matrices are materialized sparsely only for residual checks.

The concrete operators, written for the pinned lattice scaling:

* rotation ``C``: momentum rotation about the fiber center with component
  phases (1, 1, wbar, wbar); order three; commutes with H_k at
  rotation-fixed fibers.
* ``PT``: antilinear, momentum-preserving component swap (1<->3, 2<->4);
  commutes with H_k at every fiber.
* ``SM``: linear momentum map p -> -conj(p) with the same component swap
  and phases (-i, +i, -i, +i); squares to -identity and anticommutes with
  H_k at the fibers 0 and -K.
* cross-fiber ``S`` and ``M``: exact index bijections between the fiber-0
  and fiber-(-K) bases used for the spectral-identity tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import BasisError, FiberError
from .lattice import COMPONENT_OFFSETS, OMEGA, PlaneWaveBasis, inner

MINUS_K = -1j  # canonical representative of the second Dirac fiber


@dataclass
class SymmetryRep:
    """A (anti)unitary signed-permutation operator between two bases.

    Application rule: ``out[i] = phase[i] * w[src[i]]`` with ``w = conj(v)``
    when antilinear, ``w = v`` otherwise.
    """

    kind: str
    src: np.ndarray = field(repr=False)
    phase: np.ndarray = field(repr=False)
    antilinear: bool = False
    anticommutes: bool = False
    fiber_in: complex = None
    fiber_out: complex = None
    basis_in: PlaneWaveBasis = field(default=None, repr=False)
    basis_out: PlaneWaveBasis = field(default=None, repr=False)

    def apply(self, v: np.ndarray) -> np.ndarray:
        w = np.conj(v) if self.antilinear else v
        return self.phase * w[self.src]

    def matrix(self) -> sp.csr_matrix:
        """Sparse matrix part (conjugation, if any, is applied separately)."""
        n = len(self.src)
        return sp.csr_matrix(
            (self.phase, (np.arange(n), self.src)),
            shape=(n, len(self.phase) if self.basis_in is None
                   else self.basis_in.dim))

    def compose(self, other: "SymmetryRep", kind=None) -> "SymmetryRep":
        """self after other (apply ``other`` first)."""
        ph_o = other.phase[self.src]
        if self.antilinear:
            ph_o = np.conj(ph_o)
        return SymmetryRep(
            kind=kind or f"{self.kind}*{other.kind}",
            src=other.src[self.src],
            phase=self.phase * ph_o,
            antilinear=self.antilinear ^ other.antilinear,
            fiber_in=other.fiber_in,
            fiber_out=self.fiber_out,
            basis_in=other.basis_in,
            basis_out=self.basis_out,
        )

    def inverse(self, kind=None) -> "SymmetryRep":
        dst = np.empty_like(self.src)
        dst[self.src] = np.arange(len(self.src))
        ph = 1.0 / self.phase[dst]
        if self.antilinear:
            ph = np.conj(ph)
        return SymmetryRep(
            kind=kind or f"{self.kind}^-1",
            src=dst,
            phase=ph,
            antilinear=self.antilinear,
            fiber_in=self.fiber_out,
            fiber_out=self.fiber_in,
            basis_in=self.basis_out,
            basis_out=self.basis_in,
        )

    def intertwining_residual(self, h_in, h_out, sign: float) -> float:
        """|| R H_in - sign * H_out R ||_F / ||H_in||_F.

        For antilinear R the rule R H = H' R reads, in matrix parts,
        M conj(H_in) = H' M.
        """
        m = self.matrix()
        left = m @ (h_in.conj() if self.antilinear else h_in)
        right = sign * (h_out @ m)
        num = spla.norm((left - right).tocsr())
        den = spla.norm(sp.csr_matrix(h_in))
        return float(num / den)


def _component_of_flat(basis: PlaneWaveBasis) -> np.ndarray:
    comp = np.empty(basis.dim, dtype=np.int64)
    for j, sl in enumerate(basis.component_slices):
        comp[sl] = j
    return comp


def rotation_rep(basis: PlaneWaveBasis, fiber) -> SymmetryRep:
    """Order-three rotation about a rotation-fixed fiber.

    The fiber must coincide with the basis fiber center; the truncation
    ball then closes exactly under the index map.
    """
    fiber = complex(fiber)
    if abs(fiber - basis.fiber_center) > 1e-12:
        raise FiberError(
            f"rotation at fiber {fiber} needs a basis centered there "
            f"(basis center {basis.fiber_center})")
    src = basis.rotation_map()      # raises if the fiber is not rotation fixed
    comp = _component_of_flat(basis)
    phases = np.where(comp >= 2, np.conj(OMEGA), 1.0 + 0.0j)
    return SymmetryRep(kind="C", src=src, phase=phases.astype(complex),
                       antilinear=False, anticommutes=False,
                       fiber_in=fiber, fiber_out=fiber,
                       basis_in=basis, basis_out=basis)


@dataclass
class SectorProjectors:
    """Rotation-sector decomposition at a rotation-fixed fiber.

    Sector p collects the rotation eigenvalue conj(omega)^p.  Holds
    orthonormal sector bases (columns of B[p]) and builds the projector
    matrices on demand.
    """

    rep: SymmetryRep
    bases: list = field(repr=False)   # three dense dim x n_p arrays

    @property
    def dims(self):
        return tuple(b.shape[1] for b in self.bases)

    def projector(self, p: int) -> np.ndarray:
        b = self.bases[p]
        return b @ b.conj().T

    def project(self, p: int, v: np.ndarray) -> np.ndarray:
        b = self.bases[p]
        return b @ (b.conj().T @ v)

    def restrict(self, p: int, matrix) -> np.ndarray:
        """Dense sector block B_p^dag H B_p of a (sparse) operator."""
        b = self.bases[p]
        return b.conj().T @ (matrix @ b)

    def lift(self, p: int, w: np.ndarray) -> np.ndarray:
        return self.bases[p] @ w


def sector_projectors(basis: PlaneWaveBasis, fiber) -> SectorProjectors:
    """Build the three rotation-sector bases at a rotation-fixed fiber."""
    rep = rotation_rep(basis, fiber)
    src = rep.src
    phase = rep.phase
    n = basis.dim
    seen = np.zeros(n, dtype=bool)
    cols = [[] for _ in range(3)]
    rows = [[] for _ in range(3)]
    vals = [[] for _ in range(3)]
    counts = [0, 0, 0]
    eigvals = [np.conj(OMEGA) ** p for p in range(3)]
    inv3 = 1.0 / np.sqrt(3.0)
    for i0 in range(n):
        if seen[i0]:
            continue
        i1 = src[i0]
        if i1 == i0:
            seen[i0] = True
            # fixed point: belongs to the sector matching its phase
            diffs = [abs(phase[i0] - ev) for ev in eigvals]
            p = int(np.argmin(diffs))
            if diffs[p] > 1e-9:
                raise BasisError("rotation fixed point with non-sector phase")
            rows[p].append(i0)
            cols[p].append(counts[p])
            vals[p].append(1.0 + 0.0j)
            counts[p] += 1
            continue
        i2 = src[i1]
        if src[i2] != i0 or i2 == i0:
            raise BasisError("rotation index map is not order three")
        seen[[i0, i1, i2]] = True
        # cycle (Rv)[i0] = phase[i0] v[i1], etc.; eigenvector for eigenvalue
        # lam: (1, lam/phase[i0], lam^2/(phase[i0] phase[i1])) / sqrt(3)
        for p, lam in enumerate(eigvals):
            x0 = 1.0 + 0.0j
            x1 = lam / phase[i0]
            x2 = lam * x1 / phase[i1]
            if abs(lam * x2 / phase[i2] - x0) > 1e-9:
                continue
            for i, x in ((i0, x0), (i1, x1), (i2, x2)):
                rows[p].append(i)
                cols[p].append(counts[p])
                vals[p].append(x * inv3)
            counts[p] += 1
    bases = []
    for p in range(3):
        b = np.zeros((n, counts[p]), dtype=complex)
        b[rows[p], cols[p]] = vals[p]
        bases.append(b)
    if sum(counts) != n:
        raise BasisError("sector dimensions do not sum to the basis dimension")
    return SectorProjectors(rep=rep, bases=bases)


def _component_swap_map(basis: PlaneWaveBasis, mode_map):
    """src array for out[(j+2)%4, mode_map(m,n)] <- v[(j, (m,n))]."""
    src = np.empty(basis.dim, dtype=np.int64)
    for j, ms in enumerate(basis.modes):
        tj = (j + 2) % 4
        for (m, n) in ms:
            key = (tj, mode_map(m, n))
            if key not in basis.index:
                raise BasisError(
                    f"symmetry image of {(j, m, n)} left the truncated set")
            src[basis.index[key]] = basis.index[(j, (m, n))]
    return src


def antiunitary_rep(kind: str, basis: PlaneWaveBasis, fiber) -> SymmetryRep:
    """The fiber-preserving discrete symmetries PT and SM.

    PT is antilinear and valid at every fiber; SM is linear and is
    fiber-preserving exactly on the imaginary axis, in particular at the
    two Dirac fibers 0 and -K.
    """
    fiber = complex(fiber)
    comp = _component_of_flat(basis)
    if kind == "PT":
        src = _component_swap_map(basis, lambda m, n: (m, n))
        phase = np.ones(basis.dim, dtype=complex)
        return SymmetryRep(kind="PT", src=src, phase=phase, antilinear=True,
                           anticommutes=False, fiber_in=fiber, fiber_out=fiber,
                           basis_in=basis, basis_out=basis)
    if kind == "SM":
        if abs(np.conj(fiber) + fiber) > 1e-12:
            raise FiberError(f"SM is fiber-preserving only for Re k = 0; "
                             f"got fiber {fiber}")
        if abs(fiber - basis.fiber_center) > 1e-12:
            raise FiberError("SM needs a basis centered on its fiber")
        src = _component_swap_map(basis, lambda m, n: (n, m))
        ph = np.array([-1j, 1j, -1j, 1j])
        phase = ph[comp]
        return SymmetryRep(kind="SM", src=src, phase=phase, antilinear=False,
                           anticommutes=True, fiber_in=fiber, fiber_out=fiber,
                           basis_in=basis, basis_out=basis)
    raise ValueError(f"unknown fiber-preserving symmetry kind {kind!r}")


def cross_fiber_rep(kind: str, basis0: PlaneWaveBasis,
                    basis_mk: PlaneWaveBasis) -> SymmetryRep:
    """Cross-fiber maps between the fiber-0 and fiber-(-K) bases.

    ``S`` anticommutes: it intertwines H_0 with -H_{-K}; ``M`` relates
    H_0(alpha) with H_{-K}(conj(alpha)) and commutes for real alpha.  With
    both truncation balls centered on their fibers the index maps are
    exact bijections; any unmatched index is reported as an error.
    """
    if abs(basis0.fiber_center) > 1e-12 or abs(basis_mk.fiber_center - MINUS_K) > 1e-12:
        raise FiberError("cross_fiber_rep expects bases centered at 0 and -K")
    if abs(basis0.cutoff_radius - basis_mk.cutoff_radius) > 1e-12:
        raise BasisError("cross-fiber bases must share the cutoff radius")
    src = np.empty(basis_mk.dim, dtype=np.int64)
    missed = 0
    if kind == "S":
        comp_map = {0: 1, 1: 0, 2: 3, 3: 2}
        mode_map = lambda m, n: (-m, -n)
        ph = np.array([-1j, 1j, -1j, 1j])
        anticommutes = True
    elif kind == "M":
        comp_map = {0: 3, 1: 2, 2: 1, 3: 0}
        mode_map = lambda m, n: (-n, -m)
        ph = np.array([1.0, 1.0, 1.0, 1.0], dtype=complex)
        anticommutes = False
    else:
        raise ValueError(f"unknown cross-fiber symmetry kind {kind!r}")
    for j, ms in enumerate(basis0.modes):
        tj = comp_map[j]
        for (m, n) in ms:
            key = (tj, mode_map(m, n))
            if key not in basis_mk.index:
                missed += 1
                continue
            src[basis_mk.index[key]] = basis0.index[(j, (m, n))]
    if missed:
        raise BasisError(
            f"cross-fiber {kind} map left {missed}/{basis0.dim} indices "
            f"unmatched; rebuild both bases with a common cutoff")
    comp_mk = _component_of_flat(basis_mk)
    phase = ph[comp_mk]
    return SymmetryRep(kind=kind, src=src, phase=phase, antilinear=False,
                       anticommutes=anticommutes,
                       fiber_in=0.0 + 0.0j, fiber_out=MINUS_K,
                       basis_in=basis0, basis_out=basis_mk)


def translation_phase_residual(basis: PlaneWaveBasis, gamma_coords=(1, 0),
                               n_points: int = 24, seed: int = 7) -> float:
    """Pseudo-periodicity self-test of the component offsets.

    Synthesizes a random basis vector as four scalar functions of z and
    checks the modified translation eigenvalue relation
    ``diag(omega^{g1+g2},1,omega^{g1+g2},1) f(z+gamma) = f(z)`` pointwise.
    Returns the max relative violation.
    """
    conv = basis.convention
    g1, g2 = gamma_coords
    gamma = g1 * conv.a1 + g2 * conv.a2
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(basis.dim) + 1j * rng.standard_normal(basis.dim)
    zs = (rng.standard_normal(n_points) + 1j * rng.standard_normal(n_points)) * 2.0
    worst = 0.0
    lphase = OMEGA ** ((g1 + g2) % 3)
    for j, sl in enumerate(basis.component_slices):
        mom = basis.momenta[sl]
        coeff = v[sl]
        f_z = np.exp(1j * inner(zs[:, None], mom[None, :])) @ coeff
        f_zg = np.exp(1j * inner((zs + gamma)[:, None], mom[None, :])) @ coeff
        ph = lphase if COMPONENT_OFFSETS[j] else 1.0
        num = np.max(np.abs(ph * f_zg - f_z))
        den = max(np.max(np.abs(f_z)), 1e-300)
        worst = max(worst, float(num / den))
    return worst
