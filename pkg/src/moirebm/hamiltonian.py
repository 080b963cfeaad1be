"""Assembly of the Bloch-fiber Hamiltonian on the truncated basis.

The fiber operator is the Hermitian block matrix

    H_k(alpha, lambda) = [[lambda*C, D(alpha)* + conj(k)],
                          [D(alpha) + k, lambda*C]]

with ``D(alpha) = [[2 D_zbar, alpha U(z)], [alpha U(-z), 2 D_zbar]]`` and
``C = [[0, V(z)], [V(-z), 0]]``.  On a plane wave of momentum p the
derivative block acts as multiplication by ``p + k``; each potential mode
shifts momentum by its lattice vector and hops between the spinor
components fixed by the coset bookkeeping.  Hops that leave the truncated
set are dropped (Galerkin truncation).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import MoireError
from .lattice import OMEGA, LatticeConvention, PlaneWaveBasis

#: integer dual-lattice shifts of the three tunnelling modes (all on the
#: K coset; the coset offset itself is carried by the component change)
MODE_SHIFTS = ((0, 0), (1, 0), (0, 1))
U_COEFFS = (1.0 + 0.0j, OMEGA, OMEGA**2)
V_COEFFS = (1.0 + 0.0j, 1.0 + 0.0j, 1.0 + 0.0j)


@dataclass(frozen=True)
class PotentialModes:
    """Fourier modes of the four multiplication operators U(z), U(-z),
    V(z), V(-z) as (momentum, coefficient) lists."""

    u_plus: tuple
    u_minus: tuple
    v_plus: tuple
    v_minus: tuple


def potential_modes(convention: LatticeConvention) -> PotentialModes:
    """The standard three-mode tunnelling potentials.

    U(z) carries coefficients {1, omega, omega^2} on momenta
    {i, i omega, i omega^2}; V(z) carries unit coefficients on the same
    momenta; the argument-reflected partners live on the negated momenta.
    """
    qs = [convention.kpoint * 1 + dm * convention.b1 + dn * convention.b2
          for (dm, dn) in MODE_SHIFTS]
    u_plus = tuple((q, c) for q, c in zip(qs, U_COEFFS))
    u_minus = tuple((-q, c) for q, c in zip(qs, U_COEFFS))
    v_plus = tuple((q, c) for q, c in zip(qs, V_COEFFS))
    v_minus = tuple((-q, c) for q, c in zip(qs, V_COEFFS))
    return PotentialModes(u_plus, u_minus, v_plus, v_minus)


@dataclass
class _HopPattern:
    """Precomputed sparse index pattern of one half of H_k.

    The stored pattern P covers the lower-left block D(alpha)+k plus one
    triangular half of each lambda*C block; the full matrix is P + P^dag.
    """

    diag_rows: np.ndarray
    diag_cols: np.ndarray
    diag_p: np.ndarray          # momenta multiplying as (p + k)
    u_rows: np.ndarray
    u_cols: np.ndarray
    u_coeff: np.ndarray         # multiplied by alpha
    v_rows: np.ndarray
    v_cols: np.ndarray
    v_coeff: np.ndarray         # multiplied by lambda
    shape: tuple


def _build_pattern(basis: PlaneWaveBasis) -> _HopPattern:
    idx = basis.index
    mom = basis.momenta

    diag_rows, diag_cols = [], []
    for src_comp, dst_comp in ((0, 2), (1, 3)):       # 2 D_zbar + k
        for mn in basis.modes[src_comp]:
            diag_cols.append(idx[(src_comp, mn)])
            diag_rows.append(idx[(dst_comp, mn)])
    diag_cols = np.asarray(diag_cols, dtype=np.int64)
    diag_rows = np.asarray(diag_rows, dtype=np.int64)
    diag_p = mom[diag_cols]

    u_rows, u_cols, u_coeff = [], [], []
    for (dm, dn), c in zip(MODE_SHIFTS, U_COEFFS):
        for (m, n) in basis.modes[1]:                 # alpha U(z): comp2 -> comp3
            key = (2, (m + dm, n + dn))
            if key in idx:
                u_rows.append(idx[key])
                u_cols.append(idx[(1, (m, n))])
                u_coeff.append(c)
        for (m, n) in basis.modes[0]:                 # alpha U(-z): comp1 -> comp4
            key = (3, (m - dm, n - dn))
            if key in idx:
                u_rows.append(idx[key])
                u_cols.append(idx[(0, (m, n))])
                u_coeff.append(c)

    v_rows, v_cols, v_coeff = [], [], []
    for (dm, dn), c in zip(MODE_SHIFTS, V_COEFFS):
        for (m, n) in basis.modes[1]:                 # V(z): comp2 -> comp1
            key = (0, (m + dm, n + dn))
            if key in idx:
                v_rows.append(idx[key])
                v_cols.append(idx[(1, (m, n))])
                v_coeff.append(c)
        for (m, n) in basis.modes[3]:                 # V(z): comp4 -> comp3
            key = (2, (m + dm, n + dn))
            if key in idx:
                v_rows.append(idx[key])
                v_cols.append(idx[(3, (m, n))])
                v_coeff.append(c)

    return _HopPattern(
        diag_rows=diag_rows, diag_cols=diag_cols, diag_p=diag_p,
        u_rows=np.asarray(u_rows, dtype=np.int64),
        u_cols=np.asarray(u_cols, dtype=np.int64),
        u_coeff=np.asarray(u_coeff, dtype=complex),
        v_rows=np.asarray(v_rows, dtype=np.int64),
        v_cols=np.asarray(v_cols, dtype=np.int64),
        v_coeff=np.asarray(v_coeff, dtype=complex),
        shape=(basis.dim, basis.dim),
    )


def _pattern_for(basis: PlaneWaveBasis) -> _HopPattern:
    # cached on the basis object itself; the pattern is k/alpha/lambda free
    pat = getattr(basis, "_hop_pattern", None)
    if pat is None:
        pat = _build_pattern(basis)
        basis._hop_pattern = pat
    return pat


@dataclass
class BlochHamiltonian:
    """The assembled Hermitian fiber matrix together with its metadata."""

    k: complex
    alpha: float
    lam: float
    basis: PlaneWaveBasis
    matrix: sp.csr_matrix = field(repr=False)
    _dense: np.ndarray = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.basis.dim

    def dense(self) -> np.ndarray:
        if self._dense is None:
            self._dense = self.matrix.toarray()
        return self._dense

    def norm_bound(self) -> float:
        """Inf-norm of the matrix: a cheap upper bound on the operator norm."""
        return float(np.abs(self.matrix).sum(axis=1).max())

    def hermiticity_residual(self) -> float:
        d = self.matrix - self.matrix.conj().T
        denom = spla.norm(self.matrix)
        return float(spla.norm(d) / denom) if denom else 0.0


def assemble(k, alpha, lam, basis: PlaneWaveBasis) -> BlochHamiltonian:
    """Assemble H_k(alpha, lambda) on the truncated basis.

    Pure function of its arguments; the sparse pattern is cached per basis
    so repeated assembly along k paths costs one value fill.
    """
    if not (np.isfinite(alpha) and np.isfinite(lam) and np.isfinite(complex(k))):
        raise MoireError("non-finite Hamiltonian parameters")
    pat = _pattern_for(basis)
    k = complex(k)
    rows = np.concatenate([pat.diag_rows, pat.u_rows, pat.v_rows])
    cols = np.concatenate([pat.diag_cols, pat.u_cols, pat.v_cols])
    vals = np.concatenate([
        pat.diag_p + k,
        alpha * pat.u_coeff,
        lam * pat.v_coeff,
    ])
    half = sp.coo_matrix((vals, (rows, cols)), shape=pat.shape).tocsr()
    mat = (half + half.conj().T).tocsr()
    return BlochHamiltonian(k=k, alpha=float(alpha), lam=float(lam),
                            basis=basis, matrix=mat)


def symmetry_residuals(ham: BlochHamiltonian, reps) -> dict:
    """Relative residual norms of the symmetry (anti)commutation relations.

    ``reps`` maps a name to a SymmetryRep; rotation and PT commute with
    H_k, SM anticommutes.  Residuals are Frobenius norms relative to |H|.
    """
    out = {}
    for name, rep in reps.items():
        if rep.fiber_in is not None and abs(rep.fiber_in - ham.k) > 1e-12:
            raise MoireError(
                f"symmetry {name} is defined at fiber {rep.fiber_in}, "
                f"Hamiltonian is at k = {ham.k}")
        sign = -1.0 if rep.anticommutes else 1.0
        out[name] = rep.intertwining_residual(ham.matrix, ham.matrix, sign)
    return out


def dump_matrix_csv(ham: BlochHamiltonian, path):
    """Write the assembled matrix as (row, col, re, im) CSV triplets."""
    coo = ham.matrix.tocoo()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("row,col,re,im\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r},{c},{v.real:.17g},{v.imag:.17g}\n")
