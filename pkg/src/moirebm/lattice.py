"""Moire lattice conventions and the truncated plane-wave basis.

One self-consistent scaling is used everywhere: the moire lattice is
``Lambda = a1 Z + a2 Z`` with ``a_l = (4 pi i / 3) omega^l`` (l = 1, 2,
``omega = exp(2 pi i/3)``), its dual is ``Lambda* = sqrt(3)(omega Z +
omega^2 Z)``, and the rotation-fixed K point is ``K = i``.  The three
Fourier modes of the tunnelling potential sit on the coset ``K + Lambda*``
at ``{i, i omega, i omega^2}``.  Spinor components 1 and 3 carry the
K-coset momentum offset, components 2 and 4 are periodic.

All lattice-membership questions are answered in exact integer dual
coordinates ``(m, n, s)`` with ``p = K s + m b1 + n b2``; floating point
enters only through magnitudes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import BasisError, ConventionError

OMEGA = np.exp(2j * np.pi / 3)

#: K-coset flag per spinor component (components 1..4 -> indices 0..3).
COMPONENT_OFFSETS = (1, 0, 1, 0)

N_COMPONENTS = 4

_DUALITY_TOL = 1e-14


def inner(a, b):
    """Bilinear pairing <a, b> = Re(a * conj(b)) for complex scalars/arrays."""
    return (np.asarray(a) * np.conj(b)).real


@dataclass(frozen=True)
class LatticeConvention:
    """Pinned lattice data: generators, duals, rotation and K point."""

    a1: complex
    a2: complex
    b1: complex
    b2: complex
    omega: complex
    kpoint: complex

    def pair(self, a, b):
        """<a, b> = Re(a conj(b))."""
        return inner(a, b)

    def momentum_value(self, m: int, n: int, s: int) -> complex:
        """Momentum K*s + m*b1 + n*b2."""
        return self.kpoint * s + m * self.b1 + n * self.b2

    def dual_coords(self, value: complex):
        """Exact-ish (x, y) with value = x*b1 + y*b2 (thirds for K cosets)."""
        x = self.pair(value, self.a1) / (2 * np.pi)
        y = self.pair(value, self.a2) / (2 * np.pi)
        return x, y

    def in_dual_lattice(self, value: complex, tol: float = 1e-9) -> bool:
        """Whether value lies on Lambda* (integer dual coordinates)."""
        x, y = self.dual_coords(value)
        return abs(x - round(x)) <= tol and abs(y - round(y)) <= tol

    def coset_index(self, value: complex, tol: float = 1e-9) -> int:
        """Which of the three K cosets value belongs to: s with
        value - s*K in Lambda*, s in {0, 1, 2}; raises if none."""
        for s in (0, 1, 2):
            if self.in_dual_lattice(value - s * self.kpoint, tol):
                return s
        raise ConventionError(f"momentum {value} lies on no K coset")

    def to_json(self) -> str:
        payload = {
            "a1": [self.a1.real, self.a1.imag],
            "a2": [self.a2.real, self.a2.imag],
            "b1": [self.b1.real, self.b1.imag],
            "b2": [self.b2.real, self.b2.imag],
            "omega": [self.omega.real, self.omega.imag],
            "kpoint": [self.kpoint.real, self.kpoint.imag],
            "umode_coeffs": [[(OMEGA**j).real, (OMEGA**j).imag] for j in range(3)],
            "umode_momenta": [
                [(1j * OMEGA**j).real, (1j * OMEGA**j).imag] for j in range(3)
            ],
            "component_offsets": list(COMPONENT_OFFSETS),
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def make_convention() -> LatticeConvention:
    """Build and self-check the repo-wide lattice convention.

    Returns the unique convention with ``a_l = (4 pi i/3) omega^l``, dual
    pair ``b1 = sqrt(3) omega^2``, ``b2 = -sqrt(3) omega`` and K point
    ``K = i = -(b1 + b2)/3``.  Construction aborts if any invariant
    (duality pairing, rotation-fixedness of K, U-mode coset) fails.
    """
    a1 = (4j * np.pi / 3) * OMEGA
    a2 = (4j * np.pi / 3) * OMEGA**2
    b1 = np.sqrt(3) * OMEGA**2
    b2 = -np.sqrt(3) * OMEGA
    conv = LatticeConvention(a1=a1, a2=a2, b1=b1, b2=b2, omega=OMEGA, kpoint=1j)

    for ai, row in ((a1, (1, 0)), (a2, (0, 1))):
        for bj, want in zip((b1, b2), row):
            got = conv.pair(ai, bj)
            if abs(got - 2 * np.pi * want) > _DUALITY_TOL * 2 * np.pi:
                raise ConventionError(
                    f"duality pairing violated: <a,b> = {got}, want {2 * np.pi * want}"
                )
    # K is rotation fixed modulo the dual lattice
    if not conv.in_dual_lattice(OMEGA * conv.kpoint - conv.kpoint, tol=1e-12):
        raise ConventionError("omega*K - K is not a dual lattice vector")
    # the tunnelling modes all sit on the K coset
    for j in range(3):
        if not conv.in_dual_lattice(1j * OMEGA**j - conv.kpoint, tol=1e-12):
            raise ConventionError(f"U mode {j} is off the K coset")
    return conv


@dataclass(frozen=True)
class Momentum:
    """A lattice momentum with exact integer coordinates.

    ``value = kpoint*s + m*b1 + n*b2`` where ``s`` is the K-coset flag.
    """

    value: complex
    coords: tuple
    offset_flag: int

    @staticmethod
    def from_coords(conv: LatticeConvention, m: int, n: int, s: int) -> "Momentum":
        return Momentum(conv.momentum_value(m, n, s), (m, n), s)


def _component_modes(cutoff_radius, convention, offset_flag, fiber=0.0 + 0.0j):
    """Integer modes (m, n) with |K*s + m b1 + n b2 + fiber| <= cutoff*|b1|.

    This is the raw inclusion rule; it carries no lower bound on the cutoff.
    """
    radius = cutoff_radius * abs(convention.b1)
    bound = int(np.ceil(cutoff_radius + abs(fiber) / abs(convention.b1))) + 3
    out = []
    for m in range(-bound, bound + 1):
        for n in range(-bound, bound + 1):
            p = convention.momentum_value(m, n, offset_flag)
            if abs(p + fiber) <= radius + 1e-12:
                out.append((m, n))
    out.sort()
    return out


# integer rotation action q -> conj(omega) q on dual coordinates
def _rotate_coords(m, n):
    return (n, -m - n)


@dataclass
class PlaneWaveBasis:
    """Truncated per-component plane-wave basis for one Bloch fiber.

    The flat index runs lexicographically over (component, m, n).  The
    truncation ball is centered on the fiber so that the rotation about the
    fiber point and the antiunitary index maps close exactly on the
    retained set; any unmatched index is a constructor error.
    """

    convention: LatticeConvention
    cutoff_radius: float
    fiber_center: complex
    modes: list = field(repr=False)            # per component: list[(m, n)]
    index: dict = field(repr=False)            # (comp, (m, n)) -> flat
    momenta: np.ndarray = field(repr=False)    # flat -> complex momentum
    component_slices: tuple = ()
    dim: int = 0

    @property
    def upper_slice(self):
        """Flat slice covering spinor components 1 and 2."""
        return slice(0, self.component_slices[2].start)

    @property
    def lower_slice(self):
        """Flat slice covering spinor components 3 and 4."""
        return slice(self.component_slices[2].start, self.dim)

    def index_of(self, component: int, m: int, n: int) -> int:
        return self.index[(component, (m, n))]

    def momentum_of(self, flat_index: int):
        """Inverse of the index map: flat index -> (component, Momentum)."""
        if not 0 <= flat_index < self.dim:
            raise BasisError(f"flat index {flat_index} out of range 0..{self.dim - 1}")
        comp = self._component_of[flat_index]
        m, n = self._mode_of[flat_index]
        return comp, Momentum(self.momenta[flat_index], (int(m), int(n)),
                              COMPONENT_OFFSETS[comp])

    def component_counts(self):
        return tuple(len(ms) for ms in self.modes)

    # -- exact index maps used by the symmetry layer ---------------------
    def rotation_map(self):
        """Permutation for rotation about the fiber center (p+f -> wbar(p+f)).

        Returns ``src`` with the convention out[i] = v[src[i]].
        """
        if self._rotation_src is None:
            kf = self.fiber_center
            x, y = self.convention.dual_coords(np.conj(OMEGA) * kf - kf)
            dm, dn = int(round(x)), int(round(y))
            if abs(x - dm) > 1e-9 or abs(y - dn) > 1e-9:
                raise BasisError(
                    f"fiber center {kf} is not rotation-fixed modulo the dual lattice")
            src = np.empty(self.dim, dtype=np.int64)
            for comp, ms in enumerate(self.modes):
                s = COMPONENT_OFFSETS[comp]
                for (m, n) in ms:
                    rm, rn = _rotate_coords(m, n)
                    # conj(omega)*K = K + b2 contributes (0, 1) per offset unit
                    tm, tn = rm + s * 0 + dm, rn + s * 1 + dn
                    key = (comp, (tm, tn))
                    if key not in self.index:
                        raise BasisError(
                            f"rotation image of {(comp, m, n)} left the basis")
                    src[self.index[key]] = self.index[(comp, (m, n))]
            self._rotation_src = src
        return self._rotation_src

    def conj_negate_map(self):
        """Permutation for p -> -conj(p): integer swap (m, n) -> (n, m)."""
        if self._conj_negate_src is None:
            src = np.empty(self.dim, dtype=np.int64)
            for comp, ms in enumerate(self.modes):
                for (m, n) in ms:
                    key = (comp, (n, m))
                    if key not in self.index:
                        raise BasisError(
                            f"conjugate image of {(comp, m, n)} left the basis")
                    src[self.index[key]] = self.index[(comp, (m, n))]
            self._conj_negate_src = src
        return self._conj_negate_src

    def __post_init__(self):
        self._rotation_src = None
        self._conj_negate_src = None
        comp_of = np.empty(self.dim, dtype=np.int64)
        mode_of = np.empty((self.dim, 2), dtype=np.int64)
        for comp, sl in enumerate(self.component_slices):
            comp_of[sl] = comp
            mode_of[sl] = np.asarray(self.modes[comp], dtype=np.int64)
        self._component_of = comp_of
        self._mode_of = mode_of


def build_basis(cutoff_radius, convention=None, fiber=0.0 + 0.0j) -> PlaneWaveBasis:
    """Build the truncated basis for the given fiber center.

    Parameters
    ----------
    cutoff_radius : float
        Truncation radius in units of |b1|; must be >= 2 so that the three
        tunnelling modes couple.
    convention : LatticeConvention, optional
    fiber : complex
        Fiber center; the truncation ball |p + fiber| <= cutoff*|b1| is
        taken about it so fiber-local symmetries close exactly.
    """
    if convention is None:
        convention = make_convention()
    if cutoff_radius < 2:
        raise BasisError(
            f"cutoff_radius must be >= 2 to couple the tunnelling modes, "
            f"got {cutoff_radius}")
    modes = [
        _component_modes(cutoff_radius, convention, COMPONENT_OFFSETS[c], fiber)
        for c in range(N_COMPONENTS)
    ]
    index = {}
    momenta = []
    slices = []
    flat = 0
    for comp, ms in enumerate(modes):
        start = flat
        for (m, n) in ms:
            index[(comp, (m, n))] = flat
            momenta.append(convention.momentum_value(m, n, COMPONENT_OFFSETS[comp]))
            flat += 1
        slices.append(slice(start, flat))
    basis = PlaneWaveBasis(
        convention=convention,
        cutoff_radius=float(cutoff_radius),
        fiber_center=complex(fiber),
        modes=modes,
        index=index,
        momenta=np.asarray(momenta, dtype=complex),
        component_slices=tuple(slices),
        dim=flat,
    )
    # constructive closure checks: rotation and the antiunitary index map
    basis.rotation_map()
    basis.conj_negate_map()
    return basis


def write_convention_json(path, convention=None):
    """Export the convention constants for plotting and test fixtures."""
    if convention is None:
        convention = make_convention()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(convention.to_json())
        fh.write("\n")
