"""PT-real frames, Wilson-loop winding numbers, and the Euler sum rule.

The two middle bands, where they are nondegenerate, carry a rank-two real
structure: eigenvectors can be chosen invariant under the antilinear PT
symmetry, and overlaps of PT-invariant vectors are real.  Discrete
parallel transport of such frames around a band touching accumulates a
rotation angle whose value over the full loop is quantized in half
integers; the indices of all touchings sum to the Euler number of the
two-band bundle, which equals -1 here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EnclosureError, MoireError, QuantizationError
from .hamiltonian import assemble
from .lattice import PlaneWaveBasis
from .spectra import TouchingScan, band_labels, band_split_index, \
    middle_window, torus_distance
from .symmetry import antiunitary_rep

#: reference momentum anchoring the global frame orientation
K_REFERENCE = 0.07 + 0.02j

QUANT_TOL = 1e-2


def _pt_rep(basis: PlaneWaveBasis):
    rep = getattr(basis, "_pt_rep", None)
    if rep is None:
        rep = antiunitary_rep("PT", basis, basis.fiber_center)
        basis._pt_rep = rep
    return rep


def _sign_probe(dim: int) -> np.ndarray:
    """Fixed deterministic probe vector used to pin frame signs."""
    rng = np.random.default_rng(20240601)
    return rng.standard_normal(dim)


@dataclass
class RealFrame:
    """PT-invariant orthonormal frame of the two middle bands at one k."""

    k: complex
    f_plus: np.ndarray
    f_minus: np.ndarray
    pt_residuals: tuple
    gram_offdiag: float
    gap: float

    def stack(self) -> np.ndarray:
        return np.column_stack([self.f_plus, self.f_minus])


def pt_real_frame(alpha, lam, k, basis: PlaneWaveBasis,
                  degeneracy_tol: float = 1e-8) -> RealFrame:
    """PT-invariant representatives of the E_{+1} and E_{-1} eigenvectors.

    Fails on (near-)touchings: loops must stay off degeneracies.
    """
    k = complex(k)
    ham = assemble(k, alpha, lam, basis)
    res = middle_window(ham, 1, want_vectors=True)
    sp_i = band_split_index(res.values)
    w_minus = res.vectors[:, sp_i - 1]
    w_plus = res.vectors[:, sp_i]
    gap = float(res.values[sp_i] - res.values[sp_i - 1])
    if gap <= degeneracy_tol:
        raise MoireError(
            f"bands degenerate at k={k} (gap {gap:.3e}); cannot build a "
            f"PT-real frame on a touching")
    pt = _pt_rep(basis)
    probe = _sign_probe(basis.dim)

    def make_real(w):
        f = w + pt.apply(w)
        if np.linalg.norm(f) < 0.1:
            f = 1j * (w - pt.apply(w))
        f = f / np.linalg.norm(f)
        s = float(np.vdot(probe, f).real)
        if abs(s) < 1e-9:
            s = float(np.vdot(probe, f).imag)
        return -f if s < 0 else f

    f_plus = make_real(w_plus)
    f_minus = make_real(w_minus)
    ptr = (float(np.linalg.norm(pt.apply(f_plus) - f_plus)),
           float(np.linalg.norm(pt.apply(f_minus) - f_minus)))
    gram = float(abs(np.vdot(f_plus, f_minus)))
    return RealFrame(k=k, f_plus=f_plus, f_minus=f_minus, pt_residuals=ptr,
                     gram_offdiag=gram, gap=gap)


def _align_columns(prev: RealFrame, cur: RealFrame, min_overlap=0.5):
    """Flip frame column signs for continuity with the previous frame."""
    for name in ("f_plus", "f_minus"):
        a = getattr(prev, name)
        b = getattr(cur, name)
        ov = float(np.vdot(a, b).real)
        if abs(ov) < min_overlap:
            raise MoireError(
                f"frame overlap {ov:.3f} too small between k={prev.k} and "
                f"k={cur.k}; sample the path more densely")
        if ov < 0:
            setattr(cur, name, -b)
    return cur


def transport_frame(alpha, lam, start: RealFrame, k_target,
                    basis: PlaneWaveBasis, step: float = 0.02,
                    degeneracy_tol: float = 1e-8) -> RealFrame:
    """Parallel sign transport of a frame along a straight path.

    If an intermediate point is degenerate the path detours laterally.
    """
    k_target = complex(k_target)
    for detour in (0.0, 0.05, -0.05, 0.05j, -0.05j, 0.11 + 0.04j):
        try:
            frame = start
            if detour:
                mid = 0.5 * (start.k + k_target) + detour
                waypoints = [start.k, mid, k_target]
            else:
                waypoints = [start.k, k_target]
            for a, b in zip(waypoints[:-1], waypoints[1:]):
                n = max(4, int(np.ceil(abs(b - a) / step)))
                for t in range(1, n + 1):
                    kt = a + (b - a) * t / n
                    nxt = pt_real_frame(alpha, lam, kt, basis,
                                        degeneracy_tol=degeneracy_tol)
                    frame = _align_columns(frame, nxt)
            return frame
        except MoireError:
            continue
    raise MoireError(f"could not transport frame from {start.k} to {k_target}")


def _rotation_angle(m: np.ndarray) -> float:
    """Angle of the closest rotation to a real 2x2 matrix."""
    return float(np.arctan2(m[1, 0] - m[0, 1], m[0, 0] + m[1, 1]))


@dataclass
class WindingResult:
    center: complex
    radius: float
    n_samples: int
    index: float
    index_raw: float
    quantization_residual: float
    angles: np.ndarray = field(repr=False)


def winding_number(alpha, lam, center, radius, basis: PlaneWaveBasis,
                   n_samples: int = 128, touchings=None,
                   start_frame: RealFrame = None) -> WindingResult:
    """Wilson-loop winding index of the two middle bands around a point.

    Discrete parallel transport with per-step rotation projection; steps
    larger than pi/4 and quantization residuals above 1e-2 are errors,
    never silently absorbed.  ``touchings`` (momenta) enables the
    enclosure precondition; ``start_frame`` imposes a globally transported
    orientation on the loop start.
    """
    center = complex(center)
    if n_samples < 64:
        raise MoireError("winding loops need n_samples >= 64")
    if touchings is not None:
        conv = basis.convention
        for kt in touchings:
            d = torus_distance(complex(kt) - center, conv)
            if d < 1e-6:
                continue                      # the enclosed touching
            if d < 1.25 * radius:
                raise EnclosureError(
                    f"touching at {kt} lies within {d:.4f} of the loop "
                    f"around {center} (radius {radius})")

    ks = center + radius * np.exp(2j * np.pi * np.arange(n_samples) / n_samples)
    first = pt_real_frame(alpha, lam, ks[0], basis)
    if start_frame is not None:
        first = _align_columns(start_frame, first)
    frames = [first]
    for t in range(1, n_samples):
        nxt = pt_real_frame(alpha, lam, ks[t], basis)
        frames.append(_align_columns(frames[-1], nxt))

    angles = []
    for t in range(n_samples):
        cur = frames[t].stack()
        nxt = frames[(t + 1) % n_samples].stack()
        m = (cur.conj().T @ nxt).real
        theta = _rotation_angle(m)
        if t < n_samples - 1 and abs(theta) >= np.pi / 4:
            raise MoireError(
                f"transport step {t} rotates by {theta:.3f} >= pi/4; "
                f"increase n_samples")
        angles.append(theta)
    total = float(np.sum(angles))
    index_raw = -total / (2 * np.pi)
    two_a = 2.0 * index_raw
    residual = abs(two_a - np.round(two_a)) / 2.0
    index = float(np.round(two_a) / 2.0)
    if residual > QUANT_TOL:
        raise QuantizationError(
            f"winding index {index_raw:.4f} fails half-integer quantization "
            f"(residual {residual:.3e})", index_raw=index_raw,
            residual=residual)
    return WindingResult(center=center, radius=float(radius),
                         n_samples=n_samples, index=index,
                         index_raw=float(index_raw),
                         quantization_residual=float(residual),
                         angles=np.asarray(angles))


@dataclass
class EulerSum:
    total: float
    per_point: list                     # (center, WindingResult, orbit_rep)
    matches_expected: bool
    expected: float = -1.0


def _orbit_members(point, conv):
    k = point.k_star
    if point.orbit_size == 1:
        return [k]
    return [k * conv.omega**j for j in range(point.orbit_size)]


def euler_sum(alpha, lam, scan: TouchingScan, basis: PlaneWaveBasis,
              n_samples: int = 128, radius_cap: float = 0.1) -> EulerSum:
    """Sum of winding indices over all detected touchings.

    Radii default to half the nearest-neighbor touching distance, capped;
    enclosure or quantization failures retry with a shrunk radius.  All
    loop orientations are transported from one reference frame so the
    indices are mutually consistent; the sum is compared against the
    bundle's Euler number -1.
    """
    conv = basis.convention
    centers = []
    for pt in scan.points:
        centers.extend(_orbit_members(pt, conv))
    ref = pt_real_frame(alpha, lam, K_REFERENCE, basis)
    per_point = []
    total = 0.0
    for pt in scan.points:
        for kc in _orbit_members(pt, conv):
            dmin = min((torus_distance(kc - other, conv)
                        for other in centers
                        if torus_distance(kc - other, conv) > 1e-6),
                       default=2 * radius_cap)
            radius = min(radius_cap, 0.5 * dmin)
            result = None
            last_exc = None
            for shrink in (1.0, 0.6, 0.35):
                try:
                    start = transport_frame(alpha, lam, ref,
                                            kc + radius * shrink, basis)
                    result = winding_number(
                        alpha, lam, kc, radius * shrink, basis,
                        n_samples=n_samples, touchings=centers,
                        start_frame=start)
                    break
                except (EnclosureError, QuantizationError, MoireError) as exc:
                    last_exc = exc
            if result is None:
                raise last_exc
            per_point.append((kc, result, pt.k_star))
            total += result.index
    return EulerSum(total=float(total), per_point=per_point,
                    matches_expected=bool(abs(total + 1.0) < 1e-6))


def classify_touching(alpha, lam, k_star, basis: PlaneWaveBasis,
                      winding: float = None,
                      radii=(0.005, 0.01, 0.02), n_angles: int = 8,
                      exponent_tol: float = 0.15) -> dict:
    """Conic/quadratic classification of a touching by gap scaling.

    Fits the slope of log E_1(k* + h e^{i t}) against log h, averaged over
    directions, and cross-checks the winding index when supplied.
    Returns a dict with the kind, exponent, and diagnostics.
    """
    k_star = complex(k_star)
    logs = []
    for h in radii:
        acc = 0.0
        for j in range(n_angles):
            k = k_star + h * np.exp(2j * np.pi * j / n_angles)
            ham = assemble(k, alpha, lam, basis)
            res = middle_window(ham, 1, want_vectors=False)
            e1 = band_labels(res.values, 1)[1]
            acc += np.log(max(e1, 1e-300))
        logs.append(acc / n_angles)
    slope = float(np.polyfit(np.log(radii), logs, 1)[0])
    if abs(slope - 1.0) <= exponent_tol:
        kind = "conic"
    elif abs(slope - 2.0) <= exponent_tol:
        kind = "quadratic"
    else:
        kind = "other"
    agree = None
    if winding is not None:
        wind_conic = abs(abs(winding) - 0.5) < 1e-6
        wind_quad = winding in (0.0, 1.0, -0.0)
        agree = (kind == "conic" and wind_conic) or \
                (kind == "quadratic" and wind_quad)
        if not agree and kind != "other":
            kind = "other"
    return {"kind": kind, "exponent": slope, "winding": winding,
            "winding_consistent": agree}
