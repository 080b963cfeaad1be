"""Magic parameters: chiral roots, the magic curve, and Taylor data.

Magic parameters are zeros of the signed Fermi velocity.  Chiral magic
angles are bracketed by sign changes of v_F(., 0) and bisected; the
in-plane magic curve alpha(lambda) through a simple chiral root is traced
by a predictor-corrector continuation with a Newton corrector on
alpha -> v_F(alpha, lambda).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContinuationError, MoireError
from .lattice import PlaneWaveBasis
from .protected import fermi_velocity


def _vf(alpha, lam, basis) -> float:
    return fermi_velocity(alpha, lam, basis)[0].v_f


@dataclass
class MagicRoot:
    alpha: float
    v_residual: float
    kernel_gap: float


def find_magic_chiral(alpha_lo, alpha_hi, basis: PlaneWaveBasis,
                      scan_n: int = 400, alpha_tol: float = 1e-8):
    """Chiral magic angles in [alpha_lo, alpha_hi] by sign-change bisection.

    Returns an empty list when no sign change occurs on the scan grid.
    """
    if not (0 < alpha_lo < alpha_hi <= 10):
        raise MoireError("alpha range must satisfy 0 < lo < hi <= 10")
    grid = np.linspace(alpha_lo, alpha_hi, int(scan_n))
    vals = np.array([_vf(a, 0.0, basis) for a in grid])
    roots = []
    for i in range(len(grid) - 1):
        if vals[i] == 0.0:
            lo = hi = grid[i]
        elif vals[i] * vals[i + 1] < 0.0:
            lo, hi = grid[i], grid[i + 1]
            flo = vals[i]
            while hi - lo > alpha_tol:
                mid = 0.5 * (lo + hi)
                fm = _vf(mid, 0.0, basis)
                if fm == 0.0:
                    lo = hi = mid
                    break
                if np.sign(fm) == np.sign(flo):
                    lo, flo = mid, fm
                else:
                    hi = mid
        else:
            continue
        root = 0.5 * (lo + hi)
        sample, pair = fermi_velocity(root, 0.0, basis)
        roots.append(MagicRoot(alpha=float(root),
                               v_residual=abs(sample.v_f),
                               kernel_gap=sample.kernel_gap))
    return roots


@dataclass
class MagicCurve:
    """Continuation samples (lambda ascending) through a chiral root."""

    alpha0: float
    samples: list = field(default_factory=list)   # (lam, alpha, |v|, gap)

    def alpha_at(self, lam: float) -> float:
        lams = np.array([s[0] for s in self.samples])
        alphas = np.array([s[1] for s in self.samples])
        i = int(np.argmin(np.abs(lams - lam)))
        return float(alphas[i])


def _newton_alpha(alpha_start, lam, basis, fd_step=1e-5, resid_tol=1e-10,
                  max_iter=14, max_move=0.2):
    alpha = alpha_start
    for _ in range(max_iter):
        v = _vf(alpha, lam, basis)
        if abs(v) <= resid_tol:
            return alpha, abs(v)
        dv = (_vf(alpha + fd_step, lam, basis)
              - _vf(alpha - fd_step, lam, basis)) / (2 * fd_step)
        if dv == 0.0:
            break
        move = v / dv
        if abs(move) > max_move:
            break
        alpha -= move
    raise ContinuationError(
        f"Newton corrector failed at lambda={lam} from alpha={alpha_start}")


def trace_magic_curve(alpha0, lambda_max, basis: PlaneWaveBasis,
                      step: float = 0.05, resid_tol: float = 1e-10,
                      min_step: float = 1e-4) -> MagicCurve:
    """Trace the magic curve through (alpha0, 0) for |lambda| <= lambda_max.

    alpha0 must be a simple chiral root with a usable slope
    |d v_F / d alpha| > 1e-3.  The predictor is the previous alpha,
    upgraded to quadratic extrapolation once three samples exist; the
    corrector is Newton with a finite-difference derivative.  Step halving
    handles corrector failures; an exhausted step aborts with the partial
    curve attached.
    """
    slope = (_vf(alpha0 + 1e-4, 0.0, basis)
             - _vf(alpha0 - 1e-4, 0.0, basis)) / 2e-4
    if abs(slope) <= 1e-3:
        raise ContinuationError(
            f"slope d v/d alpha = {slope:.3e} too small at alpha0 = {alpha0}")
    v0 = _vf(alpha0, 0.0, basis)
    sample0, _ = fermi_velocity(alpha0, 0.0, basis)
    curve = {0.0: (alpha0, abs(v0), sample0.kernel_gap)}

    for direction in (+1.0, -1.0):
        lam = 0.0
        h = step
        alphas = [(0.0, alpha0)]
        while lam * direction < lambda_max - 1e-12 and h >= min_step:
            lam_next = lam + direction * h
            if lam_next * direction > lambda_max:
                lam_next = direction * lambda_max
            if len(alphas) >= 3:
                ls = np.array([la for la, _ in alphas[-3:]])
                avs = np.array([aa for _, aa in alphas[-3:]])
                pred = float(np.polyval(np.polyfit(ls, avs, 2), lam_next))
            else:
                pred = alphas[-1][1]
            try:
                alpha_n, resid = _newton_alpha(pred, lam_next, basis,
                                               resid_tol=resid_tol)
            except (ContinuationError, MoireError):
                h *= 0.5
                continue
            sample, _ = fermi_velocity(alpha_n, lam_next, basis)
            curve[lam_next] = (alpha_n, resid, sample.kernel_gap)
            alphas.append((lam_next, alpha_n))
            lam = lam_next
        if lam * direction < lambda_max - 1e-12:
            partial = MagicCurve(alpha0=alpha0, samples=sorted(
                (l, a, r, g) for l, (a, r, g) in curve.items()))
            raise ContinuationError(
                f"continuation stalled at lambda = {lam} (direction "
                f"{direction:+.0f})", partial=partial)

    samples = sorted((l, a, r, g) for l, (a, r, g) in curve.items())
    return MagicCurve(alpha0=alpha0, samples=[tuple(s) for s in samples])


@dataclass
class TaylorCoefficients:
    """Finite-difference Taylor data of v_F about a chiral root."""

    alpha0: float
    c10: float
    c02: float
    c11: float
    c01_check: float
    steps: dict
    richardson_disagreement: float


def taylor_coefficients(alpha0, basis: PlaneWaveBasis, h_alpha: float = 1e-3,
                        h_lambda: float = 2e-2) -> TaylorCoefficients:
    """Richardson-extrapolated central differences of v_F at (alpha0, 0).

    c10 is the alpha slope, c02 half the second lambda derivative, c11 the
    mixed derivative, and c01_check estimates the first lambda derivative,
    which should vanish.  Richardson pair disagreement above 1% is
    reported through the ``richardson_disagreement`` field.
    """
    def v(a, l):
        return _vf(a, l, basis)

    v00 = v(alpha0, 0.0)

    def d_alpha(h):
        return (v(alpha0 + h, 0.0) - v(alpha0 - h, 0.0)) / (2 * h)

    d1 = d_alpha(h_alpha)
    d2 = d_alpha(h_alpha / 2)
    c10 = (4 * d2 - d1) / 3
    disagreement = abs(d1 - d2) / max(abs(c10), 1e-30)

    def d2_lambda(g):
        return (v(alpha0, g) - 2 * v00 + v(alpha0, -g)) / g**2

    s1 = d2_lambda(h_lambda)
    s2 = d2_lambda(h_lambda / 2)
    c02 = (4 * s2 - s1) / 3 / 2.0
    disagreement = max(disagreement,
                       abs(s1 - s2) / max(abs(2 * c02), 1e-30))

    g = h_lambda
    h = h_alpha
    c11 = (v(alpha0 + h, g) - v(alpha0 + h, -g)
           - v(alpha0 - h, g) + v(alpha0 - h, -g)) / (4 * h * g)
    c01 = (v(alpha0, g) - v(alpha0, -g)) / (2 * g)

    return TaylorCoefficients(alpha0=float(alpha0), c10=float(c10),
                              c02=float(c02), c11=float(c11),
                              c01_check=float(c01),
                              steps={"h_alpha": h_alpha, "h_lambda": h_lambda},
                              richardson_disagreement=float(disagreement))
