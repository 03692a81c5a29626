"""Normalized midpoint curvature rho0 and its temperature-only upper bounds.

For any non-negative spectral density the ratio of the order-n midpoint moment
to the equal-time correlator is bounded peak by peak,

    omega^n / cosh(beta omega / 2) = (2/beta)^n x^n / cosh x <= (2/beta)^n sup_x x^n / cosh x,

with x = beta omega / 2. The supremum sits at the root of x tanh x = n. For
n = 2 the ratio is rho0 itself; the odd-n kernels use |omega|^n, which keeps
the same rescaling.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import matsubara
from .errors import DomainError, ZeroNoise
from .matsubara import SpectralDensity

ZERO_NOISE_TOL = 1e-14
BISECTION_LO = 1e-6
BISECTION_HI = 50.0
BISECTION_TOL = 1e-12

# Rounded values quoted in the literature for n = 2.
REPORTED_X_STAR = 2.07
REPORTED_SUP = 1.06
REPORTED_A = 2.0


@dataclass(frozen=True)
class BoundConstants:
    order: int
    x_star: float
    sup_val: float
    a_const: float

    def bound(self, beta: float) -> float:
        """(2/beta)^n sup_x x^n / cosh x."""
        return (2.0 / beta) ** self.order * self.sup_val


def _bisect(f, lo, hi, tol):
    flo = f(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fmid = f(mid)
        if (fmid > 0) == (flo > 0):
            lo, flo = mid, fmid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def bound_constants(n: int = 2) -> BoundConstants:
    """Locate sup_{x>0} x^n / cosh x by bisection on x tanh x = n.

    a_const = 2 sup_val^(1/n), so that the bound reads (a_const / beta)^n;
    for n = 2 this is 2 sqrt(sup_val).
    """
    if not 1 <= n <= 6:
        raise DomainError(f"bound order must be in [1, 6], got {n}")
    x_star = _bisect(lambda x: x * math.tanh(x) - n, BISECTION_LO, BISECTION_HI, BISECTION_TOL)
    sup_val = x_star ** n / math.cosh(x_star)
    return BoundConstants(n, x_star, sup_val, 2.0 * sup_val ** (1.0 / n))


def rho0_band(grid, beta: float) -> float:
    """Band-space midpoint curvature ratio.

    sum_k gap^4 G_xx / sinh(beta gap / 2)  over  sum_k gap^2 G_xx / tanh(beta gap / 2);
    the (2 pi / n)^2 weights cancel.
    """
    if beta <= 0:
        raise DomainError("beta must be positive")
    gap = np.asarray(grid.gap, dtype=float)
    gxx = np.asarray(grid.gxx, dtype=float)
    # gap^3/sinh and gap/tanh through the overflow-free midpoint/coth kernels.
    num = grid.sum(gap * gxx * matsubara._midpoint_kernel(2, gap.ravel(), beta).reshape(gap.shape))
    den = grid.sum(gap * gxx * matsubara._coth_kernel(gap.ravel(), beta).reshape(gap.shape))
    if den < ZERO_NOISE_TOL:
        raise ZeroNoise(f"equal-time noise {den:.3e} vanishes: no quantum noise channel")
    return num / den


def band_equal_time(grid, beta: float) -> float:
    """S(0) = sum_k gap^2 G_xx / tanh(beta gap / 2) (2 pi / n)^2."""
    gap = np.asarray(grid.gap, dtype=float)
    coth = matsubara._coth_kernel(gap.ravel(), beta).reshape(gap.shape)
    return grid.sum(gap * np.asarray(grid.gxx) * coth)


def band_curvature(grid, beta: float) -> float:
    """d^2 S / d tau^2 at beta/2 = sum_k gap^4 G_xx / sinh(beta gap / 2) (2 pi / n)^2."""
    gap = np.asarray(grid.gap, dtype=float)
    mid = matsubara._midpoint_kernel(2, gap.ravel(), beta).reshape(gap.shape)
    return grid.sum(gap * np.asarray(grid.gxx) * mid)


def geometric_sum(grid) -> float:
    """Zero-temperature limit sum_k gap^2 G_xx (2 pi / n)^2."""
    gap = np.asarray(grid.gap, dtype=float)
    return grid.sum(gap ** 2 * np.asarray(grid.gxx))


def _noise(d: SpectralDensity, beta: float) -> float:
    s0 = matsubara.equal_time(d, beta) if not d.is_empty else 0.0
    if s0 < ZERO_NOISE_TOL:
        raise ZeroNoise(f"equal-time noise {s0:.3e} vanishes: no quantum noise channel")
    return s0


def moment_ratio(d: SpectralDensity, beta: float, n: int) -> float:
    """Order-n midpoint moment divided by S(0)."""
    s0 = _noise(d, beta)
    return matsubara.midpoint_moment(d, beta, n) / s0


def rho0_spectral(d: SpectralDensity, beta: float) -> float:
    return moment_ratio(d, beta, 2)


def check_bound(d: SpectralDensity, beta: float, n: int = 2, constants: BoundConstants | None = None) -> float:
    """Margin (2/beta)^n sup - moment_n / S(0); never negative for valid densities."""
    c = constants if constants is not None else bound_constants(n)
    return c.bound(beta) - moment_ratio(d, beta, n)


@dataclass(frozen=True)
class SweepRow:
    delta: float
    rho0: float
    rho0_beta2_over4: float
    margin: float


def saturation_sweep(beta: float, delta_range, steps: int) -> list[SweepRow]:
    """rho0 of single-gap densities over a uniform grid of gaps."""
    if steps < 10:
        raise DomainError("a saturation sweep needs at least 10 steps")
    start, stop = delta_range
    c = bound_constants(2)
    rows = []
    for delta in np.linspace(start, stop, steps):
        rho = rho0_spectral(SpectralDensity.from_peaks([(delta, 1.0)]), beta)
        rows.append(SweepRow(float(delta), rho, rho * beta ** 2 / 4.0, c.bound(beta) - rho))
    return rows


def sweep_maximum(rows) -> SweepRow:
    return max(rows, key=lambda r: r.rho0_beta2_over4)


def write_sweep_csv(rows, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(("delta", "rho0", "rho0_beta2_over4", "margin"))
    for r in rows:
        writer.writerow([f"{v:.12g}" for v in (r.delta, r.rho0, r.rho0_beta2_over4, r.margin)])
