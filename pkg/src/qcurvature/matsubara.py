r"""Imaginary-time correlators built from non-negative spectral densities.

A spectral density is a finite list of peaks (omega_p, w_p); each stored peak
stands for the symmetric pair of delta functions at +-omega_p in
Re sigma_xx(omega). With the measure d omega / 2 pi this gives

    S(tau) = (1/pi) sum_p w_p K_0(omega_p, tau),
    K_m(omega, tau) = omega^(2m+1) cosh[(beta/2 - tau) omega] / sinh(beta omega / 2),

and the bosonic Matsubara transform (integral over [0, beta] of
exp(i omega_n tau) S(tau))

    S(i omega_n) = (1/pi) sum_p w_p 2 omega_p^2 / (omega_p^2 + omega_n^2).

Every Matsubara resummation here carries the 1/beta prefactor:
``(1/beta) sum_n (-1)^n S(i omega_n) = S(beta/2)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import mpmath
import numpy as np

from .errors import DomainError, EmptyDensity, NotConverged

SMALL_ARG = 1e-6
MAX_KERNEL_ORDER = 6
EULER_WINDOW = 64
MIN_TERMS = 64
CONVERGENCE_RTOL = 1e-6
DROP_RTOL = 1e-14
COALESCE_RTOL = 1e-13


@dataclass(frozen=True)
class SpectralDensity:
    omegas: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        om = np.atleast_1d(np.asarray(self.omegas, dtype=float)).copy()
        w = np.atleast_1d(np.asarray(self.weights, dtype=float)).copy()
        if om.shape != w.shape or om.ndim != 1:
            raise ValueError("omegas and weights must be 1-D arrays of equal length")
        if np.any(om < 0) or not np.all(np.isfinite(om)):
            raise ValueError("peak frequencies must be finite and >= 0")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("peak weights must be finite and >= 0")
        om.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "omegas", om)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_peaks(cls, peaks):
        peaks = list(peaks)
        if not peaks:
            return cls(np.zeros(0), np.zeros(0))
        om, w = zip(*peaks)
        return cls(np.array(om, dtype=float), np.array(w, dtype=float))

    @property
    def total_weight(self) -> float:
        return math.fsum(self.weights.tolist())

    @property
    def is_empty(self) -> bool:
        return self.omegas.size == 0 or self.total_weight <= 0.0

    def scaled(self, factor: float) -> "SpectralDensity":
        return SpectralDensity(self.omegas, self.weights * factor)

    def __len__(self):
        return self.omegas.size


def _require_nonempty(d: SpectralDensity):
    if d.is_empty:
        raise EmptyDensity("spectral density has no weight")


def _kernel_array(m, omega, tau, beta):
    omega = np.abs(np.asarray(omega, dtype=float))
    x = beta * omega
    small = x < SMALL_ARG
    out = np.empty_like(omega)
    # Leading Taylor term of omega^(2m+1) cosh(...)/sinh(beta omega/2).
    out[small] = omega[small] ** (2 * m) * (2.0 / beta)
    om = omega[~small]
    num = np.exp(-tau * om) + np.exp(-(beta - tau) * om)
    out[~small] = om ** (2 * m + 1) * num / (-np.expm1(-beta * om))
    return out


def kernel(m: int, omega, tau: float, beta: float):
    """omega^(2m+1) cosh[(beta/2 - tau) omega] / sinh(beta omega / 2).

    Evaluated in an overflow-free exponential form; below |beta omega| = 1e-6
    the leading Taylor term (2/beta) omega^(2m) is returned.
    """
    if not 0 <= m <= MAX_KERNEL_ORDER:
        raise DomainError(f"kernel order must be in [0, {MAX_KERNEL_ORDER}], got {m}")
    if beta <= 0:
        raise DomainError("beta must be positive")
    if not 0.0 <= tau <= beta:
        raise DomainError(f"tau={tau} outside [0, beta={beta}]")
    out = _kernel_array(m, np.atleast_1d(omega), tau, beta)
    return float(out[0]) if np.ndim(omega) == 0 else out


def _coth_kernel(omega, beta):
    """omega / tanh(beta omega / 2), i.e. K_0 at tau = 0."""
    return _kernel_array(0, omega, 0.0, beta)


def _midpoint_kernel(order, omega, beta):
    """omega^(order+1) / sinh(beta omega / 2) without overflow."""
    omega = np.abs(np.asarray(omega, dtype=float))
    x = beta * omega
    out = np.empty_like(omega)
    small = x < SMALL_ARG
    out[small] = omega[small] ** order * (2.0 / beta)
    om = omega[~small]
    out[~small] = 2.0 * om ** (order + 1) * np.exp(-0.5 * beta * om) / (-np.expm1(-beta * om))
    return out


def _weighted_sum(weights, values) -> float:
    return math.fsum((np.asarray(weights) * np.asarray(values)).tolist()) / math.pi


@dataclass(frozen=True)
class TauCorrelator:
    beta: float
    values: np.ndarray

    @property
    def n_tau(self) -> int:
        return self.values.size

    @property
    def taus(self) -> np.ndarray:
        return np.linspace(0.0, self.beta, self.n_tau)

    @property
    def normalized(self) -> np.ndarray:
        return self.values / self.values[0]

    def kms_residual(self) -> float:
        """max |S(tau_j) - S(beta - tau_j)| / S(0)."""
        return float(np.max(np.abs(self.values - self.values[::-1])) / self.values[0])

    def midpoint(self) -> float:
        if self.n_tau % 2 == 0:
            raise DomainError("tau = beta/2 is a grid point only for odd n_tau")
        return float(self.values[self.n_tau // 2])

    def write_csv(self, fh) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("tau", "S", "s_normalized"))
        for t, s, sn in zip(self.taus, self.values, self.normalized):
            writer.writerow((f"{t:.12g}", f"{s:.12g}", f"{sn:.12g}"))


def correlator_at(d: SpectralDensity, beta: float, tau: float) -> float:
    """S(tau) for a single imaginary time."""
    if not 0.0 <= tau <= beta:
        raise DomainError(f"tau={tau} outside [0, beta={beta}]")
    return _weighted_sum(d.weights, _kernel_array(0, d.omegas, tau, beta))


def spectral_correlator(d: SpectralDensity, beta: float, n_tau: int) -> TauCorrelator:
    _require_nonempty(d)
    if n_tau < 2:
        raise ValueError("n_tau must be >= 2")
    taus = np.linspace(0.0, beta, n_tau)
    values = np.array([correlator_at(d, beta, t) for t in taus])
    # Exact KMS symmetry: mirror images share the same kernel values up to rounding.
    half = n_tau // 2
    values[n_tau - half:] = values[:half][::-1]
    return TauCorrelator(beta, values)


def equal_time(d: SpectralDensity, beta: float) -> float:
    """S(0) = (1/pi) sum_p w_p omega_p / tanh(beta omega_p / 2)."""
    return _weighted_sum(d.weights, _coth_kernel(d.omegas, beta))


def midpoint_moment(d: SpectralDensity, beta: float, order: int) -> float:
    """(1/pi) sum_p w_p omega_p^(order+1) / sinh(beta omega_p / 2).

    For even order this is the order-th tau-derivative of S at beta/2.
    """
    return _weighted_sum(d.weights, _midpoint_kernel(order, d.omegas, beta))


def curvature_at_midpoint(d: SpectralDensity, beta: float) -> float:
    """d^2 S / d tau^2 at tau = beta/2."""
    _require_nonempty(d)
    return midpoint_moment(d, beta, 2)


def band_density(grid) -> SpectralDensity:
    """Lehmann peaks of the interband bubble: omega = gap, w = pi gap G_xx dk^2.

    Negligible weights are dropped and numerically coincident frequencies are
    merged so that flat bands collapse onto a single peak.
    """
    om = np.asarray(grid.gap, dtype=float).ravel(order="C")
    w = math.pi * om * np.asarray(grid.gxx, dtype=float).ravel(order="C") * grid.weight
    if w.size == 0 or np.max(w) <= 0:
        return SpectralDensity(np.zeros(0), np.zeros(0))
    keep = w >= DROP_RTOL * np.max(w)
    return coalesce(om[keep], w[keep])


def coalesce(omegas, weights) -> SpectralDensity:
    order = np.argsort(omegas, kind="stable")
    om = np.asarray(omegas, dtype=float)[order]
    w = np.asarray(weights, dtype=float)[order]
    breaks = np.flatnonzero(np.diff(om) > COALESCE_RTOL * np.maximum(om[1:], 1.0)) + 1
    out_om, out_w = [], []
    for grp_om, grp_w in zip(np.split(om, breaks), np.split(w, breaks)):
        total = math.fsum(grp_w.tolist())
        out_w.append(total)
        out_om.append(grp_om[0] if total == 0 else math.fsum((grp_om * grp_w).tolist()) / total)
    return SpectralDensity(np.array(out_om), np.array(out_w))


def matsubara_frequency(n: int, beta: float) -> float:
    return 2.0 * math.pi * n / beta


def matsubara_transform(d: SpectralDensity, beta: float, n: int) -> float:
    """S(i omega_n) for bosonic index n (closed form, no quadrature)."""
    wn2 = matsubara_frequency(n, beta) ** 2
    om2 = d.omegas ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(om2 + wn2 > 0, 2.0 * om2 / (om2 + wn2), 2.0)
    return _weighted_sum(d.weights, frac)


def _working_precision(d, beta, n_terms, moment):
    om_max = float(np.max(d.omegas)) if len(d) else 0.0
    # Digits lost to cancellation: exp(beta omega / 2) from the alternating
    # signs, plus growth of omega_n^(2 moment) partial sums.
    lost = beta * om_max / (2.0 * math.log(10.0))
    lost += 2 * moment * math.log10(2.0 * math.pi * (n_terms + 1) / beta + 1.0)
    return 30 + int(math.ceil(lost)) + int(math.ceil(math.log10(n_terms + 1)))


def _partial_sums(d, beta, n_terms, alternating, moment):
    """Partial sums P_N = t_0 + 2 sum_{n=1}^N sign_n t_n for N = 0..n_terms.

    t_n = omega_n^(2 moment) S(i omega_n); sign_n = (-1)^(n + moment) when
    alternating, +1 otherwise. Uses mpmath at the current working precision.
    """
    mp = mpmath.mp
    uniq, inv = np.unique(d.omegas, return_inverse=True)
    w = np.zeros(uniq.size)
    np.add.at(w, inv, d.weights)
    om2 = [mp.mpf(float(o)) ** 2 for o in uniq]
    coef = [2 * mp.mpf(float(wi)) * o2 / mp.pi for wi, o2 in zip(w, om2)]
    step = 2 * mp.pi / mp.mpf(beta)
    sums = []
    acc = mp.mpf(0)
    for n in range(n_terms + 1):
        wn2 = (step * n) ** 2
        if n == 0:
            # 2 omega^2 / (omega^2 + 0) = 2 for every peak, including omega = 0.
            if moment == 0:
                acc += 2 * mp.fsum(mp.mpf(float(wi)) for wi in w) / mp.pi
        else:
            t = mp.fsum(c / (o2 + wn2) for c, o2 in zip(coef, om2))
            if moment:
                t *= wn2 ** moment
            sign = (-1) ** (n + moment) if alternating else 1
            acc += 2 * sign * t
        sums.append(acc)
    return sums


def _euler_average(sums):
    """Repeated pairwise averaging of alternating-series partial sums."""
    s = list(sums)
    while len(s) > 1:
        s = [(a + b) / 2 for a, b in zip(s[:-1], s[1:])]
    return s[0]


def _richardson(pairs):
    """Neville extrapolation to h -> 0 of (h, value) pairs."""
    hs = [h for h, _ in pairs]
    table = [v for _, v in pairs]
    for level in range(1, len(table)):
        table = [
            (hs[i + level] * table[i] - hs[i] * table[i + 1]) / (hs[i + level] - hs[i])
            for i in range(len(table) - 1)
        ]
    return table[0]


def _relative_gap(a, b, scale):
    ref = max(abs(a), scale)
    return 0 if ref == 0 else abs(a - b) / ref


def matsubara_sum(
    d: SpectralDensity,
    beta: float,
    n_terms: int,
    *,
    alternating: bool,
    accelerate: bool = True,
    moment: int = 0,
) -> float:
    """(1/beta) sum_{|n| <= N} sign_n omega_n^(2 moment) S(i omega_n).

    With ``alternating`` the sign is (-1)^(n + moment), so the accelerated
    result is the (2 moment)-th tau-derivative of S at beta/2. Without it the
    plain sum converges to S(0) from below (moment must then be 0).

    Acceleration: Euler (repeated averaging) over the last 64 partial sums for
    alternating series, Richardson extrapolation in 1/N for the direct series.
    Raises NotConverged when two independent accelerated estimates differ by
    more than 1e-6 relative.
    """
    if n_terms < MIN_TERMS:
        raise DomainError(f"need at least {MIN_TERMS} Matsubara terms, got {n_terms}")
    if moment < 0 or (moment and not alternating):
        raise DomainError("moments > 0 are defined only for the alternating series")
    if d.is_empty:
        return 0.0
    with mpmath.workdps(_working_precision(d, beta, n_terms, moment)):
        sums = _partial_sums(d, beta, n_terms, alternating, moment)
        scale = mpmath.mpf(10) ** (-mpmath.mp.dps + 5) * max(abs(s) for s in sums)
        if not accelerate:
            value = sums[-1]
        elif alternating:
            value = _euler_average(sums[-EULER_WINDOW:])
            shifted = _euler_average(sums[-EULER_WINDOW - 1:-1])
            if _relative_gap(value, shifted, scale) > CONVERGENCE_RTOL:
                raise NotConverged(
                    f"Euler estimates {float(value):.12g} vs {float(shifted):.12g}"
                )
        else:
            levels = []
            n = n_terms
            while n >= 16 and len(levels) < 6:
                levels.append((mpmath.mpf(1) / n, sums[n]))
                n //= 2
            value = _richardson(levels)
            coarse = _richardson(levels[:-1]) if len(levels) > 2 else levels[0][1]
            if _relative_gap(value, coarse, scale) > CONVERGENCE_RTOL:
                raise NotConverged(
                    f"Richardson estimates {float(value):.12g} vs {float(coarse):.12g}"
                )
        return float(value / beta)


def alternating_sum(d: SpectralDensity, beta: float, n_terms: int, accelerate: bool = True) -> float:
    """(1/beta) sum_n (-1)^n S(i omega_n), which equals S(beta/2)."""
    return matsubara_sum(d, beta, n_terms, alternating=True, accelerate=accelerate)


def direct_sum(d: SpectralDensity, beta: float, n_terms: int, accelerate: bool = True) -> float:
    """(1/beta) sum_n S(i omega_n), which equals S(0)."""
    return matsubara_sum(d, beta, n_terms, alternating=False, accelerate=accelerate)
