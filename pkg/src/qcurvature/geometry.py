"""Quantum metric, Berry curvature and Chern number of the lower band.

The metric and curvature are evaluated from the unit d-vector,

    G_ij  = (1/4) d_i dhat . d_j dhat
    Omega = -(1/2) dhat . (d_x dhat x d_y dhat),

which is gauge invariant and needs no wavefunction derivatives. Brillouin-zone
sums use a uniform n x n mesh k = 2 pi (i, j) / n with weight (2 pi / n)^2.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .bloch import (
    GAP_TOL,
    TWO_PI,
    BlochModel,
    Variant,
    hamiltonian,
    unit_d_and_derivatives,
)
from .errors import GapClosure, NonIntegerChern

MIN_MESH = 16
CHERN_RESIDUAL_TOL = 1e-6
CSV_COLUMNS = ("kx", "ky", "gap", "Gxx", "Gxy", "Gyy", "Omega")


def quantum_metric(model: BlochModel, k):
    """Return (G_xx, G_xy, G_yy) of the lower band at k."""
    _, dd = unit_d_and_derivatives(model, k)
    g = 0.25 * dd @ dd.T
    return float(g[0, 0]), float(g[0, 1]), float(g[1, 1])


def berry_curvature(model: BlochModel, k) -> float:
    dhat, dd = unit_d_and_derivatives(model, k)
    return -0.5 * float(dhat @ np.cross(dd[0], dd[1]))


def mesh(n):
    """Row-major mesh: kx varies along axis 0, ky along axis 1."""
    ks = TWO_PI * np.arange(n) / n
    return np.meshgrid(ks, ks, indexing="ij")


def bz_sum(values, n) -> float:
    """Exactly rounded row-major BZ sum with the (2 pi / n)^2 cell weight."""
    flat = np.asarray(values, dtype=float).ravel(order="C")
    return math.fsum(flat.tolist()) * (TWO_PI / n) ** 2


@dataclass(frozen=True)
class BandGrid:
    model: BlochModel
    n: int
    kx: np.ndarray
    ky: np.ndarray
    gap: np.ndarray
    gxx: np.ndarray
    gxy: np.ndarray
    gyy: np.ndarray
    omega: np.ndarray

    @property
    def weight(self) -> float:
        return (TWO_PI / self.n) ** 2

    def sum(self, values) -> float:
        return bz_sum(values, self.n)


def _qwz_fields(m, kx, ky):
    d = np.stack([np.sin(kx), np.sin(ky), m + np.cos(kx) + np.cos(ky)], axis=-1)
    ddx = np.stack([np.cos(kx), np.zeros_like(kx), -np.sin(kx)], axis=-1)
    ddy = np.stack([np.zeros_like(ky), np.cos(ky), -np.sin(ky)], axis=-1)
    return d, ddx, ddy


def _check_gap(norm, kx, ky):
    idx = np.unravel_index(np.argmin(norm), norm.shape)
    if norm[idx] < GAP_TOL:
        raise GapClosure((kx[idx], ky[idx]), norm[idx])


def build_band_grid(model: BlochModel, n: int) -> BandGrid:
    if n < MIN_MESH:
        raise ValueError(f"mesh size must be >= {MIN_MESH}, got {n}")
    kx, ky = mesh(n)
    if model.variant is Variant.TRIVIAL_FLAT:
        zeros = np.zeros((n, n))
        gap = np.full((n, n), float(model.delta))
        return BandGrid(model, n, kx, ky, gap, zeros, zeros.copy(), zeros.copy(), zeros.copy())

    d, ddx, ddy = _qwz_fields(model.m, kx, ky)
    norm = np.linalg.norm(d, axis=-1)
    _check_gap(norm, kx, ky)
    dhat = d / norm[..., None]
    px = (ddx - dhat * np.sum(ddx * dhat, axis=-1, keepdims=True)) / norm[..., None]
    py = (ddy - dhat * np.sum(ddy * dhat, axis=-1, keepdims=True)) / norm[..., None]
    gxx = 0.25 * np.sum(px * px, axis=-1)
    gxy = 0.25 * np.sum(px * py, axis=-1)
    gyy = 0.25 * np.sum(py * py, axis=-1)
    omega = -0.5 * np.sum(dhat * np.cross(px, py), axis=-1)
    if model.variant is Variant.QWZ:
        gap = 2.0 * norm
    else:
        gap = np.full((n, n), float(model.delta))
    return BandGrid(model, n, kx, ky, gap, gxx, gxy, gyy, omega)


def _lower_states(model, n):
    kx, ky = mesh(n)
    hs = np.empty((n, n, 2, 2), dtype=complex)
    for i in range(n):
        for j in range(n):
            hs[i, j] = hamiltonian(model, (kx[i, j], ky[i, j]))
    _, vecs = np.linalg.eigh(hs)
    return vecs[..., :, 0]


def chern_float(model: BlochModel, n: int) -> float:
    """Raw Fukui-Hatsugai-Suzuki plaquette sum for the lower band.

    Sign convention: the result equals (1/2pi) * sum_k Omega(k) (2pi/n)^2 with
    Omega as defined in :func:`berry_curvature`, which gives +1 for QWZ(m=1).
    """
    if n < MIN_MESH:
        raise ValueError(f"mesh size must be >= {MIN_MESH}, got {n}")
    if model.variant is not Variant.TRIVIAL_FLAT:
        kx, ky = mesh(n)
        d, _, _ = _qwz_fields(model.m, kx, ky)
        _check_gap(np.linalg.norm(d, axis=-1), kx, ky)
    u = _lower_states(model, n)
    ux = np.roll(u, -1, axis=0)
    uy = np.roll(u, -1, axis=1)
    uxy = np.roll(ux, -1, axis=1)

    def link(a, b):
        return np.sum(a.conj() * b, axis=-1)

    loop = link(u, ux) * link(ux, uxy) * link(uxy, uy) * link(uy, u)
    flux = np.angle(loop)
    return math.fsum(flux.ravel().tolist()) / TWO_PI


def chern_number(model: BlochModel, n: int) -> int:
    value = chern_float(model, n)
    c = round(value)
    residual = abs(value - c)
    if residual > CHERN_RESIDUAL_TOL:
        raise NonIntegerChern(value, residual)
    return int(c)


def write_band_grid_csv(grid: BandGrid, fh) -> None:
    """Write one row per mesh point in row-major order, 12 significant digits."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    cols = [grid.kx, grid.ky, grid.gap, grid.gxx, grid.gxy, grid.gyy, grid.omega]
    flat = [np.asarray(c).ravel(order="C") for c in cols]
    for row in zip(*flat):
        writer.writerow([f"{v:.12g}" for v in row])
