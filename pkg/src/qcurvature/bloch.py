"""Two-band Bloch Hamiltonians H(k) = d(k) . sigma on the square-lattice BZ.

Three closed-form variants are supported:

* ``QWZ``        d = (sin kx, sin ky, m + cos kx + cos ky)
* ``FlatChern``  d = (delta/2) * d_QWZ / |d_QWZ|   (same eigenvectors, flat bands)
* ``TrivialFlat`` d = (0, 0, delta/2)

Energies are in units of the QWZ hopping; hbar = k_B = e = 1.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import GapClosure

GAP_TOL = 1e-9
FD_STEP = 1e-5

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = np.stack([SIGMA_X, SIGMA_Y, SIGMA_Z])

TWO_PI = 2.0 * np.pi


class Variant(str, enum.Enum):
    QWZ = "qwz"
    FLAT_CHERN = "flatchern"
    TRIVIAL_FLAT = "trivialflat"


@dataclass(frozen=True)
class KPoint:
    """Crystal momentum wrapped into [0, 2pi)^2."""

    kx: float
    ky: float

    def __post_init__(self):
        object.__setattr__(self, "kx", float(np.mod(self.kx, TWO_PI)))
        object.__setattr__(self, "ky", float(np.mod(self.ky, TWO_PI)))

    def __iter__(self):
        yield self.kx
        yield self.ky


def _as_k(k):
    if isinstance(k, KPoint):
        return k.kx, k.ky
    kx, ky = k
    return float(kx), float(ky)


@dataclass(frozen=True)
class BlochModel:
    variant: Variant
    m: float = 1.0
    delta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.variant is not Variant.QWZ and not self.delta > 0:
            raise ValueError("flat variants need delta > 0")
        if self.variant is Variant.TRIVIAL_FLAT:
            return
        # QWZ d-vector can only vanish at the four time-reversal momenta,
        # where d = (0, 0, m + cos kx + cos ky).
        for kx in (0.0, np.pi):
            for ky in (0.0, np.pi):
                dz = abs(self.m + np.cos(kx) + np.cos(ky))
                if dz < GAP_TOL:
                    raise GapClosure((kx, ky), dz)

    @classmethod
    def qwz(cls, m):
        return cls(Variant.QWZ, m=m)

    @classmethod
    def flat_chern(cls, m, delta=1.0):
        return cls(Variant.FLAT_CHERN, m=m, delta=delta)

    @classmethod
    def trivial_flat(cls, delta=1.0):
        return cls(Variant.TRIVIAL_FLAT, m=0.0, delta=delta)


def _qwz_d(m, kx, ky):
    return np.array([np.sin(kx), np.sin(ky), m + np.cos(kx) + np.cos(ky)])


def _qwz_dd(kx, ky):
    """Rows are d/dkx and d/dky of the QWZ d-vector."""
    return np.array(
        [
            [np.cos(kx), 0.0, -np.sin(kx)],
            [0.0, np.cos(ky), -np.sin(ky)],
        ]
    )


def _checked_norm(d, k):
    norm = float(np.linalg.norm(d))
    if norm < GAP_TOL:
        raise GapClosure(k, norm)
    return norm


def unit_d_and_derivatives(model: BlochModel, k):
    """Return d_hat(k) and the (2, 3) array of its momentum derivatives."""
    kx, ky = _as_k(k)
    if model.variant is Variant.TRIVIAL_FLAT:
        return np.array([0.0, 0.0, 1.0]), np.zeros((2, 3))
    d = _qwz_d(model.m, kx, ky)
    norm = _checked_norm(d, (kx, ky))
    dhat = d / norm
    dd = _qwz_dd(kx, ky)
    # d/dk (d/|d|) = (dd - dhat (dhat . dd)) / |d|
    ddhat = (dd - np.outer(dd @ dhat, dhat)) / norm
    return dhat, ddhat


def d_vector(model: BlochModel, k) -> np.ndarray:
    kx, ky = _as_k(k)
    if model.variant is Variant.QWZ:
        return _qwz_d(model.m, kx, ky)
    if model.variant is Variant.TRIVIAL_FLAT:
        return np.array([0.0, 0.0, 0.5 * model.delta])
    d = _qwz_d(model.m, kx, ky)
    return 0.5 * model.delta * d / _checked_norm(d, (kx, ky))


def hamiltonian(model: BlochModel, k) -> np.ndarray:
    return np.einsum("i,ijk->jk", d_vector(model, k), PAULI)


def bands(model: BlochModel, k):
    """Return (E_minus, E_plus, gap) with gap = 2|d(k)|.

    Flat variants return exactly +-delta/2 rather than a recomputed norm.
    """
    kx, ky = _as_k(k)
    if model.variant is Variant.QWZ:
        half = _checked_norm(_qwz_d(model.m, kx, ky), (kx, ky))
    else:
        if model.variant is Variant.FLAT_CHERN:
            _checked_norm(_qwz_d(model.m, kx, ky), (kx, ky))
        half = 0.5 * model.delta
    return -half, half, 2.0 * half


def d_derivatives(model: BlochModel, k) -> np.ndarray:
    """Analytic (2, 3) array of d/dk_i of the model's d-vector."""
    kx, ky = _as_k(k)
    if model.variant is Variant.QWZ:
        return _qwz_dd(kx, ky)
    if model.variant is Variant.TRIVIAL_FLAT:
        return np.zeros((2, 3))
    _, ddhat = unit_d_and_derivatives(model, (kx, ky))
    return 0.5 * model.delta * ddhat


def velocity(model: BlochModel, k, direction="x") -> np.ndarray:
    """dH/dk_direction as a 2x2 Hermitian matrix."""
    i = _direction_index(direction)
    return np.einsum("i,ijk->jk", d_derivatives(model, k)[i], PAULI)


def velocity_fd(model: BlochModel, k, direction="x", h=FD_STEP) -> np.ndarray:
    """Central finite-difference velocity, used to validate the analytic one."""
    kx, ky = _as_k(k)
    i = _direction_index(direction)
    step = np.array([h, 0.0]) if i == 0 else np.array([0.0, h])
    kp = np.array([kx, ky]) + step
    km = np.array([kx, ky]) - step
    return (hamiltonian(model, kp) - hamiltonian(model, km)) / (2.0 * h)


def _direction_index(direction):
    if direction in ("x", 0):
        return 0
    if direction in ("y", 1):
        return 1
    raise ValueError(f"direction must be 'x' or 'y', got {direction!r}")


def lower_band_state(model: BlochModel, k) -> np.ndarray:
    """Normalized lower-band eigenvector (arbitrary gauge)."""
    _, vecs = np.linalg.eigh(hamiltonian(model, k))
    return vecs[:, 0]
