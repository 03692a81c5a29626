"""Exact diagonalization of the spinless t-V ring and Mori memory-function data.

Hamiltonian and current on a periodic ring of L sites with Np fermions:

    H = -t sum_j (c+_{j+1} c_j + h.c.) + V sum_j n_j n_{j+1}
    J =  i t sum_j (c+_{j+1} c_j - h.c.)

Fermion signs follow the Jordan-Wigner ordering of sites 0..L-1; a hop across
the boundary link (L-1 -> 0) passes the other Np - 1 particles and picks up
(-1)^(Np - 1), i.e. the sign is fixed by particle-number parity.

All operators are handled in the energy eigenbasis, where the Liouvillian
L A = [H, A] multiplies the dyad |m><n| by E_m - E_n. Boltzmann factors use
energies shifted by the ground-state energy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .bounds import bound_constants
from .errors import ChainTerminated, DimensionTooLarge, DomainError, ZeroCurrentNorm
from .matsubara import TauCorrelator

MAX_SITES = 12
DEGENERATE_TOL = 1e-10
RESIDUAL_TOL = 1e-10
ZERO_NORM_TOL = 1e-14
TERMINATION_TOL = 1e-12
MAX_LEVELS = 6
MAX_NESTED_ORDER = 6


def _basis(L, Np):
    states = []
    for occ in combinations(range(L), Np):
        s = 0
        for site in occ:
            s |= 1 << site
        states.append(s)
    states.sort()
    return states, {s: i for i, s in enumerate(states)}


def _hop(state, i, j):
    """Apply c+_i c_j; return (new_state, sign) or None."""
    if not state >> j & 1 or (i != j and state >> i & 1):
        return None
    lo, hi = min(i, j), max(i, j)
    between = state & (((1 << hi) - 1) ^ ((1 << (lo + 1)) - 1))
    sign = -1 if bin(between).count("1") % 2 else 1
    return state ^ (1 << j) ^ (1 << i), sign


def _hopping_matrix(L, states, index, i, j):
    """Dense matrix of c+_i c_j in the occupation basis."""
    op = np.zeros((len(states), len(states)))
    for col, s in enumerate(states):
        hopped = _hop(s, i, j)
        if hopped is not None:
            new, sign = hopped
            op[index[new], col] += sign
    return op


@dataclass(frozen=True)
class EDSystem:
    L: int
    t: float
    V: float
    Np: int
    energies: np.ndarray
    vectors: np.ndarray
    hamiltonian: np.ndarray
    current_site: np.ndarray
    current: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.energies.size

    def to_eigenbasis(self, op) -> np.ndarray:
        return self.vectors.conj().T @ op @ self.vectors

    def transition_energies(self) -> np.ndarray:
        """omega_mn = E_m - E_n."""
        return self.energies[:, None] - self.energies[None, :]

    def boltzmann(self, beta: float):
        """Shifted Boltzmann factors exp(-beta (E_m - E_0)) and their sum."""
        p = np.exp(-beta * (self.energies - self.energies[0]))
        return p, math.fsum(p.tolist())


def build_chain(L: int, t: float = 1.0, V: float = 0.0, Np: int | None = None) -> EDSystem:
    if L > MAX_SITES:
        raise DimensionTooLarge(f"{L} sites exceeds the limit of {MAX_SITES}")
    if L < 2:
        raise ValueError("a ring needs at least 2 sites")
    if Np is None:
        Np = L // 2
    if not 0 <= Np <= L:
        raise ValueError(f"particle number {Np} outside [0, {L}]")
    states, index = _basis(L, Np)
    dim = len(states)
    assert dim == math.comb(L, Np)

    H = np.zeros((dim, dim))
    forward = np.zeros((dim, dim))
    for j in range(L):
        forward += _hopping_matrix(L, states, index, (j + 1) % L, j)
    H -= t * (forward + forward.T)
    occ = np.array([[s >> j & 1 for j in range(L)] for s in states])
    H += np.diag(V * np.sum(occ * np.roll(occ, -1, axis=1), axis=1))
    J = 1j * t * (forward - forward.T)

    energies, vectors = np.linalg.eigh(H)
    residual = np.linalg.norm(H @ vectors - vectors * energies, axis=0)
    if dim and np.max(residual) > RESIDUAL_TOL:
        raise RuntimeError(f"eigensolver residual {np.max(residual):.3e} too large")
    sys = EDSystem(L, t, V, Np, energies, vectors, H, J, np.zeros(0))
    object.__setattr__(sys, "current", sys.to_eigenbasis(J))
    return sys


def km_weights(sys: EDSystem, beta: float) -> np.ndarray:
    """Matrix W_mn / (Z beta) of the Kubo-Mori inner product.

    W_mn = (exp(-beta E_n) - exp(-beta E_m)) / (E_m - E_n), and beta exp(-beta E_m)
    on (near-)degenerate pairs.
    """
    if beta <= 0:
        raise DomainError("beta must be positive")
    e = sys.energies - sys.energies[0]
    _, Z = sys.boltzmann(beta)
    gap = np.abs(e[:, None] - e[None, :])
    low = np.minimum(e[:, None], e[None, :])
    degenerate = gap < DEGENERATE_TOL
    safe = np.where(degenerate, 1.0, gap)
    w = np.exp(-beta * low) * np.where(degenerate, beta, -np.expm1(-beta * gap) / safe)
    return w / (Z * beta)


def kubo_mori_inner(A, B, sys: EDSystem, beta: float):
    """(A|B) for operators given in the energy eigenbasis.

    Returns a float when the imaginary part is negligible (always the case for
    Hermitian A and B), a complex number otherwise.
    """
    value = np.sum(np.conj(A) * B * km_weights(sys, beta))
    if abs(value.imag) <= 1e-12 * max(1.0, abs(value)):
        return float(value.real)
    return complex(value)


def liouvillian_moment(sys: EDSystem, beta: float, k: int) -> float:
    """(J|L^(2k)|J)."""
    if not 0 <= k <= MAX_LEVELS:
        raise DomainError(f"moment index must be in [0, {MAX_LEVELS}], got {k}")
    omega = sys.transition_energies()
    w = km_weights(sys, beta)
    return math.fsum((np.abs(sys.current) ** 2 * omega ** (2 * k) * w).ravel().tolist())


@dataclass(frozen=True)
class MoriChain:
    beta: float
    norm0: float
    b_sq: tuple

    @property
    def levels(self) -> int:
        return len(self.b_sq)


def mori_coefficients(sys: EDSystem, beta: float, K: int = 2) -> MoriChain:
    """Operator-space Lanczos recursion seeded by J with the Kubo-Mori product.

    f_{k+1} = L f_k - a_k f_k - b_k^2 f_{k-1},   b_{k+1}^2 = (f_{k+1}|f_{k+1}) / (f_k|f_k),

    followed by one full reorthogonalization pass against all earlier f_j.
    Raises ChainTerminated when some b_k^2 < 1e-12; the exception carries the
    coefficients computed so far.
    """
    if not 1 <= K <= MAX_LEVELS:
        raise DomainError(f"number of levels must be in [1, {MAX_LEVELS}], got {K}")
    w = km_weights(sys, beta)
    omega = sys.transition_energies()

    def inner(a, b):
        return float(np.real(np.sum(np.conj(a) * b * w)))

    f = [sys.current]
    norms = [inner(f[0], f[0])]
    if norms[0] <= ZERO_NORM_TOL:
        raise ZeroCurrentNorm(f"(J|J) = {norms[0]:.3e}")
    b_sq = []
    prev = np.zeros_like(f[0])
    for k in range(K):
        lf = omega * f[k]
        a = inner(f[k], lf) / norms[k]
        nxt = lf - a * f[k] - (b_sq[-1] if b_sq else 0.0) * prev
        for g, ng in zip(f, norms):
            nxt = nxt - (inner(g, nxt) / ng) * g
        norm = inner(nxt, nxt)
        b_sq.append(norm / norms[k])
        if b_sq[-1] < TERMINATION_TOL:
            raise ChainTerminated(k + 1, MoriChain(beta, norms[0], tuple(b_sq)))
        prev = f[k]
        f.append(nxt)
        norms.append(norm)
    return MoriChain(beta, norms[0], tuple(b_sq))


def continued_fraction(chain: MoriChain, z: complex) -> complex:
    """S(z) = (J|J) / (z - b_1^2 / (z - b_2^2 / ... z)), hard-truncated."""
    tail = complex(z)
    for b2 in reversed(chain.b_sq[1:]):
        tail = z - b2 / tail
    if chain.b_sq:
        tail = z - chain.b_sq[0] / tail
    return chain.norm0 / tail


def resolvent_sigma(chain: MoriChain, omega: float, eta: float) -> complex:
    """Regular part of the optical conductivity from the Mori resolvent.

    The retarded current response is chi(omega) = beta [(J|J) - z S(z)] with
    z = omega + i eta. Removing its static part (cancelled by the diamagnetic
    term) and dividing by i omega gives sigma(omega) = i beta S(z) as eta -> 0,
    whose real part -beta Im S(z) is a sum of non-negative Lorentzians.
    """
    if eta <= 0:
        raise DomainError("eta must be positive")
    return 1j * chain.beta * continued_fraction(chain, omega + 1j * eta)


def nested_correlator(sys: EDSystem, n: int, tau: float, beta: float) -> float:
    """Symmetrized Lehmann sum for <(L^n J)(tau) J>.

    (1/Z) sum_mn |J_mn|^2 |E_m - E_n|^n exp(-beta (E_m + E_n)/2) cosh[(beta/2 - tau)(E_m - E_n)].
    For even n this is exactly the n-th tau-derivative of <J(tau) J>; for odd n
    it is its even-in-frequency counterpart (the odd derivative itself vanishes
    at beta/2).
    """
    if not 0 <= n <= MAX_NESTED_ORDER:
        raise DomainError(f"nested order must be in [0, {MAX_NESTED_ORDER}], got {n}")
    if not 0.0 <= tau <= beta:
        raise DomainError(f"tau={tau} outside [0, beta={beta}]")
    e = sys.energies - sys.energies[0]
    _, Z = sys.boltzmann(beta)
    em, en = e[:, None], e[None, :]
    pair = 0.5 * (np.exp(-(beta - tau) * em - tau * en) + np.exp(-tau * em - (beta - tau) * en))
    omega = np.abs(em - en)
    terms = np.abs(sys.current) ** 2 * omega ** n * pair
    return math.fsum(terms.ravel().tolist()) / Z


def ed_correlator(sys: EDSystem, beta: float, n_tau: int) -> TauCorrelator:
    """<J(tau) J> on a uniform tau grid."""
    taus = np.linspace(0.0, beta, n_tau)
    return TauCorrelator(beta, np.array([nested_correlator(sys, 0, t, beta) for t in taus]))


@dataclass(frozen=True)
class B1Check:
    b1_sq: float
    midpoint_ratio: float
    holds: bool
    bound_ratio: float
    bound_margin: float
    within_bound: bool


def b1_bound_check(sys: EDSystem, beta: float) -> B1Check:
    """Compare b_1^2 with C_2(beta/2) / C_0(0) and that ratio with (4/beta^2) sup."""
    m0 = liouvillian_moment(sys, beta, 0)
    if m0 <= ZERO_NORM_TOL:
        raise ZeroCurrentNorm(f"(J|J) = {m0:.3e}")
    b1_sq = liouvillian_moment(sys, beta, 1) / m0
    c0 = nested_correlator(sys, 0, 0.0, beta)
    ratio = nested_correlator(sys, 2, beta / 2, beta) / c0
    bound = bound_constants(2).bound(beta)
    return B1Check(
        b1_sq=b1_sq,
        midpoint_ratio=ratio,
        holds=bool(b1_sq >= ratio - 1e-10),
        bound_ratio=ratio * beta ** 2 / 4.0,
        bound_margin=bound - ratio,
        within_bound=bool(ratio <= bound + 1e-10),
    )


def nested_bound_margin(sys: EDSystem, beta: float, n: int) -> float:
    """(2/beta)^n sup_x x^n/cosh x - C_n(beta/2) / C_0(0)."""
    ratio = nested_correlator(sys, n, beta / 2, beta) / nested_correlator(sys, 0, 0.0, beta)
    return bound_constants(n).bound(beta) - ratio


def mori_report(sys: EDSystem, beta: float, levels: int = 2) -> dict:
    """JSON-ready summary of the Mori chain and the b_1 / universal-bound checks."""
    terminated = None
    try:
        chain = mori_coefficients(sys, beta, levels)
    except ChainTerminated as exc:
        chain, terminated = exc.chain, exc.level
    check = b1_bound_check(sys, beta)
    return {
        "L": sys.L,
        "t": sys.t,
        "V": sys.V,
        "Np": sys.Np,
        "beta": beta,
        "norm0": chain.norm0,
        "b_sq": list(chain.b_sq),
        "terminated_at": terminated,
        "midpoint_ratio": check.midpoint_ratio,
        "bound_margin": check.bound_margin,
        "b1_bound_holds": check.holds,
        "within_universal_bound": check.within_bound,
    }
