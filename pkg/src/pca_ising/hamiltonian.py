"""Energies, local fields and flip weights for the Ising PCA kernels.

Spin configurations are int8/float arrays whose last axis runs over sites, so
every vectorised function accepts a single configuration ``(N,)`` or a batch
``(M, N)``. External sites (plus boundaries) always carry spin +1.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .lattice import BC, EXTERNAL, Direction, Geometry


class KernelKind(str, enum.Enum):
    REVERSIBLE_PLUS = "rev-plus"
    REVERSIBLE_PERIODIC = "rev-periodic"
    IRREVERSIBLE_PERIODIC = "irrev-periodic"

    @property
    def reversible(self) -> bool:
        return self is not KernelKind.IRREVERSIBLE_PERIODIC

    @property
    def bc(self) -> BC:
        return BC.PLUS if self is KernelKind.REVERSIBLE_PLUS else BC.PERIODIC


def kind_for(bc: BC | str, reversible: bool = True) -> KernelKind:
    bc = BC(bc)
    if not reversible:
        if bc is not BC.PERIODIC:
            raise ValueError("the irreversible kernel is only defined with periodic boundaries")
        return KernelKind.IRREVERSIBLE_PERIODIC
    return KernelKind.REVERSIBLE_PLUS if bc is BC.PLUS else KernelKind.REVERSIBLE_PERIODIC


def check_kind(g: Geometry, kind: KernelKind) -> KernelKind:
    kind = KernelKind(kind)
    if kind.bc is not g.bc:
        raise ValueError(f"kernel {kind.value} does not match {g.bc.value} geometry")
    return kind


@dataclass(frozen=True)
class ModelParams:
    """Coupling ``J`` and flip-suppression ``delta = exp(-2 q)``.

    ``delta`` is the stored parameter; ``delta = 0`` is accepted as the
    frozen-dynamics limit (``q = inf``).
    """

    J: float
    delta: float

    def __post_init__(self):
        if not self.J >= 0:
            raise ValueError(f"J must be >= 0, got {self.J}")
        if not 0.0 <= self.delta < 1.0:
            raise ValueError(f"delta must lie in [0, 1), got {self.delta}")

    @classmethod
    def from_q(cls, J: float, q: float) -> ModelParams:
        if not q > 0:
            raise ValueError(f"q must be > 0, got {q}")
        return cls(J, math.exp(-2.0 * q))

    @property
    def q(self) -> float:
        return math.inf if self.delta == 0 else -0.5 * math.log(self.delta)

    @property
    def log_delta(self) -> float:
        return -math.inf if self.delta == 0 else math.log(self.delta)


def _with_external(g: Geometry, sigma: np.ndarray) -> np.ndarray:
    """Append a +1 column so ``EXTERNAL`` (-1) indexes an up spin."""
    s = np.asarray(sigma)
    ones = np.ones(s.shape[:-1] + (1,), dtype=s.dtype)
    return np.concatenate([s, ones], axis=-1)


# ---------------------------------------------------------------------------
# single-configuration energy
# ---------------------------------------------------------------------------

def bond_products(g: Geometry, sigma) -> np.ndarray:
    """``sigma_i * sigma_j`` for every bond of the edge set (external = +1)."""
    s = _with_external(g, np.asarray(sigma, dtype=np.int64))
    return s[..., g.bonds[:, 0]] * s[..., g.bonds[:, 1]]


def energy_single(g: Geometry, J: float, sigma) -> np.ndarray | float:
    """``H(sigma) = -J * sum over bonds of sigma_i sigma_j``."""
    out = -J * bond_products(g, sigma).sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# local fields and flip weights
# ---------------------------------------------------------------------------

def local_fields(g: Geometry, J: float, kind: KernelKind, sigma) -> np.ndarray:
    """All local fields ``h_i(sigma)`` for the given kernel.

    Reversible kinds: ``(J/2) * sum of the four neighbour spins``, where the
    external neighbours of the plus box contribute ``J/2`` each (this is the
    in-box half sum plus the boundary term ``partial_i``). Irreversible kind:
    ``J * (sigma_down + sigma_left)``.
    """
    s = _with_external(g, np.asarray(sigma, dtype=np.float64))
    if KernelKind(kind) is KernelKind.IRREVERSIBLE_PERIODIC:
        return J * (s[..., g.nbr[:, Direction.DOWN]] + s[..., g.nbr[:, Direction.LEFT]])
    return 0.5 * J * s[..., g.nbr].sum(axis=-1)


def local_field(g: Geometry, J: float, kind: KernelKind, sigma, i: int) -> float:
    return float(local_fields(g, J, kind, sigma)[..., i])


def boundary_term(g: Geometry, J: float, kind: KernelKind, sigma) -> np.ndarray | float:
    """``G(sigma) = sum_i partial_i sigma_i`` (zero except for the plus box)."""
    if KernelKind(kind) is not KernelKind.REVERSIBLE_PLUS:
        return np.zeros(np.shape(sigma)[:-1]) if np.ndim(sigma) > 1 else 0.0
    out = 0.5 * J * (np.asarray(sigma, dtype=np.float64) * g.contacts).sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def log_phis(g: Geometry, J: float, kind: KernelKind, sigma) -> np.ndarray:
    """``log phi_i = -2 h_i(sigma) sigma_i`` for every site."""
    return -2.0 * local_fields(g, J, kind, sigma) * np.asarray(sigma, dtype=np.float64)


def phis(g: Geometry, J: float, kind: KernelKind, sigma) -> np.ndarray:
    return np.exp(log_phis(g, J, kind, sigma))


def phi(g: Geometry, J: float, kind: KernelKind, sigma, i: int) -> float:
    return float(phis(g, J, kind, sigma)[..., i])


def log_f_factor(g: Geometry, p: ModelParams, kind: KernelKind, sigma) -> np.ndarray | float:
    """``sum_i log(1 + delta * phi_i)``, safe for any J."""
    x = p.log_delta + log_phis(g, p.J, kind, sigma)
    out = np.logaddexp(0.0, x).sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def f_factor(g: Geometry, p: ModelParams, kind: KernelKind, sigma) -> np.ndarray | float:
    """``prod_i (1 + delta * phi_i)``.

    Raises:
        OverflowError: if the product leaves the float range; use
            :func:`log_f_factor` instead.
    """
    with np.errstate(over="ignore"):
        ph = phis(g, p.J, kind, sigma)
        out = np.prod(1.0 + p.delta * ph, axis=-1)
    if not np.all(np.isfinite(out)):
        raise OverflowError("f factor overflows; use log_f_factor")
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# pair Hamiltonians
# ---------------------------------------------------------------------------

def energy_pair(g: Geometry, p: ModelParams, kind: KernelKind, sigma, tau) -> float:
    """Pair Hamiltonian ``H(sigma, tau)`` evaluated term by term.

    This is the slow reference form; :func:`pair_energy_matrix` is the
    vectorised one used for enumeration.
    """
    kind = check_kind(g, kind)
    s = [int(x) for x in np.asarray(sigma).ravel()]
    t = [int(x) for x in np.asarray(tau).ravel()]
    J, q = p.J, p.q
    flips = sum(1 for a, b in zip(s, t) if a != b)

    if kind is KernelKind.IRREVERSIBLE_PERIODIC:
        total = 0.0
        for i in range(g.n_sites):
            up, right = g.nbr[i, Direction.UP], g.nbr[i, Direction.RIGHT]
            total -= J * s[i] * (t[up] + t[right])
        # -q sum sigma_i tau_i = -q (N - 2 flips), written to survive q = inf
        return total - q * g.n_sites + (2.0 * q * flips if flips else 0.0)

    total = 0.0
    for i in range(g.n_sites):
        for j in g.nbr[i]:
            if j != EXTERNAL:
                total -= 0.5 * J * s[i] * t[j]
    if kind is KernelKind.REVERSIBLE_PLUS:
        for i in range(g.n_sites):
            total -= 0.5 * J * g.contacts[i] * (s[i] + t[i])
    return total + (2.0 * q * flips if flips else 0.0)


def pair_energy_matrix(g: Geometry, p: ModelParams, kind: KernelKind, S, T) -> np.ndarray:
    """``H(S[a], T[b])`` for all rows of two configuration batches.

    Requires ``delta > 0``.
    """
    kind = check_kind(g, kind)
    if p.delta == 0:
        raise ValueError("pair energies need delta > 0 (finite q)")
    S = np.atleast_2d(np.asarray(S, dtype=np.float64))
    T = np.atleast_2d(np.asarray(T, dtype=np.float64))
    J, q, n = p.J, p.q, g.n_sites
    overlap = S @ T.T
    if kind is KernelKind.IRREVERSIBLE_PERIODIC:
        D = np.zeros((n, n))
        idx = np.arange(n)
        np.add.at(D, (idx, g.nbr[:, Direction.UP]), 1.0)
        np.add.at(D, (idx, g.nbr[:, Direction.RIGHT]), 1.0)
        return -J * (S @ D @ T.T) - q * overlap
    H = -0.5 * J * (S @ g.adjacency() @ T.T) + q * (n - overlap)
    if kind is KernelKind.REVERSIBLE_PLUS:
        c = g.contacts.astype(np.float64)
        H -= 0.5 * J * ((S @ c)[:, None] + (T @ c)[None, :])
    return H


def energy_pair_irreversible_right(g: Geometry, p: ModelParams, sigma, tau) -> float:
    """Second written form of the irreversible pair energy.

    ``-sum_i [J tau_i (sigma_down + sigma_left) + q sigma_i tau_i]``.
    """
    s = np.asarray(sigma, dtype=np.float64)
    t = np.asarray(tau, dtype=np.float64)
    h = local_fields(g, p.J, KernelKind.IRREVERSIBLE_PERIODIC, s)
    return float(-(h * t).sum() - p.q * (s * t).sum())


def decomposition_check(g: Geometry, p: ModelParams, kind: KernelKind, sigma, tau) -> float:
    """Residual of the field form of the pair Hamiltonian.

    Reversible kinds are compared with
    ``-sum_i (h_i + q sigma_i) tau_i - G(sigma) + q N``; the irreversible kind
    with its second written form.
    """
    kind = check_kind(g, kind)
    H = energy_pair(g, p, kind, sigma, tau)
    s = np.asarray(sigma, dtype=np.float64)
    t = np.asarray(tau, dtype=np.float64)
    if kind is KernelKind.IRREVERSIBLE_PERIODIC:
        return abs(H - energy_pair_irreversible_right(g, p, s, t))
    h = local_fields(g, p.J, kind, s)
    rhs = -((h + p.q * s) * t).sum() - boundary_term(g, p.J, kind, s) + p.q * g.n_sites
    return abs(H - rhs)
