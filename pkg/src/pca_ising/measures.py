"""Exact Gibbs and PCA stationary measures on small boxes, and the quantities
that compare them: total variation, the normalised variance of the flip
factor, and its first-order expansion in delta.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .dynamics import log_z_sigma_bruteforce
from .hamiltonian import KernelKind, ModelParams, check_kind, energy_single, log_f_factor, phis
from .lattice import Geometry, all_configs

MAX_TABLE_SITES = 16  # L = 4
MAX_BRUTEFORCE_SITES = 9

CSV_COLUMNS = ("L", "bc", "kind", "J", "delta", "tv", "sqrt_delta", "c1", "residual_first_order")


@dataclass(frozen=True, eq=False)
class MeasureTable:
    """Probabilities over configurations in :func:`~pca_ising.lattice.all_configs` order.

    ``log_weights`` are the unnormalised log weights the table was built from.
    """

    probs: np.ndarray
    log_weights: np.ndarray

    @classmethod
    def from_log_weights(cls, log_weights) -> MeasureTable:
        lw = np.asarray(log_weights, dtype=np.float64)
        probs = np.exp(lw - logsumexp(lw))
        probs.setflags(write=False)
        lw.setflags(write=False)
        return cls(probs, lw)

    def __len__(self):
        return len(self.probs)

    def expect(self, values) -> float:
        return float(self.probs @ np.asarray(values, dtype=np.float64))


def _configs(g: Geometry, limit: int = MAX_TABLE_SITES) -> np.ndarray:
    if g.n_sites > limit:
        raise ValueError(f"state space too large: 2**{g.n_sites} configurations")
    return all_configs(g.n_sites)


def gibbs_measure(g: Geometry, J: float) -> MeasureTable:
    """``pi_G(sigma) ~ exp(-H(sigma))`` for L <= 4."""
    return MeasureTable.from_log_weights(-energy_single(g, J, _configs(g)))


def pca_measure(g: Geometry, p: ModelParams, kind: KernelKind) -> MeasureTable:
    """Stationary measure ``Z_sigma / sum Z_sigma`` from the closed-form normaliser.

    Constant factors of ``Z_sigma`` cancel, so ``delta = 0`` gives the Gibbs
    measure for every kind.
    """
    check_kind(g, kind)
    S = _configs(g)
    return MeasureTable.from_log_weights(-energy_single(g, p.J, S) + log_f_factor(g, p, kind, S))


def tv_distance(a: MeasureTable | np.ndarray, b: MeasureTable | np.ndarray) -> float:
    pa = a.probs if isinstance(a, MeasureTable) else np.asarray(a)
    pb = b.probs if isinstance(b, MeasureTable) else np.asarray(b)
    if pa.shape != pb.shape:
        raise ValueError(f"dimension mismatch: {pa.shape} vs {pb.shape}")
    return float(0.5 * np.abs(pa - pb).sum())


def factorization_residual(g: Geometry, p: ModelParams, kind: KernelKind, sigmas=None) -> float:
    """Max relative gap between the enumerated ``sum_tau exp(-H(sigma, tau))``
    and the product ``w_G(sigma) f(sigma)`` (times ``exp(q N)`` for the
    irreversible kernel).

    ``sigmas`` restricts the check to a subset of configurations; by default
    every configuration is used and the box must have at most 9 sites.
    """
    kind = check_kind(g, kind)
    if sigmas is None:
        S = _configs(g, MAX_BRUTEFORCE_SITES)
    else:
        S = np.atleast_2d(sigmas)
        _configs(g)
    if p.delta == 0:
        # frozen kernel: only tau = sigma survives; the sum collapses to w_G
        brute = -energy_single(g, p.J, S)
    else:
        brute = log_z_sigma_bruteforce(g, p, kind, S)
    closed = -energy_single(g, p.J, S) + log_f_factor(g, p, kind, S)
    if kind is KernelKind.IRREVERSIBLE_PERIODIC and p.delta > 0:
        closed = closed + p.q * g.n_sites
    return float(np.max(np.abs(np.expm1(brute - closed))))


def f_moment(g: Geometry, p: ModelParams, kind: KernelKind, k: int = 1, gibbs: MeasureTable | None = None) -> float:
    """``pi_G(f^k)``."""
    check_kind(g, kind)
    gibbs = gibbs or gibbs_measure(g, p.J)
    lf = log_f_factor(g, p, kind, _configs(g))
    return float(np.exp(logsumexp(k * lf, b=gibbs.probs)))


def delta_functional(g: Geometry, p: ModelParams, kind: KernelKind) -> float:
    """``pi_G(f^2) / pi_G(f)^2 - 1``, computed as a centred variance ratio."""
    check_kind(g, kind)
    gibbs = gibbs_measure(g, p.J)
    lf = log_f_factor(g, p, kind, _configs(g))
    shift = lf.max()
    f = np.exp(lf - shift)
    # divide by the same dot product so a constant f gives exactly zero
    mean = (gibbs.probs @ f) / (gibbs.probs @ np.ones_like(f))
    return float(gibbs.probs @ (f - mean) ** 2 / mean**2)


def first_order_coefficient(g: Geometry, J: float, kind: KernelKind) -> float:
    """``c1 = sum_i pi_G(phi_i)``, the delta-linear coefficient of ``pi_G(f)``."""
    check_kind(g, kind)
    gibbs = gibbs_measure(g, J)
    return gibbs.expect(phis(g, J, kind, _configs(g)).sum(axis=1))


def first_order_residual(g: Geometry, J: float, delta: float, kind: KernelKind, k: int = 1, c1: float | None = None) -> float:
    """``|pi_G(f^k) - 1 - k delta c1|``."""
    if c1 is None:
        c1 = first_order_coefficient(g, J, kind)
    gibbs = gibbs_measure(g, J)
    # pi_G(f^k) - 1 = pi_G(expm1(k log f)) avoids cancelling against 1
    excess = gibbs.expect(np.expm1(k * log_f_factor(g, ModelParams(J, delta), kind, _configs(g))))
    return abs(excess - k * delta * c1)


def first_order_check(g: Geometry, J: float, delta: float, kind: KernelKind, k: int = 1) -> dict:
    """First-order residual at ``delta`` and ``delta / 2``.

    The halving ratio should approach 4 for a residual of order delta^2;
    ``C`` is the Richardson estimate of the second-order coefficient.
    """
    c1 = first_order_coefficient(g, J, kind)
    r1 = first_order_residual(g, J, delta, kind, k, c1)
    r2 = first_order_residual(g, J, delta / 2, kind, k, c1)
    return {
        "c1": c1,
        "residual": r1,
        "residual_half": r2,
        "ratio": r1 / r2 if r2 > 0 else float("inf"),
        "C": r1 / delta**2,
    }


def loglog_slope(xs, ys) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def delta_grid(lo: float, hi: float, per_decade: int = 5) -> np.ndarray:
    """Logarithmic grid from ``lo`` to ``hi`` inclusive."""
    n = int(round(np.log10(hi / lo) * per_decade)) + 1
    return np.logspace(np.log10(lo), np.log10(hi), n)


def comparison_row(g: Geometry, p: ModelParams, kind: KernelKind) -> dict:
    """One row of the exact comparison table (``CSV_COLUMNS``)."""
    gibbs = gibbs_measure(g, p.J)
    tv = tv_distance(pca_measure(g, p, kind), gibbs)
    c1 = first_order_coefficient(g, p.J, kind)
    return {
        "L": g.L,
        "bc": g.bc.value,
        "kind": KernelKind(kind).value,
        "J": p.J,
        "delta": p.delta,
        "tv": tv,
        "sqrt_delta": float(np.sqrt(delta_functional(g, p, kind))),
        "c1": c1,
        "residual_first_order": first_order_residual(g, p.J, p.delta, kind, 1, c1),
    }
