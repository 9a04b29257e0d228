"""PCA transition kernels: local update probabilities, full-row evaluation,
per-configuration normalisers, parallel sweeps and balance checks.

Every site is updated simultaneously from a frozen copy of the current
configuration. Random draws come from a counter-based Philox stream keyed by
``(seed, sweep, site)``, so a sweep is bit-identical whatever the number of
workers used to compute it.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.special import expit, logsumexp

from .hamiltonian import (
    KernelKind,
    ModelParams,
    check_kind,
    energy_single,
    local_fields,
    log_f_factor,
    pair_energy_matrix,
)
from .lattice import Direction, Geometry, all_configs

MAX_KERNEL_SITES = 9  # materialised 2^N x 2^N kernels stop at L = 3

_PCA_STREAM = 0x5CA


# ---------------------------------------------------------------------------
# local rule
# ---------------------------------------------------------------------------

def effective_fields(g: Geometry, p: ModelParams, kind: KernelKind, sigma) -> np.ndarray:
    """``h_i(sigma) + q sigma_i``, the field felt by ``tau_i``."""
    s = np.asarray(sigma, dtype=np.float64)
    return local_fields(g, p.J, kind, s) + p.q * s


def flip_probabilities(g: Geometry, p: ModelParams, kind: KernelKind, sigma) -> np.ndarray:
    """``P(tau_i = -sigma_i | sigma)`` for every site.

    Equal to ``delta * phi_i / (1 + delta * phi_i)``, evaluated as a logistic
    in log space so that it is exact at ``delta = 0`` and safe for large J.
    """
    s = np.asarray(sigma, dtype=np.float64)
    return expit(p.log_delta - 2.0 * local_fields(g, p.J, kind, s) * s)


def local_update_prob(g: Geometry, p: ModelParams, kind: KernelKind, sigma, i: int, s: int) -> float:
    """``P(tau_i = s | sigma) = 1 / (1 + exp(-2 x s))`` with ``x = h_i + q sigma_i``."""
    if s not in (-1, 1):
        raise ValueError("spin value must be -1 or +1")
    x = effective_fields(g, p, kind, sigma)[i]
    return float(expit(2.0 * x * s))


def local_update_prob_cosh(g: Geometry, p: ModelParams, kind: KernelKind, sigma, i: int, s: int) -> float:
    """Same probability written as ``exp(x s) / (2 cosh x)``; overflows for large x."""
    x = effective_fields(g, p, kind, sigma)[i]
    return float(math.exp(x * s) / (2.0 * math.cosh(x)))


def expected_flips(g: Geometry, p: ModelParams, kind: KernelKind, sigma) -> float:
    return float(flip_probabilities(g, p, kind, sigma).sum())


# ---------------------------------------------------------------------------
# kernel rows
# ---------------------------------------------------------------------------

def log_transition_block(g: Geometry, p: ModelParams, kind: KernelKind, S, T) -> np.ndarray:
    """Product-form ``log P(S[a], T[b])`` for two configuration batches."""
    kind = check_kind(g, kind)
    S = np.atleast_2d(S)
    T = np.atleast_2d(np.asarray(T, dtype=np.float64))
    x = effective_fields(g, p, kind, S)
    # log P(tau_i | sigma) = -log(1 + exp(-2 x tau_i))
    return -np.logaddexp(0.0, -2.0 * x[:, None, :] * T[None, :, :]).sum(axis=-1)


def transition_prob(g: Geometry, p: ModelParams, kind: KernelKind, sigma, tau, form: str = "product") -> float:
    """``P(sigma, tau)``.

    ``form="product"`` multiplies the per-site probabilities; ``form="boltzmann"``
    evaluates ``exp(-H(sigma, tau)) / Z_sigma`` with the closed-form ``Z_sigma``.
    """
    if form == "product":
        return float(np.exp(log_transition_block(g, p, kind, sigma, tau))[0, 0])
    if form == "boltzmann":
        H = pair_energy_matrix(g, p, kind, sigma, tau)[0, 0]
        return float(np.exp(-H - log_z_sigma(g, p, kind, sigma)))
    raise ValueError(f"unknown form {form!r}")


def log_z_sigma(g: Geometry, p: ModelParams, kind: KernelKind, sigma) -> np.ndarray | float:
    """Closed form of ``log sum_tau exp(-H(sigma, tau))``.

    Reversible kinds: ``-H(sigma) + log f(sigma)``. Irreversible kind: the same
    plus ``q N``, since its pair energy on the diagonal sits ``q N`` below the
    single-configuration energy. At ``delta = 0`` the irreversible value is
    infinite.
    """
    kind = check_kind(g, kind)
    out = -energy_single(g, p.J, sigma) + log_f_factor(g, p, kind, sigma)
    if kind is KernelKind.IRREVERSIBLE_PERIODIC:
        out = out + p.q * g.n_sites
    return out


def z_sigma(g: Geometry, p: ModelParams, kind: KernelKind, sigma) -> np.ndarray | float:
    with np.errstate(over="ignore"):
        out = np.exp(log_z_sigma(g, p, kind, sigma))
    if not np.all(np.isfinite(out)):
        raise OverflowError("Z_sigma overflows; use log_z_sigma")
    return float(out) if np.ndim(out) == 0 else out


def log_z_sigma_bruteforce(g: Geometry, p: ModelParams, kind: KernelKind, sigma) -> np.ndarray:
    """``log sum_tau exp(-H(sigma, tau))`` by enumerating every ``tau``."""
    T = all_configs(g.n_sites)
    return logsumexp(-pair_energy_matrix(g, p, kind, sigma, T), axis=1)


def _require_small(g: Geometry, limit: int = MAX_KERNEL_SITES):
    if g.n_sites > limit:
        raise ValueError(f"lattice too large for enumeration: {g.n_sites} sites > {limit}")


def transition_matrix(g: Geometry, p: ModelParams, kind: KernelKind, form: str = "product") -> np.ndarray:
    """Materialised ``2^N x 2^N`` kernel in :func:`all_configs` order (L <= 3)."""
    _require_small(g)
    S = all_configs(g.n_sites)
    if form == "product":
        return np.exp(log_transition_block(g, p, kind, S, S))
    if form == "boltzmann":
        logw = -pair_energy_matrix(g, p, kind, S, S)
        return np.exp(logw - logsumexp(logw, axis=1, keepdims=True))
    raise ValueError(f"unknown form {form!r}")


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def site_uniforms(seed: int, sweep: int, start: int, stop: int) -> np.ndarray:
    """Uniforms for sites ``start..stop-1`` of a given sweep.

    A pure function of ``(seed, sweep, site)``: Philox keyed by the seed, with
    the sweep number in the second counter word. Each counter step yields four
    draws, so the stream is entered at ``start // 4`` and the remainder
    discarded.
    """
    bg = np.random.Philox(key=[int(seed), _PCA_STREAM], counter=[start // 4, int(sweep), 0, 0])
    rng = np.random.Generator(bg)
    if start % 4:
        rng.random(start % 4)
    return rng.random(stop - start)


def _field_slice(g: Geometry, J: float, kind: KernelKind, s_ext: np.ndarray, a: int, b: int) -> np.ndarray:
    nb = g.nbr[a:b]
    if kind is KernelKind.IRREVERSIBLE_PERIODIC:
        return J * (s_ext[nb[:, Direction.DOWN]] + s_ext[nb[:, Direction.LEFT]])
    return 0.5 * J * s_ext[nb].sum(axis=1)


def _sweep_chunk(g, p, kind, s_ext, out, seed, sweep, a, b):
    s = s_ext[a:b]
    x = p.log_delta - 2.0 * _field_slice(g, p.J, kind, s_ext, a, b) * s
    flip = site_uniforms(seed, sweep, a, b) < expit(x)
    out[a:b] = np.where(flip, -s, s)


def sweep(
    g: Geometry,
    p: ModelParams,
    kind: KernelKind,
    sigma,
    seed: int,
    sweep_index: int = 0,
    workers: int = 1,
    out: np.ndarray | None = None,
    executor: ThreadPoolExecutor | None = None,
) -> np.ndarray:
    """One parallel PCA step from ``sigma``.

    Every ``tau_i`` is drawn from the local rule given the frozen input. The
    result depends only on ``(seed, sweep_index)`` and ``sigma``, never on
    ``workers``.
    """
    kind = check_kind(g, kind)
    sigma = np.asarray(sigma, dtype=np.int8)
    n = g.n_sites
    s_ext = np.empty(n + 1, dtype=np.float64)
    s_ext[:n] = sigma
    s_ext[n] = 1.0  # EXTERNAL == -1 picks this slot
    res = np.empty(n, dtype=np.float64)

    chunks = [(0, n)]
    if workers > 1:
        bounds = np.linspace(0, n, int(workers) + 1).astype(int)
        chunks = [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    if len(chunks) == 1:
        _sweep_chunk(g, p, kind, s_ext, res, seed, sweep_index, 0, n)
    else:
        pool = executor or ThreadPoolExecutor(max_workers=len(chunks))
        try:
            list(pool.map(lambda ab: _sweep_chunk(g, p, kind, s_ext, res, seed, sweep_index, *ab), chunks))
        finally:
            if executor is None:
                pool.shutdown()
    if out is None:
        return res.astype(np.int8)
    out[:] = res
    return out


# ---------------------------------------------------------------------------
# balance and stationarity checks
# ---------------------------------------------------------------------------

def log_stationary_weights(g: Geometry, p: ModelParams, kind: KernelKind) -> np.ndarray:
    """Unnormalised ``log Z_sigma`` over all configurations.

    The configuration-independent ``q N`` of the irreversible kernel is
    dropped so the weights stay finite at ``delta = 0``.
    """
    S = all_configs(g.n_sites)
    return np.asarray(-energy_single(g, p.J, S) + log_f_factor(g, p, check_kind(g, kind), S), dtype=np.float64)


def _stationary(g, p, kind):
    lw = log_stationary_weights(g, p, kind)
    return np.exp(lw - logsumexp(lw))


def _log_kernel_columns(g, p, kind, S_all, T, chunk=4096):
    """``log P(S_all[a], T[b])`` computed in row chunks."""
    return np.concatenate(
        [log_transition_block(g, p, kind, S_all[a : a + chunk], T) for a in range(0, len(S_all), chunk)]
    )


def detailed_balance_residual(g: Geometry, p: ModelParams, kind: KernelKind, subset=None):
    """``max |pi(s) P(s,t) - pi(t) P(t,s)|`` over pairs.

    All pairs for L <= 3. ``subset`` (configuration indices) restricts ``s``
    to those rows while ``t`` still ranges over everything, which keeps L = 4
    affordable.

    Returns:
        ``(residual, (s_index, t_index))`` with the maximising pair.
    """
    if subset is None:
        _require_small(g)
        pi = _stationary(g, p, kind)
        flow = pi[:, None] * transition_matrix(g, p, kind)
        diff = np.abs(flow - flow.T)
        k = int(np.argmax(diff))
        return float(diff.flat[k]), divmod(k, diff.shape[1])
    S = all_configs(g.n_sites)
    subset = np.asarray(subset)
    pi = _stationary(g, p, kind)
    fwd = pi[subset, None] * np.exp(log_transition_block(g, p, kind, S[subset], S))
    back = (pi[:, None] * np.exp(_log_kernel_columns(g, p, kind, S, S[subset]))).T
    diff = np.abs(fwd - back)
    a, b = np.unravel_index(int(np.argmax(diff)), diff.shape)
    return float(diff[a, b]), (int(subset[a]), int(b))


def stationarity_residual(g: Geometry, p: ModelParams, kind: KernelKind, subset=None) -> float:
    """``max |pi P - pi|`` with ``pi`` from the closed-form normalisers.

    ``subset`` limits the check to those target configurations.
    """
    if subset is None:
        _require_small(g)
        pi = _stationary(g, p, kind)
        return float(np.max(np.abs(pi @ transition_matrix(g, p, kind) - pi)))
    S = all_configs(g.n_sites)
    subset = np.asarray(subset)
    pi = _stationary(g, p, kind)
    flow_in = pi @ np.exp(_log_kernel_columns(g, p, kind, S, S[subset]))
    return float(np.max(np.abs(flow_in - pi[subset])))


def dynamical_balance_residual(g: Geometry, p: ModelParams, sigma=None) -> np.ndarray | float:
    """``|sum_t exp(-H(s,t)) - sum_t exp(-H(t,s))| / Z_s`` for the irreversible kernel.

    Enumerates ``tau`` when ``L <= 3``. For larger boxes both sums are
    evaluated in product form, ``prod_i 2 cosh(J (s_down + s_left) + q s_i)``
    against ``prod_i 2 cosh(J (s_up + s_right) + q s_i)``. ``sigma=None`` checks
    every configuration.
    """
    kind = KernelKind.IRREVERSIBLE_PERIODIC
    check_kind(g, kind)
    S = all_configs(g.n_sites) if sigma is None else np.atleast_2d(sigma)
    if g.n_sites <= MAX_KERNEL_SITES:
        H = pair_energy_matrix(g, p, kind, S, all_configs(g.n_sites))
        rows = logsumexp(-H, axis=1)
        cols = logsumexp(-pair_energy_matrix(g, p, kind, all_configs(g.n_sites), S), axis=0)
    else:
        s = np.asarray(S, dtype=np.float64)
        back = p.J * (s[:, g.nbr[:, Direction.DOWN]] + s[:, g.nbr[:, Direction.LEFT]])
        fwd = p.J * (s[:, g.nbr[:, Direction.UP]] + s[:, g.nbr[:, Direction.RIGHT]])
        rows = _log_2cosh(back + p.q * s).sum(axis=1)
        cols = _log_2cosh(fwd + p.q * s).sum(axis=1)
    out = np.abs(np.expm1(cols - rows))
    return float(out[0]) if sigma is not None and np.ndim(sigma) == 1 else out


def _log_2cosh(x):
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax))
