"""Monte Carlo runs: PCA trajectories, a heat-bath Glauber baseline, batch-mean
error bars and sweep throughput.
"""

from __future__ import annotations

import json
import os
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from .dynamics import sweep
from .hamiltonian import KernelKind, ModelParams, check_kind, energy_single
from .lattice import EXTERNAL, Geometry

N_BATCHES = 32
TRACE_COLUMNS = ("sweep", "m", "e", "flips")


@dataclass
class Trace:
    """Per-sweep observables after burn-in, plus run metadata.

    ``e`` is the single-configuration energy per site, ``H(sigma) / N``.
    """

    m: np.ndarray
    e: np.ndarray
    flips: np.ndarray
    meta: dict = field(default_factory=dict)
    final: np.ndarray | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.m)

    def mean(self, name: str) -> tuple[float, float]:
        """Mean and batch-means standard error of one observable."""
        return batch_means(getattr(self, name))

    def write_csv(self, path) -> None:
        rows = np.column_stack([np.arange(len(self)), self.m, self.e, self.flips])
        with open(path, "w", newline="") as fh:
            fh.write(",".join(TRACE_COLUMNS) + "\n")
            for k, m, e, f in rows:
                fh.write(f"{int(k)},{m:.17g},{e:.17g},{int(f)}\n")

    def write_meta(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.meta, fh, indent=2, sort_keys=True)
            fh.write("\n")


def batch_means(x, n_batches: int = N_BATCHES) -> tuple[float, float]:
    """Mean and standard error from ``n_batches`` contiguous batch averages.

    Trailing samples that do not fill a batch are dropped from the error
    estimate but kept in the mean.
    """
    x = np.asarray(x, dtype=np.float64)
    size = len(x) // n_batches
    if size < 1:
        raise ValueError(f"need at least {n_batches} samples, got {len(x)}")
    batches = x[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(x.mean()), float(batches.std(ddof=1) / np.sqrt(n_batches))


def _build_version() -> str:
    here = os.path.dirname(os.path.abspath(__file__))
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=here, capture_output=True, text=True, timeout=5,
        )
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def initial_config(g: Geometry, init="plus", seed: int = 0) -> np.ndarray:
    if isinstance(init, str):
        if init == "plus":
            return np.ones(g.n_sites, dtype=np.int8)
        if init == "minus":
            return -np.ones(g.n_sites, dtype=np.int8)
        if init == "random":
            rng = np.random.default_rng([int(seed), 0xC0FFEE])
            return rng.choice(np.array([-1, 1], dtype=np.int8), size=g.n_sites)
        raise ValueError(f"unknown initial state {init!r}")
    s = np.asarray(init, dtype=np.int8).ravel()
    if s.shape != (g.n_sites,):
        raise ValueError("initial configuration has the wrong size")
    return s.copy()


def _default_burn_in(sweeps: int, burn_in: int | None) -> int:
    return int(0.2 * sweeps) if burn_in is None else int(burn_in)


def run_pca(
    g: Geometry,
    p: ModelParams,
    kind: KernelKind,
    sweeps: int,
    burn_in: int | None = None,
    seed: int = 0,
    init="plus",
    workers: int = 1,
) -> Trace:
    """Run the PCA and record ``sweeps`` post-burn-in sweeps.

    Sweep ``t`` (counting burn-in) uses random stream ``(seed, t)``.
    """
    kind = check_kind(g, kind)
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    burn_in = _default_burn_in(sweeps, burn_in)
    n = g.n_sites
    sigma = initial_config(g, init, seed)
    tau = np.empty_like(sigma)
    m = np.empty(sweeps)
    e = np.empty(sweeps)
    flips = np.empty(sweeps, dtype=np.int64)
    burn = np.zeros(3)
    t0 = time.perf_counter()
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for t in range(burn_in + sweeps):
            sweep(g, p, kind, sigma, seed, t, workers=workers, out=tau, executor=pool)
            nflip = int(np.count_nonzero(tau != sigma))
            sigma, tau = tau, sigma
            if t < burn_in:
                burn += (sigma.mean(), energy_single(g, p.J, sigma) / n, nflip)
                continue
            k = t - burn_in
            m[k] = sigma.mean()
            e[k] = energy_single(g, p.J, sigma) / n
            flips[k] = nflip
    finally:
        if pool is not None:
            pool.shutdown()
    meta = {
        "sampler": "pca",
        "kind": kind.value,
        "L": g.L,
        "bc": g.bc.value,
        "J": p.J,
        "delta": p.delta,
        "seed": int(seed),
        "sweeps": int(sweeps),
        "burn_in": burn_in,
        "burn_in_mean": dict(zip(("m", "e", "flips"), (burn / burn_in).tolist())) if burn_in else None,
        "workers": int(workers),
        "wall_time": time.perf_counter() - t0,
        "build": _build_version(),
    }
    return Trace(m, e, flips, meta, final=sigma.copy())


@numba.njit(cache=True)
def _glauber_sweep(spins, nbr, J, order, u):
    """Heat-bath updates in the given site order; ``spins[-1]`` is the +1 boundary."""
    n = order.shape[0]
    flips = 0
    for k in range(n):
        i = order[k]
        field = 0.0
        for d in range(4):
            field += spins[nbr[i, d]]
        # P(s_i = +1) = 1 / (1 + exp(-2 J field))
        new = 1 if u[k] * (1.0 + np.exp(-2.0 * J * field)) < 1.0 else -1
        if new != spins[i]:
            flips += 1
            spins[i] = new
    return flips


def run_glauber(
    g: Geometry,
    J: float,
    sweeps: int,
    burn_in: int | None = None,
    seed: int = 0,
    init="plus",
) -> Trace:
    """Single-site heat-bath dynamics, one fresh random site order per sweep.

    Samples the Gibbs measure of the geometry (external spins +1).
    """
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    burn_in = _default_burn_in(sweeps, burn_in)
    n = g.n_sites
    spins = np.ones(n + 1, dtype=np.int64)
    spins[:n] = initial_config(g, init, seed)
    nbr = np.where(g.nbr == EXTERNAL, n, g.nbr).astype(np.int64)
    rng = np.random.default_rng(seed)
    m = np.empty(sweeps)
    e = np.empty(sweeps)
    flips = np.empty(sweeps, dtype=np.int64)
    t0 = time.perf_counter()
    for t in range(burn_in + sweeps):
        order = rng.permutation(n)
        u = rng.random(n)
        nflip = _glauber_sweep(spins, nbr, float(J), order, u)
        if t >= burn_in:
            k = t - burn_in
            m[k] = spins[:n].mean()
            e[k] = energy_single(g, J, spins[:n]) / n
            flips[k] = nflip
    meta = {
        "sampler": "glauber",
        "L": g.L,
        "bc": g.bc.value,
        "J": J,
        "seed": int(seed),
        "sweeps": int(sweeps),
        "burn_in": burn_in,
        "wall_time": time.perf_counter() - t0,
        "build": _build_version(),
    }
    return Trace(m, e, flips, meta, final=spins[:n].astype(np.int8))


def glauber_update_prob(g: Geometry, J: float, sigma, i: int) -> float:
    """Heat-bath probability that site ``i`` becomes +1 given its neighbours."""
    s = np.append(np.asarray(sigma, dtype=np.float64), 1.0)
    field = s[g.nbr[i]].sum()
    return float(1.0 / (1.0 + np.exp(-2.0 * J * field)))


def bench_sweep(
    g: Geometry,
    p: ModelParams,
    kind: KernelKind,
    workers=(1, 4),
    sweeps: int = 5,
    seed: int = 0,
) -> dict:
    """Site updates per second for each worker count, plus a determinism check.

    Every worker count runs the same sweeps from the same start; the report
    records whether the final configurations are bit-identical.
    """
    kind = check_kind(g, kind)
    start = initial_config(g, "random", seed)
    report = {"L": g.L, "kind": kind.value, "sweeps": sweeps, "cpu_count": os.cpu_count(), "runs": []}
    finals = []
    for w in workers:
        sigma = start.copy()
        tau = np.empty_like(sigma)
        pool = ThreadPoolExecutor(max_workers=w) if w > 1 else None
        try:
            t0 = time.perf_counter()
            for t in range(sweeps):
                sweep(g, p, kind, sigma, seed, t, workers=w, out=tau, executor=pool)
                sigma, tau = tau, sigma
            dt = time.perf_counter() - t0
        finally:
            if pool is not None:
                pool.shutdown()
        finals.append(sigma.copy())
        report["runs"].append({"workers": int(w), "seconds": dt, "site_updates_per_s": g.n_sites * sweeps / dt})
    report["identical"] = all(np.array_equal(finals[0], f) for f in finals[1:])
    return report
