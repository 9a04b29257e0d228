"""Parallel sampler against the heat-bath baseline on a 64x64 plus box.

Runs both samplers at one temperature above and one below the transition
and prints batch-mean estimates of magnetisation and energy per site.
Takes about a minute.
"""

from __future__ import annotations

import math

from pca_ising import KernelKind, ModelParams, build_geometry, run_glauber, run_pca

g = build_geometry(64, "plus")
kind = KernelKind.REVERSIBLE_PLUS
for J, init in ((0.2, "random"), (0.6, "plus")):
    a = run_pca(g, ModelParams(J, 1e-3), kind, 64_000, burn_in=8000, seed=1, init=init)
    b = run_glauber(g, J, 8000, burn_in=1000, seed=1, init=init)
    print(f"J={J}  (parallel {a.meta['wall_time']:.1f} s, heat bath {b.meta['wall_time']:.1f} s)")
    for name in ("m", "e"):
        (ma, ea), (mb, eb) = a.mean(name), b.mean(name)
        z = (ma - mb) / math.hypot(ea, eb)
        print(f"  {name}: parallel {ma:+.5f} +- {ea:.5f}   heat bath {mb:+.5f} +- {eb:.5f}   z = {z:+.2f}")
    print(f"  parallel flips per site per sweep: {a.flips.mean() / g.n_sites:.2e}")
