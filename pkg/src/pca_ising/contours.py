"""Peierls contours, their vertex classes, polymer decompositions and the
Kotecky-Preiss convergence check for the contour gas.

A contour is a set of dual segments, stored as bond indices of the geometry's
edge set: segment ``e`` crosses bond ``g.bonds[e]``.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import logsumexp

from .hamiltonian import KernelKind, bond_products, energy_single, log_f_factor
from .lattice import BC, EXTERNAL, Direction, Geometry, all_configs, dual_edge

# 4 e 3^{3/2}: the lower bound on e^{2J} in the sufficient window
RADIUS_CONSTANT = 4.0 * math.e * 3.0**1.5


class Connectivity(str, enum.Enum):
    P_CONNECTED = "p"
    STANDARD = "standard"


def connectivity_for(kind: KernelKind) -> Connectivity:
    if KernelKind(kind) is KernelKind.IRREVERSIBLE_PERIODIC:
        return Connectivity.STANDARD
    return Connectivity.P_CONNECTED


# ---------------------------------------------------------------------------
# contour sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ContourSet:
    """A set of dual segments on a fixed geometry."""

    geometry: Geometry
    edges: frozenset[int]

    def __len__(self):
        return len(self.edges)

    def __eq__(self, other):
        return (
            isinstance(other, ContourSet)
            and other.geometry is self.geometry
            and other.edges == self.edges
        )

    def __hash__(self):
        return hash(self.edges)

    @cached_property
    def _idx(self) -> np.ndarray:
        return np.fromiter(sorted(self.edges), dtype=np.int64, count=len(self.edges))

    def segments(self):
        return [dual_edge(self.geometry, int(e)) for e in self._idx]

    def dual_degrees(self) -> np.ndarray:
        deg = np.zeros(self.geometry.n_dual_vertices, dtype=np.int64)
        np.add.at(deg, self.geometry.dual_ends[self._idx].ravel(), 1)
        return deg

    def is_even(self) -> bool:
        return bool(np.all(self.dual_degrees() % 2 == 0))

    def site_counts(self, kind: KernelKind = KernelKind.REVERSIBLE_PLUS) -> np.ndarray:
        """Per-site number of crossed bonds that enter the site's flip weight.

        Reversible kinds count all four bonds of the site. The irreversible
        kind counts only the bonds to the down and left neighbours.
        """
        g = self.geometry
        if KernelKind(kind) is KernelKind.IRREVERSIBLE_PERIODIC:
            mask = np.zeros(g.n_bonds, dtype=bool)
            mask[self._idx] = True
            down, left = _down_left_bonds(g)
            return mask[down].astype(np.int64) + mask[left]
        bonds = g.bonds[self._idx]
        counts = np.zeros(g.n_sites, dtype=np.int64)
        np.add.at(counts, bonds[:, 0], 1)
        internal = bonds[:, 1] != EXTERNAL
        np.add.at(counts, bonds[internal, 1], 1)
        return counts

    def vertex_classes(self, kind: KernelKind = KernelKind.REVERSIBLE_PLUS) -> tuple[int, ...]:
        """``(|l_1|, ..., |l_4|)``: sites of the box with exactly s crossed bonds.

        The irreversible kind only has classes 1 and 2; the tuple is then
        ``(|l_1|, |l_2|)``.
        """
        counts = np.bincount(self.site_counts(kind), minlength=5)
        top = 2 if KernelKind(kind) is KernelKind.IRREVERSIBLE_PERIODIC else 4
        return tuple(int(c) for c in counts[1 : top + 1])

    def union(self, other: ContourSet) -> ContourSet:
        return ContourSet(self.geometry, self.edges | other.edges)


def _down_left_bonds(g: Geometry):
    table = getattr(g, "_down_left", None)
    if table is None:
        # bonds are listed site by site as (RIGHT, DOWN) pairs for the first 2N
        n = g.n_sites
        down = 2 * np.arange(n) + 1
        left = 2 * g.nbr[:, Direction.LEFT]
        assert np.array_equal(g.bonds[down, 1], g.nbr[:, Direction.DOWN])
        assert np.array_equal(g.bonds[left, 1], np.arange(n))
        table = (down, left)
        object.__setattr__(g, "_down_left", table)
    return table


def extract_contour(g: Geometry, sigma) -> ContourSet:
    """Dual segments of all bonds with disagreeing endpoints (external = +1)."""
    disagree = np.flatnonzero(bond_products(g, sigma) < 0)
    return ContourSet(g, frozenset(int(e) for e in disagree))


def energy_contour_identity(g: Geometry, sigma) -> int:
    """Integer residual of ``sum_bonds sigma_i sigma_j = |B| - 2 |Gamma|``.

    Multiply by J for the energy form; zero for every configuration.
    """
    bond_sum = int(bond_products(g, sigma).sum())
    return bond_sum - (g.n_bonds - 2 * len(extract_contour(g, sigma)))


# ---------------------------------------------------------------------------
# decomposition
# ---------------------------------------------------------------------------

def _midpoints2(g: Geometry, idx: np.ndarray) -> np.ndarray:
    """Doubled segment midpoints (integers), reduced mod 2L on the torus."""
    m = g.bond_coords[idx].sum(axis=1)
    if g.bc is BC.PERIODIC:
        m = m % (2 * g.L)
    return m


def segments_linked(g: Geometry, e: int, f: int, connectivity: Connectivity) -> bool:
    ee, fe = set(g.dual_ends[e].tolist()), set(g.dual_ends[f].tolist())
    if ee & fe:
        return True
    if Connectivity(connectivity) is Connectivity.STANDARD:
        return False
    me, mf = _midpoints2(g, np.array([e, f]))
    vertical_e = g.bond_coords[e, 0, 0] == g.bond_coords[e, 1, 0]
    vertical_f = g.bond_coords[f, 0, 0] == g.bond_coords[f, 1, 0]
    if vertical_e != vertical_f:
        return False
    d = np.abs(me - mf)
    if g.bc is BC.PERIODIC:
        d = np.minimum(d, 2 * g.L - d)
    # doubled coordinates: Euclidean distance exactly 1 means |d|^2 == 4
    return int(d @ d) == 4


def link_matrix(g: Geometry, connectivity: Connectivity) -> np.ndarray:
    """Boolean ``(E, E)`` table of :func:`segments_linked`, cached per geometry."""
    connectivity = Connectivity(connectivity)
    cache = getattr(g, "_links", None)
    if cache is None:
        cache = {}
        object.__setattr__(g, "_links", cache)
    if connectivity not in cache:
        E = g.n_bonds
        m = np.zeros((E, E), dtype=bool)
        for a, b in itertools.combinations(range(E), 2):
            m[a, b] = m[b, a] = segments_linked(g, a, b, connectivity)
        m.setflags(write=False)
        cache[connectivity] = m
    return cache[connectivity]


def _linked_candidates(g: Geometry, edges, connectivity: Connectivity) -> dict[int, set[int]]:
    """Neighbours of each segment within ``edges`` under ``connectivity``."""
    edges = list(edges)
    by_vertex: dict[int, list[int]] = {}
    for e in edges:
        for v in g.dual_ends[e].tolist():
            by_vertex.setdefault(v, []).append(e)
    out = {e: set() for e in edges}
    for group in by_vertex.values():
        for a, b in itertools.combinations(group, 2):
            out[a].add(b)
            out[b].add(a)
    if connectivity is Connectivity.P_CONNECTED and edges:
        mids = _midpoints2(g, np.asarray(edges))
        vert = g.bond_coords[edges, 0, 0] == g.bond_coords[edges, 1, 0]
        key = {(bool(v), int(m[0]), int(m[1])): e for e, v, m in zip(edges, vert, mids)}
        for e, v, m in zip(edges, vert, mids):
            for dr, dc in ((2, 0), (-2, 0), (0, 2), (0, -2)):
                r, c = int(m[0]) + dr, int(m[1]) + dc
                if g.bc is BC.PERIODIC:
                    r, c = r % (2 * g.L), c % (2 * g.L)
                f = key.get((bool(v), r, c))
                if f is not None and f != e:
                    out[e].add(f)
                    out[f].add(e)
    return out


def decompose(gamma: ContourSet, connectivity: Connectivity | str = Connectivity.P_CONNECTED) -> list[ContourSet]:
    """Split a contour into components (p-connected or ordinarily connected).

    Components are returned sorted by their smallest bond index.
    """
    connectivity = Connectivity(connectivity)
    g = gamma.geometry
    nbrs = _linked_candidates(g, gamma.edges, connectivity)
    seen: set[int] = set()
    parts = []
    for e in sorted(gamma.edges):
        if e in seen:
            continue
        comp, stack = {e}, [e]
        seen.add(e)
        while stack:
            for f in nbrs[stack.pop()]:
                if f not in seen:
                    seen.add(f)
                    comp.add(f)
                    stack.append(f)
        parts.append(ContourSet(g, frozenset(comp)))
    return parts


def site_component_owners(gamma: ContourSet, components: list[ContourSet], kind: KernelKind = KernelKind.REVERSIBLE_PLUS) -> list[set[int]]:
    """For each site, the indices of components containing a bond that counts
    toward the site's vertex class."""
    owners = [set() for _ in range(gamma.geometry.n_sites)]
    for c, comp in enumerate(components):
        for i in np.flatnonzero(comp.site_counts(kind)):
            owners[i].add(c)
    return owners


# ---------------------------------------------------------------------------
# activities
# ---------------------------------------------------------------------------

def _class_factors(J: float, delta: float, kind: KernelKind) -> np.ndarray:
    """Per-class ratios ``(1 + delta phi_s) / (1 + delta e^{-4J})``, s = 1, 2, ..."""
    base = 1.0 + delta * math.exp(-4.0 * J)
    if base <= 0:
        raise ValueError(f"nonpositive denominator 1 + delta e^-4J for delta={delta}")
    if KernelKind(kind) is KernelKind.IRREVERSIBLE_PERIODIC:
        exps = (0.0, 4.0)
    else:
        exps = (-2.0, 0.0, 2.0, 4.0)
    return np.array([(1.0 + delta * math.exp(a * J)) / base for a in exps])


def log_xi_weight(gamma: ContourSet, k: int, J: float, delta: float, kind: KernelKind) -> float:
    factors = _class_factors(J, delta, kind)
    if np.any(factors <= 0):
        raise ValueError("a class factor is nonpositive; log weight undefined")
    return float(k * np.dot(gamma.vertex_classes(kind), np.log(factors)))


def xi_weight(gamma: ContourSet, k: int, J: float, delta: float, kind: KernelKind) -> float:
    """Product over vertex classes of the normalised flip factors, to power k."""
    factors = _class_factors(J, delta, kind)
    return float(np.prod(factors ** (k * np.asarray(gamma.vertex_classes(kind)))))


def activity(gamma: ContourSet, k: int, J: float, delta: float, kind: KernelKind) -> float:
    """``rho_k(gamma) = xi_k(gamma) exp(-2 J |gamma|)``."""
    return xi_weight(gamma, k, J, delta, kind) * math.exp(-2.0 * J * len(gamma))


def activity_bound(J: float, delta: float, kind: KernelKind) -> float:
    """Per-segment bound ``A(J, delta)`` on activities; ``inf`` for ``|delta| >= e^{4J}``.

    The bracket ``(1 + |d| e^{4J}) / (1 - |d| e^{-4J})`` is raised to the 4th
    power for reversible kinds and the 2nd for the irreversible one.
    """
    d = abs(delta)
    # compare before forming 1 - |d| e^{-4J}, which rounds away from 0 at the edge
    if d >= math.exp(4.0 * J):
        return math.inf
    den = 1.0 - d * math.exp(-4.0 * J)
    power = 2 if KernelKind(kind) is KernelKind.IRREVERSIBLE_PERIODIC else 4
    return math.exp(-2.0 * J) * ((1.0 + d * math.exp(4.0 * J)) / den) ** power


# ---------------------------------------------------------------------------
# contour gas partition functions
# ---------------------------------------------------------------------------

def even_subgraphs(g: Geometry):
    """Every even subgraph of the plus-b.c. dual grid, as ContourSets.

    Built from the fundamental cycles of a BFS spanning tree of the dual
    ``(L+1) x (L+1)`` grid, so it does not rely on spin configurations.
    """
    if g.bc is not BC.PLUS:
        raise ValueError("even-subgraph enumeration is for plus boundaries; torus images need windings to cancel")
    if g.n_sites > 16:
        raise ValueError("too many even subgraphs to enumerate")
    nv = g.n_dual_vertices
    adj: dict[int, list[tuple[int, int]]] = {v: [] for v in range(nv)}
    for e, (u, v) in enumerate(g.dual_ends.tolist()):
        adj[u].append((v, e))
        adj[v].append((u, e))
    parent_edge = {0: None}
    parent = {0: None}
    order = [0]
    for v in order:
        for w, e in adj[v]:
            if w not in parent:
                parent[w], parent_edge[w] = v, e
                order.append(w)
    tree = {e for e in parent_edge.values() if e is not None}

    def path_to_root(v):
        out = set()
        while parent[v] is not None:
            out ^= {parent_edge[v]}
            v = parent[v]
        return out

    cycles = []
    for e, (u, v) in enumerate(g.dual_ends.tolist()):
        if e not in tree:
            cycles.append(frozenset(path_to_root(u) ^ path_to_root(v) ^ {e}))
    # Gray-code walk: one XOR per subgraph
    current: frozenset[int] = frozenset()
    yield ContourSet(g, current)
    for n in range(1, 2 ** len(cycles)):
        bit = (n & -n).bit_length() - 1
        current = current ^ cycles[bit]
        yield ContourSet(g, current)


def contour_images(g: Geometry) -> list[ContourSet]:
    """Distinct contours of all configurations (every image once)."""
    seen = {}
    for s in all_configs(g.n_sites):
        gamma = extract_contour(g, s)
        seen.setdefault(gamma.edges, gamma)
    return list(seen.values())


def image_multiplicity(g: Geometry) -> int:
    """Configurations per contour: 1 with plus boundaries, 2 on the torus."""
    return 1 if g.bc is BC.PLUS else 2


def contour_partition(g: Geometry, k: int, J: float, delta: float, kind: KernelKind) -> float:
    """``Xi = sum_Gamma exp(-2 J |Gamma|) xi_k(Gamma)``.

    Plus boundaries sum over all even subgraphs of the dual grid; periodic
    boundaries sum over the distinct contour images of configurations.
    """
    gammas = even_subgraphs(g) if g.bc is BC.PLUS else contour_images(g)
    logs = [log_xi_weight(G, k, J, delta, kind) - 2.0 * J * len(G) for G in gammas]
    return float(np.exp(logsumexp(logs)))


def spin_side_partition(g: Geometry, k: int, J: float, delta: float, kind: KernelKind) -> float:
    """``pi_G(f^k) Z_G e^{-J|B|} (1 + delta e^{-4J})^{-k N} / m`` by summing
    over configurations, with ``m`` the image multiplicity."""
    from .hamiltonian import ModelParams

    S = all_configs(g.n_sites)
    lw = -energy_single(g, J, S) + k * log_f_factor(g, ModelParams(J, delta), kind, S)
    shift = -J * g.n_bonds - k * g.n_sites * math.log1p(delta * math.exp(-4.0 * J))
    return float(np.exp(logsumexp(lw) + shift)) / image_multiplicity(g)


def polymers(g: Geometry, connectivity: Connectivity) -> list[ContourSet]:
    """All components that occur in some contour of the box."""
    gammas = even_subgraphs(g) if g.bc is BC.PLUS else contour_images(g)
    seen = {}
    for G in gammas:
        for c in decompose(G, connectivity):
            seen.setdefault(c.edges, c)
    return list(seen.values())


def polymer_gas_partition(
    g: Geometry, k: int, J: float, delta: float, kind: KernelKind, homology: bool | None = None
) -> float:
    """Hard-core gas sum over families of mutually compatible polymers.

    Two polymers are compatible when they share no segment and no pair of
    their segments is linked, i.e. their union is not a single component.
    Families are enumerated directly, each unordered family once.

    On the torus a family of compatible polymers need not be the contour of
    any configuration (a lone winding loop is not). With ``homology=True``
    (the default for periodic boundaries) only families whose union is a
    configuration image are counted.
    """
    conn = connectivity_for(kind)
    if homology is None:
        homology = g.bc is BC.PERIODIC
    polys = sorted(polymers(g, conn), key=lambda c: min(c.edges))
    rho = [activity(c, k, J, delta, kind) for c in polys]
    n = len(polys)
    links = link_matrix(g, conn)
    row_mask = [sum(1 << int(f) for f in np.flatnonzero(links[e])) | (1 << e) for e in range(g.n_bonds)]
    own = [sum(1 << e for e in c.edges) for c in polys]
    reach = [0] * n
    for a, c in enumerate(polys):
        for e in c.edges:
            reach[a] |= row_mask[e]
    compatible = [[not (reach[a] & own[b]) for b in range(n)] for a in range(n)]
    valid = None
    if homology:
        valid = {sum(1 << e for e in G.edges) for G in contour_images(g)}

    def grow(start, allowed, weight, mask):
        total = weight if valid is None or mask in valid else 0.0
        for j in range(start, n):
            if allowed[j]:
                nxt = [allowed[m] and compatible[j][m] for m in range(n)]
                total += grow(j + 1, nxt, weight * rho[j], mask | own[j])
        return total

    return grow(0, [True] * n, 1.0, 0)


# ---------------------------------------------------------------------------
# Kotecky-Preiss check
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KPReport:
    kind: str
    J: float
    delta: float
    a: float
    A: float
    x: float
    series: float
    threshold: float
    satisfied: bool
    sufficient_A: bool
    radius_window: bool
    truncated_sum: float
    cutoff: int
    tail_bound: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def radius_window(J: float, delta: float) -> bool:
    """The rough sufficient window ``e^{2J} > 4 e 3^{3/2}`` and ``|delta| < e^{-4J} / 12``."""
    return math.exp(2.0 * J) > RADIUS_CONSTANT and abs(delta) < math.exp(-4.0 * J) / 12.0


def radius_threshold_J() -> float:
    return 0.5 * math.log(RADIUS_CONSTANT)


def kp_check(J: float, delta: float, kind: KernelKind = KernelKind.REVERSIBLE_PLUS, cutoff: int = 64) -> KPReport:
    """Evaluate the polymer convergence condition with weight ``a = 1``.

    Reversible kinds: per-step growth ``x = e 3^{3/2} A`` (p-contours through a
    point, counted along an Eulerian circuit of the closed-up graph), and the
    condition ``x^4 / (1 - x) <= 1/3``. Irreversible kind: ``x = 3 e A`` for
    ordinary contours and ``x^4 / (1 - x) <= 1``.

    ``truncated_sum`` is ``sum_{n=4}^{cutoff} x^n``; ``tail_bound`` the
    geometric remainder ``x^{cutoff+1} / (1 - x)``.
    """
    kind = KernelKind(kind)
    A = activity_bound(J, delta, kind)
    if kind is KernelKind.IRREVERSIBLE_PERIODIC:
        x, threshold = 3.0 * math.e * A, 1.0
    else:
        x, threshold = math.e * 3.0**1.5 * A, 1.0 / 3.0
    if x < 1.0:
        series = x**4 / (1.0 - x)
        truncated = sum(x**n for n in range(4, cutoff + 1))
        tail = x ** (cutoff + 1) / (1.0 - x)
    else:
        series = truncated = tail = math.inf
    return KPReport(
        kind=kind.value,
        J=J,
        delta=delta,
        a=1.0,
        A=A,
        x=x,
        series=series,
        threshold=threshold,
        satisfied=bool(series <= threshold),
        sufficient_A=bool(A < 1.0 / (2.0 * math.e * 3.0**1.5)),
        radius_window=radius_window(J, delta),
        truncated_sum=truncated,
        cutoff=cutoff,
        tail_bound=tail,
    )


def window_crossing(delta: float = 0.0, lo: float = 0.5, hi: float = 5.0, tol: float = 1e-9) -> float:
    """Smallest J (by bisection) at which :func:`radius_window` holds."""
    if radius_window(lo, delta) or not radius_window(hi, delta):
        raise ValueError("window does not change state on the bracket")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if radius_window(mid, delta):
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------------
# JSON dump
# ---------------------------------------------------------------------------

def contour_dump(g: Geometry, sigma, kind: KernelKind | None = None) -> dict:
    """JSON-ready description of the contour of ``sigma``.

    Segments carry midpoints and their component id under both
    connectivities; components carry their vertex-class counts.
    """
    kind = KernelKind(kind) if kind is not None else (
        KernelKind.REVERSIBLE_PLUS if g.bc is BC.PLUS else KernelKind.REVERSIBLE_PERIODIC
    )
    gamma = extract_contour(g, sigma)
    comps = {c: decompose(gamma, c) for c in Connectivity}
    comp_of = {
        c: {e: n for n, comp in enumerate(parts) for e in comp.edges} for c, parts in comps.items()
    }
    segments = []
    for e in sorted(gamma.edges):
        seg = dual_edge(g, e)
        segments.append(
            {
                "bond": [list(seg.bond[0]), list(seg.bond[1])],
                "midpoint": list(seg.midpoint),
                "vertical": seg.vertical,
                "p_component": comp_of[Connectivity.P_CONNECTED][e],
                "standard_component": comp_of[Connectivity.STANDARD][e],
            }
        )

    def describe(parts):
        return [
            {"id": n, "length": len(c), "l_s": list(c.vertex_classes(kind))}
            for n, c in enumerate(parts)
        ]

    return {
        "L": g.L,
        "bc": g.bc.value,
        "kind": kind.value,
        "length": len(gamma),
        "l_s": list(gamma.vertex_classes(kind)),
        "segments": segments,
        "p_components": describe(comps[Connectivity.P_CONNECTED]),
        "standard_components": describe(comps[Connectivity.STANDARD]),
    }
