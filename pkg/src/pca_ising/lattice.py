"""Square-lattice geometry for the L x L box with plus or periodic boundaries.

Sites are indexed row-major, ``i = r * L + c``. Directions follow screen
convention: ``UP`` is row - 1, ``DOWN`` is row + 1, ``LEFT`` is column - 1,
``RIGHT`` is column + 1.

Each bond of the geometry's edge set carries its dual unit segment. Dual
vertices are labelled by integer pairs ``(a, b)`` standing for the point
``(a - 1/2, b - 1/2)`` in primal coordinates; for plus boundaries they fill an
``(L + 1) x (L + 1)`` grid, for periodic boundaries they are taken mod L.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

EXTERNAL = -1

MAX_ENUMERATION_SITES = 16


class BC(str, enum.Enum):
    PLUS = "plus"
    PERIODIC = "periodic"


class Direction(enum.IntEnum):
    UP = 0
    RIGHT = 1
    DOWN = 2
    LEFT = 3


_OFFSETS = {
    Direction.UP: (-1, 0),
    Direction.RIGHT: (0, 1),
    Direction.DOWN: (1, 0),
    Direction.LEFT: (0, -1),
}


@dataclass(frozen=True)
class DualEdge:
    """Unit segment of the dual lattice crossing one primal bond.

    ``bond`` holds the primal endpoints as ``(row, col)`` pairs, ordered so the
    second endpoint is the RIGHT or DOWN neighbour of the first. Endpoints
    outside the box are external sites (plus boundaries only).
    """

    bond: tuple[tuple[int, int], tuple[int, int]]
    midpoint: tuple[float, float]
    vertical: bool
    ends: tuple[tuple[int, int], tuple[int, int]]


@dataclass(frozen=True, eq=False)
class Geometry:
    """Immutable neighbour, bond and dual-edge tables.

    Attributes:
        L: lattice side.
        bc: boundary condition.
        nbr: ``(L*L, 4)`` neighbour index per direction, ``EXTERNAL`` for
            sites outside the box.
        contacts: number of external neighbours of each site.
        bonds: ``(E, 2)`` site indices of each bond; the second entry may be
            ``EXTERNAL``. For plus boundaries the edge set is the in-box bonds
            followed by the site-to-external contacts (external-external pairs
            are excluded). For periodic boundaries it is the torus edge set.
        bond_coords: ``(E, 2, 2)`` ``(row, col)`` of both endpoints, unwrapped
            (the second endpoint may sit at row or column ``L`` on the torus,
            or outside the box for plus contacts).
        dual_ends: ``(E, 2)`` dual-vertex ids of the segment crossing each bond.
    """

    L: int
    bc: BC
    nbr: np.ndarray = field(repr=False)
    contacts: np.ndarray = field(repr=False)
    bonds: np.ndarray = field(repr=False)
    bond_coords: np.ndarray = field(repr=False)
    dual_ends: np.ndarray = field(repr=False)

    @property
    def n_sites(self) -> int:
        return self.L * self.L

    @property
    def n_bonds(self) -> int:
        return len(self.bonds)

    @property
    def n_internal_bonds(self) -> int:
        return int(np.count_nonzero(self.bonds[:, 1] != EXTERNAL))

    @property
    def n_dual_vertices(self) -> int:
        if self.bc is BC.PLUS:
            return (self.L + 1) ** 2
        return self.L * self.L

    def site(self, r: int, c: int) -> int:
        return r * self.L + c

    def coords(self, i: int) -> tuple[int, int]:
        return divmod(int(i), self.L)

    def dual_vertex_id(self, a: int, b: int) -> int:
        if self.bc is BC.PLUS:
            return a * (self.L + 1) + b
        return (a % self.L) * self.L + (b % self.L)

    def dual_vertex_coords(self, v: int) -> tuple[int, int]:
        if self.bc is BC.PLUS:
            return divmod(int(v), self.L + 1)
        return divmod(int(v), self.L)

    def adjacency(self) -> np.ndarray:
        """Symmetric in-box adjacency matrix (no external sites)."""
        n = self.n_sites
        A = np.zeros((n, n))
        internal = self.bonds[self.bonds[:, 1] != EXTERNAL]
        np.add.at(A, (internal[:, 0], internal[:, 1]), 1.0)
        np.add.at(A, (internal[:, 1], internal[:, 0]), 1.0)
        return A


def _freeze(*arrays):
    for a in arrays:
        a.setflags(write=False)


def build_geometry(L: int, bc: BC | str) -> Geometry:
    """Build neighbour, bond and dual tables for an L x L box.

    Raises:
        ValueError: if ``L < 2`` (plus) or ``L < 3`` (periodic). On a 2 x 2
            torus the wrap bonds coincide with the ordinary ones.
    """
    bc = BC(bc)
    L = int(L)
    if bc is BC.PLUS and L < 2:
        raise ValueError(f"plus boundary needs L >= 2, got L={L}")
    if bc is BC.PERIODIC and L < 3:
        raise ValueError(f"periodic boundary needs L >= 3, got L={L} (wrap bonds would double)")

    n = L * L
    nbr = np.empty((n, 4), dtype=np.int64)
    for r in range(L):
        for c in range(L):
            for d, (dr, dc) in _OFFSETS.items():
                rr, cc = r + dr, c + dc
                if bc is BC.PERIODIC:
                    nbr[r * L + c, d] = (rr % L) * L + (cc % L)
                elif 0 <= rr < L and 0 <= cc < L:
                    nbr[r * L + c, d] = rr * L + cc
                else:
                    nbr[r * L + c, d] = EXTERNAL
    contacts = np.count_nonzero(nbr == EXTERNAL, axis=1).astype(np.int64)

    bonds, coords = [], []
    # RIGHT and DOWN bonds from every site cover the torus exactly once, and
    # cover the in-box bonds plus the right/bottom contacts for plus b.c.
    for r in range(L):
        for c in range(L):
            for d in (Direction.RIGHT, Direction.DOWN):
                dr, dc = _OFFSETS[d]
                bonds.append((r * L + c, nbr[r * L + c, d]))
                coords.append(((r, c), (r + dr, c + dc)))
    if bc is BC.PLUS:
        # top and left contacts: the external site is the first endpoint
        # geometrically, but the in-box site is listed first in ``bonds``.
        for c in range(L):
            bonds.append((c, EXTERNAL))
            coords.append(((-1, c), (0, c)))
        for r in range(L):
            bonds.append((r * L, EXTERNAL))
            coords.append(((r, -1), (r, 0)))
    bonds = np.array(bonds, dtype=np.int64)
    coords = np.array(coords, dtype=np.int64)

    g0 = Geometry(L, bc, nbr, contacts, bonds, coords, np.empty((0, 2), dtype=np.int64))
    dual_ends = np.array(
        [[g0.dual_vertex_id(*e) for e in _segment_ends(p, q)] for p, q in coords],
        dtype=np.int64,
    )
    _freeze(nbr, contacts, bonds, coords, dual_ends)
    return Geometry(L, bc, nbr, contacts, bonds, coords, dual_ends)


def _segment_ends(p, q) -> tuple[tuple[int, int], tuple[int, int]]:
    (r, c), (r2, c2) = p, q
    if r == r2:  # horizontal bond, vertical segment at column c + 1/2
        return (r, c + 1), (r + 1, c + 1)
    return (r + 1, c), (r + 1, c + 1)


def neighbors(g: Geometry, i: int) -> list[tuple[int, Direction]]:
    """Neighbours of site ``i`` in the order up, right, down, left.

    External slots (plus boundaries) are reported as ``EXTERNAL``.
    """
    if not 0 <= i < g.n_sites:
        raise IndexError(f"site {i} outside lattice of {g.n_sites} sites")
    return [(int(g.nbr[i, d]), d) for d in Direction]


def _canonical_bond(g: Geometry, p, q):
    """Order a bond so the second endpoint is RIGHT or DOWN of the first."""
    L = g.L
    p, q = tuple(int(x) for x in p), tuple(int(x) for x in q)
    if g.bc is BC.PERIODIC:
        p, q = (p[0] % L, p[1] % L), (q[0] % L, q[1] % L)
    for a, b in ((p, q), (q, p)):
        for d in (Direction.RIGHT, Direction.DOWN):
            dr, dc = _OFFSETS[d]
            nxt = (a[0] + dr, a[1] + dc)
            if g.bc is BC.PERIODIC:
                if (nxt[0] % L, nxt[1] % L) == b:
                    return a, nxt
            elif nxt == b:
                return a, b
    raise ValueError(f"{p} and {q} are not nearest neighbours")


def _bond_index_table(g: Geometry) -> dict:
    table = getattr(g, "_bond_index", None)
    if table is None:
        table = {(tuple(p), tuple(q)): e for e, (p, q) in enumerate(g.bond_coords.tolist())}
        object.__setattr__(g, "_bond_index", table)
    return table


def bond_index(g: Geometry, p, q) -> int:
    """Index into ``g.bonds`` of the bond between coordinates ``p`` and ``q``.

    Raises:
        ValueError: if the pair is not a bond of the geometry's edge set.
    """
    a, b = _canonical_bond(g, p, q)
    e = _bond_index_table(g).get((a, b))
    if e is None:
        raise ValueError(f"bond {p}-{q} not in the edge set")
    return e


def dual_edge(g: Geometry, bond) -> DualEdge:
    """Dual segment of a bond given as a coordinate pair or a bond index."""
    if isinstance(bond, (int, np.integer)):
        e = int(bond)
        if not 0 <= e < g.n_bonds:
            raise ValueError(f"bond index {e} out of range")
    else:
        e = bond_index(g, *bond)
    p, q = (tuple(int(x) for x in v) for v in g.bond_coords[e])
    mid = ((p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0)
    if g.bc is BC.PERIODIC:
        mid = (mid[0] % g.L, mid[1] % g.L)
    ends = tuple(g.dual_vertex_coords(v) for v in g.dual_ends[e])
    return DualEdge(bond=(p, q), midpoint=mid, vertical=(p[0] == q[0]), ends=ends)


def bond_of(g: Geometry, seg: DualEdge) -> int:
    """Inverse of :func:`dual_edge`: bond index of a dual segment."""
    return bond_index(g, *seg.bond)


def all_configs(n_sites: int) -> np.ndarray:
    """Every spin configuration on ``n_sites`` sites as an int8 array.

    Row ``k`` encodes ``k`` in binary with site 0 the least significant bit;
    a set bit means spin -1.
    """
    if n_sites > MAX_ENUMERATION_SITES:
        raise ValueError(f"refusing to enumerate 2**{n_sites} configurations")
    k = np.arange(2 ** n_sites, dtype=np.int64)[:, None]
    bits = (k >> np.arange(n_sites, dtype=np.int64)) & 1
    return (1 - 2 * bits).astype(np.int8)


def config_index(sigma) -> int:
    """Position of ``sigma`` in the :func:`all_configs` order."""
    s = np.asarray(sigma).ravel()
    return int(np.sum((s < 0).astype(np.int64) << np.arange(len(s), dtype=np.int64)))
