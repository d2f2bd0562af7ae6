"""Hexagonal base-station lattice, cell assignment and mobile placement.

Cells are pointy-top regular hexagons: a base station sits at the origin and
its six neighbours lie at distance ``2 * apothem`` along the directions
0, 60, ..., 300 degrees. Sites are addressed by axial coordinates ``(q, r)``
with centre ``q * (2a, 0) + r * (a, 1.5 s)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import shapely
from shapely.geometry import Point, Polygon

from .params import ScenarioParams, hex_side

SQRT3 = math.sqrt(3.0)

# axial offsets of the six neighbours
_NEIGHBOURS = np.array([[0, 0], [1, 0], [-1, 0], [0, 1], [0, -1], [1, -1], [-1, 1]])

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(48)


@dataclass
class HexLattice:
    """Finite patch of the hexagonal lattice covering a disk of radius ``extent``."""

    cell_area: float
    extent: float
    axial: np.ndarray  # (M, 2) int
    centers: np.ndarray  # (M, 2) float
    origin_index: int
    _lookup: np.ndarray = field(repr=False)
    _offset: int = field(repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def side(self) -> float:
        return math.sqrt(2.0 * self.cell_area / (3.0 * SQRT3))

    @property
    def apothem(self) -> float:
        return self.side * SQRT3 / 2.0

    @property
    def circumradius(self) -> float:
        return self.side

    @property
    def n_sites(self) -> int:
        return len(self.centers)

    def index_of(self, q, r) -> np.ndarray:
        """Site index for axial coordinates, -1 where the site is not in the patch."""
        q = np.asarray(q) + self._offset
        r = np.asarray(r) + self._offset
        size = self._lookup.shape[0]
        ok = (q >= 0) & (q < size) & (r >= 0) & (r < size)
        out = np.full(np.shape(q), -1, dtype=np.int64)
        out[ok] = self._lookup[q[ok], r[ok]]
        return out

    def hexagon(self, index: int) -> Polygon:
        cx, cy = self.centers[index]
        s, a = self.side, self.apothem
        pts = [(cx, cy + s), (cx - a, cy + s / 2), (cx - a, cy - s / 2),
               (cx, cy - s), (cx + a, cy - s / 2), (cx + a, cy + s / 2)]
        return Polygon(pts)


def build_lattice(rho_c: float, extent: float) -> HexLattice:
    """Lattice of sites within ``extent + 2 * R_c`` of the origin for cell density ``rho_c``.

    ``extent == 0`` gives the origin site alone.
    """
    if not rho_c > 0:
        raise ValueError("rho_c must be positive")
    if extent < 0:
        raise ValueError("extent must be non-negative")
    s = hex_side(rho_c)
    a = s * SQRT3 / 2.0
    reach = extent + 2.0 * s if extent > 0 else 0.0
    Q = int(math.ceil(reach / (1.5 * s))) + 2
    q, r = np.meshgrid(np.arange(-Q, Q + 1), np.arange(-Q, Q + 1), indexing="ij")
    q, r = q.ravel(), r.ravel()
    x = 2 * a * q + a * r
    y = 1.5 * s * r
    keep = np.hypot(x, y) <= reach
    q, r, x, y = q[keep], r[keep], x[keep], y[keep]
    lookup = np.full((2 * Q + 1, 2 * Q + 1), -1, dtype=np.int64)
    lookup[q + Q, r + Q] = np.arange(len(q))
    origin = int(lookup[Q, Q])
    return HexLattice(
        cell_area=1.0 / rho_c,
        extent=float(extent),
        axial=np.column_stack([q, r]),
        centers=np.column_stack([x, y]),
        origin_index=origin,
        _lookup=lookup,
        _offset=Q,
    )


def _axial_round(x, y, s):
    a = s * SQRT3 / 2.0
    rf = y / (1.5 * s)
    qf = (x - a * rf) / (2 * a)
    # cube rounding
    xf, zf = qf, rf
    yf = -xf - zf
    rx, ry, rz = np.round(xf), np.round(yf), np.round(zf)
    dx, dy, dz = np.abs(rx - xf), np.abs(ry - yf), np.abs(rz - zf)
    fix_x = (dx > dy) & (dx > dz)
    fix_y = ~fix_x & (dy > dz)
    fix_z = ~fix_x & ~fix_y
    rx = np.where(fix_x, -ry - rz, rx)
    rz = np.where(fix_z, -rx - ry, rz)
    return rx.astype(np.int64), rz.astype(np.int64)


def assign_cell(points, lattice: HexLattice) -> np.ndarray:
    """Index of the nearest base station for each point.

    Ties (points exactly on a cell edge) go to the lexicographically smallest
    axial coordinate. Raises ``ValueError`` if a point falls in a cell that
    is not part of the lattice patch.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    s = lattice.side
    a = lattice.apothem
    q0, r0 = _axial_round(pts[:, 0], pts[:, 1], s)
    cq = q0[:, None] + _NEIGHBOURS[None, :, 0]
    cr = r0[:, None] + _NEIGHBOURS[None, :, 1]
    cx = 2 * a * cq + a * cr
    cy = 1.5 * s * cr
    d2 = (pts[:, 0:1] - cx) ** 2 + (pts[:, 1:2] - cy) ** 2
    near = d2 <= d2.min(axis=1, keepdims=True) + 1e-12 * s * s
    span = 1 << 20
    key = np.where(near, (cq + span // 2) * span + (cr + span // 2), np.iinfo(np.int64).max)
    pick = np.argmin(key, axis=1)
    rows = np.arange(len(pts))
    idx = lattice.index_of(cq[rows, pick], cr[rows, pick])
    if np.any(idx < 0):
        raise ValueError("point outside the lattice extent")
    return idx


def in_hexagon(offsets: np.ndarray, side: float) -> np.ndarray:
    """Whether points given relative to a cell centre lie inside the pointy-top hexagon."""
    ax = np.abs(offsets[..., 0])
    ay = np.abs(offsets[..., 1])
    return (ax <= side * SQRT3 / 2.0) & (ay <= side - ax / SQRT3)


class HexDistance:
    """Distance from the centre of a regular hexagon to a uniform point inside it."""

    def __init__(self, side: float):
        self.side = float(side)
        self.apothem = self.side * SQRT3 / 2.0
        self.area = 1.5 * SQRT3 * self.side ** 2

    def cdf(self, d):
        d = np.asarray(d, dtype=float)
        a, s = self.apothem, self.side
        dc = np.clip(d, a, s)
        seg = dc ** 2 * np.arccos(a / dc) - a * np.sqrt(np.maximum(dc ** 2 - a ** 2, 0.0))
        outer = (math.pi * dc ** 2 - 6.0 * seg) / self.area
        out = np.where(d <= a, math.pi * np.clip(d, 0.0, a) ** 2 / self.area, outer)
        return np.where(d >= s, 1.0, out)

    def pdf(self, d):
        d = np.asarray(d, dtype=float)
        a, s = self.apothem, self.side
        dc = np.clip(d, a, s)
        val = np.where(d <= a, 2 * math.pi * d, 2 * math.pi * d - 12.0 * d * np.arccos(a / dc))
        return np.where((d < 0) | (d > s), 0.0, val / self.area)

    def quantile(self, u):
        """Inverse CDF by bisection (vectorised)."""
        u = np.asarray(u, dtype=float)
        lo = np.zeros_like(u)
        hi = np.full_like(u, self.side)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            below = self.cdf(mid) < u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)

    def partial_moment(self, k: float, lower) -> np.ndarray:
        """``E[d**k ; d > lower]``, exact on the inscribed disk, Gauss-Legendre outside it.

        The outer piece uses ``d = a + w**2`` which removes the square-root
        behaviour of the density at the apothem.
        """
        if k <= -2:
            raise ValueError("moment order must exceed -2")
        lower = np.clip(np.asarray(lower, dtype=float), 0.0, self.side)
        a, s = self.apothem, self.side
        x_in = np.minimum(lower, a)
        inner = 2 * math.pi / self.area * (a ** (k + 2) - x_in ** (k + 2)) / (k + 2)
        w0 = np.sqrt(np.maximum(lower, a) - a)
        w1 = math.sqrt(s - a)
        half = 0.5 * (w1 - w0)
        w = (w0 + w1)[..., None] * 0.5 + half[..., None] * _GL_NODES
        d = a + w ** 2
        f = d ** (k + 1) * (2 * math.pi - 12.0 * np.arccos(np.minimum(a / d, 1.0))) / self.area
        outer = half * np.sum(_GL_WEIGHTS * f * 2 * w, axis=-1)
        return inner + outer


def hex_distance_cdf(d, lattice: HexLattice):
    """P(|Y| <= d) for Y uniform in one cell of ``lattice``."""
    return HexDistance(lattice.side).cdf(d)


@dataclass
class NetworkRealization:
    """Mobile positions for one trial.

    In ``fast`` mode ``positions`` holds only the candidates that can become
    active (at most ``K`` per cell, ``K - 1`` in the origin cell); in
    ``exact`` mode it holds all ``n`` potential mobiles of the disk.
    """

    positions: np.ndarray
    cell_index: np.ndarray
    representative: np.ndarray
    disk_radius: float
    n: int
    mode: str
    origin_index: int

    @property
    def distances_to_origin(self) -> np.ndarray:
        return np.hypot(self.positions[:, 0], self.positions[:, 1])


def _sample_disk(n: int, R: float, rng: np.random.Generator) -> np.ndarray:
    rad = R * np.sqrt(rng.random(n))
    th = 2 * math.pi * rng.random(n)
    return np.column_stack([rad * np.cos(th), rad * np.sin(th)])


def _eligible_areas(lattice: HexLattice, R: float, d_min: float):
    """(cell indices touching the disk, area of cell ∩ disk with d >= d_min)."""
    key = ("eligible", R, d_min)
    if key in lattice._cache:
        return lattice._cache[key]
    s = lattice.side
    dist = np.hypot(lattice.centers[:, 0], lattice.centers[:, 1])
    cells = np.flatnonzero(dist - s < R)
    full = lattice.cell_area * (1.0 - float(HexDistance(s).cdf(d_min)))
    areas = np.full(len(cells), full)
    boundary = np.flatnonzero(dist[cells] + s > R)
    if len(boundary):
        disk = Point(0.0, 0.0).buffer(R, quad_segs=1024)
        for j in boundary:
            ci = cells[j]
            region = lattice.hexagon(ci).intersection(disk)
            if d_min > 0:
                hole = Point(*lattice.centers[ci]).buffer(d_min, quad_segs=256)
                region = region.difference(hole)
            areas[j] = shapely.area(region)
    lattice._cache[key] = (cells, areas)
    return cells, areas


def _fill_cells(centers, counts, accept, side, d_min, R, rng):
    """Uniform points in each cell's eligible region by rejection from the bounding box."""
    a = side * SQRT3 / 2.0
    need = counts.astype(np.int64).copy()
    prob = np.clip(accept, 1e-6, 1.0)
    got_pts, got_cell = [], []
    for _ in range(10_000):
        live = np.flatnonzero(need > 0)
        if len(live) == 0:
            break
        batch = np.minimum(np.ceil(need[live] / prob[live] * 1.3).astype(np.int64) + 4, 200_000)
        owner = np.repeat(live, batch)
        off = np.column_stack([(2 * rng.random(len(owner)) - 1) * a,
                               (2 * rng.random(len(owner)) - 1) * side])
        pos = centers[owner] + off
        ok = in_hexagon(off, side) & (np.hypot(pos[:, 0], pos[:, 1]) <= R)
        if d_min > 0:
            ok &= np.hypot(off[:, 0], off[:, 1]) >= d_min
        owner, pos = owner[ok], pos[ok]
        # rank of each accepted point within its cell, in proposal order
        start = np.searchsorted(owner, live)
        rank = np.arange(len(owner)) - np.repeat(start, np.diff(np.append(start, len(owner))))
        take = rank < need[owner]
        got_pts.append(pos[take])
        got_cell.append(owner[take])
        need -= np.bincount(owner[take], minlength=len(need))
    else:
        raise RuntimeError("rejection sampling did not fill every cell")
    pts = np.concatenate(got_pts) if got_pts else np.empty((0, 2))
    cell = np.concatenate(got_cell) if got_cell else np.empty(0, dtype=np.int64)
    order = np.argsort(cell, kind="stable")
    return pts[order], cell[order]


def sample_representative(lattice: HexLattice, d_min: float, R: float,
                          rng: np.random.Generator) -> np.ndarray:
    """Uniform point in the origin cell at distance at least ``d_min`` from its base station."""
    s = lattice.side
    a = lattice.apothem
    for _ in range(100_000):
        p = np.array([(2 * rng.random() - 1) * a, (2 * rng.random() - 1) * s])
        r = math.hypot(p[0], p[1])
        if in_hexagon(p, s) and r >= d_min and r <= R:
            return p
    raise RuntimeError("could not place the representative mobile")


def sample_mobiles(params: ScenarioParams, rng: np.random.Generator,
                   lattice: Optional[HexLattice] = None) -> NetworkRealization:
    """Draw the mobiles of one network realization.

    ``exact`` mode places all ``n = round(pi rho_m R^2)`` mobiles uniformly in
    the disk. ``fast`` mode draws, per cell, a Poisson number of eligible
    mobiles (mean ``rho_m`` times the eligible area) and places only the
    ``min(K, count)`` that can be active, which is equivalent in law to
    uniform selection among the cell's mobiles.
    """
    if lattice is None:
        lattice = build_lattice(params.rho_c, params.R)
    d_min = params.policy.d_min
    R = params.R
    rep = sample_representative(lattice, d_min, R, rng)
    if params.sampling_mode == "exact":
        pts = _sample_disk(params.n, R, rng)
        cell = assign_cell(pts, lattice) if len(pts) else np.empty(0, dtype=np.int64)
    else:
        cells, areas = _eligible_areas(lattice, R, d_min)
        counts = rng.poisson(params.rho_m * areas)
        slots = np.full(len(cells), params.K)
        slots[cells == lattice.origin_index] = params.K - 1
        counts = np.minimum(counts, slots)
        full_counts = np.zeros(lattice.n_sites, dtype=np.int64)
        full_counts[cells] = counts
        accept = np.zeros(lattice.n_sites)
        accept[cells] = areas / (4 * lattice.apothem * lattice.side)
        pts, cell = _fill_cells(lattice.centers, full_counts, accept, lattice.side,
                                d_min, R, rng)
    return NetworkRealization(
        positions=pts,
        cell_index=cell,
        representative=rep,
        disk_radius=R,
        n=params.n,
        mode=params.sampling_mode,
        origin_index=lattice.origin_index,
    )
