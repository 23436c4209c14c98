"""Sign transports on double covers of the corner graph.

Corners carry square-root-type observables: parallel transport between
adjacent corners multiplies by a half-angle phase whose square is trivial,
so each transport is an exact sign.  For corners c, c' adjacent within a
cell, with chords r(c) = v(c) - u(c),

    eps(c, c') = exp(-i/2 * (Arg r(c) + alpha - Arg r(c')))

where alpha is the turning of the chord as the corner slides from c to c'
through the cell interior.  The exponent is an integer multiple of i*pi,
so eps is +1 or -1 exactly.  Alpha is minus the cell's interior angle at
the shared vertex for quad-shaped cells (slot order runs clockwise around
each shared vertex); for the triangle cell outside a boundary corner the
chord sweeps the whole outer sector, which can exceed a straight angle,
so the turning is computed from the sector and not as a principal value.

With these choices the transport product around every bounded cell and
around every interior vertex of the double graph is -1: this is the cover
branched over all of them, on which the propagation relations close.

Additional branch points (primal vertex classes carrying disorders, dual
nodes carrying spins) are realised by cutting along a generic ray from
each: the sign of every corner link whose chord segment the ray crosses
is flipped.
"""

from __future__ import annotations

import cmath
import math

import numpy as np

from .errors import GeometryError, InputError
from .planar_map import DualPair

ZETA = cmath.exp(1j * math.pi / 4)
_TWO_PI = 2.0 * math.pi

# successive ray directions tried for branch cuts; irrational-ish angles
# so that axis-aligned lattices never produce degenerate crossings
_RAY_SEEDS = [0.5772156649015329, 1.3247179572447460, 2.5029078750958926,
              0.1234567891011121, 3.0178532577989567]


def corner_chord(pair: DualPair, c: int) -> complex:
    """r(c) = position of v(c) minus position of u(c)."""
    cor = pair.corners[c]
    r = pair.map.positions[cor.v] - pair.node_pos[cor.u]
    if abs(r) < 1e-12:
        raise GeometryError(f"corner {c} has zero-length chord")
    return r


def dirac_spinor(pair: DualPair, zeta: complex = ZETA) -> np.ndarray:
    """Reference section eta_c = zeta * exp(-i/2 * Arg r(c)), principal branch."""
    eta = np.empty(pair.n_corners(), dtype=complex)
    for c in range(pair.n_corners()):
        eta[c] = zeta * cmath.exp(-0.5j * cmath.phase(corner_chord(pair, c)))
    return eta


def cell_corner_links(cell):
    """Adjacent corner pairs around a cell in traversal order.

    Quad-shaped cells give four ordered links around the slot cycle;
    triangle cells give their single link.
    """
    if cell.kind in ("interior", "wired_edge"):
        c00, c10, c11, c01 = cell.corners
        return [(c00, c10), (c10, c11), (c11, c01), (c01, c00)]
    return [(cell.corners[0], cell.corners[1])]


class DoubleCover:
    """Transport signs eps on corner-graph links, with optional branch cuts.

    include_faces=True gives the cover branched over every cell and every
    interior vertex of the double graph (the one on which propagation
    closes); branch points add further monodromy.  Branch points are
    ('b', class_id) or ('w', node_id) pairs.
    """

    def __init__(self, pair: DualPair, branch_points=(), include_faces=True):
        self.pair = pair
        self.include_faces = include_faces
        self.branch_points = tuple(branch_points)
        self._base = {}   # (c1, c2) sorted -> +-1, geometric part
        self._cut = {}    # (c1, c2) sorted -> +-1, branch-cut part
        self._links = []
        for cell in pair.cells:
            alphas = self._cell_turnings(cell)
            for (c1, c2), alpha in zip(cell_corner_links(cell), alphas):
                self._add_link(c1, c2, alpha)
        self._apply_cuts()

    def _cell_turnings(self, cell):
        pair = self.pair
        pos = pair.map.positions
        npos = pair.node_pos
        if cell.kind in ("interior", "wired_edge"):
            poly = [pos[cell.vb[0]], npos[cell.vc[0]],
                    pos[cell.vb[1]], npos[cell.vc[1]]]
            alphas = []
            for i in range(4):
                j = (i + 1) % 4
                a = cmath.phase(poly[i] - poly[j])
                b = cmath.phase(poly[(i + 2) % 4] - poly[j])
                ang = (a - b) % _TWO_PI      # ccw interior angle at poly[j]
                if ang < 1e-9 or ang > _TWO_PI - 1e-9:
                    raise GeometryError(
                        f"degenerate interior angle in cell {cell.id}")
                alphas.append(-ang)
            return alphas
        if cell.kind == "free_edge":
            r1 = corner_chord(pair, cell.corners[0])
            r2 = corner_chord(pair, cell.corners[1])
            alpha = cmath.phase(r2 / r1)
            if abs(abs(alpha) - math.pi) < 1e-9:
                raise GeometryError(
                    f"free cell {cell.id} subtends a straight angle")
            return [alpha]
        if cell.kind == "wired_corner":
            # chord sweeps from the first wired node to the second through
            # the sector outside the domain, clockwise in stored order
            v = pos[cell.vb[0]]
            b1 = cmath.phase(npos[cell.vc[0]] - v)
            b2 = cmath.phase(npos[cell.vc[1]] - v)
            gap = (b1 - b2) % _TWO_PI
            if gap < 1e-9:
                raise GeometryError(
                    f"wired corner cell {cell.id} has zero outer sector")
            return [-gap]
        raise InputError(f"unknown cell kind {cell.kind}")

    def _add_link(self, c1, c2, alpha):
        key = (min(c1, c2), max(c1, c2))
        if key in self._base:
            return
        if self.include_faces:
            r1 = corner_chord(self.pair, c1)
            r2 = corner_chord(self.pair, c2)
            k = (cmath.phase(r1) + alpha - cmath.phase(r2)) / _TWO_PI
            if abs(k - round(k)) > 1e-7:
                raise GeometryError(f"non-integer transport winding at {key}")
            eps = 1 if round(k) % 2 == 0 else -1
        else:
            eps = 1
        self._base[key] = eps
        self._cut[key] = 1
        self._links.append(key)

    # -- branch cuts --------------------------------------------------

    def _branch_pos(self, bp):
        tag, idx = bp
        if tag == "b":
            ms = self.pair.class_members[idx]
            if len(ms) == 1:
                return self.pair.map.positions[ms[0]]
            return self.pair.class_pos[idx]
        if tag == "w":
            return self.pair.node_pos[idx]
        raise InputError(f"branch point {bp!r} must be ('b', class) or ('w', node)")

    def _apply_cuts(self):
        if not self.branch_points:
            return
        cpos = self.pair.corner_pos
        scale = max(np.abs(cpos - cpos.mean())) or 1.0
        for bp in self.branch_points:
            origin = self._branch_pos(bp)
            for seed in _RAY_SEEDS:
                d = cmath.exp(1j * seed)
                if self._ray_ok(origin, d, scale):
                    break
            else:
                raise GeometryError(f"no generic cut ray found for {bp!r}")
            for key in self._links:
                if _ray_crosses(origin, d, cpos[key[0]], cpos[key[1]]):
                    self._cut[key] = -self._cut[key]

    def _ray_ok(self, origin, d, scale):
        # the ray must stay clear of every corner position
        for p in self.pair.corner_pos:
            w = (p - origin) / d
            if w.real > -1e-9 * scale and abs(w.imag) < 1e-9 * scale:
                return False
        return True

    # -- queries ------------------------------------------------------

    def sign(self, c1, c2):
        """Transport sign between adjacent corners; symmetric in c1, c2."""
        key = (min(c1, c2), max(c1, c2))
        try:
            return self._base[key] * self._cut[key]
        except KeyError:
            raise InputError(f"corners {c1}, {c2} are not adjacent") from None

    def cut_sign(self, c1, c2):
        """Branch-cut part alone (transport on the cover branched only at
        the given points, cell branching excluded)."""
        key = (min(c1, c2), max(c1, c2))
        try:
            return self._cut[key]
        except KeyError:
            raise InputError(f"corners {c1}, {c2} are not adjacent") from None

    def links(self):
        return tuple(self._links)

    def cycle_sign(self, corner_cycle):
        """Product of transports around a closed corner path."""
        s = 1
        n = len(corner_cycle)
        for i in range(n):
            s *= self.sign(corner_cycle[i], corner_cycle[(i + 1) % n])
        return s

    def cell_lift(self, cell):
        """Relative lift signs of a quad cell's corners in slot order,
        anchored at s(c00) = +1."""
        c00, c10, c11, c01 = cell.corners
        s0 = 1
        s1 = s0 * self.sign(c00, c10)
        s2 = s1 * self.sign(c10, c11)
        s3 = s2 * self.sign(c11, c01)
        return (s0, s1, s2, s3)


def _ray_crosses(origin, d, p1, p2):
    """Does the ray origin + t*d (t >= 0) cross open segment (p1, p2)?"""
    # solve origin + t d = p1 + s (p2 - p1)
    e = p2 - p1
    a11, a12 = d.real, -(e.real)
    a21, a22 = d.imag, -(e.imag)
    det = a11 * a22 - a12 * a21
    if abs(det) < 1e-15:
        return False
    bx = p1.real - origin.real
    by = p1.imag - origin.imag
    t = (bx * a22 - a12 * by) / det
    s = (a11 * by - bx * a21) / det
    return t > 0.0 and 0.0 < s < 1.0


def double_cover(pair: DualPair, branch_points=()) -> DoubleCover:
    """Cover branched only over the given monodromy points."""
    return DoubleCover(pair, branch_points, include_faces=False)


def upsilon_cover(pair: DualPair, branch_points=()) -> DoubleCover:
    """Cover branched over every cell and interior vertex of the double
    graph, plus the given points.  Propagation relations for corner
    observables close on this cover."""
    return DoubleCover(pair, branch_points, include_faces=True)


def check_cover(cov: DoubleCover) -> dict:
    """Verify branching: every cell cycle and every closed corner fan
    around an interior vertex or node multiplies to -1 (base signs only).

    Returns counts of checked cycles; raises GeometryError on violation.
    """
    pair = cov.pair
    base = DoubleCover(pair, (), include_faces=cov.include_faces) \
        if cov.branch_points else cov
    n_cells = 0
    for cell in pair.cells:
        if cell.kind in ("interior", "wired_edge"):
            s = 1
            for c1, c2 in cell_corner_links(cell):
                s *= base.sign(c1, c2)
            if cov.include_faces and s != -1:
                raise GeometryError(f"cell {cell.id} cycle sign {s}")
            n_cells += 1
    # corner fans around primal vertices and dual nodes
    n_fans = 0
    for mode in ("v", "u"):
        count = pair.map.n_vertices if mode == "v" else pair.n_nodes
        for w in range(count):
            cycle = _corner_fan(pair, mode, w)
            if cycle is None:
                continue
            s = base.cycle_sign(cycle)
            want = -1 if cov.include_faces else 1
            if s != want:
                raise GeometryError(f"fan at {mode}{w} has sign {s}")
            n_fans += 1
    return {"cells": n_cells, "fans": n_fans}


def _corner_fan(pair, mode, w):
    """Closed cycle of corners around a primal vertex (mode 'v') or dual
    node (mode 'u'), or None if the fan is not closed (boundary of the
    corner graph)."""
    links = []
    for cell in pair.cells:
        for c1, c2 in cell_corner_links(cell):
            k1, k2 = pair.corners[c1], pair.corners[c2]
            if mode == "v" and k1.v == w and k2.v == w:
                links.append((c1, c2))
            elif mode == "u" and k1.u == w and k2.u == w:
                links.append((c1, c2))
    if not links:
        return None
    nbrs = {}
    for c1, c2 in links:
        nbrs.setdefault(c1, []).append(c2)
        nbrs.setdefault(c2, []).append(c1)
    if any(len(v) != 2 for v in nbrs.values()):
        return None
    start = links[0][0]
    cycle = [start]
    prev, cur = None, start
    while True:
        nxt = [c for c in nbrs[cur] if c != prev]
        if not nxt:
            return None
        prev, cur = cur, nxt[0]
        if cur == start:
            break
        cycle.append(cur)
        if len(cycle) > len(nbrs) + 1:
            return None
    return cycle
