"""Three-term spinor machinery on the corner cover.

One identity drives this module: around a quad cell, the value at a
corner equals cos(theta) times the value at the neighbouring corner
across the shared primal vertex plus sin(theta) times the value across
the shared dual node, all three lifted consistently on the cover.  The
rest is bookkeeping around that line: residual checks, solving a cell
from partial data, gluing per-cell sign patterns of enumerated
correlators into one global sheet, the squared-increment potential on
the union graph Lambda, complex observables per quad, and the discrete
Cauchy-Riemann pair for isoradial embeddings.

Values may be real or complex; the relations are real-linear.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .covers import ZETA, DoubleCover, corner_chord, dirac_spinor
from .errors import (DegenerateSpinorError, DomainError, InputError,
                     NonIntegrableError)
from .planar_map import DualPair

# slot order around a quad cell is (c00, c10, c11, c01); the neighbour
# sharing the primal vertex sits at 3-i, the one sharing the dual node
# at i^1
_BSLOT = (3, 2, 1, 0)
_NSLOT = (1, 0, 3, 2)


def quad_cells(pair: DualPair):
    """Cells carrying the full three-term relation (interior and wired)."""
    return [c for c in pair.cells if c.kind in ("interior", "wired_edge")]


def cell_theta(weights, cell) -> float:
    return float(weights.theta[cell.edge])


def check_propagation(cover: DoubleCover, values, cell, theta) -> np.ndarray:
    """Residuals of the three-term relation at the four slots of a quad."""
    if len(cell.corners) != 4:
        raise InputError(f"cell {cell.id} is not a quad")
    v = [values[c] for c in cell.corners]
    co, si = math.cos(theta), math.sin(theta)
    out = []
    for i in range(4):
        b, n = _BSLOT[i], _NSLOT[i]
        ci = cell.corners[i]
        out.append(v[i]
                   - co * cover.sign(ci, cell.corners[b]) * v[b]
                   - si * cover.sign(ci, cell.corners[n]) * v[n])
    return np.array(out)


def all_residuals(cover: DoubleCover, weights, values) -> dict:
    return {cell.id: check_propagation(cover, values, cell,
                                       cell_theta(weights, cell))
            for cell in quad_cells(cover.pair)}


def boundary_residuals(cover: DoubleCover, values, cell) -> np.ndarray:
    """Two-term transport relations on boundary cells.

    Wired-corner cells behave as theta = 0 quads (the two corners share the
    primal vertex), free-arc cells as theta = pi/2 (shared dual node); in
    both cases the relation degenerates to equality under transport.
    """
    if cell.kind not in ("wired_corner", "free_edge"):
        raise InputError(f"cell {cell.id} is not a boundary cell")
    c1, c2 = cell.corners
    return np.array([values[c1] - cover.sign(c1, c2) * values[c2]])


def _solve_cell(cover, cell, theta, known):
    """Fill the quad from >= 2 known slot values; returns a 4-list.

    theta must be strictly inside (0, pi/2) so both coefficients are
    invertible.
    """
    co, si = math.cos(theta), math.sin(theta)
    if min(co, si) < 1e-12:
        raise DomainError(f"cell {cell.id}: theta pinned to the boundary "
                          "of (0, pi/2), cannot invert the relation")
    vals = dict(known)
    for _ in range(4):
        if len(vals) == 4:
            break
        for i in range(4):
            b, n = _BSLOT[i], _NSLOT[i]
            eb = cover.sign(cell.corners[i], cell.corners[b])
            en = cover.sign(cell.corners[i], cell.corners[n])
            if i not in vals and b in vals and n in vals:
                vals[i] = co * eb * vals[b] + si * en * vals[n]
            elif i in vals and b in vals and n not in vals:
                vals[n] = en * (vals[i] - co * eb * vals[b]) / si
            elif i in vals and n in vals and b not in vals:
                vals[b] = eb * (vals[i] - si * en * vals[n]) / co
    if len(vals) < 4:
        raise InputError("need two known corners of the quad")
    return [vals[i] for i in range(4)]


def propagate(cover: DoubleCover, cell, theta, sources: dict, target: int):
    """Value at the target slot forced by two known slot values."""
    if len(sources) < 2:
        raise InputError("propagation needs two source corners")
    return _solve_cell(cover, cell, theta, sources)[target]


def extend_spinor(cover: DoubleCover, weights, seeds: dict,
                  tol: float = 1e-9) -> np.ndarray:
    """Grow a spinor from seed corner values across quad cells.

    seeds maps corner ids to values.  Cells acquiring two known corners
    are solved; cells that end up over-determined are checked and a loop
    mismatch above tol raises NonIntegrableError.  Unreached corners
    stay NaN.
    """
    pair = cover.pair
    values = np.full(pair.n_corners(), np.nan, dtype=complex)
    for c, v in seeds.items():
        values[c] = v
    cells = quad_cells(pair)
    scale = max((abs(v) for v in seeds.values()), default=1.0) or 1.0
    progress = True
    while progress:
        progress = False
        for cell in cells:
            kn = {i: values[c] for i, c in enumerate(cell.corners)
                  if not np.isnan(values[c])}
            if len(kn) < 2 or len(kn) == 4:
                continue
            sol = _solve_cell(cover, cell, cell_theta(weights, cell), kn)
            for i, c in enumerate(cell.corners):
                values[c] = sol[i]
            progress = True
    worst = 0.0
    for cell in cells:
        if all(not np.isnan(values[c]) for c in cell.corners):
            r = np.abs(check_propagation(
                cover, values, cell, cell_theta(weights, cell))).max()
            worst = max(worst, r)
    if worst > tol * scale:
        raise NonIntegrableError(
            f"extension is inconsistent, loop residual {worst:.3e}")
    if np.isrealobj(np.array(list(seeds.values()))):
        return values.real
    return values


def propagation_matrix(cover: DoubleCover, weights, cells=None):
    """Sparse real matrix whose rows are the quad residual functionals."""
    from scipy.sparse import csr_matrix
    pair = cover.pair
    if cells is None:
        cells = quad_cells(pair)
    rows, cols, data = [], [], []
    for r, cell in enumerate(cells):
        th = cell_theta(weights, cell)
        co, si = math.cos(th), math.sin(th)
        for i in range(4):
            b, n = _BSLOT[i], _NSLOT[i]
            ci = cell.corners[i]
            rows += [4 * r + i] * 3
            cols += [ci, cell.corners[b], cell.corners[n]]
            data += [1.0,
                     -co * cover.sign(ci, cell.corners[b]),
                     -si * cover.sign(ci, cell.corners[n])]
    return csr_matrix((data, (rows, cols)),
                      shape=(4 * len(cells), pair.n_corners()))


# ---------------------------------------------------------------------------
# gluing enumerated correlators onto one sheet

def resolve_sheet_signs(cover: DoubleCover, weights, raw,
                        rtol: float = 1e-6):
    """Flip signs of per-corner magnitudes so propagation holds globally.

    Correlator extraction yields each corner value on its own arbitrary
    sheet.  Within one quad the admissible sign pattern is fixed (up to a
    cell flip) by the three-term relation, and shared corners glue the
    cells.  Returns (signed values, report); inconsistent magnitudes or
    an unglueable cycle raise DegenerateSpinorError.  The report counts
    cells whose pattern was ambiguous (zero values), and carries the
    final worst residual over all quads.
    """
    pair = cover.pair
    raw = np.asarray(raw, dtype=float)
    scale = max(float(np.abs(raw).max()), 1e-300)
    tol = rtol * scale
    cells = quad_cells(pair)

    patterns = []
    ambiguous = 0
    for cell in cells:
        th = cell_theta(weights, cell)
        vals = raw[list(cell.corners)]
        good = []
        for bits in range(8):
            sg = np.array([1.0] + [(-1.0) ** ((bits >> k) & 1)
                                   for k in range(3)])
            r = np.abs(check_propagation(
                cover, dict(zip(cell.corners, sg * vals)), cell, th)).max()
            if r <= tol:
                good.append(sg)
        if not good:
            raise DegenerateSpinorError(
                f"cell {cell.id}: no sign pattern satisfies propagation "
                f"within {tol:.3e}")
        if len(good) > 1:
            ambiguous += 1
        patterns.append(good)

    # glue cells through shared corners
    sign = np.zeros(pair.n_corners())
    cells_of = {}
    for k, cell in enumerate(cells):
        for c in cell.corners:
            cells_of.setdefault(c, []).append(k)
    done = [False] * len(cells)

    def apply(k, sg):
        cell = cells[k]
        for i, c in enumerate(cell.corners):
            want = sg[i] if abs(raw[c]) > tol else (sign[c] or 1.0)
            if sign[c] == 0.0:
                sign[c] = want
            elif sign[c] != want and abs(raw[c]) > tol:
                raise DegenerateSpinorError(
                    f"corner {c}: cells force opposite signs")
        done[k] = True

    for k0 in range(len(cells)):
        if done[k0]:
            continue
        apply(k0, patterns[k0][0])
        queue = [k0]
        while queue:
            k = queue.pop()
            for c in cells[k].corners:
                for k2 in cells_of[c]:
                    if done[k2]:
                        continue
                    anchored = [(i, cc) for i, cc in enumerate(cells[k2].corners)
                                if sign[cc] != 0.0 and abs(raw[cc]) > tol]
                    if not anchored:
                        continue
                    fit = None
                    for sg in patterns[k2]:
                        for f in (1.0, -1.0):
                            if all(f * sg[i] == sign[cc] for i, cc in anchored):
                                fit = f * sg
                                break
                        if fit is not None:
                            break
                    if fit is None:
                        raise DegenerateSpinorError(
                            f"cell {cells[k2].id} cannot be glued to its "
                            "neighbours on one sheet")
                    apply(k2, fit)
                    queue.append(k2)

    sign[sign == 0.0] = 1.0
    values = sign * raw
    worst = max((np.abs(check_propagation(
        cover, values, cell, cell_theta(weights, cell))).max()
        for cell in cells), default=0.0)
    return values, {"max_residual": worst, "ambiguous_cells": ambiguous,
                    "scale": scale}


# ---------------------------------------------------------------------------
# the squared-increment potential on Lambda = vertices + nodes

@dataclass
class HFunction:
    """Potential with increment value(corner)^2 across each corner chord.

    Keys are ('b', vertex id) for primal vertices and ('w', node id) for
    dual nodes; the bullet side sits above the circ side by a square.
    """
    values: dict
    base: tuple
    base_value: float
    max_loop_residual: float

    def bullet(self, v):
        return self.values[("b", v)]

    def circ(self, u):
        return self.values[("w", u)]


def integrate_HF(pair: DualPair, values, base=None, base_value=0.0,
                 tol: float = 1e-9) -> HFunction:
    """Integrate corner squares into a potential on the union graph.

    Every corner (v, u) imposes H('b', v) - H('w', u) = value^2; the
    relations close around cycles exactly when the input satisfies
    propagation.  Closure failure above tol (relative to the square
    scale) raises NonIntegrableError.
    """
    if base is None:
        wired = [e for a in pair.map.arcs if a.kind == "wired"
                 for e in a.edges]
        base = ("w", pair.wired_node[wired[0]])
    sq = {c.id: values[c.id] ** 2 for c in pair.corners}
    scale = max(max((abs(s) for s in sq.values()), default=1.0), 1e-300)

    adj = {}
    for c in pair.corners:
        adj.setdefault(("b", c.v), []).append((("w", c.u), -sq[c.id]))
        adj.setdefault(("w", c.u), []).append((("b", c.v), +sq[c.id]))
    if base not in adj:
        raise InputError(f"base point {base!r} is not a corner endpoint")
    H = {base: base_value}
    queue = [base]
    while queue:
        k = queue.pop()
        for k2, inc in adj[k]:
            if k2 not in H:
                H[k2] = H[k] + inc
                queue.append(k2)
    worst = max(abs(H[("b", c.v)] - H[("w", c.u)] - sq[c.id])
                for c in pair.corners)
    if worst > tol * scale:
        raise NonIntegrableError(
            f"corner squares do not close up, loop residual {worst:.3e}")
    return HFunction(H, base, base_value, float(worst))


# ---------------------------------------------------------------------------
# complex observables on quads

@dataclass
class DiamondObservable:
    """Per-quad complex values eta * value summed over a diagonal.

    Both diagonals are evaluated (values from the 00/11 corners, alt
    from 01/10); everything is anchored at the cell's first corner, with
    lifts within a cell related by branch-cut parities alone (the Dirac
    factor absorbs the geometric part of the transport).
    """
    values: dict
    alt: dict
    cell_corners: dict
    anchor_signs: dict
    eta: np.ndarray

    def anchored(self, cell_id, corner):
        """F of the quad re-anchored at one of its own corners."""
        s = dict(zip(self.cell_corners[cell_id],
                     self.anchor_signs[cell_id]))[corner]
        return s * self.values[cell_id]

    def projection(self, cell_id, corner):
        """Component of the quad value along the corner's Dirac line."""
        f = self.anchored(cell_id, corner)
        e = self.eta[corner]
        return e * (np.conj(e) * f).real


def complex_observable(pair: DualPair, cover: DoubleCover, values,
                       zeta: complex = ZETA) -> DiamondObservable:
    eta = dirac_spinor(pair, zeta)
    out, alt, cc, anch = {}, {}, {}, {}
    for cell in quad_cells(pair):
        c0, c1, c2, c3 = cell.corners
        s1 = cover.cut_sign(c0, c1)
        s2 = s1 * cover.cut_sign(c1, c2)
        s3 = cover.cut_sign(c0, c3)
        out[cell.id] = eta[c0] * values[c0] + s2 * eta[c2] * values[c2]
        alt[cell.id] = s1 * eta[c1] * values[c1] + s3 * eta[c3] * values[c3]
        cc[cell.id] = cell.corners
        anch[cell.id] = (1.0, s1, s2, s3)
    return DiamondObservable(out, alt, cc, anch, eta)


# ---------------------------------------------------------------------------
# discrete Cauchy-Riemann pair (isoradial embeddings only)

def isoradial_delta(pair: DualPair, tol: float = 1e-6) -> float:
    """Common corner chord length; DomainError if the map is not isoradial."""
    r = np.array([abs(corner_chord(pair, c.id)) for c in pair.corners])
    d = float(r.mean())
    if r.max() - r.min() > tol * d:
        raise DomainError("map is not isoradial: corner chords range "
                          f"{r.min():.6g}..{r.max():.6g}")
    return d


def _h_values(H):
    return H.values if isinstance(H, HFunction) else H


def d_lambda(pair: DualPair, H) -> dict:
    """Average of the two diagonal difference quotients, per quad."""
    isoradial_delta(pair)
    hv = _h_values(H)
    out = {}
    for cell in quad_cells(pair):
        vb0, vb1 = cell.vb
        vc0, vc1 = cell.vc
        db = pair.map.positions[vb1] - pair.map.positions[vb0]
        dc = pair.node_pos[vc1] - pair.node_pos[vc0]
        out[cell.id] = 0.5 * (
            (hv[("b", vb1)] - hv[("b", vb0)]) / db
            + (hv[("w", vc1)] - hv[("w", vc0)]) / dc)
    return out


def quad_area(pair: DualPair, cell) -> float:
    vb0, vb1 = cell.vb
    vc0, vc1 = cell.vc
    return 0.5 * abs(pair.map.positions[vb1] - pair.map.positions[vb0]) \
        * abs(pair.node_pos[vc1] - pair.node_pos[vc0])


def d_lambda_star(pair: DualPair, Fq: dict) -> dict:
    """Adjoint of d_lambda with quads carrying their rhombus area.

    Summing all sites against H reproduces the area-weighted pairing of
    d_lambda(H) with F exactly.  The per-quad terms area/conj(diagonal)
    reduce to the opposite-colour diagonal, so the value at a full-fan
    site is the contour integral of F along the surrounding polygon; it
    vanishes on holomorphic data.  The plain unweighted adjoint does not
    vanish once rhombus shapes vary around a site.  Keys match HFunction;
    boundary keys carry partial fans.
    """
    isoradial_delta(pair)
    out = {}
    for cell in quad_cells(pair):
        if cell.id not in Fq:
            continue
        f = quad_area(pair, cell) * Fq[cell.id]
        vb0, vb1 = cell.vb
        vc0, vc1 = cell.vc
        pb0, pb1 = pair.map.positions[vb0], pair.map.positions[vb1]
        qc0, qc1 = pair.node_pos[vc0], pair.node_pos[vc1]
        out[("b", vb1)] = out.get(("b", vb1), 0.0) + 0.5 * f / np.conj(pb1 - pb0)
        out[("b", vb0)] = out.get(("b", vb0), 0.0) + 0.5 * f / np.conj(pb0 - pb1)
        out[("w", vc1)] = out.get(("w", vc1), 0.0) + 0.5 * f / np.conj(qc1 - qc0)
        out[("w", vc0)] = out.get(("w", vc0), 0.0) + 0.5 * f / np.conj(qc0 - qc1)
    return out


def full_fan_keys(pair: DualPair) -> set:
    """Union-graph sites whose quad fan closes (interior sites)."""
    m = pair.map
    boundary_v = set()
    for e in m.boundary_edges():
        a, b = m.edges[e]
        boundary_v.update((a, b))
    keys = {("b", v) for v in range(m.n_vertices) if v not in boundary_v}
    for fi, u in pair.face_node.items():
        edges = {h >> 1 for h in m.faces[fi]}
        if all(m.edge_kind(e) != "free" for e in edges):
            keys.add(("w", u))
    return keys


def observable_divergence(pair: DualPair, obs: DiamondObservable):
    """Area-weighted fan contour of the quad observable at every site.

    Each fan is walked in cyclic order and re-anchored onto one local
    branch by matching anchor parities through the corners at the site,
    so branch cuts crossing the fan elsewhere in the plane do not leak
    in.  Returns (div, closure): div[key] vanishes at interior sites
    away from branch points when the underlying spinor propagates;
    closure[key] is +1 when the local branch closes around the site,
    -1 exactly at a branch point, and None for open boundary fans.
    """
    fans = {}
    for cell in quad_cells(pair):
        if cell.id not in obs.values:
            continue
        for v in cell.vb:
            fans.setdefault(("b", v), []).append(cell)
        for u in cell.vc:
            fans.setdefault(("w", u), []).append(cell)

    div, closure = {}, {}
    for key, cells in fans.items():
        kind, site = key
        center = (pair.map.positions[site] if kind == "b"
                  else pair.node_pos[site])
        ang = [float(np.angle(sum(pair.corners[c].pos for c in cl.corners) / 4
                              - center)) for cl in cells]
        order = np.argsort(ang)
        # start the walk after the widest angular gap so an open fan is
        # chained contiguously (the gap of a closed fan is immaterial)
        if len(cells) > 1:
            sa = np.array([ang[i] for i in order])
            gaps = np.diff(np.concatenate([sa, [sa[0] + 2.0 * math.pi]]))
            order = np.roll(order, -(int(np.argmax(gaps)) + 1))
        cells = [cells[i] for i in order]

        def site_corner(cl1, cl2):
            for c in set(cl1.corners) & set(cl2.corners):
                cc = pair.corners[c]
                if (cc.v if kind == "b" else cc.u) == site:
                    return c
            return None

        n_site_corners = sum(
            1 for cl in cells for c in cl.corners
            if (pair.corners[c].v if kind == "b" else pair.corners[c].u)
            == site) // 2
        closed = len(cells) > 1 and n_site_corners == len(cells)

        sgn = {cells[0].id: 1.0}
        wrap = None
        for i in range(1, len(cells) + (1 if closed else 0)):
            z0, z1 = cells[i - 1], cells[i % len(cells)]
            c = site_corner(z0, z1)
            if c is None or z0.id not in sgn:
                sgn.setdefault(z1.id, 1.0)
                continue
            a0 = dict(zip(z0.corners, obs.anchor_signs[z0.id]))[c]
            a1 = dict(zip(z1.corners, obs.anchor_signs[z1.id]))[c]
            rel = a0 * a1 * sgn[z0.id]
            if z1.id in sgn:
                wrap = rel * sgn[z1.id]
            else:
                sgn[z1.id] = rel

        tot = 0.0
        for cl in cells:
            f = sgn.get(cl.id, 1.0) * quad_area(pair, cl) * obs.values[cl.id]
            if kind == "b":
                vb0, vb1 = cl.vb
                d = (pair.map.positions[site]
                     - pair.map.positions[vb1 if site == vb0 else vb0])
            else:
                vc0, vc1 = cl.vc
                d = (pair.node_pos[site]
                     - pair.node_pos[vc1 if site == vc0 else vc0])
            tot += 0.5 * f / np.conj(d)
        div[key] = tot
        closure[key] = wrap if closed else None
    return div, closure
