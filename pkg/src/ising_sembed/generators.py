"""Map generators: rectangular grids and random Delaunay maps.

Grids are indexed by face counts: an (nx, ny) grid has nx*ny square faces
and (nx+1)*(ny+1) vertices.  Boundary arcs are specified either as the
single keyword "wired" or as a list of (kind, count) runs that must add up
to the outer cycle length; runs start at the first bottom edge and follow
the outer cycle clockwise (bottom, right side, top, left side).
"""

from __future__ import annotations

import numpy as np

from .errors import BoundaryError, InputError
from .planar_map import PlanarMap, build_map


def _arcs_from_runs(cycle_edges, runs):
    n = len(cycle_edges)
    if runs == "wired":
        return [{"type": "wired", "edges": list(cycle_edges)}]
    total = sum(c for _, c in runs)
    if total != n:
        raise BoundaryError(f"arc runs cover {total} of {n} outer edges")
    arcs = []
    k = 0
    for kind, count in runs:
        arcs.append({"type": kind, "edges": [cycle_edges[(k + i) % n]
                                             for i in range(count)]})
        k += count
    return arcs


def square_grid(nx, ny, delta=1.0, boundary="wired"):
    """Grid of nx by ny unit-square faces scaled by delta."""
    if nx < 1 or ny < 1:
        raise InputError("grid needs at least one face in each direction")

    def vid(i, j):
        return j * (nx + 1) + i

    pos = [delta * complex(i, j) for j in range(ny + 1) for i in range(nx + 1)]
    edges = []
    for j in range(ny + 1):
        for i in range(nx):
            edges.append((vid(i, j), vid(i + 1, j)))
    for j in range(ny):
        for i in range(nx + 1):
            edges.append((vid(i, j), vid(i, j + 1)))
    eidx = {tuple(sorted(e)): k for k, e in enumerate(edges)}

    cyc = []
    for i in range(nx):
        cyc.append(eidx[tuple(sorted((vid(i, 0), vid(i + 1, 0))))])
    for j in range(ny):
        cyc.append(eidx[tuple(sorted((vid(nx, j), vid(nx, j + 1))))])
    for i in range(nx, 0, -1):
        cyc.append(eidx[tuple(sorted((vid(i, ny), vid(i - 1, ny))))])
    for j in range(ny, 0, -1):
        cyc.append(eidx[tuple(sorted((vid(0, j), vid(0, j - 1))))])

    return build_map(pos, edges, _arcs_from_runs(cyc, boundary))


def grid_face_node(m: PlanarMap, nx, i, j):
    """Dual node id of face (i, j) of a square grid, counting from the
    bottom-left face."""
    d = m.dual()
    # node nearest the face midpoint (i + .5, j + .5) in grid units
    p = m.positions[0] + (m.positions[1] - m.positions[0]) * (i + 0.5) \
        + (m.positions[nx + 1] - m.positions[0]) * (j + 0.5)
    return min(range(d.n_face_nodes), key=lambda k: abs(d.node_pos[k] - p))


def delaunay_map(n_points, rng, boundary_runs=None, min_angle=0.15):
    """Random Delaunay triangulation of points in a disk.

    boundary_runs: None for all wired, or a list of (kind, fraction) pairs
    splitting the hull cycle proportionally (fractions normalised; counts
    rounded, first run absorbs the remainder).  Retries fresh point sets
    until the embedding validates (angular ties, skinny triangles).
    """
    from scipy.spatial import Delaunay

    for attempt in range(80):
        r = np.sqrt(rng.uniform(0.15, 1.0, n_points))
        t = rng.uniform(0, 2 * np.pi, n_points)
        pts = np.column_stack([r * np.cos(t), r * np.sin(t)])
        tri = Delaunay(pts)
        edges = set()
        ok = True
        # reject skinny triangles (angular near-ties); accept progressively
        # worse shapes rather than looping forever on large point sets
        quality = min_angle * 0.8 ** attempt
        for simplex in tri.simplices:
            a, b, c = (pts[k] for k in simplex)
            sides = sorted([np.linalg.norm(a - b), np.linalg.norm(b - c),
                            np.linalg.norm(c - a)])
            ab, ac = b - a, c - a
            area = abs(ab[0] * ac[1] - ab[1] * ac[0]) / 2
            if area < quality * sides[2] ** 2 / 2:
                ok = False
                break
            for u, v in ((simplex[0], simplex[1]), (simplex[1], simplex[2]),
                         (simplex[2], simplex[0])):
                edges.add((min(u, v), max(u, v)))
        if not ok:
            continue
        edge_list = sorted(edges)
        eidx = {e: k for k, e in enumerate(edge_list)}
        # hull cycle in clockwise order, matching the outer face orbit
        hull = tri.convex_hull
        nbr = {}
        for u, v in hull:
            nbr.setdefault(u, []).append(v)
            nbr.setdefault(v, []).append(u)
        start = hull[0][0]
        cyc_v = [start]
        prev = None
        while True:
            cand = [w for w in nbr[cyc_v[-1]] if w != prev]
            if not cand:
                break
            prev = cyc_v[-1]
            cyc_v.append(cand[0])
            if cyc_v[-1] == start:
                break
        cyc_v = cyc_v[:-1]
        # orient clockwise (negative shoelace)
        area2 = sum(pts[cyc_v[i]][0] * pts[cyc_v[(i + 1) % len(cyc_v)]][1]
                    - pts[cyc_v[(i + 1) % len(cyc_v)]][0] * pts[cyc_v[i]][1]
                    for i in range(len(cyc_v)))
        if area2 > 0:
            cyc_v = cyc_v[::-1]
        cyc = [eidx[(min(cyc_v[i], cyc_v[(i + 1) % len(cyc_v)]),
                     max(cyc_v[i], cyc_v[(i + 1) % len(cyc_v)]))]
               for i in range(len(cyc_v))]

        if boundary_runs is None:
            runs = "wired"
        else:
            n = len(cyc)
            fracs = np.asarray([f for _, f in boundary_runs], dtype=float)
            counts = np.maximum(1, np.floor(fracs / fracs.sum() * n)).astype(int)
            counts[0] += n - counts.sum()
            if counts[0] < 1:
                continue
            runs = [(kind, int(c)) for (kind, _), c in zip(boundary_runs, counts)]
        try:
            return build_map([complex(*p) for p in pts], edge_list,
                             _arcs_from_runs(cyc, runs))
        except (InputError, BoundaryError):
            continue
    raise InputError("could not generate a valid Delaunay map")
