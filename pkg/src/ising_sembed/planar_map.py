"""Planar maps with marked boundary arcs, and the primal/dual cell structure.

A map is given by straight-line vertex positions and an edge list; the
rotation system is recovered from the embedding by sorting half-edges
counterclockwise around each vertex.  Faces are orbits of
``next = ccw_successor(twin(h))``, which traverses bounded faces
counterclockwise, and the outer face is the unique orbit of negative
signed area.

Boundary arcs partition the outer cycle into "wired" stretches, across
which inner spins interact with a fixed outer spin, and "free" stretches
carrying no interaction.  The derived :class:`DualPair` holds

* vertex classes of the primal graph (free arcs merge into macro-vertices),
* dual nodes: one per bounded face plus one per wired boundary edge,
* one quadrilateral cell per interior edge and one boundary cell per
  boundary edge (wired cells keep the quad shape, free cells degenerate
  into triangles), plus corner triangles between consecutive wired edges,
* corners: incident (vertex, dual-node) pairs, the sites where the
  order-disorder observables live.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BoundaryError, EmbeddingError, GeometryError, InputError

WIRED = "wired"
FREE = "free"

_TIE_TOL = 1e-9


@dataclass(frozen=True)
class BoundaryArc:
    kind: str                 # "wired" or "free"
    edges: tuple[int, ...]    # edge ids, contiguous along the outer cycle


class PlanarMap:
    """Immutable straight-line embedded planar graph with boundary arcs."""

    def __init__(self, positions, edges, arcs, faces, outer_face,
                 outer_cycle_edges, he_of_edge_in_outer):
        self.positions = positions            # complex array, one per vertex
        self.edges = edges                    # tuple of (a, b) vertex pairs
        self.arcs = arcs                      # tuple of BoundaryArc
        self.faces = faces                    # tuple of half-edge orbits
        self.outer_face = outer_face
        self.outer_cycle_edges = outer_cycle_edges
        self._he_outer = he_of_edge_in_outer  # edge id -> half-edge on outer orbit
        self._edge_kind = self._classify_edges()
        self._left_face = self._left_faces()
        self._dual = None

    # -- basic counts -------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.positions)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_faces(self):
        return len(self.faces)

    # -- half-edge helpers --------------------------------------------
    # Half-edge 2*e runs edges[e][0] -> edges[e][1]; 2*e+1 is its twin.

    def he_tail(self, h):
        a, b = self.edges[h >> 1]
        return a if (h & 1) == 0 else b

    def he_head(self, h):
        a, b = self.edges[h >> 1]
        return b if (h & 1) == 0 else a

    def he_vec(self, h):
        return self.positions[self.he_head(h)] - self.positions[self.he_tail(h)]

    def _classify_edges(self):
        kind = ["interior"] * len(self.edges)
        for arc in self.arcs:
            for e in arc.edges:
                kind[e] = arc.kind
        return tuple(kind)

    def edge_kind(self, e):
        """'interior', 'wired' or 'free'."""
        return self._edge_kind[e]

    def _left_faces(self):
        left = [None] * (2 * len(self.edges))
        for fi, orbit in enumerate(self.faces):
            for h in orbit:
                left[h] = fi
        return tuple(left)

    def left_face(self, h):
        """Face lying on the left of half-edge h."""
        return self._left_face[h]

    def edge_faces(self, e):
        """(face left of a->b, face left of b->a) for edge e = (a, b)."""
        return self._left_face[2 * e], self._left_face[2 * e + 1]

    def boundary_edges(self):
        return tuple(e for e in range(self.n_edges)
                     if self._edge_kind[e] != "interior")

    def interior_edges(self):
        return tuple(e for e in range(self.n_edges)
                     if self._edge_kind[e] == "interior")

    def dual(self):
        """The cached DualPair of this map."""
        if self._dual is None:
            self._dual = build_dual_pair(self)
        return self._dual


# ---------------------------------------------------------------------------
# construction


def _cross(o, a, b):
    return (a.real - o.real) * (b.imag - o.imag) - (a.imag - o.imag) * (b.real - o.real)


def _segments_conflict(p1, p2, q1, q2, tol):
    """True if open segments (p1,p2), (q1,q2) intersect or overlap."""
    d1 = _cross(q1, q2, p1)
    d2 = _cross(q1, q2, p2)
    d3 = _cross(p1, p2, q1)
    d4 = _cross(p1, p2, q2)
    if ((d1 > tol and d2 < -tol) or (d1 < -tol and d2 > tol)) and \
       ((d3 > tol and d4 < -tol) or (d3 < -tol and d4 > tol)):
        return True
    # collinear overlap
    if abs(d1) <= tol and abs(d2) <= tol:
        def span(a, b):
            return (min(a.real, b.real), max(a.real, b.real),
                    min(a.imag, b.imag), max(a.imag, b.imag))
        ax0, ax1, ay0, ay1 = span(p1, p2)
        bx0, bx1, by0, by1 = span(q1, q2)
        if ax0 < bx1 - tol and bx0 < ax1 - tol:
            return True
        if ay0 < by1 - tol and by0 < ay1 - tol:
            return True
    return False


def _point_in_open_segment(p, a, b, tol):
    if abs(_cross(a, b, p)) > tol:
        return False
    dot = (p.real - a.real) * (b.real - a.real) + (p.imag - a.imag) * (b.imag - a.imag)
    ll = abs(b - a) ** 2
    return tol < dot < ll - tol


def build_map(positions, edges, boundary):
    """Build a validated PlanarMap.

    positions: sequence of complex numbers or (x, y) pairs.
    edges: sequence of (a, b) vertex index pairs.
    boundary: sequence of {"type": "wired"|"free", "edges": [edge ids]}
        covering the outer cycle; at least one wired arc is required.
    """
    pos = np.asarray([complex(p) if np.isscalar(p) or isinstance(p, complex)
                      else complex(p[0], p[1]) for p in positions])
    nv = len(pos)
    if nv < 2:
        raise InputError("need at least two vertices")
    edge_list = []
    seen = set()
    for a, b in edges:
        a, b = int(a), int(b)
        if not (0 <= a < nv and 0 <= b < nv):
            raise InputError(f"edge ({a},{b}) out of range")
        if a == b:
            raise InputError(f"self-loop at vertex {a}")
        key = (min(a, b), max(a, b))
        if key in seen:
            raise InputError(f"duplicate edge {key}")
        seen.add(key)
        edge_list.append((a, b))
    ne = len(edge_list)
    if ne == 0:
        raise InputError("need at least one edge")

    scale = max(np.abs(pos - pos.mean())) or 1.0
    tol = _TIE_TOL * scale * scale

    # distinct positions
    for i in range(nv):
        for j in range(i + 1, nv):
            if abs(pos[i] - pos[j]) < _TIE_TOL * scale:
                raise EmbeddingError(f"vertices {i} and {j} coincide")

    # proper straight-line embedding: no crossings, no vertex inside an edge
    for i in range(ne):
        a1, b1 = edge_list[i]
        for j in range(i + 1, ne):
            a2, b2 = edge_list[j]
            if {a1, b1} & {a2, b2}:
                continue
            if _segments_conflict(pos[a1], pos[b1], pos[a2], pos[b2], tol):
                raise EmbeddingError(f"edges {i} and {j} cross")
    for v in range(nv):
        for e, (a, b) in enumerate(edge_list):
            if v in (a, b):
                continue
            if _point_in_open_segment(pos[v], pos[a], pos[b], tol):
                raise EmbeddingError(f"vertex {v} lies on edge {e}")

    # rotation system: outgoing half-edges sorted ccw by angle
    out = [[] for _ in range(nv)]
    for e, (a, b) in enumerate(edge_list):
        out[a].append(2 * e)
        out[b].append(2 * e + 1)

    def he_angle(h):
        e, d = h >> 1, h & 1
        a, b = edge_list[e]
        vec = pos[b] - pos[a] if d == 0 else pos[a] - pos[b]
        return math.atan2(vec.imag, vec.real)

    # cw_prev-to-face rule: the half-edge after h in its left face starts at
    # head(h) and is the clockwise predecessor of twin(h) around that vertex
    cw_next = {}
    for v in range(nv):
        hs = sorted(out[v], key=he_angle)
        for k in range(len(hs)):
            a0 = he_angle(hs[k])
            a1 = he_angle(hs[(k + 1) % len(hs)])
            if len(hs) > 1 and abs((a1 - a0) % (2 * math.pi)) < _TIE_TOL:
                raise EmbeddingError(
                    f"angular tie among edges at vertex {v}")
        for k, h in enumerate(hs):
            cw_next[h] = hs[(k - 1) % len(hs)]

    # connectivity
    seen_v = {0}
    stack = [0]
    adj = [[] for _ in range(nv)]
    for a, b in edge_list:
        adj[a].append(b)
        adj[b].append(a)
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if w not in seen_v:
                seen_v.add(w)
                stack.append(w)
    if len(seen_v) != nv:
        raise InputError("graph is not connected")

    # face orbits of h -> cw_next[twin(h)]; bounded faces come out ccw
    visited = [False] * (2 * ne)
    faces = []
    for h0 in range(2 * ne):
        if visited[h0]:
            continue
        orbit = []
        h = h0
        while not visited[h]:
            visited[h] = True
            orbit.append(h)
            h = cw_next[h ^ 1]
        faces.append(tuple(orbit))
    if nv - ne + len(faces) != 2:
        raise EmbeddingError("rotation system is not planar (Euler check failed)")

    # no bridges: a face orbit must not use both half-edges of one edge
    for orbit in faces:
        used = set()
        for h in orbit:
            if (h >> 1) in used:
                raise EmbeddingError(f"edge {h >> 1} is a bridge")
            used.add(h >> 1)

    def orbit_area(orbit):
        s = 0.0
        for h in orbit:
            e, d = h >> 1, h & 1
            a, b = edge_list[e]
            if d:
                a, b = b, a
            s += pos[a].real * pos[b].imag - pos[b].real * pos[a].imag
        return 0.5 * s

    areas = [orbit_area(o) for o in faces]
    outer = int(np.argmin(areas))
    if areas[outer] >= 0:
        raise EmbeddingError("no outer face found")

    # outer cycle, as edge ids in orbit order
    outer_cycle = tuple(h >> 1 for h in faces[outer])
    he_outer = {h >> 1: h for h in faces[outer]}

    arcs = _validate_arcs(boundary, outer_cycle, ne)

    return PlanarMap(pos, tuple(edge_list), arcs, tuple(faces), outer,
                     outer_cycle, he_outer)


def _validate_arcs(boundary, outer_cycle, ne):
    if not boundary:
        raise BoundaryError("boundary arc specification is empty")
    n = len(outer_cycle)
    position = {}
    for i, e in enumerate(outer_cycle):
        position.setdefault(e, i)
    arcs = []
    covered = []
    for spec in boundary:
        kind = spec["type"] if isinstance(spec, dict) else spec[0]
        arc_edges = spec["edges"] if isinstance(spec, dict) else spec[1]
        if kind not in (WIRED, FREE):
            raise BoundaryError(f"unknown arc type {kind!r}")
        arc_edges = tuple(int(e) for e in arc_edges)
        if not arc_edges:
            raise BoundaryError("empty boundary arc")
        for e in arc_edges:
            if not (0 <= e < ne):
                raise BoundaryError(f"arc edge {e} out of range")
            if e not in position:
                raise BoundaryError(f"arc edge {e} is not on the outer face")
        idx = sorted(position[e] for e in arc_edges)
        # contiguity along the cyclic outer order (runs may wrap)
        gaps = sum(1 for k in range(len(idx))
                   if (idx[(k + 1) % len(idx)] - idx[k]) % n != 1)
        if len(idx) < n and gaps != 1:
            raise BoundaryError(f"arc {arc_edges} is not contiguous on the outer cycle")
        arcs.append(BoundaryArc(kind, arc_edges))
        covered.extend(arc_edges)
    if len(covered) != len(set(covered)):
        raise BoundaryError("boundary arcs overlap")
    if set(covered) != set(outer_cycle):
        missing = set(outer_cycle) - set(covered)
        raise BoundaryError(f"boundary edges {sorted(missing)} not covered by arcs")
    if not any(a.kind == WIRED for a in arcs):
        raise BoundaryError("at least one wired arc is required")
    return tuple(arcs)


# ---------------------------------------------------------------------------
# dual pair


@dataclass(frozen=True)
class Corner:
    id: int
    v: int          # original vertex id
    u: int          # dual node id
    pos: complex


@dataclass(frozen=True)
class Cell:
    """A quad or boundary cell of the double graph.

    kind: "interior" and "wired_edge" cells are quad shaped with vertices
    (vb0, vc0, vb1, vc1) in counterclockwise order and four corners in slot
    order c00, c10, c11, c01 where c_pq joins vb_p to vc_q.  "free_edge"
    cells are triangles with corners (c_a, c_b) sharing the inner dual node.
    "wired_corner" cells sit between consecutive wired boundary edges and
    hold the two corners at their shared vertex.
    """
    id: int
    kind: str
    edge: int | None
    vb: tuple[int, ...]
    vc: tuple[int, ...]
    corners: tuple[int, ...]


def _circumcenter(points):
    """Least-squares circumcenter and the relative radius spread."""
    pts = np.asarray(points)
    if len(pts) < 3:
        c = pts.mean()
        return c, 0.0
    p0 = pts[0]
    rest = pts[1:]
    A = np.column_stack([2.0 * (rest.real - p0.real), 2.0 * (rest.imag - p0.imag)])
    rhs = (np.abs(rest) ** 2 - abs(p0) ** 2)
    sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    c = complex(sol[0], sol[1])
    radii = np.abs(pts - c)
    spread = (radii.max() - radii.min()) / max(radii.mean(), 1e-300)
    return c, spread


def _reflect(p, a, b):
    """Reflection of point p across the line through a, b."""
    d = (b - a) / abs(b - a)
    return a + d * np.conj((p - a) / d)


def _polygon_centroid(poly):
    area = 0.0
    cx = 0.0 + 0.0j
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        w = a.real * b.imag - b.real * a.imag
        area += w
        cx += (a + b) * w
    if abs(area) < 1e-300:
        return poly.mean()
    return cx / (3.0 * area)


def _strictly_inside(p, poly, margin=1e-6):
    """Winding-number containment, with a clearance margin off every side."""
    n = len(poly)
    scale = max(abs(q - p) for q in poly)
    wind = 0.0
    for i in range(n):
        a, b = poly[i] - p, poly[(i + 1) % n] - p
        if abs(_cross(0j, a, b)) < margin * scale * abs(b - a):
            if (a.real * b.real + a.imag * b.imag) < 0:
                return False  # too close to the side
        wind += math.atan2(_cross(0j, a, b),
                           a.real * b.real + a.imag * b.imag)
    return abs(wind) > math.pi


class DualPair:
    """Primal vertex classes, dual nodes, cells and corners of a map."""

    def __init__(self, m: PlanarMap):
        self.map = m
        pos = m.positions

        # dual nodes: bounded faces first, then one node per wired boundary
        # edge.  A face node sits at the circumcenter when the face is
        # concyclic and the circumcenter is interior (isoradial-style maps);
        # otherwise at the centroid, so corner chords always wind once
        # around the node.
        self.face_node = {}
        node_pos = []
        for fi in range(m.n_faces):
            if fi == m.outer_face:
                continue
            self.face_node[fi] = len(node_pos)
            cycle = [m.he_tail(h) for h in m.faces[fi]]
            poly = pos[cycle]
            c, spread = _circumcenter(poly)
            if spread > 1e-7 or not _strictly_inside(c, poly):
                c = _polygon_centroid(poly)
            node_pos.append(c)
        self.n_face_nodes = len(node_pos)

        self.wired_node = {}
        for e in range(m.n_edges):
            if m.edge_kind(e) != WIRED:
                continue
            a, b = m.edges[e]
            inner = self._inner_face(e)
            self.wired_node[e] = len(node_pos)
            node_pos.append(_reflect(node_pos[self.face_node[inner]],
                                     pos[a], pos[b]))
        self.node_pos = np.asarray(node_pos)
        self.n_nodes = len(node_pos)

        # primal classes: vertices of every free arc merge into one macro-vertex
        parent = list(range(m.n_vertices))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for arc in m.arcs:
            if arc.kind != FREE:
                continue
            for e in arc.edges:
                a, b = m.edges[e]
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
        roots = sorted({find(v) for v in range(m.n_vertices)})
        root_class = {r: i for i, r in enumerate(roots)}
        self.vertex_class = tuple(root_class[find(v)] for v in range(m.n_vertices))
        self.n_classes = len(roots)
        members = [[] for _ in roots]
        for v in range(m.n_vertices):
            members[self.vertex_class[v]].append(v)
        self.class_members = tuple(tuple(ms) for ms in members)
        self.class_pos = np.asarray([pos[list(ms)].mean() for ms in members])

        # corners and cells
        self._corner_index = {}
        self.corners: list[Corner] = []
        self.cells: list[Cell] = []

        for e in range(m.n_edges):
            kind = m.edge_kind(e)
            if kind == "interior":
                fl, fr = m.edge_faces(e)
                self._add_quad("interior", e, self.face_node[fl], self.face_node[fr])
            elif kind == WIRED:
                inner = self._inner_face(e)
                self._add_quad("wired_edge", e,
                               self.face_node[inner], self.wired_node[e])
            else:
                inner = self._inner_face(e)
                a, b = m.edges[e]
                ca = self._corner(a, self.face_node[inner])
                cb = self._corner(b, self.face_node[inner])
                self.cells.append(Cell(len(self.cells), "free_edge", e,
                                       (a, b), (self.face_node[inner],),
                                       (ca, cb)))

        # wired corner cells between consecutive wired boundary edges
        cyc = m.outer_cycle_edges
        n = len(cyc)
        for k in range(n):
            e1, e2 = cyc[k], cyc[(k + 1) % n]
            if m.edge_kind(e1) != WIRED or m.edge_kind(e2) != WIRED:
                continue
            shared = set(m.edges[e1]) & set(m.edges[e2])
            if len(shared) != 1:
                continue
            v = shared.pop()
            c1 = self._corner(v, self.wired_node[e1])
            c2 = self._corner(v, self.wired_node[e2])
            self.cells.append(Cell(len(self.cells), "wired_corner", None,
                                   (v,), (self.wired_node[e1], self.wired_node[e2]),
                                   (c1, c2)))

        self.quads = tuple(c for c in self.cells if c.kind == "interior")
        self.corner_pos = np.asarray([c.pos for c in self.corners])

        # cells containing each corner
        cells_of = [[] for _ in self.corners]
        for cell in self.cells:
            for c in cell.corners:
                cells_of[c].append(cell.id)
        self.corner_cells = tuple(tuple(cs) for cs in cells_of)

    # -- helpers ------------------------------------------------------

    def _inner_face(self, e):
        fl, fr = self.map.edge_faces(e)
        return fr if fl == self.map.outer_face else fl

    def _corner(self, v, u):
        key = (v, u)
        if key not in self._corner_index:
            cid = len(self.corners)
            p = 0.5 * (self.map.positions[v] + self.node_pos[u])
            self.corners.append(Corner(cid, v, u, p))
            self._corner_index[key] = cid
        return self._corner_index[key]

    def corner_id(self, v, u):
        return self._corner_index[(v, u)]

    def _add_quad(self, kind, e, u0, u1):
        m = self.map
        a, b = m.edges[e]
        v0, v1 = (a, b) if a < b else (b, a)
        pa, pb = m.positions[v0], m.positions[v1]
        q0, q1 = self.node_pos[u0], self.node_pos[u1]
        # counterclockwise cycle v0, u0, v1, u1
        area = _cross(pa, q0, pb) + _cross(pa, pb, q1)
        if abs(area) < 1e-12 * max(abs(pb - pa), 1e-300) ** 2:
            raise GeometryError(f"degenerate quad on edge {e}")
        if area < 0:
            u0, u1 = u1, u0
        c00 = self._corner(v0, u0)
        c10 = self._corner(v1, u0)
        c11 = self._corner(v1, u1)
        c01 = self._corner(v0, u1)
        self.cells.append(Cell(len(self.cells), kind, e, (v0, v1), (u0, u1),
                               (c00, c10, c11, c01)))

    def n_corners(self):
        return len(self.corners)

    def is_wired_node(self, u):
        return u >= self.n_face_nodes

    def interior_classes(self):
        """Classes not touching the boundary (all member vertices interior)."""
        boundary_v = set()
        for e in self.map.boundary_edges():
            boundary_v.update(self.map.edges[e])
        return tuple(c for c in range(self.n_classes)
                     if not any(v in boundary_v for v in self.class_members[c]))


def build_dual_pair(m: PlanarMap) -> DualPair:
    return DualPair(m)


# ---------------------------------------------------------------------------
# graph JSON


def map_to_json(m: PlanarMap, weights=None) -> dict:
    obj = {
        "vertices": [[p.real, p.imag] for p in m.positions],
        "edges": [[a, b] for a, b in m.edges],
        "boundary": [{"type": a.kind, "edges": list(a.edges)} for a in m.arcs],
    }
    if weights is not None:
        x = np.asarray(getattr(weights, "x", weights), dtype=float)
        obj["weights"] = [float(v) for v in x]
    return obj


def map_from_json(obj):
    """Parse the graph JSON interchange dict; returns (map, weights or None)."""
    if isinstance(obj, (str, Path)):
        text = Path(obj).read_text() if Path(str(obj)).exists() else str(obj)
        obj = json.loads(text)
    try:
        verts = obj["vertices"]
        edges = obj["edges"]
        boundary = obj["boundary"]
    except (KeyError, TypeError) as exc:
        raise InputError(f"graph JSON missing field: {exc}") from exc
    m = build_map(verts, edges, boundary)
    w = obj.get("weights")
    if w is not None:
        from .ising_enum import IsingWeights
        w = np.asarray(w, dtype=float)
        if w.shape != (m.n_edges,):
            raise InputError("weights length does not match edge count")
        w = IsingWeights.from_array(m, w)
    return m, w


def save_graph(path, m, weights=None):
    Path(path).write_text(json.dumps(map_to_json(m, weights), indent=1))


def load_graph(path):
    return map_from_json(json.loads(Path(path).read_text()))
