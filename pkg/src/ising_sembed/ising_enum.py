"""Exact even-subgraph enumeration: partition functions and correlators.

The low-temperature expansion writes the partition function as a sum over
even edge subsets (domain-wall collections) C with weight x(C) = prod of
x_e over C.  We enumerate the cycle space of the positive-weight subgraph:
even subsets are XOR combinations of fundamental cycles of a spanning
forest, so a map of cycle rank k costs 2^k regardless of edge count.
Everything else is a decorated version of the same sum:

* spins sigma_u pick up (-1)^(number of walls crossed by a fixed dual
  path from u to its mate or to the wired boundary),
* disorders mu_v shift the sum to subsets with odd degree at v, realised
  as a fixed base subset C0 (tree paths pairing the odd vertices) XORed
  through the cycle space,
* corner insertions chi_c combine both at v(c), u(c).

The choices of tree paths and dual paths fix a sheet of the relevant
double cover; they are deterministic and reported alongside values.

Vertices on free boundary arcs form a single macro-vertex class.  A
disorder at such a class is computed at the class representative (its
lowest vertex id); summing over wall configurations odd at the
representative and even at the other members is exactly equivalent to the
contracted-graph convention because completions along the free arc carry
weight one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import (DegenerateLineError, InputError, ShapeError, SizeError)
from .planar_map import FREE, WIRED, DualPair, PlanarMap

MAX_RANK = 25
_CHUNK = 1 << 16


# ---------------------------------------------------------------------------
# weights


@dataclass(frozen=True)
class IsingWeights:
    """Per-edge weights x_e = exp(-2 beta J_e) in [0, 1].

    Free boundary edges carry no interaction, x = 1.  Wired boundary edges
    couple the boundary vertices to the fixed outer spin with an ordinary
    weight.  theta_e = 2*arctan(x_e) is the associated half-angle; the
    Kramers-Wannier dual weight has theta* = pi/2 - theta.
    """
    x: np.ndarray

    @staticmethod
    def from_array(m: PlanarMap, x) -> "IsingWeights":
        x = np.asarray(x, dtype=float).copy()
        if x.shape != (m.n_edges,):
            raise ShapeError(f"need {m.n_edges} weights, got {x.shape}")
        if np.any(x < -1e-15) or np.any(x > 1 + 1e-12):
            raise InputError("weights must lie in [0, 1]")
        x = np.clip(x, 0.0, 1.0)
        for e in range(m.n_edges):
            if m.edge_kind(e) == FREE:
                if abs(x[e] - 1.0) > 1e-9:
                    raise InputError(
                        f"free boundary edge {e} must have weight 1, got {x[e]}")
                x[e] = 1.0
        return IsingWeights(x)

    @staticmethod
    def uniform(m: PlanarMap, value: float) -> "IsingWeights":
        x = np.full(m.n_edges, float(value))
        for e in range(m.n_edges):
            if m.edge_kind(e) == FREE:
                x[e] = 1.0
        return IsingWeights.from_array(m, x)

    @property
    def theta(self) -> np.ndarray:
        return 2.0 * np.arctan(self.x)

    def dual(self, m: PlanarMap) -> "IsingWeights":
        """Kramers-Wannier dual: theta -> pi/2 - theta, x -> (1-x)/(1+x)."""
        return IsingWeights.from_array(m, (1.0 - self.x) / (1.0 + self.x))


CRITICAL_X = math.sqrt(2.0) - 1.0


# ---------------------------------------------------------------------------
# enumeration engine


class Enumerator:
    """Cycle-space enumeration over even subgraphs of the x > 0 subgraph."""

    def __init__(self, m: PlanarMap, x: np.ndarray, max_rank: int = MAX_RANK):
        self.m = m
        self.x = x
        self.active = np.flatnonzero(x > 0.0)
        self.pos_of_edge = {int(e): i for i, e in enumerate(self.active)}
        na = len(self.active)
        nv = m.n_vertices

        adj = [[] for _ in range(nv)]
        for i, e in enumerate(self.active):
            a, b = m.edges[e]
            adj[a].append((b, i))
            adj[b].append((a, i))
        for lst in adj:
            lst.sort()

        self.comp = np.full(nv, -1, dtype=int)
        self.path = np.zeros((nv, na), dtype=bool)
        in_tree = np.zeros(na, dtype=bool)
        ncomp = 0
        for root in range(nv):
            if self.comp[root] >= 0:
                continue
            self.comp[root] = ncomp
            queue = [root]
            while queue:
                v = queue.pop(0)
                for w, i in adj[v]:
                    if self.comp[w] >= 0:
                        continue
                    self.comp[w] = ncomp
                    self.path[w] = self.path[v]
                    self.path[w, i] = True
                    in_tree[i] = True
                    queue.append(w)
            ncomp += 1
        self.n_components = ncomp

        basis = []
        for i in np.flatnonzero(~in_tree):
            a, b = m.edges[self.active[i]]
            loop = self.path[a] ^ self.path[b]
            loop[i] = True
            basis.append(loop)
        self.rank = len(basis)
        if self.rank > max_rank:
            raise SizeError(
                f"cycle rank {self.rank} exceeds enumeration budget {max_rank}")
        self.basis = np.asarray(basis, dtype=bool).reshape(self.rank, na)
        with np.errstate(divide="ignore"):
            self.logx = np.log(x[self.active])

    # -- iteration ----------------------------------------------------

    def chunks(self, chunk=_CHUNK):
        """Yield boolean config blocks (rows are even subgraphs, columns
        active-edge membership)."""
        na = len(self.active)
        k = self.rank
        if k == 0:
            yield np.zeros((1, na), dtype=bool)
            return
        B = self.basis.astype(np.float32)
        total = 1 << k
        step = min(chunk, total)
        ks = np.arange(k)
        for start in range(0, total, step):
            n = min(step, total - start)
            bits = ((np.arange(start, start + n)[:, None] >> ks[None, :]) & 1)
            C = (bits.astype(np.float32) @ B) % 2.0
            yield C.astype(bool)

    def gram(self, expo, signs, chunk=_CHUNK):
        """Matrix of decorated sums G[p, s] = sum_C exp(C . expo[p]) * (-1)^(C . signs[s]).

        expo: (P, na) float64; signs: (S, na) bool.
        """
        expo = np.atleast_2d(np.asarray(expo, dtype=np.float64))
        signs = np.atleast_2d(np.asarray(signs, dtype=np.float64))
        out = np.zeros((expo.shape[0], signs.shape[0]))
        for C in self.chunks(chunk):
            Cf = C.astype(np.float64)
            W = np.exp(Cf @ expo.T)
            par = (Cf @ signs.T) % 2.0
            out += W.T @ (1.0 - 2.0 * par)
        return out

    def gram_diag(self, expo, signs, chunk=_CHUNK):
        """Diagonal of gram for paired (expo[i], signs[i]) rows."""
        expo = np.atleast_2d(np.asarray(expo, dtype=np.float64))
        signs = np.atleast_2d(np.asarray(signs, dtype=np.float64))
        if expo.shape[0] != signs.shape[0]:
            raise ShapeError("gram_diag needs matched row counts")
        out = np.zeros(expo.shape[0])
        for C in self.chunks(chunk):
            Cf = C.astype(np.float64)
            W = np.exp(Cf @ expo.T)
            par = (Cf @ signs.T) % 2.0
            out += np.einsum("np,np->p", W, 1.0 - 2.0 * par)
        return out

    def plain_sum(self, extra_mask=None):
        """Z, or the shifted sum over C0 xor cycle space if a base subset
        mask (on active positions) is given."""
        l = self.logx.copy()
        const = 0.0
        if extra_mask is not None:
            l[extra_mask] = -l[extra_mask]
            const = float(self.logx[extra_mask].sum())
        return math.exp(const) * float(self.gram([l], [np.zeros_like(l)])[0, 0])

    # -- odd-degree bases ---------------------------------------------

    def pairing_mask(self, odd_vertices):
        """Base subset with odd degree exactly at the given vertices, as a
        mask over active positions, or None when no such subset exists
        (odd count in some component)."""
        count = {}
        for v in odd_vertices:
            count[self.comp[v]] = count.get(self.comp[v], 0) + 1
        if any(c % 2 for c in count.values()):
            return None
        mask = np.zeros(len(self.active), dtype=bool)
        for v in odd_vertices:
            mask ^= self.path[v]
        return mask

    def line_mask(self, vertex_path):
        """Mask of the edges along an explicit vertex walk; raises if a
        step is not an edge or runs through a zero-weight edge."""
        m = self.m
        eidx = {tuple(sorted(e)): k for k, e in enumerate(m.edges)}
        mask = np.zeros(len(self.active), dtype=bool)
        for a, b in zip(vertex_path, vertex_path[1:]):
            key = (min(a, b), max(a, b))
            if key not in eidx:
                raise InputError(f"line step {key} is not an edge")
            e = eidx[key]
            if e not in self.pos_of_edge:
                raise DegenerateLineError(
                    f"line runs through zero-weight edge {key}")
            mask[self.pos_of_edge[e]] ^= True
        return mask


# ---------------------------------------------------------------------------
# dual paths (spin parity lines)


def dual_path_system(pair: DualPair, x: np.ndarray):
    """Deterministic BFS forest on the dual graph.

    Returns (enclave, mask): mask[u] is the set of primal edges crossed on
    the path from node u to the wired boundary, and enclave[u] = -1 there.
    Nodes cut off from every wired node (enclosed by free arcs) get the
    id of their enclave component, and mask[u] runs to the enclave's BFS
    root instead; spins in distinct enclaves never pair.
    """
    m = pair.map
    adj = [[] for _ in range(pair.n_nodes)]
    for e in range(m.n_edges):
        kind = m.edge_kind(e)
        if kind == FREE:
            continue
        if kind == WIRED:
            inner = pair.face_node[pair._inner_face(e)]
            adj[inner].append((pair.wired_node[e], e))
            adj[pair.wired_node[e]].append((inner, e))
        else:
            fl, fr = m.edge_faces(e)
            a, b = pair.face_node[fl], pair.face_node[fr]
            adj[a].append((b, e))
            adj[b].append((a, e))
    for lst in adj:
        lst.sort()

    ne = m.n_edges
    mask = np.zeros((pair.n_nodes, ne), dtype=bool)
    enclave = np.full(pair.n_nodes, -1, dtype=int)
    seen = np.zeros(pair.n_nodes, dtype=bool)
    # multi-source BFS from wired nodes (they sit "outside": empty path)
    queue = [u for u in range(pair.n_face_nodes, pair.n_nodes)]
    for u in queue:
        seen[u] = True
    qi = 0
    while qi < len(queue):
        u = queue[qi]
        qi += 1
        for w, e in adj[u]:
            if seen[w]:
                continue
            seen[w] = True
            mask[w] = mask[u]
            mask[w, e] ^= True
            queue.append(w)
    # enclaves: BFS from the smallest unseen node of each component
    n_enclaves = 0
    for root in range(pair.n_nodes):
        if seen[root]:
            continue
        seen[root] = True
        enclave[root] = n_enclaves
        queue = [root]
        qi = 0
        while qi < len(queue):
            u = queue[qi]
            qi += 1
            for w, e in adj[u]:
                if seen[w]:
                    continue
                seen[w] = True
                enclave[w] = n_enclaves
                mask[w] = mask[u]
                mask[w, e] ^= True
                queue.append(w)
        n_enclaves += 1
    return enclave, mask


# ---------------------------------------------------------------------------
# results


@dataclass(frozen=True)
class EvenSubgraphSum:
    value: float                 # Z(G), the domain-wall sum
    z_circ: float | None         # prod x^(-1/2) * Z, when all x > 0
    z_bullet: float | None       # 2^V * prod (1-x^2)^(-1/2) * Z, when all x < 1
    rank: int
    n_configs: int


@dataclass
class CorrelatorRequest:
    disorders: tuple = ()        # vertex ids of the primal graph
    spins: tuple = ()            # dual node ids
    corners: tuple = ()          # corner ids of the dual pair
    disorder_lines: tuple | None = None   # optional explicit vertex walks


@dataclass(frozen=True)
class MixedValue:
    value: float
    Z: float
    sheet: str
    sign_convention: tuple       # (pairing pairs, spin anchors) actually used


def partition_function(m: PlanarMap, weights: IsingWeights,
                       max_rank: int = MAX_RANK) -> EvenSubgraphSum:
    """Domain-wall partition function by exact enumeration."""
    en = Enumerator(m, weights.x, max_rank=max_rank)
    z = en.plain_sum()
    x = weights.x
    z_circ = None
    if np.all(x > 0):
        z_circ = float(np.exp(-0.5 * np.log(x).sum()) * z)
    z_bullet = None
    if np.all(x < 1):
        nv = m.n_vertices
        z_bullet = float(2.0 ** nv * np.exp(-0.5 * np.log1p(-x * x).sum()) * z)
    return EvenSubgraphSum(value=float(z), z_circ=z_circ, z_bullet=z_bullet,
                           rank=en.rank, n_configs=1 << en.rank)


def _collapse_parity(items):
    seen = {}
    for it in items:
        seen[it] = seen.get(it, 0) + 1
    return tuple(sorted(k for k, c in seen.items() if c % 2))


def spin_correlator(m: PlanarMap, weights: IsingWeights, faces,
                    max_rank: int = MAX_RANK) -> float:
    """E[sigma_{u1} ... sigma_{un}] with the outer spin fixed to +1."""
    pair = m.dual()
    for u in faces:
        if not (0 <= u < pair.n_nodes):
            raise InputError(f"dual node {u} out of range")
    # wired nodes carry the fixed outer spin: sigma = +1, drop them
    nodes = _collapse_parity(u for u in faces if not pair.is_wired_node(u))
    if not nodes:
        return 1.0
    en = Enumerator(m, weights.x, max_rank=max_rank)
    enclave, masks = dual_path_system(pair, weights.x)
    if _odd_enclave(enclave, nodes):
        return 0.0  # a decoupled region holds an unpaired spin
    gamma = np.zeros(m.n_edges, dtype=bool)
    for u in nodes:
        gamma ^= masks[u]
    g_active = gamma[en.active].astype(float)
    sums = en.gram([en.logx], [np.zeros_like(en.logx), g_active])
    return float(sums[0, 1] / sums[0, 0])


def _odd_enclave(enclave, nodes):
    count = {}
    for u in nodes:
        if enclave[u] >= 0:
            count[enclave[u]] = count.get(enclave[u], 0) + 1
    return any(c % 2 for c in count.values())


def disorder_correlator(m: PlanarMap, weights: IsingWeights, vertices,
                        lines=None, max_rank: int = MAX_RANK) -> float:
    """E[mu_{v1} ... mu_{vm}]: walls odd exactly at the given vertices.

    With explicit lines, computes the equivalent inverted-weight form
    x(lines) * sum_C x^(inv on lines)(C) / Z and insists the lines avoid
    zero-weight edges; otherwise pairs the vertices along spanning-tree
    paths (value is line-independent either way).
    """
    pair = m.dual()
    classes = _collapse_parity(pair.vertex_class[v] for v in vertices)
    if len(classes) % 2:
        raise InputError("odd number of disorder insertions")
    if not classes:
        return 1.0
    reps = [min(pair.class_members[c]) for c in classes]
    en = Enumerator(m, weights.x, max_rank=max_rank)
    Z = en.plain_sum()
    if lines is not None:
        mask = np.zeros(len(en.active), dtype=bool)
        for walk in lines:
            mask ^= en.line_mask(walk)
        ends = _collapse_parity(
            pair.vertex_class[w] for walk in lines for w in (walk[0], walk[-1]))
        if ends != tuple(classes):
            raise InputError("lines do not pair the requested vertices")
        return en.plain_sum(extra_mask=mask) / Z
    mask = en.pairing_mask(reps)
    if mask is None:
        return 0.0
    return en.plain_sum(extra_mask=mask) / Z


def mixed_correlator(m: PlanarMap, weights: IsingWeights,
                     request: CorrelatorRequest,
                     max_rank: int = MAX_RANK) -> MixedValue:
    """Order-disorder correlator on a declared sheet.

    Corner insertions anticommute; the value reported is for corners in
    the given order, computed as the canonical sorted order times the
    permutation sign.  Tree paths pair disorder classes (smallest-id
    representatives, sorted), BFS dual paths carry spin parity.
    """
    pair = m.dual()
    corners = tuple(request.corners)
    if len(set(corners)) != len(corners):
        raise InputError("coincident corner insertions")
    perm_sign = _perm_parity(corners)
    vs = [pair.corners[c].v for c in corners]
    us = [pair.corners[c].u for c in corners]

    classes = _collapse_parity(
        [pair.vertex_class[v] for v in tuple(request.disorders) + tuple(vs)])
    if (len(request.disorders) + len(corners)) % 2:
        raise InputError("disorder plus corner insertions must be even")
    nodes = _collapse_parity(
        [u for u in tuple(request.spins) + tuple(us)
         if not pair.is_wired_node(u)])

    en = Enumerator(m, weights.x, max_rank=max_rank)
    Z = en.plain_sum()

    gamma = np.zeros(m.n_edges, dtype=bool)
    if nodes:
        enclave, masks = dual_path_system(pair, weights.x)
        if _odd_enclave(enclave, nodes):
            return MixedValue(0.0, Z, "decoupled-enclave", ((), ()))
        for u in nodes:
            gamma ^= masks[u]
    g_active = gamma[en.active].astype(float)

    if request.disorder_lines is not None:
        mask = np.zeros(len(en.active), dtype=bool)
        for walk in request.disorder_lines:
            mask ^= en.line_mask(walk)
        ends = _collapse_parity(
            pair.vertex_class[w] for walk in request.disorder_lines
            for w in (walk[0], walk[-1]))
        if ends != tuple(classes):
            raise InputError("disorder lines do not pair the insertions")
        sheet = "explicit-lines"
    elif classes:
        reps = [min(pair.class_members[c]) for c in classes]
        mask = en.pairing_mask(reps)
        sheet = "tree-pairing:" + ",".join(map(str, reps))
        if mask is None:
            return MixedValue(0.0, Z, sheet, (tuple(classes), tuple(nodes)))
    else:
        mask = np.zeros(len(en.active), dtype=bool)
        sheet = "no-disorders"

    # sum_C x(C xor L) (-1)^|C.gamma| over the even cycle space C: moving L
    # across a spin multiplies this by -1, which is the declared sheet
    l = en.logx.copy()
    l[mask] = -l[mask]
    const = float(en.logx[mask].sum())
    num = en.gram([l], [g_active])[0, 0]
    value = perm_sign * math.exp(const) * num / Z
    return MixedValue(float(value), float(Z),
                      sheet + ";spin-anchors:" + ",".join(map(str, nodes)),
                      (tuple(classes), tuple(nodes)))


def _perm_parity(seq):
    """Sign of the permutation sorting seq ascending."""
    seq = list(seq)
    sign = 1.0
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[j] < seq[i]:
                seq[i], seq[j] = seq[j], seq[i]
                sign = -sign
    return sign


def corner_observable(m: PlanarMap, weights: IsingWeights, disorders=(),
                      spins=(), max_rank: int = MAX_RANK) -> np.ndarray:
    """Corner field around fixed insertions, one value per corner.

    Matches mixed_correlator with corners=(c,) on the same per-corner
    declared sheets (tree pairing of disorder classes, BFS spin anchors),
    but runs a single enumeration sweep instead of one per corner.
    disorders are vertex ids and must be odd in number so the corner's
    own mu completes a pairing; spins are dual node ids.
    """
    pair = m.dual()
    if len(disorders) % 2 != 1:
        raise InputError("need an odd disorder count to absorb the corner")
    en = Enumerator(m, weights.x, max_rank=max_rank)
    Z = en.plain_sum()
    base_nodes = [u for u in spins if not pair.is_wired_node(u)]
    enclave, masks = dual_path_system(pair, weights.x)

    nc = pair.n_corners()
    na = len(en.active)
    ls = np.zeros((nc, na))
    gs = np.zeros((nc, na))
    consts = np.zeros(nc)
    dead = np.zeros(nc, dtype=bool)
    for c in range(nc):
        v, u = pair.corners[c].v, pair.corners[c].u
        classes = _collapse_parity(
            [pair.vertex_class[d] for d in disorders] + [pair.vertex_class[v]])
        nodes = _collapse_parity(
            base_nodes + ([u] if not pair.is_wired_node(u) else []))
        gamma = np.zeros(m.n_edges, dtype=bool)
        if nodes:
            if _odd_enclave(enclave, nodes):
                dead[c] = True
                continue
            for un in nodes:
                gamma ^= masks[un]
        mask = np.zeros(na, dtype=bool)
        if classes:
            reps = [min(pair.class_members[k]) for k in classes]
            mask = en.pairing_mask(reps)
            if mask is None:
                dead[c] = True
                continue
        l = en.logx.copy()
        l[mask] = -l[mask]
        ls[c] = l
        gs[c] = gamma[en.active].astype(float)
        consts[c] = float(en.logx[mask].sum())
    vals = np.exp(consts) * en.gram_diag(ls, gs) / Z
    vals[dead] = 0.0
    return vals


@dataclass(frozen=True)
class EnergyDensity:
    value: float          # <sigma sigma> - 1/sqrt(2) across the quad
    sigma_form: float
    mu_form: float        # 1/sqrt(2) - <mu mu>; equals value at criticality


def energy_density(m: PlanarMap, weights: IsingWeights, quad,
                   max_rank: int = MAX_RANK) -> EnergyDensity:
    """Energy density of an interior edge at the critical square-lattice
    point, reported through both the spin and the disorder form."""
    if abs(weights.x[quad.edge] - CRITICAL_X) > 1e-9:
        raise InputError("energy density requires critical weight on the quad")
    pair = m.dual()
    s = spin_correlator(m, weights, list(quad.vc), max_rank=max_rank)
    mu = disorder_correlator(m, weights, list(quad.vb), max_rank=max_rank)
    inv = 1.0 / math.sqrt(2.0)
    return EnergyDensity(value=s - inv, sigma_form=s - inv, mu_form=inv - mu)


# ---------------------------------------------------------------------------
# exact (rational) engine


def exact_even_sum(m: PlanarMap, x_fracs, odd_vertices=(), gamma_edges=(),
                   max_rank: int = 20):
    """Fraction-exact decorated even-subgraph sum.

    x_fracs: per-edge Fractions (0 excluded from the active set);
    gamma_edges: edge ids whose crossing parity flips the sign.
    Returns a Fraction.
    """
    x_fracs = [Fraction(v) for v in x_fracs]
    active = [e for e in range(m.n_edges) if x_fracs[e] != 0]
    pos = {e: i for i, e in enumerate(active)}
    na = len(active)

    adj = [[] for _ in range(m.n_vertices)]
    for i, e in enumerate(active):
        a, b = m.edges[e]
        adj[a].append((b, i))
        adj[b].append((a, i))
    for lst in adj:
        lst.sort()
    comp = [-1] * m.n_vertices
    path = [0] * m.n_vertices        # bitmask over active positions
    in_tree = [False] * na
    ncomp = 0
    for root in range(m.n_vertices):
        if comp[root] >= 0:
            continue
        comp[root] = ncomp
        queue = [root]
        qi = 0
        while qi < len(queue):
            v = queue[qi]
            qi += 1
            for w, i in adj[v]:
                if comp[w] >= 0:
                    continue
                comp[w] = ncomp
                path[w] = path[v] | (1 << i)
                in_tree[i] = True
                queue.append(w)
        ncomp += 1

    basis = []
    for i in range(na):
        if not in_tree[i]:
            a, b = m.edges[active[i]]
            basis.append(path[a] ^ path[b] ^ (1 << i))
    if len(basis) > max_rank:
        raise SizeError(f"cycle rank {len(basis)} exceeds exact budget {max_rank}")

    count = {}
    for v in odd_vertices:
        count[comp[v]] = count.get(comp[v], 0) + 1
    if any(c % 2 for c in count.values()):
        return Fraction(0)
    base = 0
    for v in odd_vertices:
        base ^= path[v]

    gmask = 0
    for e in gamma_edges:
        if e in pos:
            gmask ^= 1 << pos[e]

    total = Fraction(0)
    for sub in range(1 << len(basis)):
        cfg = base
        s = sub
        bi = 0
        while s:
            if s & 1:
                cfg ^= basis[bi]
            s >>= 1
            bi += 1
        w = Fraction(1)
        c = cfg
        while c:
            i = (c & -c).bit_length() - 1
            w *= x_fracs[active[i]]
            c &= c - 1
        if bin(cfg & gmask).count("1") % 2:
            w = -w
        total += w
    return total
