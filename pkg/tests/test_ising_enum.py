import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from ising_sembed import InputError, SizeError, build_map
from ising_sembed.generators import delaunay_map, square_grid
from ising_sembed.ising_enum import (CRITICAL_X, CorrelatorRequest,
                                     IsingWeights, disorder_correlator,
                                     energy_density, exact_even_sum,
                                     mixed_correlator, partition_function,
                                     spin_correlator)


def n_cycle(n):
    pos = [np.exp(2j * np.pi * k / n) for k in range(n)]
    edges = [(k, (k + 1) % n) for k in range(n)]
    return build_map(pos, edges, [{"type": "wired", "edges": list(range(n))}])


# -- independent oracles ----------------------------------------------------


def direct_subset_sum(m, x, odd=frozenset(), gamma=frozenset()):
    """Sum over all edge subsets with the requested degree parities."""
    total = 0.0
    for bits in itertools.product([0, 1], repeat=m.n_edges):
        deg = [0] * m.n_vertices
        w = 1.0
        for e, b in enumerate(bits):
            if b:
                deg[m.edges[e][0]] += 1
                deg[m.edges[e][1]] += 1
                w *= x[e]
        if any((d % 2 == 1) != (v in odd) for v, d in enumerate(deg)):
            continue
        crossings = sum(bits[e] for e in gamma)
        total += w * (-1.0) ** crossings
    return total


def direct_face_model(m, x, spin_sets=()):
    """Spin sum over bounded-face configurations with the outer spin +1.

    Returns (Z_physical, [correlators]) where Z_physical includes the
    per-edge exp(beta J) normalisation, i.e. prod x^(-1/2) * wall sum.
    """
    pair = m.dual()
    nb = pair.n_face_nodes
    betaJ = -0.5 * np.log(x)
    Z = 0.0
    corr = [0.0] * len(spin_sets)
    for bits in itertools.product([-1, 1], repeat=nb):
        def spin(node):
            return bits[node] if node < nb else 1
        w = 1.0
        for e in range(m.n_edges):
            fl, fr = m.edge_faces(e)
            if m.edge_kind(e) == "interior":
                s1 = spin(pair.face_node[fl])
                s2 = spin(pair.face_node[fr])
            elif m.edge_kind(e) == "wired":
                inner = fl if fl != m.outer_face else fr
                s1, s2 = spin(pair.face_node[inner]), 1
            else:
                continue  # free edge: no coupling
            w *= math.exp(betaJ[e] * s1 * s2)
        Z += w
        for i, us in enumerate(spin_sets):
            p = 1
            for u in us:
                p *= spin(u)
            corr[i] += p * w
    return Z, [c / Z for c in corr]


def direct_vertex_model(m, x):
    """Spin sum over primal-vertex configurations with couplings
    tanh(beta J) = x_e; this is the high-temperature partner."""
    betaJ = np.arctanh(np.clip(x, 0, 1 - 1e-15))
    Z = 0.0
    for bits in itertools.product([-1, 1], repeat=m.n_vertices):
        w = 1.0
        for e, (a, b) in enumerate(m.edges):
            w *= math.exp(betaJ[e] * bits[a] * bits[b])
        Z += w
    return Z


# -- partition function -----------------------------------------------------


def test_n_cycle_partition():
    for n in (3, 4, 5):
        m = n_cycle(n)
        w = IsingWeights.uniform(m, 0.37)
        res = partition_function(m, w)
        assert np.isclose(res.value, 1 + 0.37 ** n, rtol=1e-14)
        assert np.isclose(res.z_circ, 0.37 ** (-n / 2) * (1 + 0.37 ** n))
        assert res.rank == 1


def test_partition_at_least_one(rng):
    for _ in range(5):
        m = delaunay_map(6, rng)
        x = rng.uniform(0.05, 0.95, m.n_edges)
        res = partition_function(m, IsingWeights.from_array(m, x))
        assert res.value >= 1.0


def test_partition_vs_direct_subsets(rng):
    m = square_grid(2, 2)
    x = rng.uniform(0.1, 0.9, m.n_edges)
    res = partition_function(m, IsingWeights.from_array(m, x))
    assert np.isclose(res.value, direct_subset_sum(m, x), rtol=1e-12)


def test_high_temperature_consistency(rng):
    # Z_bullet from the wall sum equals the direct vertex-spin sum
    m = n_cycle(4)
    x = rng.uniform(0.15, 0.85, 4)
    res = partition_function(m, IsingWeights.from_array(m, x))
    assert np.isclose(res.z_bullet, direct_vertex_model(m, x), rtol=1e-10)
    m2 = square_grid(2, 1)
    x2 = rng.uniform(0.15, 0.85, m2.n_edges)
    res2 = partition_function(m2, IsingWeights.from_array(m2, x2))
    assert np.isclose(res2.z_bullet, direct_vertex_model(m2, x2), rtol=1e-10)


def test_low_temperature_consistency(rng):
    # Z_circ equals the direct face-spin sum with outer spin +1
    for boundary in ("wired", [("wired", 4), ("free", 2), ("wired", 2)]):
        m = square_grid(2, 2, boundary=boundary)
        x = rng.uniform(0.1, 0.9, m.n_edges)
        w = IsingWeights.from_array(m, np.where(
            [m.edge_kind(e) == "free" for e in range(m.n_edges)], 1.0, x))
        Zd, _ = direct_face_model(m, w.x)
        res = partition_function(m, w)
        assert np.isclose(res.z_circ, Zd, rtol=1e-10)


def test_budget():
    m = square_grid(5, 5)
    with pytest.raises(SizeError):
        partition_function(m, IsingWeights.uniform(m, 0.5), max_rank=20)


def test_weights_validation():
    m = n_cycle(4)
    with pytest.raises(InputError):
        IsingWeights.from_array(m, [0.5, 0.5, 1.2, 0.5])
    th = IsingWeights.uniform(m, 0.3).theta
    assert np.allclose(np.tan(th / 2), 0.3, atol=1e-12)
    d = IsingWeights.uniform(m, 0.3).dual(m)
    assert np.allclose(2 * np.arctan(d.x), np.pi / 2 - th, atol=1e-12)


# -- spin correlators -------------------------------------------------------


def test_spin_one_point_cycle():
    for n in (3, 5):
        m = n_cycle(n)
        for xv in (0.2, 0.7):
            w = IsingWeights.uniform(m, xv)
            val = spin_correlator(m, w, [0])
            assert np.isclose(val, (1 - xv ** n) / (1 + xv ** n), rtol=1e-12)


def test_spin_frozen_and_repeated():
    m = square_grid(2, 2)
    w = IsingWeights.uniform(m, 0.0)
    assert spin_correlator(m, w, [0]) == 1.0
    w2 = IsingWeights.uniform(m, 0.55)
    assert spin_correlator(m, w2, [2, 2]) == 1.0
    # wired nodes carry the outer spin
    d = m.dual()
    wired = next(iter(d.wired_node.values()))
    assert spin_correlator(m, w2, [wired]) == 1.0


def test_spin_vs_direct(rng):
    m = square_grid(2, 2, boundary=[("wired", 5), ("free", 1), ("wired", 2)])
    x = np.where([m.edge_kind(e) == "free" for e in range(m.n_edges)],
                 1.0, rng.uniform(0.1, 0.9, m.n_edges))
    w = IsingWeights.from_array(m, x)
    sets = [(0,), (1,), (0, 3), (1, 2), (0, 1, 2), (2, 3)]
    _, direct = direct_face_model(m, x, sets)
    for us, want in zip(sets, direct):
        got = spin_correlator(m, w, list(us))
        assert np.isclose(got, want, atol=1e-12), (us, got, want)


# -- disorder correlators ---------------------------------------------------


def test_disorder_vs_direct(rng):
    m = square_grid(2, 2)
    x = rng.uniform(0.1, 0.9, m.n_edges)
    w = IsingWeights.from_array(m, x)
    Z = direct_subset_sum(m, x)
    for pair_ in [(0, 1), (0, 4), (2, 7), (0, 8)]:
        want = direct_subset_sum(m, x, odd=set(pair_)) / Z
        got = disorder_correlator(m, w, list(pair_))
        assert np.isclose(got, want, rtol=1e-11), (pair_, got, want)


def test_disorder_line_forms_agree(rng):
    m = square_grid(2, 2)
    x = rng.uniform(0.1, 0.9, m.n_edges)
    w = IsingWeights.from_array(m, x)
    base = disorder_correlator(m, w, [0, 8])
    # two different explicit walks between vertices 0 and 8
    for walk in ([0, 1, 2, 5, 8], [0, 3, 6, 7, 8], [0, 1, 4, 7, 8]):
        got = disorder_correlator(m, w, [0, 8], lines=[walk])
        assert np.isclose(got, base, rtol=1e-11)


def test_disorder_degenerate_line():
    from ising_sembed import DegenerateLineError
    m = square_grid(2, 2)
    x = np.full(m.n_edges, 0.5)
    x[0] = 0.0  # edge (0,1)
    w = IsingWeights.from_array(m, x)
    with pytest.raises(DegenerateLineError):
        disorder_correlator(m, w, [0, 1], lines=[[0, 1]])
    # without lines the correlator is still defined (walls route around)
    val = disorder_correlator(m, w, [0, 1])
    want = direct_subset_sum(m, x, odd={0, 1}) / direct_subset_sum(m, x)
    assert np.isclose(val, want, rtol=1e-11)


def test_disorder_parity_checks():
    m = square_grid(2, 2)
    w = IsingWeights.uniform(m, 0.5)
    with pytest.raises(InputError):
        disorder_correlator(m, w, [0])
    assert disorder_correlator(m, w, [0, 0]) == 1.0
    assert disorder_correlator(m, w, []) == 1.0


def test_disorder_free_arc_member_independence():
    # disorders at different members of one free-arc class agree
    m = square_grid(2, 2, boundary=[("wired", 4), ("free", 2), ("wired", 2)])
    w = IsingWeights.uniform(m, 0.45)
    d = m.dual()
    arc_class = next(c for c in range(d.n_classes)
                     if len(d.class_members[c]) > 1)
    members = d.class_members[arc_class]
    vals = [disorder_correlator(m, w, [0, v]) for v in members]
    assert np.allclose(vals, vals[0], atol=1e-12)


# -- mixed correlators ------------------------------------------------------


def test_mixed_reduces_to_pure():
    m = square_grid(2, 2)
    w = IsingWeights.uniform(m, 0.6)
    r = mixed_correlator(m, w, CorrelatorRequest(spins=(0, 3)))
    assert np.isclose(r.value, spin_correlator(m, w, [0, 3]), rtol=1e-12)
    r2 = mixed_correlator(m, w, CorrelatorRequest(disorders=(0, 8)))
    assert np.isclose(r2.value, disorder_correlator(m, w, [0, 8]), rtol=1e-12)
    assert r2.Z > 1


def test_mixed_corner_antisymmetry(rng):
    m = square_grid(3, 3)
    w = IsingWeights.from_array(m, rng.uniform(0.2, 0.8, m.n_edges))
    d = m.dual()
    for _ in range(5):
        c1, c2 = rng.choice(d.n_corners(), size=2, replace=False)
        a = mixed_correlator(m, w, CorrelatorRequest(corners=(int(c1), int(c2))))
        b = mixed_correlator(m, w, CorrelatorRequest(corners=(int(c2), int(c1))))
        assert np.isclose(a.value, -b.value, atol=1e-13)
    with pytest.raises(InputError):
        mixed_correlator(m, w, CorrelatorRequest(corners=(3, 3)))


def test_mixed_line_transport_flips_sign():
    """Moving a disorder line across a spin insertion flips the sheet sign."""
    m = square_grid(2, 2)
    w = IsingWeights.uniform(m, 0.5)
    from ising_sembed.generators import grid_face_node
    left = [0, 3, 6, 7, 8]    # up the left side then across the top
    right = [0, 1, 2, 5, 8]   # across the bottom then up the right side
    vals = {}
    for fi, fj in [(1, 1), (0, 1)]:
        u = grid_face_node(m, 2, fi, fj)
        a = mixed_correlator(m, w, CorrelatorRequest(
            disorders=(0, 8), spins=(u,), disorder_lines=(left,)))
        b = mixed_correlator(m, w, CorrelatorRequest(
            disorders=(0, 8), spins=(u,), disorder_lines=(right,)))
        assert np.isclose(a.value, -b.value, atol=1e-13)
        vals[fi, fj] = a.value
    # the reflection through the 0-4-8 diagonal fixes the insertions at the
    # central face but swaps the two walks, so that value must vanish
    assert vals[1, 1] == 0.0
    assert abs(vals[0, 1]) > 1e-6
    # with no enclosed spin the two routes agree
    a0 = mixed_correlator(m, w, CorrelatorRequest(
        disorders=(0, 8), disorder_lines=(left,)))
    b0 = mixed_correlator(m, w, CorrelatorRequest(
        disorders=(0, 8), disorder_lines=(right,)))
    assert np.isclose(a0.value, b0.value, atol=1e-13)


def test_disorder_equals_dual_spin(rng):
    # E[mu_a mu_b] on the wall side = two-point function of the
    # vertex-spin model with tanh(beta J) = x
    m = square_grid(2, 2)
    x = rng.uniform(0.2, 0.8, m.n_edges)
    w = IsingWeights.from_array(m, x)
    betaJ = np.arctanh(x)
    for a, b in [(0, 8), (1, 7), (3, 4)]:
        Z = num = 0.0
        for bits in itertools.product([-1, 1], repeat=m.n_vertices):
            p = 1.0
            for e, (s, t) in enumerate(m.edges):
                p *= math.exp(betaJ[e] * bits[s] * bits[t])
            Z += p
            num += bits[a] * bits[b] * p
        assert np.isclose(disorder_correlator(m, w, [a, b]), num / Z,
                          rtol=1e-10)


def test_two_sided_duality(rng):
    """Mixed wall-side correlator against the high-temperature side.

    Both equal sum over C odd exactly at the disorder vertices of
    x(C) * (-1)^(crossings of C with the dual line joining the spin
    faces), divided by the plain wall sum.
    """
    from ising_sembed.generators import grid_face_node
    from ising_sembed.ising_enum import dual_path_system

    m = square_grid(2, 3)
    x = rng.uniform(0.25, 0.75, m.n_edges)
    w = IsingWeights.from_array(m, x)
    v1, v2 = 4, 7                       # interior vertices
    u1 = grid_face_node(m, 2, 0, 0)
    u2 = grid_face_node(m, 2, 1, 2)
    d = m.dual()
    _, masks = dual_path_system(d, x)
    lam = set(np.flatnonzero(masks[u1] ^ masks[u2]))

    Z = direct_subset_sum(m, x)
    S = direct_subset_sum(m, x, odd={v1, v2}, gamma=lam) / Z

    # wall side, with the explicit inverted-weight line [4, 7]
    got = mixed_correlator(m, w, CorrelatorRequest(
        disorders=(v1, v2), spins=(u1, u2), disorder_lines=([v1, v2],)))
    e47 = next(k for k, e in enumerate(m.edges) if set(e) == {v1, v2})
    sheet_sign = -1.0 if e47 in lam else 1.0
    assert np.isclose(got.value, sheet_sign * S, rtol=1e-10)

    # high-temperature side: vertex spins at tanh(beta J) = x, couplings
    # flipped across the same dual line, sigma insertions at v1, v2
    betaJ = np.arctanh(x)
    flip = np.where([e in lam for e in range(m.n_edges)], -1.0, 1.0)
    Zb = num = 0.0
    for bits in itertools.product([-1, 1], repeat=m.n_vertices):
        p = pf = 1.0
        for e, (s, t) in enumerate(m.edges):
            st = bits[s] * bits[t]
            p *= math.exp(betaJ[e] * st)
            pf *= math.exp(flip[e] * betaJ[e] * st)
        Zb += p
        num += bits[v1] * bits[v2] * pf
    assert np.isclose(num / Zb, S, rtol=1e-10)


# -- energy density ---------------------------------------------------------


def test_energy_density_three_form():
    m = square_grid(3, 3)
    w = IsingWeights.uniform(m, CRITICAL_X)
    d = m.dual()
    quad = d.quads[len(d.quads) // 2]
    res = energy_density(m, w, quad)
    assert np.isclose(res.value + 2 ** -0.5,
                      spin_correlator(m, w, list(quad.vc)), atol=1e-13)
    assert np.isclose(res.sigma_form, res.mu_form, atol=1e-10)


@pytest.mark.slow
def test_energy_density_boundary_decay():
    vals = {}
    for n in (3, 5):
        m = square_grid(n, n)
        w = IsingWeights.uniform(m, CRITICAL_X)
        d = m.dual()
        # quad on the edge between two horizontally adjacent middle faces
        from ising_sembed.generators import grid_face_node
        mid = n // 2
        ua = grid_face_node(m, n, mid - 1, mid)
        ub = grid_face_node(m, n, mid, mid)
        quad = next(q for q in d.quads if set(q.vc) == {ua, ub})
        vals[n] = energy_density(m, w, quad).value
    assert abs(vals[5]) < abs(vals[3])


# -- exact mode -------------------------------------------------------------


def test_exact_matches_float():
    m = square_grid(2, 2)
    fr = [Fraction(1, 3)] * m.n_edges
    x = np.full(m.n_edges, 1.0 / 3.0)
    zf = exact_even_sum(m, fr)
    z = partition_function(m, IsingWeights.from_array(m, x)).value
    assert np.isclose(float(zf), z, rtol=1e-13)
    odd = exact_even_sum(m, fr, odd_vertices=(0, 4))
    want = direct_subset_sum(m, x, odd={0, 4})
    assert np.isclose(float(odd), want, rtol=1e-12)
    sgn = exact_even_sum(m, fr, gamma_edges=(0, 7))
    want2 = direct_subset_sum(m, x, gamma={0, 7})
    assert np.isclose(float(sgn), want2, rtol=1e-12)
