import math

import numpy as np
import pytest
from scipy.linalg import null_space

from ising_sembed import sholo
from ising_sembed.covers import (ZETA, corner_chord, dirac_spinor,
                                 upsilon_cover)
from ising_sembed.errors import (DegenerateSpinorError, DomainError,
                                 NonIntegrableError)
from ising_sembed.generators import grid_face_node, square_grid
from ising_sembed.ising_enum import (CRITICAL_X, CorrelatorRequest,
                                     IsingWeights, corner_observable,
                                     mixed_correlator)
from ising_sembed.planar_map import build_map


def geometric_weights(m, pair):
    """Critical weights read off the rhombus shapes: tan(theta_e) is the
    ratio of the dual diagonal to the primal diagonal."""
    x = np.zeros(m.n_edges)
    for cell in sholo.quad_cells(pair):
        vb0, vb1 = cell.vb
        vc0, vc1 = cell.vc
        db = abs(m.positions[vb1] - m.positions[vb0])
        dc = abs(pair.node_pos[vc1] - pair.node_pos[vc0])
        x[cell.edge] = math.tan(0.5 * math.atan2(dc, db))
    return IsingWeights.from_array(m, x)


def rect_map(nx, ny, a=1.0, b=1.6):
    sq = square_grid(nx, ny)
    pos = np.array([complex(a * p.real, b * p.imag) for p in sq.positions])
    arcs = [{"type": arc.kind, "edges": list(arc.edges)} for arc in sq.arcs]
    return build_map(pos, sq.edges, arcs)


def flower_map(degrees=(60.0, 85.0, 70.0, 75.0, 70.0)):
    """One interior vertex whose rhombi all have different angles."""
    dphi = np.deg2rad(degrees)
    phi = np.cumsum(dphi) - dphi[0]
    wnodes = np.exp(1j * phi)
    k = len(phi)
    ring = [wnodes[i - 1] + wnodes[i] for i in range(k)]
    pos = np.array([0j] + ring)
    edges = [(0, 1 + i) for i in range(k)] + [(1 + i, 1 + (i + 1) % k)
                                              for i in range(k)]
    return build_map(pos, edges,
                     [{"type": "wired", "edges": [k + i for i in range(k)]}])


def isoradial_fixtures():
    m = square_grid(3, 3)
    p = m.dual()
    yield m, p, IsingWeights.uniform(m, CRITICAL_X)
    m = rect_map(4, 3)
    p = m.dual()
    yield m, p, geometric_weights(m, p)
    m = flower_map()
    p = m.dual()
    yield m, p, geometric_weights(m, p)


def nullspace_basis(pair, cov, w):
    P = sholo.propagation_matrix(cov, w).toarray()
    N = null_space(P, rcond=1e-10)
    assert N.shape[1] >= 2
    return N


# ---------------------------------------------------------------------------
# the three-term relation itself

def test_three_term_identity_exact():
    m = square_grid(2, 2)
    pair = m.dual()
    cov = upsilon_cover(pair, [])
    w = IsingWeights.uniform(m, 0.37)
    cell = sholo.quad_cells(pair)[0]
    th = sholo.cell_theta(w, cell)
    c0 = cell.corners[0]
    cb, cn = cell.corners[3], cell.corners[1]
    vals = {c0: 1.0,
            cb: math.cos(th) * cov.sign(c0, cb),
            cn: math.sin(th) * cov.sign(c0, cn),
            cell.corners[2]: 0.0}
    res = sholo.check_propagation(cov, vals, cell, th)
    assert abs(res[0]) <= 1e-15


def test_dirac_spinor_satisfies_propagation():
    for m, pair, w in isoradial_fixtures():
        cov = upsilon_cover(pair, [])
        eta = dirac_spinor(pair)
        for vals in (eta, np.conj(eta)):
            res = sholo.all_residuals(cov, w, vals)
            assert max(np.abs(r).max() for r in res.values()) <= 1e-12


def test_quad_loop_flips_sheet():
    m = square_grid(2, 2)
    pair = m.dual()
    cov = upsilon_cover(pair, [])
    for cell in sholo.quad_cells(pair):
        assert cov.cycle_sign(list(cell.corners)) == -1.0


def test_propagate_zero_and_roundtrip(rng):
    m = square_grid(2, 2)
    pair = m.dual()
    cov = upsilon_cover(pair, [])
    w = IsingWeights.uniform(m, 0.58)
    cell = sholo.quad_cells(pair)[2]
    th = sholo.cell_theta(w, cell)
    assert sholo.propagate(cov, cell, th, {0: 0.0, 1: 0.0}, 3) == 0.0
    for _ in range(25):
        known = {0: rng.normal(), 2: rng.normal()}
        full = {i: sholo.propagate(cov, cell, th, known, i) for i in range(4)}
        vals = {c: full[i] for i, c in enumerate(cell.corners)}
        assert np.abs(sholo.check_propagation(cov, vals, cell, th)).max() <= 1e-12


def test_extend_spinor_from_partial_data():
    m = square_grid(3, 3)
    pair = m.dual()
    cov = upsilon_cover(pair, [])
    w = IsingWeights.uniform(m, CRITICAL_X)
    eta = np.conj(dirac_spinor(pair))

    def column_seeds(cols):
        return {c.id: eta[c.id] for c in pair.corners
                if round(m.positions[c.v].real) in cols}

    # two columns determine everything except the four boundary pockets,
    # where the two wired quads leave one degree of freedom each
    seeds = column_seeds({0, 1})
    vals = sholo.extend_spinor(cov, w, seeds)
    filled = ~np.isnan(vals)
    assert np.count_nonzero(~filled) == 10
    assert np.abs(vals[filled] - eta[filled]).max() <= 1e-12

    vals = sholo.extend_spinor(cov, w, column_seeds({0, 1, 2}))
    assert not np.any(np.isnan(vals))
    assert np.abs(vals - eta).max() <= 1e-12

    bad = dict(seeds)
    k = next(iter(bad))
    bad[k] *= 1.1
    with pytest.raises(NonIntegrableError):
        sholo.extend_spinor(cov, w, bad)


def test_propagation_matrix_rows_are_residuals(rng):
    m = rect_map(3, 2)
    pair = m.dual()
    cov = upsilon_cover(pair, [])
    w = geometric_weights(m, pair)
    P = sholo.propagation_matrix(cov, w)
    vals = rng.normal(size=pair.n_corners())
    stacked = np.concatenate(
        [sholo.check_propagation(cov, vals, cell, sholo.cell_theta(w, cell))
         for cell in sholo.quad_cells(pair)])
    assert np.abs(P @ vals - stacked).max() <= 1e-12


# ---------------------------------------------------------------------------
# sheet gluing of enumerated magnitudes

def test_resolve_sheet_signs_recovers_section(rng):
    m = rect_map(3, 3)
    pair = m.dual()
    cov = upsilon_cover(pair, [])
    w = geometric_weights(m, pair)
    N = nullspace_basis(pair, cov, w)
    truth = N @ rng.normal(size=N.shape[1])
    raw = truth * rng.choice([-1.0, 1.0], size=truth.shape)
    vals, report = sholo.resolve_sheet_signs(cov, w, raw)
    assert report["max_residual"] <= 1e-9 * report["scale"]
    assert np.allclose(vals, truth) or np.allclose(vals, -truth)

    with pytest.raises(DegenerateSpinorError):
        sholo.resolve_sheet_signs(cov, w, rng.normal(size=truth.shape))


def enumerated_spinor(n, v1, u1_face, max_rank):
    m = square_grid(n, n)
    pair = m.dual()
    w = IsingWeights.uniform(m, CRITICAL_X)
    u1 = grid_face_node(m, n, *u1_face)
    cov = upsilon_cover(pair, [("b", pair.vertex_class[v1]), ("w", u1)])
    raw = corner_observable(m, w, disorders=(v1,), spins=(u1,),
                            max_rank=max_rank)
    vals, report = sholo.resolve_sheet_signs(cov, w, raw)
    return m, pair, w, u1, cov, vals, report


def check_enumerated_spinor(m, pair, w, v1, u1, cov, vals, report):
    scale = report["scale"]
    res = sholo.all_residuals(cov, w, vals)
    interior = max(np.abs(r).max() for cid, r in res.items()
                   if pair.cells[cid].kind == "interior")
    wired = max(np.abs(r).max() for cid, r in res.items()
                if pair.cells[cid].kind == "wired_edge")
    assert interior <= 1e-9 * scale
    # the relation extends to the boundary quads of the reflected edges
    assert wired <= 1e-9 * scale
    for cell in pair.cells:
        if cell.kind in ("wired_corner", "free_edge"):
            assert np.abs(
                sholo.boundary_residuals(cov, vals, cell)).max() <= 1e-9 * scale

    H = sholo.integrate_HF(pair, vals)
    assert H.max_loop_residual <= 1e-12 * scale ** 2
    for e in m.boundary_edges():
        assert abs(H.circ(pair.wired_node[e])) <= 1e-12
    for c in pair.corners:
        assert H.bullet(c.v) - H.circ(c.u) >= -1e-12 * scale ** 2

    obs = sholo.complex_observable(pair, cov, vals)
    assert max(abs(obs.values[c] - obs.alt[c]) for c in obs.values) <= 1e-12

    cells_of = {}
    for cell in sholo.quad_cells(pair):
        for c in cell.corners:
            cells_of.setdefault(c, []).append(cell.id)
    eta = obs.eta
    for c, cl in cells_of.items():
        prs = [obs.projection(cid, c) for cid in cl]
        for pr in prs[1:]:
            assert abs(pr - prs[0]) <= 1e-12
        assert abs(prs[0] - eta[c] * vals[c]) <= 1e-12

    div, closure = sholo.observable_divergence(pair, obs)
    branch = {("b", v1), ("w", u1)}
    away = max(abs(div[k]) for k in sholo.full_fan_keys(pair) - branch)
    assert away <= 1e-9 * scale
    for k in branch:
        assert abs(div[k]) > 1e-3 * scale
        assert closure[k] == -1.0
    assert all(v == 1.0 for k, v in closure.items()
               if v is not None and k not in branch)


def test_enumerated_corner_field_is_sholomorphic():
    v1, u1_face = 12, (0, 3)
    m, pair, w, u1, cov, vals, report = enumerated_spinor(4, v1, u1_face, 16)
    check_enumerated_spinor(m, pair, w, v1, u1, cov, vals, report)
    # the batched sweep matches single-insertion calls
    for c in (0, 17, 51):
        one = mixed_correlator(m, w, CorrelatorRequest(
            disorders=(v1,), spins=(u1,), corners=(c,))).value
        raw_c = vals[c] if abs(vals[c]) > 0 else 0.0
        assert math.isclose(abs(one), abs(raw_c), rel_tol=0, abs_tol=1e-12)


@pytest.mark.slow
def test_enumerated_corner_field_5x5():
    v1, u1_face = 14, (4, 4)
    m, pair, w, u1, cov, vals, report = enumerated_spinor(5, v1, u1_face, 25)
    check_enumerated_spinor(m, pair, w, v1, u1, cov, vals, report)


# ---------------------------------------------------------------------------
# the squared-increment potential

def test_integrate_zero_spinor_constant():
    m = square_grid(2, 3)
    pair = m.dual()
    H = sholo.integrate_HF(pair, np.zeros(pair.n_corners()), base_value=0.25)
    assert all(v == 0.25 for v in H.values.values())


def test_dirac_potential_is_linear():
    m = square_grid(3, 3)
    pair = m.dual()
    delta = sholo.isoradial_delta(pair)
    F = np.conj(dirac_spinor(pair))
    H = sholo.integrate_HF(pair, F.astype(complex))
    pos = {("b", v): m.positions[v] for v in range(m.n_vertices)}
    pos.update({("w", u): pair.node_pos[u] for u in range(len(pair.node_pos))})
    shift = H.values[H.base] + 1j * pos[H.base] / delta
    for k, v in H.values.items():
        assert abs(v - (-1j * pos[k] / delta + shift)) <= 1e-12


def test_random_spinors_integrate(rng):
    m = square_grid(3, 3)
    pair = m.dual()
    cov = upsilon_cover(pair, [])
    w = IsingWeights.uniform(m, CRITICAL_X)
    N = nullspace_basis(pair, cov, w)
    quads = sholo.quad_cells(pair)
    for _ in range(1000):
        vals = N @ rng.normal(size=N.shape[1])
        H = sholo.integrate_HF(pair, vals)
        sq = max(float(v) for v in np.abs(vals) ** 2)
        for cell in quads:
            f = vals[list(cell.corners)] ** 2
            assert abs(f[0] + f[2] - f[1] - f[3]) <= 1e-12 * max(sq, 1.0)
        for c in pair.corners:
            assert H.bullet(c.v) - H.circ(c.u) >= -1e-12 * max(sq, 1.0)


# ---------------------------------------------------------------------------
# complex observables and the isoradial operators

def test_zero_spinor_zero_observable():
    m = square_grid(2, 2)
    pair = m.dual()
    cov = upsilon_cover(pair, [])
    obs = sholo.complex_observable(pair, cov, np.zeros(pair.n_corners()))
    assert all(v == 0 for v in obs.values.values())
    assert all(v == 0 for v in obs.alt.values())


def test_d_lambda_of_linear_functions():
    for m, pair, w in isoradial_fixtures():
        pos = {("b", v): m.positions[v] for v in range(m.n_vertices)}
        pos.update({("w", u): pair.node_pos[u]
                    for u in range(len(pair.node_pos))})
        const = {k: 3.25 for k in pos}
        for v in sholo.d_lambda(pair, const).values():
            assert abs(v) <= 1e-14
        a, b, c = 1.7, -0.6, 0.2
        combo = {k: a * p.real + b * p.imag + c for k, p in pos.items()}
        for v in sholo.d_lambda(pair, combo).values():
            assert abs(v - (0.5 * a - 0.5j * b)) <= 1e-12


def test_d_lambda_star_is_adjoint(rng):
    m = rect_map(3, 2)
    pair = m.dual()
    quads = sholo.quad_cells(pair)
    keys = {("b", v) for v in range(m.n_vertices)}
    keys |= {("w", u) for u in range(len(pair.node_pos))}
    H = {k: complex(*rng.normal(size=2)) for k in keys}
    Fq = {cell.id: complex(*rng.normal(size=2)) for cell in quads}
    dH = sholo.d_lambda(pair, H)
    lhs = sum(sholo.quad_area(pair, cell) * dH[cell.id] * np.conj(Fq[cell.id])
              for cell in quads)
    div = sholo.d_lambda_star(pair, Fq)
    rhs = sum(H[k] * np.conj(v) for k, v in div.items())
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def test_corner_projections_imply_vanishing_divergence(rng):
    for m, pair, w in [fx for fx in isoradial_fixtures()][1:]:
        cov = upsilon_cover(pair, [])
        N = nullspace_basis(pair, cov, w)
        vals = N @ rng.normal(size=N.shape[1])
        obs = sholo.complex_observable(pair, cov, vals)
        scale = max(abs(v) for v in obs.values.values())
        raw = sholo.d_lambda_star(pair, obs.values)
        div, closure = sholo.observable_divergence(pair, obs)
        for k in sholo.full_fan_keys(pair):
            assert abs(raw[k]) <= 1e-10 * scale
            assert abs(div[k]) <= 1e-10 * scale
            assert closure[k] == 1.0


def test_non_isoradial_map_rejected():
    m = square_grid(3, 3)
    pos = np.array(m.positions, dtype=complex)
    pos[5] += 0.11 + 0.07j
    arcs = [{"type": a.kind, "edges": list(a.edges)} for a in m.arcs]
    skew = build_map(pos, m.edges, arcs)
    pair = skew.dual()
    with pytest.raises(DomainError):
        sholo.isoradial_delta(pair)
    with pytest.raises(DomainError):
        sholo.d_lambda(pair, {})


def test_full_fan_keys_grid():
    m = square_grid(3, 3)
    pair = m.dual()
    keys = sholo.full_fan_keys(pair)
    assert len(keys) == 4 + 9
    assert {k for k, _ in keys} == {"b", "w"}

    m = square_grid(3, 3, boundary=[("free", 3), ("wired", 9)])
    pair = m.dual()
    assert len(sholo.full_fan_keys(pair)) == 4 + 6
