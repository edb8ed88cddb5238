"""Vertex and edge weight systems and their Laplacian-defect diagnostics.

Volume weights assign each vertex a third of the area of its triangle
star; cotangent weights assign each edge half the sum of the cotangents of
the two opposite angles.  The defect diagnostics quantify how far a
biweighted mesh is from reproducing the smooth Laplacian through cubic
terms:

  order 1:  | (1/mu_x) sum_y w_xy log_x(y) |                  (length)
  order 2:  max_L | (1/mu_x) sum_y w_xy L(log_x y)^2 / (2|L|^2) - 1 |
  order 3:  max_L | (1/mu_x) sum_y w_xy L(log_x y)^3 | / |L|^3 (length)

with L running over a probe set of unit covectors (the two chart axes plus
six evenly spaced directions); by polarization that controls all quadratic
and cubic forms up to a bounded constant, which slope tests absorb.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from . import meshes as mh
from .errors import DomainError, ContractError

PROBE_ANGLES = np.concatenate([[0.0, np.pi / 2], np.arange(6) * np.pi / 3.0])


@dataclass(frozen=True)
class LaplacianDefect:
    vertex: int
    order1: float
    order2: float
    order3: float


class BiweightedMesh:
    """Triangulation plus vertex weights mu and edge weights omega.

    ``graph-only`` instances (mesh=None) carry explicit arrays and support
    every operation that does not need triangles.
    """

    def __init__(self, mesh=None, vertex_weights=None, edge_weights=None,
                 vertices=None, edge_index=None, edge_words=None, deck=None,
                 geometry=None):
        self.mesh = mesh
        if mesh is not None:
            self.geometry = mesh.geometry
            self.deck = mesh.deck
            self.vertices = mesh.vertices
            self.edge_index = mesh.edge_index
            self.edge_words = mesh.edge_words
            self.vertex_classes = mesh.vertex_class
        else:
            self.geometry = geometry
            self.deck = deck
            self.vertices = np.asarray(vertices, dtype=float)
            self.edge_index = np.asarray(edge_index, dtype=np.int64)
            self.edge_words = list(edge_words) if edge_words is not None else \
                [deck.identity if deck else None] * len(self.edge_index)
            self.vertex_classes = np.zeros(len(self.vertices), dtype=np.int8)
        self.mu = np.asarray(vertex_weights, dtype=float)
        self.omega = np.asarray(edge_weights, dtype=float)
        if np.any(self.mu <= 0):
            raise DomainError("vertex weights must be positive")
        if len(self.mu) != len(self.vertices):
            raise ContractError("vertex weight count mismatch")
        if len(self.omega) != len(self.edge_index):
            raise ContractError("edge weight count mismatch")

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_edges(self):
        return len(self.edge_index)

    def directed_slots(self):
        if self.mesh is not None:
            return self.mesh.directed_slots()
        ei = self.edge_index
        src = np.concatenate([ei[:, 0], ei[:, 1]])
        dst = np.concatenate([ei[:, 1], ei[:, 0]])
        if self.deck is None:
            words = [None] * (2 * len(ei))
        else:
            words = list(self.edge_words) + [self.deck.inverse(w)
                                             for w in self.edge_words]
        return src, dst, words

    def slot_omega(self):
        return np.concatenate([self.omega, self.omega])

    def neighbor_points(self):
        """Lifted neighbor coordinates per directed slot (2E, 3)."""
        src, dst, words = self.directed_slots()
        pts = self.vertices[dst]
        if self.deck is not None:
            pts = mh.apply_words(self.deck, words, pts)
        return src, pts


def volume_weights(mesh, perturbation=None):
    """mu_x = (1/3) area of the triangle star of x (optionally perturbed).

    ``perturbation`` is a per-vertex multiplicative field (1 + o(1)) for
    asymptotic volume weight experiments.
    """
    areas = mesh.triangle_areas
    mu = np.zeros(mesh.n_vertices)
    np.add.at(mu, mesh.triangles.reshape(-1), np.repeat(areas, 3) / 3.0)
    if perturbation is not None:
        mu = mu * np.asarray(perturbation, dtype=float)
    return mu


def cotangent_weights(mesh):
    """omega_e = (cot alpha + cot beta) / 2 over the two opposite angles."""
    angles = mesh.triangle_angle_table
    if np.any(angles <= 1e-12) or np.any(angles >= np.pi - 1e-12):
        raise DomainError("degenerate angle in cotangent weights")
    omega = np.zeros(mesh.n_edges)
    cots = 1.0 / np.tan(angles)
    for s in range(3):
        np.add.at(omega, mesh.tri_edges[:, s], 0.5 * cots[:, (s + 2) % 3])
    return omega


def biweighted(mesh, perturbation=None):
    """Mesh equipped with volume vertex weights and cotangent edge weights."""
    return BiweightedMesh(mesh, volume_weights(mesh, perturbation),
                          cotangent_weights(mesh))


def _slot_components(bw):
    """Per-slot probe components of the log vectors.

    Returns (src, c1, c2) where (c1, c2) are the components of log_x(y) in
    the tangent frame at x, per directed slot.
    """
    ctx = bw.geometry
    src, pts = bw.neighbor_points()
    base = bw.vertices[src]
    logs = geo.log_map(ctx, base, pts)
    e1, e2 = geo.tangent_frame(ctx, base)
    return src, geo.inner(ctx, logs, e1), geo.inner(ctx, logs, e2)


def laplacian_defects(bw):
    """Vectorized defect table: arrays (order1, order2, order3) per vertex."""
    n = bw.n_vertices
    src, c1, c2 = _slot_components(bw)
    w = bw.slot_omega()

    g1 = np.zeros(n)
    g2 = np.zeros(n)
    np.add.at(g1, src, w * c1)
    np.add.at(g2, src, w * c2)
    order1 = np.hypot(g1, g2) / bw.mu

    order2 = np.zeros(n)
    order3 = np.zeros(n)
    for theta in PROBE_ANGLES:
        lv = np.cos(theta) * c1 + np.sin(theta) * c2
        q = np.zeros(n)
        np.add.at(q, src, w * lv * lv)
        order2 = np.maximum(order2, np.abs(q / bw.mu / 2.0 - 1.0))
        cub = np.zeros(n)
        np.add.at(cub, src, w * lv ** 3)
        order3 = np.maximum(order3, np.abs(cub / bw.mu))
    return order1, order2, order3


def laplacian_defect(bw, vertex):
    """Defect diagnostic of a single vertex."""
    o1, o2, o3 = laplacian_defects(bw)
    return LaplacianDefect(int(vertex), float(o1[vertex]),
                           float(o2[vertex]), float(o3[vertex]))


def weight_sum_bound(bw):
    """Normalized weight sums (1/mu_x) sum_y omega_xy, per vertex."""
    src, _, _ = bw.directed_slots()
    s = np.zeros(bw.n_vertices)
    np.add.at(s, src, bw.slot_omega())
    return s / bw.mu


def defect_decay_study(biweighted_seq):
    """Defect per (level, class, order) and fitted slopes per (class, order).

    Needs at least 3 levels with labeled vertex classes.  Two statistics are
    tracked per (level, class, order): ``max`` (the sup-norm defect, the
    quantity the acceptance table asserts on) and ``rms`` (the mu-weighted
    root-mean-square defect).  The distinction matters on curved surfaces:
    a vertex's star shape freezes when it is created (refinement halves the
    star's log vectors exactly), so sup-norm defects at old vertices stop
    decaying, while their weight mass shrinks and the rms keeps the rate
    the L2 convergence theory needs.

    Returns {"rows": [(level, r, class, order, max, rms)],
             "slopes": {(class, order): slope of max},
             "rms_slopes": {(class, order): slope of rms}}.
    """
    if len(biweighted_seq) < 3:
        raise DomainError("defect decay study needs at least 3 levels")
    rows = []
    series = {}
    rms_series = {}
    for bw in biweighted_seq:
        if bw.mesh is None:
            raise ContractError("defect study needs full meshes")
        r = float(np.max(bw.mesh.edge_lengths))
        defects = laplacian_defects(bw)
        classes = bw.vertex_classes
        for klass in (0, 1, 2):
            sel = classes == klass
            if not np.any(sel):
                continue
            mass = bw.mu[sel]
            for order in (1, 2, 3):
                vals = defects[order - 1][sel]
                vmax = float(np.max(vals))
                vrms = float(np.sqrt(np.sum(mass * vals ** 2) / np.sum(mass)))
                rows.append((bw.mesh.level, r, klass, order, vmax, vrms))
                series.setdefault((klass, order), []).append((r, vmax))
                rms_series.setdefault((klass, order), []).append((r, vrms))
    return {"rows": rows,
            "slopes": {k: fit_loglog_slope(v) for k, v in series.items()},
            "rms_slopes": {k: fit_loglog_slope(v) for k, v in rms_series.items()}}


def fit_loglog_slope(points, floor=1e-14):
    """Least-squares slope of log(value) against log(r).

    Zero/near-zero values are treated as exact and excluded; if fewer than
    two informative points remain the decay is reported as inf (exact).
    """
    pts = [(r, v) for r, v in points if v > floor]
    if len(pts) < 2:
        return np.inf
    r = np.log([p[0] for p in pts])
    v = np.log([p[1] for p in pts])
    return float(np.polyfit(r, v, 1)[0])


def pinkall_polthier_energy(a, b, c, a2, b2, c2):
    """Flat affine-map energy from the cotangent formula.

    Domain triangle (a, b, c) and image triangle (a2, b2, c2) in the plane:
    E = (|a'|^2 cot alpha + |b'|^2 cot beta + |c'|^2 cot gamma) / 4, where
    alpha is the domain angle at a and a' the image side opposite to it.
    """
    ctx = geo.EUCLIDEAN
    ang = geo.triangle_angles(ctx, a, b, c)
    opp = [geo.distance(ctx, b2, c2), geo.distance(ctx, c2, a2),
           geo.distance(ctx, a2, b2)]
    return float(sum(opp[i] ** 2 / np.tan(ang[..., i]) for i in range(3)) / 4.0)


def affine_map_energy(a, b, c, a2, b2, c2):
    """Smooth Dirichlet energy of the affine map between flat triangles."""
    m = np.column_stack([(b - a)[:2], (c - a)[:2]])
    m2 = np.column_stack([(b2 - a2)[:2], (c2 - a2)[:2]])
    jac = m2 @ np.linalg.inv(m)
    area = abs(np.linalg.det(m)) / 2.0
    return float(0.5 * np.sum(jac * jac) * area)
