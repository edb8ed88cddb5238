"""Discrete maps, energy, tension field, heat flow, and interpolation.

A discrete map assigns a target point (a lift in the target's universal
cover) to each quotient vertex of a biweighted mesh.  Equivariance is
carried by the representation ``rho``: the lifted value over the deck
translate word.w of a vertex is rho(word) applied to the stored value, so
every operation below automatically maps equivariant data to equivariant
data.

The discrete objects follow the weighted-graph formulas

    E(f)        = 1/2 sum_edges omega d(f x, f y)^2
    e(f)_x      = (1/(4 mu_x)) sum_{y ~ x} omega d(f x, f y)^2
    tau(f)_x    = (1/mu_x) sum_{y ~ x} omega log_{f x}(f y)
    u_{k+1}     = exp(t tau(u_k))                     (Jacobi update)
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import geometry as geo
from . import meshes as mh
from .quadrature import triangle_rule
from .errors import DomainError, ContractError, StabilityError

DEFAULT_TENSION_TOL_FACTOR = 1e-8


class DiscreteMap:
    """Vertex-indexed target values over a biweighted mesh."""

    def __init__(self, domain, values, target_geometry=None, rho=None):
        self.domain = domain
        self.target_geometry = target_geometry or domain.geometry
        self.rho = rho  # deck-like: .matrix(word); None means trivial deck
        self.values = geo.normalize_point(
            self.target_geometry, np.asarray(values, dtype=float))
        if len(self.values) != domain.n_vertices:
            raise ContractError("one value per vertex required")

    def with_values(self, values):
        return DiscreteMap(self.domain, values, self.target_geometry, self.rho)

    def neighbor_values(self):
        """(src, lifted neighbor values) per directed slot."""
        src, dst, words = self.domain.directed_slots()
        vals = self.values[dst]
        if self.rho is not None:
            vals = mh.apply_words(self.rho, words, vals)
        return src, vals

    def copy(self):
        return self.with_values(self.values.copy())


def identity_map(bw, target_deck=None):
    """Identity-induced map: same coordinates, generator-by-generator rho."""
    return DiscreteMap(bw, bw.vertices.copy(), bw.geometry,
                       target_deck if target_deck is not None else bw.deck)


def from_function(bw, func, target_geometry=None, rho=None):
    """Discretize a smooth map by evaluating it at the vertices."""
    vals = np.array([func(p) for p in bw.vertices], dtype=float)
    return DiscreteMap(bw, vals, target_geometry, rho)


def edge_image_distances(f):
    """Per (canonical) edge: distance between lifted endpoint values."""
    ei = f.domain.edge_index
    a = f.values[ei[:, 0]]
    b = f.values[ei[:, 1]]
    if f.rho is not None:
        b = mh.apply_words(f.rho, f.domain.edge_words, b)
    return geo.distance(f.target_geometry, a, b)


def energy(f):
    d = edge_image_distances(f)
    return float(0.5 * np.sum(f.domain.omega * d * d))


def energy_density(f):
    src, vals = f.neighbor_values()
    d = geo.distance(f.target_geometry, f.values[src], vals)
    acc = np.zeros(f.domain.n_vertices)
    np.add.at(acc, src, f.domain.slot_omega() * d * d)
    return acc / (4.0 * f.domain.mu)


def tension_field(f):
    """tau(f) as an (n, 3) array of tangent vectors at the map values."""
    src, vals = f.neighbor_values()
    logs = geo.log_map(f.target_geometry, f.values[src], vals)
    acc = np.zeros_like(f.values)
    np.add.at(acc, src, f.domain.slot_omega()[:, None] * logs)
    return acc / f.domain.mu[:, None]


def tension_l2_norm(f, tau=None):
    if tau is None:
        tau = tension_field(f)
    n2 = geo.inner(f.target_geometry, tau, tau)
    return float(np.sqrt(np.sum(f.domain.mu * n2)))


def balanced_residual(f):
    """Max distance-like residual of the balanced condition, per vertex:
    | sum omega log | / sum omega (length units)."""
    src, vals = f.neighbor_values()
    logs = geo.log_map(f.target_geometry, f.values[src], vals)
    acc = np.zeros_like(f.values)
    np.add.at(acc, src, f.domain.slot_omega()[:, None] * logs)
    wsum = np.zeros(f.domain.n_vertices)
    np.add.at(wsum, src, f.domain.slot_omega())
    return geo.norm(f.target_geometry, acc) / np.maximum(np.abs(wsum), 1e-300)


def default_step_size(bw):
    """1 / (2 max_x (sum_y omega_xy) / mu_x): a cheap inverse-Hessian bound."""
    src, _, _ = bw.directed_slots()
    wsum = np.zeros(bw.n_vertices)
    np.add.at(wsum, src, bw.slot_omega())
    beta = 2.0 * float(np.max(wsum / bw.mu))
    if beta <= 0:
        raise DomainError("step size rule requires positive weight sums")
    return 1.0 / beta


@dataclass
class FlowState:
    map: DiscreteMap
    step_size: float
    iteration: int = 0
    energy_history: list = field(default_factory=list)
    tension_norm_history: list = field(default_factory=list)

    def record(self):
        tau = tension_field(self.map)
        self.energy_history.append(energy(self.map))
        self.tension_norm_history.append(tension_l2_norm(self.map, tau))
        return tau


def flow_state(f, t=None):
    s = FlowState(map=f, step_size=t if t is not None else default_step_size(f.domain))
    s.record()
    return s


def heat_flow_step(state):
    """One Jacobi step u <- exp(t tau(u)); returns a new FlowState."""
    f = state.map
    tau = tension_field(f)
    new_map = f.with_values(
        geo.exp_map(f.target_geometry, f.values, state.step_size * tau))
    out = FlowState(map=new_map, step_size=state.step_size,
                    iteration=state.iteration + 1,
                    energy_history=list(state.energy_history),
                    tension_norm_history=list(state.tension_norm_history))
    out.record()
    return out


def run_flow(initial, t=None, tension_tol=None, max_iters=100000,
             on_step=None):
    """Iterate the discrete heat flow until the L2 tension norm is small.

    Raises StabilityError if the energy increases five steps in a row
    (step size too large).  Returns the final FlowState.  The loop
    evaluates the tension once per step and appends to shared histories
    (FlowState is single-owner mutable).
    """
    bw = initial.domain
    ctx = initial.target_geometry
    if t is None:
        t = default_step_size(bw)
    if t <= 0:
        raise DomainError("step size must be positive")
    if tension_tol is None:
        area = float(np.sum(bw.mu))
        tension_tol = DEFAULT_TENSION_TOL_FACTOR * np.sqrt(area)
    if np.any(bw.omega < 0):
        import warnings
        warnings.warn("mesh violates the Delaunay angle property "
                      "(negative cotangent weights); the flow may lose "
                      "its convexity guarantees", stacklevel=2)

    src, dst, words = bw.directed_slots()
    omega_slots = bw.slot_omega()[:, None]
    word_groups = None
    if initial.rho is not None:
        groups = {}
        for i, w in enumerate(words):
            groups.setdefault(w, []).append(i)
        ident = getattr(initial.rho, "identity", None)
        word_groups = [(np.asarray(idx), initial.rho.matrix(w))
                       for w, idx in groups.items() if w != ident]

    values = initial.values.copy()
    energies = []
    tensions = []
    state = FlowState(map=initial, step_size=t, iteration=0,
                      energy_history=energies, tension_norm_history=tensions)
    bad_streak = 0
    for it in range(max_iters + 1):
        nbr = values[dst]
        if word_groups:
            nbr = nbr.copy()
            for idx, m in word_groups:
                nbr[idx] = geo.apply_isometry(ctx, m, values[dst[idx]])
        logs = geo.log_map(ctx, values[src], nbr)
        d2 = geo.inner(ctx, logs, logs)
        energies.append(float(0.25 * np.sum(omega_slots[:, 0] * d2)))
        acc = np.zeros_like(values)
        np.add.at(acc, src, omega_slots * logs)
        tau = acc / bw.mu[:, None]
        tensions.append(float(np.sqrt(np.sum(
            bw.mu * geo.inner(ctx, tau, tau)))))
        state.iteration = it
        state.map = initial.with_values(values)
        if not np.isfinite(energies[-1]):
            raise StabilityError(
                f"energy diverged; reduce the step size below {t}")
        if len(energies) > 1 and \
                energies[-1] > energies[-2] + 1e-13 * max(1.0, abs(energies[-2])):
            bad_streak += 1
            if bad_streak >= 5:
                raise StabilityError(
                    "energy increased for 5 consecutive steps; "
                    f"reduce the step size below {t}")
        else:
            bad_streak = 0
        if on_step is not None:
            on_step(state)
        if tensions[-1] <= tension_tol or it == max_iters:
            break
        values = geo.exp_map(ctx, values, t * tau)
    state.map = initial.with_values(values)
    return state


def run_flow_adaptive(initial, t=None, tension_tol=None, max_iters=100000,
                      max_halvings=10, on_step=None):
    """run_flow with step-size halving on instability.

    The default step rule bounds the flat part of the Hessian only; far
    from the minimizer in negative curvature the true bound involves the
    image edge lengths, so the first attempts may be rejected.
    """
    if t is None:
        t = default_step_size(initial.domain)
    last = None
    for _ in range(max_halvings):
        try:
            return run_flow(initial, t=t, tension_tol=tension_tol,
                            max_iters=max_iters, on_step=on_step)
        except StabilityError as exc:
            last = exc
            t = t / 2.0
    raise last


def cfl_step_count(r, c=1.0, d=2.0, constant=1.0):
    """k(n) = ceil(C log(1/r) / r^(c+d)); 0 when r >= 1 (log nonpositive)."""
    val = constant * np.log(1.0 / r) / r ** (c + d)
    return max(int(np.ceil(val)), 0)


def prolong(f, refined_bw):
    """Warm-start a map on the refined mesh of f's domain.

    Old vertices keep their values; each new vertex (an edge midpoint) gets
    the center-of-mass interpolation at the midpoint, i.e. the geodesic
    midpoint of the lifted image edge.
    """
    coarse = f.domain.mesh
    if coarse is None:
        raise ContractError("prolongation needs a triangulated domain")
    if refined_bw.mesh.level != coarse.level + 1 or \
            refined_bw.n_vertices != coarse.n_vertices + coarse.n_edges:
        raise ContractError("target mesh is not the refinement of the domain")
    ei = coarse.edge_index
    a = f.values[ei[:, 0]]
    b = f.values[ei[:, 1]]
    if f.rho is not None:
        b = mh.apply_words(f.rho, coarse.edge_words, b)
    mids = geo.geodesic_midpoint(f.target_geometry, a, b)
    values = np.vstack([f.values, mids])
    return DiscreteMap(refined_bw, values, f.target_geometry, f.rho)


def map_distances(f, g):
    """(L2, Linf) distances between maps over the same biweighted mesh."""
    if f.domain is not g.domain and f.domain.n_vertices != g.domain.n_vertices:
        raise ContractError("maps must share a domain mesh")
    d = geo.distance(f.target_geometry, f.values, g.values)
    l2 = float(np.sqrt(np.sum(f.domain.mu * d * d)))
    return l2, float(np.max(d))


# ---------------------------------------------------------------------------
# Center-of-mass interpolation


def barycentric_coordinates(ctx, tri, p):
    """Weights (a, b, g) with p the barycenter of the triangle vertices.

    Solves the linear characterization sum_i w_i log_p(A_i) = 0, sum w = 1
    in the tangent frame at p.  Vectorized over leading axes.
    """
    tri = np.asarray(tri, dtype=float)
    p = np.asarray(p, dtype=float)
    logs = geo.log_map(ctx, p[..., None, :], tri)
    e1, e2 = geo.tangent_frame(ctx, p)
    rows = np.stack([geo.inner(ctx, logs, e1[..., None, :]),
                     geo.inner(ctx, logs, e2[..., None, :]),
                     np.ones(logs.shape[:-1])], axis=-2)
    rhs = np.zeros(rows.shape[:-1])
    rhs[..., 2] = 1.0
    return np.linalg.solve(rows, rhs[..., None])[..., 0]


def point_from_barycentric(ctx, tri, w):
    """Barycenter of the triangle vertices with the given weights."""
    return geo.weighted_barycenter(ctx, tri, w)


def locate(mesh, p, tol=1e-9):
    """(triangle index, barycentric weights) of a surface point.

    The point must lie in some lifted triangle of the stored cover;
    intended for points produced from the mesh's own data.
    """
    corners = mesh.corner_points
    w = barycentric_coordinates(mesh.geometry, corners, np.asarray(p, dtype=float))
    inside = np.all(w >= -tol, axis=-1)
    idx = np.flatnonzero(inside)
    if len(idx) == 0:
        raise DomainError("point lies outside every stored triangle lift")
    t = int(idx[0])
    return t, np.clip(w[t], 0.0, None) / np.sum(np.clip(w[t], 0.0, None))


def image_triangle(f, t):
    """Lifted image corners of triangle t under the map."""
    tri = f.domain.mesh.triangles[t]
    words = f.domain.mesh.corner_words[t]
    vals = f.values[tri]
    if f.rho is not None:
        vals = mh.apply_words(f.rho, list(words), vals)
    return vals


def interpolate(f, t, w):
    """Center-of-mass interpolation at barycentric weights w of triangle t."""
    w = np.asarray(w, dtype=float)
    if np.any(w < -1e-9):
        raise DomainError("barycentric weights must be nonnegative")
    return geo.weighted_barycenter(f.target_geometry, image_triangle(f, t),
                                   np.maximum(w, 1e-300))


def interpolate_at_point(f, p):
    t, w = locate(f.domain.mesh, p)
    return interpolate(f, t, w)


def _batched_barycenter(ctx, tris, weights):
    return geo.weighted_barycenter(ctx, tris, np.maximum(weights, 1e-300))


def interpolated_energy(f, quadrature_order=4, step=1e-5):
    """Dirichlet energy of the center-of-mass interpolation, by quadrature.

    The derivative of the interpolation is taken by central differences in
    barycentric coordinates; on flat domain and target (where barycenters
    are affine) the quadrature reproduces the piecewise-affine energy
    exactly up to rounding.
    """
    mesh = f.domain.mesh
    if mesh is None:
        raise ContractError("interpolated energy needs a triangulated domain")
    ctx_d = mesh.geometry
    ctx_t = f.target_geometry
    nodes, wts = triangle_rule(quadrature_order)
    dom_tris = mesh.corner_points                      # (F, 3, 3)
    img_tris = np.stack([image_triangle(f, t)
                         for t in range(mesh.n_triangles)])
    areas = mesh.triangle_areas

    d1 = np.array([1.0, -1.0, 0.0]) * step
    d2 = np.array([1.0, 0.0, -1.0]) * step

    total = 0.0
    for node, qw in zip(nodes, wts):
        offs = [node, node + d1, node - d1, node + d2, node - d2]
        pts_d = [_batched_barycenter(ctx_d, dom_tris,
                                     np.broadcast_to(o, (len(dom_tris), 3)))
                 for o in offs]
        pts_t = [_batched_barycenter(ctx_t, img_tris,
                                     np.broadcast_to(o, (len(img_tris), 3)))
                 for o in offs]
        p0, pd = pts_d[0], pts_d[1:]
        q0, qd = pts_t[0], pts_t[1:]
        e1, e2 = geo.tangent_frame(ctx_d, p0)
        f1, f2 = geo.tangent_frame(ctx_t, q0)
        # domain and target differentials along the two barycentric rays
        du = [(geo.log_map(ctx_d, p0, pd[0]) - geo.log_map(ctx_d, p0, pd[1])) / 2.0,
              (geo.log_map(ctx_d, p0, pd[2]) - geo.log_map(ctx_d, p0, pd[3])) / 2.0]
        dv = [(geo.log_map(ctx_t, q0, qd[0]) - geo.log_map(ctx_t, q0, qd[1])) / 2.0,
              (geo.log_map(ctx_t, q0, qd[2]) - geo.log_map(ctx_t, q0, qd[3])) / 2.0]
        gmat = np.stack([np.stack([geo.inner(ctx_d, du[0], e1),
                                   geo.inner(ctx_d, du[1], e1)], axis=-1),
                         np.stack([geo.inner(ctx_d, du[0], e2),
                                   geo.inner(ctx_d, du[1], e2)], axis=-1)], axis=-2)
        fmat = np.stack([np.stack([geo.inner(ctx_t, dv[0], f1),
                                   geo.inner(ctx_t, dv[1], f1)], axis=-1),
                         np.stack([geo.inner(ctx_t, dv[0], f2),
                                   geo.inner(ctx_t, dv[1], f2)], axis=-1)], axis=-2)
        jac = fmat @ np.linalg.inv(gmat)
        dens = 0.5 * np.sum(jac * jac, axis=(-2, -1))
        total += qw * np.sum(dens * areas)
    return float(total)


def interpolation_lipschitz_check(f, g, samples=200, quadrature_order=4,
                                  rng=None):
    """Sampled sup and quadrature L2 Lipschitz checks of the interpolation.

    Returns a report dict with the measured ratios; the L-infinity bound is
    1 and the L2 bound sqrt(1 + dim M) = sqrt(3).
    """
    mesh = f.domain.mesh
    ctx_t = f.target_geometry
    if rng is None:
        rng = np.random.default_rng(0)
    dl2, dinf = map_distances(f, g)

    # sup over random barycentric samples
    ts = rng.integers(0, mesh.n_triangles, samples)
    ws = rng.dirichlet(np.ones(3), size=samples)
    img_f = np.stack([image_triangle(f, t) for t in ts])
    img_g = np.stack([image_triangle(g, t) for t in ts])
    pf = _batched_barycenter(ctx_t, img_f, ws)
    pg = _batched_barycenter(ctx_t, img_g, ws)
    sup = float(np.max(geo.distance(ctx_t, pf, pg)))

    # quadrature L2 distance of the interpolations
    nodes, wts = triangle_rule(quadrature_order)
    img_f_all = np.stack([image_triangle(f, t) for t in range(mesh.n_triangles)])
    img_g_all = np.stack([image_triangle(g, t) for t in range(mesh.n_triangles)])
    areas = mesh.triangle_areas
    acc = 0.0
    for node, qw in zip(nodes, wts):
        w = np.broadcast_to(node, (mesh.n_triangles, 3))
        qf = _batched_barycenter(ctx_t, img_f_all, w)
        qg = _batched_barycenter(ctx_t, img_g_all, w)
        acc += qw * np.sum(areas * geo.distance(ctx_t, qf, qg) ** 2)
    l2 = float(np.sqrt(acc))

    return {
        "sup_interp": sup,
        "dinf": dinf,
        "sup_ok": sup <= dinf * (1.0 + 1e-8) + 1e-14,
        "l2_interp": l2,
        "dl2": dl2,
        "l2_bound": np.sqrt(3.0) * dl2,
        "l2_ok": l2 <= np.sqrt(3.0) * dl2 * (1.0 + 1e-6) + 1e-14,
    }


# ---------------------------------------------------------------------------
# Appendix-style L2 / Linf bootstrap inequality


def bootstrap_bound_check(u, v, lipschitz=None, balance_tol=1e-8):
    """Check d_inf(u, v) <= max((kappa m)^(-1/2) d_L2(u, v), sqrt(r)).

    ``v`` must satisfy the balanced condition (discrete harmonicity);
    ``u`` is the Lipschitz datum.  kappa = min(A log(1/r) + B,
    surj rad - 1) with A = 1/(2 log delta), B = -log_delta(L) - 1 and
    delta = 2 (1 + omega V); a nonpositive kappa makes the bound vacuous.
    """
    resid = float(np.max(balanced_residual(v)))
    if resid > balance_tol:
        raise ContractError(
            f"map is not balanced: residual {resid:.2e} > {balance_tol:.0e}")
    mesh = u.domain.mesh
    r = float(np.max(mesh.edge_lengths))
    m = float(np.min(u.domain.mu))
    omega_ratio = float(np.max(u.domain.omega) /
                        max(np.min(u.domain.omega), 1e-300))
    src, _, _ = u.domain.directed_slots()
    valence = int(np.max(np.bincount(src, minlength=u.domain.n_vertices)))
    if lipschitz is None:
        # measured Lipschitz constant of the datum across edges
        dd = edge_image_distances(u)
        lipschitz = float(np.max(dd / u.domain.mesh.edge_lengths))
    delta = 2.0 * (1.0 + omega_ratio * valence)
    a_const = 1.0 / (2.0 * np.log(delta))
    b_const = -np.log(max(lipschitz, 1e-300)) / np.log(delta) - 1.0
    surj = mesh.surjectivity_radius()
    kappa = min(a_const * np.log(1.0 / r) + b_const, surj - 1.0)

    dl2, dinf = map_distances(u, v)
    if kappa <= 0:
        bound = np.inf  # the proposition's constants are vacuous here
    else:
        bound = max((kappa * m) ** -0.5 * dl2, np.sqrt(r))
    return {
        "dinf": dinf, "dl2": dl2, "kappa": kappa, "m": m,
        "omega_ratio": omega_ratio, "valence": valence,
        "lipschitz": lipschitz, "surj_radius": surj, "r": r,
        "bound": bound, "holds": dinf <= bound,
        "margin": bound - dinf,
    }
