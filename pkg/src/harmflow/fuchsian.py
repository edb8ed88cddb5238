"""Fuchsian groups of closed genus-2 hyperbolic surfaces.

Construction route: a marked pair of pants ``<X, Y>`` is assembled from
right-angled hexagon trigonometry (X, Y, Z = (XY)^-1 translate along the
three boundary geodesics); a second copy is glued along all three curves
with the prescribed twists, yielding generators of the surface group.  With
t1, t2 the connector isometries across curves 1 and 2, the four marked
generators

    a1 = X,  b1 = X^-1 t1^-1,  a2 = X^-1 t2^-1,  b2 = Y^-1

satisfy the surface relator [a1,b1][a2,b2] = t1^-1 X^-1 t1 t2^-1 Y^-1 t2 X Y,
which is the identity by construction of the gluing.

Words over the group are strings in "abcd" (generators a1,b1,a2,b2) and
"ABCD" (their inverses); "" is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .errors import DomainError, NumericalError

GEN_LETTERS = "abcd"
ALL_LETTERS = "abcdABCD"
RELATOR = "abABcdCD"

# generic offset of the Dirichlet center from the hyperboloid origin,
# breaking accidental symmetries of the construction
CENTER_OFFSET = (0.1317, 0.0473)


@dataclass(frozen=True)
class FenchelNielsen:
    """Pants-curve lengths and twists of the genus-2 chain decomposition."""

    lengths: tuple
    twists: tuple

    def __post_init__(self):
        if len(self.lengths) != 3 or len(self.twists) != 3:
            raise DomainError("Fenchel-Nielsen data needs 3 lengths and 3 twists")
        if any(l <= 0 for l in self.lengths):
            raise DomainError("pants-curve lengths must be positive")
        object.__setattr__(self, "lengths", tuple(float(l) for l in self.lengths))
        object.__setattr__(self, "twists", tuple(float(t) for t in self.twists))

    @classmethod
    def parse(cls, text):
        vals = [float(x) for x in text.replace(";", ",").split(",")]
        if len(vals) != 6:
            raise DomainError("expected 6 comma-separated reals l1,l2,l3,t1,t2,t3")
        return cls(tuple(vals[:3]), tuple(vals[3:]))

    def format(self):
        return ",".join(format(v, ".17g") for v in self.lengths + self.twists)


def reduce_word(word):
    out = []
    for ch in word:
        if out and out[-1] == ch.swapcase():
            out.pop()
        else:
            out.append(ch)
    return "".join(out)


def invert_word(word):
    return word[::-1].swapcase()


class FuchsianGroup:
    """Marked genus-2 surface group acting on the hyperboloid.

    Immutable after construction.  ``matrix(word)`` evaluates words in the
    generators; ``canon(word)`` returns the registry spelling of the group
    element, so equal elements compare equal as strings.
    """

    genus = 2

    def __init__(self, gens, fn=None):
        if set(gens) != set(GEN_LETTERS):
            raise DomainError("generators must be labelled a, b, c, d")
        self.fn = fn
        self.geometry = geo.HYPERBOLIC
        self._mats = {}
        for letter, m in gens.items():
            m = np.asarray(m, dtype=float)
            # the defect of a genuine isometry measures as ~ eps |m|^2
            tol = 1e-9 + 64.0 * np.finfo(float).eps * float(np.sum(m * m))
            if geo.isometry_defect(geo.HYPERBOLIC, m) > tol:
                raise DomainError(f"generator {letter} is not an isometry")
            self._mats[letter] = m
            self._mats[letter.upper()] = geo.inverse_isometry(geo.HYPERBOLIC, m)
        self._word_cache = {"": np.eye(3)}
        self._canon_cache = {"": ""}
        self._registry = [(np.eye(3), "")]

    @property
    def generators(self):
        return [self._mats[ch] for ch in GEN_LETTERS]

    def matrix(self, word):
        m = self._word_cache.get(word)
        if m is None:
            m = np.eye(3)
            for ch in word:
                if ch not in self._mats:
                    raise DomainError(f"unknown generator letter {ch!r}")
                m = m @ self._mats[ch]
            self._word_cache[word] = m
        return m

    def canon(self, word):
        """Canonical spelling of the group element, by matrix proximity.

        Spellings of one element that route through the surface relator pick
        up its float64 quantization residual (up to ~1e-7 after conjugation),
        while distinct elements of the discrete group stay >= ~1e-5 apart in
        matrix norm at the word lengths we use; 1e-6 sits between.
        """
        word = reduce_word(word)
        hit = self._canon_cache.get(word)
        if hit is not None:
            return hit
        m = self.matrix(word)
        tol = 1e-6 + 1e-8 * float(np.max(np.abs(m)))
        for mat, spelling in self._registry:
            if np.max(np.abs(mat - m)) < tol:
                self._canon_cache[word] = spelling
                return spelling
        self._registry.append((m, word))
        self._canon_cache[word] = word
        return word

    def compose(self, w1, w2):
        return reduce_word(w1 + w2)

    def inverse(self, word):
        return invert_word(word)

    def relator_residual(self):
        """Operator-norm distance of [a1,b1][a2,b2] from the identity.

        Evaluated in extended precision: the float64 product of the relator
        word amplifies rounding by its partial-product norms, which would
        drown the actual residual of the stored generators.
        """
        return float(np.linalg.norm(
            _mp_word_matrix(self._mats, RELATOR) - np.eye(3), ord=2))

    def relator_noise_floor(self):
        """First-order float64 bound on the measurable relator residual.

        The generators are stored rounded to machine precision; the relator
        word amplifies those roundings by the norms of its prefix and suffix
        partial products.  Residuals at or below this floor carry no
        information about the exactness of the construction.
        """
        mats = [self._mats[ch] for ch in RELATOR]
        prefixes = [np.eye(3)]
        for m in mats[:-1]:
            prefixes.append(prefixes[-1] @ m)
        suffixes = [np.eye(3)]
        for m in mats[::-1][:-1]:
            suffixes.append(m @ suffixes[-1])
        suffixes = suffixes[::-1]
        eps = np.finfo(float).eps
        amp = sum(np.linalg.norm(p, 2) * np.linalg.norm(m, 2) * np.linalg.norm(s, 2)
                  for p, m, s in zip(prefixes, mats, suffixes))
        return float(8.0 * eps * amp)

    def enumerate(self, max_word_length, prune_distance=None, base=None):
        """All distinct group elements spelled by reduced words up to the
        length, as a list of (word, matrix), deduplicated by matrix
        proximity (1e-8).  ``prune_distance`` drops elements moving ``base``
        farther than the bound (and stops exploring far branches)."""
        if max_word_length < 0:
            raise DomainError("word length must be nonnegative")
        if base is None:
            base = geo.ORIGIN_HYPERBOLIC
        seen = _MatrixSet()
        seen.add(np.eye(3))
        out = [("", np.eye(3))]
        frontier = [("", np.eye(3))]
        slack = 0.0
        if prune_distance is not None:
            slack = max(float(geo.distance(geo.HYPERBOLIC, geo.apply_isometry(
                geo.HYPERBOLIC, self._mats[ch], base), base)) for ch in GEN_LETTERS)

        for _ in range(max_word_length):
            new_frontier = []
            for word, m in frontier:
                for ch in ALL_LETTERS:
                    if word and word[-1] == ch.swapcase():
                        continue
                    w2 = word + ch
                    m2 = m @ self._mats[ch]
                    if not seen.add(m2):
                        continue
                    if prune_distance is not None:
                        d = float(geo.distance(geo.HYPERBOLIC, geo.apply_isometry(
                            geo.HYPERBOLIC, m2, base), base))
                        if d > prune_distance:
                            # children can come back closer by at most one step
                            if d <= prune_distance + slack:
                                new_frontier.append((w2, m2))
                            continue
                    out.append((w2, m2))
                    new_frontier.append((w2, m2))
            frontier = new_frontier
        return out

    def discreteness_defect(self, max_word_length=6, prune_distance=4.0):
        """Smallest displacement of the basepoint by a nontrivial short word.

        A value near zero signals a non-discrete (or wrongly glued) group.
        """
        best = np.inf
        for word, m in self.enumerate(max_word_length, prune_distance=prune_distance):
            if not word:
                continue
            d = float(geo.distance(geo.HYPERBOLIC, geo.apply_isometry(
                geo.HYPERBOLIC, m, geo.ORIGIN_HYPERBOLIC), geo.ORIGIN_HYPERBOLIC))
            best = min(best, d)
        return best

    def export_text(self):
        """Structured-text document with generator matrices, row-major."""
        lines = ["harmflow-group v1", "geometry hyperbolic", "genus 2"]
        if self.fn is not None:
            lines.append("fenchel-nielsen " + self.fn.format())
        for ch in GEN_LETTERS:
            m = self._mats[ch]
            lines.append("generator " + ch + " " +
                         " ".join(format(x, ".17g") for x in m.reshape(-1)))
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Geodesic helpers (hyperboloid model)



def _polish_isometry(m, sweeps=3):
    """Newton projection of a near-SO(2,1) matrix onto the group.

    Iterates M <- M (3I - J M^T J M) / 2, which converges quadratically to
    the J-orthogonal polar factor.
    """
    j = geo.MINKOWSKI
    for _ in range(sweeps):
        e = j @ m.T @ j @ m
        m = m @ (1.5 * np.eye(3) - 0.5 * e)
    return m


_SO21_BASIS = [
    geo.MINKOWSKI @ np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]),
    geo.MINKOWSKI @ np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]),
    geo.MINKOWSKI @ np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, -1.0, 0.0]]),
]


def _mp_word_matrix(mats, word, dps=40):
    """Product of stored float64 matrices along a word, at ``dps`` digits.

    Returns the result rounded back to float64; only the evaluation is
    extended, so this reports the true product of the stored matrices.
    """
    from mpmath import mp, mpf

    with mp.workdps(dps):
        out = [[mpf(1 if i == j else 0) for j in range(3)] for i in range(3)]
        for ch in word:
            g = mats[ch]
            out = [[sum(out[i][k] * mpf(float(g[k, j])) for k in range(3))
                    for j in range(3)] for i in range(3)]
        return np.array([[float(out[i][j]) for j in range(3)] for i in range(3)])


def _relator_matrix(gens):
    mats = dict(gens)
    for ch in GEN_LETTERS:
        mats[ch.upper()] = geo.inverse_isometry(geo.HYPERBOLIC, mats[ch])
    return _mp_word_matrix(mats, RELATOR)


def _enforce_relator(gens, iters=4):
    """Minimum-norm Newton correction of b and c onto the relator variety.

    Rounding the exact generators to float64 leaves a relator residual
    amplified by the word's partial products; this nudges (b, c) by that
    rounding-level amount so [a,b][c,d] = 1 holds as well as float64 can
    express it, leaving a and d (which carry pants-curve lengths) untouched.
    The Jacobian is the exact differential of the relator word, so the
    iteration is a true Newton method.
    """
    from scipy.linalg import expm

    gens = dict(gens)
    best = dict(gens)
    best_resid = np.max(np.abs(_relator_matrix(gens) - np.eye(3)))
    for _ in range(iters):
        mats = dict(gens)
        for ch in GEN_LETTERS:
            mats[ch.upper()] = geo.inverse_isometry(geo.HYPERBOLIC, mats[ch])
        word_mats = [mats[ch] for ch in RELATOR]
        prefixes = [np.eye(3)]
        for m in word_mats:
            prefixes.append(prefixes[-1] @ m)
        suffixes = [np.eye(3)]
        for m in word_mats[::-1]:
            suffixes.append(m @ suffixes[-1])
        suffixes = suffixes[::-1]  # suffixes[i] = product of letters i..end
        # the residual must be seen below the float64 product noise, so it is
        # evaluated in extended precision; the Jacobian can stay float64
        resid = (_relator_matrix(gens) - np.eye(3)).reshape(-1)
        if np.max(np.abs(resid)) < best_resid:
            best = dict(gens)
            best_resid = np.max(np.abs(resid))
        if best_resid < 1e-12:
            break
        cols = []
        for target in ("b", "c"):
            for k in _SO21_BASIS:
                col = np.zeros((3, 3))
                for i, ch in enumerate(RELATOR):
                    if ch == target:
                        # d(exp(sK) g)/ds = K g
                        col += prefixes[i] @ k @ mats[ch] @ suffixes[i + 1]
                    elif ch == target.upper():
                        # d(g^-1 exp(-sK))/ds = -g^-1 K
                        col -= prefixes[i] @ mats[ch] @ k @ suffixes[i + 1]
                cols.append(col.reshape(-1))
        jac = np.column_stack(cols)
        u, s, vt = np.linalg.svd(jac, full_matrices=False)
        # the image is tangent to SO(2,1) at the identity: rank exactly 3
        keep = slice(0, 3)
        step = -(vt[keep].T @ ((u[:, keep].T @ resid) / s[keep]))
        for i, target in enumerate(("b", "c")):
            delta = sum(a * k for a, k in zip(step[3 * i:3 * i + 3], _SO21_BASIS))
            gens[target] = _polish_isometry(expm(delta) @ gens[target])
    final = np.max(np.abs(_relator_matrix(gens) - np.eye(3)))
    return (dict(gens), final) if final < best_resid else (best, best_resid)


def _enforce_relator_dithered(gens, restarts=6, target=2e-9):
    """Newton enforcement with tiny random restarts.

    The float64 quantization of the generator entries bounds the reachable
    relator residual; dithering the start by ~1e-13 explores neighboring
    representable solutions and keeps the best one.
    """
    from scipy.linalg import expm

    best, best_resid = _enforce_relator(gens)
    if best_resid <= target:
        return best
    rng = np.random.default_rng(0)
    for _ in range(restarts):
        kicked = dict(best)
        for ch in ("b", "c"):
            delta = sum(a * k for a, k in zip(
                rng.normal(0.0, 3e-13, 3), _SO21_BASIS))
            kicked[ch] = _polish_isometry(expm(delta) @ kicked[ch])
        cand, resid = _enforce_relator(kicked)
        if resid < best_resid:
            best, best_resid = cand, resid
        if best_resid <= target:
            break
    return best





# ---------------------------------------------------------------------------
# High-precision construction backend
#
# The gluing chains a few dozen frame operations whose float64 errors get
# amplified by cosh factors of the separation between axes; evaluating the
# construction at 50 digits and rounding the four final generators to
# float64 puts every downstream residual at the representation floor.


def _mp_candidate_gens(fn, side, direction):
    from mpmath import mp, mpf, cosh, sinh, sqrt, acosh

    def mdot(u, v):
        return u[0] * v[0] + u[1] * v[1] - u[2] * v[2]

    def mcross(u, v):
        return [u[1] * v[2] - u[2] * v[1],
                u[2] * v[0] - u[0] * v[2],
                -(u[0] * v[1] - u[1] * v[0])]

    def sub(u, v):
        return [u[i] - v[i] for i in range(3)]

    def scl(s, u):
        return [s * u[i] for i in range(3)]

    def add(u, v):
        return [u[i] + v[i] for i in range(3)]

    def unit_sp(v):
        n = sqrt(mdot(v, v))
        return [x / n for x in v]

    def norm_pt(p):
        s = sqrt(-mdot(p, p))
        q = [x / s for x in p]
        return q if q[2] > 0 else [-x for x in q]

    def mexp(p, v):
        t = sqrt(mdot(v, v))
        if t == 0:
            return list(p)
        return norm_pt(add(scl(cosh(t), p), scl(sinh(t) / t, v)))

    def mlog(p, q):
        d = acosh(max(-mdot(p, q), mpf(1)))
        if d == 0:
            return [mpf(0)] * 3
        u = add(q, scl(mdot(p, q), p))
        n = sqrt(mdot(u, u))
        return scl(d / n, u)

    def matvec(m, v):
        return [sum(m[i][j] * v[j] for j in range(3)) for i in range(3)]

    def matmul(a, b):
        return [[sum(a[i][k] * b[k][j] for k in range(3)) for j in range(3)]
                for i in range(3)]

    def matinv_iso(m):
        # J M^T J
        j = [1, 1, -1]
        return [[j[i] * m[k][i] * j[k] for k in range(3)] for i in range(3)]

    def frame_iso(p, u, q, v):
        u2 = unit_sp(mcross(p, u))
        v2 = unit_sp(mcross(q, v))
        a_cols = [u, u2, p]
        b_cols = [v, v2, q]
        a = [[a_cols[j][i] for j in range(3)] for i in range(3)]
        b = [[b_cols[j][i] for j in range(3)] for i in range(3)]
        return matmul(b, matinv_iso(a))

    def translation(p, u, length):
        q = mexp(p, scl(length, u))
        v = add(scl(sinh(length), p), scl(cosh(length), u))
        return frame_iso(p, u, q, v)

    def axis_normal(m):
        minv = matinv_iso(m)
        s = [[m[i][j] - minv[i][j] for j in range(3)] for i in range(3)]
        best, bestn = None, mpf(-1)
        for i, j in ((0, 1), (0, 2), (1, 2)):
            c = [s[i][1] * s[j][2] - s[i][2] * s[j][1],
                 s[i][2] * s[j][0] - s[i][0] * s[j][2],
                 s[i][0] * s[j][1] - s[i][1] * s[j][0]]
            nn = c[0] ** 2 + c[1] ** 2 + c[2] ** 2
            if nn > bestn:
                bestn, best = nn, c
        return unit_sp(best)

    def perp_foot(n1, n2):
        n3 = unit_sp(mcross(n1, n2))
        return norm_pt(mcross(n1, n3)), norm_pt(mcross(n2, n3))

    def axis_dir_at(m, foot):
        return unit_sp(mlog(foot, matvec(m, foot)))

    with mp.workdps(50):
        l1, l2, l3 = (mpf(x) for x in fn.lengths)
        tau1, tau2, tau3 = (mpf(x) for x in fn.twists)
        ha, hb, hc = l1 / 2, l2 / 2, l3 / 2

        o = [mpf(0), mpf(0), mpf(1)]
        e1 = [mpf(1), mpf(0), mpf(0)]
        e2 = [mpf(0), mpf(1), mpf(0)]

        # marked pants 1: X along the e2-geodesic, Y across the e1-geodesic
        d3 = acosh((cosh(hc) + cosh(ha) * cosh(hb)) / (sinh(ha) * sinh(hb)))
        x_mat = translation(o, e2, l1)
        pd = mexp(o, scl(d3, e1))
        td = unit_sp(mlog(pd, mexp(o, scl(2 * d3, e1))))
        ud = unit_sp(mcross(pd, td))
        y_mat = translation(pd, ud, -l2)
        z_mat = matinv_iso(matmul(x_mat, y_mat))

        n_x, n_y, n_z = axis_normal(x_mat), axis_normal(y_mat), axis_normal(z_mat)
        f_z, f_x = perp_foot(n_z, n_x)
        _, f_y = perp_foot(n_z, n_y)
        u_z = axis_dir_at(z_mat, f_z)
        u_x = axis_dir_at(x_mat, f_x)
        u_y = axis_dir_at(y_mat, f_y)

        s2 = acosh((cosh(hb) + cosh(ha) * cosh(hc)) / (sinh(ha) * sinh(hc)))

        f2 = mexp(f_z, scl(tau3, u_z))
        u_z2 = axis_dir_at(z_mat, f2)
        w = scl(mpf(side), unit_sp(mcross(f2, u_z2)))
        p_x2 = mexp(f2, scl(s2, w))
        w_at = unit_sp(scl(-1, mlog(p_x2, f2)))
        u_x2 = scl(mpf(direction), unit_sp(mcross(p_x2, w_at)))
        x2 = translation(p_x2, u_x2, l1)
        y2 = matmul(matinv_iso(x2), z_mat)
        tr_y2 = y2[0][0] + y2[1][1] + y2[2][2]
        if abs(tr_y2 - (1 + 2 * cosh(l2))) > mpf("1e-30") * (1 + abs(tr_y2)):
            return None

        t1 = frame_iso(p_x2, u_x2, f_x, scl(-1, u_x))
        t1 = matmul(t1, translation(p_x2, u_x2, tau1))

        n_y2 = axis_normal(y2)
        f_y2, _ = perp_foot(n_y2, n_z)
        u_y2 = axis_dir_at(y2, f_y2)
        t2 = frame_iso(f_y2, u_y2, f_y, scl(-1, u_y))
        t2 = matmul(t2, translation(f_y2, u_y2, tau2))

        xinv = matinv_iso(x_mat)
        gens_mp = {
            "a": x_mat,
            "b": matmul(xinv, matinv_iso(t1)),
            "c": matmul(xinv, matinv_iso(t2)),
            "d": matinv_iso(y_mat),
        }

        # recenter: move the barycenter of the generator orbit of the origin
        # to the origin, minimizing generator norms (and with them the
        # float64 storage error of the rounded matrices)
        for _ in range(3):
            orbit = [o]
            for g in gens_mp.values():
                orbit.append(norm_pt(matvec(g, o)))
                orbit.append(norm_pt(matvec(matinv_iso(g), o)))
            center = o
            for _ in range(80):
                step = [mpf(0)] * 3
                dmax = mpf(0)
                for q in orbit:
                    lg = mlog(center, q)
                    dmax = max(dmax, sqrt(mdot(lg, lg)))
                    step = add(step, lg)
                lam = 1 / max(mpf(1), dmax / mp.tanh(dmax) if dmax > 0 else mpf(1))
                step = scl(lam / len(orbit), step)
                center = mexp(center, step)
            if sqrt(mdot(mlog(o, center), mlog(o, center))) < mpf("1e-12"):
                break
            u_c = unit_sp(mlog(center, o))
            u_o = unit_sp(scl(-1, mlog(o, center)))
            t_center = frame_iso(center, u_c, o, u_o)
            t_center_inv = matinv_iso(t_center)
            gens_mp = {k: matmul(t_center, matmul(v, t_center_inv))
                       for k, v in gens_mp.items()}

        return {k: np.array([[float(v[i][j]) for j in range(3)] for i in range(3)])
                for k, v in gens_mp.items()}


def build_group(fn, domain_word_length=8):
    """Construct the marked Fuchsian group and its Dirichlet domain.

    Returns (FuchsianGroup, FundamentalDomain).  The second pants is built
    directly on the far side of the curve-3 axis from hexagon trigonometry
    (its Y-boundary is the algebraic product X2^-1 Z, so no large
    conjugations enter); the two remaining side/direction choices are
    enumerated and validated by discreteness and the Gauss-Bonnet area.
    """
    if not isinstance(fn, FenchelNielsen):
        fn = FenchelNielsen(tuple(fn[:3]), tuple(fn[3:]))

    failures = []
    for side, direction in ((1, -1), (-1, 1), (1, 1), (-1, -1)):
        tag = f"side={side:+d},dir={direction:+d}"
        try:
            gens = _mp_candidate_gens(fn, side, direction)
            if gens is None:
                failures.append(f"{tag}: hexagon trace mismatch")
                continue
            # float64 rounding of the exact generators leaves a relator
            # residual amplified by the word's partial products; a Newton
            # nudge of (b, c) from this close a start removes most of it
            gens = _enforce_relator_dithered(gens)
            group = FuchsianGroup(gens, fn=fn)
            gate = max(1e-8, group.relator_noise_floor())
            if group.relator_residual() > gate:
                failures.append(f"{tag}: relator {group.relator_residual():.2e}"
                                f" (gate {gate:.2e})")
                continue
            if group.discreteness_defect(4, prune_distance=2.0) < 1e-6:
                failures.append(f"{tag}: short element near identity")
                continue
            try:
                domain = dirichlet_domain(group, max_word_length=domain_word_length)
            except NumericalError:
                # thin surfaces occasionally need longer words to close up
                domain = dirichlet_domain(group, max_word_length=domain_word_length + 2)
            if abs(domain.area - 4.0 * np.pi) > 1e-6:
                failures.append(f"{tag}: area {domain.area:.6f}")
                continue
            return group, domain
        except (NumericalError, DomainError) as exc:
            failures.append(f"{tag}: {exc}")
    raise NumericalError("genus-2 gluing failed: " + "; ".join(failures))


# ---------------------------------------------------------------------------
# Dirichlet domain (computed as a convex polygon in the Klein model)


class FundamentalDomain:
    """Dirichlet domain: convex geodesic polygon with side pairings.

    ``side_words[i]`` is the group word g whose bisector carries side i;
    the pairing isometry g^-1 maps side i onto the side of g^-1.
    Corners and the center are hyperboloid points.
    """

    def __init__(self, group, center, corners, side_words):
        self.group = group
        self.center = center
        self.corners = corners          # (n, 3) hyperboloid, ccw
        self.side_words = side_words    # side i joins corner i to corner i+1
        self._normals = np.array([
            _bisector_line(center, geo.apply_isometry(
                geo.HYPERBOLIC, group.matrix(w), center))
            for w in side_words])
        self.area = self._polygon_area()
        self.pairings = self._match_pairings()

    @property
    def n_sides(self):
        return len(self.side_words)

    def _polygon_area(self):
        n = len(self.corners)
        total = 0.0
        for i in range(n):
            a = self.corners[i]
            b = self.corners[(i + 1) % n]
            c = self.corners[(i - 1) % n]
            u = geo.log_map(geo.HYPERBOLIC, a, b)
            v = geo.log_map(geo.HYPERBOLIC, a, c)
            total += float(geo.angle(geo.HYPERBOLIC, u, v))
        return (n - 2) * np.pi - total

    def _match_pairings(self):
        pairs = []
        for i, w in enumerate(self.side_words):
            winv = invert_word(w)
            for j, w2 in enumerate(self.side_words):
                if self.group.canon(w2) == self.group.canon(winv):
                    pairs.append((i, j, winv))
                    break
            else:
                raise NumericalError(f"side {i} has no paired side")
        return pairs

    def margin(self, p):
        """Most-violated side margin; <= 0 means p is inside (Klein test)."""
        p = np.asarray(p, dtype=float)
        k = p[..., :2] / p[..., 2:3]
        vals = k[..., 0, None] * self._normals[:, 0] + \
            k[..., 1, None] * self._normals[:, 1] - self._normals[:, 2]
        return np.max(vals, axis=-1)

    def contains(self, p, tol=1e-9):
        return self.margin(p) <= tol

    def worst_side(self, p):
        k = p[:2] / p[2]
        vals = self._normals[:, 0] * k[0] + self._normals[:, 1] * k[1] - self._normals[:, 2]
        return int(np.argmax(vals))


def _domain_center():
    o = geo.ORIGIN_HYPERBOLIC
    e1, e2 = geo.tangent_frame(geo.HYPERBOLIC, o)
    return geo.exp_map(geo.HYPERBOLIC, o, CENTER_OFFSET[0] * e1 + CENTER_OFFSET[1] * e2)


class _MatrixSet:
    """Visited-set of 3x3 matrices, hashed on a rounded grid.

    Grid collisions across the rounding boundary can at worst re-admit a
    duplicate element, which only costs a redundant clip; false merges are
    impossible (exact proximity is re-checked within each bucket).
    """

    def __init__(self, tol=1e-8, grid=1e-5):
        self._grid = grid
        self._tol = tol
        self._buckets = {}

    def add(self, m):
        """Insert m; returns False if an equal matrix was already present."""
        key = tuple(np.round(m.reshape(-1) / self._grid).astype(np.int64))
        bucket = self._buckets.setdefault(key, [])
        for known in bucket:
            if np.max(np.abs(known - m)) < self._tol:
                return False
        bucket.append(m)
        return True


def _bisector_line(center, q):
    """Klein-model half-plane (a, b, c) with a X + b Y - c <= 0 containing the
    Dirichlet center, whose boundary is the bisector of center and q."""
    w = center - q
    n = np.sqrt(max(float(geo.mdot(w, w)), 1e-300))  # bisector normal is spacelike
    w = w / n
    ck = center[:2] / center[2]
    if w[0] * ck[0] + w[1] * ck[1] - w[2] > 0:
        w = -w
    return w


def dirichlet_domain(group, max_word_length=8, center=None):
    """Dirichlet domain about ``center`` from elements up to the word length.

    Works in the Klein model, where bisectors are straight chords and the
    domain is a Euclidean convex polygon.  Elements are explored by word
    length, clipped nearest-first, and branches are pruned once the
    shrinking polygon certifies they cannot contribute a side.
    """
    if center is None:
        center = _domain_center()
    ck = center[:2] / center[2]

    # seed polygon: a square strictly containing the Klein disk
    poly = np.array([[-1.5, -1.5], [1.5, -1.5], [1.5, 1.5], [-1.5, 1.5]])
    poly_words = [None] * 4  # word attached to the side poly[i] -> poly[i+1]

    def clip(poly, poly_words, line, word):
        a, b, c = line
        vals = poly[:, 0] * a + poly[:, 1] * b - c
        n = len(poly)
        out_pts, out_words = [], []
        for i in range(n):
            j = (i + 1) % n
            vi, vj = vals[i], vals[j]
            if vi <= 0:
                out_pts.append(poly[i])
                out_words.append(poly_words[i])
                if vj > 0:  # leaving: the cut introduces the new side
                    t = vi / (vi - vj)
                    out_pts.append(poly[i] + t * (poly[j] - poly[i]))
                    out_words.append(word)
            elif vj <= 0:  # entering: keep the tail of the old side
                t = vi / (vi - vj)
                out_pts.append(poly[i] + t * (poly[j] - poly[i]))
                out_words.append(poly_words[i])
        if len(out_pts) == 0:
            raise NumericalError("Dirichlet clipping emptied the polygon")
        return np.array(out_pts), out_words

    n_sectors = 32

    def poly_profile(poly):
        """(max radius, per-sector max corner distance) of the polygon."""
        r2 = np.sum(poly * poly, axis=1)
        sector = ((np.arctan2(poly[:, 1] - ck[1], poly[:, 0] - ck[0]) + np.pi)
                  / (2.0 * np.pi) * n_sectors).astype(int) % n_sectors
        prof = np.zeros(n_sectors)
        if np.any(r2 >= 1.0 - 1e-12):
            far = r2 >= 1.0 - 1e-12
            np.maximum.at(prof, sector[far], np.inf)
        pts = np.column_stack([poly, np.ones(len(poly))])
        ok = r2 < 1.0 - 1e-12
        if np.any(ok):
            d = geo.distance(geo.HYPERBOLIC,
                             geo.normalize_point(geo.HYPERBOLIC, pts[ok]), center)
            np.maximum.at(prof, sector[ok], d)
        # a corner bounds the reach of the two neighboring sectors as well
        prof = np.maximum(prof, np.maximum(np.roll(prof, 1), np.roll(prof, -1)))
        return float(np.max(prof)), prof

    seen = _MatrixSet()
    seen.add(np.eye(3))
    frontier = [("", np.eye(3))]
    explored = 0
    gen_step = max(float(geo.distance(geo.HYPERBOLIC, geo.apply_isometry(
        geo.HYPERBOLIC, group.matrix(ch), center), center)) for ch in GEN_LETTERS)
    for depth in range(max_word_length):
        rho, prof = poly_profile(poly)
        if depth >= 7 and not np.isfinite(rho):
            raise NumericalError("Dirichlet domain stays unbounded; "
                                 "the group does not look cocompact")
        level = []
        for word, m in frontier:
            for ch in ALL_LETTERS:
                if word and word[-1] == ch.swapcase():
                    continue
                m2 = m @ group.matrix(ch)
                if not seen.add(m2):
                    continue
                q = geo.apply_isometry(geo.HYPERBOLIC, m2, center)
                d = float(geo.distance(geo.HYPERBOLIC, q, center))
                if d < 0.02:
                    # numerically-near-identity word (e.g. the surface relator
                    # and its rotations); its bisector is noise, and a genuine
                    # side would need d at least the systole
                    continue
                level.append((d, word + ch, m2, q))
        explored += len(level)
        if explored > 200000:
            raise NumericalError("Dirichlet search exploded; "
                                 "the group does not look cocompact")
        level.sort(key=lambda item: item[0])
        frontier = []
        for d, w2, m2, q in level:
            rho, prof = poly_profile(poly)
            if d / 2.0 <= rho + 1e-9:
                poly, poly_words = clip(poly, poly_words, _bisector_line(center, q), w2)
                rho, prof = poly_profile(poly)
            # explore onward only if a descendant's bisector could still cut
            # the polygon near the direction this element points to; children
            # sit within gen_step of g.c, subtending a bounded angle at c
            kq = q[:2] / q[2]
            theta = np.arctan2(kq[1] - ck[1], kq[0] - ck[0])
            sec = int((theta + np.pi) / (2.0 * np.pi) * n_sectors) % n_sectors
            spread = min(1.0, np.sinh(gen_step) / np.sinh(max(d - gen_step, 0.2)))
            win = min(n_sectors // 2,
                      int(np.arcsin(spread) / (2.0 * np.pi) * n_sectors) + 1)
            reach = max(prof[(sec + k) % n_sectors] for k in range(-win, win + 1))
            if d <= 2.0 * reach + gen_step + 1e-6:
                frontier.append((w2, m2))
        if not frontier:
            break

    if any(w is None for w in poly_words):
        raise NumericalError("Dirichlet domain did not close up; increase word length")

    # merge consecutive sides carried by the same group element
    corners, side_words = [], []
    n = len(poly)
    for i in range(n):
        prev_i = (i - 1) % n
        if np.max(np.abs(poly[i] - poly[prev_i])) < 1e-13:
            continue
        if group.canon(poly_words[i]) != group.canon(poly_words[prev_i]):
            corners.append(poly[i])
            side_words.append(poly_words[i])

    # drop sliver sides left by nearly-tangent bisectors; a genuine side of
    # an offset-center Dirichlet domain is orders of magnitude longer
    changed = True
    while changed and len(corners) > 2:
        changed = False
        for i in range(len(corners)):
            j = (i + 1) % len(corners)
            if np.max(np.abs(corners[j] - corners[i])) < 1e-7:
                if j == 0:  # rotate so the sliver is interior to the lists
                    corners = corners[1:] + corners[:1]
                    side_words = side_words[1:] + side_words[:1]
                    i, j = len(corners) - 2, len(corners) - 1
                side_words.pop(i)  # side from corner i to corner j vanishes
                corners.pop(j)
                changed = True
                break
    corners3 = geo.normalize_point(
        geo.HYPERBOLIC, np.column_stack([np.array(corners), np.ones(len(corners))]))
    return FundamentalDomain(group, center, corners3, side_words)


def reduce_to_domain(group, domain, p, budget=None):
    """Move p into the closed domain by side-pairing descent.

    Returns (q, word) with q in the domain and matrix(word) . q == p within
    1e-8.  Each step applies the pairing of the most violated side, which
    strictly decreases the distance to the domain center.
    """
    p = np.asarray(p, dtype=float)
    d0 = float(geo.distance(geo.HYPERBOLIC, p, domain.center))
    if budget is None:
        # each side-pairing application strictly decreases the distance to
        # the center, but steps can be small near corners; be generous
        budget = int(40.0 * d0) + 60
    q = p
    word = ""
    for _ in range(budget):
        if domain.contains(q, tol=1e-11):
            return q, word
        side = domain.worst_side(q)
        w = invert_word(domain.side_words[side])
        q = geo.apply_isometry(geo.HYPERBOLIC, group.matrix(w), q)
        # p = matrix(word_new) . q_new with word_new = word + w^-1
        word = reduce_word(word + invert_word(w))
    if domain.contains(q, tol=1e-8):
        return q, word
    raise NumericalError("failed to reduce point into the fundamental domain")
