"""Symmetric quadrature rules on the reference triangle.

Nodes are barycentric triples; weights sum to 1 and multiply the triangle
area.  Rules are exact for polynomials up to the stated degree on flat
triangles.
"""

import numpy as np

from .errors import DomainError


def _perm3(a, b, c):
    out = {(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)}
    return sorted(out)


_RULES = {}

# degree 2: three interior points
_RULES[2] = (
    np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]),
    np.array([1 / 3, 1 / 3, 1 / 3]),
)

# degree 4: Dunavant 6-point rule
_a1, _w1 = 0.445948490915965, 0.223381589678011
_a2, _w2 = 0.091576213509771, 0.109951743655322
_RULES[4] = (
    np.array([[1 - 2 * _a1, _a1, _a1], [_a1, 1 - 2 * _a1, _a1], [_a1, _a1, 1 - 2 * _a1],
              [1 - 2 * _a2, _a2, _a2], [_a2, 1 - 2 * _a2, _a2], [_a2, _a2, 1 - 2 * _a2]]),
    np.array([_w1, _w1, _w1, _w2, _w2, _w2]),
)

# degree 6: Dunavant 12-point rule
_b1, _v1 = 0.249286745170910, 0.116786275726379
_b2, _v2 = 0.063089014491502, 0.050844906370207
_b3, _b4, _v3 = 0.310352451033785, 0.636502499121399, 0.082851075618374
_pts6 = [[1 - 2 * _b1, _b1, _b1], [_b1, 1 - 2 * _b1, _b1], [_b1, _b1, 1 - 2 * _b1],
         [1 - 2 * _b2, _b2, _b2], [_b2, 1 - 2 * _b2, _b2], [_b2, _b2, 1 - 2 * _b2]]
_pts6 += [list(p) for p in _perm3(_b3, _b4, 1 - _b3 - _b4)]
_RULES[6] = (
    np.array(_pts6),
    np.array([_v1] * 3 + [_v2] * 3 + [_v3] * 6),
)


def triangle_rule(order):
    """(barycentric nodes (k, 3), weights (k,)) for the requested order."""
    for deg in sorted(_RULES):
        if order <= deg:
            return _RULES[deg]
    raise DomainError(f"no quadrature rule of order {order} (max 6)")
