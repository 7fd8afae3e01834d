"""Reference-triangle quadrature rules and basis evaluation.

Bases are the P1 Lagrange functions (the barycentric coordinates) and the
cubic element bubble 27*l1*l2*l3, which vanishes on all element edges and
equals 1 at the barycenter.  Quadrature rules use the reference triangle
(0,0), (1,0), (0,1) with barycentric points (l1, l2, l3) = (1-x-y, x, y)
and weights normalized to sum to the reference area 1/2.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

MIN_DEGREE = 1
MAX_DEGREE = 6


class QuadratureError(ValueError):
    """Unsupported quadrature request."""


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature rule on the reference triangle.

    points : (nq, 3) barycentric coordinates; weights : (nq,), summing to
    1/2; exact_degree : largest total polynomial degree integrated exactly.
    """

    points: np.ndarray
    weights: np.ndarray
    exact_degree: int

    def __post_init__(self):
        self.points.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def n_points(self):
        return len(self.weights)


def _duffy_rule(n):
    """Collapsed-coordinate product rule, exact for total degree 2n-1.

    The triangle integral is mapped to the unit square by y = (1-x)*s,
    absorbing the Jacobian (1-x) into a Gauss-Jacobi rule in x and a
    Gauss-Legendre rule in s.  All weights are positive and the nodes are
    interior.
    """
    xl, wl = roots_legendre(n)
    xj, wj = roots_jacobi(n, 1, 0)
    x = 0.5 * (xj + 1.0)
    s = 0.5 * (xl + 1.0)
    xx = np.repeat(x, n)
    yy = ((1.0 - x)[:, None] * s[None, :]).ravel()
    ww = (wj[:, None] * wl[None, :]).ravel() / 8.0
    points = np.column_stack([1.0 - xx - yy, xx, yy])
    return points, ww


def make_quadrature(exact_degree):
    """Quadrature rule exact for all polynomials of total degree at most
    ``exact_degree`` (supported range 1..6).

    Degree 1 is the one-point barycenter rule and degree 2 the classic
    interior three-point rule; higher degrees use collapsed-coordinate
    product rules.
    """
    d = int(exact_degree)
    if not MIN_DEGREE <= d <= MAX_DEGREE:
        raise QuadratureError(
            f"unsupported quadrature degree {exact_degree}; "
            f"supported range is {MIN_DEGREE}..{MAX_DEGREE}"
        )
    if d == 1:
        points = np.array([[1 / 3, 1 / 3, 1 / 3]])
        weights = np.array([0.5])
    elif d == 2:
        points = np.array(
            [
                [2 / 3, 1 / 6, 1 / 6],
                [1 / 6, 2 / 3, 1 / 6],
                [1 / 6, 1 / 6, 2 / 3],
            ]
        )
        weights = np.full(3, 1 / 6)
    else:
        points, weights = _duffy_rule((d + 2) // 2)
    return QuadratureRule(points, weights, d)


def eval_basis(kind, bary):
    """Evaluate a basis family at one barycentric point.

    Parameters
    ----------
    kind : str
        "p1" or "bubble".
    bary : length-3 sequence
        Barycentric coordinates (nonnegative, summing to 1).

    Returns
    -------
    values : (nb,) array
    grads : (nb, 3) array
        Partial derivatives with respect to the barycentric coordinates;
        the physical gradient of basis f on an element is
        sum_k grads[f, k] * grad_lambda[k].
    """
    l1, l2, l3 = (float(v) for v in bary)
    if kind == "p1":
        values = np.array([l1, l2, l3])
        grads = np.eye(3)
    elif kind == "bubble":
        values = np.array([27.0 * l1 * l2 * l3])
        grads = np.array([[27.0 * l2 * l3, 27.0 * l1 * l3, 27.0 * l1 * l2]])
    else:
        raise ValueError(f"unknown basis kind {kind!r}")
    return values, grads


def p1_table(rule):
    """P1 values and barycentric partials at the rule points."""
    values = np.array(rule.points)
    parts = np.broadcast_to(np.eye(3), (rule.n_points, 3, 3)).copy()
    return values, parts


def bubble_table(rule):
    """Bubble values and barycentric partials at the rule points."""
    l1, l2, l3 = rule.points[:, 0], rule.points[:, 1], rule.points[:, 2]
    values = 27.0 * l1 * l2 * l3
    parts = 27.0 * np.column_stack([l2 * l3, l1 * l3, l1 * l2])
    return values, parts


def p1b_table(rule):
    """P1-plus-bubble (4 local functions) values and partials."""
    p1v, p1p = p1_table(rule)
    bv, bp = bubble_table(rule)
    values = np.column_stack([p1v, bv])
    parts = np.concatenate([p1p, bp[:, None, :]], axis=1)
    return values, parts
