"""Symmetric triangle quadrature, exact for polynomials up to degree 6."""

import numpy as np

# 12-point symmetric rule (three orbits), weights normalized to sum to 1
# on the reference triangle.
_W1, _A1 = 0.050844906370207, 0.063089014491502
_W2, _A2 = 0.116786275726379, 0.249286745170910
_W3, _A3, _B3 = 0.082851075618374, 0.310352451033785, 0.053145049844816


def _orbit3(a):
    b = 1.0 - 2.0 * a
    return [(a, a, b), (a, b, a), (b, a, a)]


def _orbit6(a, b):
    c = 1.0 - a - b
    return [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]


class QuadratureRule:
    """Barycentric points and weights; ``weights`` sum to 1."""

    def __init__(self, points, weights):
        self.points = np.asarray(points, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.points.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def n_points(self):
        return self.weights.shape[0]

    def physical_points(self, coords):
        """Map to physical coordinates for triangles ``coords`` (nt, 3, 2).

        Returns an (nt, nq, 2) array.
        """
        return np.einsum("qv,tvd->tqd", self.points, coords)


def degree6_rule() -> QuadratureRule:
    pts = _orbit3(_A1) + _orbit3(_A2) + _orbit6(_A3, _B3)
    wts = [_W1] * 3 + [_W2] * 3 + [_W3] * 6
    w = np.asarray(wts)
    return QuadratureRule(np.asarray(pts), w / w.sum())


DEGREE6 = degree6_rule()
