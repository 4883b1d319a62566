"""Symmetric second-order tensors stored as Mandel 6-vectors.

Component order is [11, 22, 33, 23, 13, 12] with the shear entries scaled
by sqrt(2), so the plain dot product of two vectors reproduces the tensor
double contraction tr(A.B) exactly.
"""

import numpy as np

SQRT2 = float(np.sqrt(2.0))

#: index pairs of the Mandel components in the 3x3 matrix
_PAIRS = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))


def to_mandel(a):
    """Pack a symmetric 3x3 matrix into a Mandel 6-vector."""
    a = np.asarray(a, dtype=float)
    v = np.empty(6)
    v[0], v[1], v[2] = a[0, 0], a[1, 1], a[2, 2]
    v[3] = SQRT2 * 0.5 * (a[1, 2] + a[2, 1])
    v[4] = SQRT2 * 0.5 * (a[0, 2] + a[2, 0])
    v[5] = SQRT2 * 0.5 * (a[0, 1] + a[1, 0])
    return v


def from_mandel(v):
    """Unpack a Mandel 6-vector into the full symmetric 3x3 matrix."""
    v = np.asarray(v, dtype=float)
    a = np.empty((3, 3))
    for k, (i, j) in enumerate(_PAIRS):
        x = v[k] if k < 3 else v[k] / SQRT2
        a[i, j] = x
        a[j, i] = x
    return a


def trace(v):
    return v[0] + v[1] + v[2]


def deviator(v):
    """Deviatoric part of a Mandel 6-vector."""
    out = np.array(v, dtype=float)
    m = (v[0] + v[1] + v[2]) / 3.0
    out[:3] -= m
    return out


def frobenius(v):
    """Frobenius norm of the underlying tensor, sqrt(tr(A.A))."""
    return float(np.sqrt(np.dot(v, v)))


def check_symmetric(a, tol=1e-12):
    """True when a 3x3 matrix is symmetric within absolute `tol`."""
    a = np.asarray(a, dtype=float)
    return bool(np.all(np.abs(a - a.T) <= tol))
