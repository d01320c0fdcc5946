"""Symmetric traceless 3x3 tensors stored as five independent components.

Component order everywhere in the package is ``(q11, q22, q12, q13, q23)``;
``q33 = -q11 - q22`` is implied. Functions ending in ``_field`` accept arrays
of shape ``(5, ...)`` so they can be applied to whole grids at once.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NCOMP = 5
COMPONENTS = ("q11", "q22", "q12", "q13", "q23")

_UNIT_TOL = 1e-9


class FrameError(ValueError):
    """Raised when director/frame vectors are not unit or not orthogonal."""


@dataclass(frozen=True)
class QTensor:
    q11: float = 0.0
    q22: float = 0.0
    q12: float = 0.0
    q13: float = 0.0
    q23: float = 0.0

    @property
    def q33(self) -> float:
        return -self.q11 - self.q22

    def as_array(self) -> np.ndarray:
        return np.array([self.q11, self.q22, self.q12, self.q13, self.q23], dtype=float)

    def matrix(self) -> np.ndarray:
        return to_matrix(self.as_array())

    @classmethod
    def from_array(cls, comps) -> "QTensor":
        c = np.asarray(comps, dtype=float)
        return cls(*(float(x) for x in c[:5]))

    @classmethod
    def from_matrix(cls, m) -> "QTensor":
        return cls.from_array(from_matrix(np.asarray(m, dtype=float)))

    def norm_sq(self) -> float:
        return float(norm_sq(self.as_array()))


def to_matrix(comps: np.ndarray) -> np.ndarray:
    """(5, ...) components -> (..., 3, 3) symmetric traceless matrices."""
    c = np.asarray(comps, dtype=float)
    q11, q22, q12, q13, q23 = c
    m = np.empty(c.shape[1:] + (3, 3))
    m[..., 0, 0] = q11
    m[..., 1, 1] = q22
    m[..., 2, 2] = -q11 - q22
    m[..., 0, 1] = m[..., 1, 0] = q12
    m[..., 0, 2] = m[..., 2, 0] = q13
    m[..., 1, 2] = m[..., 2, 1] = q23
    return m


def from_matrix(m: np.ndarray) -> np.ndarray:
    """(..., 3, 3) matrices -> (5, ...) components, symmetrised and trace-projected."""
    m = np.asarray(m, dtype=float)
    tr = np.trace(m, axis1=-2, axis2=-1) / 3.0
    return np.stack(
        [
            m[..., 0, 0] - tr,
            m[..., 1, 1] - tr,
            0.5 * (m[..., 0, 1] + m[..., 1, 0]),
            0.5 * (m[..., 0, 2] + m[..., 2, 0]),
            0.5 * (m[..., 1, 2] + m[..., 2, 1]),
        ]
    )


def norm_sq(comps: np.ndarray) -> np.ndarray:
    """Frobenius norm squared, tr Q^2 = Q_ij Q_ij."""
    q11, q22, q12, q13, q23 = np.asarray(comps, dtype=float)
    return 2.0 * (q11 * q11 + q22 * q22 + q11 * q22 + q12 * q12 + q13 * q13 + q23 * q23)


def trace_cube(comps: np.ndarray) -> np.ndarray:
    """tr Q^3 = Q_ij Q_jk Q_ki, i.e. 3 det Q for traceless Q."""
    q11, q22, q12, q13, q23 = np.asarray(comps, dtype=float)
    q33 = -q11 - q22
    det = (
        q11 * (q22 * q33 - q23 * q23)
        - q12 * (q12 * q33 - q23 * q13)
        + q13 * (q12 * q23 - q22 * q13)
    )
    return 3.0 * det


def dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Frobenius inner product Q:P."""
    a11, a22, a12, a13, a23 = np.asarray(a, dtype=float)
    b11, b22, b12, b13, b23 = np.asarray(b, dtype=float)
    return (
        2.0 * a11 * b11 + 2.0 * a22 * b22 + a11 * b22 + a22 * b11
        + 2.0 * (a12 * b12 + a13 * b13 + a23 * b23)
    )


def _check_unit(n: np.ndarray) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    nrm = np.linalg.norm(n, axis=0)
    if np.any(np.abs(nrm - 1.0) > _UNIT_TOL):
        raise FrameError(f"director must be a unit vector (|n| = {np.max(np.abs(nrm - 1.0)) + 1:.12g})")
    return n


def nn_traceless(n: np.ndarray) -> np.ndarray:
    """Components of n x n - I/3 for unit n of shape (3, ...). No unit check."""
    n = np.asarray(n, dtype=float)
    return np.stack(
        [
            n[0] * n[0] - 1.0 / 3.0,
            n[1] * n[1] - 1.0 / 3.0,
            n[0] * n[1],
            n[0] * n[2],
            n[1] * n[2],
        ]
    )


def uniaxial_field(s, n) -> np.ndarray:
    """s (n x n - I/3) for arrays; n has shape (3, ...)."""
    n = _check_unit(n)
    return np.asarray(s, dtype=float) * nn_traceless(n)


def uniaxial(s: float, n) -> QTensor:
    return QTensor.from_array(uniaxial_field(s, np.asarray(n, dtype=float)))


def planar_biaxial_field(s, n, m) -> np.ndarray:
    """s (n x n - m x m); tr Q^3 = 0 by construction."""
    n = _check_unit(n)
    m = _check_unit(m)
    if np.any(np.abs(np.sum(n * m, axis=0)) > _UNIT_TOL):
        raise FrameError("n and m must be orthogonal")
    d = np.stack(
        [
            n[0] * n[0] - m[0] * m[0],
            n[1] * n[1] - m[1] * m[1],
            n[0] * n[1] - m[0] * m[1],
            n[0] * n[2] - m[0] * m[2],
            n[1] * n[2] - m[1] * m[2],
        ]
    )
    return np.asarray(s, dtype=float) * d


def planar_biaxial(s: float, n, m) -> QTensor:
    return QTensor.from_array(planar_biaxial_field(s, np.asarray(n, float), np.asarray(m, float)))


def uv_field(u, v, theta) -> np.ndarray:
    """(u/2)(n1 x n1 - m x m) + v (p x p - I/3) with n1 = (cos, sin, 0), p = e_z.

    Written out directly so q13 = q23 = 0 holds exactly.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    theta = np.asarray(theta, dtype=float)
    c2 = np.cos(2.0 * theta)
    s2 = np.sin(2.0 * theta)
    shape = np.broadcast(u, v, theta).shape
    zero = np.zeros(shape)
    return np.stack(
        [
            0.5 * u * c2 - v / 3.0 + zero,
            -0.5 * u * c2 - v / 3.0 + zero,
            0.5 * u * s2 + zero,
            zero,
            zero.copy(),
        ]
    )


def uv_tensor(u: float, v: float, theta: float) -> QTensor:
    return QTensor.from_array(uv_field(u, v, theta))


def biaxiality(comps: np.ndarray) -> np.ndarray:
    """beta = 1 - 6 (tr Q^3)^2 / (tr Q^2)^3, with beta = 0 where Q = 0."""
    t2 = norm_sq(comps)
    t3 = trace_cube(comps)
    out = np.zeros_like(t2)
    nz = t2 > 1e-300
    out[nz] = 1.0 - 6.0 * t3[nz] ** 2 / t2[nz] ** 3
    return np.clip(out, 0.0, 1.0)


def invariants(q: QTensor) -> tuple[float, float, float]:
    """(tr Q^2, tr Q^3, biaxiality)."""
    a = q.as_array()[:, None]
    return float(norm_sq(a)[0]), float(trace_cube(a)[0]), float(biaxiality(a)[0])


def _unit_scale(c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """c divided by its largest component magnitude, so tiny tensors do not underflow."""
    m = np.max(np.abs(c), axis=0)
    m = np.where(m > 0, m, 1.0)
    return c / m, m


def eigvalsh_field(comps: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues, shape (3, ...), by the trigonometric formula."""
    c, m = _unit_scale(np.asarray(comps, dtype=float))
    return m * _eigvalsh_unit(c)


def _eigvalsh_unit(c: np.ndarray) -> np.ndarray:
    t2 = norm_sq(c)
    p = np.sqrt(t2 / 6.0)
    safe = np.where(p > 0, p, 1.0)
    # det(Q/p)/2 = tr(Q^3)/(6 p^3)
    r = np.clip(trace_cube(c) / (6.0 * safe**3), -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    lam3 = 2.0 * p * np.cos(phi)
    lam1 = 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    lam2 = -lam1 - lam3
    return np.stack([lam1, lam2, lam3])


def eigh_field(comps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (3, ...) ascending and eigenvectors (..., 3, 3) as columns.

    The best-separated eigenvalue gets its vector from cross products of the
    rows of Q - lam I; the remaining pair is found by deflation to the
    orthogonal plane, where a closed-form 2x2 rotation handles degeneracy.
    """
    c, m = _unit_scale(np.asarray(comps, dtype=float))
    lam = _eigvalsh_unit(c)
    mat = to_matrix(c)
    shape = c.shape[1:]
    flat_m = mat.reshape(-1, 3, 3)
    l1, l2, l3 = (x.reshape(-1) for x in lam)
    n = flat_m.shape[0]

    top_isolated = (l3 - l2) >= (l2 - l1)
    iso = np.where(top_isolated, l3, l1)
    a = flat_m - iso[:, None, None] * np.eye(3)
    cands = np.stack(
        [
            np.cross(a[:, 0], a[:, 1]),
            np.cross(a[:, 0], a[:, 2]),
            np.cross(a[:, 1], a[:, 2]),
        ],
        axis=1,
    )
    norms = np.linalg.norm(cands, axis=2)
    best = np.argmax(norms, axis=1)
    v_iso = cands[np.arange(n), best]
    bn = norms[np.arange(n), best]
    scale = np.maximum((l3 - l1) ** 2, 1e-300)
    degenerate = bn <= 1e-14 * scale
    v_iso = np.where(degenerate[:, None], np.array([0.0, 0.0, 1.0]), v_iso)
    v_iso /= np.linalg.norm(v_iso, axis=1)[:, None]

    # orthonormal completion of v_iso
    helper = np.where(
        (np.abs(v_iso[:, 0]) < 0.9)[:, None], np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])
    )
    e1 = np.cross(v_iso, helper)
    e1 /= np.linalg.norm(e1, axis=1)[:, None]
    e2 = np.cross(v_iso, e1)

    qe1 = np.einsum("nij,nj->ni", flat_m, e1)
    qe2 = np.einsum("nij,nj->ni", flat_m, e2)
    s11 = np.einsum("ni,ni->n", e1, qe1)
    s22 = np.einsum("ni,ni->n", e2, qe2)
    s12 = np.einsum("ni,ni->n", e1, qe2)
    ang = 0.5 * np.arctan2(2.0 * s12, s11 - s22)
    ca, sa = np.cos(ang), np.sin(ang)
    w_hi = ca[:, None] * e1 + sa[:, None] * e2  # eigenvalue s11 cos^2 + ... (larger)
    w_lo = -sa[:, None] * e1 + ca[:, None] * e2

    vecs = np.empty((n, 3, 3))
    ti = top_isolated
    vecs[ti, :, 2] = v_iso[ti]
    vecs[ti, :, 1] = w_hi[ti]
    vecs[ti, :, 0] = w_lo[ti]
    bi = ~ti
    vecs[bi, :, 0] = v_iso[bi]
    vecs[bi, :, 2] = w_hi[bi]
    vecs[bi, :, 1] = w_lo[bi]
    # Rayleigh quotients: the trig formula alone is only ~1e-8 accurate near
    # degenerate spectra
    ray = np.einsum("nik,nij,njk->kn", vecs, flat_m, vecs)
    order = np.argsort(ray, axis=0)
    ray = np.take_along_axis(ray, order, axis=0)
    vecs = np.take_along_axis(vecs, order.T[:, None, :], axis=2)
    return m * ray.reshape((3,) + shape), vecs.reshape(shape + (3, 3))


def eigen(q: QTensor) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues (3,) and orthonormal eigenvectors as columns (3, 3)."""
    lam, vecs = eigh_field(q.as_array()[:, None])
    return lam[:, 0], vecs[0]


def rotate_field(comps: np.ndarray, rot: np.ndarray) -> np.ndarray:
    """R Q R^T for a single rotation matrix."""
    m = to_matrix(comps)
    return from_matrix(rot @ m @ rot.T)


# unit vectors used by the disc geometry
def disc_frame(theta) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(n1, m, p) = ((cos, sin, 0), (-sin, cos, 0), (0, 0, 1))."""
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    z = np.zeros_like(c)
    return np.stack([c, s, z]), np.stack([-s, c, z]), np.stack([z, z, z + 1.0])
