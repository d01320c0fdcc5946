"""Landau-de Gennes energetics in the re-scaled variables used by the solvers.

Time and space are dimensionless; ``A``, ``B``, ``C`` keep their N/m^2 values
and ``L`` is the dimensionless elastic constant (``L~`` in the literature), so
the 3D right-hand side reads ``dQ/dt = Lap Q + reaction(Q) / L``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
import math

import numpy as np

from . import qtensor as qt

B_DEFAULT = 0.64e4
C_DEFAULT = 0.35e4
R2_DEFAULT = 1e-10
# physical clock conversion: t_bar = 20 t L / (gamma R^2)
TIME_LABEL_FACTOR = 20.0


class StaleInputError(ValueError):
    """Raised when a quantity is requested for an unconverged critical point."""


@dataclass(frozen=True)
class Parameters:
    A: float
    B: float
    C: float
    L: float
    gamma: float = 1.0
    R2: float = R2_DEFAULT

    def __post_init__(self):
        for name in ("B", "C", "L", "gamma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"parameter {name} must be positive, got {getattr(self, name)!r}")

    @classmethod
    def transition(cls, L: float, B: float = B_DEFAULT, C: float = C_DEFAULT, **kw) -> "Parameters":
        """Parameters at the nematic-isotropic transition, A = B^2 / 27C."""
        return cls(A=B * B / (27.0 * C), B=B, C=C, L=L, **kw)

    @property
    def h_plus(self) -> float:
        return self.B / (3.0 * self.C)

    s_plus = h_plus

    @property
    def bound_q(self) -> float:
        """Maximum-principle bound on |Q|, sqrt(2/3) B / 3C."""
        return math.sqrt(2.0 / 3.0) * self.h_plus

    @property
    def L_bar(self) -> float:
        """Elastic constant of the reduced hedgehog equation, 9L/C."""
        return 9.0 * self.L / self.C

    @property
    def is_transition(self) -> bool:
        return abs(self.A - self.B**2 / (27.0 * self.C)) <= 1e-12 * abs(self.A)

    def with_L(self, L: float) -> "Parameters":
        return replace(self, L=L)

    def physical_time(self, t: float, L_phys: float) -> float:
        """Convert the re-scaled clock to seconds for a physical L (in N)."""
        return t * self.gamma * self.R2 / (TIME_LABEL_FACTOR * L_phys)


PRESETS = {
    "transition-L0.05": lambda: Parameters.transition(0.05),
    "transition-L0.01": lambda: Parameters.transition(0.01),
}


def preset(name: str) -> Parameters:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown parameter preset {name!r}; known: {sorted(PRESETS)}") from None


def bulk_potential_field(comps: np.ndarray, p: Parameters) -> np.ndarray:
    t2 = qt.norm_sq(comps)
    t3 = qt.trace_cube(comps)
    return 0.5 * p.A * t2 - p.B / 3.0 * t3 + 0.25 * p.C * t2 * t2


def bulk_potential(q: qt.QTensor, p: Parameters) -> float:
    return float(bulk_potential_field(q.as_array(), p))


def reaction_field(comps: np.ndarray, p: Parameters) -> np.ndarray:
    """Bulk part of the five evolution equations, before division by L.

    Equals -(A Q + C|Q|^2 Q - B(Q^2 - |Q|^2 I/3)) component by component.
    """
    q11, q22, q12, q13, q23 = np.asarray(comps, dtype=float)
    A, B, C = p.A, p.B, p.C
    c2 = 2.0 * C * (q11 * q11 + q22 * q22 + q12 * q12 + q11 * q22 + q13 * q13 + q23 * q23)
    return np.stack(
        [
            -(A * q11 + c2 * q11
              - B / 3.0 * (q11 * q11 + q12 * q12 + q13 * q13 - 2.0 * q22 * q22 - 2.0 * q11 * q22 - 2.0 * q23 * q23)),
            -(A * q22 + c2 * q22
              - B / 3.0 * (q12 * q12 + q22 * q22 + q23 * q23 - 2.0 * q11 * q11 - 2.0 * q11 * q22 - 2.0 * q13 * q13)),
            -(A * q12 + c2 * q12 - B * (q11 * q12 + q12 * q22 + q13 * q23)),
            -(A * q13 + c2 * q13 - B * (q12 * q23 - q22 * q13)),
            -(A * q23 + c2 * q23 - B * (q12 * q13 - q23 * q11)),
        ]
    )


def reaction(q: qt.QTensor, p: Parameters) -> qt.QTensor:
    return qt.QTensor.from_array(reaction_field(q.as_array(), p))


def _orthonormal_basis() -> np.ndarray:
    """Five Frobenius-orthonormal symmetric traceless matrices."""
    e = np.zeros((5, 3, 3))
    e[0] = np.diag([1.0, -1.0, 0.0]) / math.sqrt(2.0)
    e[1] = np.diag([1.0, 1.0, -2.0]) / math.sqrt(6.0)
    for k, (i, j) in enumerate([(0, 1), (0, 2), (1, 2)], start=2):
        e[k, i, j] = e[k, j, i] = 1.0 / math.sqrt(2.0)
    return e


def bulk_hessian(q: np.ndarray, p: Parameters) -> np.ndarray:
    """5x5 Hessian of f_B at the matrix q, in a Frobenius-orthonormal basis."""
    basis = _orthonormal_basis()
    t2 = float(np.sum(q * q))
    cols = []
    for d in basis:
        qd = q @ d + d @ q
        qd = qd - np.trace(qd) / 3.0 * np.eye(3)
        hd = p.A * d - p.B * qd + p.C * (2.0 * np.sum(q * d) * q + t2 * d)
        cols.append([np.sum(hd * b) for b in basis])
    return np.array(cols)


@lru_cache(maxsize=32)
def _lipschitz(A: float, B: float, C: float, bound: float) -> float:
    p = Parameters(A=A, B=B, C=C, L=1.0)
    best = 0.0
    # f_B is isotropic, so scanning diagonal tensors covers every orbit
    for a in np.linspace(-1.0, 1.0, 41):
        for b in np.linspace(-1.0, 1.0, 41):
            q = np.diag([a, b, -a - b])
            nrm = math.sqrt(float(np.sum(q * q)))
            if nrm == 0.0:
                continue
            for scale in np.linspace(0.0, 1.0, 11):
                qs = q * (scale * bound / nrm)
                w = np.linalg.eigvalsh(bulk_hessian(qs, p))
                best = max(best, float(np.max(np.abs(w))))
    return best


def reaction_lipschitz(p: Parameters) -> float:
    """Estimate of sup ||d reaction / dQ|| on the ball |Q| <= bound_q."""
    return _lipschitz(p.A, p.B, p.C, p.bound_q)


# ----------------------------------------------------------------------------
# energies


def discrete_energy(obj, p: Parameters | None = None) -> float:
    """Discrete LdG energy of a grid field or a radial profile.

    Dispatches on the object: grid fields carry ``geometry``, radial profiles
    carry ``model``. Parameters default to the ones attached to the object.
    """
    if hasattr(obj, "geometry"):
        return grid_energy(obj.data, obj.geometry, p or obj.params)
    if hasattr(obj, "model"):
        from . import radial

        return radial.profile_energy(obj, p or obj.params)
    raise TypeError(f"cannot compute an energy for {type(obj).__name__}")


def grid_energy(data: np.ndarray, geometry, p: Parameters) -> float:
    """(L/2)|grad Q|^2 + f_B summed over interior cells.

    The gradient part runs over every grid edge with at least one interior
    endpoint, which makes the 2nd-order Laplacian its exact gradient.
    """
    if data.size == 0:
        raise ValueError("empty field")
    interior = geometry.interior
    h = geometry.h
    vol = h**geometry.dim
    e_bulk = float(np.sum(bulk_potential_field(data[:, interior], p)))
    e_grad = 0.0
    for ax in range(geometry.dim):
        ax_d = ax + 1
        diff = np.roll(data, -1, axis=ax_d) - data
        touches = interior | np.roll(interior, -1, axis=ax)
        e_grad += float(np.sum(qt.norm_sq(diff[:, touches])))
    return vol * e_bulk + 0.5 * p.L * vol / (h * h) * e_grad


# ----------------------------------------------------------------------------
# second variation of the disc energy about a (u, v) critical point


def escape_perturbation(r: np.ndarray) -> np.ndarray:
    """Amplitude of the built-in escape perturbation, vanishing at r = 0 and 1."""
    r = np.asarray(r, dtype=float)
    return 100.0 * r**2 * (1.0 - r**2) ** 2 / (1.0 + 100.0 * r**2)


def escape_perturbation_dr(r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    num = 100.0 * r**2 * (1.0 - r**2) ** 2
    dnum = 200.0 * r * (1.0 - r**2) ** 2 - 400.0 * r**3 * (1.0 - r**2)
    den = 1.0 + 100.0 * r**2
    return (dnum * den - num * 200.0 * r) / den**2


def _trace_qvv(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    mq = qt.to_matrix(q)
    mv = qt.to_matrix(v)
    return np.einsum("...ij,...jk,...ki->...", mq, mv, mv)


def second_variation(
    r: np.ndarray,
    u: np.ndarray,
    v: np.ndarray,
    p: Parameters,
    amplitude=escape_perturbation,
    amplitude_dr=None,
    *,
    check_residual: bool = True,
    residual_tol: float = 1e-6,
) -> float:
    """delta^2 I for V = f(r) (n1 x p + p x n1) about the (u, v) critical point.

    The integrand is rotation invariant in theta, so it is evaluated on the
    ray theta = 0 and integrated with weight 2 pi r. ``amplitude`` is either a
    callable f(r) or an array on ``r``; ``amplitude_dr`` its derivative
    (defaults to the analytic one for the built-in shape, else 2nd-order
    differences).
    """
    r = np.asarray(r, dtype=float)
    if check_residual:
        from . import radial

        res = radial.uv_static_residual(r, u, v, p)
        if not res < residual_tol:
            raise StaleInputError(f"(u, v) is not a converged critical point (residual {res:.3e})")
    if callable(amplitude):
        f = amplitude(r)
        if amplitude_dr is None and amplitude is escape_perturbation:
            amplitude_dr = escape_perturbation_dr
        fp = amplitude_dr(r) if callable(amplitude_dr) else np.gradient(f, r, edge_order=2)
    else:
        f = np.asarray(amplitude, dtype=float)
        fp = np.asarray(amplitude_dr, dtype=float) if amplitude_dr is not None else np.gradient(f, r, edge_order=2)

    theta = np.zeros_like(r)
    n1, _, pz = qt.disc_frame(theta)
    m_hat = qt.disc_frame(theta)[1]
    # W = n1 x p + p x n1 and dW/dtheta = m x p + p x m, as five components
    w = np.stack([np.zeros_like(r), np.zeros_like(r), np.zeros_like(r), n1[0] * pz[2], n1[1] * pz[2]])
    dw = np.stack([np.zeros_like(r), np.zeros_like(r), np.zeros_like(r), m_hat[0] * pz[2], m_hat[1] * pz[2]])
    q = qt.uv_field(u, v, theta)
    vv = f * w
    grad_sq = fp**2 * qt.norm_sq(w) + np.divide(f**2, r**2, out=np.zeros_like(r), where=r > 0) * qt.norm_sq(dw)
    v2 = qt.norm_sq(vv)
    integrand = (
        0.5 * grad_sq
        + (0.5 * p.A * v2 - p.B * _trace_qvv(q, vv) + p.C * qt.dot(q, vv) ** 2 + 0.5 * p.C * qt.norm_sq(q) * v2) / p.L
    )
    return float(2.0 * np.pi * np.trapezoid(integrand * r, r))
