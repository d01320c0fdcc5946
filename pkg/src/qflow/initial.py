"""Initial conditions and Dirichlet data for the ball, disc and radial solvers."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
import math

import numpy as np

from . import qtensor as qt
from .ldg_model import Parameters


class ConfigError(ValueError):
    pass


class Family(str, Enum):
    CASE_I = "CASE_I"
    CASE_II = "CASE_II"
    BIAXIAL_SPHERE = "BIAXIAL_SPHERE"
    ELLIPSOIDAL = "ELLIPSOIDAL"
    UV_TANH = "UV_TANH"
    UV_STAR = "UV_STAR"
    UV_PERTURBED = "UV_PERTURBED"
    STEP_FRONT = "STEP_FRONT"
    EFFICIENT_INTERFACE = "EFFICIENT_INTERFACE"
    S2D_TANH = "S2D_TANH"
    UV_STATIC_SOLUTION = "UV_STATIC_SOLUTION"


class BoundaryScenario(str, Enum):
    BALL_RADIAL = "BALL_RADIAL"
    DISC_PLANAR_UNIAXIAL = "DISC_PLANAR_UNIAXIAL"
    DISC_BIAXIAL = "DISC_BIAXIAL"


HEDGEHOG_FAMILIES = {Family.CASE_I, Family.CASE_II, Family.STEP_FRONT, Family.EFFICIENT_INTERFACE}
BALL_FAMILIES = HEDGEHOG_FAMILIES | {Family.BIAXIAL_SPHERE, Family.ELLIPSOIDAL}
UV_FAMILIES = {Family.UV_TANH, Family.UV_STAR, Family.UV_PERTURBED, Family.UV_STATIC_SOLUTION}
PLANAR_FAMILIES = {Family.UV_TANH, Family.UV_STAR, Family.UV_STATIC_SOLUTION, Family.S2D_TANH}

DEFAULT_BC = {f: BoundaryScenario.BALL_RADIAL for f in BALL_FAMILIES}
DEFAULT_BC.update({f: BoundaryScenario.DISC_PLANAR_UNIAXIAL for f in UV_FAMILIES})
DEFAULT_BC[Family.S2D_TANH] = BoundaryScenario.DISC_BIAXIAL


@dataclass(frozen=True)
class InitialConditionSpec:
    family: Family
    r0: float = 0.5
    u0: float = 0.6
    v0: float = 0.4
    epsilon: float = 0.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if not 0.0 < self.r0 < 1.0:
            raise ConfigError(f"r0 must lie in (0, 1), got {self.r0}")
        if not 0.0 < self.u0 < 1.0 or not 0.0 < self.v0 < 1.0:
            raise ConfigError(f"u0 and v0 must lie in (0, 1), got {self.u0}, {self.v0}")
        if not 0.0 <= self.epsilon < 1.0:
            raise ConfigError(f"epsilon must lie in [0, 1), got {self.epsilon}")


# ----------------------------------------------------------------------------
# scalar profiles


def tanh_front(r, r0: float, width: float, amplitude: float) -> np.ndarray:
    """amplitude/2 (1 + tanh((r - r0)/width))."""
    return 0.5 * amplitude * (1.0 + np.tanh((np.asarray(r, float) - r0) / width))


def case_i_profile(r, r0: float, p: Parameters) -> np.ndarray:
    return tanh_front(r, r0, math.sqrt(p.L), p.h_plus)


def case_ii_profile(r, p: Parameters) -> np.ndarray:
    return p.h_plus * np.asarray(r, float)


def step_profile(r, r0: float, p: Parameters) -> np.ndarray:
    r = np.asarray(r, float)
    return np.where(r < r0, 0.0, np.where(r > r0, p.h_plus, 0.5 * p.h_plus))


def sigma(R, h_plus: float) -> np.ndarray:
    """Optimal one-dimensional front hp / (1 + exp(-sqrt(3) hp R))."""
    return h_plus / (1.0 + np.exp(-math.sqrt(3.0) * h_plus * np.asarray(R, float)))


def efficient_interface(R, L_bar: float, h_plus: float) -> np.ndarray:
    """Five-piece front: sigma(R/sqrt(L_bar)) in the core, linear ramps to 0 and hp."""
    R = np.asarray(R, float)
    q = L_bar**0.25
    sq = math.sqrt(L_bar)
    hi = float(sigma(1.0 / q, h_plus))
    lo = float(sigma(-1.0 / q, h_plus))
    out = np.empty_like(R)
    out[R > 2 * q] = h_plus
    m = (R >= q) & (R <= 2 * q)
    out[m] = (h_plus - hi) * (R[m] - 2 * q) / q + h_plus
    m = (R > -q) & (R < q)
    out[m] = sigma(R[m] / sq, h_plus)
    m = (R >= -2 * q) & (R <= -q)
    out[m] = lo * (R[m] + 2 * q) / q
    out[R < -2 * q] = 0.0
    return out


def efficient_interface_junctions(L_bar: float) -> np.ndarray:
    q = L_bar**0.25
    return np.array([-2 * q, -q, q, 2 * q])


def uv_tanh_profiles(r, u0, v0, p: Parameters) -> tuple[np.ndarray, np.ndarray]:
    w = math.sqrt(p.L)
    hp = p.h_plus
    r = np.asarray(r, float)
    u = 0.5 * hp * (1.0 + np.tanh((r - u0) / w))
    v = -0.25 * hp * (1.0 + np.tanh((r - v0) / w))
    return u, v


def hedgehog_profile(spec: InitialConditionSpec, r, p: Parameters) -> np.ndarray:
    fam = spec.family
    if fam is Family.CASE_I:
        return case_i_profile(r, spec.r0, p)
    if fam is Family.CASE_II:
        return case_ii_profile(r, p)
    if fam is Family.STEP_FRONT:
        return step_profile(r, spec.r0, p)
    if fam is Family.EFFICIENT_INTERFACE:
        return efficient_interface(np.asarray(r, float) - spec.r0, p.L_bar, p.h_plus)
    raise ConfigError(f"{fam.value} has no hedgehog profile")


# ----------------------------------------------------------------------------
# tensor fields on point clouds (coords: (dim, ...))


def _polar(coords: np.ndarray):
    x, y = coords[0], coords[1]
    z = coords[2] if coords.shape[0] == 3 else np.zeros_like(x)
    r = np.sqrt(x * x + y * y + z * z)
    return x, y, z, r


def _radial_unit(coords):
    x, y, z, r = _polar(coords)
    safe = np.where(r > 0, r, 1.0)
    n = np.stack([x / safe, y / safe, z / safe])
    n[:, r == 0] = np.array([0.0, 0.0, 1.0])[:, None]
    return n, r


def hedgehog_field(hvals: np.ndarray, coords: np.ndarray) -> np.ndarray:
    n, r = _radial_unit(coords)
    out = hvals * qt.nn_traceless(n)
    out[:, r == 0] = 0.0
    return out


def perturbed_uv_field(u, v, theta, r, epsilon: float) -> np.ndarray:
    """u (n x n - I2/2) + v (p x p - I/3), n tilted out of plane by epsilon (1 - r).

    With epsilon = 0 this is the planar (u, v) tensor, since n x n - I2/2 =
    (n1 x n1 - m x m)/2 for n = n1.
    """
    tilt = epsilon * (1.0 - r)
    inplane = np.sqrt(1.0 - tilt * tilt)
    nx = inplane * np.cos(theta)
    ny = inplane * np.sin(theta)
    nz = tilt + 0.0 * theta
    return np.stack(
        [
            u * (nx * nx - 0.5) - v / 3.0,
            u * (ny * ny - 0.5) - v / 3.0,
            u * nx * ny,
            u * nx * nz,
            u * ny * nz,
        ]
    )


def harmonic_map_q1(coords: np.ndarray, p: Parameters) -> np.ndarray:
    """hp (n1 x n1 - I/3), zero at the origin where n1 is undefined."""
    x, y, _, _ = _polar(coords)
    rho = np.sqrt(x * x + y * y)
    theta = np.arctan2(y, x)
    n1, _, _ = qt.disc_frame(theta)
    out = p.h_plus * qt.nn_traceless(n1)
    out[:, rho == 0] = 0.0
    return out


def harmonic_map_q2(coords: np.ndarray, p: Parameters) -> np.ndarray:
    """hp (n2 x n2 - I/3) with the escaped director (2x, 2y, 1 - r^2)/(1 + r^2)."""
    x, y, _, _ = _polar(coords)
    rho2 = x * x + y * y
    n2 = np.stack([2 * x, 2 * y, 1.0 - rho2]) / (1.0 + rho2)
    return p.h_plus * qt.nn_traceless(n2)


def field_from_spec(spec: InitialConditionSpec, coords: np.ndarray, p: Parameters) -> np.ndarray:
    """Evaluate an initial condition at arbitrary points (coords of shape (dim, ...))."""
    fam = spec.family
    dim = coords.shape[0]
    x, y, z, r = _polar(coords)
    hp = p.h_plus
    if fam in BALL_FAMILIES and dim != 3:
        raise ConfigError(f"{fam.value} is defined on the 3D ball")
    if fam in UV_FAMILIES | {Family.S2D_TANH} and dim != 2:
        raise ConfigError(f"{fam.value} is defined on the disc")

    if fam in HEDGEHOG_FAMILIES:
        return hedgehog_field(hedgehog_profile(spec, r, p), coords)
    if fam is Family.BIAXIAL_SPHERE:
        hvals = case_i_profile(r, spec.r0, p)
        out = hedgehog_field(hvals, coords)
        rho = np.sqrt(x * x + y * y)
        th = np.arctan2(rho, z)
        ph = np.arctan2(y, x)
        m = np.stack([np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), -np.sin(th)])
        pp = np.stack([-np.sin(ph), np.cos(ph), np.zeros_like(ph)])
        s = r * (1.0 - r)
        return out + qt.planar_biaxial_field(s, m, pp)
    if fam is Family.ELLIPSOIDAL:
        arg = (x * x + 4.0 * y * y + 2.0 * z * z - 0.5) / math.sqrt(p.L)
        hvals = hp / 2.0 * (1.0 + np.tanh(arg))
        return hedgehog_field(hvals, coords)

    theta = np.arctan2(y, x)
    if fam in (Family.UV_TANH, Family.UV_PERTURBED):
        u, v = uv_tanh_profiles(r, spec.u0, spec.v0, p)
        return perturbed_uv_field(u, v, theta, r, spec.epsilon if fam is Family.UV_PERTURBED else 0.0)
    if fam is Family.UV_STAR:
        mod = 1.0 + 0.25 * np.sin(5.0 * theta)
        w = math.sqrt(p.L)
        u = 0.5 * hp * (1.0 + np.tanh((r - spec.u0 * mod) / w))
        v = -0.25 * hp * (1.0 + np.tanh((r - spec.v0 * mod) / w))
        return qt.uv_field(u, v, theta)
    if fam is Family.UV_STATIC_SOLUTION:
        from . import radial

        prof = radial.solve_uv_static(p, M=int(spec.params.get("M", 2000)))
        u = np.interp(r, prof.r, prof.u)
        v = np.interp(r, prof.r, prof.v)
        return qt.uv_field(u, v, theta)
    if fam is Family.S2D_TANH:
        s = tanh_front(r, spec.r0, math.sqrt(p.L), hp)
        n1, m, _ = qt.disc_frame(theta)
        return qt.planar_biaxial_field(s, n1, m)
    raise ConfigError(f"unhandled family {fam}")


def boundary_field(scenario: BoundaryScenario | str, coords: np.ndarray, p: Parameters) -> np.ndarray:
    """Dirichlet tensor of a scenario at the given points (away from r = 0)."""
    scenario = BoundaryScenario(scenario)
    hp = p.h_plus
    if scenario is BoundaryScenario.BALL_RADIAL:
        if coords.shape[0] != 3:
            raise ConfigError("BALL_RADIAL needs 3D coordinates")
        n, _ = _radial_unit(coords)
        return hp * qt.nn_traceless(n)
    if coords.shape[0] != 2:
        raise ConfigError(f"{scenario.value} needs disc coordinates")
    theta = np.arctan2(coords[1], coords[0])
    n1, m, _ = qt.disc_frame(theta)
    if scenario is BoundaryScenario.DISC_PLANAR_UNIAXIAL:
        return hp * qt.nn_traceless(n1)
    return qt.planar_biaxial_field(hp, n1, m)


def boundary_tensor(scenario: BoundaryScenario | str, point, p: Parameters) -> qt.QTensor:
    pt = np.asarray(point, dtype=float).reshape(-1, 1)
    return qt.QTensor.from_array(boundary_field(scenario, pt, p)[:, 0])


# ----------------------------------------------------------------------------
# entry point


def generate(spec: InitialConditionSpec, target, p: Parameters, bc: BoundaryScenario | str | None = None):
    """Build a grid FieldState (target is a GridGeometry) or a RadialProfile
    (target is an int mesh size M or a radial mesh array)."""
    from .grid import FieldState, GridGeometry

    if isinstance(target, GridGeometry):
        coords = target.coords()
        data = field_from_spec(spec, coords, p)
        scen = BoundaryScenario(bc) if bc is not None else DEFAULT_BC[spec.family]
        band_vals = boundary_field(scen, coords[:, target.band], p)
        return FieldState.create(target, data, p, band_values=band_vals, meta={"ic": spec.family.value, "bc": scen.value})

    from . import radial

    r = radial.mesh(int(target)) if np.isscalar(target) else np.asarray(target, float)
    fam = spec.family
    if fam in HEDGEHOG_FAMILIES:
        return radial.new_profile("hedgehog", r, hedgehog_profile(spec, r, p)[None], p)
    if fam is Family.UV_TANH:
        u, v = uv_tanh_profiles(r, spec.u0, spec.v0, p)
        return radial.new_profile("uv", r, np.stack([u, v]), p)
    if fam is Family.UV_STATIC_SOLUTION:
        return radial.solve_uv_static(p, M=r.size - 1)
    if fam is Family.S2D_TANH:
        return radial.new_profile("s2d", r, tanh_front(r, spec.r0, math.sqrt(p.L), p.h_plus)[None], p)
    raise ConfigError(f"{fam.value} has no radial reduction")
