"""Diagnostics: interface tracking, curvature fits, escape detection, reference comparisons."""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from scipy import integrate as spi
from scipy.ndimage import map_coordinates

from . import qtensor as qt
from .ldg_model import Parameters


class AnalysisError(ValueError):
    pass


def interface_threshold(p: Parameters) -> float:
    """|Q|^2 below h_+^2 / 3 counts as inside the isotropic region."""
    return p.h_plus**2 / 3.0


# ----------------------------------------------------------------------------
# interface radius


def radial_average(fs, values: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Average a grid quantity (default |Q|^2) over shells of width h.

    Shell k collects the interior and band points with (k - 1/2) h <= |x| <
    (k + 1/2) h; returns the mean radius and mean value of each non-empty shell.
    """
    geom = fs.geometry
    vals = qt.norm_sq(fs.data) if values is None else values
    inside = geom.cls != 2
    r = geom.radius()[inside]
    v = vals[inside]
    k = np.floor(r / geom.h + 0.5).astype(int)
    n = np.bincount(k)
    keep = n > 0
    rs = np.bincount(k, weights=r)[keep] / n[keep]
    vs = np.bincount(k, weights=v)[keep] / n[keep]
    return rs, vs


def threshold_crossing(r: np.ndarray, values: np.ndarray, threshold: float) -> float:
    """First upward crossing of threshold along r, linearly interpolated.

    Returns 0 when no point is below the threshold and 1 when values never
    climb back above it.
    """
    below = values < threshold
    if not below.any():
        return 0.0
    up = np.nonzero(below[:-1] & ~below[1:])[0]
    if up.size == 0:
        return 1.0 if below[-1] else 0.0
    i = up[0]
    v0, v1 = values[i], values[i + 1]
    frac = (threshold - v0) / (v1 - v0)
    return float(np.clip(r[i] + frac * (r[i + 1] - r[i]), 0.0, 1.0))


def interface_radius(obj) -> float:
    """r* of a radial profile or a grid field, from the angularly averaged |Q|^2."""
    if hasattr(obj, "model"):
        r, vals = obj.r, obj.q_norm_sq()
    elif hasattr(obj, "geometry"):
        r, vals = radial_average(obj)
    else:
        raise TypeError(f"cannot locate an interface in {type(obj).__name__}")
    return threshold_crossing(r, vals, interface_threshold(obj.params))


# ----------------------------------------------------------------------------
# fits


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r2: float
    n: int


def linear_fit(x, y) -> LinearFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise AnalysisError("a linear fit needs at least two samples")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return LinearFit(float(slope), float(intercept), r2, int(x.size))


@dataclass(frozen=True)
class CurvatureFit:
    c: float
    r0_sq: float
    r2: float
    n: int
    reference: float

    def prediction(self, t) -> np.ndarray:
        return np.sqrt(np.maximum(self.r0_sq - self.c * np.asarray(t, float), 0.0))


def first_shrink_time(r0: float) -> float:
    """T1 = (r0^2 - 1/4)/4: when sqrt(r0^2 - 4t) reaches 1/2."""
    return 0.25 * (r0 * r0 - 0.25)


def mean_curvature_fit(
    times,
    r_star,
    dim: int = 3,
    t_max: float | None = None,
    collapse_radius: float = 0.0,
    min_samples: int = 10,
    exclude_initial: bool = False,
) -> CurvatureFit:
    """Least squares r*^2 = r0^2 - c t.

    Samples after t_max or with r* below collapse_radius (use 3h) are left out,
    and so is the first sample when exclude_initial is set: an initial front
    wider than the relaxed one sits off the later trend. The reference slope
    is 2(dim - 1): 4 for a sphere, 2 for a circle.
    """
    t = np.asarray(times, dtype=float)
    rs = np.asarray(r_star, dtype=float)
    keep = rs >= collapse_radius
    if collapse_radius > 0 and not keep.all():
        keep[np.argmin(keep):] = False
    if exclude_initial:
        keep[0] = False
    if t_max is not None:
        keep &= t <= t_max + 1e-14
    if keep.sum() < min_samples:
        raise AnalysisError(f"need at least {min_samples} samples in the fit window, got {int(keep.sum())}")
    fit = linear_fit(t[keep], rs[keep] ** 2)
    return CurvatureFit(-fit.slope, fit.intercept, fit.r2, fit.n, 2.0 * (dim - 1))


# ----------------------------------------------------------------------------
# planarity and escape


def planarity_residual(fs) -> float:
    inner = fs.geometry.interior
    return float(max(np.max(np.abs(fs.data[3][inner])), np.max(np.abs(fs.data[4][inner]))))


def origin_norm_sq(fs) -> float:
    return float(qt.norm_sq(fs.data[(slice(None),) + fs.geometry.origin_index]))


def detect_t_star(times, q0_sq, threshold: float) -> float:
    """First time |Q(0, t)|^2 exceeds threshold, interpolated between ticks; inf if never."""
    t = np.asarray(times, dtype=float)
    q = np.asarray(q0_sq, dtype=float)
    above = q > threshold
    if not above.any():
        return math.inf
    i = int(np.argmax(above))
    if i == 0:
        return float(t[0])
    frac = (threshold - q[i - 1]) / (q[i] - q[i - 1])
    return float(t[i - 1] + frac * (t[i] - t[i - 1]))


def diagnostics_row(fs) -> dict:
    return {
        "t": fs.t,
        "energy": fs.energy(),
        "r_star": interface_radius(fs),
        "qnorm_origin_sq": origin_norm_sq(fs),
        "planarity_residual": planarity_residual(fs),
        "max_abs_q": float(np.sqrt(np.max(qt.norm_sq(fs.data)))),
    }


# ----------------------------------------------------------------------------
# reference fields


def harmonic_map_deviation(fs, target: str = "Q1", r_min: float = 0.1, r_max: float | None = None) -> dict:
    """Pointwise |Q - Q_ref| against Q1, Q2 (disc) or the radial hedgehog (ball).

    For "radial" the comparison is between sqrt(2/3) Q/|Q| and x x/|x|^2 - I/3,
    both of norm sqrt(2/3); points with |Q| < 1e-6 are skipped. Norms are
    taken over r_min < |x| (< r_max) inside the domain.
    """
    from . import initial

    coords = fs.geometry.coords()
    r = np.sqrt(np.sum(coords**2, axis=0))
    if target == "Q1":
        ref = initial.harmonic_map_q1(coords, fs.params)
        diff = fs.data - ref
    elif target == "Q2":
        ref = initial.harmonic_map_q2(coords, fs.params)
        diff = fs.data - ref
    elif target == "radial":
        if fs.geometry.dim != 3:
            raise AnalysisError("the radial reference lives on the ball")
        nrm = np.sqrt(qt.norm_sq(fs.data))
        safe = np.where(nrm > 1e-6, nrm, 1.0)
        ref = initial.hedgehog_field(np.ones_like(r), coords)
        diff = math.sqrt(2.0 / 3.0) * fs.data / safe - ref
        diff[:, nrm <= 1e-6] = 0.0
    else:
        raise AnalysisError(f"unknown reference {target!r}")
    pointwise = np.sqrt(qt.norm_sq(diff))
    mask = (fs.geometry.cls != 2) & (r > r_min)
    if r_max is not None:
        mask &= r < r_max
    vals = pointwise[mask]
    l2 = math.sqrt(float(np.sum(vals**2)) * fs.geometry.h**fs.geometry.dim)
    return {"pointwise": pointwise, "max": float(vals.max()) if vals.size else 0.0, "l2": l2}


def sample_ray(fs, direction, r) -> np.ndarray:
    """Multilinear interpolation of the five components at r * direction."""
    d = np.asarray(direction, dtype=float)
    if d.size != fs.geometry.dim:
        raise AnalysisError("direction must match the grid dimension")
    d = d / np.linalg.norm(d)
    r = np.asarray(r, dtype=float)
    idx = (r[None, :] * d[:, None] + 1.0) / fs.geometry.h
    return np.stack([map_coordinates(fs.data[k], idx, order=1, mode="grid-wrap") for k in range(5)])


def eigenvalue_profile(fs, direction, n_samples: int | None = None) -> np.ndarray:
    """Rows (r, l1, l2, l3) along a ray from the origin to r = 1, ascending eigenvalues."""
    n = n_samples or fs.geometry.N // 2 + 1
    r = np.linspace(0.0, 1.0, n)
    lam = qt.eigvalsh_field(sample_ray(fs, direction, r))
    return np.column_stack([r, np.moveaxis(lam, 0, -1)])


def boundary_layer_width(r, values, level: float) -> float:
    """Distance from r = 1 to the outermost point where values fall below level."""
    r = np.asarray(r, dtype=float)
    below = np.nonzero(np.asarray(values) < level)[0]
    if below.size == 0:
        return 1.0
    i = below[-1]
    if i + 1 >= r.size:
        return 0.0
    v0, v1 = values[i], values[i + 1]
    x = r[i] + (level - v0) / (v1 - v0) * (r[i + 1] - r[i])
    return float(1.0 - x)


# ----------------------------------------------------------------------------
# weighted interface energy of a hedgehog profile


def weight_phi(R, rho: float) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    return np.exp(-2.0 * R / rho) * (1.0 + R / rho) ** 2


def g_potential(s, h_plus: float) -> np.ndarray:
    """g(s) = (2/sqrt 3) int_0^s w (hp - w) dw."""
    s = np.asarray(s, dtype=float)
    return 2.0 / math.sqrt(3.0) * (0.5 * h_plus * s * s - s**3 / 3.0)


def g_plus(h_plus: float) -> float:
    return h_plus**3 / (3.0 * math.sqrt(3.0))


def g_plus_quadrature(h_plus: float) -> float:
    val, _ = spi.quad(lambda w: w * (h_plus - w), 0.0, h_plus, epsabs=1e-15, epsrel=1e-14)
    return 2.0 / math.sqrt(3.0) * val


@dataclass(frozen=True)
class WeightedEnergy:
    e_phi: float
    g_mass: float
    g_plus: float

    @property
    def excess(self) -> float:
        return self.e_phi - self.g_plus


def weighted_energy(r, h, rho: float, p: Parameters, half_width: float | None = None) -> WeightedEnergy:
    """E_phi of w(R) = h(R + rho) and the mismatch int |g(w) - g(v)| dR.

    v is the step from 0 to h_+ at R = 0; the mismatch integral runs over
    |R| <= half_width (default rho(T1) / (2 sqrt 2) = 1/(4 sqrt 2)).
    """
    if not 0.0 < rho < 1.0:
        raise AnalysisError(f"rho must lie in (0, 1), got {rho}")
    r = np.asarray(r, dtype=float)
    w = np.asarray(h, dtype=float)
    R = r - rho
    lb = p.L_bar
    sq = math.sqrt(lb)
    hp = p.h_plus
    wR = np.gradient(w, r, edge_order=2)
    geo = np.divide(2.0 * w * w, r * r, out=np.zeros_like(r), where=r > 0)
    dens = sq * (wR * wR / 3.0 + geo) + w * w * (hp - w) ** 2 / sq
    e_phi = float(np.trapezoid(weight_phi(R, rho) * dens, R))
    a = half_width if half_width is not None else 0.25 / math.sqrt(2.0)
    sel = np.abs(R) <= a
    v = np.where(R < 0, 0.0, hp)
    mism = np.abs(g_potential(w, hp) - g_potential(v, hp))
    g_mass = float(np.trapezoid(mism[sel], R[sel]))
    return WeightedEnergy(e_phi, g_mass, g_plus(hp))
