"""Immersed-boundary Cartesian solver on the periodic cube [-1, 1]^dim.

Points within h/2 of the unit sphere (circle) carry Dirichlet data, points
inside evolve under the full five-component system and points outside under
the heat equation. The 2nd-order stencil of an interior point only reaches
interior or band points, so the interior update is the exact gradient flow of
``ldg_model.grid_energy``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math
import os

import numba as nb
import numpy as np

from . import ldg_model
from .initial import ConfigError
from .ldg_model import Parameters

INTERIOR, BAND, EXTERIOR = 0, 1, 2
RK4_REAL_STABILITY = 2.785293563405282


class DivergenceError(RuntimeError):
    def __init__(self, msg: str, index: tuple, last_good=None):
        super().__init__(msg)
        self.index = index
        self.last_good = last_good


@dataclass(frozen=True, eq=False)
class GridGeometry:
    dim: int
    N: int
    shape: str
    cls: np.ndarray

    @property
    def h(self) -> float:
        return 2.0 / self.N

    @property
    def interior(self) -> np.ndarray:
        return self.cls == INTERIOR

    @property
    def band(self) -> np.ndarray:
        return self.cls == BAND

    @property
    def exterior(self) -> np.ndarray:
        return self.cls == EXTERIOR

    @property
    def origin_index(self) -> tuple:
        return (self.N // 2,) * self.dim

    def axis(self) -> np.ndarray:
        return -1.0 + self.h * np.arange(self.N)

    def coords(self) -> np.ndarray:
        """Point coordinates, shape (dim, N, ..., N)."""
        ax = self.axis()
        return np.stack(np.meshgrid(*([ax] * self.dim), indexing="ij"))

    def radius(self) -> np.ndarray:
        return np.sqrt(np.sum(self.coords() ** 2, axis=0))

    def counts(self) -> dict:
        return {name: int(np.sum(self.cls == c)) for name, c in (("interior", INTERIOR), ("band", BAND), ("exterior", EXTERIOR))}


def classify(N: int, dim: int = 3, shape: str | None = None) -> GridGeometry:
    """Classify the points of an N^dim grid against the unit ball or disc."""
    if dim not in (2, 3):
        raise ConfigError(f"dimension must be 2 or 3, got {dim}")
    shape = shape or ("ball" if dim == 3 else "disc")
    if (shape, dim) not in (("ball", 3), ("disc", 2)):
        raise ConfigError(f"shape {shape!r} is not available in {dim}D")
    if N < 16 or N % 2:
        raise ConfigError(f"N must be even and at least 16, got {N}")
    h = 2.0 / N
    ax = -1.0 + h * np.arange(N)
    r2 = sum(np.meshgrid(*([ax * ax] * dim), indexing="ij"))
    r = np.sqrt(r2)
    cls = np.full(r.shape, EXTERIOR, dtype=np.int8)
    cls[np.abs(r - 1.0) < 0.5 * h] = BAND
    cls[r < 1.0 - 0.5 * h] = INTERIOR
    cls.setflags(write=False)
    return GridGeometry(dim, N, shape, cls)


@dataclass
class FieldState:
    geometry: GridGeometry
    data: np.ndarray  # (5, N, ..., N)
    params: Parameters
    t: float = 0.0
    band_values: np.ndarray | None = None  # (5, n_band) Dirichlet data
    meta: dict = field(default_factory=dict)

    @classmethod
    def create(cls, geometry, data, params, t=0.0, band_values=None, meta=None) -> "FieldState":
        data = np.ascontiguousarray(np.array(data, dtype=float))
        if data.shape != (5,) + geometry.cls.shape:
            raise ValueError(f"field shape {data.shape} does not match the grid {geometry.cls.shape}")
        if band_values is None:
            band_values = data[:, geometry.band].copy()
        band_values = np.asarray(band_values, dtype=float)
        data[:, geometry.band] = band_values
        return cls(geometry, data, params, float(t), band_values, dict(meta or {}))

    def copy(self) -> "FieldState":
        return FieldState(self.geometry, self.data.copy(), self.params, self.t, self.band_values, dict(self.meta))

    def band_exact(self) -> bool:
        return bool(np.array_equal(self.data[:, self.geometry.band], self.band_values))

    def energy(self) -> float:
        return ldg_model.grid_energy(self.data, self.geometry, self.params)


# ----------------------------------------------------------------------------
# reference (numpy) operators


def _lap_axis(a: np.ndarray, axis: int, order: int) -> np.ndarray:
    if order == 2:
        return np.roll(a, 1, axis) + np.roll(a, -1, axis) - 2.0 * a
    return (
        -np.roll(a, 2, axis) + 16.0 * np.roll(a, 1, axis) - 30.0 * a
        + 16.0 * np.roll(a, -1, axis) - np.roll(a, -2, axis)
    ) / 12.0


def periodic_laplacian(data: np.ndarray, h: float, order: int = 2) -> np.ndarray:
    """Central-difference Laplacian of (ncomp, N, ...) data on the periodic box."""
    if order not in (2, 4):
        raise ConfigError("stencil order must be 2 or 4")
    out = np.zeros_like(data)
    for ax in range(1, data.ndim):
        out += _lap_axis(data, ax, order)
    return out / (h * h)


def laplacian(fs: FieldState, order: int = 2) -> np.ndarray:
    out = periodic_laplacian(fs.data, fs.geometry.h, order)
    out[:, fs.geometry.band] = 0.0
    return out


def rhs(fs: FieldState, order: int = 2) -> np.ndarray:
    out = laplacian(fs, order)
    inner = fs.geometry.interior
    out[:, inner] += ldg_model.reaction_field(fs.data[:, inner], fs.params) / fs.params.L
    return out


# ----------------------------------------------------------------------------
# fused numba kernels; mode 0: acc = k, 1: acc += 2k, 2: final combination


@nb.njit(inline="always")
def _reaction_point(q11, q22, q12, q13, q23, A, B, C, out):
    c2 = 2.0 * C * (q11 * q11 + q22 * q22 + q12 * q12 + q11 * q22 + q13 * q13 + q23 * q23)
    b3 = B / 3.0
    out[0] = -(A * q11 + c2 * q11 - b3 * (q11 * q11 + q12 * q12 + q13 * q13 - 2.0 * q22 * q22 - 2.0 * q11 * q22 - 2.0 * q23 * q23))
    out[1] = -(A * q22 + c2 * q22 - b3 * (q12 * q12 + q22 * q22 + q23 * q23 - 2.0 * q11 * q11 - 2.0 * q11 * q22 - 2.0 * q13 * q13))
    out[2] = -(A * q12 + c2 * q12 - B * (q11 * q12 + q12 * q22 + q13 * q23))
    out[3] = -(A * q13 + c2 * q13 - B * (q12 * q23 - q22 * q13))
    out[4] = -(A * q23 + c2 * q23 - B * (q12 * q13 - q23 * q11))


@nb.njit(parallel=True, cache=True)
def _stage2d(src, base, acc, dst, cls, pars, coef, mode, order):
    A, B, C, invL, invh2 = pars[0], pars[1], pars[2], pars[3], pars[4]
    n0, n1 = cls.shape
    for i in nb.prange(n0):
        f = np.empty(5)
        r = np.empty(5)
        for j in range(n1):
            c = cls[i, j]
            if c == 1:
                if mode == 0:
                    for k5 in range(5):
                        acc[k5, i, j] = 0.0
                for k5 in range(5):
                    dst[k5, i, j] = base[k5, i, j]
                continue
            ip = i + 1 if i + 1 < n0 else 0
            im = i - 1 if i > 0 else n0 - 1
            jp = j + 1 if j + 1 < n1 else 0
            jm = j - 1 if j > 0 else n1 - 1
            if order == 2:
                for k5 in range(5):
                    s = src[k5]
                    f[k5] = (s[ip, j] + s[im, j] + s[i, jp] + s[i, jm] - 4.0 * s[i, j]) * invh2
            else:
                ip2 = (i + 2) % n0
                im2 = (i - 2 + n0) % n0
                jp2 = (j + 2) % n1
                jm2 = (j - 2 + n1) % n1
                for k5 in range(5):
                    s = src[k5]
                    f[k5] = (
                        16.0 * (s[ip, j] + s[im, j] + s[i, jp] + s[i, jm])
                        - (s[ip2, j] + s[im2, j] + s[i, jp2] + s[i, jm2])
                        - 60.0 * s[i, j]
                    ) * (invh2 / 12.0)
            if c == 0:
                _reaction_point(src[0, i, j], src[1, i, j], src[2, i, j], src[3, i, j], src[4, i, j], A, B, C, r)
                for k5 in range(5):
                    f[k5] += r[k5] * invL
            for k5 in range(5):
                fk = f[k5]
                if mode == 0:
                    acc[k5, i, j] = fk
                    dst[k5, i, j] = base[k5, i, j] + coef * fk
                elif mode == 1:
                    acc[k5, i, j] += 2.0 * fk
                    dst[k5, i, j] = base[k5, i, j] + coef * fk
                else:
                    dst[k5, i, j] = base[k5, i, j] + coef * (acc[k5, i, j] + fk)


@nb.njit(parallel=True, cache=True)
def _stage3d(src, base, acc, dst, cls, pars, coef, mode, order):
    A, B, C, invL, invh2 = pars[0], pars[1], pars[2], pars[3], pars[4]
    n0, n1, n2 = cls.shape
    for i in nb.prange(n0):
        f = np.empty(5)
        r = np.empty(5)
        ip = i + 1 if i + 1 < n0 else 0
        im = i - 1 if i > 0 else n0 - 1
        ip2 = (i + 2) % n0
        im2 = (i - 2 + n0) % n0
        for j in range(n1):
            jp = j + 1 if j + 1 < n1 else 0
            jm = j - 1 if j > 0 else n1 - 1
            jp2 = (j + 2) % n1
            jm2 = (j - 2 + n1) % n1
            for l in range(n2):
                c = cls[i, j, l]
                if c == 1:
                    if mode == 0:
                        for k5 in range(5):
                            acc[k5, i, j, l] = 0.0
                    for k5 in range(5):
                        dst[k5, i, j, l] = base[k5, i, j, l]
                    continue
                lp = l + 1 if l + 1 < n2 else 0
                lm = l - 1 if l > 0 else n2 - 1
                if order == 2:
                    for k5 in range(5):
                        s = src[k5]
                        f[k5] = (
                            s[ip, j, l] + s[im, j, l] + s[i, jp, l] + s[i, jm, l] + s[i, j, lp] + s[i, j, lm]
                            - 6.0 * s[i, j, l]
                        ) * invh2
                else:
                    lp2 = (l + 2) % n2
                    lm2 = (l - 2 + n2) % n2
                    for k5 in range(5):
                        s = src[k5]
                        f[k5] = (
                            16.0 * (s[ip, j, l] + s[im, j, l] + s[i, jp, l] + s[i, jm, l] + s[i, j, lp] + s[i, j, lm])
                            - (s[ip2, j, l] + s[im2, j, l] + s[i, jp2, l] + s[i, jm2, l] + s[i, j, lp2] + s[i, j, lm2])
                            - 90.0 * s[i, j, l]
                        ) * (invh2 / 12.0)
                if c == 0:
                    _reaction_point(
                        src[0, i, j, l], src[1, i, j, l], src[2, i, j, l], src[3, i, j, l], src[4, i, j, l], A, B, C, r
                    )
                    for k5 in range(5):
                        f[k5] += r[k5] * invL
                for k5 in range(5):
                    fk = f[k5]
                    if mode == 0:
                        acc[k5, i, j, l] = fk
                        dst[k5, i, j, l] = base[k5, i, j, l] + coef * fk
                    elif mode == 1:
                        acc[k5, i, j, l] += 2.0 * fk
                        dst[k5, i, j, l] = base[k5, i, j, l] + coef * fk
                    else:
                        dst[k5, i, j, l] = base[k5, i, j, l] + coef * (acc[k5, i, j, l] + fk)


@nb.njit(cache=True)
def _first_nonfinite(flat):
    for i in range(flat.size):
        if not np.isfinite(flat[i]):
            return i
    return -1


class Stepper:
    """Holds the RK4 work arrays for one grid so repeated steps do not allocate."""

    def __init__(self, geometry: GridGeometry, params: Parameters, order: int = 2):
        if order not in (2, 4):
            raise ConfigError("stencil order must be 2 or 4")
        self.geometry = geometry
        self.params = params
        self.order = order
        self.cls = np.ascontiguousarray(geometry.cls)
        shape = (5,) + geometry.cls.shape
        self._t1 = np.empty(shape)
        self._t2 = np.empty(shape)
        self._acc = np.empty(shape)
        self._pars = np.array([params.A, params.B, params.C, 1.0 / params.L, 1.0 / geometry.h**2])
        self._stage = _stage3d if geometry.dim == 3 else _stage2d

    def step_inplace(self, y: np.ndarray, dt: float, nsteps: int = 1):
        st, t1, t2, acc, cls, pars, o = self._stage, self._t1, self._t2, self._acc, self.cls, self._pars, self.order
        for _ in range(nsteps):
            st(y, y, acc, t1, cls, pars, 0.5 * dt, 0, o)
            st(t1, y, acc, t2, cls, pars, 0.5 * dt, 1, o)
            st(t2, y, acc, t1, cls, pars, dt, 1, o)
            st(t1, y, acc, y, cls, pars, dt / 6.0, 2, o)

    def advance(self, fs: FieldState, dt: float, nsteps: int = 1) -> FieldState:
        if not dt > 0:
            raise ConfigError("dt must be positive")
        y = fs.data.copy()
        self.step_inplace(y, dt, nsteps)
        bad = _first_nonfinite(y.reshape(-1))
        if bad >= 0:
            idx = np.unravel_index(bad, y.shape)
            raise DivergenceError(
                f"non-finite value in component {idx[0]} at grid index {tuple(int(i) for i in idx[1:])}",
                tuple(int(i) for i in idx),
                fs,
            )
        out = FieldState(fs.geometry, y, fs.params, fs.t + nsteps * dt, fs.band_values, fs.meta)
        return out


def rk4_step(fs: FieldState, dt: float, order: int = 2) -> FieldState:
    return Stepper(fs.geometry, fs.params, order).advance(fs, dt)


def diffusion_lambda_max(geometry: GridGeometry, order: int = 2) -> float:
    per_axis = 4.0 if order == 2 else 16.0 / 3.0
    return per_axis * geometry.dim / geometry.h**2


def stable_dt(geometry: GridGeometry, params: Parameters, order: int = 2, safety: float = 0.9) -> float:
    """Largest step keeping every mode inside RK4's real stability interval, scaled by safety."""
    lam = diffusion_lambda_max(geometry, order) + ldg_model.reaction_lipschitz(params) / params.L
    return safety * RK4_REAL_STABILITY / lam


def conservative_dt(geometry: GridGeometry, params: Parameters, margin: float = 1.1) -> float:
    """min(h^2 / (2 dim margin), L / K): the forward-Euler style bound."""
    return min(geometry.h**2 / (2 * geometry.dim * margin), params.L / ldg_model.reaction_lipschitz(params))


def set_threads(n: int | None):
    if n is None:
        env = os.environ.get("QFLOW_THREADS")
        n = int(env) if env else None
    if n:
        nb.set_num_threads(max(1, min(int(n), nb.config.NUMBA_NUM_THREADS)))


# ----------------------------------------------------------------------------
# time loop


@dataclass
class Trajectory:
    rows: list
    snapshots: list
    final: FieldState
    dt: float
    steps: int


def integrate(
    fs: FieldState,
    t_end: float,
    dt: float | None = None,
    n_snapshots: int = 50,
    order: int = 2,
    diagnostics=None,
    keep_snapshots: bool = True,
    on_snapshot=None,
) -> Trajectory:
    """RK4 from fs.t to t_end with n_snapshots equally spaced records.

    diagnostics(fs) returns the row recorded at every tick (defaults to
    ``analysis.diagnostics_row``). on_snapshot(fs) is called at every tick,
    also for the last good state before a divergence is re-raised.
    """
    from .analysis import diagnostics_row

    diagnostics = diagnostics or diagnostics_row
    dt_max = stable_dt(fs.geometry, fs.params, order)
    dt = dt_max if dt is None else float(dt)
    span = t_end - fs.t
    if span <= 0:
        raise ConfigError("t_end must exceed the current time")
    nsteps = max(1, math.ceil(span / dt - 1e-9))
    dt = span / nsteps
    ticks = np.unique(np.linspace(0, nsteps, max(1, n_snapshots) + 1).round().astype(int))
    stepper = Stepper(fs.geometry, fs.params, order)
    t0 = fs.t
    cur = fs
    rows = [diagnostics(cur)]
    snaps = [cur.copy()] if keep_snapshots else []
    if on_snapshot:
        on_snapshot(cur)
    for a, b in zip(ticks[:-1], ticks[1:]):
        try:
            cur = stepper.advance(cur, dt, int(b - a))
        except DivergenceError as err:
            if on_snapshot and err.last_good is not None:
                on_snapshot(err.last_good)
            raise
        cur.t = t0 + b * dt
        rows.append(diagnostics(cur))
        if keep_snapshots:
            snaps.append(cur.copy())
        if on_snapshot:
            on_snapshot(cur)
    return Trajectory(rows, snaps, cur, dt, nsteps)


def run(config, on_snapshot=None, keep_snapshots: bool = True) -> Trajectory:
    """Build the initial field described by a RunConfig and integrate it."""
    from . import initial

    geom = classify(config.N, config.dim)
    fs = initial.generate(config.ic_spec(), geom, config.params(), bc=config.bc)
    return integrate(
        fs,
        config.t_end,
        dt=config.dt,
        n_snapshots=config.snapshots,
        order=config.stencil,
        keep_snapshots=keep_snapshots,
        on_snapshot=on_snapshot,
    )
