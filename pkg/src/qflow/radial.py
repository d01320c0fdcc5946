"""Reduced radial models on a uniform mesh r_i = i/M, i = 0..M.

Three models share one machinery:

* ``hedgehog``: Q = h(r)(r x r - I/3) on the ball,
* ``uv``:       Q = (u/2)(n1 x n1 - m x m) + v(p x p - I/3) on the disc,
* ``s2d``:      Q = s(r)(n1 x n1 - m x m) for 2x2 tensors on the disc.

Each right-hand side is written in conservative (finite-volume) form so that
it is the exact gradient of the matching discrete energy; an RK4 step inside
its stability region therefore lowers that energy.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
import math

import numba as nb
import numpy as np
from scipy import sparse
from scipy.linalg import eigvalsh_tridiagonal
from scipy.sparse.linalg import spsolve

from .ldg_model import Parameters

MODELS = {"hedgehog": ("h",), "uv": ("u", "v"), "s2d": ("s",)}


class DivergenceError(RuntimeError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, msg: str, residual: float):
        super().__init__(msg)
        self.residual = residual


@dataclass
class RadialProfile:
    model: str
    r: np.ndarray
    values: np.ndarray  # (ncomp, M + 1)
    params: Parameters
    t: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown radial model {self.model!r}")
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.shape != (len(MODELS[self.model]), self.r.size):
            raise ValueError("values do not match the mesh / model")

    @property
    def M(self) -> int:
        return self.r.size - 1

    @property
    def dr(self) -> float:
        return 1.0 / self.M

    def __getattr__(self, name):
        names = MODELS.get(self.__dict__.get("model", ""), ())
        if name in names:
            return self.values[names.index(name)]
        raise AttributeError(name)

    def copy(self) -> "RadialProfile":
        return replace(self, values=self.values.copy(), meta=dict(self.meta))

    def q_norm_sq(self) -> np.ndarray:
        """|Q|^2 of the tensor the profile represents."""
        if self.model == "hedgehog":
            return 2.0 / 3.0 * self.h**2
        if self.model == "uv":
            return 0.5 * self.u**2 + 2.0 / 3.0 * self.v**2
        return 2.0 * self.s**2


def mesh(M: int) -> np.ndarray:
    if M < 4:
        raise ValueError("radial mesh needs M >= 4")
    return np.arange(M + 1) / M


def boundary_values(model: str, p: Parameters) -> np.ndarray:
    hp = p.h_plus
    return {
        "hedgehog": np.array([hp]),
        "uv": np.array([hp, -0.5 * hp]),
        "s2d": np.array([hp]),
    }[model]


def new_profile(model: str, r: np.ndarray, values, p: Parameters, t: float = 0.0) -> RadialProfile:
    """Wrap values, pinning r = 1 to the model's boundary data and the
    Dirichlet origin values to zero."""
    vals = np.array(np.atleast_2d(values), dtype=float)
    vals[:, -1] = boundary_values(model, p)
    vals[0, 0] = 0.0  # h(0) = u(0) = s(0) = 0; v(0) is free
    return RadialProfile(model, np.asarray(r, dtype=float), vals, p, t)


# ----------------------------------------------------------------------------
# kernels: y has shape (ncomp, M + 1); pars = (A, B, C, L, hp)


@nb.njit(cache=True)
def _rhs_hedgehog(y, M, pars, out):
    A, B, C, L, hp = pars[0], pars[1], pars[2], pars[3], pars[4]
    k = C / (3.0 * L)  # 3 / L_bar
    dr = 1.0 / M
    h = y[0]
    out[0, 0] = 0.0
    out[0, M] = 0.0
    for i in range(1, M):
        ri = i * dr
        wp = (i + 0.5) * (i + 0.5)
        wm = (i - 0.5) * (i - 0.5)
        lap = (wp * (h[i + 1] - h[i]) - wm * (h[i] - h[i - 1])) / (i * i * dr * dr)
        hi = h[i]
        out[0, i] = lap - 6.0 * hi / (ri * ri) + k * hi * (hp - hi) * (2.0 * hi - hp)


@nb.njit(cache=True)
def _rhs_uv(y, M, pars, out):
    A, B, C, L, hp = pars[0], pars[1], pars[2], pars[3], pars[4]
    dr = 1.0 / M
    u = y[0]
    v = y[1]
    out[0, 0] = 0.0
    out[0, M] = 0.0
    out[1, M] = 0.0
    # origin: symmetric cell of volume dr^2/8 gives Lap v = 4 (v1 - v0)/dr^2
    v0 = v[0]
    out[1, 0] = 4.0 * (v[1] - v0) / (dr * dr) - v0 / L * (A - B * v0 / 3.0 + C * (2.0 * v0 * v0 / 3.0))
    for i in range(1, M):
        ri = i * dr
        wp = i + 0.5
        wm = i - 0.5
        ui = u[i]
        vi = v[i]
        lap_u = (wp * (u[i + 1] - ui) - wm * (ui - u[i - 1])) / (i * dr * dr)
        lap_v = (wp * (v[i + 1] - vi) - wm * (vi - v[i - 1])) / (i * dr * dr)
        q2 = C * (0.5 * ui * ui + 2.0 * vi * vi / 3.0)
        out[0, i] = lap_u - 4.0 * ui / (ri * ri) - ui / L * (A + 2.0 * B * vi / 3.0 + q2)
        out[1, i] = lap_v - vi / L * (A - B * vi / 3.0 + q2) - B * ui * ui / (4.0 * L)


@nb.njit(cache=True)
def _rhs_s2d(y, M, pars, out):
    A, B, C, L, hp = pars[0], pars[1], pars[2], pars[3], pars[4]
    dr = 1.0 / M
    s = y[0]
    out[0, 0] = 0.0
    out[0, M] = 0.0
    for i in range(1, M):
        ri = i * dr
        wp = i + 0.5
        wm = i - 0.5
        si = s[i]
        lap = (wp * (s[i + 1] - si) - wm * (si - s[i - 1])) / (i * dr * dr)
        out[0, i] = lap - 4.0 * si / (ri * ri) - si / L * (A + 2.0 * C * si * si)


_RHS = {"hedgehog": _rhs_hedgehog, "uv": _rhs_uv, "s2d": _rhs_s2d}


@nb.njit(cache=True)
def _rk4_loop(rhs, y, M, pars, dt, nsteps):
    k = np.empty_like(y)
    acc = np.empty_like(y)
    tmp = np.empty_like(y)
    for _ in range(nsteps):
        rhs(y, M, pars, k)
        acc[:] = k
        tmp[:] = y + 0.5 * dt * k
        rhs(tmp, M, pars, k)
        acc += 2.0 * k
        tmp[:] = y + 0.5 * dt * k
        rhs(tmp, M, pars, k)
        acc += 2.0 * k
        tmp[:] = y + dt * k
        rhs(tmp, M, pars, k)
        acc += k
        y += (dt / 6.0) * acc
    return y


def _pars(p: Parameters) -> np.ndarray:
    return np.array([p.A, p.B, p.C, p.L, p.h_plus], dtype=float)


def rhs(profile: RadialProfile) -> np.ndarray:
    out = np.zeros_like(profile.values)
    _RHS[profile.model](profile.values, profile.M, _pars(profile.params), out)
    return out


# ----------------------------------------------------------------------------
# stability


def _diffusion_lambda_max(model: str, M: int) -> float:
    """Largest eigenvalue of the linear (diffusion + 1/r^2) part."""
    i = np.arange(M + 1, dtype=float)
    if model == "hedgehog":
        wp, wm, vol, geo = (i + 0.5) ** 2, (i - 0.5) ** 2, i**2, 6.0
    else:
        wp, wm, vol, geo = i + 0.5, i - 0.5, i.copy(), 4.0
    first = 0 if model == "uv" else 1  # v is free at the origin
    if model == "uv":
        vol[0] = 0.125
        wm[0] = 0.0
    idx = np.arange(first, M)
    if idx.size == 0:
        return 0.0
    volc = vol[idx]
    diag = (wp[idx] + wm[idx]) / volc
    with np.errstate(divide="ignore"):
        diag = diag + np.where(idx > 0, geo / np.maximum(idx, 1) ** 2, 0.0)
    # symmetrised off-diagonal of V^-1 K: w_{i+1/2} / sqrt(V_i V_{i+1})
    off = wp[idx[:-1]] / np.sqrt(volc[:-1] * volc[1:])
    lam = eigvalsh_tridiagonal(diag, -off, select="i", select_range=(idx.size - 1, idx.size - 1))
    return float(lam[0]) * M * M


def _reaction_lipschitz(model: str, p: Parameters) -> float:
    hp = p.h_plus
    if model == "hedgehog":
        return p.C * hp * hp / (3.0 * p.L) * 3.0 * 1.05
    if model == "s2d":
        return (p.A + 6.0 * p.C * (1.05 * hp) ** 2) / p.L
    # u is weighted twice as strongly as v in the metric, bound both ways
    a, b, c = p.A, p.B, p.C
    u, v = 1.05 * hp, 0.55 * hp
    return 2.0 * (a + b * (u + v) + c * (1.5 * u * u + 2.0 * v * v) + b * u) / p.L


def stable_dt(model: str, M: int, p: Parameters, safety: float = 0.9) -> float:
    """RK4 step inside the real-axis stability interval (-2.78, 0)."""
    lam = _diffusion_lambda_max(model, M) + _reaction_lipschitz(model, p)
    return safety * 2.78 / lam


# ----------------------------------------------------------------------------
# stepping


def _check(y: np.ndarray, model: str):
    if not np.all(np.isfinite(y)):
        bad = np.argwhere(~np.isfinite(y))[0]
        raise DivergenceError(f"{model} profile diverged at component {bad[0]}, node {bad[1]}")


def _step(profile: RadialProfile, dt: float, nsteps: int, model: str) -> RadialProfile:
    if profile.model != model:
        raise ValueError(f"expected a {model!r} profile, got {profile.model!r}")
    if not dt > 0:
        raise ValueError("dt must be positive")
    y = np.ascontiguousarray(profile.values.copy())
    _rk4_loop(_RHS[model], y, profile.M, _pars(profile.params), float(dt), int(nsteps))
    _check(y, model)
    out = profile.copy()
    out.values = y
    out.t = profile.t + nsteps * dt
    return out


def step_h(profile: RadialProfile, dt: float, nsteps: int = 1) -> RadialProfile:
    return _step(profile, dt, nsteps, "hedgehog")


def step_uv(profile: RadialProfile, dt: float, nsteps: int = 1) -> RadialProfile:
    return _step(profile, dt, nsteps, "uv")


def step_s2d(profile: RadialProfile, dt: float, nsteps: int = 1) -> RadialProfile:
    return _step(profile, dt, nsteps, "s2d")


_STEP = {"hedgehog": step_h, "uv": step_uv, "s2d": step_s2d}


@dataclass
class RadialTrajectory:
    times: np.ndarray
    energy: np.ndarray
    r_star: np.ndarray
    q0_sq: np.ndarray
    final: RadialProfile
    snapshots: list = field(default_factory=list)


def evolve(
    profile: RadialProfile,
    t_end: float,
    dt: float | None = None,
    n_records: int = 50,
    keep_snapshots: bool = False,
) -> RadialTrajectory:
    """Integrate to t_end recording energy and interface radius n_records times."""
    from .analysis import interface_radius

    dt_max = stable_dt(profile.model, profile.M, profile.params)
    dt = dt_max if dt is None else float(dt)
    span = t_end - profile.t
    if span <= 0:
        raise ValueError("t_end must exceed the profile time")
    nsteps = max(1, math.ceil(span / dt))
    dt = span / nsteps
    bounds = np.unique(np.linspace(0, nsteps, n_records + 1).round().astype(int))
    cur = profile
    times = [cur.t]
    energy = [profile_energy(cur)]
    rstar = [interface_radius(cur)]
    q0 = [float(cur.q_norm_sq()[0])]
    snaps = [cur.copy()] if keep_snapshots else []
    for a, b in zip(bounds[:-1], bounds[1:]):
        cur = _STEP[cur.model](cur, dt, int(b - a))
        cur.t = profile.t + b * dt
        times.append(cur.t)
        energy.append(profile_energy(cur))
        rstar.append(interface_radius(cur))
        q0.append(float(cur.q_norm_sq()[0]))
        if keep_snapshots:
            snaps.append(cur.copy())
    return RadialTrajectory(np.array(times), np.array(energy), np.array(rstar), np.array(q0), cur, snaps)


# ----------------------------------------------------------------------------
# energies (node volumes: r^k dr inside, dr^{k+1}/(k+1)/2^{k+1} at the origin,
# half a cell at r = 1)


def _node_volumes(r: np.ndarray, power: int) -> np.ndarray:
    dr = r[1] - r[0]
    vol = r**power * dr
    vol[0] = (0.5 * dr) ** (power + 1) / (power + 1)
    vol[-1] *= 0.5
    return vol


def profile_energy(profile: RadialProfile, p: Parameters | None = None) -> float:
    p = p or profile.params
    r = profile.r
    dr = profile.dr
    rf = r[:-1] + 0.5 * dr
    hp = p.h_plus
    if profile.model == "hedgehog":
        h = profile.h
        sl = math.sqrt(p.L_bar)
        vol = _node_volumes(r, 2)
        geo = np.zeros_like(r)
        geo[1:] = 2.0 * h[1:] ** 2 / r[1:] ** 2
        grad = np.sum(rf**2 * (np.diff(h) / dr) ** 2 / 3.0) * dr
        return float(sl * grad + np.sum(vol * (sl * geo + h**2 * (h - hp) ** 2 / sl)))
    if profile.model == "uv":
        u, v = profile.u, profile.v
        A, B, C, L = p.A, p.B, p.C, p.L
        vol = _node_volumes(r, 1)
        grad = np.sum(rf * (0.25 * (np.diff(u) / dr) ** 2 + (np.diff(v) / dr) ** 2 / 3.0)) * dr
        geo = np.zeros_like(r)
        geo[1:] = u[1:] ** 2 / r[1:] ** 2
        bulk = (
            B * B / (54.0 * C * L) * (0.5 * u**2 + 2.0 * v**2 / 3.0)
            + C / L * (u**4 / 16.0 + u**2 * v**2 / 6.0 + v**4 / 9.0)
            - B / (3.0 * L) * v * (2.0 * v**2 / 9.0 - 0.5 * u**2)
        )
        return float(grad + np.sum(vol * (geo + bulk)))
    s = profile.s
    vol = _node_volumes(r, 1)
    grad = np.sum(rf * (np.diff(s) / dr) ** 2) * dr
    geo = np.zeros_like(r)
    geo[1:] = 4.0 * s[1:] ** 2 / r[1:] ** 2
    bulk = (p.A * s**2 + p.C * s**4) / p.L
    return float(grad + np.sum(vol * (geo + bulk)))


# ----------------------------------------------------------------------------
# static (u, v) critical points


def uv_static_residual(r: np.ndarray, u: np.ndarray, v: np.ndarray, p: Parameters) -> float:
    """Infinity norm of the discrete static (u, v) equations at the free nodes."""
    prof = RadialProfile("uv", np.asarray(r, float), np.stack([u, v]), p)
    res = rhs(prof)
    return float(max(np.max(np.abs(res[0, 1:-1])), np.max(np.abs(res[1, :-1]))))


def _uv_jacobian(y: np.ndarray, M: int, p: Parameters) -> sparse.csr_matrix:
    """Jacobian of the free-node residual; unknowns u_1..u_{M-1}, v_0..v_{M-1}."""
    A, B, C, L = p.A, p.B, p.C, p.L
    dr = 1.0 / M
    u, v = y
    nu, nv = M - 1, M
    rows, cols, vals = [], [], []

    def add(i, j, x):
        rows.append(i)
        cols.append(j)
        vals.append(x)

    # u block: row index i-1 for node i
    for i in range(1, M):
        ri = i * dr
        wp, wm = i + 0.5, i - 0.5
        ui, vi = u[i], v[i]
        d = -(wp + wm) / (i * dr * dr) - 4.0 / (ri * ri) - (A + 2 * B * vi / 3 + C * (1.5 * ui * ui + 2 * vi * vi / 3)) / L
        add(i - 1, i - 1, d)
        if i > 1:
            add(i - 1, i - 2, wm / (i * dr * dr))
        if i < M - 1:
            add(i - 1, i, wp / (i * dr * dr))
        add(i - 1, nu + i, -ui / L * (2 * B / 3 + 4 * C * vi / 3))
    # v block: row nu + i for node i
    v0 = v[0]
    add(nu, nu, -4.0 / (dr * dr) - (A - 2 * B * v0 / 3 + 2 * C * v0 * v0) / L)
    add(nu, nu + 1, 4.0 / (dr * dr))
    for i in range(1, M):
        wp, wm = i + 0.5, i - 0.5
        ui, vi = u[i], v[i]
        d = -(wp + wm) / (i * dr * dr) - (A - 2 * B * vi / 3 + C * (0.5 * ui * ui + 2 * vi * vi)) / L
        add(nu + i, nu + i, d)
        add(nu + i, nu + i - 1, wm / (i * dr * dr))
        if i < M - 1:
            add(nu + i, nu + i + 1, wp / (i * dr * dr))
        add(nu + i, i - 1, -(vi * C * ui) / L - B * ui / (2 * L))
    return sparse.csr_matrix((vals, (rows, cols)), shape=(nu + nv, nu + nv))


def solve_uv_static(
    p: Parameters,
    M: int = 2000,
    tol: float = 1e-8,
    relax_time: float | None = None,
    max_newton: int = 60,
) -> RadialProfile:
    """Static (u, v) critical point: gradient-flow relaxation, then Newton.

    The relaxation lets the profile settle into the energy well of the
    minimiser from a core-like start; Newton only polishes the residual.
    """
    r = mesh(M)
    hp = p.h_plus
    core = 5.0 * math.sqrt(p.L / p.A)
    prof0 = 1.0 - np.exp(-((r / core) ** 2))
    prof = new_profile("uv", r, np.stack([hp * prof0, -0.5 * hp * prof0]), p)
    if relax_time is None:
        relax_time = min(20.0 * p.L / p.A, 1e-3)
    dt = stable_dt("uv", M, p)
    n = max(1, math.ceil(relax_time / dt))
    prof = step_uv(prof, relax_time / n, n)

    y = prof.values.copy()
    pars = _pars(p)
    out = np.zeros_like(y)

    def residual(yy):
        _rhs_uv(yy, M, pars, out)
        return np.concatenate([out[0, 1:M], out[1, :M]])

    res = residual(y)
    rn = float(np.max(np.abs(res)))
    for _ in range(max_newton):
        if rn < tol:
            break
        jac = _uv_jacobian(y, M, p)
        delta = spsolve(jac.tocsc(), -res)
        lam = 1.0
        while True:
            trial = y.copy()
            trial[0, 1:M] += lam * delta[: M - 1]
            trial[1, :M] += lam * delta[M - 1 :]
            tres = residual(trial)
            tn = float(np.max(np.abs(tres)))
            if tn < rn or lam < 1e-4:
                break
            lam *= 0.5
        y, res, rn = trial, tres, tn
    if not rn < tol:
        raise ConvergenceError(f"static (u, v) solve did not converge (residual {rn:.3e})", rn)
    result = RadialProfile("uv", r, y, p, t=0.0, meta={"residual": rn})
    return result


def uv_lemma_checks(profile: RadialProfile, atol: float = 1e-10) -> dict:
    """Bound and monotonicity properties of a static (u, v) solution."""
    p = profile.params
    hp = p.h_plus
    u, v = profile.u, profile.v
    return {
        "u_bounds": bool(np.all(u >= -atol) and np.all(u <= hp + atol)),
        "v_bounds": bool(np.all(v >= -0.5 * hp - atol) and np.all(v <= atol)),
        "u_nondecreasing": bool(np.all(np.diff(u) >= -atol)),
        "v_nonincreasing": bool(np.all(np.diff(v) <= atol)),
        "u_origin": bool(u[0] == 0.0),
        "u_boundary": bool(abs(u[-1] - hp) <= 1e-15),
        "v_boundary": bool(abs(v[-1] + 0.5 * hp) <= 1e-15),
    }
