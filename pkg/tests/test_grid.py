import math

import numpy as np
import pytest

from qflow import grid, initial
from qflow import ldg_model as lm
from qflow import qtensor as qt

P = lm.Parameters.transition(0.01)


def test_classify_examples():
    g = grid.classify(16, 3)
    for idx in [(0, 0, 0), (0, 0, 15), (15, 15, 15)]:
        assert g.cls[idx] == grid.EXTERIOR
    assert grid.classify(256, 3).cls[(128, 128, 128)] == grid.INTERIOR


def test_band_count_matches_brute_force():
    g = grid.classify(128, 3)
    h = 2.0 / 128
    count = 0
    for i in range(128):
        x = -1 + i * h
        for j in range(128):
            y = -1 + j * h
            z = -1 + h * np.arange(128)
            r = np.sqrt(x * x + y * y + z * z)
            count += int(np.sum(np.abs(r - 1) < h / 2))
    assert g.counts()["band"] == count


def test_classification_partitions_and_is_stable():
    a = grid.classify(64, 2)
    b = grid.classify(64, 2)
    assert np.array_equal(a.cls, b.cls)
    assert sum(a.counts().values()) == 64 * 64


@pytest.mark.parametrize("N,dim", [(15, 3), (14, 2), (32, 4)])
def test_classify_rejects_bad_requests(N, dim):
    with pytest.raises(initial.ConfigError):
        grid.classify(N, dim)


@pytest.mark.parametrize("dim", [2, 3])
def test_interior_stencil_never_reaches_exterior(dim):
    g = grid.classify(48, dim)
    inner = g.interior
    for ax in range(dim):
        for s in (1, -1):
            assert not np.any(inner & (np.roll(g.cls, s, axis=ax) == grid.EXTERIOR))


def test_laplacian_of_constant_and_quadratic():
    g = grid.classify(32, 3)
    fs = grid.FieldState.create(g, np.ones((5, 32, 32, 32)), P)
    assert np.max(np.abs(grid.laplacian(fs))) == 0.0
    x = g.coords()[0]
    data = np.zeros((5,) + x.shape)
    data[0] = x * x
    lap = grid.periodic_laplacian(data, g.h)
    inner = (np.abs(x) < 0.9)
    assert np.allclose(lap[0][inner], 2.0, atol=1e-9)


@pytest.mark.parametrize("order,expected", [(2, 2.0), (4, 4.0)])
def test_laplacian_convergence_order(order, expected):
    errs, hs = [], []
    for N in (32, 64, 128):
        g = grid.classify(N, 2)
        x, y = g.coords()
        data = np.zeros((5,) + x.shape)
        data[0] = np.sin(np.pi * x) * np.cos(np.pi * y)
        lap = grid.periodic_laplacian(data, g.h, order)
        errs.append(np.max(np.abs(lap[0] + 2 * np.pi**2 * data[0])))
        hs.append(g.h)
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert abs(slope - expected) <= 0.1


def test_laplacian_zero_on_band():
    g = grid.classify(32, 2)
    rng = np.random.default_rng(0)
    fs = grid.FieldState.create(g, rng.normal(size=(5, 32, 32)), P)
    assert np.all(grid.laplacian(fs)[:, g.band] == 0.0)


def _rhs_straight(q, p):
    q11, q22, q12, q13, q23 = q
    A, B, C = p.A, p.B, p.C
    nrm = q11**2 + q22**2 + q12**2 + q11 * q22 + q13**2 + q23**2
    return np.array([
        -A * q11 - 2 * C * nrm * q11 + B / 3 * (q11**2 + q12**2 + q13**2 - 2 * q22**2 - 2 * q11 * q22 - 2 * q23**2),
        -A * q22 - 2 * C * nrm * q22 + B / 3 * (q12**2 + q22**2 + q23**2 - 2 * q11**2 - 2 * q11 * q22 - 2 * q13**2),
        -A * q12 - 2 * C * nrm * q12 + B * (q11 * q12 + q12 * q22 + q13 * q23),
        -A * q13 - 2 * C * nrm * q13 + B * (q12 * q23 - q22 * q13),
        -A * q23 - 2 * C * nrm * q23 + B * (q12 * q13 - q23 * q11),
    ]) / p.L


def test_rhs_classes_and_independent_formula():
    g = grid.classify(32, 3)
    rng = np.random.default_rng(5)
    data = rng.normal(size=(5, 32, 32, 32)) * 0.1
    fs = grid.FieldState.create(g, data, P)
    out = grid.rhs(fs)
    lap = grid.laplacian(fs)
    assert np.all(out[:, g.band] == 0.0)
    assert np.array_equal(out[:, g.exterior], lap[:, g.exterior])
    pts = np.argwhere(g.interior)
    for idx in pts[rng.choice(len(pts), 20, replace=False)]:
        sl = (slice(None),) + tuple(idx)
        ref = lap[sl] + _rhs_straight(fs.data[sl], P)
        assert np.allclose(out[sl], ref, rtol=1e-12, atol=1e-12 * np.max(np.abs(ref)))


def test_rhs_of_uniform_minimiser_and_zero():
    g = grid.classify(16, 3)
    u = qt.uniaxial(P.h_plus, (0, 0.6, 0.8)).as_array()
    fs = grid.FieldState.create(g, np.broadcast_to(u[:, None, None, None], (5, 16, 16, 16)), P)
    assert np.max(np.abs(grid.rhs(fs)[:, g.interior])) < 1e-9
    zero = grid.FieldState.create(g, np.zeros((5, 16, 16, 16)), P)
    assert np.max(np.abs(grid.rhs(zero))) == 0.0


@pytest.mark.parametrize("dim,order", [(2, 2), (3, 2), (2, 4), (3, 4)])
def test_fused_step_matches_reference_rk4(dim, order):
    N = 32 if dim == 2 else 16
    g = grid.classify(N, dim)
    fam = "CASE_I" if dim == 3 else "UV_TANH"
    fs = initial.generate(initial.InitialConditionSpec(fam), g, P)
    dt = 0.5 * grid.stable_dt(g, P, order)

    def f(d):
        return grid.rhs(grid.FieldState(g, d, P, 0.0, fs.band_values), order)

    y = fs.data
    k1 = f(y)
    k2 = f(y + dt / 2 * k1)
    k3 = f(y + dt / 2 * k2)
    k4 = f(y + dt * k3)
    ref = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    out = grid.rk4_step(fs, dt, order)
    assert np.allclose(out.data, ref, rtol=0, atol=1e-13 * np.max(np.abs(ref)))
    assert out.band_exact()
    assert out.t == pytest.approx(dt)


def test_fixed_point_is_unchanged():
    g = grid.classify(16, 3)
    u = qt.uniaxial(P.h_plus, (1, 0, 0)).as_array()
    fs = grid.FieldState.create(g, np.broadcast_to(u[:, None, None, None], (5, 16, 16, 16)), P)
    out = grid.rk4_step(fs, grid.stable_dt(g, P))
    assert np.max(np.abs(out.data - fs.data)) < 1e-12


def test_heat_equation_temporal_order():
    N = 16
    g = grid.GridGeometry(2, N, "disc", np.full((N, N), grid.EXTERIOR, dtype=np.int8))
    x = g.coords()[0]
    k = np.pi
    lam = 4.0 / g.h**2 * math.sin(k * g.h / 2) ** 2  # semi-discrete decay rate
    T = 0.5
    errs, dts = [], []
    for n in (100, 200, 400):
        data = np.zeros((5, N, N))
        data[0] = np.sin(k * x)
        fs = grid.Stepper(g, P).advance(grid.FieldState.create(g, data, P), T / n, n)
        errs.append(np.max(np.abs(fs.data[0] - math.exp(-lam * T) * np.sin(k * x))))
        dts.append(T / n)
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert abs(slope - 4.0) <= 0.2


def test_one_step_from_case_i_lowers_energy():
    g = grid.classify(32, 3)
    fs = initial.generate(initial.InitialConditionSpec("CASE_I"), g, P)
    out = grid.rk4_step(fs, grid.stable_dt(g, P))
    assert out.energy() < fs.energy()


def test_divergence_names_first_bad_index():
    g = grid.classify(16, 2)
    data = np.zeros((5, 16, 16))
    data[2, 8, 3] = np.nan
    fs = grid.FieldState.create(g, data, P)
    with pytest.raises(grid.DivergenceError) as err:
        grid.rk4_step(fs, 1e-6)
    assert err.value.index[0] == 0
    assert err.value.last_good is fs


def test_dt_rules():
    g = grid.classify(64, 3)
    assert grid.stable_dt(g, P) > grid.conservative_dt(g, P)
    assert grid.stable_dt(g, P, order=4) < grid.stable_dt(g, P)


def test_integrate_records_ticks_and_keeps_band():
    g = grid.classify(32, 2)
    fs = initial.generate(initial.InitialConditionSpec("UV_TANH"), g, P)
    seen = []
    traj = grid.integrate(fs, 2e-4, n_snapshots=4, on_snapshot=lambda s: seen.append(s.band_exact()))
    assert len(traj.rows) == 5 and len(traj.snapshots) == 5 and all(seen)
    assert traj.rows[-1]["t"] == pytest.approx(2e-4)
    assert traj.rows[-1]["planarity_residual"] == 0.0
    e = [r["energy"] for r in traj.rows]
    assert all(b <= a for a, b in zip(e, e[1:]))


def test_max_norm_respects_bound_after_transient():
    g = grid.classify(32, 3)
    fs = initial.generate(initial.InitialConditionSpec("CASE_I"), g, P)
    traj = grid.integrate(fs, 50 * grid.stable_dt(g, P), n_snapshots=5, keep_snapshots=False)
    assert max(r["max_abs_q"] for r in traj.rows[1:]) <= P.bound_q * 1.01
