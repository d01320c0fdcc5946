import math

import numpy as np
import pytest
from scipy import integrate

from qflow import ldg_model as lm
from qflow import qtensor as qt
from qflow import initial, radial

P = lm.Parameters.transition(0.01)
SP = P.h_plus


def test_parameters_validation_and_presets():
    assert P.A == pytest.approx(6400**2 / (27 * 3500), rel=1e-12)
    assert P.is_transition
    assert SP == pytest.approx(0.609524, abs=1e-6)
    assert P.L_bar == pytest.approx(9 * 0.01 / 3500)
    assert lm.preset("transition-L0.05").L == 0.05
    for bad in ("B", "C", "L", "gamma"):
        with pytest.raises(ValueError):
            lm.Parameters(**{"A": 1.0, "B": 1.0, "C": 1.0, "L": 1.0, bad: 0.0})
    with pytest.raises(ValueError):
        lm.preset("nope")


def test_physical_time_conversion():
    assert P.physical_time(1.0, 1e-11) == pytest.approx(1e-10 / (20 * 1e-11))


def test_bulk_potential_examples():
    assert lm.bulk_potential(qt.QTensor(), P) == 0.0
    assert lm.bulk_potential(qt.uniaxial(SP, (0, 0, 1)), P) == pytest.approx(0.0, abs=1e-10)
    assert lm.bulk_potential(qt.uniaxial(SP / 2, (0, 0, 1)), P) > 0


def test_bulk_potential_closed_form_for_uniaxial():
    # f_B(s(nn - I/3)) = A s^2/3 - 2 B s^3/27 + C s^4/9
    for s in np.linspace(-0.5, 0.8, 7):
        ref = P.A * s**2 / 3 - 2 * P.B * s**3 / 27 + P.C * s**4 / 9
        assert lm.bulk_potential(qt.uniaxial(s, (0, 1, 0)), P) == pytest.approx(ref, rel=1e-12, abs=1e-12)


def test_reaction_zeros():
    assert lm.reaction(qt.QTensor(), P) == qt.QTensor()
    n = np.array([1.0, 2.0, -2.0]) / 3.0
    r = lm.reaction(qt.uniaxial(SP, n), P)
    assert np.max(np.abs(r.as_array())) < 1e-10


def test_reaction_is_minus_frobenius_gradient():
    q = qt.uniaxial(SP / 2, (1, 0, 0)).as_array()
    r = lm.reaction_field(q, P)
    for k in range(5):
        e = np.zeros(5)
        e[k] = 1.0
        h = 1e-6
        fd = (lm.bulk_potential_field(q + h * e, P) - lm.bulk_potential_field(q - h * e, P)) / (2 * h)
        assert fd == pytest.approx(-qt.dot(r, e), abs=1e-6)


def test_reaction_matches_matrix_formula():
    rng = np.random.default_rng(11)
    c = rng.normal(size=(5, 20)) * 0.3
    m = qt.to_matrix(c)
    t2 = np.einsum("nij,nij->n", m, m)
    m2 = m @ m
    ref = -(P.A * m + P.C * t2[:, None, None] * m - P.B * (m2 - t2[:, None, None] * np.eye(3) / 3))
    assert np.allclose(lm.reaction_field(c, P), qt.from_matrix(ref), atol=1e-12 * np.max(np.abs(ref)))


def test_bulk_hessian_zero_mode_at_minimum():
    q = qt.uniaxial(SP, (0, 0, 1)).matrix()
    w = np.linalg.eigvalsh(lm.bulk_hessian(q, P))
    # two rotational zero modes, three stiff modes
    assert np.sum(np.abs(w) < 1e-8 * np.max(np.abs(w))) == 2
    assert np.all(w > -1e-8)


def test_reaction_lipschitz_bounds_hessian():
    K = lm.reaction_lipschitz(P)
    rng = np.random.default_rng(2)
    for _ in range(20):
        c = rng.normal(size=5)
        c *= rng.uniform(0, P.bound_q) / math.sqrt(qt.norm_sq(c))
        w = np.linalg.eigvalsh(lm.bulk_hessian(qt.to_matrix(c), P))
        assert np.max(np.abs(w)) <= K * (1 + 1e-9)


def _hedgehog_energy_quad(p, r0):
    hp, sl = p.h_plus, math.sqrt(p.L_bar)
    w = math.sqrt(p.L)

    def h(r):
        return 0.5 * hp * (1 + math.tanh((r - r0) / w))

    def dh(r):
        return 0.5 * hp / w / math.cosh((r - r0) / w) ** 2

    def f(r):
        hv = h(r)
        return r * r * (sl * (dh(r) ** 2 / 3 + 2 * hv * hv / (r * r))) + r * r * hv * hv * (hv - hp) ** 2 / sl

    val, _ = integrate.quad(f, 1e-12, 1.0, points=[r0], limit=400, epsabs=1e-13)
    return val


def test_hedgehog_profile_energy_against_quadrature():
    prof = initial.generate(initial.InitialConditionSpec("CASE_I", r0=0.5), 1000, P)
    # the generated profile pins h(0) = 0 and h(1) = h_+; the tanh values there are
    # within 1e-4 h_+ of those so the comparison is unaffected at 0.1 %
    e = lm.discrete_energy(prof)
    assert e == pytest.approx(_hedgehog_energy_quad(P, 0.5), rel=1e-3)


def test_energy_of_zero_profile():
    prof = radial.RadialProfile("hedgehog", radial.mesh(100), np.zeros((1, 101)), P)
    assert lm.discrete_energy(prof) == 0.0


def test_grid_energy_of_uniform_minimiser():
    from qflow import grid

    geom = grid.classify(16, 3)
    data = np.broadcast_to(qt.uniaxial(SP, (0, 0, 1)).as_array()[:, None, None, None], (5, 16, 16, 16))
    fs = grid.FieldState.create(geom, data, P)
    assert abs(fs.energy()) < 1e-9


@pytest.fixture(scope="module")
def static_uv():
    return {lg: radial.solve_uv_static(P.with_L(10.0**lg)) for lg in (-2.0, -1.0)}


def test_second_variation_zero_and_quadratic(static_uv):
    prof = static_uv[-2.0]
    p = prof.params
    assert lm.second_variation(prof.r, prof.u, prof.v, p, amplitude=np.zeros_like(prof.r), amplitude_dr=np.zeros_like(prof.r)) == 0.0
    base = lm.second_variation(prof.r, prof.u, prof.v, p)
    f = lm.escape_perturbation(prof.r)
    fp = lm.escape_perturbation_dr(prof.r)
    scaled = lm.second_variation(prof.r, prof.u, prof.v, p, amplitude=3 * f, amplitude_dr=3 * fp)
    assert scaled == pytest.approx(9 * base, rel=1e-12)


def test_second_variation_sign(static_uv):
    lo, hi = static_uv[-2.0], static_uv[-1.0]
    assert lm.second_variation(lo.r, lo.u, lo.v, lo.params) < 0
    assert lm.second_variation(hi.r, hi.u, hi.v, hi.params) > 0


def test_second_variation_rejects_unconverged_input(static_uv):
    prof = static_uv[-2.0]
    u = prof.u.copy()
    u[len(u) // 2] *= 1.01
    with pytest.raises(lm.StaleInputError):
        lm.second_variation(prof.r, u, prof.v, prof.params)


def test_escape_derivative_is_analytic():
    r = np.linspace(0, 1, 2001)
    num = np.gradient(lm.escape_perturbation(r), r, edge_order=2)
    assert np.allclose(lm.escape_perturbation_dr(r), num, atol=1e-3)
