import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from llab import atom_model as am
from llab import fgr
from llab.thermal_field import planck_weight


def flat(w):
    return np.ones_like(np.asarray(w, dtype=float))


def ionization_model(levels=((-1.0, 1),), n_points=60, rows=None):
    """Bound levels coupled to every pseudo-continuum node with unit density."""
    spec = am.AtomSpec(levels, am.ContinuumSpec.build(0.1, 4.0, n_points))
    labels = am.mode_labels(spec)
    nd = spec.n_discrete
    win = am.WindowSpec(frozenset(labels[:nd]), 0.5, 3.0, 0.3)
    G = np.zeros((spec.dimension, spec.dimension), dtype=complex)
    amp = np.sqrt(spec.continuum.weights)
    for m in range(nd):
        G[m, nd:] = amp * (1.0 if rows is None else rows[m])
    G = G + G.conj().T
    return spec, fgr.FgrModel(labels, [G], [flat], win)


def test_rate_matches_dense_trapezoid_oracle():
    spec, m = ionization_model()
    beta, eps = 1.0, 0.2
    params = fgr.FgrParams(eps)
    gamma = fgr.fgr_matrix(m, -1.0, beta, params).gamma
    n = 10 * fgr.default_node_count(beta, params) * fgr.PANEL_ORDER
    om = np.linspace(1.0, 1.0 + 40.0 / beta, n)
    e, w = np.array(spec.continuum.nodes), np.array(spec.continuum.weights)
    inner = (w[None, :] * eps / ((e[None, :] + 1.0 - om[:, None]) ** 2 + eps ** 2)).sum(axis=1)
    integrand = 4 * np.pi * om ** 2 / np.expm1(beta * om) * inner
    oracle = np.sum(0.5 * (integrand[1:] + integrand[:-1]) * np.diff(om))
    assert abs(gamma / oracle - 1) < 0.01


@given(st.floats(-3, 3), st.floats(0.01, 1.0), st.integers(0, 2 ** 31))
def test_transition_kernel_is_psd(omega, eps, seed):
    r = np.random.default_rng(seed)
    F = r.normal(size=(5, 5)) + 1j * r.normal(size=(5, 5))
    T = fgr.transition_kernel(omega, -1.0, F, r.normal(size=5), r.uniform(0, 1, 5), eps)
    assert np.linalg.eigvalsh(T)[0] >= -1e-12


def test_transition_kernel_peak_is_one_over_eps():
    F = np.array([[0.0, 0.5], [0.5, 0.0]])
    H = np.array([-1.0, 0.5])
    for eps in (0.1, 0.01):
        T = fgr.transition_kernel(1.5, -1.0, F, H, [0.0, 1.0], eps, angular_factor=1.0)
        assert np.isclose(T[0, 0], 0.25 / eps)


def test_rate_scales_quadratically_with_coupling():
    _, m = ionization_model(((-1.0, 2),), rows=[1.0, 0.3])
    p = fgr.FgrParams(0.2)
    base = fgr.fgr_matrix(m, -1.0, 1.0, p).matrix
    scaled = fgr.fgr_matrix(m.scaled(3.0), -1.0, 1.0, p).matrix
    np.testing.assert_allclose(scaled, 9.0 * base, rtol=1e-12, atol=0)


def test_gamma_invariant_under_rotation_in_degenerate_eigenspace(rng):
    spec, m = ionization_model(((-1.0, 2),), rows=[1.0, (0.3 + 0.2j) * np.linspace(-1, 1, 60)])
    p = fgr.FgrParams(0.2)
    gamma = fgr.fgr_matrix(m, -1.0, 1.0, p).gamma
    assert gamma > 1.0
    Q, _ = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
    U = np.eye(spec.dimension, dtype=complex)
    U[:2, :2] = Q
    rotated = fgr.FgrModel(m.labels, [U @ m.couplings[0] @ U.conj().T], m.form_factors, m.window)
    assert abs(fgr.fgr_matrix(rotated, -1.0, 1.0, p).gamma - gamma) <= 1e-10 * gamma


def test_rate_is_smallest_eigenvalue_not_trace():
    _, m = ionization_model(((-1.0, 2),), rows=[1.0, 0.5])
    res = fgr.fgr_matrix(m, -1.0, 1.0, fgr.FgrParams(0.2))
    vals = np.linalg.eigvalsh(res.matrix)
    assert np.isclose(res.gamma, max(vals[0], 0.0))


def test_dark_state_has_zero_rate():
    _, m = ionization_model(((-1.0, 2),), rows=[1.0, 1.0])
    res = fgr.fgr_matrix(m, -1.0, 1.0, fgr.FgrParams(0.2))
    assert res.gamma == 0.0
    assert np.linalg.eigvalsh(res.matrix)[1] > 0


def test_lorentzian_normalization_approaches_pi():
    eps = 0.5
    errs = []
    for half in (25.0, 100.0):
        c = am.ContinuumSpec.build(0.1, 0.1 + 2 * half, int(20 * half))
        x, w = np.array(c.nodes), np.array(c.weights)
        errs.append(abs(w @ fgr.lorentzian(x - (0.1 + half), eps) - np.pi))
    assert errs[1] < errs[0]
    assert errs[1] < 0.01 * np.pi


def test_high_temperature_rate_follows_classical_occupation():
    spec, m = ionization_model()
    eps = 0.2
    e, cw = np.array(spec.continuum.nodes), np.array(spec.continuum.weights)
    x, w = np.polynomial.legendre.leggauss(800)
    om, ww = 6.0 + 5.0 * x, 5.0 * w
    inner = (cw[None, :] * fgr.lorentzian(e[None, :] + 1.0 - om[:, None], eps)).sum(axis=1)
    defects = []
    for beta in (0.2, 0.1, 0.05):
        gamma = fgr.fgr_matrix(m, -1.0, beta, fgr.FgrParams(eps, omega_span=10.0)).gamma
        classical = 4 * np.pi * np.sum(ww * om ** 2 / (beta * om) * inner)
        defects.append(1.0 - gamma / classical)
    # the correction to 1/(beta omega) is first order in beta
    assert 1.8 < defects[0] / defects[1] < 2.2 and 1.8 < defects[1] / defects[2] < 2.2
    assert defects[2] < 0.1


def test_ionization_time_scaling():
    t = fgr.ionization_time_estimate(2.0, 0.01)
    assert np.isclose(fgr.ionization_time_estimate(2.0, 0.02), t / 4)
    assert np.isclose(fgr.ionization_time_estimate(4.0, 0.01), t / 2)
    assert fgr.ionization_time_estimate(0.0, 0.01) == np.inf
    with pytest.raises(fgr.FgrError):
        fgr.ionization_time_estimate(1.0, 0.0)


def test_default_eps_is_geometric_mean():
    c = am.ContinuumSpec.build(0.1, 4.0, 8)
    w = am.WindowSpec(frozenset(), 0.5, 3.0, 0.3)
    assert np.isclose(fgr.default_eps(c, w), np.sqrt(3.9 / 8 * 2.5))
    with pytest.raises(fgr.FgrError):
        fgr.default_eps(am.ContinuumSpec(1.0, 2.0, 0), w)


def test_unconverged_quadrature_raises_with_diagnostics():
    _, m = ionization_model()
    with pytest.raises(fgr.FgrAccuracyError) as info:
        fgr.fgr_matrix(m, -1.0, 1.0, fgr.FgrParams(0.01, n_nodes=1))
    assert info.value.diagnostics["n_nodes"] == 1


@pytest.mark.parametrize("bad", [dict(eps=0.0), dict(eps=0.1, scheme="simpson")])
def test_invalid_params_rejected(bad):
    with pytest.raises(fgr.FgrError):
        fgr.FgrParams(**bad)


def test_positive_energy_rejected():
    with pytest.raises(fgr.FgrError):
        fgr.omega_nodes(0.5, 1.0, fgr.FgrParams(0.1), 4)


def test_bridge_with_zero_couplings_compares_zeros():
    pi = np.array([True, False, False])
    rec = fgr.oracle_fgr_bound(sp.csr_matrix((3, 3)), pi, np.ones(3), 0.0, 0.1)
    assert rec.matrix_value == 0.0 and rec.quadrature_value == 0.0
    assert rec.passed


def test_rate_report_serializations():
    _, m = ionization_model(((-2.0, 1), (-1.0, 1)), rows=[1.0, 0.5])
    rep = fgr.gamma_overall(m, 1.0, fgr.FgrParams(0.2), lam=0.01)
    assert rep.gamma == min(e.gamma_E for e in rep.entries) > 0
    assert rep.to_csv().splitlines()[0] == "E,gamma_E,rank,t_E"
    assert '"fgr_condition_holds": true' in rep.to_json()


def test_temperature_sweep_csv_header():
    _, m = ionization_model()
    s = fgr.temperature_sweep(m, [1.0, 2.0, 3.0, 4.0], -1.0, fgr.FgrParams(0.2))
    assert s.plot_csv().splitlines()[0] == "beta,log_gamma_E"
    assert s.k * np.exp(-1.0) >= s.gammas[0]


def test_planck_factor_used_by_rates_is_the_field_one():
    assert fgr.planck_weight is planck_weight
