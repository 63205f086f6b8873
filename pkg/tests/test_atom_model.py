import numpy as np
import pytest
from hypothesis import given, strategies as st

from llab import atom_model as am


def two_level_spec(n_points=4, scheme="uniform"):
    return am.AtomSpec(((-0.5, 1),), am.ContinuumSpec.build(0.1, 2.0, n_points, scheme))


def test_uniform_continuum_hamiltonian_is_diagonal_with_grid_energies():
    H = am.build_hamiltonian(two_level_spec())
    expected = [-0.5] + [0.1 + k * 1.9 / 3 for k in range(4)]
    np.testing.assert_allclose(H, np.diag(expected), atol=1e-15)


def test_gauss_legendre_weights_integrate_polynomials():
    c = am.ContinuumSpec.build(0.5, 3.0, 6)
    x, w = np.array(c.nodes), np.array(c.weights)
    assert np.isclose(w @ x ** 5, (3.0 ** 6 - 0.5 ** 6) / 6, rtol=1e-13)


def test_degenerate_level_gives_projection_of_that_rank():
    spec = am.AtomSpec(((-3.0, 2), (-1.0, 1)), am.ContinuumSpec.build(0.1, 2.0, 3))
    H = am.build_hamiltonian(spec)
    P = am.spectral_projection(H, -3.0)
    assert np.linalg.matrix_rank(P) == 2
    np.testing.assert_allclose(P @ P, P)


def test_projection_at_non_eigenvalue_raises():
    H = am.build_hamiltonian(two_level_spec())
    with pytest.raises(am.EmptyProjectionError):
        am.spectral_projection(H, -0.7)


def test_spectral_projections_resolve_identity():
    spec = am.AtomSpec(((-3.0, 2), (-1.0, 1)), am.ContinuumSpec.build(0.1, 2.0, 3))
    H = am.build_hamiltonian(spec)
    levels = am.cluster_eigenvalues(np.diag(H).real)
    total = sum(am.spectral_projection(H, E) for E in levels)
    np.testing.assert_allclose(total, np.eye(H.shape[0]))


@pytest.mark.parametrize("levels", [((0.0, 1),), ((-1.0, 1), (-2.0, 1)), ((-1.0, 0),)])
def test_invalid_discrete_levels_rejected(levels):
    with pytest.raises(am.AtomSpecError):
        am.AtomSpec(levels)


def test_window_margin_reaching_zero_rejected():
    with pytest.raises(am.AtomSpecError, match="zero energy"):
        am.WindowSpec(frozenset(), 0.3, 2.0, 0.3)


def test_mollifier_is_one_on_window_zero_outside_support():
    w = am.WindowSpec(frozenset(), 0.5, 2.0, 0.2)
    e = np.array([0.1, 0.3, 0.5, 1.0, 2.0, 2.2, 3.0])
    mu = am.mollifier_values(e, w)
    np.testing.assert_array_equal(mu[[2, 3, 4]], 1.0)
    np.testing.assert_array_equal(mu[[0, 1, 5, 6]], 0.0)


@given(st.floats(0.31, 0.49))
def test_mollifier_rises_monotonically_on_left_margin(x):
    w = am.WindowSpec(frozenset(), 0.5, 2.0, 0.2)
    lo, hi = am.mollifier_values(np.array([x, x + 0.005]), w)
    assert 0 < lo <= hi <= 1


def test_mollifier_vanishes_on_bound_states():
    spec = two_level_spec()
    w = am.WindowSpec(frozenset(), 0.5, 1.5, 0.2)
    mu = am.mollified_indicator(am.build_hamiltonian(spec), w)
    assert mu[0, 0] == 0


def test_regularize_matches_explicit_triple_product(rng):
    spec = two_level_spec(6)
    labels = am.mode_labels(spec)
    H = am.build_hamiltonian(spec)
    w = am.WindowSpec(frozenset({labels[0]}), 0.5, 1.5, 0.2)
    X = rng.normal(size=(7, 7)) + 1j * rng.normal(size=(7, 7))
    G = X + X.conj().T
    cut = np.diag(am.mode_projection(labels, [labels[0]])) + am.mollified_indicator(H, w)
    np.testing.assert_allclose(am.regularize_coupling(G, H, w), cut @ G @ cut, atol=1e-14)


def test_regularize_rejects_non_hermitian():
    spec = two_level_spec()
    H = am.build_hamiltonian(spec)
    w = am.WindowSpec(frozenset(), 0.5, 1.5, 0.2)
    with pytest.raises(am.AtomSpecError):
        am.regularize_coupling(np.triu(np.ones((5, 5))), H, w)


@given(st.integers(0, 2 ** 31))
def test_cp_conjugate_is_an_antilinear_involution(seed):
    r = np.random.default_rng(seed)
    X = r.normal(size=(4, 4)) + 1j * r.normal(size=(4, 4))
    np.testing.assert_array_equal(am.cp_conjugate(am.cp_conjugate(X)), X)
    np.testing.assert_allclose(am.cp_conjugate(1j * X), -1j * am.cp_conjugate(X))


def test_cp_conjugate_commutes_with_real_diagonal_hamiltonian():
    H = am.build_hamiltonian(two_level_spec())
    np.testing.assert_array_equal(am.cp_conjugate(H), H)


def test_dipole_template_is_hermitian_and_weighted():
    spec = two_level_spec(4, "gauss-legendre")
    labels = am.mode_labels(spec)
    G = am.dipole_like_coupling(labels, spec.continuum.weights)
    np.testing.assert_allclose(G, G.conj().T)
    assert np.isclose(G[1, 1], spec.continuum.weights[0])


def test_coupling_from_pairs_checks_shape_and_hermiticity():
    with pytest.raises(am.AtomSpecError):
        am.coupling_from_pairs([[[1, 0], [0, 1]]])
    with pytest.raises(am.AtomSpecError):
        am.coupling_from_pairs([[[0, 0], [1, 0]], [[0, 0], [0, 0]]])
    G = am.coupling_from_pairs([[[1, 0], [0, 1]], [[0, -1], [2, 0]]])
    np.testing.assert_array_equal(G, [[1, 1j], [-1j, 2]])
