import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from llab import commutator_lab as cl
from llab import liouvillian as lv
from llab import suites
from llab import thermal_field as tf


def dense(X):
    return X.toarray() if sp.issparse(X) else np.asarray(X)


def test_D_vanishes_at_zero_coupling(tiny_model):
    m = tiny_model
    D = cl.build_D(m.couplings, m.form_factors, m.beta, m.fock, 0.0, m.L(0.0))
    assert D.nnz == 0 or abs(D).max() == 0


def test_D_matches_matrix_commutator_and_kills_vacuum(tiny_model):
    m = tiny_model
    D = dense(cl.build_D(m.couplings, m.form_factors, m.beta, m.fock, 0.05, m.L(0.05)))
    np.testing.assert_allclose(D, D.conj().T, atol=1e-15)
    vac = m.kit.P_omega
    assert np.max(np.abs(D[np.ix_(vac, vac)])) == 0


def test_D_on_minimal_space_against_hand_assembly():
    F = tf.FockSpace(tf.DoubledGrid.uniform(2.0, 1), 1)
    H = np.diag([-1.0, -0.25]).astype(complex)
    G = np.array([[0.0, 0.4 + 0.1j], [0.4 - 0.1j, 0.0]])
    g = tf.FormFactor(F.grid.positive, np.array([0.9]), 1.0, 4.0)
    beta, lam = 0.8, 0.3
    L0 = lv.assemble_L0(H, tf.second_quantize(F.grid.nodes, F))
    L = lv.assemble_L(L0, lv.assemble_interaction([G], [g], beta, F, angular_factor=1.0), lam)
    D = dense(cl.build_D([G], [g], beta, F, lam, L, angular_factor=1.0))
    n = 1.0 / np.expm1(beta)
    gl = np.array([-np.sqrt(n), np.sqrt(1 + n)]) * 0.9
    gr = np.array([-np.sqrt(1 + n), np.sqrt(n)]) * 0.9

    def phi(f):
        a = np.zeros((3, 3), dtype=complex)
        a[0, 1:] = np.sqrt(2.0) * np.conj(f)
        return (a + a.conj().T) / np.sqrt(2)

    hand = lam * (np.kron(np.kron(G, np.eye(2)), phi(-1j * gl))
                  - np.kron(np.kron(np.eye(2), G.conj()), phi(-1j * gr)))
    np.testing.assert_allclose(D, hand, atol=1e-14)


def test_D_cross_check_catches_wrong_operator(tiny_model):
    m = tiny_model
    with pytest.raises(cl.AssemblyError):
        cl.build_D(m.couplings, m.form_factors, m.beta, m.fock, 0.05, m.L(0.1))


def test_smooth_probe_defect_is_second_order_in_spacing():
    a = cl.smooth_probe_defect(tf.DoubledGrid.uniform(8.0, 40), width=1.5)
    b = cl.smooth_probe_defect(tf.DoubledGrid.uniform(8.0, 80), width=1.5)
    assert 3.9 < a / b < 4.1


def test_C1_exact_identity_at_zero_coupling(tiny_model):
    m = tiny_model
    res = cl.build_C1(m.L(0.0), m.A_f, m.couplings, m.form_factors, m.beta, m.fock, 0.0)
    assert res.exact_identity_defect <= 1e-12


def test_C1_exact_identity_with_coupling(tiny_model):
    m = tiny_model
    res = cl.build_C1(m.L(0.05), m.A_f, m.couplings, m.form_factors, m.beta, m.fock, 0.05)
    assert res.exact_identity_defect <= 1e-10


def test_one_particle_commutator_has_half_off_diagonals():
    grid = tf.DoubledGrid.uniform(2.0, 2)
    S = cl.one_particle_commutator(grid)
    np.testing.assert_allclose(S, 0.5 * (np.eye(4, k=1) + np.eye(4, k=-1)), atol=1e-15)


def test_A0_vanishes_at_zero_coupling(tiny_model):
    ck = tiny_model.conjugate_kit(0.0)
    assert ck.A_0.nnz == 0 or abs(ck.A_0).max() == 0


def test_A0_is_hermitian_and_block_antidiagonal(tiny_model):
    A = dense(tiny_model.conjugate_kit(0.02).A_0)
    pi = tiny_model.kit.Pi
    np.testing.assert_allclose(A, A.conj().T, atol=1e-16)
    assert np.max(np.abs(A[np.ix_(pi, pi)])) == 0
    assert np.max(np.abs(A[np.ix_(~pi, ~pi)])) == 0
    assert np.max(np.abs(A)) > 0


def test_A0_commutator_identity(tiny_model):
    out = suites.assembly_suite(tiny_model, 0.02)
    assert out["A0_identity_defect"] <= 1e-10


def test_resolvent_squared_is_diagonal_reciprocal(tiny_model):
    r2 = cl.resolvent_squared(tiny_model.L0, 0.3)
    ell = tiny_model.L0.diagonal().real
    np.testing.assert_allclose(r2 * (ell ** 2 + 0.09), 1.0, rtol=1e-14)


def test_resolvent_squared_rejects_non_diagonal_L0(tiny_model):
    with pytest.raises(cl.AssemblyError):
        cl.resolvent_squared(tiny_model.L(0.1), 0.3)


def test_feshbach_two_by_two_closed_form():
    a, b, d, m = 1.5, 0.4 - 0.3j, -2.0, 0.7
    M = np.array([[a, b], [np.conj(b), d]])
    F = cl.feshbach_map(M, np.array([True, False]), m)
    assert np.isclose(F[0, 0], a - abs(b) ** 2 / (d - m))


def test_feshbach_of_block_diagonal_matrix_is_the_block(rng):
    M = suites.random_hermitian(rng, 6)
    mask = np.array([True, True, False, False, False, False])
    M[np.ix_(mask, ~mask)] = 0
    M[np.ix_(~mask, mask)] = 0
    np.testing.assert_allclose(cl.feshbach_map(M, mask, 0.123), M[np.ix_(mask, mask)], atol=1e-14)


def test_feshbach_accepts_projection_matrix(rng):
    M = suites.random_hermitian(rng, 5)
    mask = np.array([True, False, True, False, False])
    F1 = cl.feshbach_map(M, mask, 0.3)
    F2 = cl.feshbach_map(M, np.diag(mask.astype(float)), 0.3)
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(F1)), np.sort(np.linalg.eigvalsh(F2)), atol=1e-12)


def test_feshbach_resolvent_error_names_offending_eigenvalue():
    M = np.diag([1.0, 2.0, 3.0])
    with pytest.raises(cl.ResolventError, match="2"):
        cl.feshbach_map(M, np.array([True, False, False]), 2.0)


@given(st.integers(0, 2 ** 31))
def test_feshbach_isospectrality(seed):
    assert suites.feshbach_trial(np.random.default_rng(seed)) <= 1e-9


def test_pm1p_vanishes_and_B_equals_C1_at_zero_coupling(tiny_model):
    m = tiny_model
    L = m.L(0.0)
    ck = m.conjugate_kit(0.0)
    c1 = cl.build_C1(L, m.A_f, m.couplings, m.form_factors, m.beta, m.fock, 0.0)
    certs = cl.assemble_certificates(L, m.kit, ck, c1.direct, m.energies, 0.0)
    assert abs(certs.B - c1.direct).max() == 0
    assert certs.M1.nnz == 0 or abs(certs.M1).max() == 0
    assert certs.pm1p_defect == 0


def test_pm1p_vanishes_with_coupling(tiny_model):
    m = tiny_model
    L = m.L(0.02)
    certs = cl.assemble_certificates(L, m.kit, m.conjugate_kit(0.02), None, m.energies, 0.02)
    assert certs.pm1p_defect <= 1e-12


def test_certificate_zero_coupling_is_degenerate_pass(tiny_model):
    m = tiny_model
    zero = lv.LiouvilleOperator(sp.csr_matrix(m.L0.matrix.shape, dtype=complex), m.L0.space)
    L = lv.assemble_L(m.L0, zero, 0.0)
    ck = cl.conjugate_kit(L, m.L0, zero, m.kit, m.fock, 0.006, 0.2, 0.0)
    certs = cl.assemble_certificates(L, m.kit, ck, None, m.energies, 0.0)
    rep = cl.certify_gap(certs.M0, m.kit, 0.0, 0.006, 0.0, 0.2)
    assert rep.margin == 0.0 and rep.threshold == 0.0
    assert rep.degenerate and rep.passed


def test_regime_flags():
    assert cl.regime_flags(0.001, 0.001, 0.01, 10.0, 0.2) == []
    flags = cl.regime_flags(1.0, 1.0, 2.0, 0.0, 0.2)
    assert len(flags) == 3


def test_eigen_diagnostics_at_zero_coupling(tiny_model):
    m = tiny_model
    rep = cl.eigen_diagnostics(lv.eigensystem(m.L(0.0)), m.kit, m.fock)
    zero_photon = rep.number_bound < 0.5
    assert zero_photon.sum() == m.kit.P_omega.sum()
    assert np.all(rep.number_bound[zero_photon] == 0)
    for v in (rep.vacuum_complement, rep.distance_to_ker_L0, rep.coupled_weight, rep.kernel_weight):
        assert np.all(np.isfinite(v)) and np.all((v >= -1e-15) & (v <= 1 + 1e-12))
    assert rep.summary()["n_kernel_continuations"] == int(m.kit.ker_L0.sum())


def test_eigen_diagnostics_virial_residuals_vanish(tiny_model):
    m = tiny_model
    L = m.L(0.05)
    ck = m.conjugate_kit(0.05)
    comms = {"A_f": cl.commutator(L.matrix, ck.A_f), "A_0": cl.commutator(L.matrix, ck.A_0)}
    rep = cl.eigen_diagnostics(lv.eigensystem(L), m.kit, m.fock, comms)
    norm = np.linalg.norm(ck.A_f.toarray(), 2)
    assert np.max(np.abs(rep.virial["A_f"])) <= 1e-9 * norm
    assert '"max_virial"' in rep.to_json()


def test_linear_fit_and_loglog_slope():
    x = np.array([1.0, 2.0, 4.0])
    k, r2 = cl.linear_fit_through_origin(x, 3 * x)
    assert np.isclose(k, 3.0) and np.isclose(r2, 1.0)
    assert np.isclose(cl.loglog_slope(x, 5 * x ** 2), 2.0)
