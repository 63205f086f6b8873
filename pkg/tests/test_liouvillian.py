import itertools

import numpy as np
import pytest
import scipy.sparse as sp

from llab import atom_model as am
from llab import liouvillian as lv
from llab import thermal_field as tf


def minimal_fock():
    """Two field modes at u = -1, +1 with at most one photon: basis vac, e_-, e_+."""
    return tf.FockSpace(tf.DoubledGrid.uniform(2.0, 1), 1)


def two_level_L0(F):
    H = np.diag([-1.0, -0.25]).astype(complex)
    return lv.assemble_L0(H, tf.second_quantize(F.grid.nodes, F))


def test_L0_vacuum_sector_eigenvalues():
    F = minimal_fock()
    L0 = two_level_L0(F)
    vac = L0.space.factor_indices()[2] == F.vacuum_index
    np.testing.assert_allclose(np.sort(L0.diagonal().real[vac]), [-0.75, 0.0, 0.0, 0.75])


def test_L0_spectrum_is_all_energy_differences_plus_photon_sums(tiny_model):
    e = tiny_model.energies
    u = tiny_model.grid.nodes
    sums = [0.0] + list(u)
    expected = sorted(a - b + s for a, b, s in itertools.product(e, e, sums))
    np.testing.assert_allclose(np.sort(tiny_model.L0.diagonal().real), expected, atol=1e-13)


def test_L0_spectrum_symmetric_under_negation(tiny_model):
    d = np.sort(tiny_model.L0.diagonal().real)
    np.testing.assert_allclose(d, -d[::-1], atol=1e-13)


def test_hand_built_interaction_on_minimal_space():
    F = minimal_fock()
    G = np.array([[0.3, 0.2 - 0.1j], [0.2 + 0.1j, -0.4]])
    radial = F.grid.positive
    g = tf.FormFactor(radial, np.array([0.7 + 0.2j]), 1.0, 4.0)
    beta = 1.3
    I = lv.assemble_interaction([G], [g], beta, F, angular_factor=1.0).dense()

    n = 1.0 / np.expm1(beta)
    gl = np.array([-np.sqrt(n) * np.conj(g.samples[0]), np.sqrt(1 + n) * g.samples[0]])
    gr = np.array([-np.sqrt(1 + n) * np.conj(g.samples[0]), np.sqrt(n) * g.samples[0]])

    def phi(f):
        a = np.zeros((3, 3), dtype=complex)
        w = np.sqrt(2.0)  # quadrature weight of each node is h = 2
        a[0, 1], a[0, 2] = w * np.conj(f[0]), w * np.conj(f[1])
        return (a + a.conj().T) / np.sqrt(2)

    expected = np.kron(np.kron(G, np.eye(2)), phi(gl)) - np.kron(np.kron(np.eye(2), G.conj()), phi(gr))
    np.testing.assert_allclose(I, expected, atol=1e-14)


def test_interaction_vanishes_between_vacuum_states(tiny_model):
    vac = tiny_model.kit.P_omega
    I = tiny_model.I.dense()
    assert np.max(np.abs(I[np.ix_(vac, vac)])) == 0


def test_Pi_I_Pi_is_zero(tiny_model):
    pi = tiny_model.kit.Pi
    assert np.max(np.abs(tiny_model.I.dense()[np.ix_(pi, pi)])) == 0


def test_L_is_linear_in_lambda(tiny_model):
    a, b = tiny_model.L(0.01).matrix, tiny_model.L(0.03).matrix
    mid = tiny_model.L(0.02).matrix
    assert abs(0.5 * (a + b) - mid).max() < 1e-15
    assert tiny_model.L(0.01).hermiticity_defect() == 0


def test_space_mismatch_rejected(tiny_model):
    F = minimal_fock()
    with pytest.raises(lv.LiouvillianError):
        lv.assemble_L(two_level_L0(F), tiny_model.I, 0.1)


def test_kit_projections_partition_unity(tiny_model):
    k = tiny_model.kit
    total = k.P.astype(int) + k.P_l + k.P_r + k.P_zero
    np.testing.assert_array_equal(total, 1)
    assert not np.any(k.Pi & ~k.P0_atom)
    assert not np.any(k.Pi & ~k.ker_L0)


def test_delta_width_limit_names_the_gap(tiny_model):
    with pytest.raises(lv.LiouvillianError, match="0.25"):
        lv.projection_kit(tiny_model.labels, tiny_model.window, tiny_model.fock, 0.3)


def test_block_reduction_holds_for_regularized_couplings(tiny_model):
    r = lv.block_reduction_check(tiny_model.L(0.05), tiny_model.L0, tiny_model.kit)
    assert r.passed


def test_block_reduction_detects_unregularized_coupling(tiny_model):
    m = tiny_model
    G = am.dipole_like_coupling(m.labels, m.spec.continuum.weights)
    I = lv.assemble_interaction([G], m.form_factors, m.beta, m.fock)
    r = lv.block_reduction_check(lv.assemble_L(m.L0, I, 0.05), m.L0, m.kit)
    assert not r.passed
    assert r.p_zero_defect > 1e-6


def test_zero_mode_count_counts_equal_energy_pairs():
    spec = am.AtomSpec(((-3.0, 2), (-1.0, 1)), am.ContinuumSpec.build(0.1, 2.0, 3))
    labels = am.mode_labels(spec)
    assert lv.zero_mode_count(labels) == 4 + 1 + 3
    assert lv.zero_mode_count(labels, discrete_only=True) == 5


def test_kernel_report_at_zero_coupling(tiny_model):
    m = tiny_model
    rep = lv.kernel_report(m.L0, m.kit)
    zeros = np.abs(m.L0.diagonal()) <= 1e-10
    assert rep.dimension == zeros.sum()
    pi_hits = sum(e.overlap_pi > 0.99 for e in rep.entries)
    assert pi_hits == m.kit.Pi.sum()
    assert '"dimension"' in rep.to_json()


def test_evolve_preserves_norm_and_eigenprojections(tiny_model, rng):
    L = tiny_model.L(0.02)
    eig = lv.eigensystem(L)
    psi = rng.normal(size=L.space.dimension) + 1j * rng.normal(size=L.space.dimension)
    out = lv.evolve(eig, psi, 3.7)
    assert np.isclose(np.linalg.norm(out), np.linalg.norm(psi), rtol=1e-12)
    before = np.abs(eig.vectors.conj().T @ psi)
    after = np.abs(eig.vectors.conj().T @ out)
    np.testing.assert_allclose(after, before, atol=1e-10)


def test_evolve_eigenvector_picks_up_phase(tiny_model):
    L = tiny_model.L(0.02)
    eig = lv.eigensystem(L)
    k = len(eig.values) - 1
    out = lv.evolve(eig, eig.vectors[:, k], 0.9)
    np.testing.assert_allclose(out, np.exp(0.9j * eig.values[k]) * eig.vectors[:, k], atol=1e-10)


def test_align_degenerate_concentrates_mask_weight(rng):
    Q, _ = np.linalg.qr(rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6)))
    M = Q @ np.diag([0.0, 0.0, 0.0, 1.0, 2.0, 2.0]) @ Q.conj().T
    eig = lv.eigensystem(M)
    mask = np.array([True, False, False, False, False, False])
    al = lv.align_degenerate(eig, mask)
    np.testing.assert_allclose(M @ al.vectors, al.vectors * al.values, atol=1e-12)
    np.testing.assert_allclose(al.vectors.conj().T @ al.vectors, np.eye(6), atol=1e-12)
    w = np.abs(al.vectors[0, :3]) ** 2
    assert np.isclose(w[0], np.sum(np.abs(Q[0, :3]) ** 2)) and np.allclose(w[1:], 0, atol=1e-12)


def test_block_eigensystem_uses_the_mask(tiny_model):
    eig, idx = lv.block_eigensystem(tiny_model.L(0.0), tiny_model.kit.P)
    np.testing.assert_array_equal(idx, np.flatnonzero(tiny_model.kit.P))
    np.testing.assert_allclose(np.sort(eig.values), np.sort(tiny_model.L0.diagonal().real[idx]), atol=1e-13)


def test_trispace_flat_roundtrip():
    s = lv.TriSpace(3, 5)
    i, j, k = s.factor_indices()
    np.testing.assert_array_equal(s.flat(i, j, k), np.arange(45))
    assert sp.issparse(lv.LiouvilleOperator(sp.identity(45, format="csr"), s).matrix)
