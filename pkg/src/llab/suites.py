"""Invariant suites run by ``llab selftest``.

Each suite returns a plain dict of measured values together with the tolerance
it was judged against and a ``passed`` flag. Randomized suites draw their
inputs from ``numpy.random.default_rng(seed)``.
"""

from __future__ import annotations

import numpy as np

from . import commutator_lab as cl
from . import fgr
from . import liouvillian as lv
from . import thermal_field as tf
from .model import Model

CCR_REL_TOL = 1e-6
ZERO_T_REL_TOL = 1e-3
FESHBACH_TOL = 1e-9
IDENTITY_TOL = 1e-10
VIRIAL_TOL = 1e-9


def random_form_factor(rng: np.random.Generator, grid: tf.RadialGrid) -> tf.FormFactor:
    """Power-exponential profile with a random complex amplitude and a random smooth phase."""
    p = rng.uniform(2.1, 4.0)
    cutoff = rng.uniform(0.5, 3.0)
    amp = complex(rng.normal(), rng.normal())
    phase = np.exp(1j * rng.uniform(-2, 2) * grid.nodes)
    base = tf.FormFactor.power_exponential(grid, p, cutoff, amp)
    return tf.FormFactor(grid, base.samples * phase, p, 4.0)


def ccr_suite(seed: int = 0, n_pairs: int = 50, n_nodes: int = 400, omega_max: float = 12.0,
              beta: float = 1.0) -> dict:
    """``Im<tau f, tau g>_du`` against ``Im<f, g>`` with weight ``omega^2``, over random pairs."""
    rng = np.random.default_rng(seed)
    radial = tf.RadialGrid.midpoint(omega_max, n_nodes)
    doubled = tf.DoubledGrid.from_radial(radial)
    worst = 0.0
    for _ in range(n_pairs):
        f, g = random_form_factor(rng, radial), random_form_factor(rng, radial)
        lhs = doubled.inner(tf.bogoliubov_map(f, beta, doubled), tf.bogoliubov_map(g, beta, doubled)).imag
        rhs = radial.inner(f.samples, g.samples).imag
        worst = max(worst, abs(lhs - rhs) / max(abs(rhs), 1e-300))
    return {"n_pairs": n_pairs, "n_nodes": n_nodes, "beta": beta, "max_relative_error": worst,
            "tol": CCR_REL_TOL, "passed": worst <= CCR_REL_TOL}


def zero_temperature_suite(beta: float = 1e3, n_nodes: int = 400, omega_max: float = 12.0) -> dict:
    """At large beta the negative-frequency half is suppressed by ``exp(-beta u_min / 2)``."""
    radial = tf.RadialGrid.midpoint(omega_max, n_nodes)
    doubled = tf.DoubledGrid.from_radial(radial)
    f = tf.FormFactor.power_exponential(radial, 2.5, 1.0)
    tau = tf.bogoliubov_map(f, beta, doubled)
    half = len(radial)
    w, s = radial.nodes, np.abs(f.samples)
    neg = np.abs(tau[:half][::-1]) / (w * s)
    pos = np.abs(tau[half:]) / (w * s)
    bound = np.exp(-0.5 * beta * w.min()) * (1.0 + ZERO_T_REL_TOL)
    pos_dev = float(np.max(np.abs(pos - 1.0)))
    return {"beta": beta, "u_min": float(w.min()), "max_negative_ratio": float(neg.max()), "bound": float(bound),
            "max_positive_deviation": pos_dev, "tol": ZERO_T_REL_TOL,
            "passed": bool(neg.max() <= bound and pos_dev <= ZERO_T_REL_TOL)}


def random_hermitian(rng: np.random.Generator, n: int) -> np.ndarray:
    X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return 0.5 * (X + X.conj().T)


def feshbach_trial(rng: np.random.Generator) -> float:
    """Largest mismatch between eigenvalues of ``M`` and fixed points of the Feshbach map at ``m = z``.

    For every eigenvalue ``z`` of ``M`` away from the complementary block,
    ``z`` must be an eigenvalue of ``F(z)``.
    """
    n = int(rng.integers(8, 33))
    k = int(rng.integers(1, 5))
    M = random_hermitian(rng, n)
    mask = np.zeros(n, dtype=bool)
    mask[rng.choice(n, size=k, replace=False)] = True
    comp = np.linalg.eigvalsh(M[np.ix_(~mask, ~mask)])
    scale = np.linalg.norm(M, 2)
    worst = 0.0
    for z in np.linalg.eigvalsh(M):
        if np.min(np.abs(comp - z)) < 1e-6 * scale:
            continue
        Fz = cl.feshbach_map(M, mask, z)
        worst = max(worst, float(np.min(np.abs(np.linalg.eigvals(Fz) - z))) / scale)
    return worst


def feshbach_suite(seed: int = 0, n_trials: int = 100) -> dict:
    rng = np.random.default_rng(seed)
    worst = max(feshbach_trial(rng) for _ in range(n_trials))
    return {"n_trials": n_trials, "max_relative_mismatch": worst, "tol": FESHBACH_TOL,
            "passed": worst <= FESHBACH_TOL}


def assembly_suite(model: Model, lam: float | None = None) -> dict:
    """Closed-form commutators against matrix commutators on an assembled model.

    The ``A_0`` identity ``Pi i[L, A_0] Pi = 2 theta lam^2 Pi I Rbar^2 I Pi``
    is reported relative to the largest entry of its right-hand side.
    """
    lam = float(model.params["lambda"]) if lam is None else lam
    L = model.L(lam)
    kit = model.kit
    out = {"lambda": lam, "hermiticity_defect": L.hermiticity_defect()}
    try:
        cl.build_D(model.couplings, model.form_factors, model.beta, model.fock, lam, L,
                   angular_factor=model.angular_factor)
        out["D_matches_commutator"] = True
    except cl.AssemblyError as exc:
        out["D_matches_commutator"] = False
        out["D_error"] = str(exc)
    c1 = cl.build_C1(L, model.A_f, model.couplings, model.form_factors, model.beta, model.fock, lam,
                     model.angular_factor)
    out["C1_exact_identity_defect"] = c1.exact_identity_defect
    out["C1_smooth_probe_defect"] = c1.smooth_defect
    ck = model.conjugate_kit(lam)
    X = cl.commutator(L.matrix, ck.A_0)
    idx = np.flatnonzero(kit.Pi)
    lhs = X[idx][:, idx].toarray()
    rbar2 = ck.R2 * (~kit.Pi)
    rhs = 2.0 * ck.theta * lam * lam * fgr.level_shift_matrix(model.I.matrix, kit.Pi, rbar2)
    scale = float(np.max(np.abs(rhs))) if rhs.size else 0.0
    out["A0_identity_defect"] = float(np.max(np.abs(lhs - rhs))) / scale if scale > 0 else 0.0
    certs = cl.assemble_certificates(L, kit, ck, c1.direct, model.energies, lam)
    out["PM1P_defect"] = certs.pm1p_defect
    blocks = lv.block_reduction_check(L, model.L0, kit)
    out["block_reduction"] = blocks.to_dict()
    out["tol"] = IDENTITY_TOL
    out["passed"] = bool(out["hermiticity_defect"] <= 1e-12 and out["D_matches_commutator"]
                         and out["C1_exact_identity_defect"] <= IDENTITY_TOL
                         and out["A0_identity_defect"] <= IDENTITY_TOL
                         and out["PM1P_defect"] <= IDENTITY_TOL and blocks.passed)
    return out


def virial_suite(model: Model, lams) -> dict:
    """``<psi, i[L, A] psi>`` for every eigenvector of every ``L_lam``, relative to ``||A||``."""
    worst = {"A_f": 0.0, "A_0": 0.0}
    for lam in lams:
        L = model.L(lam)
        eig = lv.eigensystem(L)
        ck = model.conjugate_kit(lam)
        for name, A in (("A_f", ck.A_f), ("A_0", ck.A_0)):
            norm = float(np.linalg.norm(A.toarray(), 2))
            if norm == 0:
                continue
            v = np.max(np.abs(cl.expectation_values(cl.commutator(L.matrix, A), eig.vectors)))
            worst[name] = max(worst[name], float(v) / norm)
    return {"lambdas": list(lams), "max_relative": worst, "tol": VIRIAL_TOL,
            "passed": all(v <= VIRIAL_TOL for v in worst.values())}


def fgr_scaling_suite(model: Model, s: float = 3.0) -> dict:
    """Scaling every coupling by ``s`` multiplies each rate by ``s^2``."""
    fm, params = model.fgr_model(), model.fgr_params()
    base = fgr.gamma_overall(fm, model.beta, params)
    scaled = fgr.gamma_overall(fm.scaled(s), model.beta, params)
    worst = max(abs(b.gamma_E * s * s - c.gamma_E) / max(abs(c.gamma_E), 1e-300)
                for b, c in zip(base.entries, scaled.entries))
    return {"s": s, "max_relative_error": worst, "tol": 1e-10, "passed": worst <= 1e-10}
