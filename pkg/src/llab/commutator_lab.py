"""Conjugate operators, commutators, certificate operators and Feshbach reduction.

All operators act on the atom (x) atom (x) Fock product space of
:mod:`llab.liouvillian`. ``i[L, A]`` is formed directly as ``i(LA - AL)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import atom_model as am
from . import thermal_field as tf
from .liouvillian import (ISOTROPIC_ANGULAR_FACTOR, Eigensystem, LiouvilleOperator,
                          ProjectionKit, TriSpace, align_degenerate, field_functions)


class AssemblyError(RuntimeError):
    """Two constructions of the same operator disagree."""


class ResolventError(ValueError):
    """The spectral parameter lies too close to the complementary block's spectrum."""


def commutator(L, A) -> sp.csr_matrix:
    """``i(LA - AL)``."""
    L, A = sp.csr_matrix(L), sp.csr_matrix(A)
    return (1j * (L @ A - A @ L)).tocsr()


def _diag(v) -> sp.csr_matrix:
    return sp.diags(np.asarray(v, dtype=complex)).tocsr()


def _lift_field(X: sp.spmatrix, space: TriSpace) -> sp.csr_matrix:
    return sp.kron(sp.identity(space.d_p * space.d_p, format="csr"), X).tocsr()


def number_operator(space: TriSpace, F: tf.FockSpace) -> sp.csr_matrix:
    return _diag(np.tile(F.total_number, space.d_p * space.d_p))


def resolvent_squared(L0: LiouvilleOperator, eps: float, check_tol: float = 1e-10) -> np.ndarray:
    """Diagonal of ``R_eps^2 = (L_0^2 + eps^2)^{-1}``; ``L_0`` is diagonal in the product basis."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    off = L0.matrix - sp.diags(L0.diagonal())
    if off.nnz and abs(off).max() > 0:
        raise AssemblyError("L_0 is not diagonal in the product basis")
    ell = L0.diagonal().real
    r2 = 1.0 / (ell ** 2 + eps ** 2)
    residual = np.max(np.abs((ell ** 2 + eps ** 2) * r2 - 1.0))
    if residual > check_tol:
        raise AssemblyError(f"R_eps^2 residual {residual:.3e} exceeds {check_tol}")
    return r2


@dataclass
class ConjugateKit:
    A_f: sp.csr_matrix
    A_0: sp.csr_matrix
    theta: float
    eps: float
    lam: float
    R2: np.ndarray
    commutator_bound: float = float("nan")

    @property
    def A(self) -> sp.csr_matrix:
        return (self.A_f + self.A_0).tocsr()


def build_A_f(space: TriSpace, F: tf.FockSpace) -> sp.csr_matrix:
    """``1 (x) 1 (x) dGamma(i d/du)``."""
    return _lift_field(tf.second_quantize(tf.translation_generator(F.grid), F), space)


def build_A0(I: sp.spmatrix, pi_mask: np.ndarray, R2: np.ndarray, theta: float, lam: float) -> sp.csr_matrix:
    """``i theta lam (Pi I R^2 Pibar - Pibar R^2 I Pi)``."""
    pi = pi_mask.astype(float)
    X = (_diag(pi) @ sp.csr_matrix(I) @ _diag(R2 * (1.0 - pi))).tocsr()
    return (1j * theta * lam * (X - X.conj().T)).tocsr()


def conjugate_kit(L: LiouvilleOperator, L0: LiouvilleOperator, I: LiouvilleOperator,
                  kit: ProjectionKit, F: tf.FockSpace, theta: float, eps: float, lam: float) -> ConjugateKit:
    R2 = resolvent_squared(L0, eps)
    A0 = build_A0(I.matrix, kit.Pi, R2, theta, lam)
    bound = sp.linalg.norm(commutator(L.matrix, A0)) if lam else 0.0
    return ConjugateKit(build_A_f(L.space, F), A0, theta, eps, lam, R2, float(bound))


def _field_parts(couplings: Sequence[np.ndarray], form_factors: Sequence[tf.FormFactor], beta: float,
                 F: tf.FockSpace, transform, angular_factor: float) -> sp.csr_matrix:
    d = np.asarray(couplings[0]).shape[0]
    Id = sp.identity(d, format="csr")
    out = sp.csr_matrix((d * d * F.dimension,) * 2, dtype=complex)
    for G, g in zip(couplings, form_factors):
        left, right = field_functions(g, beta, F.grid, angular_factor)
        G = np.asarray(G, dtype=complex)
        out = out + sp.kron(sp.kron(sp.csr_matrix(G), Id), tf.field_op(transform(left), F))
        out = out - sp.kron(sp.kron(Id, sp.csr_matrix(am.cp_conjugate(G))), tf.field_op(transform(right), F))
    return out.tocsr()


def build_D(couplings, form_factors, beta: float, F: tf.FockSpace, lam: float,
            L: LiouvilleOperator | None = None, tol: float = 1e-10,
            angular_factor: float = ISOTROPIC_ANGULAR_FACTOR) -> sp.csr_matrix:
    """``i[L_lam, N]`` from its closed form: every field operator ``phi(f)`` becomes ``phi(-i f)``.

    With ``L`` given, the closed form is compared with the matrix commutator.
    """
    D = lam * _field_parts(couplings, form_factors, beta, F, lambda f: -1j * f, angular_factor)
    if L is not None:
        N = number_operator(L.space, F)
        direct = commutator(L.matrix, N)
        diff = direct - D
        defect = abs(diff).max() if diff.nnz else 0.0
        if defect > tol:
            raise AssemblyError(f"D differs from i[L, N] by {defect:.3e}")
    return D


def build_I1(couplings, form_factors, beta: float, F: tf.FockSpace,
             angular_factor: float = ISOTROPIC_ANGULAR_FACTOR) -> sp.csr_matrix:
    """Interaction with every test function replaced by its central-difference derivative."""
    return _field_parts(couplings, form_factors, beta, F,
                        lambda f: tf.central_difference(f, F.grid), angular_factor)


def one_particle_commutator(grid: tf.DoubledGrid) -> np.ndarray:
    """``i[u, i d/du]`` with the discrete derivative: half-weights on both off-diagonals."""
    u = np.diag(grid.nodes)
    T = tf.translation_generator(grid)
    return 1j * (u @ T - T @ u)


def smooth_probe_defect(grid: tf.DoubledGrid, centre: float = 0.0, width: float | None = None) -> float:
    """``|<f, S f> - <f, f>| / <f, f>`` for a Gaussian probe, with ``S = i[u, i d/du]``.

    ``S`` equals one only on smooth vectors; the defect is ``O(h^2)``.
    """
    width = width if width is not None else 0.15 * grid.nodes.max()
    f = np.exp(-0.5 * ((grid.nodes - centre) / width) ** 2)
    S = one_particle_commutator(grid)
    return float(abs(np.vdot(f, S @ f) - np.vdot(f, f)) / np.vdot(f, f).real)


@dataclass
class C1Result:
    direct: sp.csr_matrix
    analytic: sp.csr_matrix
    exact_identity_defect: float
    smooth_defect: float
    number_deviation_norm: float


def build_C1(L: LiouvilleOperator, A_f: sp.spmatrix, couplings, form_factors, beta: float,
             F: tf.FockSpace, lam: float, angular_factor: float = ISOTROPIC_ANGULAR_FACTOR) -> C1Result:
    """``i[L, A_f]`` two ways.

    ``direct`` is the matrix commutator; ``analytic`` is ``N + lam I_1``.
    Their exact difference is ``dGamma(S - 1)``; ``exact_identity_defect``
    compares the direct commutator with ``dGamma(S) + lam I_1`` and
    ``smooth_defect`` measures ``S - 1`` on a smooth one-particle probe.
    """
    direct = commutator(L.matrix, A_f)
    N = number_operator(L.space, F)
    I1 = build_I1(couplings, form_factors, beta, F, angular_factor) if lam else sp.csr_matrix(N.shape, dtype=complex)
    analytic = (N + lam * I1).tocsr()
    dS = _lift_field(tf.second_quantize(one_particle_commutator(F.grid), F), L.space)
    diff = direct - (dS + lam * I1)
    exact = float(abs(diff).max()) if diff.nnz else 0.0
    dev = direct - analytic
    return C1Result(direct, analytic, exact, smooth_probe_defect(F.grid),
                    float(sp.linalg.norm(dev)) if dev.nnz else 0.0)


def _as_basis(Pi, n: int) -> tuple[np.ndarray, np.ndarray]:
    Pi = np.asarray(Pi)
    if Pi.ndim == 1:
        mask = Pi.astype(bool)
        eye = np.eye(n)
        return eye[:, mask], eye[:, ~mask]
    vals, vecs = np.linalg.eigh(am.hermitize(Pi))
    keep = vals > 0.5
    return vecs[:, keep], vecs[:, ~keep]


def feshbach_map(M, Pi, m: complex, min_singular: float = 1e-10) -> np.ndarray:
    """``Pi (M - M Pibar (Pibar M Pibar - m)^{-1} Pibar M) Pi`` on ``Ran Pi``.

    ``Pi`` is a projection matrix or a boolean mask of basis vectors. The
    result is expressed in an orthonormal basis of ``Ran Pi``.
    """
    M = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=complex)
    Q, Qb = _as_basis(Pi, M.shape[0])
    top = Q.conj().T @ M @ Q
    if Qb.shape[1] == 0:
        return top
    block = Qb.conj().T @ M @ Qb - m * np.eye(Qb.shape[1])
    sv = np.linalg.svd(block, compute_uv=False)
    if sv.min() <= min_singular:
        ev = np.linalg.eigvals(Qb.conj().T @ M @ Qb)
        worst = ev[np.argmin(np.abs(ev - m))]
        raise ResolventError(f"m={m} is within {sv.min():.3e} of the complementary-block eigenvalue {worst}")
    cross = Qb.conj().T @ M @ Q
    return top - (Q.conj().T @ M @ Qb) @ np.linalg.solve(block, cross)


@dataclass
class Certificates:
    B: sp.csr_matrix | None
    M0: sp.csr_matrix
    M1: sp.csr_matrix
    commutator_A0: sp.csr_matrix
    pm1p_defect: float


def _mask_block(X: sp.spmatrix, rows: np.ndarray, cols: np.ndarray) -> sp.csr_matrix:
    return (_diag(rows.astype(float)) @ X @ _diag(cols.astype(float))).tocsr()


def assemble_certificates(L: LiouvilleOperator, kit: ProjectionKit, cK: ConjugateKit, C1: sp.spmatrix | None,
                          energies: np.ndarray, lam: float) -> Certificates:
    """Operators ``B = C_1 + i[L, A_0]``, ``M_0`` and ``M_1``.

    ``M_0 = p_Jc H (x) 1 (x) P_Omega + 1 (x) p_Jc H (x) P_Omega + 9/10 Pbar_Omega
    + i[L, A_0] - lam^2/10`` and ``M_1`` collects the blocks of ``i[L, A_0]``
    touching ``Pbar`` together with ``-lam^2/10 Pbar``.
    """
    X = commutator(L.matrix, cK.A_0)
    i, j, _ = L.space.factor_indices()
    e = np.asarray(energies, dtype=float)
    jc = kit.p_jc
    vac = kit.P_omega.astype(float)
    diag = (np.where(jc[i], e[i], 0.0) + np.where(jc[j], e[j], 0.0)) * vac
    diag = diag + 0.9 * (1.0 - vac) - lam * lam / 10.0
    M0 = (X + _diag(diag)).tocsr()
    P, Pb = kit.P, ~kit.P
    M1 = (_mask_block(X, Pb, P) + _mask_block(X, P, Pb) + _mask_block(X, Pb, Pb)
          - (lam * lam / 10.0) * _diag(Pb.astype(float))).tocsr()
    pm1p = _mask_block(M1, P, P)
    defect = float(abs(pm1p).max()) if pm1p.nnz else 0.0
    B = (sp.csr_matrix(C1) + X).tocsr() if C1 is not None else None
    return Certificates(B, M0, M1, X, defect)


@dataclass
class CertificateReport:
    operator: str
    inequality: str
    margin: float
    threshold: float
    params: dict
    tol: float
    block_dimension: int
    regime_flags: list[str] = field(default_factory=list)

    @property
    def degenerate(self) -> bool:
        return self.threshold == 0.0

    @property
    def passed(self) -> bool:
        return self.margin >= self.threshold * (1.0 - self.tol) and (self.threshold > 0 or self.degenerate)

    def to_dict(self) -> dict:
        return {"operator": self.operator, "inequality": self.inequality, "margin": self.margin,
                "threshold": self.threshold, "params": self.params, "tol": self.tol,
                "block_dimension": self.block_dimension, "degenerate": self.degenerate,
                "passed": self.passed, "regime_flags": self.regime_flags}


def regime_flags(theta: float, eps: float, lam: float, gamma: float, r_effective: float) -> list[str]:
    """Parameter conditions of the gap certificate that fail (advisory)."""
    flags = []
    if not 0 < theta < r_effective / 32:
        flags.append(f"theta={theta} not in (0, r/32={r_effective / 32:.4g})")
    if not eps < 5 * theta * gamma:
        flags.append(f"eps={eps} not below 5 theta gamma={5 * theta * gamma:.4g}")
    if not 0 < abs(lam) < min(1.0, np.sqrt(r_effective)):
        flags.append(f"|lambda|={abs(lam)} not in (0, min(1, sqrt(r)))")
    return flags


def certify_gap(M0: sp.spmatrix, kit: ProjectionKit, gamma: float, theta: float, lam: float, eps: float,
                tol: float = 0.25, r_effective: float | None = None) -> CertificateReport:
    """Smallest eigenvalue of ``E_Delta P M_0 P E_Delta`` on its range against ``theta lam^2 gamma / eps``."""
    idx = np.flatnonzero(kit.E_delta & kit.P)
    block = sp.csr_matrix(M0)[idx][:, idx].toarray()
    margin = float(np.linalg.eigvalsh(am.hermitize(block))[0]) if len(idx) else float("nan")
    threshold = theta * lam * lam * gamma / eps
    flags = regime_flags(theta, eps, lam, gamma, r_effective) if r_effective is not None else []
    return CertificateReport("M0", "E_Delta P M0 P E_Delta >= theta lambda^2 gamma / eps", margin, threshold,
                             {"lambda": lam, "theta": theta, "eps": eps, "delta_width": kit.delta_width,
                              "gamma": gamma}, tol, len(idx), flags)


@dataclass
class EigendiagReport:
    eigenvalues: np.ndarray
    number_bound: np.ndarray
    vacuum_complement: np.ndarray
    distance_to_ker_L0: np.ndarray
    coupled_weight: np.ndarray
    kernel_weight: np.ndarray
    virial: dict

    def tracked(self, threshold: float = 0.5) -> np.ndarray:
        """Coupled-mode eigenvectors: at least ``threshold`` weight on coupled bound pairs in the vacuum."""
        return self.coupled_weight >= threshold

    def kernel_continuations(self, threshold: float = 0.5) -> np.ndarray:
        """Eigenvectors with at least ``threshold`` weight on ``ker L_0``."""
        return self.kernel_weight >= threshold

    def summary(self, threshold: float = 0.5) -> dict:
        t = self.tracked(threshold)
        k = self.kernel_continuations(threshold)
        return {
            "n_eigenpairs": int(len(self.eigenvalues)),
            "n_tracked": int(t.sum()),
            "n_kernel_continuations": int(k.sum()),
            "max_number_bound": float(self.number_bound[k].max()) if k.any() else float("nan"),
            "min_distance_to_ker_L0_tracked": float(self.distance_to_ker_L0[t].min()) if t.any() else float("nan"),
            "max_virial": {name: float(np.max(np.abs(v))) for name, v in self.virial.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def expectation_values(X: sp.spmatrix, V: np.ndarray) -> np.ndarray:
    """``<v_k, X v_k>`` for every column ``v_k``."""
    return np.einsum("ik,ik->k", V.conj(), sp.csr_matrix(X) @ V)


def eigen_diagnostics(eig: Eigensystem, kit: ProjectionKit, F: tf.FockSpace,
                      commutators: dict | None = None) -> EigendiagReport:
    """Per-eigenvector photon number, vacuum-sector and kernel distances and virial residuals.

    Degenerate eigenspaces are first rotated to diagonalize the projector onto
    ``ker L_0`` so that the per-vector numbers do not depend on the arbitrary
    basis the eigensolver returns. ``commutators`` maps names to ``i[L, A]``
    matrices whose expectation in every eigenvector should vanish.
    """
    eig = align_degenerate(eig, kit.ker_L0)
    V = eig.vectors
    n = np.tile(F.total_number, kit.space.d_p * kit.space.d_p)
    w2 = np.abs(V) ** 2
    norms = np.sqrt(w2.sum(axis=0))
    number = np.sqrt(n @ w2) / norms
    excited_vac = ~kit.P0_atom & kit.P_omega
    vac_c = np.sqrt(w2[excited_vac].sum(axis=0)) / norms
    dist = np.sqrt(w2[~kit.ker_L0].sum(axis=0)) / norms
    i, j, _ = kit.space.factor_indices()
    coupled = kit.p_jd[i] & kit.p_jd[j] & kit.P_omega
    cw = w2[coupled].sum(axis=0) / norms ** 2
    kw = w2[kit.ker_L0].sum(axis=0) / norms ** 2
    virial = {name: expectation_values(X, V).real for name, X in (commutators or {}).items()}
    return EigendiagReport(eig.values, number, vac_c, dist, cw, kw, virial)


def linear_fit_through_origin(x, y) -> tuple[float, float]:
    """Slope ``k`` of ``y = k x`` and the coefficient of determination."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    k = float(x @ y / (x @ x))
    ss_res = float(np.sum((y - k * x) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    return k, r2


def loglog_slope(x, y) -> float:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])
