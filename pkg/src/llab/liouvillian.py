"""Liouvillian on atom (x) atom (x) Fock space, its projections and kernel analysis.

Index order: flat index ``(i * d_p + j) * fock_dim + k`` for left atom level
``i``, right atom level ``j`` and Fock basis state ``k`` (left atom slowest).
Operators are held as scipy CSR matrices; projections that are diagonal in
the product basis are held as boolean masks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import atom_model as am
from . import thermal_field as tf

DEFAULT_ZERO_TOL = 1e-10
ISOTROPIC_ANGULAR_FACTOR = 4.0 * np.pi


class LiouvillianError(ValueError):
    pass


@dataclass(frozen=True)
class TriSpace:
    d_p: int
    fock_dim: int

    @property
    def dimension(self) -> int:
        return self.d_p * self.d_p * self.fock_dim

    def flat(self, i, j, k):
        return (np.asarray(i) * self.d_p + np.asarray(j)) * self.fock_dim + np.asarray(k)

    def unflat(self, idx):
        idx = np.asarray(idx)
        ij, k = np.divmod(idx, self.fock_dim)
        i, j = np.divmod(ij, self.d_p)
        return i, j, k

    def factor_indices(self):
        """Left-atom, right-atom and Fock index of every flat index."""
        return self.unflat(np.arange(self.dimension))


@dataclass
class LiouvilleOperator:
    matrix: sp.csr_matrix
    space: TriSpace
    metadata: dict = field(default_factory=dict)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def hermiticity_defect(self) -> float:
        diff = self.matrix - self.matrix.conj().T
        return float(abs(diff).max()) if diff.nnz else 0.0


def _hermitian_part(X: sp.spmatrix) -> sp.csr_matrix:
    return (0.5 * (X + X.conj().T)).tocsr()


def assemble_L0(H_p: np.ndarray, dgamma_u: sp.spmatrix) -> LiouvilleOperator:
    """``H_p (x) 1 (x) 1 - 1 (x) H_p (x) 1 + 1 (x) 1 (x) dGamma(u)``."""
    H_p = np.asarray(H_p)
    d = H_p.shape[0]
    if H_p.shape != (d, d):
        raise LiouvillianError("H_p must be square")
    dgamma_u = sp.csr_matrix(dgamma_u)
    nf = dgamma_u.shape[0]
    if dgamma_u.shape != (nf, nf):
        raise LiouvillianError("dGamma(u) must be square")
    if not np.allclose(H_p, H_p.conj().T, atol=0) or abs(dgamma_u - dgamma_u.conj().T).max() > 0:
        raise LiouvillianError("L_0 inputs must be Hermitian")
    Hs = sp.csr_matrix(H_p)
    Id, If = sp.identity(d, format="csr"), sp.identity(nf, format="csr")
    L0 = sp.kron(sp.kron(Hs, Id), If) - sp.kron(sp.kron(Id, Hs), If) + sp.kron(sp.kron(Id, Id), dgamma_u)
    space = TriSpace(d, nf)
    return LiouvilleOperator(_hermitian_part(L0), space, {"kind": "L0"})


def field_functions(form_factor: tf.FormFactor, beta: float, grid: tf.DoubledGrid,
                    angular_factor: float = ISOTROPIC_ANGULAR_FACTOR) -> tuple[np.ndarray, np.ndarray]:
    """Left and right test functions ``tau_beta g`` and ``exp(-beta u/2) tau_beta g``.

    Both carry ``sqrt(angular_factor)``: an isotropic form factor on the
    three-dimensional momentum space has squared norm ``4 pi`` times its
    radial ``omega^2 d omega`` norm.
    """
    s = np.sqrt(angular_factor)
    return (s * tf.bogoliubov_map(form_factor, beta, grid),
            s * tf.kms_bogoliubov(form_factor, beta, grid))


def assemble_interaction(couplings: Sequence[np.ndarray], form_factors: Sequence[tf.FormFactor],
                         beta: float, F: tf.FockSpace,
                         angular_factor: float = ISOTROPIC_ANGULAR_FACTOR) -> LiouvilleOperator:
    """``sum_a G_a (x) 1 (x) phi(tau g_a) - 1 (x) conj(G_a) (x) phi(e^{-beta u/2} tau g_a)``."""
    if len(couplings) != len(form_factors):
        raise LiouvillianError("need one form factor per coupling operator")
    if not couplings:
        raise LiouvillianError("at least one coupling is required")
    d = np.asarray(couplings[0]).shape[0]
    Id = sp.identity(d, format="csr")
    out = sp.csr_matrix((d * d * F.dimension,) * 2, dtype=complex)
    for G, g in zip(couplings, form_factors):
        G = np.asarray(G, dtype=complex)
        if G.shape != (d, d):
            raise LiouvillianError("coupling operators have inconsistent dimensions")
        left, right = field_functions(g, beta, F.grid, angular_factor)
        Gs = sp.csr_matrix(G)
        Gc = sp.csr_matrix(am.cp_conjugate(G))
        out = out + sp.kron(sp.kron(Gs, Id), tf.field_op(left, F))
        out = out - sp.kron(sp.kron(Id, Gc), tf.field_op(right, F))
    return LiouvilleOperator(_hermitian_part(out), TriSpace(d, F.dimension), {"kind": "I", "beta": beta})


def assemble_L(L0: LiouvilleOperator, interaction: LiouvilleOperator, lam: float,
               metadata: dict | None = None) -> LiouvilleOperator:
    if L0.space != interaction.space:
        raise LiouvillianError("L_0 and I live on different spaces")
    if lam == 0:
        mat = L0.matrix.copy()
    else:
        mat = (L0.matrix + lam * interaction.matrix).tocsr()
    meta = {"kind": "L", "lambda": lam}
    meta.update(metadata or {})
    return LiouvilleOperator(mat, L0.space, meta)


@dataclass
class ProjectionKit:
    """Projections diagonal in the product basis, stored as boolean masks.

    ``Pi``: discrete equal-energy pairs with the field in the vacuum.
    ``P, P_l, P_r, P_zero``: ``p(x)p``, ``p(x)pbar``, ``pbar(x)p``, ``pbar(x)pbar``
    (times the Fock identity) with ``p = p_Jd + p_Jc``.
    ``E_delta``: spectral projection of ``L_0`` onto ``[-width/2, width/2]``.
    ``ker_L0``: the whole finite-dimensional kernel of ``L_0``.
    """

    space: TriSpace
    Pi: np.ndarray
    P0_atom: np.ndarray
    P_omega: np.ndarray
    P: np.ndarray
    P_l: np.ndarray
    P_r: np.ndarray
    P_zero: np.ndarray
    E_delta: np.ndarray
    ker_L0: np.ndarray
    delta_width: float
    p_atom: np.ndarray
    p_jd: np.ndarray
    p_jc: np.ndarray

    NAMES = ("Pi", "P0_atom", "P_omega", "P", "P_l", "P_r", "P_zero", "E_delta", "ker_L0")

    def matrix(self, name: str) -> sp.csr_matrix:
        return sp.diags(getattr(self, name).astype(complex)).tocsr()

    def complement(self, name: str) -> np.ndarray:
        return ~getattr(self, name)


def max_discrete_delta_width(labels: Sequence[am.ModeLabel], window: am.WindowSpec,
                             cluster_tol: float = am.DEFAULT_CLUSTER_TOL) -> float:
    """Upper limit for the length of the energy window around zero.

    Half the smallest nonzero gap between coupled discrete energies;
    ``inf`` when there is at most one distinct coupled energy.
    """
    levels = am.cluster_eigenvalues([m.energy for m in window.coupled_discrete_modes], cluster_tol)
    gaps = np.diff(levels)
    return 0.5 * float(gaps.min()) if len(gaps) else np.inf


def projection_kit(labels: Sequence[am.ModeLabel], window: am.WindowSpec, F: tf.FockSpace,
                   delta_width: float, L0: LiouvilleOperator | None = None,
                   cluster_tol: float = am.DEFAULT_CLUSTER_TOL,
                   kernel_tol: float = 1e-12) -> ProjectionKit:
    limit = max_discrete_delta_width(labels, window, cluster_tol)
    if not 0 < delta_width < limit:
        raise LiouvillianError(
            f"delta_width {delta_width} must lie in (0, {limit}): half the smallest gap "
            "between distinct coupled discrete energies")
    d = len(labels)
    space = TriSpace(d, F.dimension)
    e = np.array([m.energy for m in labels])
    disc = am.discrete_mask(labels).astype(bool)
    p_jd = am.mode_projection(labels, window.coupled_discrete_modes).astype(bool)
    lo, hi = window.support
    p_jc = ~disc & (e > lo) & (e < hi)
    p = p_jd | p_jc
    i, j, k = space.factor_indices()
    vac = k == F.vacuum_index
    pair_zero = disc[i] & disc[j] & (np.abs(e[i] - e[j]) <= cluster_tol)
    if L0 is None:
        u = tf.second_quantize(F.grid.nodes, F).diagonal().real
        diag = e[i] - e[j] + u[k]
    else:
        diag = L0.diagonal().real
    P = p[i] & p[j]
    return ProjectionKit(
        space=space,
        Pi=pair_zero & vac,
        P0_atom=pair_zero,
        P_omega=vac,
        P=P,
        P_l=p[i] & ~p[j],
        P_r=~p[i] & p[j],
        P_zero=~p[i] & ~p[j],
        E_delta=np.abs(diag) <= 0.5 * delta_width,
        ker_L0=np.abs(diag) <= kernel_tol,
        delta_width=float(delta_width),
        p_atom=p,
        p_jd=p_jd,
        p_jc=p_jc,
    )


def zero_mode_count(labels: Sequence[am.ModeLabel], cluster_tol: float = am.DEFAULT_CLUSTER_TOL,
                    discrete_only: bool = False) -> int:
    """Number of pairs ``(m, n)`` with ``E(m) = E(n)``."""
    e = np.array([m.energy for m in labels if not discrete_only or m.kind == am.DISCRETE])
    return int(np.sum(np.abs(e[:, None] - e[None, :]) <= cluster_tol))


@dataclass
class BlockReductionReport:
    commutator_norms: dict
    p_zero_defect: float
    tol: float

    @property
    def max_commutator(self) -> float:
        return max(self.commutator_norms.values())

    @property
    def passed(self) -> bool:
        return self.max_commutator <= self.tol and self.p_zero_defect <= self.tol

    def to_dict(self) -> dict:
        return {"commutator_norms": self.commutator_norms, "p_zero_defect": self.p_zero_defect,
                "tol": self.tol, "passed": self.passed}


def mask_commutator_norm(L: sp.spmatrix, mask: np.ndarray) -> float:
    """Frobenius norm of ``[L, Q]`` for the diagonal projection ``Q``; bounds the operator norm."""
    coo = sp.coo_matrix(L)
    q = mask.astype(float)
    vals = coo.data * (q[coo.col] - q[coo.row])
    return float(np.sqrt(np.sum(np.abs(vals) ** 2)))


def block_reduction_check(L: LiouvilleOperator, L0: LiouvilleOperator, kit: ProjectionKit,
                          tol: float = 1e-12) -> BlockReductionReport:
    norms = {name: mask_commutator_norm(L.matrix, getattr(kit, name))
             for name in ("P", "P_l", "P_r", "P_zero")}
    Q = kit.matrix("P_zero")
    diff = (L.matrix - L0.matrix) @ Q
    defect = float(sp.linalg.norm(diff)) if diff.nnz else 0.0
    return BlockReductionReport(norms, defect, tol)


@dataclass
class Eigensystem:
    values: np.ndarray
    vectors: np.ndarray


def eigensystem(L: LiouvilleOperator | np.ndarray | sp.spmatrix) -> Eigensystem:
    mat = L.matrix if isinstance(L, LiouvilleOperator) else L
    dense = mat.toarray() if sp.issparse(mat) else np.asarray(mat)
    vals, vecs = sla.eigh(dense)
    return Eigensystem(vals, vecs)


def align_degenerate(eig: Eigensystem, mask: np.ndarray, tol: float = DEFAULT_ZERO_TOL) -> Eigensystem:
    """Fix the basis inside every degenerate eigenspace.

    Any orthonormal basis of a degenerate eigenspace is returned by ``eigh``;
    here each cluster (consecutive gaps below ``tol``) is rotated so that its
    vectors diagonalize the compressed projector onto ``mask``. The result is
    reproducible and sorts weight on ``mask`` into as few vectors as possible.
    """
    vals, vecs = eig.values, eig.vectors.copy()
    breaks = np.flatnonzero(np.diff(vals) > tol) + 1
    for block in np.split(np.arange(len(vals)), breaks):
        if len(block) < 2:
            continue
        V = vecs[:, block]
        W = V[mask].conj().T @ V[mask]
        _, U = np.linalg.eigh(W)
        vecs[:, block] = V @ U[:, ::-1]
    return Eigensystem(vals, vecs)


def block_eigensystem(L: LiouvilleOperator, mask: np.ndarray) -> tuple[Eigensystem, np.ndarray]:
    """Eigensystem of the compression of ``L`` to a diagonal projection; returns the indices too."""
    idx = np.flatnonzero(mask)
    block = L.matrix[idx][:, idx]
    return eigensystem(block), idx


@dataclass
class KernelEntry:
    eigenvalue: float
    eigenvector: np.ndarray
    overlap_pi: float
    overlap_excited_vacuum: float
    overlap_field_excited: float

    def to_dict(self) -> dict:
        return {"eigenvalue": self.eigenvalue, "overlap_pi": self.overlap_pi,
                "overlap_excited_vacuum": self.overlap_excited_vacuum,
                "overlap_field_excited": self.overlap_field_excited}


@dataclass
class KernelReport:
    zero_tol: float
    entries: list[KernelEntry]
    smallest_abs_eigenvalue: float

    @property
    def dimension(self) -> int:
        return len(self.entries)

    def to_json(self) -> str:
        return json.dumps({"zero_tol": self.zero_tol, "dimension": self.dimension,
                           "smallest_abs_eigenvalue": self.smallest_abs_eigenvalue,
                           "entries": [e.to_dict() for e in self.entries]}, indent=2)


def kernel_report(L: LiouvilleOperator, kit: ProjectionKit, zero_tol: float = DEFAULT_ZERO_TOL,
                  eig: Eigensystem | None = None) -> KernelReport:
    """Kernel candidates of ``L`` with their weights in ``Pi``, ``Pbar_0 (x) P_Omega`` and ``Pbar_Omega``."""
    eig = eig or eigensystem(L)
    entries = []
    excited_vac = ~kit.P0_atom & kit.P_omega
    for nu, psi in zip(eig.values, eig.vectors.T):
        if abs(nu) <= zero_tol:
            entries.append(KernelEntry(
                float(nu), psi,
                float(np.linalg.norm(psi[kit.Pi])),
                float(np.linalg.norm(psi[excited_vac])),
                float(np.linalg.norm(psi[~kit.P_omega]))))
    smallest = float(np.min(np.abs(eig.values))) if len(eig.values) else np.inf
    return KernelReport(zero_tol, entries, smallest)


def evolve(L: LiouvilleOperator | Eigensystem, psi: np.ndarray, t: float) -> np.ndarray:
    """``exp(i t L) psi`` through the eigendecomposition."""
    eig = L if isinstance(L, Eigensystem) else eigensystem(L)
    coeff = eig.vectors.conj().T @ np.asarray(psi, dtype=complex)
    return eig.vectors @ (np.exp(1j * t * eig.values) * coeff)
