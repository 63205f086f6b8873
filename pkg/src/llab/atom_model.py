"""Finite-dimensional atom: discrete bound levels plus a quadrature pseudo-continuum.

Every operator lives in the eigenbasis of the atomic Hamiltonian, so the
Hamiltonian is a real diagonal matrix and time reversal is entrywise complex
conjugation. Basis order: discrete levels (with multiplicity, ascending),
then pseudo-continuum nodes (ascending).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

DEFAULT_CLUSTER_TOL = 1e-9

DISCRETE = "discrete"
PSEUDO_CONTINUUM = "pseudo_continuum"


class AtomSpecError(ValueError):
    """Rejected atom description or coupling."""


class EmptyProjectionError(ValueError):
    """No eigenvalue found within the clustering tolerance."""


@dataclass(frozen=True)
class ModeLabel:
    index: int
    kind: str
    energy: float


@dataclass(frozen=True)
class ContinuumSpec:
    """Quadrature discretization of the continuous spectrum on ``[e_min, e_max]``.

    ``nodes``/``weights`` are filled in by :meth:`build`; a continuum with
    ``n_points == 0`` is allowed and contributes nothing.
    """

    e_min: float
    e_max: float
    n_points: int
    nodes: tuple[float, ...] = ()
    weights: tuple[float, ...] = ()
    scheme: str = "gauss-legendre"

    @classmethod
    def build(cls, e_min: float, e_max: float, n_points: int,
              scheme: str = "gauss-legendre") -> "ContinuumSpec":
        if n_points == 0:
            return cls(e_min, e_max, 0, (), (), scheme)
        if not 0 < e_min < e_max:
            raise AtomSpecError(
                f"continuum needs 0 < e_min < e_max, got e_min={e_min}, e_max={e_max}")
        if scheme == "gauss-legendre":
            x, w = leggauss(n_points)
            nodes = 0.5 * (e_max - e_min) * x + 0.5 * (e_max + e_min)
            weights = 0.5 * (e_max - e_min) * w
        elif scheme == "uniform":
            if n_points < 2:
                raise AtomSpecError("uniform continuum needs at least 2 points")
            nodes = np.linspace(e_min, e_max, n_points)
            h = nodes[1] - nodes[0]
            weights = np.full(n_points, h)
            weights[[0, -1]] *= 0.5
        else:
            raise AtomSpecError(f"unknown quadrature scheme {scheme!r}")
        return cls(e_min, e_max, n_points, tuple(map(float, nodes)),
                   tuple(map(float, weights)), scheme)


@dataclass(frozen=True)
class AtomSpec:
    """Discrete levels as ``(energy, degeneracy)`` pairs plus a pseudo-continuum."""

    discrete_levels: tuple[tuple[float, int], ...]
    continuum: ContinuumSpec = field(default_factory=lambda: ContinuumSpec(1.0, 2.0, 0))

    def __post_init__(self):
        validate_atom_spec(self)

    @property
    def dimension(self) -> int:
        return sum(g for _, g in self.discrete_levels) + self.continuum.n_points

    @property
    def n_discrete(self) -> int:
        return sum(g for _, g in self.discrete_levels)


def validate_atom_spec(spec: AtomSpec) -> None:
    prev = -np.inf
    for k, (energy, deg) in enumerate(spec.discrete_levels):
        if not energy < 0:
            raise AtomSpecError(f"discrete level {k} has energy {energy} >= 0")
        if int(deg) != deg or deg < 1:
            raise AtomSpecError(f"discrete level {k} has invalid degeneracy {deg}")
        if not energy > prev:
            raise AtomSpecError(
                f"discrete level {k} (energy {energy}) is not above the previous level {prev}")
        prev = energy
    c = spec.continuum
    if c.n_points:
        if not 0 < c.e_min < c.e_max:
            raise AtomSpecError(f"continuum needs 0 < e_min < e_max, got ({c.e_min}, {c.e_max})")
        if len(c.nodes) != c.n_points or len(c.weights) != c.n_points:
            raise AtomSpecError("continuum nodes/weights do not match n_points")
        if any(w <= 0 for w in c.weights):
            raise AtomSpecError("continuum quadrature weights must be positive")
        if any(b <= a for a, b in zip(c.nodes, c.nodes[1:])):
            raise AtomSpecError("continuum nodes must be strictly increasing")


@dataclass(frozen=True)
class WindowSpec:
    """Coupled modes: discrete set ``J_d`` and continuum window ``[r, R]``.

    ``mu`` equals one on ``[r, R]`` and is switched off smoothly over
    ``smoothing_margin`` on each side.
    """

    coupled_discrete_modes: frozenset[ModeLabel]
    r: float
    R: float
    smoothing_margin: float

    def __post_init__(self):
        if not 0 < self.r < self.R:
            raise AtomSpecError(f"window needs 0 < r < R, got r={self.r}, R={self.R}")
        if not self.smoothing_margin > 0:
            raise AtomSpecError("smoothing_margin must be positive")
        if self.smoothing_margin >= self.r:
            raise AtomSpecError(
                f"smoothing_margin {self.smoothing_margin} >= r {self.r}: "
                "mollifier would reach zero energy")
        for m in self.coupled_discrete_modes:
            if m.kind != DISCRETE:
                raise AtomSpecError(f"J_d contains non-discrete mode {m}")

    @property
    def support(self) -> tuple[float, float]:
        return self.r - self.smoothing_margin, self.R + self.smoothing_margin

    def check_against(self, spec: AtomSpec) -> None:
        c = spec.continuum
        if c.n_points and not (0 < self.r and self.R < c.e_max):
            raise AtomSpecError(f"window [{self.r}, {self.R}] not inside (0, e_max={c.e_max})")


def mode_labels(spec: AtomSpec) -> list[ModeLabel]:
    labels = []
    for energy, deg in spec.discrete_levels:
        for _ in range(int(deg)):
            labels.append(ModeLabel(len(labels), DISCRETE, float(energy)))
    for energy in spec.continuum.nodes:
        labels.append(ModeLabel(len(labels), PSEUDO_CONTINUUM, float(energy)))
    return labels


def energies(spec: AtomSpec) -> np.ndarray:
    return np.array([m.energy for m in mode_labels(spec)])


def build_hamiltonian(spec: AtomSpec) -> np.ndarray:
    validate_atom_spec(spec)
    return np.diag(energies(spec)).astype(complex)


def _diagonal(H: np.ndarray) -> np.ndarray:
    H = np.asarray(H)
    if H.ndim == 1:
        return H.real.astype(float)
    off = H - np.diag(np.diag(H))
    if np.any(off != 0):
        raise AtomSpecError("operator is not diagonal in the stored basis")
    return np.diag(H).real.astype(float)


def spectral_projection(H: np.ndarray, E: float,
                        cluster_tol: float = DEFAULT_CLUSTER_TOL) -> np.ndarray:
    """Orthogonal projection onto the eigenspace of the diagonal ``H`` at ``E``.

    Levels with ``|energy - E| <= cluster_tol`` form one eigenspace.
    """
    e = _diagonal(H)
    mask = np.abs(e - E) <= cluster_tol
    if not mask.any():
        raise EmptyProjectionError(f"no eigenvalue within {cluster_tol} of {E}")
    return np.diag(mask.astype(float)).astype(complex)


def cluster_eigenvalues(values: Iterable[float],
                        cluster_tol: float = DEFAULT_CLUSTER_TOL) -> list[float]:
    """Distinct eigenvalues after merging ties within ``cluster_tol``."""
    out: list[float] = []
    for v in sorted(values):
        if not out or v - out[-1] > cluster_tol:
            out.append(float(v))
    return out


def mode_projection(labels: Sequence[ModeLabel], selected: Iterable[ModeLabel]) -> np.ndarray:
    """Diagonal 0/1 vector for the listed modes (``p_m`` sums)."""
    mask = np.zeros(len(labels))
    for m in selected:
        mask[m.index] = 1.0
    return mask


def discrete_mask(labels: Sequence[ModeLabel]) -> np.ndarray:
    return np.array([m.kind == DISCRETE for m in labels], dtype=float)


def continuum_mask(labels: Sequence[ModeLabel]) -> np.ndarray:
    return np.array([m.kind == PSEUDO_CONTINUUM for m in labels], dtype=float)


def bump_profile(s):
    """``exp(1 - 1/(1 - s^2))`` on ``|s| < 1``, zero outside; equals 1 at ``s = 0``."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


def mollifier_values(e, window: WindowSpec) -> np.ndarray:
    e = np.asarray(e, dtype=float)
    r, R, m = window.r, window.R, window.smoothing_margin
    mu = np.zeros_like(e)
    mu[(e >= r) & (e <= R)] = 1.0
    left = (e > r - m) & (e < r)
    mu[left] = bump_profile((r - e[left]) / m)
    right = (e > R) & (e < R + m)
    mu[right] = bump_profile((e[right] - R) / m)
    return mu


def mollified_indicator(H: np.ndarray, window: WindowSpec) -> np.ndarray:
    """``mu(H_p)`` as a diagonal operator; zero on bound states."""
    return np.diag(mollifier_values(_diagonal(H), window)).astype(complex)


def hermitize(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=complex)
    return 0.5 * (X + X.conj().T)


def regularize_coupling(G: np.ndarray, H: np.ndarray, window: WindowSpec) -> np.ndarray:
    """Cut a coupling down to ``J``: ``(p_Jd + mu(H)) G (p_Jd + mu(H))``."""
    G = np.asarray(G, dtype=complex)
    if not np.allclose(G, G.conj().T, atol=1e-12):
        raise AtomSpecError("coupling G is not Hermitian")
    e = _diagonal(H)
    cut = mollifier_values(e, window)
    for m in window.coupled_discrete_modes:
        if m.index >= len(e):
            raise AtomSpecError(f"J_d mode {m} outside the atom basis")
        cut[m.index] += 1.0
    return hermitize(cut[:, None] * G * cut[None, :])


def cp_conjugate(X: np.ndarray) -> np.ndarray:
    """Time reversal in the energy eigenbasis: ``C_p X C_p`` is the entrywise conjugate."""
    return np.conj(np.asarray(X))


def dipole_like_coupling(labels: Sequence[ModeLabel], weights: Sequence[float] | None = None,
                         strength: float = 1.0) -> np.ndarray:
    """Template ``G_mn = s / (1 + |E(m) - E(n)|)``.

    Pseudo-continuum rows and columns are scaled by the square root of the
    node's quadrature weight so that sums over pseudo-levels approximate
    energy integrals of the continuum matrix elements.
    """
    e = np.array([m.energy for m in labels])
    scale = np.ones(len(labels))
    if weights is not None:
        cont = [m.index for m in labels if m.kind == PSEUDO_CONTINUUM]
        if len(cont) != len(weights):
            raise AtomSpecError("weights do not match the number of pseudo-continuum modes")
        scale[cont] = np.sqrt(weights)
    G = strength / (1.0 + np.abs(e[:, None] - e[None, :]))
    return hermitize(scale[:, None] * G * scale[None, :])


def coupling_from_pairs(rows: Sequence[Sequence[Sequence[float]]]) -> np.ndarray:
    """Dense complex matrix from row-major ``[[re, im], ...]`` pairs."""
    arr = np.asarray(rows, dtype=float)
    if arr.ndim != 3 or arr.shape[-1] != 2 or arr.shape[0] != arr.shape[1]:
        raise AtomSpecError(f"coupling must be a square array of [re, im] pairs, got {arr.shape}")
    G = arr[..., 0] + 1j * arr[..., 1]
    if not np.allclose(G, G.conj().T, atol=1e-12):
        raise AtomSpecError("coupling G is not Hermitian")
    return hermitize(G)
