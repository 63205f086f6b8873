"""Fermi Golden Rule rates for ionization by thermal photons.

For a bound energy ``E`` the rate matrix is the Planck-weighted integral

    int_{-E}^{inf} d omega  omega^2 n_beta(omega) p(E) T_eps(omega, E) p(E),

with ``T_eps = c F(omega) w(H) eps / ((H - E - omega)^2 + eps^2) F(omega)^*``,
``F(omega) = sum_a g_a(omega) G_a``, ``c`` the angular factor and ``w(H)``
either the pseudo-continuum projection or the squared window mollifier.
``gamma_E`` is the smallest eigenvalue of that matrix on ``Ran p(E)``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from numpy.polynomial.legendre import leggauss

from . import atom_model as am
from .thermal_field import planck_weight

ISOTROPIC_ANGULAR_FACTOR = 4.0 * np.pi
PLANCK_TAIL = 40.0
NODES_PER_WIDTH = 10
PANELS_PER_WIDTH = 2
PANEL_ORDER = 8
MIN_PANELS = 50
CONVERGENCE_TOL = 0.01


class FgrError(ValueError):
    pass


class FgrAccuracyError(FgrError):
    """Node doubling changed the rate matrix by more than the tolerance."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class FgrParams:
    eps: float
    omega_span: float | None = None
    n_nodes: int | None = None
    scheme: str = "gauss-legendre"
    angular_factor: float = ISOTROPIC_ANGULAR_FACTOR

    def __post_init__(self):
        if not self.eps > 0:
            raise FgrError(f"eps must be positive, got {self.eps}")
        if self.scheme not in ("gauss-legendre", "trapezoid"):
            raise FgrError(f"unknown omega quadrature {self.scheme!r}")


@dataclass
class FgrModel:
    """Atom couplings and analytic form factors needed for rate quadratures.

    ``weighting`` selects ``"p_c"`` (restrict to ``Ran p(E)``, weight by the
    pseudo-continuum projection) or ``"mu2"`` (restrict to ``Ran p_Jd(E)``,
    weight by the squared mollifier).
    """

    labels: list[am.ModeLabel]
    couplings: list[np.ndarray]
    form_factors: list[Callable]
    window: am.WindowSpec
    weighting: str = "p_c"
    cluster_tol: float = am.DEFAULT_CLUSTER_TOL

    def __post_init__(self):
        if self.weighting not in ("p_c", "mu2"):
            raise FgrError(f"unknown weighting {self.weighting!r}")
        if len(self.couplings) != len(self.form_factors):
            raise FgrError("need one form factor per coupling")

    @property
    def energies(self) -> np.ndarray:
        return np.array([m.energy for m in self.labels])

    def continuum_weight(self) -> np.ndarray:
        if self.weighting == "p_c":
            return am.continuum_mask(self.labels)
        return am.mollifier_values(self.energies, self.window) ** 2

    def eigenspace(self, E: float) -> np.ndarray:
        """Indices spanning ``Ran p(E)`` (or ``Ran p_Jd(E)``)."""
        e = self.energies
        hit = (np.abs(e - E) <= self.cluster_tol) & (am.discrete_mask(self.labels) > 0)
        if self.weighting == "mu2":
            hit &= am.mode_projection(self.labels, self.window.coupled_discrete_modes) > 0
        idx = np.flatnonzero(hit)
        if not len(idx):
            raise am.EmptyProjectionError(f"no coupled bound state at energy {E}")
        return idx

    def coupled_energies(self) -> list[float]:
        levels = am.cluster_eigenvalues([m.energy for m in self.window.coupled_discrete_modes],
                                        self.cluster_tol)
        if not levels:
            raise FgrError("no coupled discrete modes: the minimal rate is undefined")
        return levels

    def scaled(self, s: float) -> "FgrModel":
        return FgrModel(self.labels, [s * G for G in self.couplings], self.form_factors,
                        self.window, self.weighting, self.cluster_tol)


def default_eps(continuum: am.ContinuumSpec, window: am.WindowSpec) -> float:
    """Geometric mean of the pseudo-continuum level spacing and the window width."""
    if continuum.n_points < 1:
        raise FgrError("no pseudo-continuum: the default Lorentzian width is undefined")
    spacing = (continuum.e_max - continuum.e_min) / continuum.n_points
    return float(np.sqrt(spacing * (window.R - window.r)))


def lorentzian(x, eps: float):
    return eps / (np.asarray(x) ** 2 + eps ** 2)


def _energies_of(H_p) -> np.ndarray:
    H_p = np.asarray(H_p)
    return np.real(np.diag(H_p)) if H_p.ndim == 2 else np.real(H_p)


def transition_kernel(omega: float, E: float, F_matrix: np.ndarray, H_p, p_weight,
                      eps: float, angular_factor: float = ISOTROPIC_ANGULAR_FACTOR) -> np.ndarray:
    """``c F (w(H) eps / ((H - E - omega)^2 + eps^2)) F^*`` for diagonal ``H``."""
    if not eps > 0:
        raise FgrError(f"eps must be positive, got {eps}")
    e = _energies_of(H_p)
    weight = np.asarray(p_weight, dtype=float)
    if weight.ndim == 2:
        weight = np.real(np.diag(weight))
    F = np.asarray(F_matrix, dtype=complex)
    mid = weight * lorentzian(e - E - omega, eps)
    T = angular_factor * (F * mid[None, :]) @ F.conj().T
    return am.hermitize(T)


def omega_nodes(E: float, beta: float, params: FgrParams, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes on ``[-E, -E + span]``: ``n`` Gauss-Legendre panels of ``PANEL_ORDER`` points, or ``n`` trapezoid points."""
    lo = -E
    if lo <= 0:
        raise FgrError(f"rate integrals start at -E and need E < 0, got E={E}")
    span = params.omega_span if params.omega_span is not None else PLANCK_TAIL / beta
    hi = lo + span
    if params.scheme == "gauss-legendre":
        x, w = leggauss(PANEL_ORDER)
        edges = np.linspace(lo, hi, n + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        return (mid[:, None] + half[:, None] * x[None, :]).ravel(), (half[:, None] * w[None, :]).ravel()
    nodes = np.linspace(lo, hi, n)
    w = np.full(n, nodes[1] - nodes[0])
    w[[0, -1]] *= 0.5
    return nodes, w


def default_node_count(beta: float, params: FgrParams) -> int:
    """Panel count (or trapezoid point count) resolving the Lorentzian width."""
    if params.n_nodes is not None:
        return int(params.n_nodes)
    span = params.omega_span if params.omega_span is not None else PLANCK_TAIL / beta
    per_width = PANELS_PER_WIDTH if params.scheme == "gauss-legendre" else NODES_PER_WIDTH
    return max(MIN_PANELS, int(np.ceil(per_width * span / params.eps)))


def rate_matrix_on_nodes(model: FgrModel, E: float, beta: float, eps: float,
                         nodes: np.ndarray, weights: np.ndarray,
                         angular_factor: float = ISOTROPIC_ANGULAR_FACTOR) -> np.ndarray:
    """Sum over the given omega nodes of the rate-matrix integrand on ``Ran p(E)``."""
    idx = model.eigenspace(E)
    e = model.energies
    cw = model.continuum_weight()
    # rows of F(omega) restricted to Ran p(E): B[q, m, k]
    gvals = np.array([np.asarray(g(nodes), dtype=complex) for g in model.form_factors])
    rows = np.array([np.asarray(G, dtype=complex)[idx, :] for G in model.couplings])
    B = np.einsum("aq,amk->qmk", gvals, rows)
    lor = cw[None, :] * lorentzian(e[None, :] - E - nodes[:, None], eps)
    scal = weights * nodes ** 2 * planck_weight(nodes, beta) * angular_factor
    M = np.einsum("q,qmk,qk,qnk->mn", scal, B, lor, B.conj())
    return am.hermitize(M)


@dataclass
class FgrMatrixResult:
    E: float
    matrix: np.ndarray
    indices: np.ndarray
    n_nodes: int
    refinement_change: float

    @property
    def gamma(self) -> float:
        return gamma_of(self.matrix)


def fgr_matrix(model: FgrModel, E: float, beta: float, params: FgrParams,
               check: bool = True) -> FgrMatrixResult:
    """Rate matrix on ``Ran p(E)``; ``check`` compares against twice the nodes."""
    n = default_node_count(beta, params)
    nodes, w = omega_nodes(E, beta, params, n)
    M = rate_matrix_on_nodes(model, E, beta, params.eps, nodes, w, params.angular_factor)
    change = 0.0
    if check:
        nodes2, w2 = omega_nodes(E, beta, params, 2 * n)
        M2 = rate_matrix_on_nodes(model, E, beta, params.eps, nodes2, w2, params.angular_factor)
        scale = np.linalg.norm(M2)
        change = float(np.linalg.norm(M2 - M) / scale) if scale > 0 else 0.0
        if change > CONVERGENCE_TOL:
            raise FgrAccuracyError(
                f"rate quadrature at E={E} not converged: doubling {n} nodes changed it by {change:.3%}",
                {"E": E, "beta": beta, "eps": params.eps, "n_nodes": n, "relative_change": change})
        M, n = M2, 2 * n
    return FgrMatrixResult(E, M, model.eigenspace(E), n, change)


def gamma_of(matrix: np.ndarray) -> float:
    """Smallest eigenvalue of a rate matrix, clipped at zero."""
    vals = np.linalg.eigvalsh(am.hermitize(np.atleast_2d(matrix)))
    return max(float(vals[0]), 0.0)


def ionization_time_estimate(gamma_E: float, lam: float) -> float:
    """``1 / (lambda^2 gamma_E)``; the proportionality constant is set to one.

    Returns ``inf`` when the rate vanishes.
    """
    if lam == 0:
        raise FgrError("coupling constant must be nonzero")
    if gamma_E <= 0:
        return float("inf")
    return 1.0 / (lam * lam * gamma_E)


@dataclass
class RateEntry:
    E: float
    gamma_E: float
    rank: int
    matrix: np.ndarray
    t_E: float | None = None
    n_nodes: int = 0

    def to_dict(self) -> dict:
        return {"E": self.E, "gamma_E": self.gamma_E, "rank": self.rank, "t_E": self.t_E,
                "n_nodes": self.n_nodes,
                "matrix": [[[float(z.real), float(z.imag)] for z in row] for row in self.matrix]}


@dataclass
class RateReport:
    beta: float
    eps: float
    weighting: str
    entries: list[RateEntry] = field(default_factory=list)

    @property
    def gamma(self) -> float:
        return min(e.gamma_E for e in self.entries)

    @property
    def fgr_condition_holds(self) -> bool:
        return self.gamma > 0

    def to_dict(self) -> dict:
        return {"beta": self.beta, "eps": self.eps, "weighting": self.weighting,
                "gamma": self.gamma, "fgr_condition_holds": self.fgr_condition_holds,
                "entries": [e.to_dict() for e in self.entries]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["E", "gamma_E", "rank", "t_E"])
        for e in self.entries:
            w.writerow([repr(e.E), repr(e.gamma_E), e.rank, repr(e.t_E)])
        return buf.getvalue()


def gamma_overall(model: FgrModel, beta: float, params: FgrParams,
                  lam: float | None = None) -> RateReport:
    """Rates for every coupled bound energy; ``gamma`` is their minimum."""
    report = RateReport(beta, params.eps, model.weighting)
    for E in model.coupled_energies():
        res = fgr_matrix(model, E, beta, params)
        g = res.gamma
        t = ionization_time_estimate(g, lam) if lam else None
        report.entries.append(RateEntry(E, g, len(res.indices), res.matrix, t, res.n_nodes))
    return report


@dataclass
class TemperatureSweep:
    E: float
    betas: np.ndarray
    gammas: np.ndarray
    slope: float
    intercept: float
    k: float
    excluded: list[float]
    bound_holds: bool

    def plot_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["beta", "log_gamma_E"])
        for b, g in zip(self.betas, self.gammas):
            if g > 0:
                w.writerow([repr(float(b)), repr(float(np.log(g)))])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"E": self.E, "betas": self.betas.tolist(), "gammas": self.gammas.tolist(),
                "slope": self.slope, "intercept": self.intercept, "k": self.k,
                "excluded_betas": self.excluded, "bound_holds": self.bound_holds}


def temperature_sweep(model: FgrModel, betas: Sequence[float], E: float, params: FgrParams) -> TemperatureSweep:
    """Rates over a beta ladder, the log-linear slope and the two-sided bound.

    ``k`` is the smallest constant with ``gamma_E <= k exp(beta E)`` at every
    sampled beta; the bound holds when also ``k exp(beta E) / (1 + beta) <= gamma_E``.
    """
    betas = np.asarray(sorted(betas), dtype=float)
    if len(betas) < 4:
        raise FgrError("temperature sweep needs at least 4 beta values")
    gammas = np.array([fgr_matrix(model, E, b, params).gamma for b in betas])
    ok = gammas > 0
    excluded = betas[~ok].tolist()
    if ok.sum() < 2:
        return TemperatureSweep(E, betas, gammas, float("nan"), float("nan"), float("nan"), excluded, False)
    slope, intercept = np.polyfit(betas[ok], np.log(gammas[ok]), 1)
    scaled = gammas[ok] * np.exp(-betas[ok] * E)
    k = float(scaled.max())
    holds = bool(np.all(k / (1.0 + betas[ok]) <= scaled) and not excluded)
    return TemperatureSweep(E, betas, gammas, float(slope), float(intercept), k, excluded, holds)


@dataclass
class BridgeRecord:
    matrix_value: float
    quadrature_value: float
    ratio: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.matrix_value >= self.quadrature_value * (1.0 - self.tol)

    def to_dict(self) -> dict:
        return {"matrix_value": self.matrix_value, "quadrature_value": self.quadrature_value,
                "ratio": self.ratio, "tol": self.tol, "passed": self.passed}


def level_shift_matrix(I: sp.spmatrix, pi_mask: np.ndarray, rbar2: np.ndarray) -> np.ndarray:
    """``Pi I Rbar^2 I Pi`` on ``Ran Pi``; ``rbar2`` is the diagonal of ``Pibar R_eps^2``."""
    X = sp.csr_matrix(I)[:, np.flatnonzero(pi_mask)]
    Y = sp.diags(rbar2) @ X
    return am.hermitize((X.conj().T @ Y).toarray())


def oracle_fgr_bound(I: sp.spmatrix, pi_mask: np.ndarray, rbar2: np.ndarray, gamma: float,
                     eps: float, tol: float = 0.15) -> BridgeRecord:
    """Compare ``lambda_min(Pi I Rbar^2 I Pi)`` with the quadrature value ``gamma / eps``."""
    M = level_shift_matrix(I, pi_mask, rbar2)
    value = float(np.linalg.eigvalsh(M)[0]) if M.size else 0.0
    target = gamma / eps
    ratio = value / target if target > 0 else float("nan")
    return BridgeRecord(value, target, ratio, tol)
