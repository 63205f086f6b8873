"""Assemble every operator of a run from a validated configuration."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import atom_model as am
from . import commutator_lab as cl
from . import fgr
from . import liouvillian as lv
from . import thermal_field as tf
from .config import RunConfig


@dataclass
class Model:
    config: RunConfig
    spec: am.AtomSpec
    labels: list[am.ModeLabel]
    H: np.ndarray
    window: am.WindowSpec
    couplings: list[np.ndarray]
    templates: list[tf.PowerExpTemplate]
    grid: tf.DoubledGrid
    fock: tf.FockSpace

    @property
    def params(self) -> dict:
        return self.config.params

    @property
    def beta(self) -> float:
        return float(self.params["beta"])

    @property
    def angular_factor(self) -> float:
        return float(self.params.get("angular_factor", lv.ISOTROPIC_ANGULAR_FACTOR))

    @property
    def energies(self) -> np.ndarray:
        return np.real(np.diag(self.H))

    @property
    def r_effective(self) -> float:
        """Lower edge of the mollifier support, the distance of the window from zero."""
        return self.window.support[0]

    @cached_property
    def form_factors(self) -> list[tf.FormFactor]:
        return [t.sample(self.grid.positive) for t in self.templates]

    @cached_property
    def L0(self) -> lv.LiouvilleOperator:
        return lv.assemble_L0(self.H, tf.second_quantize(self.grid.nodes, self.fock))

    @cached_property
    def I(self) -> lv.LiouvilleOperator:
        return lv.assemble_interaction(self.couplings, self.form_factors, self.beta, self.fock,
                                       self.angular_factor)

    def L(self, lam: float) -> lv.LiouvilleOperator:
        return lv.assemble_L(self.L0, self.I, lam, {"beta": self.beta})

    @cached_property
    def kit(self) -> lv.ProjectionKit:
        return lv.projection_kit(self.labels, self.window, self.fock, float(self.params["delta_width"]),
                                 self.L0)

    @cached_property
    def A_f(self):
        return cl.build_A_f(self.L0.space, self.fock)

    def fgr_model(self, weighting: str | None = None) -> fgr.FgrModel:
        return fgr.FgrModel(self.labels, self.couplings, list(self.templates), self.window,
                            weighting or self.params["fgr_weighting"])

    def fgr_params(self, eps: float | None = None) -> fgr.FgrParams:
        return fgr.FgrParams(eps if eps is not None else float(self.params["eps"]),
                             angular_factor=self.angular_factor)

    def rates(self, eps: float | None = None, beta: float | None = None, lam: float | None = None) -> fgr.RateReport:
        return fgr.gamma_overall(self.fgr_model(), beta if beta is not None else self.beta,
                                 self.fgr_params(eps), lam)

    def conjugate_kit(self, lam: float, eps: float | None = None, theta: float | None = None) -> cl.ConjugateKit:
        eps = eps if eps is not None else float(self.params["eps"])
        theta = theta if theta is not None else float(self.params["theta"])
        return cl.conjugate_kit(self.L(lam), self.L0, self.I, self.kit, self.fock, theta, eps, lam)

    def bridge(self, eps: float | None = None) -> fgr.BridgeRecord:
        eps = eps if eps is not None else float(self.params["eps"])
        gamma = self.rates(eps).gamma
        rbar2 = cl.resolvent_squared(self.L0, eps) * (~self.kit.Pi)
        return fgr.oracle_fgr_bound(self.I.matrix, self.kit.Pi, rbar2, gamma, eps,
                                    float(self.params["bridge_tol"]))

    def certificate(self, lam: float, eps: float | None = None, theta: float | None = None,
                    gamma: float | None = None) -> cl.CertificateReport:
        eps = eps if eps is not None else float(self.params["eps"])
        theta = theta if theta is not None else float(self.params["theta"])
        gamma = gamma if gamma is not None else self.rates(eps).gamma
        L = self.L(lam)
        ck = cl.conjugate_kit(L, self.L0, self.I, self.kit, self.fock, theta, eps, lam)
        certs = cl.assemble_certificates(L, self.kit, ck, None, self.energies, lam)
        return cl.certify_gap(certs.M0, self.kit, gamma, theta, lam, eps,
                              float(self.params["certificate_tol"]), self.r_effective)

    def with_beta(self, beta: float) -> "Model":
        return build_model(self.config.with_params(beta=beta))

    def refined(self, factor: int = 2) -> "Model":
        f = self.config.raw["field"]
        return build_model(self.config.with_field(n_u=int(f["n_u"]) * factor))


def _coupling_matrix(entry: dict, labels, spec: am.AtomSpec) -> np.ndarray:
    if "matrix" in entry:
        G = am.coupling_from_pairs(entry["matrix"])
    else:
        G = am.dipole_like_coupling(labels, spec.continuum.weights, entry.get("strength", 1.0))
    if entry.get("zero_discrete_block", False):
        disc = am.discrete_mask(labels).astype(bool)
        G[np.ix_(disc, disc)] = 0.0
    for m in entry.get("decouple_modes", []):
        G[m, :] = 0.0
        G[:, m] = 0.0
    return G


def build_model(config: RunConfig) -> Model:
    raw = config.raw
    a = raw["atom"]
    c = a["continuum"]
    spec = am.AtomSpec(tuple((float(e), int(g)) for e, g in a["discrete_levels"]),
                       am.ContinuumSpec.build(c["e_min"], c["e_max"], c["n_points"],
                                              c.get("scheme", "gauss-legendre")))
    labels = am.mode_labels(spec)
    H = am.build_hamiltonian(spec)
    w = raw["window"]
    discrete = [m for m in labels if m.kind == am.DISCRETE]
    coupled = discrete if w["coupled_discrete"] == "all" else [discrete[i] for i in w["coupled_discrete"]]
    window = am.WindowSpec(frozenset(coupled), w["r"], w["R"], w["smoothing_margin"])
    window.check_against(spec)
    couplings, templates = [], []
    for entry in raw["couplings"]:
        G = _coupling_matrix(entry, labels, spec)
        couplings.append(am.regularize_coupling(G, H, window))
        ff = entry["form_factor"]
        templates.append(tf.PowerExpTemplate(ff["p"], ff["cutoff"], ff.get("amplitude", 1.0),
                                             ff.get("uv_exponent", 4.0)))
    f = raw["field"]
    grid = tf.DoubledGrid.uniform(f["u_max"], f["n_u"])
    fock = tf.FockSpace(grid, f["n_max"])
    dim = len(labels) ** 2 * fock.dimension
    if dim > 40000:
        warnings.warn(f"product space dimension {dim} is large for dense diagnostics", stacklevel=2)
    return Model(config, spec, labels, H, window, couplings, templates, grid, fock)
