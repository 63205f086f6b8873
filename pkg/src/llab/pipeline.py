"""Run orchestration: each stage fills a :class:`RunReport` with tagged results and checks.

Stages take a built :class:`Model`. Ladder points are independent and are
dispatched to a thread pool (LAPACK releases the GIL); results are collected
in ladder order so reports do not depend on scheduling.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager

import numpy as np

from . import commutator_lab as cl
from . import fgr
from . import liouvillian as lv
from .model import Model
from .report import RunReport

BRIDGE_EPS_STABILITY = 0.10
BRIDGE_GRID_STABILITY = 0.05
SLOPE_TOL = 0.2
TEMPERATURE_SLOPE_TOL = 0.15
FIT_R2 = 0.99
UNIFORM_FRACTION = 0.5
VIRIAL_TOL = 1e-9
HERMITIAN_TOL = 1e-12
P0_ZERO_TOL = 1e-12


@contextmanager
def timed(report: RunReport, name: str):
    t0 = time.perf_counter()
    try:
        yield
    finally:
        report.timing[name] = time.perf_counter() - t0


def pool_map(fn, items, threads: int = 1) -> list:
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _ladder(model: Model, key: str, fallback: str) -> list[float]:
    return [float(x) for x in model.params.get(key, [model.params[fallback]])]


def run_build(model: Model, report: RunReport) -> None:
    """Dimensions, hermiticity, block reduction and the kernel of ``L_0``.

    On a finite field grid ``E_m - E_n + u`` can vanish by accident; such
    photon-carrying kernel vectors are grid artifacts and are reported apart
    from the vacuum-sector kernel, which must match the pair count.
    """
    lam = float(model.params["lambda"])
    with timed(report, "build"):
        L = model.L(lam)
        kit = model.kit
        zero = np.abs(model.L0.diagonal()) <= float(model.params["zero_tol"])
        ker_vac = int(np.sum(zero & kit.P_omega))
        accidental = int(np.sum(zero & ~kit.P_omega))
        pair_count = lv.zero_mode_count(model.labels)
        blocks = lv.block_reduction_check(L, model.L0, kit)
    s = kit.space
    report.add("build", {"lambda": lam, "beta": model.beta}, {
        "atom_dimension": s.d_p, "fock_dimension": s.fock_dim, "product_dimension": s.dimension,
        "field_modes": len(model.grid), "n_max": model.fock.n_max,
        "hermiticity_defect_L0": model.L0.hermiticity_defect(),
        "hermiticity_defect_L": L.hermiticity_defect(),
        "ker_L0_vacuum_dimension": ker_vac, "ker_L0_grid_resonances": accidental, "zero_mode_count": pair_count,
        "projection_ranks": {n: int(getattr(kit, n).sum()) for n in kit.NAMES},
        "block_reduction": blocks.to_dict()})
    report.check("L hermitian", L.hermiticity_defect() <= HERMITIAN_TOL, "build",
                 defect=L.hermiticity_defect(), tol=HERMITIAN_TOL)
    report.check("block reduction", blocks.passed, "build", max_commutator=blocks.max_commutator,
                 p_zero_defect=blocks.p_zero_defect, tol=blocks.tol)
    report.check("vacuum-sector kernel of L0 matches pair count", ker_vac == pair_count, "build",
                 ker_L0_vacuum=ker_vac, pair_count=pair_count, grid_resonances=accidental)


def bridge_point(model: Model, eps: float) -> dict:
    return model.bridge(eps).to_dict() | {"eps": eps}


def run_fgr(model: Model, report: RunReport, threads: int = 1) -> None:
    """Rates at the configured point and the bridge between the matrix and quadrature routes."""
    eps_ladder = _ladder(model, "eps_ladder", "eps")
    with timed(report, "fgr.rates"):
        rates = model.rates(lam=float(model.params["lambda"]))
    report.add("fgr.rates", {"beta": model.beta, "eps": float(model.params["eps"]),
                             "weighting": model.params["fgr_weighting"]}, rates.to_dict())
    report.check("FGR condition gamma > 0", rates.fgr_condition_holds, "fgr.rates", gamma=rates.gamma)
    with timed(report, "fgr.bridge"):
        records = pool_map(lambda e: bridge_point(model, e), eps_ladder, threads)
        fine = model.refined()
        refined = bridge_point(fine, eps_ladder[0])
    report.add("fgr.bridge", {"eps_ladder": eps_ladder, "tol": float(model.params["bridge_tol"]),
                              "refined_n_u": int(fine.config.raw["field"]["n_u"])},
               {"ladder": records, "refined": refined})
    for r in records:
        report.check(f"bridge lower bound at eps={r['eps']}", r["passed"], "fgr.bridge",
                     ratio=r["ratio"], tol=r["tol"])
    ratios = [r["ratio"] for r in records]
    if len(ratios) > 1:
        change = max(abs(b / a - 1.0) for a, b in zip(ratios, ratios[1:]))
        report.check("bridge ratio stable under eps halving", change <= BRIDGE_EPS_STABILITY, "fgr.bridge",
                     relative_change=change, tol=BRIDGE_EPS_STABILITY)
    change = abs(refined["ratio"] / ratios[0] - 1.0)
    report.check("bridge ratio stable under grid doubling", change <= BRIDGE_GRID_STABILITY, "fgr.bridge",
                 relative_change=change, tol=BRIDGE_GRID_STABILITY)


def p_block_point(model: Model, lam: float) -> dict:
    L = model.L(lam)
    kit = model.kit
    eig, _ = lv.block_eigensystem(L, kit.P)
    out = {"lambda": lam, "P_min_abs_eigenvalue": float(np.min(np.abs(eig.values)))}
    if kit.P_zero.any():
        e0, _ = lv.block_eigensystem(L, kit.P_zero)
        out["P_zero_zero_count"] = int(np.sum(np.abs(e0.values) <= P0_ZERO_TOL))
        out["P_zero_min_abs_eigenvalue"] = float(np.min(np.abs(e0.values)))
    return out


def run_spectrum(model: Model, report: RunReport, threads: int = 1) -> None:
    """Kernel of ``L_0`` against the pair count, then the ``P`` and ``P^0`` blocks along the lambda ladder."""
    zero_tol = float(model.params["zero_tol"])
    lams = _ladder(model, "lambda_ladder", "lambda")
    with timed(report, "spectrum.kernel"):
        ker0 = lv.kernel_report(model.L0, model.kit, zero_tol)
        pair_count = lv.zero_mode_count(model.labels)
        base = p_block_point(model, 0.0)
    report.add("spectrum.kernel", {"lambda": 0.0, "zero_tol": zero_tol},
               {"dimension": ker0.dimension, "zero_mode_count": pair_count,
                "entries": [e.to_dict() for e in ker0.entries]})
    report.check("kernel dimension equals pair count at lambda=0", ker0.dimension == pair_count, "spectrum.kernel",
                 dimension=ker0.dimension, pair_count=pair_count)
    with timed(report, "spectrum.ladder"):
        points = pool_map(lambda lam: p_block_point(model, lam), lams, threads)
    mins = np.array([p["P_min_abs_eigenvalue"] for p in points])
    slope = cl.loglog_slope(lams, mins) if np.all(mins > 0) and len(lams) > 1 else float("nan")
    report.add("spectrum.ladder", {"lambda_ladder": lams, "zero_tol": zero_tol},
               {"points": points, "P_loglog_slope": slope, "lambda0": base})
    report.check("P block has no eigenvalue within zero_tol", bool(np.all(mins > zero_tol)), "spectrum.ladder",
                 min_abs=float(mins.min()), zero_tol=zero_tol)
    report.check("P block smallest |eigenvalue| scales as lambda^2",
                 bool(np.isfinite(slope) and abs(slope - 2.0) <= SLOPE_TOL), "spectrum.ladder",
                 slope=slope, target=2.0, tol=SLOPE_TOL)
    if "P_zero_zero_count" in base:
        kept = [p["P_zero_zero_count"] for p in points]
        report.check("uncoupled pairs keep exact zeros in the P^0 block",
                     base["P_zero_zero_count"] > 0 and all(k == base["P_zero_zero_count"] for k in kept),
                     "spectrum.ladder", zeros_at_lambda0=base["P_zero_zero_count"], zeros_on_ladder=kept,
                     tol=P0_ZERO_TOL)


def certificate_point(model: Model, lam: float, eps: float, gamma: float) -> dict:
    return model.certificate(lam, eps, gamma=gamma).to_dict()


def run_certify(model: Model, report: RunReport) -> None:
    lam, eps = float(model.params["lambda"]), float(model.params["eps"])
    with timed(report, "certify"):
        gamma = model.rates(eps).gamma
        cert = model.certificate(lam, eps, gamma=gamma)
    report.add("certify", {"lambda": lam, "eps": eps, "theta": float(model.params["theta"]),
                           "delta_width": float(model.params["delta_width"])}, cert.to_dict())
    report.check("gap certificate margin positive", cert.margin > 0 and cert.passed, "certify",
                 margin=cert.margin, threshold=cert.threshold, tol=cert.tol)
    report.check("certificate parameters in regime", not cert.regime_flags, "certify", flags=cert.regime_flags)


def run_temperature(model: Model, report: RunReport, threads: int = 1) -> None:
    betas = _ladder(model, "beta_ladder", "beta")
    fm, params = model.fgr_model(), model.fgr_params()
    with timed(report, "sweep.beta"):
        sweeps = pool_map(lambda E: fgr.temperature_sweep(fm, betas, E, params), fm.coupled_energies(), threads)
    report.add("sweep.beta", {"beta_ladder": betas, "eps": params.eps}, [s.to_dict() for s in sweeps])
    for s in sweeps:
        rel = abs(s.slope - s.E) / abs(s.E)
        report.check(f"log gamma_E slope near E={s.E}", rel <= TEMPERATURE_SLOPE_TOL, "sweep.beta",
                     slope=s.slope, E=s.E, relative_error=rel, tol=TEMPERATURE_SLOPE_TOL)
        report.check(f"two-sided temperature bound at E={s.E}", s.bound_holds, "sweep.beta", k=s.k)
    for s in sweeps:
        report.artifacts[f"log_gamma_E_{s.E:+.6g}.csv"] = (["beta", "log_gamma_E"],
                                                          [(b, float(np.log(g))) for b, g in zip(s.betas, s.gammas)
                                                           if g > 0])


def run_sweep(model: Model, report: RunReport, threads: int = 1) -> None:
    """Temperature sweep, then certificate margins along the lambda and eps ladders with fitted slopes."""
    run_temperature(model, report, threads)
    lam, eps = float(model.params["lambda"]), float(model.params["eps"])
    lams = _ladder(model, "lambda_ladder", "lambda")
    epss = _ladder(model, "eps_ladder", "eps")
    with timed(report, "sweep.certificate"):
        gammas = {e: model.rates(e).gamma for e in sorted(set(epss) | {eps})}
        by_lam = pool_map(lambda x: certificate_point(model, x, eps, gammas[eps]), lams, threads)
        by_eps = pool_map(lambda e: certificate_point(model, lam, e, gammas[e]), epss, threads)
    m_lam = np.array([c["margin"] for c in by_lam])
    m_eps = np.array([c["margin"] for c in by_eps])
    s_lam = cl.loglog_slope(lams, m_lam) if len(lams) > 1 and np.all(m_lam > 0) else float("nan")
    s_eps = cl.loglog_slope(epss, m_eps) if len(epss) > 1 and np.all(m_eps > 0) else float("nan")
    report.add("sweep.certificate", {"lambda_ladder": lams, "eps_ladder": epss, "lambda": lam, "eps": eps},
               {"by_lambda": by_lam, "by_eps": by_eps, "lambda_slope": s_lam, "eps_slope": s_eps})
    report.check("certificate margins positive", bool(np.all(m_lam > 0) and np.all(m_eps > 0)),
                 "sweep.certificate", min_margin=float(min(m_lam.min(), m_eps.min())))
    report.check("margin scales as lambda^2", bool(abs(s_lam - 2.0) <= SLOPE_TOL), "sweep.certificate",
                 slope=s_lam, target=2.0, tol=SLOPE_TOL)
    if len(epss) > 1:
        report.check("margin scales as 1/eps", bool(abs(s_eps + 1.0) <= SLOPE_TOL), "sweep.certificate",
                     slope=s_eps, target=-1.0, tol=SLOPE_TOL)
    report.artifacts["margin_vs_lambda.csv"] = (["lambda", "certificate_margin"], list(zip(lams, m_lam)))
    report.artifacts["margin_vs_eps.csv"] = (["eps", "certificate_margin"], list(zip(epss, m_eps)))


def diagnose_point(model: Model, lam: float) -> dict:
    """Eigenvector diagnostics of ``L_lam`` with virial residuals for ``A_f`` and ``A_0``."""
    L = model.L(lam)
    eig = lv.eigensystem(L)
    ck = model.conjugate_kit(lam)
    comms = {"A_f": cl.commutator(L.matrix, ck.A_f), "A_0": cl.commutator(L.matrix, ck.A_0)}
    rep = cl.eigen_diagnostics(eig, model.kit, model.fock, comms)
    norms = {"A_f": float(np.linalg.norm(ck.A_f.toarray(), 2)),
             "A_0": float(np.linalg.norm(ck.A_0.toarray(), 2))}
    s = rep.summary()
    s["operator_norms"] = norms
    s["virial_relative"] = {k: s["max_virial"][k] / norms[k] if norms[k] > 0 else 0.0 for k in norms}
    s["lambda"] = lam
    return s


def run_diagnose(model: Model, report: RunReport, threads: int = 1) -> None:
    """Number bound fits over the lambda ladder for each beta, kernel distances and the virial gate."""
    lams = _ladder(model, "lambda_ladder", "lambda")
    betas = _ladder(model, "beta_ladder", "beta")
    fits = []
    with timed(report, "diagnose"):
        for beta in betas:
            mb = model if beta == model.beta else model.with_beta(beta)
            points = pool_map(lambda lam: diagnose_point(mb, lam), lams, threads)
            nb = [p["max_number_bound"] for p in points]
            dist = [p["min_distance_to_ker_L0_tracked"] for p in points]
            k, r2 = cl.linear_fit_through_origin(lams, nb)
            worst = max(max(p["virial_relative"].values()) for p in points)
            fits.append({"beta": beta, "k": k, "r2": r2, "points": points,
                         "min_distance": float(np.min(dist)), "max_distance": float(np.max(dist)),
                         "max_virial_relative": worst})
    report.add("diagnose", {"lambda_ladder": lams, "beta_ladder": betas,
                            "uniform_fraction": UNIFORM_FRACTION}, fits)
    for f in fits:
        report.check(f"virial gate at beta={f['beta']}", f["max_virial_relative"] <= VIRIAL_TOL, "diagnose",
                     max_relative=f["max_virial_relative"], tol=VIRIAL_TOL)
        report.check(f"number bound linear in lambda at beta={f['beta']}", f["r2"] >= FIT_R2, "diagnose",
                     k=f["k"], r2=f["r2"], tol=FIT_R2)
        report.check(f"kernel distance bounded below on the ladder at beta={f['beta']}",
                     f["min_distance"] >= UNIFORM_FRACTION * f["max_distance"], "diagnose",
                     min_distance=f["min_distance"], max_distance=f["max_distance"])
    order = sorted(fits, key=lambda f: 1.0 / f["beta"])
    ks = [f["k"] for f in order]
    if len(ks) > 1:
        report.check("fitted k nondecreasing in 1/beta", all(b >= a for a, b in zip(ks, ks[1:])), "diagnose",
                     inverse_beta=[1.0 / f["beta"] for f in order], k=ks)
