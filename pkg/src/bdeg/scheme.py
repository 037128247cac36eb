"""The truncation sweep: solve for mu_k along increasing k and diagnose convergence."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .beltrami import BeltramiCoefficient, dilatation_from_modulus, truncate
from .conditions import MajorantQ, empirical_majorant, l1_norm
from .field_core import (
    Annulus,
    ComplexField,
    Disk,
    GridSpec,
    RealField,
    integrate,
    region_mask,
    wirtinger_derivatives,
)
from .solver import QCMap, analytic_map, disk_normalized_solution

log = logging.getLogger(__name__)

# inside the smooth annulus 1/2 < |z| < 1 of the radial example
DEFAULT_TEST_DISK = Disk(0.7 + 0j, 0.19)
DEFAULT_ENERGY_REGION = Disk(0j, 0.9)
CAUCHY_ANNULUS = Annulus(0j, 0.05, 0.95)


@dataclass
class SweepConfig:
    mu: BeltramiCoefficient
    k_list: list
    spec: GridSpec
    tol: float = 1e-8
    max_iter: int = 2000
    extension: str = "reflect"
    majorant: MajorantQ | None = None
    slack: float = 1e-2
    energy_region: Disk = DEFAULT_ENERGY_REGION

    def __post_init__(self):
        ks = [float(k) for k in self.k_list]
        if not ks:
            raise ValueError("k_list is empty")
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise ValueError("k_list must be strictly increasing")
        if ks[0] < 1:
            raise ValueError("truncation levels must be >= 1")
        self.k_list = ks


@dataclass
class SweepEntry:
    k: float
    mu_k: BeltramiCoefficient
    map: QCMap
    K_inv: RealField
    energy: float
    residual: float
    converged: bool
    majorant: dict | None = None
    energy_check: tuple | None = None


@dataclass
class ConvergenceDiagnostics:
    k: list
    I1: list
    I2: list
    zeta_mean: list
    cauchy_sup: list
    slopes: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"k": self.k, "I1": self.I1, "I2": self.I2, "zeta_mean": self.zeta_mean,
                "cauchy_sup": self.cauchy_sup, "slopes": self.slopes}


@dataclass
class SweepResult:
    mu: BeltramiCoefficient
    per_k: list
    majorant: MajorantQ | None
    majorant_source: str
    diagnostics: ConvergenceDiagnostics | None = None

    @property
    def limit_estimate(self) -> ComplexField:
        return self.per_k[-1].map.forward


def _derivs(f, method="auto"):
    if isinstance(f, QCMap):
        if method == "auto" and f.derivatives is not None:
            return f.derivatives
        f = f.forward
    d, dbar = wirtinger_derivatives(f, "centered_fd")
    return d.values, dbar.values


def inverse_dilatation_field(map: QCMap, mu_k: BeltramiCoefficient) -> RealField:
    """K of g = f^{-1} at image nodes: K_{mu_k}(g(w))."""
    if map.inverse is None:
        raise ValueError("map has no inverse; call QCMap.with_inverse() first")
    inv = map.inverse
    mask = inv.mask if inv.mask is not None else np.ones(inv.values.shape, bool)
    K = np.full(inv.values.shape, np.nan)
    a = np.minimum(np.abs(mu_k(inv.values[mask])), 1.0)
    K[mask] = dilatation_from_modulus(a)
    return RealField(inv.spec, K, mask=mask)


def check_majorant(K_inv: RealField, Q, slack: float = 0.0) -> dict:
    """Fraction of unit-disk nodes with K_inv <= Q + slack, and the worst excess."""
    spec = K_inv.spec
    z = spec.nodes()
    sel = np.abs(z) < 1
    if K_inv.mask is not None:
        sel &= K_inv.mask
    if isinstance(Q, RealField):
        q = Q.values[sel]
    else:
        q = Q(z[sel])
    k = K_inv.values[sel]
    ok = k <= q + slack
    with np.errstate(invalid="ignore"):
        excess = np.where(np.isinf(q), -np.inf, k - q)
    worst = float(max(0.0, np.max(excess, initial=0.0)))
    i = int(np.argmax(excess)) if excess.size else 0
    frac = float(ok.mean()) if ok.size else 1.0
    return {"fraction": frac, "worst_violation": worst, "pass": frac == 1.0, "slack": slack,
            "nodes": int(ok.size),
            "worst_at": [float(z[sel][i].real), float(z[sel][i].imag)] if excess.size else None}


def energy_bound(map: QCMap, Q: MajorantQ, region: Disk = DEFAULT_ENERGY_REGION,
                 rhs: float | None = None) -> tuple[float, float, bool]:
    """lhs = int_C |f_z|^2, rhs = int_D Q; pass iff lhs <= 1.02 rhs."""
    fz, _ = _derivs(map)
    lhs = float(np.real(integrate(RealField(map.spec, np.abs(fz) ** 2), region)))
    if rhs is None:
        rhs = l1_norm(Q, map.spec)
    return lhs, float(rhs), bool(lhs <= rhs * 1.02)


def beltrami_residual(map, mu: BeltramiCoefficient, B: Disk = DEFAULT_TEST_DISK,
                      method: str = "auto") -> tuple[float, float]:
    """Return (|int_B zeta|, int_B |zeta|) for zeta = f_zbar - mu f_z."""
    fz, fzb = _derivs(map, method)
    spec = map.spec
    zeta = fzb - mu(spec.nodes()) * fz
    mean = abs(integrate(ComplexField(spec, zeta), B))
    total = float(np.real(integrate(RealField(spec, np.abs(zeta)), B)))
    return float(mean), total


def _sweep_entry(k, mu_k, qmap, energy_region):
    K_inv = inverse_dilatation_field(qmap, mu_k)
    fz, _ = _derivs(qmap)
    energy = float(np.real(integrate(RealField(qmap.spec, np.abs(fz) ** 2), energy_region)))
    prov = qmap.provenance
    return SweepEntry(k, mu_k, qmap, K_inv, energy, float(prov.get("residual_l2", 0.0)),
                      bool(prov.get("converged", True)))


def _finish(result: SweepResult, slack: float, energy_region: Disk):
    Q = result.majorant
    rhs = l1_norm(Q, result.per_k[0].map.spec) if Q is not None else None
    for e in result.per_k:
        if Q is None:
            continue
        e.majorant = check_majorant(e.K_inv, Q, slack)
        e.energy_check = energy_bound(e.map, Q, energy_region, rhs)
    if len(result.per_k) >= 2:
        result.diagnostics = convergence_diagnostics(result, result.per_k[-1].map)
    return result


def run_sweep(cfg: SweepConfig) -> SweepResult:
    entries = []
    for k in cfg.k_list:
        mu_k = truncate(cfg.mu, k)
        try:
            qmap = disk_normalized_solution(mu_k, cfg.spec, cfg.tol, cfg.max_iter, cfg.extension)
        except (ValueError, np.linalg.LinAlgError) as exc:
            log.warning("run_sweep: k=%g failed: %s", k, exc)
            continue
        if qmap.provenance.get("normalization_failed"):
            log.warning("run_sweep: k=%g normalisation failed", k)
            continue
        qmap = qmap.with_inverse()
        entries.append(_sweep_entry(k, mu_k, qmap, cfg.energy_region))
    if not entries:
        raise RuntimeError("every truncation level failed to solve")
    if cfg.majorant is not None:
        Q, source = cfg.majorant, "supplied"
    else:
        Q, source = empirical_majorant([e.K_inv for e in entries]), "empirical"
    return _finish(SweepResult(cfg.mu, entries, Q, source), cfg.slack, cfg.energy_region)


def analytic_sweep(params, k_list, spec: GridSpec, majorant: MajorantQ | None = None,
                   slack: float = 1e-9, energy_region: Disk = DEFAULT_ENERGY_REGION) -> SweepResult:
    """The sweep built from the closed-form f_k, g_k of the radial example."""
    from . import example as ex

    mu = ex.example_coefficient(params)
    entries = []
    for k in k_list:
        p = params.with_k(k)
        mu_k = truncate(mu, k)
        qmap = analytic_map(spec, lambda z, p=p: ex.example_fk(p, z),
                            lambda y, p=p: ex.example_gk(p, y),
                            lambda z, p=p: ex.example_fk_derivatives(p, z),
                            f"analytic f_k, alpha={p.alpha}, k={k}")
        entries.append(_sweep_entry(float(k), mu_k, qmap, energy_region))
    Q = majorant if majorant is not None else ex.example_majorant(params)
    return _finish(SweepResult(mu, entries, Q, "supplied"), slack, energy_region)


def _slope(ks, vals):
    ks, vals = np.asarray(ks, float), np.asarray(vals, float)
    pos = vals > 0
    if pos.sum() < 2:
        return None
    return float(np.polyfit(np.log(ks[pos]), np.log(vals[pos]), 1)[0])


def convergence_diagnostics(sweep: SweepResult, reference, B: Disk = DEFAULT_TEST_DISK,
                            annulus: Annulus = CAUCHY_ANNULUS) -> ConvergenceDiagnostics:
    """I1(k), I2(k), |int_B zeta_k| and successive sup differences of a sweep.

    ``reference`` stands in for the limit map: a QCMap (its stored
    derivatives are used when present) or a sampled ComplexField.
    """
    entries = sweep.per_k
    if len(entries) < 2:
        raise ValueError("convergence_diagnostics needs at least two sweep entries")
    spec = entries[0].map.spec
    z = spec.nodes()
    mu = sweep.mu(z)
    rfz, rfzb = _derivs(reference)
    ks, I1, I2, zeta = [], [], [], []
    for e in entries:
        fz, fzb = _derivs(e.map)
        muk = e.mu_k(z)
        I1.append(float(abs(integrate(ComplexField(spec, rfzb - fzb), B))))
        I2.append(float(abs(integrate(ComplexField(spec, mu * rfz - muk * fz), B))))
        zeta.append(float(abs(integrate(ComplexField(spec, fzb - mu * fz), B))))
        ks.append(e.k)
    ann = region_mask(spec, annulus)
    cs = []
    for a, b in zip(entries, entries[1:]):
        cs.append(float(np.max(np.abs(b.map.forward.values[ann] - a.map.forward.values[ann]))))
    slopes = {"I1": _slope(ks, I1), "I2": _slope(ks, I2), "zeta_mean": _slope(ks, zeta),
              "cauchy_sup": _slope(ks[1:], cs)}
    return ConvergenceDiagnostics(ks, I1, I2, zeta, cs, slopes)


def sweep_report(result: SweepResult) -> dict:
    diag = result.diagnostics
    recs = []
    for j, e in enumerate(result.per_k):
        m = e.majorant or {}
        ec = e.energy_check or (e.energy, None, None)
        recs.append({
            "k": e.k,
            "residual": e.residual,
            "converged": e.converged,
            "energy_lhs": ec[0],
            "energy_rhs": ec[1],
            "energy_pass": ec[2],
            "majorant_pass": m.get("pass"),
            "worst_violation": m.get("worst_violation"),
            "cauchy_sup": diag.cauchy_sup[j - 1] if diag is not None and j > 0 else None,
            "method": e.map.provenance.get("method"),
        })
    return {
        "coefficient": result.mu.description,
        "majorant_source": result.majorant_source,
        "majorant": result.majorant.description if result.majorant is not None else None,
        "per_k": recs,
        "diagnostics": diag.to_json() if diag is not None else None,
    }
