"""Non-degenerate Beltrami solves on the periodic square, plus the radial oracle.

The principal solution is written f = z + m*conj(z) + C(h - m), where
h = f_zbar solves h = mu * (1 + S h), S is the Beurling transform, C the
Cauchy transform and m the mean of h (the zero mode C cannot carry). Both
transforms are Fourier multipliers on the periodic grid.
"""
from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.fft
from scipy.spatial import cKDTree

from .beltrami import BeltramiCoefficient, dilatation_of_map
from .field_core import (
    ComplexField,
    GridSpec,
    bilinear_with_jacobian,
    fft_workers,
    interpolate,
    spectral_wavenumbers,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SpectralOperator:
    spec: GridSpec
    beurling: np.ndarray
    cauchy: np.ndarray


@functools.lru_cache(maxsize=8)
def spectral_operator(spec: GridSpec) -> SpectralOperator:
    kx, ky = spectral_wavenumbers(spec)
    xi = kx + 1j * ky
    nz = xi != 0
    safe = np.where(nz, xi, 1)
    # d/dzbar has symbol (i/2) xi, d/dz has symbol (i/2) conj(xi)
    beurling = np.where(nz, np.conj(safe) / safe, 0)
    cauchy = np.where(nz, 2 / (1j * safe), 0)
    beurling.setflags(write=False)
    cauchy.setflags(write=False)
    return SpectralOperator(spec, beurling, cauchy)


def _apply(mult: np.ndarray, a: np.ndarray) -> np.ndarray:
    w = fft_workers()
    return scipy.fft.ifft2(mult * scipy.fft.fft2(a, workers=w), workers=w)


def _check(S: SpectralOperator, h: ComplexField):
    if h.spec != S.spec:
        raise ValueError(f"field grid {h.spec} does not match operator grid {S.spec}")


def beurling_apply(S: SpectralOperator, h: ComplexField) -> ComplexField:
    _check(S, h)
    return ComplexField(h.spec, _apply(S.beurling, h.values))


def cauchy_apply(S: SpectralOperator, h: ComplexField) -> ComplexField:
    """Periodic antiderivative: dbar(C h) = h - mean(h), zero mean output."""
    _check(S, h)
    return ComplexField(h.spec, _apply(S.cauchy, h.values))


@dataclass(frozen=True, eq=False)
class QCMap:
    """A solved map: forward samples, optional inverse, normalisation and provenance."""

    forward: ComplexField
    inverse: ComplexField | None = None
    normalization: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    # exact spectral (f_z, f_zbar) when the solver produced them
    derivatives: tuple | None = None

    @property
    def spec(self) -> GridSpec:
        return self.forward.spec

    def __call__(self, z):
        return interpolate(self.forward, z)

    def with_inverse(self, **kw) -> "QCMap":
        inv, info = invert_map(self, return_info=True, **kw)
        prov = dict(self.provenance)
        prov["inverse"] = info
        return replace(self, inverse=inv, provenance=prov)


def normalization_record(f: ComplexField) -> dict:
    f0 = complex(interpolate(f, 0j))
    f1 = complex(interpolate(f, 1 + 0j))
    return {"f0": [f0.real, f0.imag], "f1": [f1.real, f1.imag]}


def principal_solution(mu: BeltramiCoefficient, spec: GridSpec, tol: float = 1e-8,
                       max_iter: int = 1000) -> QCMap:
    """Solve f_zbar = mu f_z with f(z) ~ z far from the support of mu.

    The additive constant is fixed by making f - z average to zero over the
    outer frame of the square (the periodic stand-in for infinity).
    """
    if mu.degenerate:
        raise ValueError(f"coefficient {mu.description!r} is degenerate (ess sup |mu| >= 1)")
    m = mu(spec.nodes())
    S = spectral_operator(spec)
    h = np.zeros((spec.n, spec.n), complex)
    history = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        h = m * (_apply(S.beurling, h) + 1)
        fz = 1 + _apply(S.beurling, h)
        res = float(np.linalg.norm(h - m * fz) / np.linalg.norm(fz))
        history.append(res)
        if res <= tol:
            converged = True
            break
    if not converged:
        log.warning("principal_solution: residual %.3g after %d iterations", history[-1], it)

    z = spec.nodes()
    mean = h.mean()
    f = z + mean * np.conj(z) + _apply(S.cauchy, h - mean)
    L = spec.half_width
    frame = np.maximum(np.abs(z.real), np.abs(z.imag)) >= 0.9 * L
    f = f - (f - z)[frame].mean()
    fwd = ComplexField(spec, f)
    prov = {
        "method": "spectral",
        "iterations": it,
        "residual_l2": history[-1] if history else 0.0,
        "residual_history": history,
        "converged": converged or not history,
        "ess_sup": mu.ess_sup,
        "coefficient": mu.description,
    }
    return QCMap(fwd, None, normalization_record(fwd), prov, (fz, h))


def reflect_coefficient(mu: BeltramiCoefficient, radius: float) -> BeltramiCoefficient:
    """Extend mu from the unit disk so solutions satisfy f(1/conj z) = 1/conj f(z).

    Outside the disk mu(z) = (z/conj z)^2 conj(mu(1/conj z)), cut off beyond
    ``radius``.
    """

    def ev(z, _mu=mu, _R=float(radius)):
        z = np.asarray(z, complex)
        r = np.abs(z)
        out = np.zeros(z.shape, complex)
        inner = r <= 1
        out[inner] = _mu(z[inner])
        ring = (r > 1) & (r <= _R)
        zr = z[ring]
        out[ring] = (zr / np.conj(zr)) ** 2 * np.conj(_mu(1 / np.conj(zr)))
        return out

    return BeltramiCoefficient(ev, mu.ess_sup, f"{mu.description} reflected to r<={radius}",
                               dict(mu.descriptor))


def _fit_circle(w: np.ndarray):
    # algebraic (Kasa) fit: |w|^2 = 2 Re(conj(c) w) + (s^2 - |c|^2)
    A = np.column_stack([2 * w.real, 2 * w.imag, np.ones(w.size)])
    sol, *_ = np.linalg.lstsq(A, np.abs(w) ** 2, rcond=None)
    c = sol[0] + 1j * sol[1]
    s = np.sqrt(sol[2] + abs(c) ** 2)
    return c, float(s)


def boundary_defect(f: ComplexField, n_theta: int = 1024) -> float:
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    return float(np.max(np.abs(np.abs(interpolate(f, np.exp(1j * theta))) - 1)))


def disk_normalized_solution(mu: BeltramiCoefficient, spec: GridSpec, tol: float = 1e-8,
                             max_iter: int = 1000, extension: str = "reflect",
                             extension_radius: float | None = None) -> QCMap:
    """Self-map of the unit disk solving the Beltrami equation, f(0)=0, f(1)=1."""
    if extension == "reflect":
        R = spec.half_width if extension_radius is None else extension_radius
        ext = reflect_coefficient(mu, R)
    elif extension == "zero":
        ext = mu
    else:
        raise ValueError(f"unknown extension {extension!r}")
    sol = principal_solution(ext, spec, tol, max_iter)
    F = sol.forward.values

    theta = 2 * np.pi * np.arange(1024) / 1024
    c, s = _fit_circle(interpolate(sol.forward, np.exp(1j * theta)))
    W = (F - c) / s
    a = complex(interpolate(ComplexField(spec, W), 0j))
    prov = dict(sol.provenance)
    prov.update(extension=extension, circle_center=[c.real, c.imag], circle_radius=s)
    if abs(a) >= 1:
        prov["normalization_failed"] = True
        log.warning("disk_normalized_solution: |f(0)| = %.3g >= 1 after circle fit", abs(a))
        fwd = ComplexField(spec, W)
        return QCMap(fwd, None, normalization_record(fwd), prov)

    # Moebius w -> (w - a)/(1 - conj(a) w); nodes too close to its pole keep the affine part
    denom = 1 - np.conj(a) * W
    safe = np.abs(denom) > 1e-3
    M = np.where(safe, (W - a) / np.where(safe, denom, 1), W - a)
    u = complex(interpolate(ComplexField(spec, M), 1 + 0j))
    rot = abs(u) / u
    f = rot * M
    # chain rule: dM/dW = (1 - |a|^2) / denom^2, W = (F - c)/s
    dM = np.where(safe, (1 - abs(a) ** 2) / np.where(safe, denom, 1) ** 2, 1.0)
    fz, fzb = sol.derivatives
    derivs = (rot * dM * fz / s, rot * dM * fzb / s)
    fwd = ComplexField(spec, f)
    prov.update(normalization_failed=False, moebius_a=[a.real, a.imag],
                boundary_defect=boundary_defect(fwd))
    return QCMap(fwd, None, normalization_record(fwd), prov, derivs)


# radial oracle -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RadialSolution:
    """rho(r) of the radial map f = (z/|z|) rho(|z|), on an ascending mesh."""

    r: np.ndarray
    rho: np.ndarray
    degeneracy_radius: float | None
    step: float
    inner_exponent: float

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        r0, rho0 = self.r[0], self.rho[0]
        out = np.interp(r, self.r, self.rho)
        with np.errstate(divide="ignore", invalid="ignore"):
            tail = rho0 * np.where(r > 0, r / r0, 0.0) ** self.inner_exponent
        out = np.where(r < r0, tail, out)
        out = np.where(r > 1, r, out)
        return out.item() if out.ndim == 0 else out

    def map(self, z):
        z = np.asarray(z, dtype=complex)
        r = np.abs(z)
        with np.errstate(invalid="ignore", divide="ignore"):
            e = np.where(r > 0, z / np.where(r > 0, r, 1), 1)
        out = e * self(r)
        return out.item() if np.ndim(out) == 0 else out

    def to_qcmap(self, spec: GridSpec) -> QCMap:
        fwd = ComplexField(spec, self.map(spec.nodes()))
        prov = {"method": "radial", "iterations": int(self.r.size), "residual_l2": 0.0,
                "degeneracy_radius": self.degeneracy_radius, "step": self.step}
        return QCMap(fwd, None, normalization_record(fwd), prov)


def radial_solve(nu: Callable, step: float = 1e-4, r_min: float | None = None,
                 degeneracy_tol: float = 1e-9) -> RadialSolution:
    """Integrate rho'/rho = (1 + nu)/((1 - nu) r) inward from rho(1) = 1 with RK4.

    Works with y = log rho. Integration stops at the first radius where
    |nu| comes within ``degeneracy_tol`` of 1 or the log-derivative is no
    longer resolved by the step (step * rate > 1); rho is 0 below it.
    """
    if r_min is None:
        r_min = step
    n_steps = int(round((1 - r_min) / step))
    h = -step

    def rate(r):
        v = float(nu(r))
        if abs(v) >= 1 - degeneracy_tol:
            return None
        return (1 + v) / ((1 - v) * r)

    rs = [1.0]
    ys = [0.0]
    degen = None
    r, y = 1.0, 0.0
    # stage values are one-sided limits from inside each step, so a nu that is
    # piecewise on mesh nodes (e.g. defined on the open interval r < 1) is
    # integrated with its interior values
    eps = 1e-9 * step
    for _ in range(n_steps):
        k1 = rate(r - eps)
        k2 = rate(r + h / 2)
        k4 = rate(r + h + eps)
        if k1 is None or k2 is None or k4 is None or step * max(abs(k1), abs(k2), abs(k4)) > 1:
            degen = r
            break
        k3 = k2  # rate does not depend on y
        y = y + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6
        r = 1.0 - len(rs) * step
        rs.append(r)
        ys.append(y)
    r_arr = np.array(rs[::-1])
    rho = np.exp(np.array(ys[::-1]))
    if degen is not None:
        log.info("radial_solve: degenerate at r = %.6g", degen)
        r_arr = np.concatenate([[0.0, degen * (1 - 1e-12)], r_arr])
        rho = np.concatenate([[0.0, 0.0], rho])
        expo = 1.0
    else:
        k = rate(r_arr[0])
        expo = k * r_arr[0]
    return RadialSolution(r_arr, rho, degen, step, float(expo))


def radial_nu(mu: BeltramiCoefficient) -> Callable:
    """nu(r) of a coefficient of the form exp(2i theta) nu(r), read along the positive axis."""
    return lambda r: np.real(mu(np.asarray(r, dtype=float) + 0j))


# inversion ---------------------------------------------------------------


def invert_map(f: QCMap, target_radius: float = 1.0, tol: float = 1e-10, max_iter: int = 40,
               return_info: bool = False):
    """Sample g = f^{-1} at the grid nodes with |w| <= target_radius.

    Newton iteration on the bilinear interpolant of the forward samples,
    seeded with the node whose image is nearest. Nodes outside the target
    disk are NaN and excluded by the returned field's mask.
    """
    F = f.forward
    spec = F.spec
    L, hs, n = spec.half_width, spec.spacing, spec.n
    z = spec.nodes()
    _, K, J = dilatation_of_map(F)
    interior = np.abs(z) < 1
    jac_ok = float(np.mean(J.values[interior] > 0))
    if jac_ok < 0.99:
        log.warning("invert_map: Jacobian positive on only %.1f%% of interior nodes", 100 * jac_ok)

    src = np.abs(z) <= 1 + 3 * hs
    src_z = z[src]
    src_w = F.values[src]
    tree = cKDTree(np.column_stack([src_w.real, src_w.imag]))
    targets = np.abs(z) <= target_radius
    w = z[targets]
    _, idx = tree.query(np.column_stack([w.real, w.imag]))
    cur = src_z[idx].copy()

    lo, hi = -L + hs * (1 + 1e-9), -L + hs * (n - 2) - 1e-9 * hs
    scale = max(1.0, float(np.max(np.abs(src_w))))
    err = np.full(w.shape, np.inf)
    for _ in range(max_iter):
        val, fx, fy = bilinear_with_jacobian(F, cur)
        r = val - w
        err = np.abs(r)
        active = err > tol * scale
        if not active.any():
            break
        a, b, c, d = fx.real, fy.real, fx.imag, fy.imag
        det = a * d - b * c
        det = np.where(np.abs(det) > 1e-300, det, 1e-300)
        dx = (d * r.real - b * r.imag) / det
        dy = (-c * r.real + a * r.imag) / det
        step = dx + 1j * dy
        # at most one cell per iteration keeps Newton inside the local patch
        big = np.abs(step) > hs
        step = np.where(big, step / np.abs(np.where(big, step, 1)) * hs, step)
        nxt = cur - np.where(active, step, 0)
        cur = np.clip(nxt.real, lo, hi) + 1j * np.clip(nxt.imag, lo, hi)
    val, _, _ = bilinear_with_jacobian(F, cur)
    err = np.abs(val - w)
    ok = err <= 1e3 * tol * scale
    frac_fail = float(1 - ok.mean()) if ok.size else 0.0
    vals = np.full((n, n), np.nan + 0j)
    vals[targets] = cur
    info = {"newton_failed_fraction": frac_fail, "reliable": frac_fail <= 0.01,
            "max_residual": float(err.max()) if err.size else 0.0, "jacobian_positive_fraction": jac_ok}
    if not info["reliable"]:
        log.warning("invert_map: Newton failed at %.2f%% of nodes", 100 * frac_fail)
    inv = ComplexField(spec, vals, mask=targets)
    return (inv, info) if return_info else inv


def identity_map(spec: GridSpec) -> QCMap:
    fwd = ComplexField(spec, spec.nodes())
    ones = np.ones((spec.n, spec.n), complex)
    return QCMap(fwd, None, normalization_record(fwd),
                 {"method": "analytic", "iterations": 0, "residual_l2": 0.0},
                 (ones, np.zeros_like(ones)))


def analytic_map(spec: GridSpec, forward: Callable, inverse: Callable | None = None,
                 derivatives: Callable | None = None, description: str = "") -> QCMap:
    """Sample closed-form forward (and inverse) maps on a grid."""
    z = spec.nodes()
    fwd = ComplexField(spec, forward(z))
    inv = None
    if inverse is not None:
        mask = np.abs(z) <= 1
        vals = np.where(mask, inverse(z), np.nan)
        inv = ComplexField(spec, vals, mask=mask)
    derivs = None
    if derivatives is not None:
        fz, fzb = derivatives(z)
        derivs = (np.asarray(fz, complex), np.asarray(fzb, complex))
    prov = {"method": "analytic", "iterations": 0, "residual_l2": 0.0, "description": description}
    return QCMap(fwd, inv, normalization_record(fwd), prov, derivs)
