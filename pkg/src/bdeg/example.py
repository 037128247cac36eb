"""Closed forms of the degenerate radial example.

mu(z) = exp(2i theta) (2r - a(2r-1)) / (2r + a(2r-1)) on 1/2 < r < 1 and 0
elsewhere; its solution f(z) = (z/|z|)(2|z|-1)^(1/a) collapses the disk
|z| <= 1/2 to the origin. Truncating mu at level k gives homeomorphic maps
f_k with inverses g_k, all radial, all available here in closed form.

Every map is continued outside the unit disk by the identity (all of them fix
the unit circle pointwise), so they can be sampled on a grid square.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .beltrami import BeltramiCoefficient, dilatation_from_modulus, truncate
from .conditions import MajorantQ


@dataclass(frozen=True)
class ExampleParams:
    alpha: float = 1.0
    p: float = 1.0
    k: float | None = None

    def __post_init__(self):
        if self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        # Q is integrable iff alpha < 2; alpha * p < 2 is reported, not enforced
        if not 0 < self.alpha < 2:
            raise ValueError(f"alpha must lie in (0, 2), got {self.alpha}")
        if self.k is not None and self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")

    def with_k(self, k: float) -> "ExampleParams":
        return ExampleParams(self.alpha, self.p, k)

    def _need_k(self) -> float:
        if self.k is None:
            raise ValueError("truncation level k is not set")
        if self.k * self.alpha <= 1:
            raise ValueError(f"k*alpha must exceed 1 (k={self.k}, alpha={self.alpha})")
        return self.k

    @property
    def R_k(self) -> float:
        """Radius of the truncation circle, (1/2) k a / (k a - 1)."""
        ka = self._need_k() * self.alpha
        return 0.5 * ka / (ka - 1)

    @property
    def rho_k(self) -> float:
        """Image radius of the truncation circle, (k a - 1)^(-1/a)."""
        ka = self._need_k() * self.alpha
        return (ka - 1) ** (-1 / self.alpha)


def _polar(z):
    z = np.asarray(z, dtype=complex)
    r = np.abs(z)
    with np.errstate(invalid="ignore", divide="ignore"):
        e = np.where(r > 0, z / np.where(r > 0, r, 1), 1.0)
    return z, r, e


def _out(x):
    return x.item() if np.ndim(x) == 0 else x


def example_nu(params: ExampleParams, r):
    r = np.asarray(r, dtype=float)
    a = params.alpha
    with np.errstate(invalid="ignore", divide="ignore"):
        v = (2 * r - a * (2 * r - 1)) / (2 * r + a * (2 * r - 1))
    return np.where((r > 0.5) & (r < 1), v, 0.0)


def example_mu(params: ExampleParams, z):
    z, r, e = _polar(z)
    return _out(e**2 * example_nu(params, r))


def example_K(params: ExampleParams, z):
    _, r, _ = _polar(z)
    a = params.alpha
    inside = (r > 0.5) & (r < 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        K = np.where(inside, 4 * r / (2 * a * (2 * r - 1)), 1.0)
    return _out(K)


def example_rho(params: ExampleParams, r):
    """Radial profile of the untruncated solution."""
    r = np.asarray(r, dtype=float)
    with np.errstate(invalid="ignore"):
        rho = np.where(r > 0.5, np.clip(2 * r - 1, 0, None) ** (1 / params.alpha), 0.0)
    return np.where(r > 1, r, rho)


def example_f(params: ExampleParams, z):
    z, r, e = _polar(z)
    return _out(e * example_rho(params, r))


def example_rho_k(params: ExampleParams, r):
    r = np.asarray(r, dtype=float)
    R, rho = params.R_k, params.rho_k
    with np.errstate(invalid="ignore"):
        outer = np.clip(2 * r - 1, 0, None) ** (1 / params.alpha)
    prof = np.where(r > R, outer, r * rho / R)
    return np.where(r > 1, r, prof)


def example_sigma_k(params: ExampleParams, t):
    """Radial profile of g_k."""
    t = np.asarray(t, dtype=float)
    R, rho = params.R_k, params.rho_k
    prof = np.where(t > rho, (t**params.alpha + 1) / 2, t * R / rho)
    return np.where(t > 1, t, prof)


def example_fk(params: ExampleParams, z):
    z, r, e = _polar(z)
    return _out(e * example_rho_k(params, r))


def example_gk(params: ExampleParams, y):
    y, t, e = _polar(y)
    return _out(e * example_sigma_k(params, t))


def example_fk_derivatives(params: ExampleParams, z):
    """Exact (f_z, f_zbar) of f_k away from the kink circles."""
    z, r, e = _polar(z)
    R, rho, a = params.R_k, params.rho_k, params.alpha
    with np.errstate(invalid="ignore", divide="ignore"):
        base = np.clip(2 * r - 1, 1e-300, None)
        rho_r = np.where(r > R, base ** (1 / a), rho / R)
        drho = np.where(r > R, (2 / a) * base ** (1 / a - 1), rho / R)
        ratio = np.where(r > R, rho_r / np.where(r > 0, r, 1), rho / R)
    drho = np.where(r > 1, 1.0, drho)
    ratio = np.where(r > 1, 1.0, ratio)
    return _out((drho + ratio) / 2 + 0j), _out(e**2 * (drho - ratio) / 2)


def example_f_derivatives(params: ExampleParams, z):
    """Exact (f_z, f_zbar) of the untruncated solution (zero on |z| <= 1/2)."""
    z, r, e = _polar(z)
    a = params.alpha
    inside = (r > 0.5) & (r <= 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        base = np.clip(2 * r - 1, 1e-300, None)
        drho = np.where(inside, (2 / a) * base ** (1 / a - 1), 0.0)
        ratio = np.where(inside, base ** (1 / a) / np.where(r > 0, r, 1), 0.0)
    drho = np.where(r > 1, 1.0, drho)
    ratio = np.where(r > 1, 1.0, ratio)
    return _out((drho + ratio) / 2 + 0j), _out(e**2 * (drho - ratio) / 2)


def example_inverse_dilatation(params: ExampleParams, y):
    """K of g_k: (|y|^a + 1) / (a |y|^a) for rho_k < |y| < 1, else 1."""
    _, t, _ = _polar(y)
    a, rho = params.alpha, params.rho_k
    with np.errstate(invalid="ignore", divide="ignore"):
        K = np.where((t > rho) & (t < 1), (t**a + 1) / (a * t**a), 1.0)
    return _out(K)


def example_Q(params: ExampleParams, y):
    """The majorant (|y|^a + 1) / (a |y|^a); +inf at the origin."""
    _, t, _ = _polar(y)
    a = params.alpha
    with np.errstate(divide="ignore", invalid="ignore"):
        Q = np.where(t > 0, (t**a + 1) / (a * np.where(t > 0, t, 1) ** a), np.inf)
    return _out(Q)


def example_majorant(params: ExampleParams) -> MajorantQ:
    return MajorantQ(lambda w: example_Q(params, w), f"example Q, alpha={params.alpha}")


def example_q_l1(params: ExampleParams) -> dict:
    """Closed-form L1 norm of Q over the unit disk, plus the L^p flag."""
    a = params.alpha
    l1 = (2 * np.pi / a) * (0.5 + 1 / (2 - a))
    p_ok = a * params.p < 2
    out = {"l1": float(l1), "p": params.p, "p_integrable": bool(p_ok)}
    if not p_ok:
        out["flag"] = "p-integrability unavailable"
    return out


def example_coefficient(params: ExampleParams) -> BeltramiCoefficient:
    """The degenerate coefficient (ess sup |mu| = 1)."""
    return BeltramiCoefficient(
        lambda z: example_mu(params, z), 1.0, f"example alpha={params.alpha}",
        {"kind": "example", "alpha": params.alpha},
    )


def example_truncated(params: ExampleParams) -> BeltramiCoefficient:
    return truncate(example_coefficient(params), params._need_k())


def example_dilatation_via_mu(params: ExampleParams, z):
    return dilatation_from_modulus(np.minimum(np.abs(example_mu(params, z)), 1.0))
