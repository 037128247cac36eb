"""Beltrami coefficients, maximal dilatation and truncation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .field_core import ComplexField, GridSpec, RealField, wirtinger_derivatives

# |mu| is checked against 1 with this much rounding room
_UNIT_TOL = 1e-12


def dilatation_from_modulus(a):
    """(1 + a) / (1 - a), with +inf where a == 1."""
    a = np.asarray(a, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        K = (1 + a) / (1 - a)
    K = np.where(a >= 1, np.inf, K)
    if K.ndim == 0:
        return float(K)
    return K


@dataclass(frozen=True)
class BeltramiCoefficient:
    """A pointwise evaluator ``z -> mu(z)`` (vectorised over arrays).

    ``ess_sup`` is an upper bound for ``|mu|``; 1.0 marks a degenerate
    coefficient. ``descriptor`` is the JSON-serialisable recipe.
    """

    eval: Callable[[np.ndarray], np.ndarray]
    ess_sup: float
    description: str = ""
    descriptor: dict = field(default_factory=dict)

    @property
    def degenerate(self) -> bool:
        return self.ess_sup >= 1.0

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.asarray(self.eval(z), dtype=complex) * np.ones(z.shape)
        if np.any(np.abs(out) > 1 + _UNIT_TOL):
            raise ValueError(f"Beltrami coefficient {self.description!r} has |mu| > 1")
        if out.ndim == 0:
            return complex(out)
        return out

    def dilatation(self, z):
        return dilatation_from_modulus(np.minimum(np.abs(self(z)), 1.0))

    def sample(self, spec: GridSpec) -> ComplexField:
        return ComplexField(spec, self(spec.nodes()))

    def unit_fraction(self, spec: GridSpec) -> float:
        """Fraction of unit-disk nodes where ``|mu| >= 1``."""
        z = spec.nodes()
        inside = np.abs(z) < 1
        return float(np.mean(np.abs(self(z[inside])) >= 1))


@dataclass(frozen=True)
class DilatationField:
    K: RealField


def max_dilatation(mu: BeltramiCoefficient, spec: GridSpec) -> DilatationField:
    a = np.minimum(np.abs(mu(spec.nodes())), 1.0)
    return DilatationField(RealField(spec, dilatation_from_modulus(a)))


def zero_coefficient() -> BeltramiCoefficient:
    return BeltramiCoefficient(lambda z: np.zeros(np.shape(z), complex), 0.0, "zero",
                               {"kind": "radial", "nu": 0.0})


def constant_coefficient(c: complex, radius: float = 1.0) -> BeltramiCoefficient:
    """``mu = c`` on the closed disk of the given radius, 0 outside."""
    if abs(c) >= 1:
        raise ValueError("constant coefficient needs |c| < 1")
    return BeltramiCoefficient(
        lambda z: np.where(np.abs(z) <= radius, c, 0j), abs(c), f"constant {c}",
        {"kind": "constant", "c": [complex(c).real, complex(c).imag]},
    )


def truncate(mu: BeltramiCoefficient, k: float) -> BeltramiCoefficient:
    """mu_k = mu where K_mu <= k, else 0."""
    if not k >= 1:
        raise ValueError(f"truncation level must be >= 1, got {k}")

    def ev(z, _mu=mu, _k=float(k)):
        m = _mu(z)
        return np.where(dilatation_from_modulus(np.minimum(np.abs(m), 1.0)) <= _k, m, 0j)

    desc = dict(mu.descriptor)
    desc["k"] = float(k)
    return BeltramiCoefficient(ev, (k - 1) / (k + 1), f"{mu.description} truncated at k={k}", desc)


def polar_radial_dilatation(nu: Callable, radius: float = 1.0, *, check_n: int = 2001,
                            description: str = "radial") -> BeltramiCoefficient:
    """mu(z) = exp(2i theta) * nu(|z|) for |z| <= radius, 0 outside."""
    rs = np.linspace(0.0, radius, check_n)
    with np.errstate(all="ignore"):
        samples = np.asarray(nu(rs), dtype=float) * np.ones_like(rs)
    samples = samples[np.isfinite(samples)]
    if np.any(np.abs(samples) > 1 + _UNIT_TOL):
        raise ValueError("|nu| > 1 on the sampled radii")
    ess = float(np.max(np.abs(samples), initial=0.0))

    def ev(z):
        r = np.abs(z)
        with np.errstate(all="ignore"):
            v = np.asarray(nu(r), dtype=float) * np.ones(r.shape)
        return np.where(r <= radius, np.exp(2j * np.angle(z)) * v, 0j)

    return BeltramiCoefficient(ev, ess, description, {"kind": "radial"})


def constant_radial(c: float) -> BeltramiCoefficient:
    """exp(2i theta) * c on the closed unit disk."""
    coef = polar_radial_dilatation(lambda r: np.full(np.shape(r), c), description=f"radial nu={c}")
    return BeltramiCoefficient(coef.eval, abs(c), coef.description, {"kind": "radial", "nu": float(c)})


def dilatation_of_map(f: ComplexField, method: str = "centered_fd"):
    """Complex dilatation, maximal dilatation and Jacobian of a sampled map.

    mu_f = dbar f / d f where d f != 0, else 0. Returns
    ``(mu_field, DilatationField, J)``. :func:`zero_fz_fraction` reports how
    many nodes fell under the d f == 0 convention.
    """
    d, dbar = wirtinger_derivatives(f, method)
    fz, fzb = d.values, dbar.values
    zero = fz == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = np.where(zero, 0j, fzb / np.where(zero, 1, fz))
    a = np.abs(mu)
    # |mu| > 1 marks orientation reversal; K is reported from min(|mu|, 1/|mu|)
    with np.errstate(divide="ignore"):
        a_eff = np.where(a > 1, 1 / a, a)
    K = dilatation_from_modulus(a_eff)
    J = np.abs(fz) ** 2 - np.abs(fzb) ** 2
    return ComplexField(f.spec, mu), DilatationField(RealField(f.spec, K)), RealField(f.spec, J)


def zero_fz_fraction(f: ComplexField, method: str = "centered_fd") -> float:
    d, _ = wirtinger_derivatives(f, method)
    return float(np.mean(d.values == 0))
