"""Checkers for the majorant-side hypotheses and the continuity conclusions.

All verdicts here are trend based: a limsup or a divergent integral can only
be sampled, so each report carries the thresholds it was judged with.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate as spi
from scipy.stats import qmc

from .field_core import GridSpec, RealField, interpolate

DIVERGENCE_FLOOR = 0.05 * np.log(2)
CONVERGENCE_RATIO = 0.7
FMO_SPREAD = 10.0
FMO_SLOPE = -0.2


@dataclass(frozen=True)
class MajorantQ:
    """Pointwise evaluator ``w -> Q(w)`` with values in [1, inf]."""

    eval: Callable[[np.ndarray], np.ndarray]
    description: str = ""

    def __call__(self, w):
        w = np.asarray(w, dtype=complex)
        q = np.asarray(self.eval(w), dtype=float) * np.ones(w.shape)
        if np.any(q < 1 - 1e-12):
            raise ValueError(f"majorant {self.description!r} takes values below 1")
        return q.item() if q.ndim == 0 else q

    def sample(self, spec: GridSpec) -> RealField:
        return RealField(spec, self(spec.nodes()))


def constant_majorant(c: float) -> MajorantQ:
    return MajorantQ(lambda w: np.full(np.shape(w), float(c)), f"constant {c}")


def field_majorant(K: RealField, description: str = "sampled") -> MajorantQ:
    """Bilinear interpolant of a sampled field, floored at 1."""
    return MajorantQ(lambda w: np.maximum(np.real(interpolate(K, w)), 1.0), description)


def empirical_majorant(fields: list[RealField]) -> MajorantQ:
    """Pointwise max of the given K fields over a sweep."""
    # NaN marks nodes outside a field's mask; infinite K stays infinite
    vals = np.max(np.stack([np.where(np.isnan(f.values), 1.0, f.values) for f in fields]), axis=0)
    return field_majorant(RealField(fields[0].spec, np.maximum(vals, 1.0)), "empirical max over sweep")


def l1_norm(Q: MajorantQ, spec: GridSpec) -> float:
    """Integral of Q over the unit disk.

    Samples sit at cell centres (nodes shifted by half a cell in x and y), so
    a point singularity at a node such as the origin is never evaluated.
    """
    h = spec.spacing
    w = spec.nodes() + 0.5 * h * (1 + 1j)
    inside = np.abs(w) < 1
    q = Q(w[inside])
    if np.any(np.isinf(q)):
        return float("inf")
    return float(q.sum() * h * h)


def radial_mean(Q: MajorantQ, w0: complex, r: float, n_theta: int = 256) -> float:
    """Circular mean (1/2pi) int Q(w0 + r e^{i theta}) d theta, trapezoid rule."""
    if r <= 0:
        raise ValueError(f"radius must be positive, got {r}")
    if n_theta < 64:
        raise ValueError("n_theta must be at least 64")
    if abs(w0) + r > 1 + 1e-12:
        raise ValueError(f"circle |w - {w0}| = {r} leaves the unit disk")
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    return float(np.mean(Q(w0 + r * np.exp(1j * theta))))


@dataclass
class DivergenceReport:
    point: complex
    delta: float
    cutoffs: list[float]
    partial_integrals: list[float]
    increments: list[float]
    verdict: str
    limit: float | None = None
    floor: float = DIVERGENCE_FLOOR
    ratio_threshold: float = CONVERGENCE_RATIO

    def to_json(self) -> dict:
        d = asdict(self)
        d["point"] = [complex(self.point).real, complex(self.point).imag]
        return d


def default_delta(w0: complex) -> float:
    return min(0.5, (1 - abs(w0)) / 2)


def divergence_integral_check(Q: MajorantQ, w0: complex = 0j, delta: float | None = None,
                              M: int = 20, n_theta: int = 256, tail: int = 5,
                              floor: float = DIVERGENCE_FLOOR,
                              ratio_threshold: float = CONVERGENCE_RATIO) -> DivergenceReport:
    """Partial integrals of dt / (t q_{w0}(t)) down to delta * 2^-m, m = 1..M."""
    if delta is None:
        delta = default_delta(w0)
    if delta <= 0:
        raise ValueError("delta must be positive")

    def integrand(s):
        # t = e^s, dt/t = ds
        q = radial_mean(Q, w0, float(np.exp(s)), n_theta)
        if q <= 0:
            raise ValueError(f"circular mean of Q vanishes at t={np.exp(s)}")
        return 1.0 / q

    cutoffs, partial, inc = [], [], []
    total = 0.0
    upper = np.log(delta)
    for m in range(1, M + 1):
        lower = np.log(delta) - m * np.log(2)
        piece, _ = spi.quad(integrand, lower, upper, epsabs=1e-13, epsrel=1e-11, limit=200)
        total += piece
        cutoffs.append(float(np.exp(lower)))
        partial.append(total)
        inc.append(piece)
        upper = lower

    last = np.array(inc[-tail:])
    ratios = last[1:] / np.where(last[:-1] > 0, last[:-1], np.inf)
    verdict, limit = "inconclusive", None
    if np.all(ratios < ratio_threshold):
        verdict = "convergent"
        q = float(ratios[-1])
        limit = total + inc[-1] * q / (1 - q)
    elif np.all(last >= floor):
        verdict = "divergent"
    return DivergenceReport(complex(w0), float(delta), cutoffs, partial, inc, verdict, limit,
                            float(floor), float(ratio_threshold))


@dataclass
class FmoReport:
    point: complex
    epsilons: list[float]
    mean_osc: list[float]
    means: list[float]
    verdict: str
    slope: float
    thresholds: dict = field(default_factory=lambda: {"spread": FMO_SPREAD, "slope": FMO_SLOPE})

    def to_json(self) -> dict:
        d = asdict(self)
        d["point"] = [complex(self.point).real, complex(self.point).imag]
        return d


def _ball_rule(n_r: int, n_theta: int):
    s, g = np.polynomial.legendre.leggauss(n_r)
    s = 0.5 * (s + 1)
    g = 0.5 * g
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    pts = s[:, None] * np.exp(1j * theta)[None, :]
    # normalised area weights: 2 s ds d(theta) / (2 pi), summing to 1
    wts = (2 * s * g)[:, None] * np.full(n_theta, 1.0 / n_theta)[None, :]
    return pts.ravel(), wts.ravel()


def fmo_estimate(phi: Callable, x0: complex, epsilons, n_r: int = 400, n_theta: int = 128,
                 spread: float = FMO_SPREAD, slope_threshold: float = FMO_SLOPE) -> FmoReport:
    """Normalised mean oscillation of ``phi`` over the balls B(x0, eps)."""
    eps = [float(e) for e in epsilons]
    if len(eps) < 2 or any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("epsilons must be a strictly decreasing list of length >= 2")
    pts, wts = _ball_rule(n_r, n_theta)
    osc, means = [], []
    for e in eps:
        v = np.asarray(phi(x0 + e * pts), dtype=float) * np.ones(pts.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError(f"phi is not finite on B({x0}, {e})")
        ref = v[0]
        d = v - ref
        m = float(np.dot(wts, d))
        osc.append(float(np.dot(wts, np.abs(d - m))))
        means.append(m + ref)

    a = np.array(osc)
    pos = a > 0
    if pos.sum() >= 2:
        slope = float(np.polyfit(np.log(np.array(eps)[pos]), np.log(a[pos]), 1)[0])
    else:
        slope = 0.0
    tail = a[-3:]
    if not pos.any():
        verdict = "fmo_consistent"
    elif slope < slope_threshold:
        verdict = "diverging"
    elif tail.min() > 0 and tail.max() / tail.min() < spread:
        verdict = "fmo_consistent"
    else:
        verdict = "inconclusive"
    return FmoReport(complex(x0), eps, osc, means, verdict, slope,
                     {"spread": float(spread), "slope": float(slope_threshold)})


def _map_callable(f):
    if callable(f):
        return f
    fwd = f.forward
    return lambda z: interpolate(fwd, z)


def modulus_of_continuity_check(f, z0: complex, r0: float, Q_l1: float,
                                samples: int = 1000, seed: int = 0):
    """Empirical constant C in |f(z) - f(z0)| <= C ||Q||_1^(1/2) / log^(1/2)(1 + r0/|z - z0|).

    ``f`` is a QCMap (its forward samples are interpolated) or a callable.
    Returns ``(C, profile)`` with profile rows (|z - z0|, ratio) sorted by
    distance.
    """
    if not 0 < 2 * r0 < 1 - abs(z0):
        raise ValueError(f"need 0 < 2 r0 < dist(z0, unit circle); r0={r0}, z0={z0}")
    fn = _map_callable(f)
    u = qmc.Halton(d=2, scramble=True, seed=seed).random(samples)
    dist = r0 * np.sqrt(u[:, 0])
    dist = np.where(dist > 0, dist, r0 * 1e-12)
    z = z0 + dist * np.exp(2j * np.pi * u[:, 1])
    diff = np.abs(np.asarray(fn(z)) - fn(z0))
    ratio = diff * np.sqrt(np.log1p(r0 / dist)) / np.sqrt(Q_l1)
    order = np.argsort(dist)
    profile = np.column_stack([dist[order], ratio[order]])
    return float(ratio.max()), profile


def radial_profile(f, t, n_theta: int = 256, asym_tol: float = 0.01):
    """Mean of |f| over the circle |z| = t, refusing non-radial maps."""
    fn = _map_callable(f)
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    vals = np.abs(np.asarray(fn(t * np.exp(1j * theta))))
    s = float(vals.mean())
    if s > 0 and np.max(np.abs(vals - s)) > asym_tol * s:
        raise ValueError(f"map is not radial on |z| = {t}: spread {np.ptp(vals):.3g} around {s:.3g}")
    return s


def ring_modulus_check(f, Q: MajorantQ, r: float, R: float, rtol: float | None = None,
                       n_theta: int = 256):
    """Modulus of the image of the circles {|w| = t, r < t < R} against its Q bound.

    lhs = log(sigma(R)/sigma(r)) / 2pi, rhs = (1/2pi) int_r^R q_0(t) dt/t,
    with sigma the radial profile of ``f``. The default tolerance is 1e-6 for
    callables (closed forms) and 1e-2 for sampled maps.
    """
    if not 0 < r < R <= 1:
        raise ValueError(f"need 0 < r < R <= 1, got r={r}, R={R}")
    if rtol is None:
        rtol = 1e-6 if callable(f) else 1e-2
    lhs = np.log(radial_profile(f, R, n_theta) / radial_profile(f, r, n_theta)) / (2 * np.pi)
    val, _ = spi.quad(lambda t: radial_mean(Q, 0j, t, n_theta) / t, r, R, epsabs=1e-13, epsrel=1e-11,
                      limit=200)
    rhs = val / (2 * np.pi)
    return float(lhs), float(rhs), bool(lhs <= rhs * (1 + rtol))


def conditions_report(l1: float, fmo=(), divergence=(), continuity=None, ring=()) -> dict:
    return {
        "l1_norm": l1,
        "fmo": [rep.to_json() for rep in fmo],
        "divergence": [rep.to_json() for rep in divergence],
        "continuity": continuity,
        "ring_modulus": list(ring),
    }
