"""Grid-sampled complex and real fields on the square [-L, L)^2.

Indexing convention: ``values[i, j]`` is the sample at
``z = (-L + j*h) + 1j*(-L + i*h)``, i.e. rows run along the imaginary axis
and columns along the real axis. Every dump and every operator follows it.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.fft


def fft_workers() -> int:
    """Worker count for scipy.fft, capped by ``BDEG_THREADS`` when set."""
    env = os.environ.get("BDEG_THREADS")
    if env:
        return max(1, int(env))
    return 1


@dataclass(frozen=True)
class GridSpec:
    half_width: float
    n: int

    def __post_init__(self):
        if self.n < 16 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 16, got {self.n}")
        if self.half_width < 1:
            raise ValueError(f"half_width must be >= 1, got {self.half_width}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.n

    @property
    def axis(self) -> np.ndarray:
        return -self.half_width + np.arange(self.n) * self.spacing

    def node(self, i: int, j: int) -> complex:
        h = self.spacing
        return complex(-self.half_width + j * h, -self.half_width + i * h)

    def nodes(self) -> np.ndarray:
        ax = self.axis
        return ax[None, :] + 1j * ax[:, None]


def build_grid(half_width: float = 2.0, n: int = 512) -> GridSpec:
    return GridSpec(float(half_width), int(n))


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ComplexField:
    """Complex samples on a grid.

    ``mask`` marks the nodes where the field is defined (``None`` means
    everywhere); values outside the mask are NaN. ``extended`` permits
    non-finite entries inside the mask.
    """

    spec: GridSpec
    values: np.ndarray
    mask: np.ndarray | None = None
    extended: bool = False

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        n = self.spec.n
        if vals.shape != (n, n):
            raise ValueError(f"values shape {vals.shape} does not match grid ({n}, {n})")
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != (n, n):
                raise ValueError("mask shape does not match grid")
            object.__setattr__(self, "mask", _freeze(mask))
            inside = vals[mask]
        else:
            inside = vals
        if not self.extended and not np.all(np.isfinite(inside)):
            raise ValueError("non-finite samples in a field not flagged as extended")
        object.__setattr__(self, "values", _freeze(vals))

    @classmethod
    def from_function(cls, spec: GridSpec, fn) -> "ComplexField":
        return cls(spec, np.asarray(fn(spec.nodes()), dtype=complex) * np.ones((spec.n, spec.n)))


@dataclass(frozen=True, eq=False)
class RealField:
    """Extended-real samples (``np.inf`` allowed) on a grid."""

    spec: GridSpec
    values: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        n = self.spec.n
        if vals.shape != (n, n):
            raise ValueError(f"values shape {vals.shape} does not match grid ({n}, {n})")
        if self.mask is not None:
            object.__setattr__(self, "mask", _freeze(np.asarray(self.mask, dtype=bool)))
        object.__setattr__(self, "values", _freeze(vals))

    @classmethod
    def from_function(cls, spec: GridSpec, fn) -> "RealField":
        return cls(spec, np.asarray(fn(spec.nodes()), dtype=float) * np.ones((spec.n, spec.n)))


# regions -----------------------------------------------------------------


@dataclass(frozen=True)
class Disk:
    center: complex = 0j
    radius: float = 1.0

    def contains(self, z):
        return np.abs(z - self.center) <= self.radius

    def bbox(self):
        c = complex(self.center)
        return c.real - self.radius, c.real + self.radius, c.imag - self.radius, c.imag + self.radius

    def area(self) -> float:
        return np.pi * self.radius**2


@dataclass(frozen=True)
class Annulus:
    center: complex = 0j
    r: float = 0.5
    R: float = 1.0

    def __post_init__(self):
        if not 0 <= self.r < self.R:
            raise ValueError(f"annulus needs 0 <= r < R, got r={self.r}, R={self.R}")

    def contains(self, z):
        d = np.abs(z - self.center)
        return (d >= self.r) & (d <= self.R)

    def bbox(self):
        c = complex(self.center)
        return c.real - self.R, c.real + self.R, c.imag - self.R, c.imag + self.R

    def area(self) -> float:
        return np.pi * (self.R**2 - self.r**2)


@dataclass(frozen=True)
class WholeGrid:
    def contains(self, z):
        return np.ones(np.shape(z), dtype=bool)

    def bbox(self):
        return None


UNIT_DISK = Disk(0j, 1.0)


def region_mask(spec: GridSpec, region) -> np.ndarray:
    box = region.bbox()
    if box is not None:
        L = spec.half_width
        x0, x1, y0, y1 = box
        if x0 < -L or y0 < -L or x1 >= L or y1 >= L:
            raise ValueError(f"region {region} escapes the grid square [-{L}, {L})^2")
    return region.contains(spec.nodes())


def _values(F):
    if F.mask is None:
        return F.values, np.ones(F.values.shape, dtype=bool)
    return F.values, F.mask


def integrate(F, region=WholeGrid()):
    """Midpoint rule: sum of node values inside ``region`` times spacing^2.

    An infinite node value makes the integral infinite.
    """
    vals, defined = _values(F)
    sel = region_mask(F.spec, region)
    if np.any(sel & ~defined):
        raise ValueError("region reaches nodes where the field is undefined")
    total = vals[sel].sum()
    return total * F.spec.spacing**2


def field_norms(F, region=WholeGrid()) -> tuple[float, float, float]:
    """Return (sup, L2, L1) norms of ``|F|`` over ``region``."""
    vals, defined = _values(F)
    sel = region_mask(F.spec, region)
    if not sel.any():
        raise ValueError("empty region")
    if np.any(sel & ~defined):
        raise ValueError("region reaches nodes where the field is undefined")
    a = np.abs(vals[sel])
    h2 = F.spec.spacing**2
    return float(a.max()), float(np.sqrt((a**2).sum() * h2)), float(a.sum() * h2)


# derivatives -------------------------------------------------------------


def spectral_wavenumbers(spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    k = 2 * np.pi * np.fft.fftfreq(spec.n, d=spec.spacing)
    return k[None, :], k[:, None]


def wirtinger_derivatives(F: ComplexField, method: str = "centered_fd"):
    """Return ``(dF, dbarF)`` with dF = (F_x - i F_y)/2 and dbarF = (F_x + i F_y)/2."""
    vals = F.values
    if F.mask is not None or not np.all(np.isfinite(vals)):
        raise ValueError("wirtinger_derivatives needs finite samples on the whole grid")
    h = F.spec.spacing
    if method == "centered_fd":
        Fy, Fx = np.gradient(vals, h, edge_order=2)
    elif method == "spectral":
        kx, ky = spectral_wavenumbers(F.spec)
        hat = scipy.fft.fft2(vals, workers=fft_workers())
        Fx = scipy.fft.ifft2(1j * kx * hat, workers=fft_workers())
        Fy = scipy.fft.ifft2(1j * ky * hat, workers=fft_workers())
    else:
        raise ValueError(f"unknown derivative method {method!r}")
    d = ComplexField(F.spec, (Fx - 1j * Fy) / 2)
    dbar = ComplexField(F.spec, (Fx + 1j * Fy) / 2)
    return d, dbar


# interpolation -----------------------------------------------------------


def _cell_coords(spec: GridSpec, z):
    z = np.asarray(z, dtype=complex)
    L, h, n = spec.half_width, spec.spacing, spec.n
    u = (z.real + L) / h
    v = (z.imag + L) / h
    if np.any((u < 1) | (v < 1) | (u > n - 2) | (v > n - 2)):
        raise ValueError("interpolation point outside the grid minus a one-cell margin")
    j = np.minimum(np.floor(u).astype(int), n - 2)
    i = np.minimum(np.floor(v).astype(int), n - 2)
    return i, j, u - j, v - i


def interpolate(F, z):
    """Bilinear interpolation of ``F`` at the point(s) ``z``."""
    i, j, s, t = _cell_coords(F.spec, z)
    a = F.values
    out = ((1 - s) * (1 - t) * a[i, j] + s * (1 - t) * a[i, j + 1]
           + (1 - s) * t * a[i + 1, j] + s * t * a[i + 1, j + 1])
    if np.ndim(out) == 0:
        return out.item()
    return out


def bilinear_with_jacobian(F: ComplexField, z):
    """Bilinear value plus its x and y partial derivatives inside the cell."""
    i, j, s, t = _cell_coords(F.spec, z)
    a = F.values
    f00, f01, f10, f11 = a[i, j], a[i, j + 1], a[i + 1, j], a[i + 1, j + 1]
    val = (1 - s) * (1 - t) * f00 + s * (1 - t) * f01 + (1 - s) * t * f10 + s * t * f11
    h = F.spec.spacing
    fx = ((1 - t) * (f01 - f00) + t * (f11 - f10)) / h
    fy = ((1 - s) * (f10 - f00) + s * (f11 - f01)) / h
    return val, fx, fy


# dumps -------------------------------------------------------------------


def dump_field(F, path) -> Path:
    """Write ``F`` as CSV, row-major, one line per node; infinities as ``inf``."""
    path = Path(path)
    z = F.spec.nodes().ravel()
    v = F.values.ravel()
    if isinstance(F, ComplexField):
        header, cols = "re,im,val_re,val_im", [z.real, z.imag, v.real, v.imag]
    else:
        header, cols = "re,im,val", [z.real, z.imag, v]
    np.savetxt(path, np.column_stack(cols), fmt="%.17g", delimiter=",", header=header, comments="")
    return path


def load_field(path, spec: GridSpec):
    """Inverse of :func:`dump_field` for a known grid."""
    with Path(path).open() as fh:
        header = fh.readline().strip().split(",")
        rows = np.loadtxt(fh, delimiter=",", ndmin=2)
    n = spec.n
    if rows.shape[0] != n * n:
        raise ValueError(f"expected {n * n} rows, got {rows.shape[0]}")
    if header == ["re", "im", "val_re", "val_im"]:
        vals = (rows[:, 2] + 1j * rows[:, 3]).reshape(n, n)
        mask = np.isfinite(vals)
        return ComplexField(spec, vals, mask=None if mask.all() else mask)
    if header == ["re", "im", "val"]:
        return RealField(spec, rows[:, 2].reshape(n, n))
    raise ValueError(f"unrecognised field header {header}")
