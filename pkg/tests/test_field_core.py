import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bdeg.field_core import (
    Annulus,
    ComplexField,
    Disk,
    RealField,
    WholeGrid,
    build_grid,
    dump_field,
    field_norms,
    fft_workers,
    integrate,
    interpolate,
    load_field,
    region_mask,
    wirtinger_derivatives,
)


def test_grid_spacing():
    assert build_grid(2.0, 16).spacing == 0.25
    assert build_grid(2.0, 512).spacing == 0.0078125


def test_origin_is_exact_node():
    spec = build_grid(1.0, 16)
    assert spec.node(8, 8) == 0j
    assert spec.nodes()[8, 8] == 0j


def test_node_layout():
    spec = build_grid(2.0, 16)
    z = spec.nodes()
    assert z[0, 0] == -2 - 2j
    # j runs along x, i along y
    assert z[0, 1] == -2 + 0.25 - 2j
    assert z[1, 0] == -2 + (-2 + 0.25) * 1j


@pytest.mark.parametrize("L,n", [(2.0, 15), (2.0, 8), (0.5, 16), (2.0, 100)])
def test_grid_rejects_bad_parameters(L, n):
    with pytest.raises(ValueError):
        build_grid(L, n)


def test_fields_are_read_only():
    spec = build_grid(2.0, 16)
    F = ComplexField(spec, spec.nodes())
    with pytest.raises(ValueError):
        F.values[0, 0] = 1
    with pytest.raises(ValueError):
        ComplexField(spec, np.zeros((8, 8)))


def test_fft_workers_env(monkeypatch):
    monkeypatch.setenv("BDEG_THREADS", "3")
    assert fft_workers() == 3
    monkeypatch.delenv("BDEG_THREADS")
    assert fft_workers() >= 1


@pytest.mark.parametrize("method", ["centered_fd", "spectral"])
def test_wirtinger_identity(method):
    spec = build_grid(2.0, 64)
    d, dbar = wirtinger_derivatives(ComplexField.from_function(spec, lambda z: z), method)
    inner = slice(1, -1)
    if method == "centered_fd":
        assert np.allclose(d.values[inner, inner], 1, atol=1e-12)
        assert np.allclose(dbar.values[inner, inner], 0, atol=1e-12)


def test_wirtinger_conjugate_and_affine():
    spec = build_grid(2.0, 64)
    d, dbar = wirtinger_derivatives(ComplexField.from_function(spec, np.conj))
    assert np.allclose(d.values, 0, atol=1e-12)
    assert np.allclose(dbar.values, 1, atol=1e-12)
    d, dbar = wirtinger_derivatives(ComplexField.from_function(spec, lambda z: z + 0.3 * np.conj(z)))
    assert np.allclose(dbar.values / d.values, 0.3, atol=1e-12)


def test_wirtinger_spectral_on_periodic_bump():
    spec = build_grid(2.0, 256)
    z = spec.nodes()
    # narrow enough to be periodic to rounding on the square
    phi = np.exp(-8 * np.abs(z) ** 2)
    d, dbar = wirtinger_derivatives(ComplexField(spec, phi), "spectral")
    # phi = exp(-8 z zbar): phi_z = -8 zbar phi, phi_zbar = -8 z phi
    assert np.max(np.abs(d.values + 8 * np.conj(z) * phi)) < 1e-8
    assert np.max(np.abs(dbar.values + 8 * z * phi)) < 1e-8


def test_integrate_unit_disk_area():
    spec = build_grid(2.0, 512)
    area = integrate(RealField(spec, np.ones((512, 512))), Disk(0j, 1.0))
    assert abs(area - np.pi) <= 2 * spec.spacing * 2 * np.pi


def test_integrate_zero_and_whole_grid():
    spec = build_grid(2.0, 64)
    assert integrate(RealField(spec, np.zeros((64, 64)))) == 0
    assert np.isclose(integrate(RealField(spec, np.ones((64, 64))), WholeGrid()), 16.0)


def test_integrate_singular_majorant():
    spec = build_grid(2.0, 512)
    r = np.abs(spec.nodes())
    with np.errstate(divide="ignore"):
        Q = RealField(spec, np.where(r > 0, (r + 1) / r, np.inf))
    # the origin is a node, so the disk integral sees the singularity
    assert integrate(Q, Disk(0j, 1.0)) == np.inf
    # away from it the node sum approaches 3 pi
    val = integrate(Q, Annulus(0j, spec.spacing / 2, 1.0))
    assert abs(val - 3 * np.pi) / (3 * np.pi) < 0.02


def test_field_norms():
    spec = build_grid(2.0, 512)
    sup, l2, l1 = field_norms(ComplexField.from_function(spec, lambda z: z), Disk(0j, 1.0))
    assert abs(sup - 1) < 2 * spec.spacing
    c = 0.5 - 0.5j
    _, _, l1 = field_norms(ComplexField(spec, np.full((512, 512), c)), Disk(0j, 1.0))
    assert abs(l1 - abs(c) * np.pi) < abs(c) * 2 * spec.spacing * 2 * np.pi
    z = spec.nodes()
    _, l2, _ = field_norms(ComplexField(spec, np.exp(1j * np.angle(z))), Annulus(0j, 0.5, 1.0))
    assert abs(l2**2 - 0.75 * np.pi) < 0.02


def test_region_outside_grid_raises():
    spec = build_grid(1.0, 16)
    with pytest.raises(ValueError):
        region_mask(spec, Disk(0j, 1.5))
    with pytest.raises(ValueError):
        Annulus(0j, 0.8, 0.5)


def test_interpolate_nodes_and_affine():
    spec = build_grid(2.0, 64)
    F = ComplexField.from_function(spec, lambda z: z**2 + 1j)
    assert interpolate(F, spec.node(10, 20)) == F.values[10, 20]
    G = ComplexField.from_function(spec, lambda z: 2 * z - 0.5 * np.conj(z))
    pts = np.array([0.123 + 0.456j, -1.1 + 0.3j])
    assert np.allclose(interpolate(G, pts), 2 * pts - 0.5 * np.conj(pts), atol=1e-14)


def test_interpolate_quadratic_midpoint():
    spec = build_grid(2.0, 64)
    h = spec.spacing
    F = ComplexField.from_function(spec, lambda z: z**2)
    mid = spec.node(30, 30) + h / 2 * (1 + 1j)
    # bilinear error of z^2 at a cell centre is bounded by h^2 / 2
    assert abs(interpolate(F, mid) - mid**2) <= h**2 / 2 + 1e-15


def test_interpolate_outside_raises():
    spec = build_grid(1.0, 16)
    F = ComplexField.from_function(spec, lambda z: z)
    with pytest.raises(ValueError):
        interpolate(F, 3 + 0j)


@settings(max_examples=50, deadline=None)
@given(st.complex_numbers(max_magnitude=1.5, allow_nan=False, allow_infinity=False),
       st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False),
       st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False))
def test_bilinear_reproduces_affine(z, a, b):
    spec = build_grid(2.0, 32)
    F = ComplexField.from_function(spec, lambda w: a * w + b * np.conj(w) + 1)
    assert abs(interpolate(F, z) - (a * z + b * np.conj(z) + 1)) < 1e-12 * (1 + abs(a) + abs(b))


def test_dump_roundtrip(tmp_path):
    spec = build_grid(2.0, 32)
    z = spec.nodes()
    F = ComplexField(spec, z**2 / 3)
    G = load_field(dump_field(F, tmp_path / "f.csv"), spec)
    assert np.array_equal(G.values, F.values)
    with np.errstate(divide="ignore"):
        R = RealField(spec, np.where(np.abs(z) > 0, 1 / np.abs(z), np.inf))
    S = load_field(dump_field(R, tmp_path / "r.csv"), spec)
    assert np.array_equal(S.values, R.values)
    assert "inf" in (tmp_path / "r.csv").read_text()
    header = (tmp_path / "f.csv").read_text().splitlines()[0]
    assert header == "re,im,val_re,val_im"


def test_load_wrong_grid(tmp_path):
    spec = build_grid(2.0, 32)
    dump_field(ComplexField.from_function(spec, lambda z: z), tmp_path / "f.csv")
    with pytest.raises(ValueError):
        load_field(tmp_path / "f.csv", build_grid(2.0, 64))
