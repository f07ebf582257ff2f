"""Tests for the spectral grid/field layer."""

import numpy as np
import pytest

from tfcond.grids import (
    Field,
    convolve,
    field_from_function,
    field_to_csv,
    gradient,
    inner,
    laplacian,
    load_field,
    make_grid,
    norm,
    normalize,
    save_field,
    transform,
)


def random_field(grid, rng):
    vals = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    return Field(grid, vals)


def test_wavenumber_layout():
    g = make_grid(1, 8, 1.0)
    expected = np.pi * np.array([0, 1, 2, 3, -4, -3, -2, -1], dtype=float)
    np.testing.assert_allclose(g.k_axis, expected, rtol=0, atol=1e-15)
    assert g.h == pytest.approx(0.25)
    assert g.x_axis[0] == -1.0 and g.x_axis[-1] == pytest.approx(0.75)


@pytest.mark.parametrize(
    "d,n,L",
    [(0, 8, 1.0), (4, 8, 1.0), (2, 12, 1.0), (1, 4, 1.0), (1, 8, 0.0), (1, 8, -2.0)],
)
def test_grid_validation(d, n, L):
    with pytest.raises(ValueError):
        make_grid(d, n, L)


def test_transform_roundtrip_and_parseval():
    rng = np.random.default_rng(7)
    g1 = make_grid(1, 64, 3.0)
    for _ in range(1000):
        f = random_field(g1, rng)
        fhat = transform(f)
        back = transform(fhat)
        assert back.basis == "position"
        np.testing.assert_allclose(back.values, f.values, rtol=1e-12, atol=1e-13)
        assert norm(fhat, "L2") == pytest.approx(norm(f, "L2"), rel=1e-12)
    g3 = make_grid(3, 8, 2.0)
    for _ in range(50):
        f = random_field(g3, rng)
        assert norm(transform(f), "L2") == pytest.approx(norm(f, "L2"), rel=1e-12)


def test_l2_gaussian_analytic():
    # integral of exp(-x^2) over R is sqrt(pi)
    g = make_grid(1, 256, 8.0)
    f = field_from_function(g, lambda x: np.exp(-(x ** 2) / 2.0))
    assert norm(f, "L2") == pytest.approx(np.pi ** 0.25, rel=1e-12)


def test_l4_and_linf_gaussian():
    # ||f||_4^4 = integral exp(-2 x^2) = sqrt(pi/2) for f = exp(-x^2/2)
    g = make_grid(1, 256, 8.0)
    f = field_from_function(g, lambda x: np.exp(-(x ** 2) / 2.0))
    assert norm(f, "L4") == pytest.approx((np.pi / 2.0) ** 0.125, rel=1e-12)
    assert norm(f, "Linf") == pytest.approx(1.0, rel=0, abs=1e-14)


def test_plane_wave_sobolev_norms():
    # f = exp(i pi x) on [-1, 1): ||f||_2^2 = 2, gradient adds pi^2 per unit mass
    g = make_grid(1, 64, 1.0)
    f = field_from_function(g, lambda x: np.exp(1j * np.pi * x))
    l2sq = norm(f, "L2") ** 2
    assert l2sq == pytest.approx(2.0, rel=1e-13)
    assert norm(f, "H1") ** 2 == pytest.approx(l2sq * (1 + np.pi ** 2), rel=1e-12)
    assert norm(f, "H2") ** 2 == pytest.approx(
        l2sq * (1 + np.pi ** 2 + np.pi ** 4), rel=1e-12
    )


def test_spectral_derivatives_exact_on_plane_wave():
    g = make_grid(2, 32, 2.0)
    kx, ky = 3 * np.pi / 2.0, -2 * np.pi / 2.0  # multiples of pi/L
    f = field_from_function(g, lambda x, y: np.exp(1j * (kx * x + ky * y)))
    lap = laplacian(f)
    np.testing.assert_allclose(
        lap.values, -(kx ** 2 + ky ** 2) * f.values, rtol=1e-12, atol=1e-12
    )
    gx, gy = gradient(f)
    np.testing.assert_allclose(gx.values, 1j * kx * f.values, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(gy.values, 1j * ky * f.values, rtol=1e-12, atol=1e-12)


def test_convolve_with_grid_delta_is_identity():
    rng = np.random.default_rng(3)
    g = make_grid(2, 16, 2.0)
    delta = np.zeros(g.shape)
    delta[g.n // 2, g.n // 2] = 1.0 / g.dv  # unit-mass spike at x = 0
    f = random_field(g, rng)
    out = convolve(Field(g, delta), f)
    np.testing.assert_allclose(out.values, f.values, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("d", [1, 2])
def test_convolve_gaussians_analytic(d):
    # exp(-|x|^2) * exp(-|x|^2) = (pi/2)^{d/2} exp(-|x|^2/2)
    g = make_grid(d, 128 if d == 1 else 64, 8.0)
    ker = field_from_function(g, lambda *xs: np.exp(-sum(x ** 2 for x in xs)))
    out = convolve(ker, ker)
    expected = field_from_function(
        g, lambda *xs: (np.pi / 2.0) ** (d / 2.0) * np.exp(-sum(x ** 2 for x in xs) / 2.0)
    )
    np.testing.assert_allclose(out.values, expected.values, rtol=0, atol=1e-8)


def test_convolve_matches_direct_periodic_sum():
    # brute-force periodic quadrature as an independent route
    rng = np.random.default_rng(11)
    g = make_grid(1, 128, 4.0)
    x = g.x_axis
    ker = field_from_function(g, lambda xx: np.exp(-(xx ** 2)))
    f = random_field(g, rng)
    diff = x[:, None] - x[None, :]
    wrapped = (diff + g.half_width) % (2 * g.half_width) - g.half_width
    direct = g.h * np.exp(-(wrapped ** 2)) @ f.values
    out = convolve(ker, f)
    np.testing.assert_allclose(out.values, direct, rtol=1e-11, atol=1e-12)


def test_convolution_commutes():
    rng = np.random.default_rng(5)
    g = make_grid(1, 64, 4.0)
    a, b = random_field(g, rng), random_field(g, rng)
    ab = convolve(a, b)
    ba = convolve(b, a)
    np.testing.assert_allclose(ab.values, ba.values, rtol=1e-11, atol=1e-12)


def test_normalize_and_inner():
    rng = np.random.default_rng(9)
    g = make_grid(1, 64, 4.0)
    f = normalize(random_field(g, rng))
    assert norm(f, "L2") == pytest.approx(1.0, rel=1e-13)
    assert inner(f, f) == pytest.approx(1.0, rel=1e-13)
    with pytest.raises(ValueError):
        normalize(Field(g, np.zeros(g.shape)))


def test_field_arithmetic_and_compat():
    rng = np.random.default_rng(2)
    g = make_grid(1, 64, 4.0)
    f, h = random_field(g, rng), random_field(g, rng)
    np.testing.assert_allclose((f + h).values, f.values + h.values)
    np.testing.assert_allclose((f - h).values, f.values - h.values)
    np.testing.assert_allclose((2.5 * f).values, 2.5 * f.values)
    other = make_grid(1, 128, 4.0)
    with pytest.raises(ValueError):
        _ = f + random_field(other, rng)
    with pytest.raises(ValueError):
        _ = f + transform(h)


def test_norms_require_position_basis():
    rng = np.random.default_rng(4)
    g = make_grid(1, 64, 4.0)
    fhat = transform(random_field(g, rng))
    with pytest.raises(ValueError):
        norm(fhat, "L4")
    with pytest.raises(ValueError):
        norm(fhat, "H1")
    with pytest.raises(ValueError):
        norm(random_field(g, rng), "L7")


def test_serialization_roundtrip(tmp_path):
    rng = np.random.default_rng(13)
    g = make_grid(2, 16, 3.5)
    f = random_field(g, rng)
    f.basis = "position"
    path = tmp_path / "field.tfc"
    save_field(path, f)
    back = load_field(path)
    assert back.grid == g and back.basis == "position"
    np.testing.assert_array_equal(back.values, f.values)
    # header is human-readable JSON on the first line
    header = path.read_bytes().split(b"\n", 1)[0].decode()
    assert '"d": 2' in header and '"basis": "position"' in header


def test_csv_export(tmp_path):
    g = make_grid(1, 8, 1.0)
    f = field_from_function(g, lambda x: x + 2j * x)
    path = tmp_path / "field.csv"
    field_to_csv(path, f)
    rows = path.read_text().strip().split("\n")
    assert rows[0] == "x0,re,im"
    assert len(rows) == 1 + g.n
    x0, re, im = (float(tok) for tok in rows[1].split(","))
    assert x0 == -1.0 and re == -1.0 and im == -2.0
    big = make_grid(3, 128, 1.0)
    with pytest.raises(ValueError):
        field_to_csv(tmp_path / "big.csv", Field(big, np.zeros(big.shape)))


def test_boundary_shell_mask():
    g = make_grid(1, 8, 1.0)
    np.testing.assert_array_equal(
        g.boundary_shell, [True, True, False, False, False, False, True, True]
    )
