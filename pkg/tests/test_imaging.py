import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phaseless.forward import response_multi, response_single
from phaseless.imaging import (ImageMap, build_G0r, build_mask, extract_peaks, image_cint,
                               image_interf, image_km, image_srint, km_field, music_image, rank_one_factor,
                               resolution_metrics, signal_image, subspace_projections)
from phaseless.medium import pairwise_green
from phaseless.scene import ArrayGeometry, FrequencyGrid, ImageWindow, Scene, ValidationError, grid_points

from conftest import random_medium, random_scene


@pytest.fixture
def data(desk):
    g, f, w = desk
    scene = random_scene(np.random.default_rng(11), w, 3)
    P = response_multi(scene, g, random_medium(g, scene, 2), f)
    r = g.center_index()
    row = P.row(r)
    return g, f, w, P, r, np.outer(row.conj(), row)


def _rel(a, b):
    return np.max(np.abs(a - b)) / np.max(np.abs(b))


# --- masks -------------------------------------------------------------------

@pytest.mark.parametrize("x_d, omega_d, row_x, row_w", [(0.0, 0.0, 1, 1), (25.0, 0.0, 3, 1),
                                                        (125.0, 0.012, 11, 5), (1e9, 1e9, 21, 8)])
def test_mask_band_counts(desk, x_d, omega_d, row_x, row_w):
    g, f, _ = desk
    m = build_mask(g, f, x_d, omega_d)
    assert m.zx[10].sum() == row_x
    assert m.zw[4].sum() == row_w
    Z = m.matrix
    assert Z.shape == (168, 168)
    assert np.array_equal(Z, Z.T)
    assert Z.sum() == m.nnz
    assert np.array_equal(m.sparse().toarray().astype(bool), Z)


def test_mask_threshold_boundary_inclusive(desk):
    g, f, _ = desk
    # element pitch is exactly 25 lambda0
    assert build_mask(g, f, 25.0, 0.0).zx[0, 1]
    assert not build_mask(g, f, 24.999, 0.0).zx[0, 1]


def test_mask_full_scale_bands():
    g = ArrayGeometry.linear(500.0, 81)
    f = FrequencyGrid.band(540.0, 660.0, 46)
    m = build_mask(g, f, 0.25 * g.aperture, 0.12 * f.bandwidth)
    assert m.zx[40].sum() == 41
    assert m.zw[23].sum() == 11


def test_mask_rejects_negative(desk):
    g, f, _ = desk
    with pytest.raises(ValidationError):
        build_mask(g, f, -1.0, 0.1)


# --- model matrix ---------------------------------------------------------------

def test_G0r_columns(desk):
    g, f, w = desk
    G = build_G0r(g, f, w, 3)
    pts = grid_points(w)
    k, s, l = 17, 5, 6
    direct = pairwise_green(g.positions[[3]], pts[[k]], f.omegas[l])[0, 0] * \
        pairwise_green(g.positions[[s]], pts[[k]], f.omegas[l])[0, 0]
    assert G.shape == (w.k, g.n * f.s)
    assert G[k, s + l * g.n] == pytest.approx(direct, rel=1e-13)
    with pytest.raises(IndexError):
        build_G0r(g, f, w, 21)


# --- migration identities -------------------------------------------------------

def test_interf_is_km_squared(data):
    g, f, w, P, r, M = data
    interf = image_interf(M, build_G0r(g, f, w, r), w, method="dense")
    km_r = km_field(P, g, w, receivers=[r])
    assert _rel(interf.values, np.abs(km_r) ** 2) < 1e-10


def test_interf_rank_one_path_matches_dense(data):
    g, f, w, P, r, M = data
    G = build_G0r(g, f, w, r)
    a = image_interf(M, G, w, method="rank_one")
    b = image_interf(M, G, w, method="dense")
    assert a.params["method"] == "rank_one"
    assert _rel(a.values, b.values) < 1e-10
    assert image_interf(M, G, w).params["method"] == "rank_one"


def test_rank_one_factor_detects_rank():
    rng = np.random.default_rng(0)
    v = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    M = np.outer(v, v.conj())
    u = rank_one_factor(M)
    assert np.allclose(np.outer(u, u.conj()), M)
    assert rank_one_factor(M + np.eye(6)) is None


@pytest.mark.parametrize("x_d, omega_d", [(0.0, 0.0), (60.0, 0.01), (125.0, 0.004), (1e9, 1e9)])
def test_srint_methods_agree(data, x_d, omega_d):
    g, f, w, P, r, M = data
    G = build_G0r(g, f, w, r)
    mask = build_mask(g, f, x_d, omega_d)
    vals = {m: image_srint(M, mask, G, w, method=m).values for m in ("rank_one", "sparse", "dense")}
    assert _rel(vals["sparse"], vals["dense"]) < 1e-10
    assert _rel(vals["rank_one"], vals["dense"]) < 1e-10


def test_srint_limits(data):
    g, f, w, P, r, M = data
    G = build_G0r(g, f, w, r)
    full = image_srint(M, build_mask(g, f, 1e9, 1e9), G, w)
    assert _rel(full.values, image_interf(M, G, w).values) < 1e-10
    diag = image_srint(M, build_mask(g, f, 0.0, 0.0), G, w)
    expected = np.abs(G) ** 2 @ np.real(np.diag(M))
    assert _rel(diag.values, expected) < 1e-10
    assert diag.params["imag_residue"] < 1e-10


def test_cint_identities(data):
    g, f, w, P, r, M = data
    km = km_field(P, g, w)
    full = image_cint(P, 1e9, 1e9, g, f, w)
    assert _rel(full.values, np.abs(km) ** 2) < 1e-10
    single = image_cint(P, 125.0, 0.012, g, f, w, receivers=[r])
    srint = image_srint(M, build_mask(g, f, 125.0, 0.012), build_G0r(g, f, w, r), w)
    assert _rel(single.values, srint.values) < 1e-10


def test_cint_chunking_invariant(data):
    g, f, w, P, r, M = data
    a = image_cint(P, 60.0, 0.01, g, f, w, chunk=7)
    b = image_cint(P, 60.0, 0.01, g, f, w, chunk=1000)
    assert _rel(a.values, b.values) < 1e-12


def test_km_linearity_and_dims(data):
    g, f, w, P, r, M = data
    img = image_km(P, g, f, w)
    assert img.values.shape == (w.k,)
    assert np.all(img.values >= 0)
    with pytest.raises(ValidationError):
        image_km(P, g, FrequencyGrid.band(590, 610, 3), w)


def test_homogeneous_km_peaks_at_scatterer(desk):
    g, f, w = desk
    pts = grid_points(w)
    truth = pts[w.nearest_index(w.center)]
    P = response_multi(Scene.from_arrays([truth], [1.0]), g, None, f)
    assert np.allclose(image_km(P, g, f, w).argmax_position(), truth)


def test_interf_dimension_mismatch(data):
    g, f, w, P, r, M = data
    with pytest.raises(ValidationError):
        image_interf(M[:10, :10], build_G0r(g, f, w, r), w)


# --- subspace methods -------------------------------------------------------------

@pytest.fixture
def on_grid(desk):
    g, _, w = desk
    pts = grid_points(w)
    idx = [w.nearest_index(w.center + o) for o in [(-60, -16), (60, -16), (0, 20)]]
    scene = Scene.from_arrays(pts[idx], [1.0, 0.8, 1.2])
    f1 = FrequencyGrid.band(600, 600, 1)
    return g, f1, w, scene, idx


def test_music_exact_on_grid(on_grid):
    g, f1, w, scene, idx = on_grid
    P = response_multi(scene, g, None, f1)
    img = music_image(P, 3, g, w)
    top = np.argsort(img.values)[::-1][:3]
    assert set(top.tolist()) == set(idx)
    assert np.allclose(img.values[idx], 1.0)


def test_music_rank_estimate(on_grid):
    g, f1, w, scene, idx = on_grid
    P = response_multi(scene, g, None, f1)
    assert music_image(P, None, g, w).params["m_est"] == [3]


def test_music_zero_rank_is_constant(on_grid):
    g, f1, w, scene, _ = on_grid
    P = response_multi(scene, g, None, f1)
    assert np.allclose(music_image(P, 0, g, w).values, 1.0)


def test_consistent_pairing_projects_onto_green_span(on_grid):
    g, f1, w, scene, _ = on_grid
    P = response_single(scene, g, None, 1.0)
    G = pairwise_green(g.positions, scene.positions, 1.0)
    ps, pn, m = subspace_projections(P, 3, G, "consistent")
    assert m == 3
    assert np.max(np.abs(pn)) < 1e-10
    ps_h, _, _ = subspace_projections(P, 3, G, "hermitian")
    # the hermitian pairing projects onto the span of conj(g): generally not g
    assert np.max(np.abs(G / np.linalg.norm(G, axis=0) - ps_h)) > 1e-3


def test_interferometric_input_equivalent(on_grid):
    g, f1, w, scene, _ = on_grid
    P = response_single(scene, g, None, 1.0)
    a = music_image(P, 3, g, w, freqs=f1)
    b = music_image(P.conj().T @ P, 3, g, w, freqs=f1)
    assert np.allclose(a.values, b.values, atol=1e-8)


def test_subspace_validation(on_grid):
    g, f1, w, scene, _ = on_grid
    P = response_single(scene, g, None, 1.0)
    G = pairwise_green(g.positions, scene.positions, 1.0)
    with pytest.raises(ValidationError):
        subspace_projections(P, g.n, G)
    with pytest.raises(ValidationError):
        subspace_projections(P, 2, G, pairing="other")
    with pytest.raises(ValidationError):
        music_image(P, 2, g, w)


def test_signal_image_normalized(on_grid):
    g, f1, w, scene, idx = on_grid
    P = response_multi(scene, g, None, f1)
    img = signal_image(P, 3, g, w)
    assert img.values.max() == pytest.approx(1.0)
    assert np.all(img.values[idx] > 0.999)


def test_multifrequency_music_sums(desk, on_grid):
    g, f, w = desk
    _, _, _, scene, _ = on_grid
    P = response_multi(scene, g, None, f)
    total = music_image(P, 3, g, w).values
    parts = sum(music_image(P.block(l), 3, g, w, freqs=FrequencyGrid([fl])).values
                for l, fl in enumerate(f.freqs_thz))
    assert np.allclose(total, parts)


# --- peaks, widths, output ------------------------------------------------------

def _gaussian_image(sx=6.0, sz=3.0, centers=((0.0, 100.0),)):
    w = ImageWindow.centered((0.0, 100.0), (120.0, 60.0), (1.0, 1.0))
    pts = grid_points(w)
    vals = sum(np.exp(-((pts[:, 0] - c[0]) ** 2 / (2 * sx ** 2) + (pts[:, 1] - c[1]) ** 2 / (2 * sz ** 2)))
               for c in centers)
    return ImageMap(vals, w, "test")


@given(st.floats(2.0, 10.0), st.floats(1.5, 8.0))
@settings(max_examples=25, deadline=None)
def test_fwhm_of_gaussian(sx, sz):
    img = _gaussian_image(sx, sz, ((0.5, 100.5),))
    res = resolution_metrics(img, extract_peaks(img)[0])
    k = 2 * np.sqrt(2 * np.log(2))
    assert res.cross_range == pytest.approx(k * sx, rel=0.02)
    assert res.range == pytest.approx(k * sz, rel=0.03)
    assert not res.cross_clipped and not res.range_clipped


def test_fwhm_clipped_flag():
    img = _gaussian_image(80.0, 3.0, ((0.5, 100.5),))
    res = resolution_metrics(img, int(np.argmax(img.values)))
    assert res.cross_clipped and not res.range_clipped


def test_extract_peaks_separation():
    img = _gaussian_image(2.0, 2.0, ((-30.5, 90.5), (20.5, 110.5), (22.5, 110.5)))
    peaks = extract_peaks(img, 0.3, min_separation=3)
    assert len(peaks) == 2
    assert peaks[0].value >= peaks[1].value
    assert len(extract_peaks(img, 0.3, 3, max_peaks=1)) == 1
    with pytest.raises(ValidationError):
        extract_peaks(img, 0.0)


def test_image_outputs(tmp_path):
    img = _gaussian_image()
    paths = img.write(tmp_path / "img")
    grid = np.loadtxt(paths[0], delimiter=",")
    nx, nz = img.window.shape
    assert grid.shape == (nz, nx)
    assert np.allclose(grid.T, img.as_grid(), rtol=1e-11)
    raw = paths[1].read_bytes()
    assert raw.startswith(f"P5\n{nx} {nz}\n255\n".encode())
    assert len(raw.split(b"255\n", 1)[1]) == nx * nz
    meta = json.loads(paths[2].read_text())
    assert meta["shape"] == [nx, nz] and meta["functional"] == "test"


def test_image_size_validated():
    w = ImageWindow((0, 0), (4.0, 4.0), (1.0, 1.0))
    with pytest.raises(ValidationError):
        ImageMap(np.zeros(5), w, "x")
