import numpy as np
import pytest

from phaseless.forward import (apply_illumination, green_vector, illumination_vector, intensities,
                               km_linear_estimate, model_operator_A0, response_multi, response_single)
from phaseless.medium import HomogeneousMedium
from phaseless.scene import Scene

from conftest import random_medium, random_scene


def test_response_symmetric_and_rank(desk):
    g, f, w = desk
    scene = random_scene(np.random.default_rng(0), w, 3)
    P = response_single(scene, g, HomogeneousMedium(), 1.0)
    assert np.allclose(P, P.T)
    sv = np.linalg.svd(P, compute_uv=False)
    assert np.sum(sv > 1e-10 * sv[0]) == 3


def test_response_against_direct_sum(desk):
    g, f, w = desk
    scene = Scene.from_arrays([[3.0, 10010.0]], [0.5 - 0.2j])
    P = response_single(scene, g, None, 1.01)
    gv = green_vector(scene.positions[0], 1.01, g)
    assert np.allclose(P, (0.5 - 0.2j) * np.outer(gv, gv), rtol=1e-13)


def test_multi_layout(desk):
    g, f, w = desk
    scene = random_scene(np.random.default_rng(1), w)
    P = response_multi(scene, g, None, f)
    assert P.blocks.shape == (8, 21, 21)
    assert P.matrix.shape == (21, 168)
    # composite index s + l*N picks source s at frequency l
    assert P.matrix[4, 3 + 5 * 21] == P.block(5)[4, 3]
    assert np.array_equal(P.row(4), P.matrix[4])
    for l, om in enumerate(f.omegas):
        assert np.allclose(P.block(l), response_single(scene, g, None, om))


def test_random_medium_response_reciprocal(desk):
    g, f, w = desk
    scene = random_scene(np.random.default_rng(2), w)
    P = response_multi(scene, g, random_medium(g, scene, 4), f)
    for l in range(P.s):
        assert np.allclose(P.block(l), P.block(l).T)


@pytest.mark.parametrize("kind, j, expected", [("single", None, [1, 0, 0]), ("sum", 2, [1, 0, 1]),
                                              ("mix", 1, [1, -1j, 0])])
def test_illuminations(kind, j, expected):
    assert np.array_equal(illumination_vector(kind, 0, j, 3), np.asarray(expected, dtype=complex))


def test_illumination_errors():
    with pytest.raises(ValueError):
        illumination_vector("sum", 0, None, 3)
    with pytest.raises(ValueError):
        illumination_vector("bogus", 0, 1, 3)
    with pytest.raises(ValueError):
        apply_illumination(np.eye(3), np.ones(4))


def test_intensity_is_modulus_squared():
    b = np.array([3 + 4j, -1j])
    assert np.allclose(intensities(b), [25.0, 1.0])


def test_model_operator_matches_response(desk):
    g, f, w = desk
    rng = np.random.default_rng(3)
    scene = random_scene(rng, w, 2)
    fvec = rng.standard_normal(g.n) + 1j * rng.standard_normal(g.n)
    A0 = model_operator_A0(fvec, 1.0, g, scene.positions)
    b = response_single(scene, g, None, 1.0) @ fvec
    assert np.allclose(A0 @ scene.reflectivities, b)
    assert km_linear_estimate(A0, b).shape == (2,)
