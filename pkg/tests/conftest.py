import numpy as np
import pytest

from phaseless.medium import RandomPhaseMedium, sigma_from_epsilon
from phaseless.scene import ArrayGeometry, FrequencyGrid, ImageWindow, Scene


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")


@pytest.fixture
def desk():
    """Desk-scale setup: N=21, S=8, window 160x80 at L=10000 with 4x4 pixels."""
    geometry = ArrayGeometry.linear(500.0, 21)
    freqs = FrequencyGrid.band(590.0, 610.0, 8)
    window = ImageWindow.centered((0.0, 10000.0), (160.0, 80.0), (4.0, 4.0))
    return geometry, freqs, window


def random_scene(rng, window, m=3):
    lo = np.asarray(window.origin) + 10
    hi = lo + np.asarray(window.extent) - 20
    pos = rng.uniform(lo, hi, size=(m, 2))
    refl = rng.uniform(0.5, 1.5, m) * np.exp(2j * np.pi * rng.uniform(size=m))
    return Scene.from_arrays(pos, refl)


def random_medium(geometry, scene, seed, epsilon=0.2, l=100.0, L=10000.0):
    return RandomPhaseMedium.realize(sigma_from_epsilon(epsilon, l, L), l,
                                     [geometry.positions, scene.positions], seed)
