"""Experiment presets.

Every preset has a desk-scale variant (``N=21``, ``S=8``, 40x20 pixels) used by
default and a full-scale variant selected with ``full=True``. Lengths are in
lambda0, frequencies in THz.

Scatterer coordinates and medium seeds are free choices: four scatterers
separated by three or more resolution cells. On-grid scatterers sit at pixel
centers; off-grid ones are shifted by half a pixel along both axes.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .config import ExperimentConfig, MediumConfig, RunConfig
from .scene import ArrayGeometry, FrequencyGrid, ImageWindow, Scene, grid_points

L_FULL = 10000.0
APERTURE = 500.0
CORR_LEN = 100.0
EPSILON = 0.2
# offsets from the window center (cross-range, range)
SCATTERER_OFFSETS = ((-60.0, -15.0), (60.0, -15.0), (0.0, -30.0), (0.0, 20.0))
REFLECTIVITIES = (1.0, 1.0, 1.0, 1.0)


def place_scene(window: ImageWindow, offsets=SCATTERER_OFFSETS, reflectivities=REFLECTIVITIES,
                offgrid: bool = False) -> Scene:
    """Snap ``window.center + offsets`` to pixel centers, then shift by half a pixel if ``offgrid``."""
    pts = grid_points(window)
    c = window.center
    pos = np.array([pts[window.nearest_index(c + np.asarray(o))] for o in offsets])
    if offgrid:
        pos = pos + 0.5 * np.asarray(window.pixel)
    return Scene.from_arrays(pos, reflectivities)


@dataclass
class Case:
    """One simulated configuration inside a preset."""

    label: str
    config: ExperimentConfig
    seeds: tuple[int, ...] = (0,)


@dataclass(frozen=True)
class Preset:
    name: str
    summary: str
    builder: Callable[[bool, int], list[Case]] = field(repr=False)

    def cases(self, full: bool = False, seed: int = 0) -> list[Case]:
        return self.builder(full, seed)


def _setup(full: bool, aperture=APERTURE, band=(580.0, 620.0), count=16, fast_band=(590.0, 610.0),
           fast_count=8, pixel=(2.0, 1.0), L=L_FULL, n_full=81):
    geometry = ArrayGeometry.linear(aperture, n_full if full else 21)
    if full:
        freqs = FrequencyGrid.band(band[0], band[1], count)
        window = ImageWindow.centered((0.0, L), (160.0, 80.0), pixel)
    else:
        # same frequency step as the full band so the range ambiguity stays outside the window
        freqs = FrequencyGrid.band(fast_band[0], fast_band[1], fast_count) if fast_count > 1 \
            else FrequencyGrid.band(600.0, 600.0, 1)
        window = ImageWindow.centered((0.0, L), (160.0, 80.0), (4.0, 4.0))
    return geometry, freqs, window


def _config(geometry, freqs, window, scene, medium=None, **run) -> ExperimentConfig:
    return ExperimentConfig(geometry, freqs, window, scene, medium or MediumConfig(), RunConfig(**run))


def _grid_cases(geometry, freqs, window, functionals, m_est=None, **run):
    return [Case(lbl, _config(geometry, freqs, window, place_scene(window, offgrid=off),
                              functionals=list(functionals), m_est=m_est, **run))
            for lbl, off in (("on_grid", False), ("off_grid", True))]


def _fig_h1(full, seed):
    g, _, w = _setup(full, count=1)
    f = FrequencyGrid.band(600.0, 600.0, 1)
    return _grid_cases(g, f, w, ("km", "signal", "music"), m_est=4, seed=seed)


def _fig_h2(full, seed):
    g, f, w = _setup(full)
    return _grid_cases(g, f, w, ("km", "signal", "music"), m_est=4, seed=seed)


def _fig_h3(full, seed):
    g, f, w = _setup(full)
    return _grid_cases(g, f, w, ("interf",), seed=seed)


def _fig_resolution(full, seed):
    g, f, w = _setup(full)
    # doubled aperture and bandwidth at the same element count and frequency step
    g2, f2, _ = _setup(full, aperture=2 * APERTURE, band=(560.0, 640.0), count=31,
                       fast_band=(580.0, 620.0), fast_count=15)
    psf = ((0.0, 0.0),)
    cases = []
    for lbl, geo, fr in (("base", g, f), ("doubled", g2, f2)):
        cases.append(Case(f"psf_{lbl}", _config(geo, fr, w, place_scene(w, psf, (1.0,)),
                                                functionals=["km", "interf"], seed=seed)))
    cases.append(Case("doubled_off_grid", _config(g2, f2, w, place_scene(w, offgrid=True),
                                                  functionals=["interf"], seed=seed)))
    return cases


def _random_cases(full, seed, L, label):
    g, f, w = _setup(full, band=(540.0, 660.0), count=46, pixel=(4.0, 2.0), L=L)
    medium = MediumConfig("random", CORR_LEN, EPSILON, None, L)
    cfg = _config(g, f, w, place_scene(w, offgrid=True), medium,
                  functionals=["signal", "music", "interf", "srint"], m_est=4, seed=seed,
                  x_d=0.25 * g.aperture, omega_d=0.12 * f.bandwidth, realizations=3)
    return [Case(label, cfg, tuple(range(seed, seed + 3)))]


def _fig_stability(full, seed):
    return _random_cases(full, seed, L_FULL, "random_L")


def _fig_error1(full, seed):
    # sigma * sqrt(l L) fixed: epsilon unchanged while L halves
    return _random_cases(full, seed, L_FULL / 2, "random_L_over_2")


def _fig_error2(full, seed):
    return _random_cases(full, seed, L_FULL / 3, "random_L_over_3")


def _masks(full, seed):
    g, f, w = _setup(full, band=(540.0, 660.0), count=46, pixel=(4.0, 2.0))
    return [Case("masks", _config(g, f, w, place_scene(w), functionals=[], seed=seed,
                                  x_d=0.25 * g.aperture, omega_d=0.12 * f.bandwidth))]


PRESETS = {p.name: p for p in (
    Preset("fig_h1", "single frequency, full data: KM, SIGNAL, MUSIC on/off grid", _fig_h1),
    Preset("fig_h2", "16 frequencies in [580, 620] THz, full data: KM, SIGNAL, MUSIC on/off grid", _fig_h2),
    Preset("fig_h3", "single-receiver interferometric data recovered from intensities: Interf on/off grid", _fig_h3),
    Preset("fig_resolution", "point-spread widths before and after doubling aperture and bandwidth", _fig_resolution),
    Preset("fig_stability", "random medium (eps=0.2, l=100), 46 frequencies in [540, 660] THz, three seeds", _fig_stability),
    Preset("fig_error1", "as fig_stability at half the propagation distance", _fig_error1),
    Preset("fig_error2", "as fig_stability at a third of the propagation distance", _fig_error2),
    Preset("masks", "single- and multi-frequency mask patterns", _masks),
)}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; valid: {', '.join(PRESETS)}") from None


def with_seed(cfg: ExperimentConfig, seed: int) -> ExperimentConfig:
    return replace(cfg, run=replace(cfg.run, seed=seed))
