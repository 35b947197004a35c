"""Simulate, recover and image: the steps shared by the command line and tests."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig
from .forward import MultiFreqResponse, response_multi
from .imaging import (ImageMap, Mask, build_G0r, build_mask, extract_peaks, homogeneous_greens, image_cint,
                      image_interf, image_km, image_srint, music_image, resolution_metrics, signal_image)
from .medium import HomogeneousMedium, RandomPhaseMedium
from .recovery import SimulatedOracle, SingleReceiverMatrix, recover_Mr
from .scene import ValidationError, grid_points


def build_medium(cfg: ExperimentConfig, seed: int):
    """Homogeneous medium, or one field realization covering array and scatterers."""
    m = cfg.medium
    if m.kind == "homogeneous":
        return HomogeneousMedium()
    return RandomPhaseMedium.realize(m.resolved_sigma(), m.corr_len,
                                     [cfg.geometry.positions, cfg.scene.positions], seed, m.spacing)


def simulate(cfg: ExperimentConfig, seed: int | None = None, medium=None) -> MultiFreqResponse:
    seed = cfg.run.seed if seed is None else seed
    medium = build_medium(cfg, seed) if medium is None else medium
    return response_multi(cfg.scene, cfg.geometry, medium, cfg.freqs)


def recover_receiver(cfg: ExperimentConfig, P: MultiFreqResponse, receiver: int | None = None,
                     seed: int | None = None) -> SingleReceiverMatrix:
    """``M_r`` recovered from simulated intensities at one receiver (0-based)."""
    r = cfg.receiver if receiver is None else receiver
    seed = cfg.run.seed if seed is None else seed
    oracle = SimulatedOracle(P.row(r), cfg.run.noise_snr_db, rng=[seed, r, 1])
    return recover_Mr(oracle, P.n, P.s, cfg.run.protocol, receiver=r)


def config_mask(cfg: ExperimentConfig) -> Mask:
    if cfg.run.x_d is None or cfg.run.omega_d is None:
        raise ValidationError("srint/cint need both run.x_d and run.omega_d")
    return build_mask(cfg.geometry, cfg.freqs, cfg.run.x_d, cfg.run.omega_d)


def form_images(cfg: ExperimentConfig, P: MultiFreqResponse | None, Mr=None,
                functionals=None, pairing: str = "consistent") -> dict[str, ImageMap]:
    """Images for each requested functional; ``Mr`` is needed for interf/srint.

    ``pairing`` selects the MUSIC/SIGNAL projection (see :func:`subspace_projections`).
    """
    functionals = cfg.run.functionals if functionals is None else functionals
    iw = cfg.window
    out: dict[str, ImageMap] = {}
    G0r = None
    greens = None
    for name in functionals:
        if name in ("km", "cint", "music", "signal") and P is None:
            raise ValidationError(f"{name} needs the full response matrix")
        if name in ("interf", "srint"):
            if Mr is None:
                raise ValidationError(f"{name} needs interferometric data M_r")
            if G0r is None:
                greens = homogeneous_greens(cfg.geometry, cfg.freqs, iw) if greens is None else greens
                r = getattr(Mr, "receiver", None)
                r = cfg.receiver if r is None else r
                G0r = build_G0r(cfg.geometry, cfg.freqs, iw, r, greens=greens)
        if name == "km":
            out[name] = image_km(P, cfg.geometry, cfg.freqs, iw)
        elif name == "interf":
            out[name] = image_interf(Mr, G0r, iw)
        elif name == "srint":
            out[name] = image_srint(Mr, config_mask(cfg), G0r, iw)
        elif name == "cint":
            mask = config_mask(cfg)
            out[name] = image_cint(P, mask.x_d, mask.omega_d, cfg.geometry, cfg.freqs, iw)
        elif name == "music":
            out[name] = music_image(P, cfg.run.m_est, cfg.geometry, iw, pairing=pairing)
        elif name == "signal":
            out[name] = signal_image(P, cfg.run.m_est, cfg.geometry, iw, pairing=pairing)
        else:
            from .imaging import FUNCTIONALS
            raise ValidationError(f"unknown functional {name!r}; valid: {', '.join(FUNCTIONALS)}")
    return out


def refine_peak(img: ImageMap, k: int) -> np.ndarray:
    """Three-point parabolic refinement of a peak position along each axis."""
    g = img.as_grid()
    ix, iz = img.window.cell_of(k)
    p = np.array(grid_points(img.window)[k], dtype=float)
    for axis, (i, n, h) in enumerate(((ix, g.shape[0], img.window.pixel[0]),
                                      (iz, g.shape[1], img.window.pixel[1]))):
        if 0 < i < n - 1:
            if axis == 0:
                a, b, c = g[i - 1, iz], g[i, iz], g[i + 1, iz]
            else:
                a, b, c = g[ix, i - 1], g[ix, i], g[ix, i + 1]
            d = a - 2 * b + c
            if d < 0:
                p[axis] += 0.5 * (a - c) / d * h
    return p


@dataclass
class PeakReport:
    positions: np.ndarray
    values: np.ndarray
    displacement: np.ndarray          # per true scatterer, in resolution cells
    widths: list = field(default_factory=list)


def peak_report(img: ImageMap, truth, cell, threshold: float = 0.2, min_separation: int = 2,
                refine: bool = True) -> PeakReport:
    """Peaks of ``img`` and, for each true position, the distance to the nearest peak.

    Distances are measured in resolution cells ``cell = (cross-range, range)``.
    """
    peaks = extract_peaks(img, threshold, min_separation)
    if not peaks:
        n = len(np.atleast_2d(truth))
        return PeakReport(np.empty((0, 2)), np.empty(0), np.full(n, np.inf))
    pos = np.array([refine_peak(img, p.index) if refine else p.position for p in peaks])
    vals = np.array([p.value for p in peaks])
    truth = np.atleast_2d(np.asarray(truth, dtype=float))
    d = np.hypot((pos[None, :, 0] - truth[:, None, 0]) / cell[0],
                 (pos[None, :, 1] - truth[:, None, 1]) / cell[1])
    widths = []
    for p in peaks:
        try:
            widths.append(resolution_metrics(img, p))
        except ValidationError:
            widths.append(None)
    return PeakReport(pos, vals, d.min(axis=1), widths)


def resolution_cell(cfg: ExperimentConfig) -> tuple[float, float]:
    """Nominal resolution ``(lambda0 L / a, lambda0 f0 / B)`` in lambda0."""
    L = float(cfg.window.center[1] - cfg.geometry.center[1])
    a = cfg.geometry.aperture
    B = cfg.freqs.bandwidth_thz
    cross = L / a if a > 0 else np.inf
    rng = cfg.freqs.f0_thz / B if B > 0 else np.inf
    return cross, rng
