"""Born-approximation array data: response matrices, illuminations, intensities."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .medium import DomainError, HomogeneousMedium, pairwise_green
from .scene import C0, ArrayGeometry, FrequencyGrid, ImageWindow, Scene, grid_points


def green_vector(y, omega: float, geometry: ArrayGeometry, medium=None) -> np.ndarray:
    """Array Green's function vector ``[G(x_1, y), ..., G(x_N, y)]`` at ``omega``."""
    medium = HomogeneousMedium() if medium is None else medium
    y = np.atleast_2d(np.asarray(y, dtype=float))
    return medium.green_matrix(geometry.positions, y, omega)[:, 0]


@dataclass(frozen=True)
class MultiFreqResponse:
    """Block row ``[P(w_1) ... P(w_S)]`` stored as an ``(S, N, N)`` array."""

    blocks: np.ndarray
    freqs: FrequencyGrid

    @property
    def n(self) -> int:
        return self.blocks.shape[1]

    @property
    def s(self) -> int:
        return self.blocks.shape[0]

    def block(self, l: int) -> np.ndarray:
        """``P(w_l)`` for 0-based frequency index ``l``."""
        return self.blocks[l]

    @property
    def matrix(self) -> np.ndarray:
        """The ``N x (N*S)`` block row; column ``s + l*N`` is source ``s`` at ``w_l``."""
        return np.concatenate(list(self.blocks), axis=1)

    def row(self, r: int) -> np.ndarray:
        """Row ``P_r`` of the block row (0-based receiver), length ``N*S``."""
        return self.blocks[:, r, :].reshape(-1)


def response_single(scene: Scene, geometry: ArrayGeometry, medium, omega: float) -> np.ndarray:
    """``P(w) = sum_j alpha_j g(y_j) g(y_j)^t`` (``N x N``)."""
    medium = HomogeneousMedium() if medium is None else medium
    g = medium.green_matrix(geometry.positions, scene.positions, omega)
    return (g * scene.reflectivities) @ g.T


def response_multi(scene: Scene, geometry: ArrayGeometry, medium, freqs: FrequencyGrid) -> MultiFreqResponse:
    medium = HomogeneousMedium() if medium is None else medium
    # nu does not depend on frequency: evaluate once
    travel = medium.travel_time(geometry.positions, scene.positions)
    alpha = scene.reflectivities
    blocks = np.empty((freqs.s, geometry.n, geometry.n), dtype=complex)
    for l, w in enumerate(freqs.omegas):
        g = medium.green_matrix(geometry.positions, scene.positions, w, travel)
        blocks[l] = (g * alpha) @ g.T
    return MultiFreqResponse(blocks, freqs)


def unit_illumination(i: int, size: int) -> np.ndarray:
    e = np.zeros(size, dtype=complex)
    e[i] = 1.0
    return e


def illumination_vector(kind: str, i: int, j: int | None, size: int) -> np.ndarray:
    """Protocol illuminations (0-based composite indices).

    ``single``: e_i; ``sum``: e_i + e_j; ``mix``: e_i - 1j*e_j.
    """
    f = unit_illumination(i, size)
    if kind == "single":
        return f
    if j is None:
        raise ValueError(f"{kind!r} illumination needs a second index")
    if kind == "sum":
        f[j] += 1.0
    elif kind == "mix":
        f[j] -= 1j
    else:
        raise ValueError(f"unknown illumination kind {kind!r}")
    return f


def apply_illumination(P, f) -> np.ndarray:
    """``b = P f`` for a block-row response and composite illumination ``f``."""
    mat = P.matrix if isinstance(P, MultiFreqResponse) else np.asarray(P)
    f = np.asarray(f)
    if mat.shape[-1] != f.shape[0]:
        raise ValueError(f"illumination length {f.shape[0]} does not match response {mat.shape}")
    return mat @ f


def intensities(b) -> np.ndarray:
    b = np.asarray(b)
    return b.real ** 2 + b.imag ** 2


def add_noise(b, snr_db: float, rng) -> np.ndarray:
    """Circular complex Gaussian noise at the given SNR (relative to mean power of ``b``)."""
    b = np.asarray(b, dtype=complex)
    power = np.mean(np.abs(b) ** 2)
    std = np.sqrt(power / 10 ** (snr_db / 10) / 2)
    return b + std * (rng.standard_normal(b.shape) + 1j * rng.standard_normal(b.shape))


def model_operator_A0(f, omega: float, geometry: ArrayGeometry, iw, c0: float = C0) -> np.ndarray:
    """Homogeneous reflectivity-to-data operator (``N x K``) for illumination ``f``.

    Entry ``(r, k)`` is ``G0(x_r, y_k) * sum_s G0(y_k, x_s) f_s``. ``iw`` is an
    :class:`ImageWindow` or an explicit ``(K, 2)`` array of points.
    """
    pts = grid_points(iw) if isinstance(iw, ImageWindow) else np.atleast_2d(iw)
    g = pairwise_green(geometry.positions, pts, omega, c0)
    f = np.asarray(f)
    if f.shape != (geometry.n,):
        raise ValueError(f"illumination must have length {geometry.n}")
    return g * (g.T @ f)[None, :]


def km_linear_estimate(A0, b) -> np.ndarray:
    """Kirchhoff estimate ``(A0)^* b``."""
    A0 = np.asarray(A0)
    b = np.asarray(b)
    if A0.shape[0] != b.shape[0]:
        raise ValueError(f"data length {b.shape[0]} does not match operator {A0.shape}")
    return A0.conj().T @ b


__all__ = [
    "DomainError", "MultiFreqResponse", "green_vector", "response_single", "response_multi",
    "unit_illumination", "illumination_vector", "apply_illumination", "intensities",
    "add_noise", "model_operator_A0", "km_linear_estimate",
]
