"""Imaging functionals: Kirchhoff migration, interferometric migrations and MUSIC.

Images are always formed with homogeneous Green's functions, whatever medium
generated the data. Pixel values are stored the way they are usually displayed:
modulus for KM, the raw real quadratic form for Interf/SRINT/CINT and the
normalized ratio for MUSIC/SIGNAL.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.ndimage import maximum_filter

from .forward import MultiFreqResponse
from .medium import pairwise_green
from .scene import C0, ArrayGeometry, FrequencyGrid, ImageWindow, ValidationError, grid_points

FUNCTIONALS = ("km", "interf", "srint", "cint", "music", "signal")
PAIRINGS = ("consistent", "literal", "hermitian")


@dataclass
class ImageMap:
    """``K`` pixel values over an :class:`ImageWindow` (range-fastest order)."""

    values: np.ndarray
    window: ImageWindow
    functional: str
    params: dict = field(default_factory=dict)
    nonnegative: bool = True

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.window.k,):
            raise ValidationError(f"image has {self.values.size} values, window has {self.window.k} pixels")

    def as_grid(self) -> np.ndarray:
        """Values as an ``(nx, nz)`` array indexed ``[cross-range, range]``."""
        return self.values.reshape(self.window.shape)

    def normalized(self) -> np.ndarray:
        m = np.max(np.abs(self.values))
        return self.values / m if m > 0 else self.values.copy()

    def argmax_position(self) -> np.ndarray:
        return grid_points(self.window)[int(np.argmax(self.values))]

    def metadata(self) -> dict:
        return {
            "functional": self.functional,
            "origin": list(self.window.origin),
            "extent": list(self.window.extent),
            "pixel": list(self.window.pixel),
            "shape": list(self.window.shape),
            "nonnegative": self.nonnegative,
            "rows": "range index, increasing range",
            "columns": "cross-range index, increasing cross-range",
            "params": self.params,
        }

    def to_csv(self, path) -> None:
        """CSV matrix with one row per range index."""
        np.savetxt(path, self.as_grid().T, delimiter=",", fmt="%.12e")

    def to_pgm(self, path) -> None:
        """8-bit binary PGM, min-max normalized; first row is the smallest range."""
        g = self.as_grid().T
        lo, hi = float(g.min()), float(g.max())
        scaled = np.zeros_like(g) if hi <= lo else (g - lo) / (hi - lo)
        pix = np.round(scaled * 255).astype(np.uint8)
        with open(path, "wb") as fh:
            fh.write(f"P5\n{pix.shape[1]} {pix.shape[0]}\n255\n".encode())
            fh.write(pix.tobytes())

    def write(self, stem) -> list[Path]:
        """Write ``stem.csv``, ``stem.pgm`` and the ``stem.json`` sidecar."""
        stem = Path(stem)
        stem.parent.mkdir(parents=True, exist_ok=True)
        paths = [stem.with_suffix(".csv"), stem.with_suffix(".pgm"), stem.with_suffix(".json")]
        self.to_csv(paths[0])
        self.to_pgm(paths[1])
        paths[2].write_text(json.dumps(self.metadata(), indent=2, default=_jsonable) + "\n")
        return paths


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


# --- masks -----------------------------------------------------------------

@dataclass(frozen=True)
class Mask:
    """Binary pair mask ``Z = Z_w kron Z_x`` on composite indices ``s + l*N``."""

    zx: np.ndarray
    zw: np.ndarray
    x_d: float
    omega_d: float

    @property
    def n(self) -> int:
        return self.zx.shape[0]

    @property
    def s(self) -> int:
        return self.zw.shape[0]

    @property
    def size(self) -> int:
        return self.n * self.s

    @property
    def matrix(self) -> np.ndarray:
        return np.kron(self.zw, self.zx).astype(bool)

    @property
    def nnz(self) -> int:
        return int(self.zx.sum()) * int(self.zw.sum())

    def sparse(self) -> sparse.csr_matrix:
        return sparse.kron(sparse.csr_matrix(self.zw.astype(float)),
                           sparse.csr_matrix(self.zx.astype(float)), format="csr")


def _within(dist, thr):
    return dist <= thr + 1e-9 * max(1.0, abs(thr))


def build_mask(geometry: ArrayGeometry, freqs: FrequencyGrid, x_d: float, omega_d: float) -> Mask:
    """``Z_ij = 1`` iff ``|x_s - x_s'| <= x_d`` and ``|w_l - w_l'| <= omega_d``.

    ``x_d`` is in lambda0 and ``omega_d`` in stored frequency units (``f/f0``).
    """
    if x_d < 0 or omega_d < 0:
        raise ValidationError("mask thresholds must be nonnegative")
    pos = geometry.positions
    dx = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    w = freqs.omegas
    dw = np.abs(w[:, None] - w[None, :])
    return Mask(_within(dx, x_d), _within(dw, omega_d), float(x_d), float(omega_d))


# --- model matrices ----------------------------------------------------------

def _points(iw) -> np.ndarray:
    return grid_points(iw) if isinstance(iw, ImageWindow) else np.atleast_2d(np.asarray(iw, dtype=float))


def homogeneous_greens(geometry: ArrayGeometry, freqs: FrequencyGrid, iw, c0: float = C0) -> np.ndarray:
    """``(S, N, K)`` stack of homogeneous array-to-pixel Green's functions."""
    pts = _points(iw)
    return np.stack([pairwise_green(geometry.positions, pts, w, c0) for w in freqs.omegas])


def build_G0r(geometry: ArrayGeometry, freqs: FrequencyGrid, iw, receiver: int,
              c0: float = C0, greens: np.ndarray | None = None) -> np.ndarray:
    """``K x (N*S)`` model matrix; column ``s + l*N`` is ``G0(x_r,y;w_l) G0(x_s,y;w_l)``."""
    g = homogeneous_greens(geometry, freqs, iw, c0) if greens is None else greens
    if not 0 <= receiver < g.shape[1]:
        raise IndexError(f"receiver {receiver} outside 0..{g.shape[1] - 1}")
    # (S, N, K) -> (K, S, N) -> (K, S*N) with source fastest
    blocks = g[:, receiver, None, :] * g
    return np.ascontiguousarray(blocks.transpose(2, 0, 1).reshape(g.shape[2], -1))


# --- Kirchhoff migration -------------------------------------------------------

def km_field(P: MultiFreqResponse, geometry: ArrayGeometry, iw, receivers=None,
             c0: float = C0, greens: np.ndarray | None = None) -> np.ndarray:
    """Complex KM: ``sum_l sum_r sum_s conj(P_rs(w_l)) G0(x_r,y) G0(x_s,y)``."""
    if P.n != geometry.n:
        raise ValidationError(f"response has {P.n} elements, geometry has {geometry.n}")
    g = homogeneous_greens(geometry, P.freqs, iw, c0) if greens is None else greens
    rows = np.arange(P.n) if receivers is None else np.atleast_1d(receivers)
    out = np.zeros(g.shape[2], dtype=complex)
    for l in range(P.s):
        gl = g[l]
        out += np.sum(gl[rows] * (P.blocks[l][rows].conj() @ gl), axis=0)
    return out


def image_km(P: MultiFreqResponse, geometry: ArrayGeometry, freqs: FrequencyGrid | None, iw: ImageWindow,
             receivers=None, c0: float = C0) -> ImageMap:
    if freqs is not None and freqs.s != P.s:
        raise ValidationError(f"response has {P.s} frequencies, grid has {freqs.s}")
    vals = np.abs(km_field(P, geometry, iw, receivers, c0))
    return ImageMap(vals, iw, "km", {"receivers": None if receivers is None else np.atleast_1d(receivers).tolist()})


# --- interferometric migrations ---------------------------------------------

def _as_matrix(M) -> np.ndarray:
    return np.asarray(getattr(M, "matrix", M))


def rank_one_factor(M, rtol: float = 1e-10):
    """``v`` with ``M = v v^*`` when ``M`` is numerically rank one, else ``None``."""
    M = _as_matrix(M)
    d = np.real(np.diag(M))
    j = int(np.argmax(d))
    if d[j] <= 0:
        return None
    v = M[:, j] / np.sqrt(d[j])
    scale = np.max(np.abs(M))
    if np.max(np.abs(M - np.outer(v, v.conj()))) <= rtol * scale:
        return v
    return None


def _quadratic_diag(G, M) -> np.ndarray:
    """``diag(G M G^*)`` for dense or sparse ``M``."""
    if sparse.issparse(M):
        H = (M.T @ G.T).T
    else:
        H = G @ M
    return np.sum(H * G.conj(), axis=1)


def _check_dims(M, G0r):
    if M.shape[0] != M.shape[1] or M.shape[0] != G0r.shape[1]:
        raise ValidationError(f"data matrix {M.shape} does not match model matrix {G0r.shape}")


def _real_image(vals, iw, name, params, nonnegative=False) -> ImageMap:
    scale = max(float(np.max(np.abs(vals))), np.finfo(float).tiny)
    resid = float(np.max(np.abs(vals.imag))) if vals.size else 0.0
    params = dict(params, imag_residue=resid / scale)
    return ImageMap(vals.real, iw, name, params, nonnegative)


def image_interf(Mr, G0r: np.ndarray, iw: ImageWindow, method: str = "auto") -> ImageMap:
    """``diag(G0r M_r G0r^*)``.

    ``method="rank_one"`` uses ``M_r = v v^*`` to evaluate ``|G0r v|^2`` with
    one matrix-vector product; ``"auto"`` takes that path when ``M_r`` is
    numerically rank one.
    """
    M = _as_matrix(Mr)
    _check_dims(M, G0r)
    v = rank_one_factor(M) if method in ("auto", "rank_one") else None
    if method == "rank_one" and v is None:
        raise ValidationError("matrix is not rank one")
    if v is not None:
        vals = np.abs(G0r @ v) ** 2 + 0j
        return _real_image(vals, iw, "interf", {"method": "rank_one"}, nonnegative=True)
    vals = _quadratic_diag(G0r, M)
    return _real_image(vals, iw, "interf", {"method": "dense"})


def _kron_quadratic(A, mask: Mask) -> np.ndarray:
    """``sum_ij A_ki Z_ij conj(A_kj)`` for ``Z = Z_w kron Z_x`` (``A`` is ``K x N*S``)."""
    A3 = A.reshape(A.shape[0], mask.s, mask.n)
    W = A3.conj() @ mask.zx.T.astype(float)
    V = np.einsum("ab,kbs->kas", mask.zw.astype(float), W)
    return np.sum(A3 * V, axis=(1, 2))


def image_srint(Mr, mask: Mask, G0r: np.ndarray, iw: ImageWindow, method: str = "auto") -> ImageMap:
    """``diag(G0r (Z o M_r) G0r^*)``.

    Methods: ``"sparse"`` only touches mask-nonzero pairs, ``"dense"`` forms
    the full triple product (validation), ``"rank_one"`` exploits
    ``M_r = v v^*`` together with the Kronecker structure of the mask.
    ``"auto"`` picks ``rank_one`` when possible, else ``sparse``.
    """
    M = _as_matrix(Mr)
    _check_dims(M, G0r)
    if mask.size != M.shape[0]:
        raise ValidationError(f"mask size {mask.size} does not match data {M.shape[0]}")
    params = {"x_d": mask.x_d, "omega_d": mask.omega_d}
    v = rank_one_factor(M) if method in ("auto", "rank_one") else None
    if method == "rank_one" and v is None:
        raise ValidationError("matrix is not rank one")
    if v is not None:
        vals = _kron_quadratic(G0r * v[None, :], mask)
        used = "rank_one"
    elif method in ("auto", "sparse"):
        Z = mask.sparse()
        ZM = Z.multiply(M).tocsr()
        vals = _quadratic_diag(G0r, ZM)
        used = "sparse"
    elif method == "dense":
        vals = _quadratic_diag(G0r, mask.matrix * M)
        used = "dense"
    else:
        raise ValidationError(f"unknown method {method!r}")
    return _real_image(vals, iw, "srint", dict(params, method=used))


def image_cint(P: MultiFreqResponse, x_d: float, omega_d: float, geometry: ArrayGeometry,
               freqs: FrequencyGrid, iw: ImageWindow, receivers=None, chunk: int | None = None,
               c0: float = C0) -> ImageMap:
    """Coherent interferometry over nearby source, receiver and frequency pairs.

    ``receivers`` restricts the receiver sum (both ``r`` and ``r'``).
    """
    if P.n != geometry.n or P.s != freqs.s:
        raise ValidationError("response, geometry and frequency grid disagree")
    mask = build_mask(geometry, freqs, x_d, omega_d)
    rows = np.arange(P.n) if receivers is None else np.atleast_1d(receivers)
    zr = mask.zx[np.ix_(rows, rows)].astype(float)
    zs = mask.zx.astype(float)
    zw = mask.zw.astype(float)
    g = homogeneous_greens(geometry, freqs, iw, c0)
    Pc = P.blocks[:, rows, :].conj()
    out = np.empty(g.shape[2], dtype=complex)
    if chunk is None:
        chunk = max(1, int(4e6 // (P.s * rows.size * P.n)))
    for a in range(0, g.shape[2], chunk):
        gk = g[:, :, a:a + chunk]
        # D[k, l, r, s] = conj(P_rs(w_l)) G0(x_r, y_k) G0(x_s, y_k)
        D = np.einsum("lrs,lrk,lsk->klrs", Pc, gk[:, rows, :], gk, optimize=True)
        E = D.conj()
        E = E @ zs.T
        E = np.einsum("ab,klbs->klas", zr, E, optimize=True)
        E = np.einsum("ab,kbrs->kars", zw, E, optimize=True)
        out[a:a + chunk] = np.sum(D * E, axis=(1, 2, 3))
    params = {"x_d": float(x_d), "omega_d": float(omega_d),
              "receivers": None if receivers is None else rows.tolist()}
    return _real_image(out, iw, "cint", params)


# --- subspace methods --------------------------------------------------------

def _signal_basis(data, kind: str = "auto"):
    """Eigenvectors ``V`` of ``P^* P`` (descending) and singular values of ``P``."""
    A = np.asarray(data)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError("MUSIC needs a square single-frequency matrix")
    if kind == "auto":
        herm = np.max(np.abs(A - A.conj().T)) <= 1e-10 * max(np.max(np.abs(A)), np.finfo(float).tiny)
        kind = "interferometric" if herm else "response"
    if kind == "response":
        _, sv, vh = np.linalg.svd(A)
        return vh.conj().T, sv
    if kind == "interferometric":
        w, V = np.linalg.eigh(A)
        order = np.argsort(w)[::-1]
        return V[:, order], np.sqrt(np.clip(w[order], 0, None))
    raise ValidationError(f"unknown data kind {kind!r}")


def estimate_rank(singular_values, rtol: float = 1e-3) -> int:
    sv = np.asarray(singular_values)
    return int(np.sum(sv > rtol * sv.max())) if sv.size and sv.max() > 0 else 0


def subspace_projections(data, m_est: int | None, g: np.ndarray, pairing: str = "consistent",
                         kind: str = "auto", normalize: bool = True):
    """Signal and noise components ``(P_S g, P_N g)`` of the columns of ``g`` (``N x K``).

    ``V_j`` are the eigenvectors of ``P^* P``. Pairings:

    ``consistent``
        ``sum_j (g^t V_j) conj(V_j)``, the orthogonal projector onto the span
        of the scatterers' Green's vectors (default).
    ``literal``
        ``sum_j (g^t V_j) V_j``.
    ``hermitian``
        ``sum_j (V_j^* g) V_j``.
    """
    if pairing not in PAIRINGS:
        raise ValidationError(f"unknown pairing {pairing!r}; valid: {', '.join(PAIRINGS)}")
    V, sv = _signal_basis(data, kind)
    n = V.shape[0]
    if m_est is None:
        m_est = estimate_rank(sv)
    if not 0 <= m_est < n:
        raise ValidationError(f"signal rank must satisfy 0 <= M_est < N = {n}, got {m_est}")
    if g.shape[0] != n:
        raise ValidationError(f"Green's vectors have length {g.shape[0]}, data has size {n}")
    if normalize:
        g = g / np.linalg.norm(g, axis=0, keepdims=True)
    Vs = V[:, :m_est]
    if pairing == "hermitian":
        ps = Vs @ (Vs.conj().T @ g)
    else:
        coef = Vs.T @ g
        ps = (Vs.conj() if pairing == "consistent" else Vs) @ coef
    return ps, g - ps, m_est


MUSIC_FLOOR = 1e-10
"""Noise-space norms below this fraction of the Green's vector norm count as zero."""


def _music_values(pn_norm, g_norm):
    # floor so that exact zeros (on-grid scatterers) all map to 1 rather than to roundoff ratios
    lo = max(pn_norm.min(), MUSIC_FLOOR * float(np.median(g_norm)))
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.where(pn_norm <= lo, 1.0, lo / pn_norm)
    return vals


def _signal_values(ps_norm):
    hi = ps_norm.max()
    return ps_norm / hi if hi > 0 else np.zeros_like(ps_norm)


def _blocks(data, freqs):
    if isinstance(data, MultiFreqResponse):
        return list(data.blocks), data.freqs.omegas, "response"
    if hasattr(data, "block") and hasattr(data, "s"):
        return [data.block(l) for l in range(data.s)], freqs.omegas, "interferometric"
    arr = np.asarray(data)
    if arr.ndim == 2:
        arr = arr[None]
    return list(arr), freqs.omegas, "auto"


def _subspace_image(name, data, m_est, geometry, iw, freqs, pairing, normalize, c0):
    blocks, omegas, kind = _blocks(data, freqs)
    if len(blocks) != len(omegas):
        raise ValidationError(f"{len(blocks)} data blocks for {len(omegas)} frequencies")
    pts = _points(iw)
    total = np.zeros(pts.shape[0])
    ranks = []
    for A, w in zip(blocks, omegas):
        g = pairwise_green(geometry.positions, pts, w, c0)
        ps, pn, m = subspace_projections(A, m_est, g, pairing, kind, normalize)
        ranks.append(m)
        if name == "music":
            gn = np.ones(g.shape[1]) if normalize else np.linalg.norm(g, axis=0)
            total += _music_values(np.linalg.norm(pn, axis=0), gn)
        else:
            total += _signal_values(np.linalg.norm(ps, axis=0))
    params = {"m_est": ranks if m_est is None else m_est, "pairing": pairing, "frequencies": len(omegas)}
    return ImageMap(total, iw, name, params)


def music_image(data, m_est: int | None, geometry: ArrayGeometry, iw: ImageWindow,
                freqs: FrequencyGrid | None = None, pairing: str = "consistent",
                normalize: bool = True, c0: float = C0) -> ImageMap:
    """``min_j |P_N g0(y_j)| / |P_N g0(y)|`` summed over frequencies.

    ``data`` is a single-frequency ``P`` or ``M`` (with a one-entry ``freqs``),
    a :class:`MultiFreqResponse`, an ``(S, N, N)`` stack, or a recovered full
    interferometric matrix (its diagonal blocks are used). ``m_est=None``
    estimates the signal rank from singular values above ``1e-3`` of the
    largest. ``normalize`` uses unit-norm Green's vectors. Noise-space norms
    below ``MUSIC_FLOOR`` times the Green's vector norm count as zero.
    """
    return _subspace_image("music", data, m_est, geometry, iw, _freqs_for(data, freqs), pairing, normalize, c0)


def signal_image(data, m_est: int | None, geometry: ArrayGeometry, iw: ImageWindow,
                 freqs: FrequencyGrid | None = None, pairing: str = "consistent",
                 normalize: bool = True, c0: float = C0) -> ImageMap:
    """``|P_S g0(y)| / max_j |P_S g0(y_j)|`` summed over frequencies."""
    return _subspace_image("signal", data, m_est, geometry, iw, _freqs_for(data, freqs), pairing, normalize, c0)


def _freqs_for(data, freqs):
    if isinstance(data, MultiFreqResponse):
        return data.freqs
    if freqs is None:
        raise ValidationError("frequency grid required for this data type")
    return freqs


# --- peaks and resolution ------------------------------------------------------

@dataclass(frozen=True)
class Peak:
    index: int
    cell: tuple[int, int]
    position: tuple[float, float]
    value: float


def extract_peaks(img: ImageMap, threshold_frac: float = 0.5, min_separation: int = 1,
                  max_peaks: int | None = None) -> list[Peak]:
    """Local maxima above ``threshold_frac * max``, greedily separated.

    Candidates are visited by decreasing value (ties by grid index) and kept
    when their Chebyshev cell distance to every kept peak exceeds
    ``min_separation``.
    """
    if not 0 < threshold_frac <= 1:
        raise ValidationError("threshold_frac must be in (0, 1]")
    if img.values.size == 0:
        return []
    grid = img.as_grid()
    top = grid.max()
    local = (grid >= maximum_filter(grid, size=3, mode="nearest")) & (grid >= threshold_frac * top)
    cand = np.flatnonzero(local.ravel())
    cand = cand[np.lexsort((cand, -grid.ravel()[cand]))]
    pts = grid_points(img.window)
    nz = img.window.shape[1]
    kept: list[Peak] = []
    for k in cand:
        cell = divmod(int(k), nz)
        if all(max(abs(cell[0] - p.cell[0]), abs(cell[1] - p.cell[1])) > min_separation for p in kept):
            kept.append(Peak(int(k), cell, tuple(pts[k]), float(grid.ravel()[k])))
            if max_peaks is not None and len(kept) >= max_peaks:
                break
    return kept


@dataclass(frozen=True)
class Resolution:
    cross_range: float
    range: float
    cross_clipped: bool
    range_clipped: bool


def _fwhm_1d(profile: np.ndarray, i: int, step: float) -> tuple[float, bool]:
    half = profile[i] / 2
    clipped = False

    def walk(direction):
        nonlocal clipped
        j = i
        while 0 <= j + direction < profile.size:
            nxt = j + direction
            if profile[nxt] < half:
                # linear interpolation between j and nxt
                frac = (profile[j] - half) / (profile[j] - profile[nxt])
                return (abs(j - i) + frac) * step
            j = nxt
        clipped = True
        return abs(j - i) * step

    return walk(-1) + walk(+1), clipped


def resolution_metrics(img: ImageMap, peak) -> Resolution:
    """FWHM along cross-range and range through ``peak``.

    ``peak`` is a :class:`Peak`, a grid index or a position. A width that
    reaches the window boundary is returned as the clipped width with its
    flag set.
    """
    if isinstance(peak, Peak):
        k = peak.index
    elif np.ndim(peak) == 0:
        k = int(peak)
    else:
        k = img.window.nearest_index(peak)
    ix, iz = img.window.cell_of(k)
    grid = img.as_grid()
    if grid[ix, iz] <= 0:
        raise ValidationError("peak value must be positive")
    cr, cc = _fwhm_1d(grid[:, iz], ix, img.window.pixel[0])
    rr, rc = _fwhm_1d(grid[ix, :], iz, img.window.pixel[1])
    return Resolution(cr, rr, cc, rc)


def cell_distance(img_or_window, a, b) -> int:
    """Chebyshev distance in cells between the pixels containing points ``a`` and ``b``."""
    iw = getattr(img_or_window, "window", img_or_window)
    ca = iw.cell_of(iw.nearest_index(a))
    cb = iw.cell_of(iw.nearest_index(b))
    return max(abs(ca[0] - cb[0]), abs(ca[1] - cb[1]))
