"""Green's functions for homogeneous and random travel-time media.

The random medium is the geometric-optics phase screen model: the wave speed
fluctuates as ``1/c^2 = (1 + sigma*mu(x/l))/c0^2`` with ``mu`` a stationary,
zero-mean, unit-variance Gaussian field with autocorrelation
``exp(-r^2/2)``, and the Green's function acquires a random phase
``exp(i*omega*nu(x, y))`` where ``nu`` is a line integral of ``mu`` along the
ray ``x -> y``. Amplitudes are unchanged.

Closed-form moments of ``nu`` and ``exp(i*omega*nu)`` are provided next to
the simulator so the two can be checked against each other
(see :mod:`phaseless.moments`).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft
from scipy import ndimage
from scipy.special import erf

from .scene import C0, ValidationError


class DomainError(ValueError):
    """Evaluation point outside the domain of a function."""


class RegimeWarning(UserWarning):
    """Medium parameters outside the validity range of the travel-time model."""


def green_homogeneous(x, y, omega, c0: float = C0):
    """Free-space Green's function ``exp(i*omega*|x-y|/c0) / (4*pi*|x-y|)``.

    ``x`` and ``y`` broadcast against each other along leading axes; the last
    axis holds the two coordinates.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = np.linalg.norm(x - y, axis=-1)
    if np.any(r == 0):
        raise DomainError("Green's function evaluated at coincident points")
    return np.exp(1j * np.asarray(omega) * r / c0) / (4 * np.pi * r)


def pairwise_green(xs, ys, omega, c0: float = C0) -> np.ndarray:
    """Matrix ``G0(xs[a], ys[b]; omega)`` of shape ``(len(xs), len(ys))``."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    return green_homogeneous(xs[:, None, :], ys[None, :, :], omega, c0)


# ---------------------------------------------------------------------------
# random field synthesis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FieldSpec:
    """Regular grid on which ``mu`` is sampled.

    ``origin`` is the physical position (lambda0) of sample ``[0, 0]``; axis 0
    is cross-range, axis 1 is range.
    """

    origin: tuple[float, float]
    shape: tuple[int, int]
    spacing: float
    corr_len: float

    def __post_init__(self):
        if self.corr_len <= 0:
            raise ValidationError("correlation length must be positive")
        if self.spacing <= 0:
            raise ValidationError("grid spacing must be positive")
        if self.spacing > self.corr_len / 4 * (1 + 1e-12):
            raise ValidationError(
                f"grid spacing {self.spacing} exceeds corr_len/4 = {self.corr_len / 4}")
        if min(self.shape) < 2:
            raise ValidationError("field grid needs at least 2 samples per axis")

    @classmethod
    def covering(cls, *point_sets, corr_len: float, spacing: float | None = None,
                 margin: float | None = None) -> "FieldSpec":
        """Smallest grid covering all ``point_sets`` with a ``>= 3*corr_len`` margin."""
        pts = np.vstack([np.atleast_2d(np.asarray(p, dtype=float)) for p in point_sets])
        h = corr_len / 4 if spacing is None else spacing
        pad = 3 * corr_len if margin is None else max(margin, 3 * corr_len)
        lo = pts.min(axis=0) - pad
        hi = pts.max(axis=0) + pad
        shape = tuple(int(math.ceil((hi[a] - lo[a]) / h)) + 1 for a in range(2))
        return cls((float(lo[0]), float(lo[1])), shape, float(h), float(corr_len))

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.origin) + self.spacing * (np.asarray(self.shape) - 1)


@dataclass(frozen=True)
class RandomFieldRealization:
    """Samples of ``mu`` on ``spec``'s grid."""

    spec: FieldSpec
    samples: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.shape != tuple(self.spec.shape):
            raise ValidationError(f"samples shape {s.shape} != grid shape {self.spec.shape}")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def contains(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        lo = np.asarray(self.spec.origin)
        hi = self.spec.upper
        tol = 1e-9 * self.spec.spacing
        return np.all((p >= lo - tol) & (p <= hi + tol), axis=-1)

    def at(self, points) -> np.ndarray:
        """Bilinear interpolation of the field at physical ``points`` (..., 2)."""
        p = np.asarray(points, dtype=float)
        if not np.all(self.contains(p)):
            raise DomainError("field evaluated outside its grid")
        idx = (p - np.asarray(self.spec.origin)) / self.spec.spacing
        flat = idx.reshape(-1, 2).T
        vals = ndimage.map_coordinates(self.samples, flat, order=1, mode="nearest")
        return vals.reshape(p.shape[:-1])


def _embedding_eigenvalues(shape: tuple[int, int], spacing: float, corr_len: float) -> np.ndarray:
    d = []
    for n in shape:
        i = np.arange(n)
        d.append(np.minimum(i, n - i) * spacing)
    r2 = d[0][:, None] ** 2 + d[1][None, :] ** 2
    cov = np.exp(-r2 / (2 * corr_len ** 2))
    lam = sfft.fft2(cov).real
    return np.clip(lam, 0.0, None)


def sample_mu_field(spec: FieldSpec, seed) -> RandomFieldRealization:
    """Stationary Gaussian field with covariance ``exp(-r^2/(2 l^2))``.

    Circulant embedding on a periodic grid padded by at least ``6*l`` on each
    axis, so wraparound correlations are below ``exp(-18)``. ``seed`` is
    anything accepted by :func:`numpy.random.default_rng`.
    """
    pad = int(math.ceil(6 * spec.corr_len / spec.spacing))
    ext = tuple(sfft.next_fast_len(n + pad) for n in spec.shape)
    lam = _embedding_eigenvalues(ext, spec.spacing, spec.corr_len)
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal(ext) + 1j * rng.standard_normal(ext)
    z = sfft.fft2(np.sqrt(lam / lam.size) * xi)
    samples = z.real[: spec.shape[0], : spec.shape[1]].copy()
    return RandomFieldRealization(spec, samples, seed if isinstance(seed, int) else None)


def realization_seed(seed: int, index: int) -> list[int]:
    """Per-realization seed material; independent streams for each index."""
    return [int(seed), int(index)]


# ---------------------------------------------------------------------------
# travel-time perturbation
# ---------------------------------------------------------------------------

def nu(x, y, field: RandomFieldRealization, sigma: float, l: float | None = None,
       c0: float = C0) -> np.ndarray:
    """Travel-time perturbation along the straight ray from ``x`` to ``y``.

    ``sigma*|x-y|/(2*c0) * int_0^1 mu(y + s*(x-y)) ds`` evaluated with the
    composite midpoint rule at step ``<= min(l/4, |x-y|/64)``. ``x`` and ``y``
    broadcast to ``(..., 2)``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x, y = np.broadcast_arrays(x, y)
    if sigma == 0:
        return np.zeros(x.shape[:-1])
    l = field.spec.corr_len if l is None else l
    seg = x - y
    length = np.linalg.norm(seg, axis=-1)
    if np.any(length == 0):
        raise DomainError("travel time requested for coincident points")
    step = np.minimum(l / 4, length / 64)
    n = int(np.max(np.ceil(length / step)))
    s = (np.arange(n) + 0.5) / n
    pts = y[..., None, :] + s[:, None] * seg[..., None, :]
    mean_mu = field.at(pts).mean(axis=-1)
    return sigma * length / (2 * c0) * mean_mu


def nu_matrix(xs, ys, field: RandomFieldRealization, sigma: float, c0: float = C0) -> np.ndarray:
    """``nu(xs[a], ys[b])`` for all pairs, shape ``(len(xs), len(ys))``."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    return nu(xs[:, None, :], ys[None, :, :], field, sigma, c0=c0)


def green_random(x, y, omega, field: RandomFieldRealization, sigma: float,
                 l: float | None = None, c0: float = C0):
    """``G0(x, y; omega) * exp(i*omega*nu(x, y))``."""
    return green_homogeneous(x, y, omega, c0) * np.exp(1j * np.asarray(omega) * nu(x, y, field, sigma, l, c0))


# ---------------------------------------------------------------------------
# media
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HomogeneousMedium:
    c0: float = C0

    def __post_init__(self):
        if self.c0 <= 0:
            raise ValidationError("wave speed must be positive")

    def travel_time(self, xs, ys) -> np.ndarray:
        return np.zeros((np.atleast_2d(xs).shape[0], np.atleast_2d(ys).shape[0]))

    def green_matrix(self, xs, ys, omega, travel=None) -> np.ndarray:
        return pairwise_green(xs, ys, omega, self.c0)


@dataclass(frozen=True)
class RandomPhaseMedium:
    """One realization of the random travel-time medium.

    ``nu`` is evaluated from a single field realization for every (element,
    point) pair, so phase errors are correlated across the array.
    """

    sigma: float
    corr_len: float
    field: RandomFieldRealization
    c0: float = C0
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.sigma < 0:
            raise ValidationError("sigma must be nonnegative")
        if self.corr_len <= 0:
            raise ValidationError("correlation length must be positive")

    @classmethod
    def realize(cls, sigma: float, corr_len: float, point_sets, seed,
                spacing: float | None = None, c0: float = C0) -> "RandomPhaseMedium":
        """Draw a field covering every segment between the given point sets."""
        spec = FieldSpec.covering(*point_sets, corr_len=corr_len, spacing=spacing)
        return cls(sigma, corr_len, sample_mu_field(spec, seed), c0)

    def travel_time(self, xs, ys) -> np.ndarray:
        key = (np.asarray(xs, dtype=float).tobytes(), np.asarray(ys, dtype=float).tobytes())
        if key not in self._cache:
            self._cache[key] = nu_matrix(xs, ys, self.field, self.sigma, self.c0)
        return self._cache[key]

    def green_matrix(self, xs, ys, omega, travel=None) -> np.ndarray:
        t = self.travel_time(xs, ys) if travel is None else travel
        return pairwise_green(xs, ys, omega, self.c0) * np.exp(1j * omega * t)


# ---------------------------------------------------------------------------
# closed-form moments
# ---------------------------------------------------------------------------

def tau_c(sigma: float, l: float, L: float, c0: float = C0) -> float:
    """Standard deviation of ``nu``: ``sqrt(sqrt(2*pi)*sigma^2*l*L/(4*c0^2))``."""
    return math.sqrt(math.sqrt(2 * math.pi) * sigma ** 2 * l * L / (4 * c0 ** 2))


def sigma0(l: float, L: float, lambda0: float = 1.0) -> float:
    """Fluctuation strength giving O(1) phase errors: ``lambda0/sqrt(l*L)``."""
    return lambda0 / math.sqrt(l * L)


def sigma_from_epsilon(epsilon: float, l: float, L: float, lambda0: float = 1.0) -> float:
    return epsilon * sigma0(l, L, lambda0)


def covariance_C(r):
    """``C(r) = (1/r) * int_0^r exp(-u^2/2) du`` with ``C(0) = 1``."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainError("covariance_C needs r >= 0")
    out = np.ones_like(r)
    small = r < 1e-4
    big = ~small
    out[big] = math.sqrt(math.pi / 2) * erf(r[big] / math.sqrt(2)) / r[big]
    out[small] = 1 - r[small] ** 2 / 6
    return out if out.ndim else float(out)


def decoherence_params(tau: float, l: float, omega0: float = 1.0) -> tuple[float, float]:
    """Decoherence frequency ``1/tau`` and distance ``sqrt(3)*l/(omega0*tau)``."""
    return 1.0 / tau, math.sqrt(3) * l / (omega0 * tau)


def moment_exp_nu(omega, tau: float):
    """``E exp(i*omega*nu) = exp(-omega^2 tau^2 / 2)``."""
    return np.exp(-np.asarray(omega) ** 2 * tau ** 2 / 2)


def moment_exp_cross(omega, omega_prime, offset, tau: float, l: float,
                     form: str = "exact", omega0: float = 1.0):
    """``E exp(i*omega*nu(x) - i*omega'*nu(x'))`` with ``offset = |x - x'|``.

    ``form="gaussian"`` uses the small-offset, narrow-band approximation in
    terms of the decoherence parameters.
    """
    omega = np.asarray(omega, dtype=float)
    omega_prime = np.asarray(omega_prime, dtype=float)
    offset = np.asarray(offset, dtype=float)
    if form == "exact":
        c = covariance_C(offset / l)
        return np.exp(-(omega - omega_prime) ** 2 * tau ** 2 / 2
                      - omega * omega_prime * tau ** 2 * (1 - c))
    if form == "gaussian":
        om_d, x_d = decoherence_params(tau, l, omega0)
        return np.exp(-(omega - omega_prime) ** 2 / (2 * om_d ** 2) - offset ** 2 / (2 * x_d ** 2))
    raise ValueError(f"unknown form {form!r}")


def moment_green_product(x, x_prime, y, omega, omega_prime, tau: float, l: float,
                         c0: float = C0, form: str = "gaussian", omega0: float = 1.0):
    """Mean and variance of ``G(x, y; omega) * conj(G(x', y; omega'))``.

    The mean always uses the exact cross moment. The variance uses
    ``1 - exp(-(dw)^2/Omega_d^2 - dx^2/X_d^2)`` for ``form="gaussian"`` and
    ``1 - exp(-E[(omega*nu - omega'*nu')^2])`` for ``form="exact"``.
    """
    g = green_homogeneous(x, y, omega, c0)
    gp = green_homogeneous(x_prime, y, omega_prime, c0)
    offset = np.linalg.norm(np.asarray(x, float) - np.asarray(x_prime, float), axis=-1)
    mean = g * np.conj(gp) * moment_exp_cross(omega, omega_prime, offset, tau, l, "exact", omega0)
    if form == "gaussian":
        om_d, x_d = decoherence_params(tau, l, omega0)
        v = (np.asarray(omega) - omega_prime) ** 2 / om_d ** 2 + offset ** 2 / x_d ** 2
    elif form == "exact":
        c = covariance_C(offset / l)
        v = ((np.asarray(omega) - omega_prime) ** 2 * tau ** 2
             + 2 * np.asarray(omega) * omega_prime * tau ** 2 * (1 - c))
    else:
        raise ValueError(f"unknown form {form!r}")
    var = np.abs(g * gp) ** 2 * (1 - np.exp(-v))
    return mean, var


@dataclass
class RegimeDiagnostics:
    amplitude_ratio: float      # sigma^2 L^3 / l^3, must be << 1
    phase_ratio: float          # lambda^2 / (sigma^2 l L) = 1/epsilon^2
    epsilon: float
    sigma0: float
    tau_c: float                # dimensionless (omega0 = 1)
    omega_d: float
    x_d: float
    warnings: list[str] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.warnings


def validate_regime(sigma: float, l: float, L: float, lambda0: float = 1.0,
                    emit: bool = True) -> RegimeDiagnostics:
    """Check the travel-time model's validity conditions."""
    if min(sigma, l, L, lambda0) <= 0:
        raise ValidationError("sigma, l, L and lambda0 must be positive")
    s0 = sigma0(l, L, lambda0)
    eps = sigma / s0
    tau = tau_c(sigma, l / lambda0, L / lambda0)
    om_d, x_d = decoherence_params(tau, l / lambda0)
    diag = RegimeDiagnostics(
        amplitude_ratio=sigma ** 2 * L ** 3 / l ** 3,
        phase_ratio=lambda0 ** 2 / (sigma ** 2 * l * L),
        epsilon=eps, sigma0=s0, tau_c=tau, omega_d=om_d, x_d=x_d,
    )
    if diag.amplitude_ratio > 0.1:
        diag.warnings.append(
            f"sigma^2 L^3/l^3 = {diag.amplitude_ratio:.3g} is not << 1: amplitude fluctuations not negligible")
    if eps > 3:
        diag.warnings.append(f"epsilon = {eps:.3g} >> 1: array phases are fully decorrelated")
    if l < 10 * lambda0:
        diag.warnings.append(f"l = {l:.3g} lambda0 is not >> lambda0: geometric optics questionable")
    if L < 10 * l:
        diag.warnings.append(f"L/l = {L / l:.3g} is not >> 1: travel-time statistics not Gaussian")
    if emit:
        for w in diag.warnings:
            warnings.warn(w, RegimeWarning, stacklevel=2)
    return diag
