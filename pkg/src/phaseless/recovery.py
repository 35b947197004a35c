"""Interferometric data from intensity-only measurements.

A receiver ``r`` records only ``|P_r f|^2``. Illuminating with ``e_i``,
``e_i + e_j`` and ``e_i - 1j*e_j`` and combining the three intensities with
the polarization identity yields ``m_ij = conj(p_ri) * p_rj`` exactly, so
``M_r = P_r^* P_r`` is recovered without any phase retrieval.

For colocated arrays the response blocks are symmetric, and one column of
every ``M_r`` is enough to rebuild the whole block row ``P`` up to a single
global phase, hence the full matrix ``M = P^* P`` and every cross-receiver
product ``conj(p_ik) * p_jn``.

All indices in this module are 0-based composite indices ``s + l*N``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

import numpy as np

from .forward import add_noise, intensities

KINDS = ("single", "sum", "mix")


class RecoveryError(RuntimeError):
    pass


class MissingMeasurementsError(RecoveryError):
    def __init__(self, missing: Sequence[tuple[str, int, int | None]]):
        self.missing = list(missing)
        shown = ", ".join(f"{k}({i + 1},{'' if j is None else j + 1})" for k, i, j in self.missing[:20])
        more = "" if len(self.missing) <= 20 else f" ... ({len(self.missing)} total)"
        super().__init__(f"missing measurements (1-based): {shown}{more}")


class SingularReferenceError(RecoveryError):
    def __init__(self, pair: tuple[int, int], value: float, tol: float):
        self.pair = pair
        super().__init__(
            f"reference entry for receivers ({pair[0] + 1}, {pair[1] + 1}) has modulus "
            f"{value:.3e} < tol {tol:.3e}; choose another reference index")


class IntensityOracle(Protocol):
    """Measures ``|P_r f|^2`` at one receiver for protocol illuminations.

    ``measure(kind, i, j)`` takes equal-length integer arrays and returns one
    intensity per entry; ``j`` is ignored for ``kind == "single"``.
    """

    size: int

    def measure(self, kind: str, i: np.ndarray, j: np.ndarray | None = None) -> np.ndarray: ...


class SimulatedOracle:
    """Intensities computed from a known response row ``P_r``.

    With ``noise_snr_db`` set, complex Gaussian noise is added to the field
    ``P_r f`` before taking the modulus.
    """

    def __init__(self, row, noise_snr_db: float | None = None, rng=None):
        self.row = np.asarray(row, dtype=complex)
        self.size = self.row.shape[0]
        self.noise_snr_db = noise_snr_db
        self.rng = np.random.default_rng(rng)
        self._ref_power = float(np.mean(np.abs(self.row) ** 2))

    def field(self, kind: str, i, j=None) -> np.ndarray:
        i = np.asarray(i)
        p = self.row
        if kind == "single":
            return p[i]
        j = np.asarray(j)
        if kind == "sum":
            return p[i] + p[j]
        if kind == "mix":
            return p[i] - 1j * p[j]
        raise ValueError(f"unknown illumination kind {kind!r}")

    def measure(self, kind: str, i, j=None) -> np.ndarray:
        b = self.field(kind, i, j)
        if self.noise_snr_db is not None:
            std = np.sqrt(self._ref_power / 10 ** (self.noise_snr_db / 10) / 2)
            b = b + std * (self.rng.standard_normal(b.shape) + 1j * self.rng.standard_normal(b.shape))
        return intensities(b)

    def intensity(self, f) -> float:
        """``|P_r f|^2`` for an arbitrary composite illumination."""
        b = np.atleast_1d(self.row @ np.asarray(f))
        if self.noise_snr_db is not None:
            b = add_noise(b, self.noise_snr_db, self.rng)
        return float(intensities(b)[0])


class CountingOracle:
    """Wraps an oracle and counts measurements per illumination kind."""

    def __init__(self, inner: IntensityOracle):
        self.inner = inner
        self.size = inner.size
        self.counts = dict.fromkeys(KINDS, 0)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def measure(self, kind, i, j=None):
        out = self.inner.measure(kind, i, j)
        self.counts[kind] += int(np.size(out))
        return out


class ReplayOracle:
    """Serves recorded intensities; ``records`` maps ``(kind, i, j)`` to a value.

    Singles are keyed with ``j = None``.
    """

    def __init__(self, records: dict, size: int, receiver: int | None = None):
        self.records = records
        self.size = size
        self.receiver = receiver

    def measure(self, kind, i, j=None):
        i = np.atleast_1d(i)
        js = [None] * len(i) if kind == "single" else np.atleast_1d(j)
        keys = [(kind, int(a), None if b is None else int(b)) for a, b in zip(i, js)]
        missing = [k for k in keys if k not in self.records]
        if missing:
            raise MissingMeasurementsError(missing)
        return np.array([self.records[k] for k in keys], dtype=float)

    def check_complete(self, protocol: str = "hermitian") -> None:
        """Raise listing every measurement the protocol needs but the records lack."""
        missing = [k for k in measurement_keys(self.size, protocol) if k not in self.records]
        if missing:
            raise MissingMeasurementsError(missing)


def measurement_keys(size: int, protocol: str = "hermitian") -> Iterable[tuple[str, int, int | None]]:
    """Every ``(kind, i, j)`` the recovery protocol measures, in order."""
    for i in range(size):
        yield ("single", i, None)
    for i in range(size):
        js = range(i + 1, size) if protocol == "hermitian" else (j for j in range(size) if j != i)
        for j in js:
            yield ("sum", i, j)
            yield ("mix", i, j)


def polarization_inner(n_sum, n_x, n_y, n_mix):
    """``<x, y> = x^* y`` from ``|x+y|^2, |x|^2, |y|^2, |x - 1j*y|^2``."""
    vals = [np.asarray(v, dtype=float) for v in (n_sum, n_x, n_y, n_mix)]
    if any(np.any(v < 0) for v in vals):
        raise ValueError("intensities must be nonnegative")
    n_sum, n_x, n_y, n_mix = vals
    out = 0.5 * (n_sum - n_x - n_y) + 0.5j * (n_mix - n_x - n_y)
    return out if out.ndim else complex(out)


@dataclass
class SingleReceiverMatrix:
    """``M_r = P_r^* P_r`` recovered at one receiver."""

    matrix: np.ndarray
    receiver: int | None
    measurements: int

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def _measure(oracle, kind, i, j=None):
    try:
        return np.asarray(oracle.measure(kind, i, j), dtype=float)
    except RecoveryError:
        raise
    except Exception as exc:
        raise RecoveryError(f"oracle failed on {kind!r} illumination: {exc}") from exc


def recover_Mr(oracle: IntensityOracle, n: int, s: int, protocol: str = "hermitian",
               receiver: int | None = None) -> SingleReceiverMatrix:
    """Recover ``M_r`` with the three-illumination polarization protocol.

    ``protocol="hermitian"`` measures each unordered pair once and fills the
    lower triangle by conjugation: ``NS + NS*(NS-1)`` measurements.
    ``protocol="ordered"`` measures both orders and averages them (useful with
    noisy intensities): ``NS + 2*NS*(NS-1)`` measurements.
    """
    size = n * s
    if getattr(oracle, "size", size) != size:
        raise ValueError(f"oracle serves {oracle.size} illuminations, expected N*S = {size}")
    if protocol not in ("hermitian", "ordered"):
        raise ValueError(f"unknown protocol {protocol!r}")
    idx = np.arange(size)
    d = _measure(oracle, "single", idx)
    count = size
    M = np.zeros((size, size), dtype=complex)
    M[idx, idx] = d
    for i in range(size - 1):
        j = np.arange(i + 1, size)
        ii = np.full(j.shape, i)
        m = polarization_inner(_measure(oracle, "sum", ii, j), d[i], d[j], _measure(oracle, "mix", ii, j))
        count += 2 * j.size
        if protocol == "ordered":
            m_rev = polarization_inner(_measure(oracle, "sum", j, ii), d[j], d[i],
                                       _measure(oracle, "mix", j, ii))
            count += 2 * j.size
            M[j, i] = m_rev
            M[i, j] = m
        else:
            M[i, j] = m
            M[j, i] = np.conj(m)
    if protocol == "ordered":
        M = 0.5 * (M + M.conj().T)
    return SingleReceiverMatrix(M, receiver, count)


def recover_reference_column(oracle: IntensityOracle, n: int, s: int, ref: int = 0) -> np.ndarray:
    """Column ``ref`` of ``M_r`` only: ``m_{k,ref}`` for all ``k``.

    Needs ``N*S`` singles plus two measurements per ``k != ref``; this is all
    :func:`full_M_from_columns` uses.
    """
    size = n * s
    idx = np.arange(size)
    d = _measure(oracle, "single", idx)
    k = np.delete(idx, ref)
    r = np.full(k.shape, ref)
    col = np.empty(size, dtype=complex)
    col[ref] = d[ref]
    col[k] = polarization_inner(_measure(oracle, "sum", k, r), d[k], d[ref], _measure(oracle, "mix", k, r))
    return col


@dataclass
class FullInterferometricMatrix:
    """Full interferometric data rebuilt from single-receiver matrices.

    ``response`` is the block row ``P`` times one unknown global phase, which
    cancels in every interferometric product.
    """

    response: np.ndarray
    n: int
    s: int
    ref: int

    @property
    def matrix(self) -> np.ndarray:
        """``M = P^* P`` (``N*S x N*S``)."""
        return self.response.conj().T @ self.response

    def block(self, l: int) -> np.ndarray:
        """Single-frequency ``M(w_l) = P(w_l)^* P(w_l)`` (0-based ``l``)."""
        q = self.response[:, l * self.n:(l + 1) * self.n]
        return q.conj().T @ q

    def cross(self, i, k, j, n):
        """``conj(p_ik) * p_jn``: receivers ``i, j``, composite columns ``k, n``."""
        q = self.response
        return np.conj(q[i, k]) * q[j, n]


def full_M_from_columns(columns, n: int, s: int, ref: int = 0, tol: float | None = None,
                        colocated: bool = True, scale: float | None = None) -> FullInterferometricMatrix:
    """Rebuild ``P`` (up to a global phase) from column ``ref`` of every ``M_i``.

    ``columns[i][k] = m^i_{k,ref} = conj(p_ik) * p_i,ref``. With the reference
    source ``rs`` and frequency ``rl`` of composite index ``ref``, reciprocity
    ``p_{i,ref} = p_{rs, i + rl*N}`` turns each column of ``M_rs`` into the
    denominator needed to compare different receivers.
    """
    if not colocated:
        raise RecoveryError(
            "full interferometric matrix needs colocated sources and receivers: "
            "each receiver's data is known only up to its own phase otherwise")
    cols = np.asarray(columns, dtype=complex)
    size = n * s
    if cols.shape != (n, size):
        raise ValueError(f"expected {n} columns of length {size}, got {cols.shape}")
    rl, rs = divmod(ref, n)
    anchor = cols[rs]
    m_refref = anchor[ref].real
    if scale is None:
        scale = np.max(np.abs(anchor) ** 2) / m_refref if m_refref > 0 else 0.0
    tol = 1e-8 * scale if tol is None else tol
    if not m_refref > tol:
        raise SingularReferenceError((rs, rs), abs(m_refref), tol)
    c = np.arange(n) + rl * n
    den = anchor[c]
    bad = np.flatnonzero(np.abs(den) < tol)
    if bad.size:
        raise SingularReferenceError((int(bad[0]), rs), float(abs(den[bad[0]])), tol)
    q = np.sqrt(m_refref) * np.conj(cols) / den[:, None]
    return FullInterferometricMatrix(q, n, s, ref)


def recover_full_M(Mr_list, n: int, s: int, ref: int = 0, tol: float | None = None,
                   colocated: bool = True) -> FullInterferometricMatrix:
    """Full ``M = P^* P`` from the ``N`` single-receiver matrices (colocated arrays only).

    ``tol`` defaults to ``1e-8`` times the largest diagonal entry of the
    reference receiver's matrix; a smaller reference entry raises
    :class:`SingularReferenceError` instead of being regularized.
    """
    if not colocated:
        return full_M_from_columns(None, n, s, ref, tol, colocated)
    mats = [np.asarray(getattr(m, "matrix", m)) for m in Mr_list]
    if len(mats) != n:
        raise ValueError(f"need one matrix per receiver ({n}), got {len(mats)}")
    rs = ref % n
    scale = float(np.max(np.diag(mats[rs]).real))
    cols = np.stack([m[:, ref] for m in mats])
    return full_M_from_columns(cols, n, s, ref, tol, colocated, scale=scale)


def cross_product_quotient(Mr_list, i: int, k: int, j: int, nn: int, n: int, ref: int = 0) -> complex:
    """``conj(p_ik) p_jn = m^i_{k,ref} m^j_{ref,n} / m^{rs}_{c_j, c_i}``, entry by entry."""
    rl, rs = divmod(ref, n)
    mats = [np.asarray(getattr(m, "matrix", m)) for m in Mr_list]
    ci, cj = i + rl * n, j + rl * n
    return mats[i][k, ref] * mats[j][ref, nn] / mats[rs][cj, ci]


def single_frequency_interferometric(P) -> np.ndarray:
    """Time-reversal matrix ``P(w)^* P(w)``."""
    P = np.asarray(P)
    return P.conj().T @ P
