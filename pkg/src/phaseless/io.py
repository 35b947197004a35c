"""File formats.

Binary arrays: one JSON header line (``dims``, ``dtype`` and free metadata)
followed by the little-endian payload; complex data is interleaved re/im
doubles. Small arrays can also go to CSV in long format. Intensity records are
CSV rows ``kind,i,j,receiver,intensity`` with 1-based indices (``j`` empty for
single illuminations).
"""
from __future__ import annotations

import csv
import json
from collections import defaultdict
from pathlib import Path

import numpy as np

from .forward import MultiFreqResponse
from .medium import FieldSpec, RandomFieldRealization
from .scene import FrequencyGrid

_DTYPES = {"complex128": "<c16", "float64": "<f8"}


def _write_binary(path, arr: np.ndarray, dtype: str, meta: dict) -> None:
    header = dict(meta, dims=list(arr.shape), dtype=dtype)
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
        fh.write(np.ascontiguousarray(arr, dtype=_DTYPES[dtype]).tobytes())


def _read_binary(path) -> tuple[np.ndarray, dict]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        payload = fh.read()
    dtype = header.get("dtype")
    if dtype not in _DTYPES:
        raise ValueError(f"{path}: unsupported dtype {dtype!r}")
    arr = np.frombuffer(payload, dtype=_DTYPES[dtype])
    dims = tuple(header["dims"])
    if arr.size != int(np.prod(dims)):
        raise ValueError(f"{path}: payload has {arr.size} values, header says {dims}")
    return arr.reshape(dims).astype(dtype), header


def write_complex(path, arr, **meta) -> None:
    _write_binary(path, np.asarray(arr, dtype=complex), "complex128", meta)


def read_complex(path) -> tuple[np.ndarray, dict]:
    arr, meta = _read_binary(path)
    return arr.astype(complex), meta


def write_response(path, P: MultiFreqResponse) -> None:
    write_complex(path, P.blocks, kind="response", freqs_thz=P.freqs.freqs_thz.tolist(),
                  f0_thz=P.freqs.f0_thz)


def read_response(path) -> MultiFreqResponse:
    arr, meta = read_complex(path)
    if meta.get("kind") != "response" or arr.ndim != 3:
        raise ValueError(f"{path}: not a response file")
    return MultiFreqResponse(arr, FrequencyGrid(meta["freqs_thz"], meta["f0_thz"]))


def write_complex_csv(path, arr) -> None:
    """Long format: one row per entry, index columns then ``re, im``."""
    arr = np.asarray(arr, dtype=complex)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"i{d}" for d in range(arr.ndim)] + ["re", "im"])
        for idx in np.ndindex(arr.shape):
            v = arr[idx]
            w.writerow(list(idx) + [repr(float(v.real)), repr(float(v.imag))])


def read_complex_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    ndim = len(rows[0]) - 2
    idx = np.array([[int(v) for v in r[:ndim]] for r in rows[1:]], dtype=int).reshape(-1, ndim)
    shape = tuple(idx.max(axis=0) + 1) if idx.size else (0,) * ndim
    out = np.zeros(shape, dtype=complex)
    for r, i in zip(rows[1:], idx):
        out[tuple(i)] = complex(float(r[-2]), float(r[-1]))
    return out


# --- intensity records -------------------------------------------------------

def write_intensity_records(path, records) -> int:
    """``records`` yields ``(kind, i, j, receiver, value)`` with 0-based indices."""
    n = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "i", "j", "receiver", "intensity"])
        for kind, i, j, r, v in records:
            w.writerow([kind, i + 1, "" if j is None else j + 1, r + 1, repr(float(v))])
            n += 1
    return n


def read_intensity_records(path) -> dict[int, dict]:
    """``{receiver: {(kind, i, j): intensity}}`` with 0-based indices."""
    out: dict[int, dict] = defaultdict(dict)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"kind", "i", "j", "receiver", "intensity"} - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for line, row in enumerate(reader, start=2):
            try:
                j = None if row["j"] == "" else int(row["j"]) - 1
                key = (row["kind"], int(row["i"]) - 1, j)
                out[int(row["receiver"]) - 1][key] = float(row["intensity"])
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{line}: malformed record ({exc})") from exc
    return dict(out)


# --- random fields -------------------------------------------------------------

def write_field(path, field: RandomFieldRealization) -> None:
    s = field.spec
    _write_binary(path, field.samples, "float64",
                  {"kind": "field", "origin": list(s.origin), "spacing": s.spacing,
                   "corr_len": s.corr_len, "seed": field.seed})


def read_field(path) -> RandomFieldRealization:
    arr, meta = _read_binary(path)
    spec = FieldSpec(tuple(meta["origin"]), arr.shape, meta["spacing"], meta["corr_len"])
    return RandomFieldRealization(spec, arr, meta.get("seed"))


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
