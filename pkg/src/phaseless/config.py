"""TOML experiment configuration.

Dimensional values carry an explicit unit tag, e.g. ``"500 lambda0"``,
``"250 nm"``, ``"580 THz"``. Two relative tags are accepted for mask
thresholds: ``"0.25 a"`` (fraction of the array aperture) and ``"0.12 B"``
(fraction of the bandwidth).

Sections
--------
``[array]``
    ``elements`` and ``aperture`` (equispaced linear array, optional
    ``center``), or an explicit ``positions`` list. ``colocated`` defaults to
    true.
``[frequencies]``
    ``fmin``, ``fmax``, ``count`` or an explicit ``list``; ``f0`` defaults to
    600 THz.
``[window]``
    ``center``, ``extent``, ``pixel`` (pairs of lengths).
``[scene]``
    ``positions`` (pairs of lengths) and ``reflectivities`` (numbers or
    ``[re, im]`` pairs; default all ones).
``[medium]``
    ``kind = "homogeneous"`` (default) or ``"random"`` with ``corr_len`` and
    either ``epsilon`` or ``sigma``; ``propagation`` (L) defaults to the range
    of the window center.
``[run]``
    ``seed`` (default 0), ``realizations`` (default 1), ``noise_snr_db``,
    ``receiver`` (1-based, default: center element), ``protocol``,
    ``x_d``/``omega_d`` mask thresholds, ``functionals``, ``m_est``.
"""
from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field
from typing import Any

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .scene import ArrayGeometry, FrequencyGrid, ImageWindow, Scene, ValidationError

SPEED_OF_LIGHT = 299_792_458.0
LENGTH_UNITS = {"lambda0": None, "nm": 1e-9, "um": 1e-6, "mm": 1e-3, "m": 1.0}
FREQ_UNITS = {"THz": 1.0, "GHz": 1e-3, "Hz": 1e-12}
SECTIONS = ("array", "frequencies", "window", "scene", "medium", "run")
_QTY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-z0-9]+)\s*$")


class ConfigError(ValueError):
    """Schema violation; ``path`` is the dotted key path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def _quantity(value, path: str) -> tuple[float, str]:
    if not isinstance(value, str):
        raise ConfigError(path, f"expected a quantity with a unit tag, got {value!r}")
    m = _QTY.match(value)
    if not m:
        raise ConfigError(path, f"cannot parse quantity {value!r}")
    return float(m.group(1)), m.group(2)


def parse_frequency(value, path: str) -> float:
    """Frequency in THz."""
    x, unit = _quantity(value, path)
    if unit not in FREQ_UNITS:
        raise ConfigError(path, f"unknown frequency unit {unit!r}; use one of {', '.join(FREQ_UNITS)}")
    return x * FREQ_UNITS[unit]


def parse_length(value, path: str, f0_thz: float) -> float:
    """Length in lambda0 (``lambda0 = c / f0``)."""
    x, unit = _quantity(value, path)
    if unit not in LENGTH_UNITS:
        raise ConfigError(path, f"unknown length unit {unit!r}; use one of {', '.join(LENGTH_UNITS)}")
    if unit == "lambda0":
        return x
    lam0 = SPEED_OF_LIGHT / (f0_thz * 1e12)
    return x * LENGTH_UNITS[unit] / lam0


def _pair(value, path, f0):
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(path, "expected a pair [cross-range, range]")
    return tuple(parse_length(v, f"{path}[{i}]", f0) for i, v in enumerate(value))


def _get(tbl: dict, key: str, path: str, required: bool = True, default=None):
    if key in tbl:
        return tbl[key]
    if required:
        raise ConfigError(f"{path}.{key}", "missing required key")
    return default


def _fmt(x: float, unit: str) -> str:
    return f"{x!r} {unit}"


@dataclass
class MediumConfig:
    kind: str = "homogeneous"
    corr_len: float | None = None
    epsilon: float | None = None
    sigma: float | None = None
    propagation: float | None = None
    spacing: float | None = None

    def resolved_sigma(self) -> float:
        from .medium import sigma_from_epsilon
        if self.kind != "random":
            return 0.0
        if self.sigma is not None:
            return self.sigma
        return sigma_from_epsilon(self.epsilon, self.corr_len, self.propagation)


@dataclass
class RunConfig:
    seed: int = 0
    realizations: int = 1
    noise_snr_db: float | None = None
    receiver: int | None = None
    protocol: str = "hermitian"
    x_d: float | None = None
    omega_d: float | None = None
    functionals: list[str] = field(default_factory=lambda: ["km", "interf", "srint"])
    m_est: int | None = None


@dataclass
class ExperimentConfig:
    geometry: ArrayGeometry
    freqs: FrequencyGrid
    window: ImageWindow
    scene: Scene
    medium: MediumConfig
    run: RunConfig

    @property
    def receiver(self) -> int:
        """0-based imaging receiver."""
        return self.geometry.center_index() if self.run.receiver is None else self.run.receiver - 1


def _parse_array(tbl, f0):
    colocated = bool(tbl.get("colocated", True))
    if "positions" in tbl:
        pos = [_pair(p, f"array.positions[{i}]", f0) for i, p in enumerate(tbl["positions"])]
        return ArrayGeometry(pos, colocated)
    n = _get(tbl, "elements", "array")
    if not isinstance(n, int) or n < 1:
        raise ConfigError("array.elements", f"must be a positive integer, got {n!r}")
    aperture = parse_length(_get(tbl, "aperture", "array", n > 1, "0 lambda0"), "array.aperture", f0)
    center = _pair(tbl.get("center", ["0 lambda0", "0 lambda0"]), "array.center", f0)
    return ArrayGeometry.linear(aperture, n, center, colocated)


def _parse_freqs(tbl, f0):
    if "list" in tbl:
        fs = [parse_frequency(v, f"frequencies.list[{i}]") for i, v in enumerate(tbl["list"])]
        return FrequencyGrid(fs, f0)
    fmin = parse_frequency(_get(tbl, "fmin", "frequencies"), "frequencies.fmin")
    fmax = parse_frequency(_get(tbl, "fmax", "frequencies"), "frequencies.fmax")
    count = _get(tbl, "count", "frequencies")
    if not isinstance(count, int) or count < 1:
        raise ConfigError("frequencies.count", f"must be a positive integer, got {count!r}")
    return FrequencyGrid.band(fmin, fmax, count, f0)


def _parse_scene(tbl, f0):
    positions = _get(tbl, "positions", "scene")
    if not isinstance(positions, list):
        raise ConfigError("scene.positions", "expected a list of pairs")
    pos = [_pair(p, f"scene.positions[{i}]", f0) for i, p in enumerate(positions)]
    refl_raw = tbl.get("reflectivities", [1.0] * len(pos))
    if len(refl_raw) != len(pos):
        raise ConfigError("scene.reflectivities", f"{len(refl_raw)} values for {len(pos)} scatterers")
    refl = []
    for i, r in enumerate(refl_raw):
        if isinstance(r, (int, float)):
            refl.append(complex(r))
        elif isinstance(r, list) and len(r) == 2 and all(isinstance(v, (int, float)) for v in r):
            refl.append(complex(r[0], r[1]))
        else:
            raise ConfigError(f"scene.reflectivities[{i}]", f"expected a number or [re, im], got {r!r}")
    if not pos:
        raise ValidationError("scene needs at least one scatterer")
    return Scene.from_arrays(pos, refl)


def _parse_medium(tbl, f0, window):
    kind = tbl.get("kind", "homogeneous")
    if kind not in ("homogeneous", "random"):
        raise ConfigError("medium.kind", f"must be 'homogeneous' or 'random', got {kind!r}")
    if kind == "homogeneous":
        return MediumConfig()
    corr = parse_length(_get(tbl, "corr_len", "medium"), "medium.corr_len", f0)
    prop = tbl.get("propagation")
    prop = parse_length(prop, "medium.propagation", f0) if prop is not None else float(window.center[1])
    eps, sigma = tbl.get("epsilon"), tbl.get("sigma")
    if (eps is None) == (sigma is None):
        raise ConfigError("medium", "give exactly one of 'epsilon' and 'sigma'")
    for key, v in (("epsilon", eps), ("sigma", sigma)):
        if v is not None and (not isinstance(v, (int, float)) or v < 0):
            raise ConfigError(f"medium.{key}", f"must be a nonnegative number, got {v!r}")
    spacing = tbl.get("spacing")
    spacing = parse_length(spacing, "medium.spacing", f0) if spacing is not None else None
    return MediumConfig("random", corr, None if eps is None else float(eps),
                        None if sigma is None else float(sigma), prop, spacing)


def _parse_threshold(value, path, f0, aperture, bandwidth_thz, length: bool):
    x, unit = _quantity(value, path)
    if length:
        if unit == "a":
            return x * aperture
        return parse_length(value, path, f0)
    if unit == "B":
        return x * bandwidth_thz / f0
    return parse_frequency(value, path) / f0


def _parse_run(tbl, f0, geometry, freqs):
    run = RunConfig()
    seed = tbl.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("run.seed", f"must be a nonnegative integer, got {seed!r}")
    run.seed = seed
    run.realizations = tbl.get("realizations", 1)
    if not isinstance(run.realizations, int) or run.realizations < 1:
        raise ConfigError("run.realizations", "must be a positive integer")
    run.noise_snr_db = tbl.get("noise_snr_db")
    rec = tbl.get("receiver")
    if rec is not None and (not isinstance(rec, int) or not 1 <= rec <= geometry.n):
        raise ConfigError("run.receiver", f"must be an integer in 1..{geometry.n}")
    run.receiver = rec
    run.protocol = tbl.get("protocol", "hermitian")
    if run.protocol not in ("hermitian", "ordered"):
        raise ConfigError("run.protocol", "must be 'hermitian' or 'ordered'")
    if "x_d" in tbl:
        run.x_d = _parse_threshold(tbl["x_d"], "run.x_d", f0, geometry.aperture, freqs.bandwidth_thz, True)
    if "omega_d" in tbl:
        run.omega_d = _parse_threshold(tbl["omega_d"], "run.omega_d", f0, geometry.aperture,
                                       freqs.bandwidth_thz, False)
    from .imaging import FUNCTIONALS
    fun = tbl.get("functionals", run.functionals)
    bad = [f for f in fun if f not in FUNCTIONALS]
    if bad:
        raise ConfigError("run.functionals", f"unknown {bad}; valid: {', '.join(FUNCTIONALS)}")
    run.functionals = list(fun)
    run.m_est = tbl.get("m_est")
    return run


def parse_experiment_config(text: str | dict) -> ExperimentConfig:
    """Parse a TOML document (or an already-loaded mapping)."""
    if isinstance(text, str):
        try:
            doc = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("<document>", str(exc)) from exc
    else:
        doc = text
    unknown = [k for k in doc if k not in SECTIONS]
    if unknown:
        raise ConfigError(unknown[0], f"unknown section; valid: {', '.join(SECTIONS)}")
    for sec in ("array", "frequencies", "window", "scene"):
        if sec not in doc:
            raise ConfigError(sec, "missing required section")
    fr = doc["frequencies"]
    f0 = parse_frequency(fr.get("f0", "600 THz"), "frequencies.f0")
    geometry = _parse_array(doc["array"], f0)
    freqs = _parse_freqs(fr, f0)
    w = doc["window"]
    window = ImageWindow.centered(_pair(_get(w, "center", "window"), "window.center", f0),
                                  _pair(_get(w, "extent", "window"), "window.extent", f0),
                                  _pair(_get(w, "pixel", "window"), "window.pixel", f0))
    scene = _parse_scene(doc["scene"], f0)
    medium = _parse_medium(doc.get("medium", {}), f0, window)
    run = _parse_run(doc.get("run", {}), f0, geometry, freqs)
    return ExperimentConfig(geometry, freqs, window, scene, medium, run)


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("<document>", str(exc)) from exc
    return parse_experiment_config(doc)


def to_document(cfg: ExperimentConfig) -> dict[str, Any]:
    """Canonical mapping (lengths in lambda0, frequencies in THz)."""
    L = "lambda0"
    doc: dict[str, Any] = {
        "array": {"positions": [[_fmt(x, L), _fmt(z, L)] for x, z in cfg.geometry.positions.tolist()],
                  "colocated": cfg.geometry.colocated},
        "frequencies": {"list": [_fmt(f, "THz") for f in cfg.freqs.freqs_thz.tolist()],
                        "f0": _fmt(cfg.freqs.f0_thz, "THz")},
        "window": {"center": [_fmt(v, L) for v in cfg.window.center.tolist()],
                   "extent": [_fmt(v, L) for v in cfg.window.extent],
                   "pixel": [_fmt(v, L) for v in cfg.window.pixel]},
        "scene": {"positions": [[_fmt(x, L), _fmt(z, L)] for x, z in cfg.scene.positions.tolist()],
                  "reflectivities": [[a.real, a.imag] for a in cfg.scene.reflectivities.tolist()]},
    }
    m = cfg.medium
    if m.kind == "random":
        med: dict[str, Any] = {"kind": "random", "corr_len": _fmt(m.corr_len, L), "propagation": _fmt(m.propagation, L)}
        if m.epsilon is not None:
            med["epsilon"] = m.epsilon
        else:
            med["sigma"] = m.sigma
        if m.spacing is not None:
            med["spacing"] = _fmt(m.spacing, L)
        doc["medium"] = med
    else:
        doc["medium"] = {"kind": "homogeneous"}
    r = cfg.run
    run: dict[str, Any] = {"seed": r.seed, "realizations": r.realizations, "protocol": r.protocol,
                           "functionals": list(r.functionals)}
    for key in ("noise_snr_db", "receiver", "m_est"):
        if getattr(r, key) is not None:
            run[key] = getattr(r, key)
    if r.x_d is not None:
        run["x_d"] = _fmt(r.x_d, L)
    if r.omega_d is not None:
        run["omega_d"] = _fmt(r.omega_d * cfg.freqs.f0_thz, "THz")
    doc["run"] = run
    return doc


def serialize(cfg: ExperimentConfig) -> str:
    return tomli_w.dumps(to_document(cfg))

