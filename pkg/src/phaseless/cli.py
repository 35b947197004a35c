"""Command-line front end.

Subcommands: ``simulate``, ``recover``, ``image``, ``moments`` and
``experiment <preset>``. Seeds and worker counts come from ``--seed`` and
``--jobs``, else from ``PHASELESS_SEED`` and ``PHASELESS_JOBS``, else from the
config (seed) or 1 (jobs).

Exit codes: 0 success, 1 runtime failure, 2 configuration or validation error.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import io as pio
from .config import ConfigError, ExperimentConfig, load_config, parse_frequency, parse_length, serialize
from .imaging import FUNCTIONALS, PAIRINGS, ImageMap, build_mask
from .medium import DomainError
from .moments import run_moments
from .pipeline import (build_medium, form_images, peak_report, recover_receiver, resolution_cell, simulate)
from .presets import PRESETS, get_preset, with_seed
from .recovery import (MissingMeasurementsError, RecoveryError, ReplayOracle, SimulatedOracle,
                       SingleReceiverMatrix, recover_full_M, recover_Mr)
from .scene import ValidationError

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2


class UsageError(ValueError):
    pass


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _env_int(name: str) -> int | None:
    v = os.environ.get(name)
    if v is None or v == "":
        return None
    try:
        return int(v)
    except ValueError:
        raise UsageError(f"environment variable {name} must be an integer, got {v!r}") from None


def _seed(args, default: int = 0) -> int:
    if args.seed is not None:
        return args.seed
    env = _env_int("PHASELESS_SEED")
    return default if env is None else env


def _jobs(args) -> int:
    jobs = args.jobs if args.jobs is not None else (_env_int("PHASELESS_JOBS") or 1)
    if jobs < 1:
        raise UsageError("--jobs must be >= 1")
    return jobs


def _ordered_map(fn, items, jobs: int) -> list:
    """Map in a bounded thread pool; results come back in input order."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _load(args) -> ExperimentConfig:
    if not args.config:
        raise UsageError("--config is required")
    return load_config(args.config)


def _out(args) -> Path:
    return pio.ensure_dir(args.out)


# --- simulate ------------------------------------------------------------------

def intensity_records(row, receiver: int, protocol: str = "hermitian", noise_snr_db=None, rng=None):
    """Protocol intensities at one receiver as ``(kind, i, j, receiver, value)`` (0-based)."""
    oracle = SimulatedOracle(row, noise_snr_db, rng)
    size = oracle.size
    idx = np.arange(size)
    for i, v in zip(idx, oracle.measure("single", idx)):
        yield ("single", int(i), None, receiver, float(v))
    for i in range(size):
        j = np.arange(i + 1, size) if protocol == "hermitian" else np.delete(idx, i)
        ii = np.full(j.shape, i)
        s = oracle.measure("sum", ii, j)
        m = oracle.measure("mix", ii, j)
        for jj, a, b in zip(j, s, m):
            yield ("sum", i, int(jj), receiver, float(a))
            yield ("mix", i, int(jj), receiver, float(b))


def cmd_simulate(args) -> int:
    cfg = _load(args)
    seed = _seed(args, cfg.run.seed)
    out = _out(args)
    medium = build_medium(cfg, seed)
    P = simulate(cfg, seed, medium)
    pio.write_response(out / "response.bin", P)
    (out / "config.toml").write_text(serialize(with_seed(cfg, seed)))
    if hasattr(medium, "field"):
        pio.write_field(out / "field.bin", medium.field)
    receivers = range(cfg.geometry.n) if args.all_receivers else [cfg.receiver]
    n = 0
    with open(out / "intensities.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "i", "j", "receiver", "intensity"])
        for r in receivers:
            for kind, i, j, rr, v in intensity_records(P.row(r), r, cfg.run.protocol, cfg.run.noise_snr_db,
                                                       [seed, r, 1]):
                w.writerow([kind, i + 1, "" if j is None else j + 1, rr + 1, repr(v)])
                n += 1
    _log(f"wrote response ({P.n}x{P.n}x{P.s}) and {n} intensity records to {out}")
    return EXIT_OK


# --- recover -------------------------------------------------------------------

def cmd_recover(args) -> int:
    cfg = _load(args)
    out = _out(args)
    n, s = cfg.geometry.n, cfg.freqs.s
    if args.full_matrix and not cfg.geometry.colocated:
        raise RecoveryError(
            "full interferometric matrix refused: sources and receivers are not colocated, so the "
            "per-receiver phases cannot be tied together by reciprocity")
    records = pio.read_intensity_records(args.records)
    receivers = sorted(records) if args.receiver is None else [args.receiver - 1]
    truth = pio.read_response(args.truth) if args.truth else None
    report = {"receivers": {}, "protocol": cfg.run.protocol}

    def one(r):
        if r not in records:
            raise MissingMeasurementsError([("single", 0, None)])
        oracle = ReplayOracle(records[r], n * s, r)
        oracle.check_complete(cfg.run.protocol)
        return recover_Mr(oracle, n, s, cfg.run.protocol, receiver=r)

    mats = _ordered_map(one, receivers, _jobs(args))
    for r, Mr in zip(receivers, mats):
        pio.write_complex(out / f"Mr_r{r + 1}.bin", Mr.matrix, kind="interferometric", receiver=r + 1,
                          n=n, s=s)
        entry = {"measurements": Mr.measurements}
        if truth is not None:
            row = truth.row(r)
            ref = np.outer(row.conj(), row)
            entry["max_rel_error"] = float(np.max(np.abs(Mr.matrix - ref)) / np.max(np.abs(ref)))
        report["receivers"][str(r + 1)] = entry
    if args.full_matrix:
        if len(mats) != n:
            raise ValidationError(f"full matrix needs records from all {n} receivers, got {len(mats)}")
        F = recover_full_M(mats, n, s, ref=args.ref - 1, colocated=cfg.geometry.colocated)
        M = F.matrix
        pio.write_complex(out / "M_full.bin", M, kind="interferometric_full", n=n, s=s)
        if truth is not None:
            Pm = truth.matrix
            ref = Pm.conj().T @ Pm
            report["full_max_rel_error"] = float(np.max(np.abs(M - ref)) / np.max(np.abs(ref)))
    (out / "recovery_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    for r, e in report["receivers"].items():
        err = e.get("max_rel_error")
        _log(f"receiver {r}: {e['measurements']} measurements" + ("" if err is None else f", error {err:.2e}"))
    return EXIT_OK


# --- image ---------------------------------------------------------------------

def _functionals(spec: list[str]) -> list[str]:
    names = [f.strip() for item in spec for f in item.split(",") if f.strip()]
    bad = [f for f in names if f not in FUNCTIONALS]
    if bad:
        raise ValidationError(f"unknown functional(s) {', '.join(bad)}; valid: {', '.join(FUNCTIONALS)}")
    return names


def _override_mask(cfg: ExperimentConfig, args) -> None:
    f0 = cfg.freqs.f0_thz
    if args.x_d is not None:
        v = args.x_d.strip()
        cfg.run.x_d = (float(v.split()[0]) * cfg.geometry.aperture if v.endswith(" a")
                       else parse_length(v, "--x-d", f0))
    if args.omega_d is not None:
        v = args.omega_d.strip()
        cfg.run.omega_d = (float(v.split()[0]) * cfg.freqs.bandwidth if v.endswith(" B")
                           else parse_frequency(v, "--omega-d") / f0)


def write_image_outputs(out: Path, images: dict[str, ImageMap], truth=None, cell=None,
                        extra: dict | None = None) -> list[dict]:
    rows = []
    peaks_rows, fwhm_rows = [], []
    for name, img in images.items():
        img.params.update(extra or {})
        img.write(out / name)
        rep = peak_report(img, truth if truth is not None else np.empty((0, 2)), cell or (1.0, 1.0))
        for rank, (p, v) in enumerate(zip(rep.positions, rep.values), start=1):
            peaks_rows.append([name, rank, f"{p[0]:.6f}", f"{p[1]:.6f}", repr(float(v))])
        for rank, w in enumerate(rep.widths, start=1):
            if w is not None:
                fwhm_rows.append([name, rank, f"{w.cross_range:.6f}", f"{w.range:.6f}",
                                  int(w.cross_clipped), int(w.range_clipped)])
        row = {"functional": name, "peaks": len(rep.values)}
        if truth is not None and len(np.atleast_2d(truth)):
            row["mean_displacement_cells"] = float(np.mean(rep.displacement))
            row["max_displacement_cells"] = float(np.max(rep.displacement))
        if rep.widths and rep.widths[0] is not None:
            row["fwhm_cross_range"] = float(rep.widths[0].cross_range)
            row["fwhm_range"] = float(rep.widths[0].range)
        rows.append(row)
    with open(out / "peaks.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["functional", "rank", "cross_range", "range", "value"])
        w.writerows(peaks_rows)
    with open(out / "fwhm.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["functional", "rank", "fwhm_cross_range", "fwhm_range", "cross_clipped", "range_clipped"])
        w.writerows(fwhm_rows)
    return rows


def cmd_image(args) -> int:
    cfg = _load(args)
    names = _functionals(args.functional) if args.functional else cfg.run.functionals
    _override_mask(cfg, args)
    if any(f in ("srint", "cint") for f in names) and (cfg.run.x_d is None or cfg.run.omega_d is None):
        raise ValidationError("srint/cint need mask thresholds: set run.x_d/run.omega_d or pass --x-d/--omega-d")
    out = _out(args)
    arr, meta = pio.read_complex(args.input)
    kind = meta.get("kind")
    P = Mr = None
    if kind == "response":
        P = pio.read_response(args.input)
        r = cfg.receiver
        row = P.row(r)
        Mr = SingleReceiverMatrix(np.outer(row.conj(), row), r, 0)
    elif kind == "interferometric":
        Mr = SingleReceiverMatrix(arr, int(meta["receiver"]) - 1, 0)
        needs_P = [f for f in names if f not in ("interf", "srint")]
        if needs_P:
            raise ValidationError(f"{', '.join(needs_P)} need a response file, got interferometric data")
    else:
        raise ValidationError(f"{args.input}: unsupported data kind {kind!r}")
    images = form_images(cfg, P, Mr, names, args.pairing)
    rows = write_image_outputs(out, images, cfg.scene.positions, resolution_cell(cfg))
    (out / "summary.json").write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")
    for row in rows:
        _log(json.dumps(row, sort_keys=True))
    return EXIT_OK


# --- moments -------------------------------------------------------------------

def cmd_moments(args) -> int:
    seed = _seed(args, 0)
    out = _out(args)
    t = time.perf_counter()
    rep = run_moments(args.n, seed, args.epsilon, args.corr_len, args.propagation, jobs=_jobs(args))
    rep.to_csv(out / "moments.csv")
    for w in rep.diagnostics.warnings:
        _log(f"warning: {w}")
    for k in ("epsilon", "tau_c", "omega_d", "x_d"):
        _log(f"{k} = {rep.derived[k]:.6g}")
    bad = rep.failures()
    _log(f"{len(rep.rows) - len(bad)}/{len(rep.rows)} moment checks within |z| <= 3 "
         f"(n = {rep.n}, {time.perf_counter() - t:.1f} s)")
    for r in bad:
        _log(f"  outside: {r.quantity} z = {r.z_score:+.2f}")
    return EXIT_OK


# --- experiment ------------------------------------------------------------------

def _mask_outputs(cfg: ExperimentConfig, out: Path) -> dict:
    """Mask factors as CSV/PGM/JSON; the full Kronecker mask as PGM only (it is large)."""
    from .scene import ImageWindow
    mask = build_mask(cfg.geometry, cfg.freqs, cfg.run.x_d, cfg.run.omega_d)
    res = {"n": mask.n, "s": mask.s, "x_d": mask.x_d, "omega_d": mask.omega_d,
           "source_band_center_row": int(mask.zx[mask.n // 2].sum()),
           "frequency_band_center_row": int(mask.zw[mask.s // 2].sum()), "nnz": mask.nnz}
    params = {"x_d": mask.x_d, "omega_d": mask.omega_d}
    for name, Z in (("mask_sources", mask.zx), ("mask_frequencies", mask.zw), ("mask_multi", mask.matrix)):
        iw = ImageWindow((0.0, 0.0), (float(Z.shape[0]), float(Z.shape[1])), (1.0, 1.0))
        img = ImageMap(Z.astype(float).ravel(), iw, name, params)
        if name == "mask_multi":
            img.to_pgm(out / f"{name}.pgm")
        else:
            img.write(out / name)
    return res


def _run_unit(unit):
    preset_name, case, seed, root = unit
    cfg = with_seed(case.config, seed)
    out = pio.ensure_dir(root / case.label / f"seed{seed}")
    if case.label == "masks":
        return {"case": case.label, "seed": seed, **_mask_outputs(cfg, out)}
    P = simulate(cfg, seed)
    Mr = None
    result = {"case": case.label, "seed": seed}
    if any(f in ("interf", "srint") for f in cfg.run.functionals):
        Mr = recover_receiver(cfg, P, seed=seed)
        row = P.row(Mr.receiver)
        ref = np.outer(row.conj(), row)
        result["recovery_max_rel_error"] = float(np.max(np.abs(Mr.matrix - ref)) / np.max(np.abs(ref)))
        result["measurements"] = Mr.measurements
    images = form_images(cfg, P, Mr)
    (out / "config.toml").write_text(serialize(cfg))
    result["images"] = write_image_outputs(out, images, cfg.scene.positions, resolution_cell(cfg),
                                           {"seed": seed})
    return result


def cmd_experiment(args) -> int:
    preset = get_preset(args.preset)
    seed = _seed(args, 0)
    root = pio.ensure_dir(Path(args.out) / preset.name)
    cases = preset.cases(full=args.full, seed=seed)
    units = [(preset.name, c, s, root) for c in cases for s in c.seeds]
    t = time.perf_counter()
    results = _ordered_map(_run_unit, units, _jobs(args))
    summary = {"preset": preset.name, "summary": preset.summary, "full": bool(args.full), "results": results}
    (root / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _log(f"{preset.name}: {len(units)} run(s) in {time.perf_counter() - t:.1f} s -> {root}")
    return EXIT_OK


# --- entry point -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML experiment config")
    common.add_argument("--seed", type=int, help="master seed (env PHASELESS_SEED)")
    common.add_argument("--jobs", type=int, help="worker threads (env PHASELESS_JOBS)")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--full", action="store_true", help="full-scale presets instead of desk-scale")

    p = argparse.ArgumentParser(prog="phaseless", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="synthesize responses and intensity records")
    s.add_argument("--all-receivers", action="store_true", help="record intensities at every receiver")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("recover", parents=[common], help="recover M_r (and optionally M) from intensity records")
    r.add_argument("--records", required=True, help="intensity record CSV")
    r.add_argument("--truth", help="response file for error reporting")
    r.add_argument("--receiver", type=int, help="only this receiver (1-based)")
    r.add_argument("--full-matrix", action="store_true", help="also assemble the full matrix (colocated only)")
    r.add_argument("--ref", type=int, default=1, help="reference composite index (1-based, default 1)")
    r.set_defaults(func=cmd_recover)

    i = sub.add_parser("image", parents=[common], help="form images from a response or M_r file")
    i.add_argument("--input", required=True, help="response.bin or Mr_r*.bin")
    i.add_argument("--functional", action="append", help=f"one or more of {', '.join(FUNCTIONALS)}")
    i.add_argument("--x-d", help="mask distance, e.g. '125 lambda0' or '0.25 a'")
    i.add_argument("--omega-d", help="mask frequency, e.g. '14.4 THz' or '0.12 B'")
    i.add_argument("--pairing", choices=PAIRINGS, default="consistent", help="MUSIC/SIGNAL projection pairing")
    i.set_defaults(func=cmd_image)

    m = sub.add_parser("moments", parents=[common], help="Monte Carlo check of the random-medium moments")
    m.add_argument("--n", type=int, default=2000, help="realizations (>= 100)")
    m.add_argument("--epsilon", type=float, default=0.2)
    m.add_argument("--corr-len", type=float, default=100.0, help="l in lambda0")
    m.add_argument("--propagation", type=float, default=10000.0, help="L in lambda0")
    m.set_defaults(func=cmd_moments)

    e = sub.add_parser("experiment", parents=[common], help="run a named preset")
    e.add_argument("preset", help=", ".join(PRESETS))
    e.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _log(f"config error: {exc}")
        return EXIT_INVALID
    except MissingMeasurementsError as exc:
        _log(f"incomplete records: {exc}")
        return EXIT_INVALID
    except RecoveryError as exc:
        if "refused" in str(exc) or "colocated" in str(exc):
            _log(f"error: {exc}")
            return EXIT_INVALID
        _log(f"recovery failed: {exc}")
        return EXIT_RUNTIME
    except (ValidationError, UsageError, DomainError) as exc:
        _log(f"invalid input: {exc}")
        return EXIT_INVALID
    except KeyError as exc:
        _log(f"error: {exc.args[0] if exc.args else exc}")
        return EXIT_INVALID
    except (OSError, RuntimeError, ValueError) as exc:
        _log(f"error: {exc}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
