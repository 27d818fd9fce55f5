"""Command-line entry point.

    graphene-bistability <command> --config run.json [--out DIR]

Commands: rates, phase-map, hysteresis, spectrum, g2, slowdown. The run is
fully described by the JSON config; output files carry the canonical config
and its SHA-256 in '#' header lines and contain no timestamps, so identical
configs give byte-identical files.

Exit codes: 0 success, 2 config validation, 3 numerical failure, 4 filesystem.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from . import __version__
from .bloch_dynamics import adiabatic_sweep, default_dwell, fmt, write_trajectory_csv
from .config import CONTROL_NAMES, ConfigError, RunConfig, parse_config, system_from_block
from .critical_dynamics import HorizonError, LadderSpec, run_ladder
from .fluorescence import (
    UnstableBranchError,
    build_regression,
    g2,
    incoherent_spectrum,
    write_g2_csv,
    write_spectrum_csv,
)
from .green_tensor import NumericalConvergenceError
from .physics_core import CONST, SystemParams, angular_frequency_to_ev
from .qed_coupling import CouplingSet, coupling_set, lamb_shift_kk, purcell_rate
from .steady_state import phase_map, radiated_power, steady_roots

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_FS = 0, 2, 3, 4
WORKERS_ENV = "GRAPHENE_BISTABILITY_WORKERS"


class CouplingBuilder:
    """Picklable map from control values to coupling constants."""

    def __init__(self, base: SystemParams, names: Sequence[str], model: dict):
        self.base = base
        self.names = tuple(names)
        self.lamb = model["lamb"]
        self.conductivity = model["conductivity"]
        self.frozen_dephasing = None
        if model.get("freeze_dephasing"):
            self.frozen_dephasing = coupling_set(base, lamb=self.lamb, model=self.conductivity).dephasing

    def __call__(self, *values: float) -> CouplingSet:
        p = self.base.with_(**{n: float(v) for n, v in zip(self.names, values)})
        c = coupling_set(p, lamb=self.lamb, model=self.conductivity)
        if self.frozen_dephasing is not None:
            c = replace(c, dephasing=self.frozen_dephasing)
        return c


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def write_table(path: Path, fmt_kind: str, header: list[str], columns: list[str], rows: list[list]) -> Path:
    """Write rows as CSV (17 significant digits, '#' header) or JSON."""
    if fmt_kind == "json":
        path = path.with_suffix(".json")
        doc = {"header": header, "columns": columns, "rows": rows}
        path.write_text(json.dumps(doc, indent=1, allow_nan=True) + "\n")
        return path
    path = path.with_suffix(".csv")
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else ("" if v is None else v) for v in row])
    return path


# --------------------------------------------------------------------------
# commands


def cmd_rates(cfg: RunConfig, out: Path) -> list[Path]:
    b = cfg.block
    axis = b.get("axis", "transition_energy_ev")
    values = np.linspace(b.get("start", 0.6), b.get("stop", 1.4), int(b.get("steps", 161)))
    zs = b.get("z_list_nm", [10.0, 12.0, 15.0, 20.0])
    nonlocal_ = bool(b.get("nonlocal", False))
    g0 = cfg.system.gamma0_si
    field = "transition_energy" if axis == "transition_energy_ev" else "fermi_energy"
    cols = ["z_nm", axis, "gamma_over_gamma0_local", "lamb_over_gamma0_local"]
    if nonlocal_:
        cols += ["gamma_over_gamma0_nonlocal", "lamb_over_gamma0_nonlocal"]
    rows = []
    for z in zs:
        for v in values:
            p = cfg.system.with_(z_distance=float(z), **{field: float(v)})
            row = [float(z), float(v), purcell_rate(p) / g0, lamb_shift_kk(p) / g0]
            if nonlocal_:
                row += [purcell_rate(p, "nonlocal") / g0, lamb_shift_kk(p, "nonlocal") / g0]
            rows.append(row)
    header = cfg.provenance_lines() + [f"gamma0_per_s = {fmt(g0)} (held fixed)"]
    return [write_table(out / "rates", cfg.output_format, header, cols, rows)]


def _islands(grid3: np.ndarray, a1: np.ndarray, a2: np.ndarray) -> list[dict]:
    labels, n = ndimage.label(grid3)
    boxes = []
    for k, sl in enumerate(ndimage.find_objects(labels), start=1):
        boxes.append(
            {
                "axis1_min": float(a1[sl[0].start]),
                "axis1_max": float(a1[sl[0].stop - 1]),
                "axis2_min": float(a2[sl[1].start]),
                "axis2_max": float(a2[sl[1].stop - 1]),
                "cells": int(np.sum(labels[sl] == k)),
            }
        )
    return boxes


def cmd_phase_map(cfg: RunConfig, out: Path) -> list[Path]:
    from .config import _axis, _Checker  # reuse the validated axis parser

    ck = _Checker(json.dumps(cfg.raw))
    names = ("fermi_energy_ev", "detuning0_ev", "intensity_w_m2", "z_nm")
    ax1 = _axis(ck, cfg.block["axis1"], "axis1", names)
    ax2 = _axis(ck, cfg.block["axis2"], "axis2", names)
    a1, a2 = ax1.values(), ax2.values()
    intensities = cfg.block.get("intensities_w_m2", [cfg.system.intensity])
    written, summary = [], {"provenance": cfg.provenance_lines(), "maps": []}
    for inten in intensities:
        base = cfg.system.with_(intensity=float(inten))
        builder = CouplingBuilder(base, (ax1.param, ax2.param), cfg.model)
        cells = phase_map(a1, a2, builder, workers=_workers())
        rows, grid3 = [], np.zeros((a1.size, a2.size), dtype=bool)
        for idx, cell in enumerate(cells):
            i, j = divmod(idx, a2.size)
            eigs = list(cell.max_re_eigs) + [None] * (3 - len(cell.max_re_eigs))
            rows.append([cell.value1, cell.value2, cell.disc, cell.root_count, *eigs, cell.error or ""])
            grid3[i, j] = cell.root_count == 3
        cols = [ax1.name, ax2.name, "D", "root_count", "maxReEig_root1", "maxReEig_root2", "maxReEig_root3", "error"]
        header = cfg.provenance_lines() + [f"intensity_w_m2 = {fmt(float(inten))}"]
        stem = out / f"phase_map_I{float(inten):.6g}"
        written.append(write_table(stem, cfg.output_format, header, cols, rows))
        summary["maps"].append(
            {
                "intensity_w_m2": float(inten),
                "bistable_cells": int(grid3.sum()),
                "errors": sum(1 for c in cells if c.error),
                "islands": _islands(grid3, a1, a2),
            }
        )
    path = out / "phase_map_summary.json"
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    written.append(path)
    return written


def cmd_hysteresis(cfg: RunConfig, out: Path) -> list[Path]:
    from .config import AxisSpec

    b = cfg.block
    ax = AxisSpec(b["control"], b["start"], b["stop"], int(b["steps"]), b.get("scale", "linear"))
    values = ax.values()
    builder = CouplingBuilder(cfg.system, (ax.param,), cfg.model)
    tol = cfg.model["tol"]
    dwell = None
    if "dwell_gamma" in b:
        k = float(b["dwell_gamma"])
        dwell = lambda c: max(k / c.gamma_total, k / c.dephasing)  # noqa: E731
    up = adiabatic_sweep(values, builder, dwell, tol=tol)
    down = adiabatic_sweep(values[::-1], builder, dwell, tol=tol)
    written = []
    for name, traj in (("sweep_up", up), ("sweep_down", down)):
        path = out / f"{name}.csv"
        write_trajectory_csv(traj, path, cfg.provenance_lines())
        written.append(path)

    gammas = {float(v): builder(v).gamma_total for v in values}
    seq = [(float(v), "up", z, r) for v, z, r in zip(up.params_trace, up.z_pop, up.coh)]
    seq += [(float(v), "down", z, r) for v, z, r in zip(down.params_trace, down.z_pop, down.coh)]
    g = [gammas[s[0]] for s in seq]
    p_tot = radiated_power(g, [s[2] for s in seq], [s[3] for s in seq], model="total")
    p_coh = radiated_power(g, [s[2] for s in seq], [s[3] for s in seq], model="coherent")
    rows = [[v, d, float(z), abs(r), float(pt), float(pc)] for (v, d, z, r), pt, pc in zip(seq, p_tot, p_coh)]
    cols = [ax.name, "sweep", "Z", "abs_rho21", "power_total_norm", "power_coherent_norm"]
    header = cfg.provenance_lines() + ["power normalised to the smallest value over both sweeps"]
    written.append(write_table(out / "hysteresis", cfg.output_format, header, cols, rows))

    if b.get("overlay", True):
        orows = []
        for v in values:
            for r in steady_roots(builder(v)).roots:
                orows.append([float(v), float(r.z_pop), abs(r.coh), "stable" if r.stable else "unstable"])
        written.append(
            write_table(out / "roots", cfg.output_format, cfg.provenance_lines(), [ax.name, "Z", "abs_rho21", "stability"], orows)
        )
    return written


def _select_branch(cfg: RunConfig, point: dict):
    params = system_from_block(point, cfg.system)
    builder = CouplingBuilder(params, (), cfg.model)
    c = builder()
    sset = steady_roots(c)
    branch = point["branch"]
    if branch == "middle":
        if sset.count != 3:
            raise UnstableBranchError(f"point {point['label']}: no middle branch (only {sset.count} root)")
        root = sset.roots[1]
        if not root.stable:
            raise UnstableBranchError(
                f"point {point['label']}: refusing the 'middle' branch, it is unstable "
                f"(Z = {root.z_pop:.6g}, max Re eig {root.max_re_eig:.3e})"
            )
    else:
        root = sset.upper() if branch == "upper" else sset.lower()
    label = branch if sset.count == 3 else f"{branch} (unique steady state)"
    return c, root, label


def cmd_spectrum(cfg: RunConfig, out: Path) -> list[Path]:
    b = cfg.block
    span, n = float(b.get("span_gamma", 60.0)), int(b.get("grid_points", 2401))
    written = []
    for point in b["points"]:
        c, root, label = _select_branch(cfg, point)
        grid = np.linspace(-span, span, n) * c.gamma_total
        spec = incoherent_spectrum(build_regression(c, root), grid, branch=label)
        path = out / f"spectrum_{point['label']}.csv"
        header = cfg.provenance_lines() + [f"point = {json.dumps(point, sort_keys=True)}", f"Z = {fmt(root.z_pop)}"]
        if cfg.output_format == "json":
            rows = [[float(w) * CONST.hbar / CONST.e_charge, float(s)] for w, s in zip(spec.omega_offsets, spec.s_inc)]
            header += [f"coherent_weight = {fmt(spec.coherent_weight)}", f"branch = {label}"]
            written.append(write_table(path, "json", header, ["omega_minus_omegaL_eV", "S_inc_arb"], rows))
        else:
            write_spectrum_csv(spec, path, header)
            written.append(path)
    return written


def cmd_g2(cfg: RunConfig, out: Path) -> list[Path]:
    b = cfg.block
    tmax, n = float(b.get("tau_max_gamma", 50.0)), int(b.get("tau_points", 501))
    written = []
    for point in b["points"]:
        c, root, label = _select_branch(cfg, point)
        taus = np.linspace(0.0, tmax, n) / c.gamma_total
        series = g2(c, root, taus, branch=label)
        path = out / f"g2_{point['label']}.csv"
        header = cfg.provenance_lines() + [f"point = {json.dumps(point, sort_keys=True)}", f"Z = {fmt(root.z_pop)}"]
        if cfg.output_format == "json":
            rows = [[float(t) * 1e9, float(v)] for t, v in zip(series.taus, series.g2_values)]
            written.append(write_table(path, "json", header + [f"branch = {label}"], ["tau_ns", "g2"], rows))
        else:
            write_g2_csv(series, path, header)
            written.append(path)
    return written


def cmd_slowdown(cfg: RunConfig, out: Path) -> list[Path]:
    b = cfg.block
    control = CONTROL_NAMES[b.get("control", "fermi_energy_ev")]
    written, summary, failed = [], {"provenance": cfg.provenance_lines(), "fits": []}, []
    for i, item in enumerate(b["ladders"]):
        params = cfg.system.with_(z_distance=float(item["z_nm"]))
        spec = LadderSpec(
            control,
            float(item["start_value"]),
            tuple(item["bracket"]),
            item.get("direction", "lower_to_upper"),
            tuple(item["offsets"]) if "offsets" in item else None,
            float(item.get("horizon_gamma", 1e3)),
        )
        entry = {"index": i, "z_nm": float(item["z_nm"])}
        try:
            fit = run_ladder(spec, params, tol=cfg.model["tol"], lamb=cfg.model["lamb"])
        except (HorizonError, ArithmeticError, ValueError) as exc:
            entry["error"] = f"{type(exc).__name__}: {exc}"
            failed.append(entry["error"])
        else:
            path = out / f"slowdown_{i}_z{float(item['z_nm']):g}nm.json"
            doc = fit.to_json()
            doc["provenance"] = cfg.provenance_lines()
            path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
            written.append(path)
            entry.update(alpha=fit.alpha, alpha_stderr=fit.alpha_stderr, r_squared=fit.r_squared,
                         critical_value=fit.critical_value)
        summary["fits"].append(entry)
    path = out / "slowdown_summary.json"
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    written.append(path)
    if failed:
        raise LadderFailure("; ".join(failed), written)
    return written


class LadderFailure(ArithmeticError):
    def __init__(self, message: str, written: list[Path]):
        super().__init__(message)
        self.written = written


COMMAND_TABLE = {
    "rates": cmd_rates,
    "phase-map": cmd_phase_map,
    "hysteresis": cmd_hysteresis,
    "spectrum": cmd_spectrum,
    "g2": cmd_g2,
    "slowdown": cmd_slowdown,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="graphene-bistability", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("command", choices=sorted(COMMAND_TABLE))
    ap.add_argument("--config", "-c", required=True, help="JSON run configuration")
    ap.add_argument("--out", "-o", help="output directory (overrides output.directory)")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_FS
    try:
        cfg = parse_config(text, args.command, args.out)
        _workers()
    except ConfigError as exc:
        print(f"config error ({args.config}): {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.output_dir or ".")
    try:
        out.mkdir(parents=True, exist_ok=True)
        if not os.access(out, os.W_OK):
            raise PermissionError(f"output directory {out} is not writable")
    except OSError as exc:
        print(f"filesystem error: {exc}", file=sys.stderr)
        return EXIT_FS
    try:
        written = COMMAND_TABLE[args.command](cfg, out)
    except OSError as exc:
        print(f"filesystem error: {exc}", file=sys.stderr)
        return EXIT_FS
    except LadderFailure as exc:
        for p in exc.written:
            print(p)
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ArithmeticError, NumericalConvergenceError, UnstableBranchError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for p in written:
        print(p)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
