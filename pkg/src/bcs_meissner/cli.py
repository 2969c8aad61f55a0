"""Command-line driver: ``bcs-meissner {gap,check,meissner,sweep}``.

Exit status is 0 on success, 2 on invalid input (configuration, grid or field
files) and 3 when a solver or a check does not meet its tolerance.  Every
table starts with a ``# config_sha256=...`` line, every JSON-lines log with a
provenance object, and every run writes ``manifest.json`` listing the
checksums of its field dumps.  Files are written atomically.
"""

from __future__ import annotations

import argparse
import hashlib
import importlib.util
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import scipy.fft as sfft

from . import __version__
from . import bcs_thermo as bt
from .config import ConfigError, RunConfig, load_config
from .fields import (
    GridSpec,
    MollifierSpec,
    VectorField,
    atomic_write_bytes,
    random_bandlimited,
    read_vfld1,
    vfld1_bytes,
)
from .helmholtz import identity_residuals
from .meissner_solver import (
    LoopSpec,
    NonConvergenceError,
    helmholtz_pair,
    make_external_field,
    solve_A,
    solve_full,
    solve_J,
    verify_meissner,
)

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED = 0, 2, 3
CHECK_TOLERANCE = 1e-10
GAP_TOLERANCE = 1e-10


class InputError(Exception):
    """Invalid user input discovered after the configuration was parsed."""


class Failure(Exception):
    """A solve or check missed its tolerance; carries the diagnosis."""


# ---------------------------------------------------------------------------
# output helpers


class Outputs:
    """Collects the files of one run and writes them atomically with provenance."""

    def __init__(self, cfg: RunConfig, command: str) -> None:
        self.cfg = cfg
        self.command = command
        self.root = Path(cfg.output.directory)
        self.checksums: dict[str, str] = {}

    def _path(self, name: str) -> Path:
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def _put(self, name: str, payload: bytes) -> Path:
        path = self._path(name)
        atomic_write_bytes(path, payload)
        self.checksums[name] = hashlib.sha256(payload).hexdigest()
        return path

    def provenance(self) -> dict[str, Any]:
        return {"command": self.command, "config_sha256": self.cfg.sha256, "version": __version__}

    def csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        return self._put(name, csv_bytes(self.cfg.sha256, header, rows))

    def jsonl(self, name: str, rows: Iterable[dict]) -> Path:
        lines = [json.dumps({"provenance": self.provenance()}, sort_keys=True)]
        lines += [json.dumps(row, sort_keys=True) for row in rows]
        return self._put(name, ("\n".join(lines) + "\n").encode())

    def field(self, name: str, f: VectorField) -> Path:
        return self._put(name, vfld1_bytes(f))

    def png(self, name: str, payload: bytes) -> Path:
        return self._put(name, payload)

    def manifest(self) -> Path:
        body = {"provenance": self.provenance(), "config": self.cfg.canonical(), "files": dict(sorted(self.checksums.items()))}
        payload = (json.dumps(body, sort_keys=True, indent=2) + "\n").encode()
        path = self._path("manifest.json")
        atomic_write_bytes(path, payload)
        return path


def _fmt(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def csv_bytes(sha: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> bytes:
    out = io.StringIO()
    out.write(f"# config_sha256={sha}\n")
    out.write(",".join(header) + "\n")
    for row in rows:
        out.write(",".join(_fmt(v) for v in row) + "\n")
    return out.getvalue().encode()


# ---------------------------------------------------------------------------
# building objects from the configuration


def build_params(cfg: RunConfig, **changes: float) -> bt.ModelParams:
    m = cfg.model
    values = {"beta": m.beta, "mu": m.mu, "lam": m.lam, "gamma": m.gamma, "eta": m.eta}
    for key, v in changes.items():
        values["lam" if key == "lambda" else key] = v
    dispersion = None
    if m.dispersion == "nearest_neighbor":
        dispersion = bt.Dispersion.nearest_neighbor(m.hopping, m.momentum_points)
    try:
        return bt.ModelParams(**values, dispersion=dispersion)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def build_grid(cfg: RunConfig) -> GridSpec:
    try:
        return GridSpec(cfg.grid.n_per_axis, cfg.grid.box_side)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _read_field(cfg: RunConfig, path: str, grid: GridSpec) -> VectorField:
    try:
        f = read_vfld1(cfg.resolve_path(path))
    except OSError as exc:
        raise InputError(f"cannot read field file: {exc}") from None
    except ValueError as exc:
        raise InputError(str(exc)) from None
    if f.grid != grid:
        raise InputError(f"field file grid {f.grid} does not match the configured grid {grid}")
    return f


def build_gap_field(cfg: RunConfig, grid: GridSpec | None, params: bt.ModelParams):
    b = cfg.bfield
    if b.kind == "zero":
        return None
    if b.kind == "constant":
        if b.strength < 0:
            raise InputError("field.strength must be >= 0")
        return bt.HField.constant(params.eta * b.strength)
    return _read_field(cfg, b.path, grid)


def build_external(cfg: RunConfig, grid: GridSpec):
    e = cfg.external
    try:
        if e.kind == "file":
            return make_external_field(grid, field=_read_field(cfg, e.path, grid))
        if e.kind == "loop":
            loops = [LoopSpec(e.center, e.radius, e.axis, e.current, e.thickness)]
        else:
            loops = helmholtz_pair(e.radius, e.axis, e.current, e.thickness)
        return make_external_field(grid, loops)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def build_mollifier(cfg: RunConfig, grid: GridSpec) -> MollifierSpec | None:
    m = cfg.mollifier
    if m.epsilon == 0:
        return None
    try:
        moll = MollifierSpec(m.epsilon, m.radius)
        moll.check_resolved(grid)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    if moll.epsilon >= moll.epsilon_max:
        raise InputError(f"mollifier.epsilon must be below 1/(2 radius) = {moll.epsilon_max:g}")
    return moll


# ---------------------------------------------------------------------------
# commands

GAP_HEADER = ("beta", "mu", "lambda", "gamma", "eta", "r_beta", "pressure", "h_c", "objective", "residual", "multimodal")


def _gap_row(params: bt.ModelParams, gap: bt.GapSolution) -> list[Any]:
    return [params.beta, params.mu, params.lam, params.gamma, params.eta, gap.r_beta, gap.objective, gap.h_c, gap.objective, gap.residual, gap.multimodal]


def cmd_gap(cfg: RunConfig) -> int:
    """Solve the gap equation at a fixed induction and write gap.csv."""
    params = build_params(cfg)
    grid = build_grid(cfg) if cfg.bfield.kind == "file" else None
    B = build_gap_field(cfg, grid, params)
    gap = bt.solve_gap(params, B)
    out = Outputs(cfg, "gap")
    out.csv("gap.csv", GAP_HEADER, [_gap_row(params, gap)])
    out.manifest()
    print(f"r_beta={gap.r_beta:.10g} pressure={gap.objective:.10g} h_c={gap.h_c:.10g} residual={gap.residual:.3g}")
    if gap.superconducting and gap.residual > GAP_TOLERANCE:
        raise Failure(f"gap equation residual {gap.residual:.3g} exceeds {GAP_TOLERANCE:g}")
    return EXIT_OK


def cmd_check(cfg: RunConfig) -> int:
    """Run the projection identities and the one-site oracle; write check.csv."""
    grid = build_grid(cfg)
    if cfg.external.kind == "file":
        build_external(cfg, grid)
    if cfg.bfield.kind == "file":
        _read_field(cfg, cfg.bfield.path, grid)
    rng = np.random.default_rng(cfg.run.seed)
    worst: dict[str, float] = {}
    for scheme in ("spectral", "central"):
        for _ in range(cfg.check.samples):
            res = identity_residuals(random_bandlimited(grid, rng), scheme)
            for key, v in res.items():
                name = f"{scheme}.{key}"
                worst[name] = max(worst.get(name, 0.0), v)
    oracle = 0.0
    for _ in range(cfg.check.oracle_draws):
        p = bt.ModelParams(beta=rng.uniform(0.1, 50), mu=rng.uniform(-2, 2), lam=rng.uniform(-2, 2), gamma=rng.uniform(1e-3, 20), eta=1.0)
        r, h = rng.uniform(0, 0.3), rng.uniform(0, 10)
        exact = bt.one_site_log_trace(p, r, h)
        closed = p.mu + math.log(2.0) / p.beta + float(bt.free_energy_integrand(p, r, h))
        oracle = max(oracle, abs(closed - exact) / max(abs(exact), 1e-300))
    worst["one_site_oracle"] = oracle
    out = Outputs(cfg, "check")
    rows = [(k, v, v <= CHECK_TOLERANCE) for k, v in worst.items()]
    out.csv("check.csv", ("identity", "max_relative_residual", "pass"), rows)
    out.manifest()
    width = max(len(k) for k in worst)
    for k, v, ok in rows:
        print(f"{k:<{width}}  {v:.3e}  {'ok' if ok else 'FAIL'}")
    bad = [k for k, _, ok in rows if not ok]
    if bad:
        raise Failure("identities above tolerance: " + ", ".join(bad))
    return EXIT_OK


VERIFY_HEADER = ("mode", "suppression_ratio", "surface_fraction", "r_beta", "h_c", "converged", "objective", "el_residual", "diagnosis")


def cmd_meissner(cfg: RunConfig) -> int:
    """Screening, dual and full solves for an exterior source; write fields and reports."""
    grid = build_grid(cfg)
    if not grid.cell_aligned:
        raise InputError(f"the cell faces must fall on grid nodes: 0.5 / spacing = {0.5 / grid.spacing:g} is not an integer")
    mode = cfg.solver.mode
    ext = build_external(cfg, grid)
    moll = build_mollifier(cfg, grid) if mode in ("full", "all") else None
    params = build_params(cfg) if mode in ("full", "all") else None
    s = cfg.solver
    out = Outputs(cfg, "meissner")
    rows: list[list[Any]] = []
    log: list[dict] = []
    failure = None
    out.field("B_ext.vfld1", ext.B_ext)
    figure_fields: dict[str, VectorField] = {}

    if mode in ("A", "all"):
        B_int, j_int, rep = solve_A(ext.B_ext, tol=s.cg_tol, seed=cfg.run.seed)
        rows.append(["A", rep.suppression_ratio, rep.surface_fraction, math.nan, math.nan, rep.converged, rep.objective_trace[-1], rep.el_residual, ""])
        out.field("B_int.vfld1", B_int)
        out.field("j_int.vfld1", j_int.j)
        figure_fields["B_int"] = B_int
        figure_fields["j"] = j_int.j
    if mode in ("J", "all"):
        j_J, value, rep = solve_J(ext.j_ext.j, tol=s.cg_tol)
        rows.append(["J", math.nan, rep.surface_fraction, math.nan, math.nan, rep.converged, value, rep.el_residual, ""])
        if mode == "J":
            out.field("j_int.vfld1", j_J.j)
            figure_fields["j"] = j_J.j
    if mode in ("full", "all"):
        sol = solve_full(
            params, ext.B_ext, moll, tol=s.tol, maxiter=s.maxiter, damping=s.damping,
            cg_tol=s.cg_tol, inner_tol=s.inner_tol, starts=s.starts,
        )
        ver = verify_meissner(params, sol, ext.B_ext, moll)
        rep = sol.report
        rows.append(["full", ver.suppression_ratio, ver.surface_fraction, ver.r_beta, ver.h_c, rep.converged, sol.objective, rep.el_residual, rep.diagnosis])
        log.extend({"start": sol.start, **row} for row in rep.log)
        out.csv(
            "starts.csv",
            ("start", "objective", "converged", "el_residual", "iterations"),
            [[st["start"], st["objective"], st["converged"], st["el_residual"], st["iterations"]] for st in sol.starts],
        )
        out.field("B0.vfld1", sol.B)
        out.field("j0.vfld1", sol.j.j)
        out.jsonl("solve_log.jsonl", log)
        figure_fields["B0"] = sol.B
        figure_fields["j"] = sol.j.j
        if not rep.converged:
            failure = f"solve_full did not converge: {rep.diagnosis or 'unknown'} (EL residual {rep.el_residual:.3g})"
    out.csv("verification.csv", VERIFY_HEADER, rows)
    if cfg.output.figures:
        _meissner_figures(out, ext.B_ext, figure_fields, log)
    out.manifest()
    for row in rows:
        print(" ".join(f"{h}={_fmt(v)}" for h, v in zip(VERIFY_HEADER, row)))
    if failure:
        raise Failure(failure)
    return EXIT_OK


SWEEP_HEADER = ("beta", "mu", "lambda", "gamma", "eta", "r_beta", "pressure", "h_c", "superconducting", "multimodal", "residual", "suppression_ratio")


def _sweep_point(args: tuple[RunConfig, int, dict[str, float]]) -> tuple[int, list[Any]]:
    cfg, index, point = args
    sfft.set_workers(1)
    params = build_params(cfg, **point)
    grid = build_grid(cfg)
    B = build_gap_field(cfg, grid, params)
    gap = bt.solve_gap(params, B)
    suppression = math.nan
    if cfg.sweep.suppression:
        ext = build_external(cfg, grid)
        sol = solve_full(
            params, ext.B_ext, build_mollifier(cfg, grid), tol=cfg.solver.tol, maxiter=cfg.solver.maxiter,
            damping=cfg.solver.damping, cg_tol=cfg.solver.cg_tol, inner_tol=cfg.solver.inner_tol, starts=cfg.solver.starts,
        )
        suppression = sol.report.suppression_ratio if sol.report.converged else math.nan
    row = [params.beta, params.mu, params.lam, params.gamma, params.eta, gap.r_beta, gap.objective, gap.h_c, gap.superconducting, gap.multimodal, gap.residual, suppression]
    return index, row


def cmd_sweep(cfg: RunConfig) -> int:
    """Phase diagram over the configured parameter axes; write sweep.csv."""
    if not cfg.sweep.axes:
        raise InputError("sweep needs at least one axis (beta, mu, lambda, gamma or eta = start:stop:steps)")
    points = cfg.sweep_points()
    build_params(cfg, **points[0])
    out = Outputs(cfg, "sweep")
    jobs = [(cfg, i, p) for i, p in enumerate(points)]
    results: dict[int, list[Any]] = {}
    # each point is written as soon as it finishes, so an interrupted sweep keeps its completed points
    if cfg.sweep.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.sweep.workers) as pool:
            for i, row in pool.map(_sweep_point, jobs):
                out.csv(f"points/point_{i:05d}.csv", SWEEP_HEADER, [row])
                results[i] = row
    else:
        for job in jobs:
            i, row = _sweep_point(job)
            out.csv(f"points/point_{i:05d}.csv", SWEEP_HEADER, [row])
            results[i] = row
    rows = [results[i] for i in range(len(points))]
    out.csv("sweep.csv", SWEEP_HEADER, rows)
    if cfg.output.figures:
        _sweep_figure(out, cfg, rows)
    out.manifest()
    n_sc = sum(1 for r in rows if r[8])
    print(f"{len(rows)} points, {n_sc} superconducting")
    bad = [r for r in rows if r[8] and r[10] > GAP_TOLERANCE]
    if bad:
        raise Failure(f"{len(bad)} sweep points have gap residual above {GAP_TOLERANCE:g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# figures (optional, rendered from the same arrays that are written as tables)


def _png_bytes(fig) -> bytes:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=110, metadata={"Software": None})
    return buf.getvalue()


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _meissner_figures(out: Outputs, B_ext: VectorField, fields: dict[str, VectorField], log: list[dict]) -> None:
    plt = _pyplot()
    grid = B_ext.grid
    mid = grid.n_per_axis // 2
    extent = [grid.coords[0], grid.coords[-1], grid.coords[0], grid.coords[-1]]
    B = fields.get("B0", fields.get("B_int"))
    panels = [("|B_ext|", B_ext.magnitude())]
    if B is not None:
        panels.append(("|B + B_ext|", (B + B_ext).magnitude()))
    if "j" in fields:
        panels.append(("|j|", fields["j"].magnitude()))
    fig, axes = plt.subplots(1, len(panels), figsize=(4.2 * len(panels), 3.8), squeeze=False)
    for ax, (title, values) in zip(axes[0], panels):
        im = ax.imshow(values[:, mid, :].T, origin="lower", extent=extent, cmap="viridis")
        ax.plot([-0.5, 0.5, 0.5, -0.5, -0.5], [-0.5, -0.5, 0.5, 0.5, -0.5], color="w", lw=0.8)
        ax.set_title(f"{title}, y = 0")
        ax.set_xlabel("x")
        ax.set_ylabel("z")
        fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    out.png("field_slices.png", _png_bytes(fig))
    plt.close(fig)
    steps = [row for row in log if "el_residual" in row]
    if steps:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.semilogy([r["iter"] for r in steps], [max(r["el_residual"], 1e-300) for r in steps], marker="o", ms=3)
        ax.set_xlabel("outer iteration")
        ax.set_ylabel("EL residual")
        fig.tight_layout()
        out.png("convergence.png", _png_bytes(fig))
        plt.close(fig)


def _sweep_figure(out: Outputs, cfg: RunConfig, rows: list[list[Any]]) -> None:
    plt = _pyplot()
    name = cfg.sweep.axes[0][0]
    col = SWEEP_HEADER.index(name)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot([r[col] for r in rows], [r[5] for r in rows], "o", ms=3)
    ax.set_xlabel(name)
    ax.set_ylabel("r_beta")
    fig.tight_layout()
    out.png("sweep.png", _png_bytes(fig))
    plt.close(fig)


# ---------------------------------------------------------------------------
# entry point

COMMANDS = {"gap": cmd_gap, "check": cmd_check, "meissner": cmd_meissner, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bcs-meissner", description="Meissner screening in the strong-coupling BCS-Hubbard model.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or "").strip().splitlines()[0] if fn.__doc__ else None)
        p.add_argument("--config", help="INI configuration file (defaults are used when omitted)")
        p.add_argument("--out", help="output directory (overrides [output] directory)")
        p.add_argument("--grid", type=int, help="grid points per axis (overrides [grid] n_per_axis)")
        p.add_argument("--seed", type=int, help="random seed (overrides [run] seed)")
        p.add_argument("--threads", type=int, help="FFT worker threads (overrides [run] threads)")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    try:
        cfg = load_config(args.config).with_overrides(grid=args.grid, seed=args.seed, threads=args.threads, out=args.out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if cfg.output.figures and importlib.util.find_spec("matplotlib") is None:
        print("error: output.figures = true needs matplotlib (install the 'figures' extra)", file=sys.stderr)
        return EXIT_INPUT
    try:
        with sfft.set_workers(cfg.run.threads):
            return COMMANDS[args.command](cfg)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (Failure, NonConvergenceError) as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
