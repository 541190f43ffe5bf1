"""Command-line front end.

Subcommands cover simulation, fixed-point and limit-cycle location, the
three pseudospectrum analyses, parameter sweeps, and SVG rendering of
grid CSVs.  Every output file gets a JSON sidecar with the config hash,
seed, command, timestamp, and tool version.  Exit codes: 0 success,
2 usage/config, 3 numeric failure, 4 non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__, dde, floquet as fl, jacobian as jac, koopman as kp
from .config import RunConfig, parse_config
from .contours import ContourRendering, default_levels, render_svg
from .errors import ConfigError, ConvergenceError, NumericError
from .numerics import PseudospectrumGrid, write_rows_csv

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="hpadyn",
        description="Sensitivity and transient-growth analysis of the delayed "
                    "ACTH-cortisol feedback oscillator.",
    )
    ap.add_argument("--version", action="version", version=f"hpadyn {__version__}")
    ap.add_argument("--config", help="path to a configuration file (INI)")
    ap.add_argument("--output-dir", help="override the output directory")
    ap.add_argument("--seed", type=int, help="override the run seed")
    ap.add_argument("--threads", type=int, help="worker-count hint for grid sweeps")
    ap.add_argument("--no-figures", action="store_true",
                    help="skip matplotlib figure output")
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", help="integrate the model and dump the trajectory")
    sub.add_parser("fixed-point", help="locate the equilibrium")
    sub.add_parser("limit-cycle", help="locate the limit cycle and its period")

    p = sub.add_parser("jacobian-sweep", help="stability indicators along the cycle")
    p.add_argument("--n-samples", type=int, help="samples per period")

    p = sub.add_parser("jacobian-grid", help="pencil pseudospectrum at one cycle time")
    p.add_argument("--tau", type=float, help="cycle time of the base point")

    p = sub.add_parser("floquet", help="monodromy spectrum, pseudospectrum, Kreiss")
    p.add_argument("--n-basis", type=int, help="hat-basis nodes per component")
    p.add_argument("--dump-matrix", action="store_true",
                   help="also write the dense monodromy matrix as CSV")

    p = sub.add_parser("koopman", help="data-driven spectrum, pseudospectrum, Kreiss")
    p.add_argument("--dataset", help="reuse a saved snapshot dataset (.npz)")
    p.add_argument("--save-dataset", action="store_true",
                   help="save the generated snapshot dataset")

    p = sub.add_parser("sweep-h", help="sweep the drive parameter")
    p.add_argument("--target", choices=("jacobian", "floquet", "koopman"),
                   required=True)
    p.add_argument("--h-values", help="comma-separated h values")

    p = sub.add_parser("render", help="render a grid CSV as an SVG contour plot")
    p.add_argument("--input", required=True, help="grid CSV (re,im,value)")
    p.add_argument("--output", help="output SVG path")
    p.add_argument("--levels", help="comma-separated contour levels")
    p.add_argument("--overlay", choices=("axis", "circle", "none"))
    p.add_argument("--eigs", help="CSV of eigenvalues to overlay (re,im[,...])")
    return ap


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    out = args.output_dir or os.environ.get("HPADYN_OUTPUT_DIR")
    if out:
        cfg = cfg.replace("run", "output_dir", out)
    if args.seed is not None:
        cfg = cfg.replace("run", "seed", args.seed)
    if args.threads is not None:
        cfg = cfg.replace("run", "threads", args.threads)
    if args.no_figures:
        cfg = cfg.replace("run", "figures", False)
    return cfg


class _Out:
    """Collects written files and stamps each with a provenance sidecar."""

    def __init__(self, cfg: RunConfig, command: str, directory: str | None = None):
        self.cfg = cfg
        self.command = command
        self.dir = directory if directory is not None else cfg.output_dir
        self.files: list[str] = []

    def path(self, name: str) -> str:
        os.makedirs(self.dir, exist_ok=True)
        return os.path.join(self.dir, name)

    def done(self, name: str, extra: dict | None = None) -> str:
        path = self.path(name)
        meta = {
            "config_hash": self.cfg.config_hash,
            "seed": self.cfg.seed,
            "command": self.command,
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "tool_version": __version__,
        }
        if extra:
            meta.update(extra)  # domain metadata wins on shared keys
        with open(path + ".meta.json", "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
        self.files.append(path)
        return path

    def write_json(self, name: str, payload: dict) -> str:
        with open(self.path(name), "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
        return self.done(name)


def _figures_on(cfg: RunConfig) -> bool:
    return bool(cfg.get("run", "figures"))


def _cycle(cfg: RunConfig) -> dde.LimitCycle:
    return dde.find_limit_cycle(
        cfg.params,
        transient=cfg.get("run", "transient"),
        detect_window=cfg.get("run", "detect_window"),
        step=cfg.step,
    )


def _cmd_simulate(cfg: RunConfig, args, out: _Out) -> None:
    s = cfg.values["simulate"]
    traj = dde.integrate(cfg.params, (s["x0"], s["y0"]), s["t_end"], step=cfg.step)
    traj.write_csv(out.path("trajectory.csv"))
    out.done("trajectory.csv")
    if _figures_on(cfg):
        from . import figures
        figures.fig_trajectory(traj, out.path("trajectory.png"))
        out.done("trajectory.png")
    print(f"integrated to tau = {s['t_end']} "
          f"(final state {traj.states[-1][0]:.4f}, {traj.states[-1][1]:.4f})")


def _cmd_fixed_point(cfg: RunConfig, args, out: _Out) -> None:
    p = cfg.params
    fp = dde.find_fixed_point(p)
    res = np.max(np.abs(dde.rhs(fp, fp[0], fp[1], p)))
    out.write_json("fixed_point.json",
                   {"x": fp[0], "y": fp[1], "residual_inf": float(res)})
    print(f"fixed point: ({fp[0]:.4f}, {fp[1]:.4f})  residual {res:.2e}")


def _cmd_limit_cycle(cfg: RunConfig, args, out: _Out) -> None:
    cycle = _cycle(cfg)
    cycle.orbit.write_csv(out.path("limit_cycle.csv"))
    out.done("limit_cycle.csv")
    out.write_json("limit_cycle.json",
                   {"period": cycle.period, "anchor_phase": cycle.anchor_phase,
                    "anchor_state": list(map(float, cycle.state(0.0)))})
    if _figures_on(cfg):
        from . import figures
        figures.fig_cycle(cycle, out.path("limit_cycle.png"))
        out.done("limit_cycle.png")
    print(f"limit cycle: period {cycle.period:.6f}")


def _cmd_jacobian_sweep(cfg: RunConfig, args, out: _Out) -> None:
    n = args.n_samples or cfg.get("jacobian", "n_samples")
    cycle = _cycle(cfg)
    ind = jac.sweep_trajectory(cfg.params, cycle, n)
    jac.write_indicators_csv(out.path("jacobian_sweep.csv"), ind)
    out.done("jacobian_sweep.csv")
    if _figures_on(cfg):
        from . import figures
        figures.fig_indicators(cycle, ind, out.path("jacobian_sweep.png"))
        out.done("jacobian_sweep.png")
    n_unstable = sum(1 for s in ind if s.alpha > 0)
    print(f"jacobian sweep: {n} samples, {n_unstable} with alpha > 0")


def _cmd_jacobian_grid(cfg: RunConfig, args, out: _Out) -> None:
    tau = args.tau if args.tau is not None else cfg.get("jacobian", "tau")
    cycle = _cycle(cfg)
    pencil = jac.pencil_at_cycle_time(cfg.params, cycle, tau)
    re_axis, im_axis = cfg.axes("jacobian")
    grid = jac.pencil_pseudospectrum(pencil, re_axis, im_axis)
    grid.write_csv(out.path("jacobian_grid.csv"), value_name="sigma_min")
    out.done("jacobian_grid.csv")
    roots = jac.characteristic_roots(pencil, re_min=float(re_axis[0])).roots
    write_rows_csv(out.path("jacobian_roots.csv"), ["re", "im"],
                   [(z.real, z.imag) for z in roots])
    out.done("jacobian_roots.csv")
    if _figures_on(cfg):
        from . import figures
        figures.fig_grid_contours(grid, default_levels(), out.path("jacobian_grid.png"),
                                  eigs=roots, overlay="axis",
                                  title=f"pencil pseudospectrum at tau={tau:g}")
        out.done("jacobian_grid.png")
    print(f"jacobian grid at tau={tau:g}: {roots.size} roots, "
          f"alpha = {roots.real.max() if roots.size else float('nan'):.4f}")


def _cmd_floquet(cfg: RunConfig, args, out: _Out) -> None:
    N = args.n_basis or cfg.get("floquet", "n_basis")
    c = cfg.get("floquet", "c")
    cycle = _cycle(cfg)
    m = fl.assemble_monodromy(cfg.params, cycle, N=N, step=cfg.step)
    spec = fl.floquet_spectrum(m)
    re_axis, im_axis = cfg.axes("floquet")
    grid = fl.floquet_pseudospectrum(m, re_axis, im_axis, workers=cfg.threads)
    grid.write_csv(out.path("floquet_grid.csv"), value_name="value")
    out.done("floquet_grid.csv")
    write_rows_csv(out.path("floquet_eigs.csv"), ["re", "im"],
                   [(z.real, z.imag) for z in spec])
    out.done("floquet_eigs.csv")
    summary = {
        "n_basis": N,
        "period": cycle.period,
        "dominant_multiplier": float(np.abs(spec[0])),
        "second_multiplier": float(np.abs(spec[1])),
        "kreiss_c": c,
    }
    try:
        kr = fl.floquet_kreiss(m, c=c, workers=cfg.threads)
        summary["kreiss"] = kr.value
        summary["kreiss_argmax"] = [kr.argmax_z.real, kr.argmax_z.imag]
        print(f"floquet: dominant {np.abs(spec[0]):.6f}, K_{c:g} = {kr.value:.4f}")
    except ValueError as exc:
        summary["kreiss_error"] = str(exc)
        print(f"floquet: dominant {np.abs(spec[0]):.6f}, Kreiss unavailable ({exc})")
    out.write_json("floquet_summary.json", summary)
    if args.dump_matrix:
        m.write_csv(out.path("monodromy_matrix.csv"))
        out.done("monodromy_matrix.csv")
    if _figures_on(cfg):
        from . import figures
        figures.fig_grid_contours(grid, default_levels(), out.path("floquet_grid.png"),
                                  eigs=spec, overlay="circle",
                                  title=f"period-map pseudospectrum (N={N})")
        out.done("floquet_grid.png")


def _cmd_koopman(cfg: RunConfig, args, out: _Out) -> None:
    p = cfg.params
    k = cfg.values["koopman"]
    cycle = _cycle(cfg)
    if args.dataset:
        ds = kp.SnapshotDataset.load(args.dataset)
    else:
        emb = kp.EmbeddingConfig(delta_tau=cycle.period / 10.0, d=k["d"],
                                 box=cfg.koopman_box(), n_init=k["n_init"],
                                 seed=cfg.seed)
        ds = kp.generate_snapshots(p, emb, step=cfg.step)
    if args.save_dataset:
        # one sidecar carries both provenance and the sampling metadata
        ds.save(out.path("koopman_dataset.npz"))
        with open(out.path("koopman_dataset.npz.meta.json")) as fh:
            sampling = json.load(fh)
        out.done("koopman_dataset.npz", extra=sampling)
    dic = kp.build_dictionary(ds, N=k["dict_size"], seed=cfg.seed)
    mats = kp.assemble_matrices(kp.eval_dictionary(dic, ds.X0),
                                kp.eval_dictionary(dic, ds.X1))
    w, gs = kp.dmd_eigs(mats, rank_tol=k["rank_tol"])
    res = np.array([kp.residual(w[i], gs[:, i], mats) for i in range(w.size)])
    kp.write_eigs_csv(out.path("koopman_eigs.csv"), w, res)
    out.done("koopman_eigs.csv")
    re_axis, im_axis = cfg.axes("koopman")
    grid = kp.koopman_pseudospectrum(mats, re_axis, im_axis,
                                     rank_tol=k["rank_tol"], workers=cfg.threads)
    grid.write_csv(out.path("koopman_grid.csv"), value_name="value")
    out.done("koopman_grid.csv")
    lattice = kp.find_circle_lattice(w, res)
    summary = {
        "M": ds.M,
        "dict_size": dic.n,
        "rbf_scale": dic.scale,
        "delta_tau": ds.delta_tau,
        "lattice_size": int(lattice.size),
        "lattice_base_phase": float(lattice.base_phase),
        "kreiss_c": k["c"],
    }
    try:
        kr = kp.koopman_kreiss(mats, c=k["c"], rank_tol=k["rank_tol"],
                               workers=cfg.threads)
        summary["kreiss"] = kr.value
        print(f"koopman: {lattice.size} lattice eigenvalues, "
              f"K_{k['c']:g} = {kr.value:.4f}")
    except ValueError as exc:
        summary["kreiss_error"] = str(exc)
        print(f"koopman: {lattice.size} lattice eigenvalues, "
              f"Kreiss unavailable ({exc})")
    out.write_json("koopman_summary.json", summary)
    if _figures_on(cfg):
        from . import figures
        figures.fig_grid_contours(grid, default_levels(), out.path("koopman_grid.png"),
                                  eigs=w[res <= 0.3], overlay="circle",
                                  title="data-driven pseudospectrum")
        out.done("koopman_grid.png")
        _koopman_eigenfunction_figure(cfg, cycle, dic, w, gs, lattice, ds, out)


def _koopman_eigenfunction_figure(cfg, cycle, dic, w, gs, lattice, ds, out: _Out) -> None:
    from . import figures
    wanted = []
    for harmonic in (1, 2, 3):
        hit = np.where(lattice.harmonics == harmonic)[0]
        if hit.size:
            wanted.append((harmonic, lattice.indices[hit[0]]))
    if not wanted:
        return
    (xa, xb), (ya, yb) = cfg.koopman_box()
    n_pix = 60
    gx = np.linspace(xa, xb, n_pix)
    gy = np.linspace(ya, yb, n_pix)
    QX, QY = np.meshgrid(gx, gy)
    # pull the lagged blocks back onto the cycle at the nearest phase
    phases, cyc_states = cycle.sample(512)
    pts = np.column_stack([QX.ravel(), QY.ravel()])
    nearest = np.argmin(((pts[:, None, :] - cyc_states[None, :, :]) ** 2).sum(-1), axis=1)
    Q = kp.cycle_embedding(cycle, phases[nearest], ds.d, ds.lag)
    Q[:, 0] = pts[:, 0]
    Q[:, 1] = pts[:, 1]
    fields = []
    labels = []
    for harmonic, idx in wanted:
        fields.append(kp.eigenfunction_field(dic, gs[:, idx], Q).reshape(n_pix, n_pix))
        labels.append(f"harmonic {harmonic} (phase {np.angle(w[idx]):.3f})")
    figures.fig_eigenfunctions(fields, (xa, xb, ya, yb), labels,
                               out.path("koopman_eigenfunctions.png"))
    out.done("koopman_eigenfunctions.png")


def _cmd_sweep_h(cfg: RunConfig, args, out: _Out) -> None:
    p = cfg.params
    if args.h_values:
        h_values = tuple(float(t) for t in args.h_values.split(",") if t.strip())
    else:
        h_values = cfg.get("sweep", "h_values")
    step = cfg.step
    transient = cfg.get("run", "transient")
    if args.target == "jacobian":
        rows = jac.sweep_h(h_values, p, n_samples=cfg.get("sweep", "n_samples"),
                           transient=transient, step=step)
        jac.write_hsweep_csv(out.path("h_sweep_jacobian.csv"), rows)
        out.done("h_sweep_jacobian.csv")
        if _figures_on(cfg):
            from . import figures
            figures.fig_jacobian_hsweep(rows, out.path("h_sweep_jacobian.png"))
            out.done("h_sweep_jacobian.png")
    elif args.target == "floquet":
        rows = fl.floquet_sweep_h(h_values, p, N=cfg.get("floquet", "n_basis"),
                                  c=cfg.get("floquet", "c"), step=step,
                                  transient=transient, workers=cfg.threads)
        fl.write_floquet_sweep_csv(out.path("h_sweep_floquet.csv"), rows)
        out.done("h_sweep_floquet.csv")
        ok = [(r.h, r.kreiss) for r in rows if r.kreiss is not None]
        if _figures_on(cfg) and ok:
            from . import figures
            figures.fig_kreiss_sweep([t[0] for t in ok], [t[1] for t in ok],
                                     out.path("h_sweep_floquet.png"))
            out.done("h_sweep_floquet.png")
    else:
        rows = kp.koopman_sweep_h(h_values, p, n_init=cfg.get("sweep", "n_init"),
                                  dict_size=cfg.get("koopman", "dict_size"),
                                  seed=cfg.seed, c=cfg.get("koopman", "c"),
                                  rank_tol=cfg.get("koopman", "rank_tol"),
                                  d=cfg.get("koopman", "d"), step=step,
                                  transient=transient, workers=cfg.threads)
        kp.write_koopman_sweep_csv(out.path("h_sweep_koopman.csv"), rows)
        out.done("h_sweep_koopman.csv")
        ok = [(r.h, r.kreiss) for r in rows if r.kreiss is not None]
        if _figures_on(cfg) and ok:
            from . import figures
            figures.fig_kreiss_sweep([t[0] for t in ok], [t[1] for t in ok],
                                     out.path("h_sweep_koopman.png"))
            out.done("h_sweep_koopman.png")
    flagged = [r for r in rows if getattr(r, "error", None)]
    print(f"sweep-h ({args.target}): {len(rows)} rows, {len(flagged)} flagged")
    for r in flagged:
        print(f"  h={r.h}: {r.error}")


def _read_eigs_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if len(header) < 2 or header[0] != "re" or header[1] != "im":
            raise ConfigError(f"eigenvalue CSV must start with re,im (got {header})")
        return np.array([complex(float(r[0]), float(r[1])) for r in reader])


def _cmd_render(cfg: RunConfig, args, out: _Out) -> None:
    try:
        grid = PseudospectrumGrid.read_csv(args.input)
    except OSError as exc:
        raise ConfigError(f"cannot read grid CSV {args.input}: {exc}") from exc
    levels = cfg.get("render", "levels")
    if args.levels:
        levels = tuple(float(t) for t in args.levels.split(",") if t.strip())
    levels = np.asarray(levels) if levels else default_levels()
    overlay = args.overlay or cfg.get("render", "overlay")
    eigs = _read_eigs_csv(args.eigs) if args.eigs else np.empty(0, dtype=complex)
    rendering = ContourRendering(grid=grid, levels=levels, overlay_points=eigs,
                                 overlay_curve=overlay)
    if args.output:
        name = os.path.basename(args.output)
        target_dir = os.path.dirname(args.output) or out.dir
    else:
        name = os.path.splitext(os.path.basename(args.input))[0] + ".svg"
        target_dir = out.dir
    sink = _Out(cfg, "render", directory=target_dir)
    render_svg(rendering, sink.path(name))
    sink.done(name)
    print(f"rendered {args.input} -> {sink.path(name)} ({levels.size} levels)")


_COMMANDS = {
    "simulate": _cmd_simulate,
    "fixed-point": _cmd_fixed_point,
    "limit-cycle": _cmd_limit_cycle,
    "jacobian-sweep": _cmd_jacobian_sweep,
    "jacobian-grid": _cmd_jacobian_grid,
    "floquet": _cmd_floquet,
    "koopman": _cmd_koopman,
    "sweep-h": _cmd_sweep_h,
    "render": _cmd_render,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _apply_overrides(parse_config(args.config), args)
        out = _Out(cfg, args.command)
        _COMMANDS[args.command](cfg, args, out)
        return 0
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except ConvergenceError as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
