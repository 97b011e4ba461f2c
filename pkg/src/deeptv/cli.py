"""Experiment drivers: reconstruction tasks, convergence sweeps, baselines.

Every run writes a self-describing directory: a JSON record of the full
configuration (enough to reproduce the run bit for bit), the training
history CSV, the best checkpoint, and task-specific images and CSV
series.  ``deeptv emit-plots RUNDIR`` turns those artifacts into
plot-ready two-to-four column CSV files.
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
import time
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .analytic import (
    Step1DParams,
    disk_data,
    error_estimate,
    step1d_solution,
    step_profile,
    weighted_l2,
)
from .energy import EnergySpec, energy_fd
from .grid import Field, Grid
from .imaging import (
    Image,
    add_gaussian_noise,
    add_salt_pepper,
    load_image,
    metrics,
    render_fine,
    sample_network,
    save_image,
)
from .network import NetworkSpec, forward
from .operators import blur_op, gaussian_kernel, identity_op, mask_from_image
from .optimize import TrainConfig, solve_fd, train

TASKS = ("denoise", "inpaint", "deblur", "sweep1d", "sweep2d", "fd-baseline", "error-track")


@dataclass
class RunConfig:
    task: str = "denoise"
    # energy
    alpha1: float = 10.0
    alpha2: float = 30.0
    lam: float = 1.0
    tv_variant: str = "tv2"
    smoothing: str = "lift"
    gamma: float = 1e-10
    bc: str = "neumann"
    c: float = 1e4
    alpha_theta: float = 0.0
    # network
    hidden_widths: tuple[int, ...] = (128, 128, 128)
    # training
    learning_rate: float = 1e-3
    iterations: int = 1000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    log_every: int = 1000
    # data
    input: str | None = None
    n: int = 129
    domain: tuple[float, float] = (0.0, 2.0)
    split: float = 1.0
    radius: float = 0.25
    noise_sigma: float = 0.0
    sp_prob: float = 0.0
    # operator
    mask: str | None = None
    blur_size: int = 11
    blur_sigma: float = 20.0
    # outputs
    out: str = "runs/run"
    fine_factor: int = 10
    # sweeps: list of c (1-d) or of [n, c] pairs (2-d)
    ladder: tuple = ()

    def energy_spec(self) -> EnergySpec:
        return EnergySpec(
            alpha1=self.alpha1, alpha2=self.alpha2, lam=self.lam,
            tv_variant=self.tv_variant, smoothing=self.smoothing,
            gamma=self.gamma, bc=self.bc, c=self.c, alpha_theta=self.alpha_theta,
        )

    def train_config(self, **overrides) -> TrainConfig:
        kw = dict(
            learning_rate=self.learning_rate, iterations=self.iterations,
            beta1=self.beta1, beta2=self.beta2, eps=self.eps,
            seed=self.seed, c=self.c, log_every=self.log_every,
        )
        kw.update(overrides)
        return TrainConfig(**kw)


# Settings from the reference experiments (paper) and fast variants with
# reduced sizes and iteration budgets for smoke testing (ci).
PRESETS = {
    "paper": {
        "denoise": dict(alpha1=10, alpha2=30, noise_sigma=0.1, sp_prob=0.1,
                        n=129, iterations=300001, learning_rate=1e-3),
        "inpaint": dict(alpha1=300, alpha2=300, n=129, iterations=300001,
                        learning_rate=1e-3),
        "deblur": dict(alpha1=300, alpha2=300, n=129, iterations=300001,
                       learning_rate=1e-3, blur_size=11, blur_sigma=20.0),
        "sweep1d": dict(alpha1=0.5, alpha2=1.25, lam=1.0, smoothing="huber",
                        n=1000, hidden_widths=(64, 128), learning_rate=1e-2,
                        iterations=100001, ladder=(0.0, 0.1, 0.5, 1.0, 10.0, 100.0)),
        "sweep2d": dict(alpha1=1, alpha2=7, lam=1.0, smoothing="huber",
                        bc="dirichlet", learning_rate=1e-3, iterations=300001,
                        ladder=((33, 0.0), (65, 1.0), (129, 10.0))),
        "fd-baseline": dict(alpha1=0.5, alpha2=1.25, lam=1.0, smoothing="huber",
                            n=50, c=1e4, hidden_widths=(64, 128),
                            learning_rate=1e-2, iterations=30001),
        "error-track": dict(alpha1=0.5, alpha2=1.25, lam=1.0, smoothing="huber",
                            n=1000, c=100.0, hidden_widths=(64, 128),
                            learning_rate=1e-2, iterations=100001),
    },
    "ci": {
        "denoise": dict(alpha1=10, alpha2=30, noise_sigma=0.1, sp_prob=0.1,
                        n=33, iterations=201, learning_rate=1e-3, log_every=100,
                        fine_factor=3),
        "inpaint": dict(alpha1=300, alpha2=300, n=33, iterations=201,
                        learning_rate=1e-3, log_every=100, fine_factor=3),
        "deblur": dict(alpha1=300, alpha2=300, n=33, iterations=201,
                       learning_rate=1e-3, log_every=100, blur_size=5,
                       blur_sigma=5.0, fine_factor=3),
        "sweep1d": dict(alpha1=0.5, alpha2=1.25, lam=1.0, smoothing="huber",
                        n=200, hidden_widths=(16, 32), learning_rate=1e-2,
                        iterations=501, log_every=250, ladder=(0.0, 100.0)),
        "sweep2d": dict(alpha1=1, alpha2=7, lam=1.0, smoothing="huber",
                        bc="dirichlet", learning_rate=1e-3, iterations=201,
                        log_every=100, hidden_widths=(32, 32),
                        ladder=((17, 0.0), (33, 1.0))),
        "fd-baseline": dict(alpha1=0.5, alpha2=1.25, lam=1.0, smoothing="huber",
                            n=50, c=1e4, hidden_widths=(16, 32),
                            learning_rate=1e-2, iterations=2001, log_every=500),
        "error-track": dict(alpha1=0.5, alpha2=1.25, lam=1.0, smoothing="huber",
                            n=200, c=100.0, hidden_widths=(16, 32),
                            learning_rate=1e-2, iterations=501, log_every=250),
    },
}


def _load_config_file(path) -> dict:
    raw = Path(path).read_bytes()
    if str(path).endswith(".toml"):
        try:
            import tomllib
        except ImportError:  # python 3.10
            import tomli as tomllib

        doc = tomllib.loads(raw.decode())
    else:
        doc = json.loads(raw)
    flat = {}
    for key, value in doc.items():
        # one table per module is allowed; flat keys work too
        if isinstance(value, dict):
            flat.update(value)
        else:
            flat[key] = value
    return flat


def build_config(task: str, preset: str | None, config_file, flag_overrides: dict) -> RunConfig:
    values: dict = {"task": task}
    if preset:
        if preset not in PRESETS:
            raise SystemExit(f"unknown preset {preset!r}")
        values.update(PRESETS[preset].get(task, {}))
    if config_file:
        values.update(_load_config_file(config_file))
    values.update({k: v for k, v in flag_overrides.items() if v is not None})
    values["task"] = task

    known = {f.name for f in fields(RunConfig)}
    unknown = set(values) - known
    if unknown:
        raise SystemExit(f"unknown config keys: {sorted(unknown)}")
    cfg = RunConfig(**values)
    if isinstance(cfg.hidden_widths, str):
        cfg.hidden_widths = tuple(int(w) for w in cfg.hidden_widths.split(","))
    else:
        cfg.hidden_widths = tuple(int(w) for w in cfg.hidden_widths)
    cfg.domain = tuple(float(x) for x in cfg.domain)
    cfg.ladder = tuple(
        tuple(r) if isinstance(r, (list, tuple)) else float(r) for r in cfg.ladder
    )
    return cfg


# -- shared pieces -----------------------------------------------------------


def _git_revision() -> str | None:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"], capture_output=True, text=True, timeout=10
        )
        return out.stdout.strip() or None
    except OSError:
        return None


def _write_metadata(outdir: Path, cfg: RunConfig, started: float, extra: dict | None = None):
    record = {
        "config": asdict(cfg),
        "package_version": __version__,
        "git_revision": _git_revision(),
        "argv": sys.argv,
        "wall_seconds": time.time() - started,
    }
    if extra:
        record.update(extra)
    (outdir / "run.json").write_text(json.dumps(record, indent=2, default=str) + "\n")


def _write_csv(path, header, rows):
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(repr(x) if isinstance(x, float) else str(x) for x in row) + "\n")


def _observation_pipeline(cfg: RunConfig, original: Image, grid: Grid):
    """Build operator and corrupted observation for an imaging task."""
    if cfg.task == "inpaint":
        if cfg.mask is None:
            raise SystemExit("inpainting needs --mask")
        op = mask_from_image(cfg.mask, grid)
    elif cfg.task == "deblur":
        op = blur_op(gaussian_kernel(cfg.blur_size, cfg.blur_sigma), grid)
    else:
        op = identity_op(grid)

    from .operators import apply_values

    observed = Image(apply_values(op, original.values))
    if cfg.noise_sigma > 0:
        observed = add_gaussian_noise(observed, cfg.noise_sigma, cfg.seed)
    if cfg.sp_prob > 0:
        observed = add_salt_pepper(observed, cfg.sp_prob, cfg.seed)
    return op, observed


def _load_or_synthesize(cfg: RunConfig) -> Image:
    if cfg.input:
        return load_image(cfg.input)
    # built-in test scene: centered disk indicator
    grid = Grid.unit_square(cfg.n)
    return Image(disk_data(grid, cfg.radius).values)


# -- tasks -------------------------------------------------------------------


def run_imaging_task(cfg: RunConfig, outdir: Path) -> dict:
    original = _load_or_synthesize(cfg)
    grid = Grid(((0.0, 1.0), (0.0, 1.0)), original.values.shape, cfg.bc)
    op, observed = _observation_pipeline(cfg, original, grid)
    g = observed.to_field(grid)

    net = NetworkSpec(input_dim=2, hidden_widths=cfg.hidden_widths)
    state = train(
        net, cfg.energy_spec(), grid, g, op, cfg.train_config(),
        history_path=outdir / "loss.csv", checkpoint_path=outdir / "best_theta.ckpt",
    )
    recon = sample_network(net, state.best_theta, grid)
    fine = render_fine(net, state.best_theta, grid, cfg.fine_factor)

    save_image(original, outdir / "original.png")
    save_image(observed, outdir / "observation.png")
    save_image(Image(recon.values), outdir / "reconstruction.png")
    save_image(Image(recon.values), outdir / "reconstruction.pgm")
    save_image(fine, outdir / "reconstruction_fine.png")

    mean_l1, l2 = metrics(recon, original.to_field(grid, cfg.bc))
    _write_csv(outdir / "metrics.csv", ["mean_l1", "l2"], [(mean_l1, l2)])
    return {"best_loss": state.best_loss, "mean_l1": mean_l1, "l2": l2}


def _sweep1d_problem(cfg: RunConfig):
    a, b = cfg.domain
    grid = Grid.interval(a, b, cfg.n, cfg.bc)
    g = step_profile(grid, cfg.split)
    params = Step1DParams(
        l_ell=cfg.split - a, l_u=b - cfg.split, alpha1=cfg.alpha1, alpha2=cfg.alpha2
    )
    c1, c2 = step1d_solution(params)
    u_star = step_profile(grid, cfg.split, c2, c1)
    return grid, g, u_star


def run_sweep1d(cfg: RunConfig, outdir: Path) -> dict:
    grid, g, u_star = _sweep1d_problem(cfg)
    op = identity_op(grid)
    net = NetworkSpec(input_dim=1, hidden_widths=cfg.hidden_widths)
    rows = []
    for c in cfg.ladder:
        spec = cfg.energy_spec().with_(c=float(c))
        state = train(
            net, spec, grid, g, op, cfg.train_config(c=float(c)),
            history_path=outdir / f"loss_c{c:g}.csv",
        )
        u = sample_network(net, state.best_theta, grid)
        mean_l1, _ = metrics(u, u_star)
        rows.append((float(c), grid.node_count, state.best_loss, mean_l1))
        _write_csv(
            outdir / f"signal_c{c:g}.csv",
            ["x", "u", "u_star", "g"],
            zip(grid.axes()[0], u.flat, u_star.flat, g.flat),
        )
    _write_csv(outdir / "energies.csv", ["c", "n", "best_energy", "mean_l1"], rows)
    return {"rows": rows}


def run_sweep2d(cfg: RunConfig, outdir: Path) -> dict:
    net = NetworkSpec(input_dim=2, hidden_widths=cfg.hidden_widths)
    rows = []
    for n, c in cfg.ladder:
        n = int(n)
        grid = Grid.unit_square(n, cfg.bc)
        g = disk_data(grid, cfg.radius)
        op = identity_op(grid)
        spec = cfg.energy_spec().with_(c=float(c))
        state = train(
            net, spec, grid, g, op, cfg.train_config(c=float(c)),
            history_path=outdir / f"loss_n{n}_c{c:g}.csv",
        )
        u = sample_network(net, state.best_theta, grid)
        from .analytic import DiskParams, disk_solution

        amp = disk_solution(DiskParams(cfg.radius, cfg.alpha1, cfg.alpha2, cfg.lam))
        mean_l1, _ = metrics(u, disk_data(grid, cfg.radius, amplitude=amp))
        rows.append((float(c), n, state.best_loss, mean_l1))
        save_image(Image(np.clip(u.values, 0, 1)), outdir / f"reconstruction_n{n}_c{c:g}.png")
    _write_csv(outdir / "energies.csv", ["c", "n", "best_energy", "mean_l1"], rows)
    return {"rows": rows}


def run_fd_baseline(cfg: RunConfig, outdir: Path) -> dict:
    grid, g, u_star = _sweep1d_problem(cfg)
    op = identity_op(grid)
    spec = cfg.energy_spec()
    net = NetworkSpec(input_dim=1, hidden_widths=cfg.hidden_widths)
    state = train(net, spec, grid, g, op, cfg.train_config(),
                  history_path=outdir / "loss.csv")
    u_nn = sample_network(net, state.best_theta, grid)
    u_fd = solve_fd(spec, grid, g, op, cfg.train_config())
    _write_csv(
        outdir / "comparison.csv",
        ["x", "u_nn", "u_fd"],
        zip(grid.axes()[0], u_nn.flat, u_fd.flat),
    )
    gap = float(np.abs(u_nn.values - u_fd.values).max())
    e_nn = energy_fd(spec, u_nn, g, op)
    e_fd = energy_fd(spec, u_fd, g, op)
    return {
        "linf_gap": gap,
        "energy_nn": e_nn,
        "energy_fd": e_fd,
        "energy_gap": abs(e_nn - e_fd),
    }


def run_error_track(cfg: RunConfig, outdir: Path) -> dict:
    grid, g, u_star = _sweep1d_problem(cfg)
    op = identity_op(grid)
    spec = cfg.energy_spec()
    net = NetworkSpec(input_dim=1, hidden_widths=cfg.hidden_widths)
    rows = []

    def on_best(update_index, iteration, theta, loss):
        v = sample_network(net, theta, grid)
        rho1, rho2, rho = error_estimate(v, g, spec, op)
        true_err = weighted_l2(Field(v.values - u_star.values, grid))
        rows.append((update_index, rho1, rho2, rho, true_err))

    train(net, spec, grid, g, op, cfg.train_config(),
          history_path=outdir / "loss.csv", on_best=on_best)
    _write_csv(
        outdir / "error_track.csv",
        ["update_index", "rho1", "rho2", "rho", "true_error"],
        rows,
    )
    return {"updates": len(rows)}


def run_task(cfg: RunConfig) -> dict:
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    started = time.time()
    if cfg.task in ("denoise", "inpaint", "deblur"):
        report = run_imaging_task(cfg, outdir)
    elif cfg.task == "sweep1d":
        report = run_sweep1d(cfg, outdir)
    elif cfg.task == "sweep2d":
        report = run_sweep2d(cfg, outdir)
    elif cfg.task == "fd-baseline":
        report = run_fd_baseline(cfg, outdir)
    elif cfg.task == "error-track":
        report = run_error_track(cfg, outdir)
    else:
        raise SystemExit(f"unknown task {cfg.task!r}")
    _write_metadata(outdir, cfg, started, {"report": report})
    return report


# -- plot data ---------------------------------------------------------------


def emit_plots(run_dir) -> list[Path]:
    """Produce plot-ready CSV series from a completed run directory."""
    run_dir = Path(run_dir)
    written = []
    energies = run_dir / "energies.csv"
    track = run_dir / "error_track.csv"
    if energies.exists():
        rows = energies.read_text().strip().splitlines()[1:]
        cols = [line.split(",") for line in rows]
        path = run_dir / "energy_vs_c.csv"
        _write_csv(path, ["c", "energy"], [(r[0], r[2]) for r in cols])
        written.append(path)
        path = run_dir / "distance_vs_c.csv"
        _write_csv(path, ["c", "mean_l1"], [(r[0], r[3]) for r in cols])
        written.append(path)
    if track.exists():
        rows = track.read_text().strip().splitlines()[1:]
        cols = [line.split(",") for line in rows]
        path = run_dir / "rho_vs_updates.csv"
        _write_csv(path, ["update", "rho1", "rho2", "rho"],
                   [(r[0], r[1], r[2], r[3]) for r in cols])
        written.append(path)
    if not written:
        raise SystemExit(f"no plottable artifacts found in {run_dir}")
    return written


# -- argument parsing --------------------------------------------------------


def _add_override_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="TOML or JSON config file")
    p.add_argument("--preset", choices=("paper", "ci"), help="named settings bundle")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--alpha1", type=float)
    p.add_argument("--alpha2", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--tv", dest="tv_variant", choices=("tv2", "tv21"))
    p.add_argument("--smoothing", choices=("huber", "lift", "maxlift"))
    p.add_argument("--gamma", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--alpha-theta", dest="alpha_theta", type=float)
    p.add_argument("--lr", dest="learning_rate", type=float)
    p.add_argument("--iters", dest="iterations", type=int)
    p.add_argument("--arch", dest="hidden_widths", help="e.g. 128,128,128")
    p.add_argument("--bc", choices=("neumann", "dirichlet"))
    p.add_argument("--n", type=int, help="nodes per axis")
    p.add_argument("--input", help="input image (PGM/PNG); omit for the built-in disk")
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float)
    p.add_argument("--sp-prob", dest="sp_prob", type=float)
    p.add_argument("--mask", help="inpainting mask image; nonzero pixels are kept")
    p.add_argument("--blur-size", dest="blur_size", type=int)
    p.add_argument("--blur-sigma", dest="blur_sigma", type=float)
    p.add_argument("--fine-factor", dest="fine_factor", type=int)
    p.add_argument("--log-every", dest="log_every", type=int)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="deeptv",
        description="Mesh-free total-variation image reconstruction",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for task in TASKS:
        p = sub.add_parser(task, help=f"run the {task} task")
        _add_override_flags(p)
    plots = sub.add_parser("emit-plots", help="write plot-ready CSVs for a run")
    plots.add_argument("run_dir")

    args = parser.parse_args(argv)
    if args.command == "emit-plots":
        for path in emit_plots(args.run_dir):
            print(path)
        return 0

    overrides = {
        k: v
        for k, v in vars(args).items()
        if k not in ("command", "config", "preset") and v is not None
    }
    cfg = build_config(args.command, args.preset, args.config, overrides)
    report = run_task(cfg)
    print(json.dumps({"task": cfg.task, "out": cfg.out, "report": report}, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
