"""Command-line front end: ``qcurvature {geometry,correlator,curvature,bounds,mori}``.

Exit codes: 0 success, 2 physics-domain error (gap closure, empty density,
zero noise), 3 resource guard (too many ED sites), 4 a bound check failed.
Floats are written with 12 significant digits; summary lines start with '#'.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import json
import sys
from dataclasses import dataclass

import numpy as np

from . import bounds, geometry, matsubara, mori
from .bloch import BlochModel, Variant
from .errors import DimensionTooLarge, PhysicsDomainError

EXIT_OK = 0
EXIT_PHYSICS = 2
EXIT_RESOURCE = 3
EXIT_BOUND_FAILED = 4


@dataclass(frozen=True)
class Sweep:
    start: float
    stop: float
    steps: int

    @classmethod
    def parse(cls, text: str) -> "Sweep":
        try:
            start, stop, steps = text.split(":")
            sweep = cls(float(start), float(stop), int(steps))
        except ValueError:
            raise argparse.ArgumentTypeError(f"sweep must look like START:STOP:STEPS, got {text!r}")
        if sweep.steps < 2:
            raise argparse.ArgumentTypeError("sweep needs at least 2 steps")
        return sweep

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.steps)


@dataclass(frozen=True)
class RunConfig:
    command: str
    model: BlochModel | None = None
    grid: int = 64
    beta: float | None = None
    n_tau: int = 101
    sweep: Sweep | None = None
    out: str | None = None
    sites: int = 8
    np_: int | None = None
    t: float = 1.0
    v: float = 0.0
    levels: int = 2

    @classmethod
    def from_args(cls, args) -> "RunConfig":
        beta = None
        if getattr(args, "beta", None) is not None:
            beta = args.beta
        elif getattr(args, "temp", None) is not None:
            beta = 1.0 / args.temp
        model = None
        if getattr(args, "model", None) is not None:
            model = BlochModel(Variant(args.model), m=args.m, delta=args.delta)
        return cls(
            command=args.command,
            model=model,
            grid=getattr(args, "grid", 64),
            beta=beta,
            n_tau=getattr(args, "n_tau", 101),
            sweep=getattr(args, "sweep", None),
            out=getattr(args, "out", None),
            sites=getattr(args, "sites", 8),
            np_=getattr(args, "np", None),
            t=getattr(args, "t", 1.0),
            v=getattr(args, "v", 0.0),
            levels=getattr(args, "levels", 2),
        )


def _fmt(x) -> str:
    return f"{x:.12g}"


@contextlib.contextmanager
def _output(path):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _positive(kind):
    def parse(text):
        value = kind(text)
        if value <= 0:
            raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
        return value

    return parse


def _odd(text):
    value = int(text)
    if value < 3 or value % 2 == 0:
        raise argparse.ArgumentTypeError("n_tau must be odd and >= 3 so that beta/2 is a grid point")
    return value


def _add_model(p):
    p.add_argument("--model", choices=[v.value for v in Variant], default="qwz")
    p.add_argument("--m", type=float, default=1.0, help="QWZ mass parameter")
    p.add_argument("--delta", type=_positive(float), default=1.0, help="gap of the flat variants")
    p.add_argument("--grid", type=int, default=64, help="BZ mesh size per axis")


def _add_temperature(p, required):
    group = p.add_mutually_exclusive_group(required=required)
    group.add_argument("--beta", type=_positive(float))
    group.add_argument("--temp", type=_positive(float))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qcurvature", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("geometry", help="per-k gap, metric and Berry curvature; Chern number")
    _add_model(p)
    _add_temperature(p, required=False)
    p.add_argument("--out")

    p = sub.add_parser("correlator", help="imaginary-time current correlator S(tau)")
    _add_model(p)
    _add_temperature(p, required=True)
    p.add_argument("--n-tau", dest="n_tau", type=_odd, default=101)
    p.add_argument("--out")

    p = sub.add_parser("curvature", help="rho0 of a band model, optionally swept over beta")
    _add_model(p)
    _add_temperature(p, required=False)
    p.add_argument("--sweep", type=Sweep.parse, help="beta sweep START:STOP:STEPS")
    p.add_argument("--out")

    p = sub.add_parser("bounds", help="universal bound constants and saturation sweep")
    _add_temperature(p, required=True)
    p.add_argument("--sweep", type=Sweep.parse, default=Sweep(0.1, 10.0, 2000),
                   help="gap sweep START:STOP:STEPS")
    p.add_argument("--out")

    p = sub.add_parser("mori", help="ED Mori coefficients and b1 bound check")
    p.add_argument("--sites", type=int, default=8)
    p.add_argument("--np", type=int, default=None, help="particle number (default L/2)")
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--v", type=float, default=0.0)
    _add_temperature(p, required=True)
    p.add_argument("--levels", type=int, default=2)
    p.add_argument("--out")
    return parser


DEFAULT_BETA = 5.0


def cmd_geometry(cfg: RunConfig) -> int:
    grid = geometry.build_band_grid(cfg.model, cfg.grid)
    chern = geometry.chern_number(cfg.model, cfg.grid)
    beta = cfg.beta if cfg.beta is not None else DEFAULT_BETA
    with _output(cfg.out) as fh:
        geometry.write_band_grid_csv(grid, fh)
    print(f"# chern_number {chern}")
    print(f"# beta {_fmt(beta)}")
    print(f"# S0_sum {_fmt(bounds.band_equal_time(grid, beta))}")
    print(f"# curvature_sum {_fmt(bounds.band_curvature(grid, beta))}")
    print(f"# geometric_sum_T0 {_fmt(bounds.geometric_sum(grid))}")
    return EXIT_OK


def _model_density(cfg):
    grid = geometry.build_band_grid(cfg.model, cfg.grid)
    return grid, matsubara.band_density(grid)


def cmd_correlator(cfg: RunConfig) -> int:
    _, density = _model_density(cfg)
    corr = matsubara.spectral_correlator(density, cfg.beta, cfg.n_tau)
    with _output(cfg.out) as fh:
        corr.write_csv(fh)
    return EXIT_OK


def cmd_curvature(cfg: RunConfig) -> int:
    grid, density = _model_density(cfg)
    if cfg.sweep is not None:
        betas = cfg.sweep.values()
    else:
        betas = [cfg.beta if cfg.beta is not None else DEFAULT_BETA]
    c = bounds.bound_constants(2)
    with _output(cfg.out) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("beta", "S0", "curvature", "rho0", "rho0_spectral", "rho0_beta2_over4", "margin"))
        for beta in betas:
            rho = bounds.rho0_band(grid, beta)
            writer.writerow([_fmt(v) for v in (
                beta,
                bounds.band_equal_time(grid, beta),
                bounds.band_curvature(grid, beta),
                rho,
                bounds.rho0_spectral(density, beta),
                rho * beta ** 2 / 4.0,
                c.bound(beta) - rho,
            )])
    return EXIT_OK


def cmd_bounds(cfg: RunConfig) -> int:
    c = bounds.bound_constants(2)
    rows = bounds.saturation_sweep(cfg.beta, (cfg.sweep.start, cfg.sweep.stop), cfg.sweep.steps)
    with _output(cfg.out) as fh:
        bounds.write_sweep_csv(rows, fh)
    best = bounds.sweep_maximum(rows)
    print(f"# x_star {_fmt(c.x_star)} (reported {bounds.REPORTED_X_STAR})")
    print(f"# sup_val {_fmt(c.sup_val)} (reported {bounds.REPORTED_SUP})")
    print(f"# a_const {_fmt(c.a_const)} (reported {bounds.REPORTED_A:g})")
    print(f"# sweep_max {_fmt(best.rho0_beta2_over4)} at delta {_fmt(best.delta)}")
    print(f"# saturating_delta {_fmt(2.0 * c.x_star / cfg.beta)}")
    return EXIT_OK


def cmd_mori(cfg: RunConfig) -> int:
    system = mori.build_chain(cfg.sites, cfg.t, cfg.v, cfg.np_)
    report = mori.mori_report(system, cfg.beta, cfg.levels)
    with _output(cfg.out) as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    if not (report["b1_bound_holds"] and report["within_universal_bound"]):
        print("# bound check FAILED", file=sys.stderr)
        return EXIT_BOUND_FAILED
    return EXIT_OK


COMMANDS = {
    "geometry": cmd_geometry,
    "correlator": cmd_correlator,
    "curvature": cmd_curvature,
    "bounds": cmd_bounds,
    "mori": cmd_mori,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.from_args(args)
        return COMMANDS[cfg.command](cfg)
    except PhysicsDomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    except DimensionTooLarge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE


if __name__ == "__main__":
    sys.exit(main())
