"""Command-line entry point for the experiment harness.

Every subcommand reads a key=value config file and writes CSV tables plus
a run manifest into the output directory.  `--paper-scale` switches the
mesh resolutions from the desk-scale defaults (fine 2^-7, oscillation
2^-5) to the full-scale ones (2^-8, 2^-6), everything else unchanged.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from pathlib import Path

from . import experiments, msbasis
from .coarse import build_moment_map
from .experiments import (StudyConfig, make_coefficient, obtain_basis,
                          parse_config)
from .fem import assemble
from .mesh import build_hierarchy


def _apply_overrides(cfg: StudyConfig, args) -> StudyConfig:
    changes = {}
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            raise SystemExit("--seed must fit in 64 bits")
        changes["seed"] = args.seed
    if args.paper_scale:
        changes["h_exp"] = cfg.h_exp + 1
        changes["eps_exp"] = cfg.eps_exp + 1
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _setup(cfg: StudyConfig):
    mesh = build_hierarchy(cfg.H_exps[0], cfg.eps_exp, cfg.h_exp)
    coefficient = make_coefficient(cfg, mesh)
    fs = assemble(mesh, coefficient)
    p = cfg.p_list[0]
    ell = experiments.ell_for(cfg, p, cfg.H_exps[0], mesh)
    mmap = build_moment_map(mesh, p)
    return mesh, coefficient, fs, p, ell, mmap


def cmd_build_basis(cfg, args):
    mesh, coefficient, fs, p, ell, mmap = _setup(cfg)
    cache = args.cache or args.out
    basis = obtain_basis(mesh, coefficient, p, ell, fs, mmap, cache)
    print(f"basis ready: {basis.n_columns} columns, p={p}, ell={ell}, "
          f"H=1/{mesh.coarse_cells_per_dim}")
    return {}


def cmd_solve(cfg, args):
    from . import reference
    from .problems import get_problem
    mesh, coefficient, fs, p, ell, mmap = _setup(cfg)
    basis = obtain_basis(mesh, coefficient, p, ell, fs, mmap, args.cache)
    tau = experiments.tau_for(cfg, mesh)
    n_steps = experiments.n_steps_for(tau, cfg.t_end)
    res = reference.solve_multiscale(basis, mmap, fs, get_problem(cfg.problem),
                                     cfg.theta, tau, n_steps, cfg.initial_step)
    rows = [{"n": n, "t": n * tau, "energy": float(res.energies[n])}
            for n in range(n_steps)]
    out = Path(args.out) / f"{cfg.prefix}_trajectory.csv"
    experiments.write_csv(out, ["n", "t", "energy"], rows)
    print(f"wrote {out}")
    return {"csv": out}


def _study_command(kind):
    def cmd(cfg, args):
        cfg = dataclasses.replace(cfg, kind=kind)
        rows, out = experiments.STUDIES[kind](cfg, args.out, cache_dir=args.cache,
                                              threads=args.threads)
        print(f"wrote {out} ({len(rows)} rows)")
        return {"csv": out}
    return cmd


_COMMANDS = {
    "build-basis": cmd_build_basis,
    "solve": cmd_solve,
    "convergence": _study_command("convergence"),
    "localization": _study_command("localization"),
    "temporal": _study_command("temporal"),
    "fem-compare": _study_command("fem_compare"),
    "energy-audit": _study_command("energy_audit"),
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="wavelod", description="multiscale wave-equation experiment harness")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="key=value config file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for independent grid points")
        p.add_argument("--cache", default=None, help="basis cache directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the coefficient seed (u64)")
        p.add_argument("--paper-scale", action="store_true",
                       help="full-scale meshes instead of desk scale")
    args = parser.parse_args(argv)

    try:
        cfg = parse_config(args.config)
        cfg = _apply_overrides(cfg, args)
        Path(args.out).mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        _COMMANDS[args.command](cfg, args)
        wall = time.perf_counter() - t0
        experiments.write_manifest(args.out, cfg, wall)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
