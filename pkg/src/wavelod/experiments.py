"""Config-driven experiment harness: convergence, localization, temporal
order, and standard-FEM comparison studies with CSV persistence.

Configs are flat key=value files with sections; unknown sections or keys
are rejected so typos fail loudly.  All studies write versioned CSV (a
`# wavelod-csv v1` comment line first) with rows in config order, so two
runs of the same config produce byte-identical tables apart from the
timing columns.
"""

from __future__ import annotations

import configparser
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import coefficient as coeff_mod
from . import msbasis, reference, wave
from .fem import assemble
from .mesh import MeshHierarchy, build_hierarchy
from .coarse import build_moment_map
from .problems import get_problem

CSV_VERSION_LINE = "# wavelod-csv v1"


# -- configuration -----------------------------------------------------

_SCHEMA = {
    "study": {"kind"},
    "mesh": {"h_exp", "eps_exp", "H_exps"},
    "coefficient": {"kind", "seed", "lo", "hi", "value"},
    "discretization": {"p_list", "ell_rule", "ell_list"},
    "time": {"theta", "thetas", "tau", "tau_rule", "tau_factor", "t_end",
             "initial_step", "n_tau_refinements"},
    "problem": {"name"},
    "output": {"prefix"},
}

_KINDS = ("convergence", "localization", "temporal", "fem_compare",
          "energy_audit", "solve", "build_basis")


@dataclass(frozen=True)
class StudyConfig:
    kind: str
    h_exp: int
    eps_exp: int
    H_exps: tuple
    coefficient_kind: str
    seed: int
    lo: float
    hi: float
    value: float
    p_list: tuple
    ell_rule: str  # "auto" or "fixed"
    ell_list: tuple  # used when ell_rule == "fixed"
    theta: float
    thetas: tuple
    tau: float | None
    tau_rule: str  # "fixed" | "proportional"
    tau_factor: float
    t_end: float
    initial_step: str
    n_tau_refinements: int
    problem: str
    prefix: str
    raw_text: str = field(repr=False, default="")


def default_ell(p: int, H_exp: int) -> int:
    """Localization radius growing with p and |log2 H|."""
    return max(1, math.ceil((p + 2) * H_exp / 3.0))


def parse_config(path) -> StudyConfig:
    text = Path(path).read_text()
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str  # keys are case-sensitive (H_exps vs h_exp)
    cp.read_string(text)
    for sec in cp.sections():
        if sec not in _SCHEMA:
            raise ValueError(f"unknown config section [{sec}]")
        for key in cp[sec]:
            if key not in _SCHEMA[sec]:
                raise ValueError(f"unknown key {key!r} in section [{sec}]")

    def get(sec, key, default=None):
        return cp.get(sec, key, fallback=default)

    def ints(s):
        return tuple(int(x) for x in s.split())

    kind = get("study", "kind", "convergence")
    if kind not in _KINDS:
        raise ValueError(f"unknown study kind {kind!r}")
    seed_raw = int(get("coefficient", "seed", "1234"))
    if not 0 <= seed_raw < 2 ** 64:
        raise ValueError("seed must fit in 64 bits")
    cfg = StudyConfig(
        kind=kind,
        h_exp=int(get("mesh", "h_exp", "7")),
        eps_exp=int(get("mesh", "eps_exp", "5")),
        H_exps=ints(get("mesh", "H_exps", "1 2 3 4")),
        coefficient_kind=get("coefficient", "kind", "checkerboard"),
        seed=seed_raw,
        lo=float(get("coefficient", "lo", "1.0")),
        hi=float(get("coefficient", "hi", "10.0")),
        value=float(get("coefficient", "value", "1.0")),
        p_list=ints(get("discretization", "p_list", "0 1")),
        ell_rule=get("discretization", "ell_rule", "auto"),
        ell_list=ints(get("discretization", "ell_list", "")) if get("discretization", "ell_list") else (),
        theta=float(eval_fraction(get("time", "theta", "0.25"))),
        thetas=tuple(float(eval_fraction(x)) for x in get("time", "thetas", "0.25").split()),
        tau=float(eval_fraction(get("time", "tau"))) if get("time", "tau") else None,
        tau_rule=get("time", "tau_rule", "fixed"),
        tau_factor=float(eval_fraction(get("time", "tau_factor", "0.03125"))),
        t_end=float(get("time", "t_end", "1.0")),
        initial_step=get("time", "initial_step", "fourth_order"),
        n_tau_refinements=int(get("time", "n_tau_refinements", "3")),
        problem=get("problem", "name", "driven_sine"),
        prefix=get("output", "prefix", "study"),
        raw_text=text,
    )
    if cfg.ell_rule not in ("auto", "fixed"):
        raise ValueError("ell_rule must be 'auto' or 'fixed'")
    if cfg.ell_rule == "fixed" and not cfg.ell_list:
        raise ValueError("ell_rule=fixed requires ell_list")
    if cfg.tau_rule not in ("fixed", "proportional"):
        raise ValueError("tau_rule must be 'fixed' or 'proportional'")
    return cfg


def eval_fraction(s: str) -> float:
    """Floats given directly or as simple fractions / dyadic powers (1/12, 2^-9)."""
    s = s.strip()
    if "/" in s:
        num, den = s.split("/")
        return float(num) / float(den)
    if "^" in s:
        base, exp = s.split("^")
        return float(base) ** float(exp)
    return float(s)


# -- building blocks ---------------------------------------------------

def make_coefficient(cfg: StudyConfig, mesh: MeshHierarchy):
    if cfg.coefficient_kind == "checkerboard":
        return coeff_mod.checkerboard(mesh, cfg.seed, cfg.lo, cfg.hi)
    if cfg.coefficient_kind == "analytic":
        return coeff_mod.analytic_smooth(mesh)
    if cfg.coefficient_kind == "constant":
        return coeff_mod.constant(mesh, cfg.value)
    raise ValueError(f"unknown coefficient kind {cfg.coefficient_kind!r}")


def coefficient_label(cfg: StudyConfig) -> str:
    if cfg.coefficient_kind == "checkerboard":
        return f"checkerboard:s{cfg.seed}:{cfg.lo:g}-{cfg.hi:g}"
    if cfg.coefficient_kind == "constant":
        return f"constant:{cfg.value:g}"
    return "analytic"


def ell_for(cfg: StudyConfig, p: int, H_exp: int, mesh: MeshHierarchy) -> int:
    if cfg.ell_rule == "fixed":
        idx = cfg.H_exps.index(H_exp)
        ell = cfg.ell_list[min(idx, len(cfg.ell_list) - 1)]
    else:
        ell = default_ell(p, H_exp)
    return min(ell, msbasis.saturating_ell(mesh))


def tau_for(cfg: StudyConfig, mesh: MeshHierarchy) -> float:
    if cfg.tau_rule == "proportional":
        return cfg.tau_factor * mesh.H
    if cfg.tau is None:
        raise ValueError("tau_rule=fixed requires a tau value")
    return cfg.tau


def n_steps_for(tau: float, t_end: float) -> int:
    n = round(t_end / tau)
    if n < 1 or abs(n * tau - t_end) > 1e-12 * max(1.0, t_end):
        raise ValueError(f"t_end={t_end} is not an integer multiple of tau={tau}")
    return n


def obtain_basis(mesh, coefficient, p, ell, fs, mmap, cache_dir=None):
    """Build the multiscale basis, round-tripping through the cache if set."""
    if cache_dir is None:
        return msbasis.build_basis(mesh, coefficient, p, ell, fs=fs, mmap=mmap)
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    name = (f"basis_{mesh.coarse_cells_per_dim}_{mesh.eps_cells_per_dim}_"
            f"{mesh.fine_cells_per_dim}_p{p}_l{ell}_"
            f"{coefficient.descriptor_hash()[:12]}.npz")
    path = cache_dir / name
    if path.exists():
        cached = msbasis.load_basis(path, mesh, coefficient, p, ell)
        if cached is not None:
            return cached
    basis = msbasis.build_basis(mesh, coefficient, p, ell, fs=fs, mmap=mmap)
    msbasis.save_basis(basis, path)
    return basis


def write_csv(path, fieldnames, rows) -> None:
    lines = [CSV_VERSION_LINE, ",".join(fieldnames)]
    for row in rows:
        lines.append(",".join(_fmt(row.get(name, "")) for name in fieldnames))
    Path(path).write_text("\n".join(lines) + "\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def read_csv(path):
    """Rows of a versioned CSV as dicts of strings."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# wavelod-csv"):
        raise ValueError("missing CSV schema version line")
    if lines[0] != CSV_VERSION_LINE:
        raise ValueError(f"unsupported CSV schema {lines[0]!r}")
    header = lines[1].split(",")
    return [dict(zip(header, line.split(","))) for line in lines[2:] if line]


# -- studies -----------------------------------------------------------

def _shared_setup(cfg: StudyConfig):
    """Fine system, coefficient, and reference shared by all grid points."""
    mesh0 = build_hierarchy(cfg.H_exps[0], cfg.eps_exp, cfg.h_exp)
    coefficient = make_coefficient(cfg, mesh0)
    fs = assemble(mesh0, coefficient)
    return mesh0, coefficient, fs


def _spatial_reference(cfg, mesh0, coefficient, fs, tau_min):
    """Fine-space reference state at the final time.

    With a fixed time step across all coarse meshes the reference uses the
    same step and theta, so the (identical) temporal error cancels and the
    comparison isolates the spatial error.  With tau proportional to H the
    steps differ per mesh; then the reference keeps the same theta but ties
    its step to the fine mesh size, making its temporal error negligible.
    """
    problem = get_problem(cfg.problem)
    if cfg.tau_rule == "fixed":
        tau_ref = tau_min
    else:
        tau_ref = min(cfg.tau_factor * mesh0.h, tau_min)
    theta = cfg.theta
    n_ref = n_steps_for(tau_ref, cfg.t_end)
    traj = reference.reference_solve(mesh0, coefficient, problem, theta=theta,
                                     tau=tau_ref, n_steps=n_ref, fs=fs)
    return traj.samples[n_ref]


def run_convergence_study(cfg: StudyConfig, out_dir, cache_dir=None, threads: int = 1):
    """Error vs coarse mesh size for each polynomial degree."""
    problem = get_problem(cfg.problem)
    mesh0, coefficient, fs = _shared_setup(cfg)
    taus = {He: tau_for(cfg, build_hierarchy(He, cfg.eps_exp, cfg.h_exp))
            for He in cfg.H_exps}
    ref_final = _spatial_reference(cfg, mesh0, coefficient, fs, min(taus.values()))

    def point(p, He):
        mesh = build_hierarchy(He, cfg.eps_exp, cfg.h_exp)
        ell = ell_for(cfg, p, He, mesh)
        mmap = build_moment_map(mesh, p)
        t0 = time.perf_counter()
        basis = obtain_basis(mesh, coefficient, p, ell, fs, mmap, cache_dir)
        t1 = time.perf_counter()
        tau = taus[He]
        n_steps = n_steps_for(tau, cfg.t_end)
        res = reference.solve_multiscale(basis, mmap, fs, problem, cfg.theta,
                                         tau, n_steps, cfg.initial_step)
        t2 = time.perf_counter()
        err = reference.lifted_error(basis, fs, res.final, ref_final)
        return {"coefficient": coefficient_label(cfg), "p": p, "ell": ell,
                "H": mesh.H, "dofs": basis.n_columns, "tau": tau,
                "a_err_rel": err.a_rel, "l2_err_rel": err.l2_rel,
                "build_seconds": round(t1 - t0, 3),
                "solve_seconds": round(t2 - t1, 3)}

    grid = [(p, He) for p in cfg.p_list for He in cfg.H_exps]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda args: point(*args), grid))
    else:
        results = [point(*args) for args in grid]

    rows = []
    by_p = {p: [r for r in results if r["p"] == p] for p in cfg.p_list}
    for p in cfg.p_list:
        prs = by_p[p]
        for i, row in enumerate(prs):
            row["eoc_a"] = row["eoc_l2"] = ""
            if i > 0:
                prev = prs[i - 1]
                denom = np.log(prev["H"] / row["H"])
                row["eoc_a"] = float(np.log(prev["a_err_rel"] / row["a_err_rel"]) / denom)
                row["eoc_l2"] = float(np.log(prev["l2_err_rel"] / row["l2_err_rel"]) / denom)
            rows.append(row)

    fields = ["coefficient", "p", "ell", "H", "dofs", "tau", "a_err_rel",
              "l2_err_rel", "eoc_a", "eoc_l2", "build_seconds", "solve_seconds"]
    out = Path(out_dir) / f"{cfg.prefix}_convergence.csv"
    write_csv(out, fields, rows)
    return rows, out


def run_localization_study(cfg: StudyConfig, out_dir, cache_dir=None, threads: int = 1):
    """Solution error vs localization radius: under-resolved ell plateaus."""
    problem = get_problem(cfg.problem)
    mesh0, coefficient, fs = _shared_setup(cfg)
    if not cfg.ell_list:
        raise ValueError("localization study requires ell_list")
    taus = {He: tau_for(cfg, build_hierarchy(He, cfg.eps_exp, cfg.h_exp))
            for He in cfg.H_exps}
    ref_final = _spatial_reference(cfg, mesh0, coefficient, fs, min(taus.values()))

    rows = []
    for p in cfg.p_list:
        for He in cfg.H_exps:
            mesh = build_hierarchy(He, cfg.eps_exp, cfg.h_exp)
            mmap = build_moment_map(mesh, p)
            for ell in cfg.ell_list:
                ell_c = min(ell, msbasis.saturating_ell(mesh))
                basis = obtain_basis(mesh, coefficient, p, ell_c, fs, mmap, cache_dir)
                tau = taus[He]
                res = reference.solve_multiscale(basis, mmap, fs, problem, cfg.theta,
                                                 tau, n_steps_for(tau, cfg.t_end),
                                                 cfg.initial_step)
                err = reference.lifted_error(basis, fs, res.final, ref_final)
                rows.append({"H": mesh.H, "p": p, "ell": ell_c,
                             "a_err_rel": err.a_rel})
    out = Path(out_dir) / f"{cfg.prefix}_localization.csv"
    write_csv(out, ["H", "p", "ell", "a_err_rel"], rows)
    return rows, out


def run_temporal_study(cfg: StudyConfig, out_dir, cache_dir=None, threads: int = 1):
    """Error vs time step at fixed spatial setup, one basis reused for all tau."""
    problem = get_problem(cfg.problem)
    mesh = build_hierarchy(cfg.H_exps[0], cfg.eps_exp, cfg.h_exp)
    coefficient = make_coefficient(cfg, mesh)
    fs = assemble(mesh, coefficient)
    p = cfg.p_list[0]
    ell = msbasis.saturating_ell(mesh) if cfg.ell_rule == "auto" else cfg.ell_list[0]
    mmap = build_moment_map(mesh, p)
    basis = obtain_basis(mesh, coefficient, p, ell, fs, mmap, cache_dir)

    # choose a dyadic base step every theta in the study can run stably
    theta_worst = min(cfg.thetas)
    rep = wave.cfl_check(basis.mass, basis.stiffness, theta_worst, tau=1.0)
    if np.isfinite(rep.tau_bound):
        tau0 = 2.0 ** math.floor(math.log2(0.8 * rep.tau_bound))
    else:
        tau0 = cfg.tau if cfg.tau is not None else cfg.t_end / 16.0
    taus = [tau0 / 2 ** k for k in range(cfg.n_tau_refinements)]

    tau_ref = taus[-1] / 16.0
    n_ref = n_steps_for(tau_ref, cfg.t_end)
    ref = reference.solve_multiscale(basis, mmap, fs, problem, 1.0 / 12.0,
                                     tau_ref, n_ref, "fourth_order").final
    ref_a = float(np.sqrt(max(ref @ (basis.stiffness @ ref), 1e-300)))

    rows = []
    for theta in cfg.thetas:
        errs = []
        for tau in taus:
            res = reference.solve_multiscale(basis, mmap, fs, problem, theta,
                                             tau, n_steps_for(tau, cfg.t_end),
                                             cfg.initial_step)
            e = res.final - ref
            errs.append(float(np.sqrt(max(e @ (basis.stiffness @ e), 0.0))) / ref_a)
        for i, tau in enumerate(taus):
            row = {"theta": theta, "tau": tau, "err_rel": errs[i], "eoc": ""}
            if i > 0:
                row["eoc"] = float(np.log(errs[i - 1] / errs[i]) / np.log(taus[i - 1] / taus[i]))
            rows.append(row)
    out = Path(out_dir) / f"{cfg.prefix}_temporal.csv"
    write_csv(out, ["theta", "tau", "err_rel", "eoc"], rows)
    return rows, out


def bilinear_prolongation(mesh: MeshHierarchy) -> sp.csr_matrix:
    """Interpolation from coarse-vertex values to fine-vertex values."""
    nc = mesh.coarse_cells_per_dim
    r = mesh.fine_per_coarse
    nf = mesh.fine_cells_per_dim
    idx = np.arange(nf + 1)
    c0 = np.minimum(idx // r, nc - 1)
    t = idx / r - c0

    rows, cols, data = [], [], []
    for iy in range(nf + 1):
        for dy, wy in ((0, 1 - t[iy]), (1, t[iy])):
            if wy == 0:
                continue
            for dx in (0, 1):
                wx = np.where(dx == 0, 1 - t, t)
                mask = wx != 0
                ix = idx[mask]
                rows.append(iy * (nf + 1) + ix)
                cols.append((c0[iy] + dy) * (nc + 1) + c0[ix] + dx)
                data.append(np.full(len(ix), wy) * wx[mask])
    P = sp.coo_matrix((np.concatenate(data),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(mesh.n_fine_vertices, (nc + 1) ** 2))
    return P.tocsr()


def run_fem_comparison(cfg: StudyConfig, out_dir, cache_dir=None, threads: int = 1):
    """Standard coarse Q1 FEM vs the multiscale method at equal H."""
    problem = get_problem(cfg.problem)
    mesh0, coefficient, fs = _shared_setup(cfg)
    taus = {He: tau_for(cfg, build_hierarchy(He, cfg.eps_exp, cfg.h_exp))
            for He in cfg.H_exps}
    ref_final = _spatial_reference(cfg, mesh0, coefficient, fs, min(taus.values()))
    pos = mesh0.fine_vertex_positions()
    g_load = reference.fine_source_load(fs, problem)

    rows = []
    for He in cfg.H_exps:
        mesh = build_hierarchy(He, cfg.eps_exp, cfg.h_exp)
        nc = mesh.coarse_cells_per_dim
        P = bilinear_prolongation(mesh)
        cx, cy = np.meshgrid(np.arange(1, nc), np.arange(1, nc))
        interior_c = (cy.ravel() * (nc + 1) + cx.ravel())
        Pi = P[:, interior_c].tocsr()
        S_H = (Pi.T @ fs.stiffness_full @ Pi).tocsr()
        M_H = (Pi.T @ fs.mass_full @ Pi).tocsr()

        cpos = np.column_stack([(cx.ravel()) / nc, (cy.ravel()) / nc])
        u0 = np.asarray(problem.u0(cpos), dtype=float)
        v0 = np.asarray(problem.v0(cpos), dtype=float)
        load = dload0 = d2load0 = None
        if g_load is not None:
            gl = Pi.T @ g_load
            load = lambda t, gl=gl: gl * problem.source_time(t)
            dload0 = gl * problem.source_time_d1(0.0)
            d2load0 = gl * problem.source_time_d2(0.0)
        tau = taus[He]
        n_steps = n_steps_for(tau, cfg.t_end)
        wcfg = wave.ThetaSchemeConfig(theta=cfg.theta, tau=tau, n_steps=n_steps,
                                      initial_step=cfg.initial_step)
        fem = wave.run(M_H, S_H, wcfg, u0, v0, load=load, dload0=dload0,
                       d2load0=d2load0)
        fem_err = reference.error_norms(fs, Pi @ fem.final, ref_final)

        p = cfg.p_list[0]
        ell = ell_for(cfg, p, He, mesh)
        mmap = build_moment_map(mesh, p)
        basis = obtain_basis(mesh, coefficient, p, ell, fs, mmap, cache_dir)
        res = reference.solve_multiscale(basis, mmap, fs, problem, cfg.theta,
                                         tau, n_steps, cfg.initial_step)
        lod_err = reference.lifted_error(basis, fs, res.final, ref_final)
        rows.append({"H": mesh.H, "fem_dofs": len(interior_c),
                     "lod_p": p, "lod_ell": ell, "lod_dofs": basis.n_columns,
                     "fem_a_err_rel": fem_err.a_rel, "lod_a_err_rel": lod_err.a_rel,
                     "fem_l2_err_rel": fem_err.l2_rel, "lod_l2_err_rel": lod_err.l2_rel})
    out = Path(out_dir) / f"{cfg.prefix}_fem_compare.csv"
    write_csv(out, ["H", "fem_dofs", "lod_p", "lod_ell", "lod_dofs",
                    "fem_a_err_rel", "lod_a_err_rel",
                    "fem_l2_err_rel", "lod_l2_err_rel"], rows)
    return rows, out


def run_energy_audit(cfg: StudyConfig, out_dir, cache_dir=None, threads: int = 1):
    """Per-step energy log plus the worst defect of the energy identity."""
    problem = get_problem(cfg.problem)
    mesh = build_hierarchy(cfg.H_exps[0], cfg.eps_exp, cfg.h_exp)
    coefficient = make_coefficient(cfg, mesh)
    fs = assemble(mesh, coefficient)
    p = cfg.p_list[0]
    ell = ell_for(cfg, p, cfg.H_exps[0], mesh)
    mmap = build_moment_map(mesh, p)
    basis = obtain_basis(mesh, coefficient, p, ell, fs, mmap, cache_dir)
    tau = tau_for(cfg, mesh)
    n_steps = n_steps_for(tau, cfg.t_end)
    res = reference.solve_multiscale(basis, mmap, fs, problem, cfg.theta,
                                     tau, n_steps, cfg.initial_step)
    rows = []
    scale = max(np.abs(res.energies).max(), 1e-300)
    for n in range(n_steps):
        row = {"n": n, "t": n * tau, "energy": float(res.energies[n]),
               "identity_defect_rel": ""}
        if n >= 1:
            defect = (res.energies[n] - res.energies[n - 1]) - res.work[n - 1]
            row["identity_defect_rel"] = float(abs(defect) / scale)
        rows.append(row)
    out = Path(out_dir) / f"{cfg.prefix}_energy.csv"
    write_csv(out, ["n", "t", "energy", "identity_defect_rel"], rows)
    return rows, out


STUDIES = {
    "convergence": run_convergence_study,
    "localization": run_localization_study,
    "temporal": run_temporal_study,
    "fem_compare": run_fem_comparison,
    "energy_audit": run_energy_audit,
}


def write_manifest(out_dir, cfg: StudyConfig, wall_seconds: float, extras=None) -> Path:
    import scipy

    from . import __version__
    lines = ["[manifest]",
             f"package_version={__version__}",
             f"numpy_version={np.__version__}",
             f"scipy_version={scipy.__version__}",
             f"wall_seconds={wall_seconds:.3f}",
             "", "[config-echo]"]
    lines += cfg.raw_text.splitlines()
    if extras:
        lines += ["", "[extras]"] + [f"{k}={v}" for k, v in extras.items()]
    path = Path(out_dir) / f"{cfg.prefix}_manifest.txt"
    path.write_text("\n".join(lines) + "\n")
    return path
