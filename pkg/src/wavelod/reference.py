"""Fine Galerkin reference trajectories and error measurement.

Every convergence number in the experiment harness is a distance to a fine
Q1 Galerkin solution computed here with a much smaller time step, lifted
comparisons happening in the fine space through the basis columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coefficient import CoefficientField
from .fem import FineSystem, assemble
from .mesh import MeshHierarchy
from .msbasis import MultiscaleBasis
from .problems import ProblemSpec
from . import wave
from .coarse import MomentMap


def fine_source_load(fs: FineSystem, problem: ProblemSpec) -> np.ndarray | None:
    """Spatial load vector (g, phi_i) over all fine vertices, or None for f=0."""
    if problem.source_space is None:
        return None
    g = problem.source_space(fs.mesh.fine_vertex_positions())
    return fs.mass_full @ g


@dataclass(frozen=True)
class ReferenceTrajectory:
    tau: float
    theta: float
    samples: dict = field(repr=False)  # step index -> full fine vertex vector


def reference_solve(mesh: MeshHierarchy, coefficient: CoefficientField,
                    problem: ProblemSpec, theta: float, tau: float,
                    n_steps: int, sample_steps=None,
                    fs: FineSystem | None = None) -> ReferenceTrajectory:
    """Theta-scheme on the fine interior system, sampled at selected steps."""
    if fs is None:
        fs = assemble(mesh, coefficient)
    if sample_steps is None:
        sample_steps = (n_steps,)
    pos = mesh.fine_vertex_positions()
    interior = fs.interior
    u0 = np.asarray(problem.u0(pos), dtype=float)[interior]
    v0 = np.asarray(problem.v0(pos), dtype=float)[interior]

    g_load = fine_source_load(fs, problem)
    load = dload0 = d2load0 = None
    if g_load is not None:
        gi = g_load[interior]
        load = lambda t: gi * problem.source_time(t)
        dload0 = gi * problem.source_time_d1(0.0)
        d2load0 = gi * problem.source_time_d2(0.0)

    cfg = wave.ThetaSchemeConfig(theta=theta, tau=tau, n_steps=n_steps)
    res = wave.run(fs.mass, fs.stiffness, cfg, u0, v0, load=load,
                   dload0=dload0, d2load0=d2load0, sample_steps=sample_steps)
    samples = {}
    for step, state in res.samples.items():
        full = np.zeros(mesh.n_fine_vertices)
        full[interior] = state
        samples[step] = full
    return ReferenceTrajectory(tau=tau, theta=theta, samples=samples)


def coarse_initial_data(mmap: MomentMap, problem: ProblemSpec):
    """Coarse coefficient vectors whose projection matches the initial data."""
    pos = mmap.mesh.fine_vertex_positions()
    u0 = mmap.matrix @ np.asarray(problem.u0(pos), dtype=float)
    v0 = mmap.matrix @ np.asarray(problem.v0(pos), dtype=float)
    return u0, v0


def solve_multiscale(basis: MultiscaleBasis, mmap: MomentMap, fs: FineSystem,
                     problem: ProblemSpec, theta: float, tau: float,
                     n_steps: int, initial_step: str = "fourth_order",
                     sample_steps=None, guard: bool = True) -> wave.WaveResult:
    """Integrate the wave problem in the corrected coarse space."""
    if sample_steps is None:
        sample_steps = (n_steps,)
    u0, v0 = coarse_initial_data(mmap, problem)
    g_load = fine_source_load(fs, problem)
    load = dload0 = d2load0 = None
    if g_load is not None:
        gc = basis.B.T @ g_load
        load = lambda t: gc * problem.source_time(t)
        dload0 = gc * problem.source_time_d1(0.0)
        d2load0 = gc * problem.source_time_d2(0.0)
    cfg = wave.ThetaSchemeConfig(theta=theta, tau=tau, n_steps=n_steps,
                                 initial_step=initial_step)
    return wave.run(basis.mass, basis.stiffness, cfg, u0, v0, load=load,
                    dload0=dload0, d2load0=d2load0,
                    sample_steps=sample_steps, guard=guard)


@dataclass(frozen=True)
class ErrorNorms:
    a_abs: float
    l2_abs: float
    a_rel: float
    l2_rel: float
    reference_degenerate: bool  # reference norm below guard: rel fields are abs


def error_norms(fs: FineSystem, fine_state: np.ndarray,
                reference_state: np.ndarray) -> ErrorNorms:
    """Energy- and L2-norm distances of a fine vertex vector to the reference."""
    e = fine_state - reference_state
    a_abs = float(np.sqrt(max(e @ (fs.stiffness_full @ e), 0.0)))
    l2_abs = float(np.sqrt(max(e @ (fs.mass_full @ e), 0.0)))
    r = reference_state
    a_ref = float(np.sqrt(max(r @ (fs.stiffness_full @ r), 0.0)))
    l2_ref = float(np.sqrt(max(r @ (fs.mass_full @ r), 0.0)))
    degenerate = a_ref < 1e-14 or l2_ref < 1e-14
    if degenerate:
        return ErrorNorms(a_abs, l2_abs, a_abs, l2_abs, True)
    return ErrorNorms(a_abs, l2_abs, a_abs / a_ref, l2_abs / l2_ref, False)


def lifted_error(basis: MultiscaleBasis, fs: FineSystem, coarse_state: np.ndarray,
                 reference_state: np.ndarray) -> ErrorNorms:
    return error_norms(fs, basis.lift(coarse_state), reference_state)


def eoc(errors, steps) -> list[float]:
    """Experimental orders of convergence between consecutive grid points."""
    errors = [float(e) for e in errors]
    steps = [float(s) for s in steps]
    if len(errors) != len(steps) or len(errors) < 2:
        raise ValueError("need matching lists with at least two entries")
    if any(e <= 0 for e in errors) or any(s <= 0 for s in steps):
        raise ValueError("errors and steps must be positive")
    return [np.log(errors[i] / errors[i + 1]) / np.log(steps[i] / steps[i + 1])
            for i in range(len(errors) - 1)]
