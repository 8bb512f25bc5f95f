"""Scalar diffusion fields bounded between alpha and beta.

Rough fields are random checkerboards, constant on each oscillation cell,
drawn from a splitmix64 stream so that runs are bit-reproducible across
platforms and languages.  The splitmix64 recurrence (Steele/Lea/Flood 2014):

    state  = (state + 0x9E3779B97F4A7C15) mod 2^64
    z      = state
    z      = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 mod 2^64
    z      = (z ^ (z >> 27)) * 0x94D049BB133111EB mod 2^64
    output = z ^ (z >> 31)

A uniform double in [0,1) is (output >> 11) * 2^-53.  One draw per
oscillation cell, in row-major cell order.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .mesh import MeshHierarchy

_MASK = (1 << 64) - 1


def splitmix64_uniform(seed: int, count: int) -> np.ndarray:
    """`count` uniform doubles in [0,1) from the splitmix64 stream of `seed`."""
    state = seed & _MASK
    out = np.empty(count)
    for i in range(count):
        state = (state + 0x9E3779B97F4A7C15) & _MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        z = z ^ (z >> 31)
        out[i] = (z >> 11) * 2.0 ** -53
    return out


@dataclass(frozen=True)
class CoefficientField:
    values: np.ndarray = field(repr=False)  # one scalar per fine cell, row-major
    alpha: float
    beta: float
    descriptor: dict

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("lower coefficient bound must be positive")
        v = self.values
        if v.min() < self.alpha - 1e-14 or v.max() > self.beta + 1e-14:
            raise ValueError("coefficient values violate the stated bounds")

    def descriptor_lines(self) -> list[str]:
        """key=value lines for the experiment config / run manifest."""
        return [f"{k}={self.descriptor[k]}" for k in sorted(self.descriptor)]

    def descriptor_hash(self) -> str:
        text = "\n".join(self.descriptor_lines())
        return hashlib.sha256(text.encode()).hexdigest()

    def write_binary(self, path) -> None:
        """Raw values, row-major, little-endian float64."""
        self.values.astype("<f8").tofile(path)


def checkerboard(mesh: MeshHierarchy, seed: int, lo: float, hi: float) -> CoefficientField:
    """Random checkerboard: i.i.d. uniform on [lo, hi] per oscillation cell."""
    if lo <= 0:
        raise ValueError("lower bound must be positive")
    if hi < lo:
        raise ValueError("upper bound must not be below the lower bound")
    u = splitmix64_uniform(seed, mesh.eps_cells_per_dim ** 2)
    eps_values = lo + (hi - lo) * u
    values = eps_values[mesh.eps_cell_of_fine_cell()]
    descriptor = {"kind": "checkerboard", "seed": seed, "lo": lo, "hi": hi,
                  "eps_cells_per_dim": mesh.eps_cells_per_dim,
                  "fine_cells_per_dim": mesh.fine_cells_per_dim}
    return CoefficientField(values=values, alpha=lo, beta=hi, descriptor=descriptor)


def analytic_smooth(mesh: MeshHierarchy) -> CoefficientField:
    """Smooth field 1 + sin(x1) sin(2 x2) / 2 sampled at fine-cell centers."""
    c = mesh.fine_cell_centers()
    values = 1.0 + 0.5 * np.sin(c[:, 0]) * np.sin(2.0 * c[:, 1])
    descriptor = {"kind": "analytic", "name": "smooth_sine",
                  "fine_cells_per_dim": mesh.fine_cells_per_dim}
    return CoefficientField(values=values, alpha=0.5, beta=1.5, descriptor=descriptor)


def constant(mesh: MeshHierarchy, value: float = 1.0) -> CoefficientField:
    if value <= 0:
        raise ValueError("coefficient must be positive")
    descriptor = {"kind": "constant", "value": value,
                  "fine_cells_per_dim": mesh.fine_cells_per_dim}
    return CoefficientField(values=np.full(mesh.n_fine_cells, value),
                            alpha=value, beta=value, descriptor=descriptor)
