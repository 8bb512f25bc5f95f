"""Built-in initial data and sources for the wave experiments.

All sources are separable, f(x, t) = g(x) q(t), so the spatial load vector
is assembled once and scaled per time step.  The time factors carry their
first two analytic derivatives for the fourth-order initial step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    u0: callable  # (N,2) points -> values
    v0: callable
    source_space: callable | None  # g(x); None means f = 0
    source_time: callable | None  # q(t)
    source_time_d1: callable | None
    source_time_d2: callable | None


def _zero(x):
    return np.zeros(len(np.atleast_2d(x)))


def _sin4(t):
    return np.sin(t) ** 4


def _sin4_d1(t):
    return 4.0 * np.sin(t) ** 3 * np.cos(t)


def _sin4_d2(t):
    s, c = np.sin(t), np.cos(t)
    return 12.0 * s ** 2 * c ** 2 - 4.0 * s ** 4


def _product_sine(x):
    x = np.atleast_2d(x)
    return np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])


def _product_sine4(x):
    x = np.atleast_2d(x)
    return np.sin(np.pi * x[:, 0]) ** 4 * np.sin(np.pi * x[:, 1]) ** 4


_CATALOG = {
    # Single eigenmode of the unit-coefficient Laplacian; with A=1 the exact
    # solution is cos(sqrt(2) pi t) sin(pi x1) sin(pi x2).
    "standing_mode": ProblemSpec(
        name="standing_mode", u0=_product_sine, v0=_zero,
        source_space=None, source_time=None,
        source_time_d1=None, source_time_d2=None),
    # Zero initial data, smoothly switched-on separable source.
    "driven_sine": ProblemSpec(
        name="driven_sine", u0=_zero, v0=_zero,
        source_space=_product_sine, source_time=_sin4,
        source_time_d1=_sin4_d1, source_time_d2=_sin4_d2),
    # Same switch-on but with a spatially sharper bump (higher powers).
    "driven_sine4": ProblemSpec(
        name="driven_sine4", u0=_zero, v0=_zero,
        source_space=_product_sine4, source_time=_sin4,
        source_time_d1=_sin4_d1, source_time_d2=_sin4_d2),
}


def get_problem(name: str) -> ProblemSpec:
    try:
        return _CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; available: {sorted(_CATALOG)}") from None


def problem_names() -> list[str]:
    return sorted(_CATALOG)
