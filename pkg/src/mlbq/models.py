"""Multifidelity testbed families with exact or high-accuracy references.

Three hierarchies:

* ``poisson`` -- piecewise-linear finite element approximations of the
  two-point boundary value problem f'' = 1 on (0, 1) with zero boundary
  values (exact solution omega (omega - 1) / 2, integral -1/12).  Level l
  uses ``interior_nodes[l]`` equispaced interior nodes; the tridiagonal
  stiffness system is solved once per level and cached, after which
  evaluation is pure linear interpolation.  In one dimension the Galerkin
  solution is exact at the nodes, which doubles as a self-test.
* ``ode`` -- a two-point problem with random coefficient and forcing:
  (1 + w1 x) u'' + w1 u' = r w2^2 on (0, 1), u(0) = u(1) = 0, with
  w1 ~ Unif(0, 1) and w2 ~ N(0, 1).  Level l solves a backward-difference
  convection / central-difference diffusion scheme with spacing
  ``spacings[l]`` and reports the trapezoid integral of u.  Solves are
  batched through a vectorised Thomas algorithm.
* ``step`` -- midpoint step-function approximations of the identity on
  [0, 10] under Unif(0, 10) (integral exactly 5 for any breakpoint set);
  the assumption-violation testbed.

Costs are declared per-level constants (defaults are the published cost
vectors of the accompanying experiments) so budget arithmetic is
deterministic and machine independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import solve_banded

from .designs import halton_sequence
from .kernels import ProductMeasure, StandardNormal, Uniform

__all__ = [
    "PiecewiseLinearFunction",
    "brownian_rkhs_increment_norm",
    "MultifidelityModel",
    "PoissonHierarchy",
    "OdeHierarchy",
    "StepHierarchy",
    "ModelError",
    "poisson_exact_solution",
    "POISSON_EXACT_INTEGRAL",
    "make_model",
    "eval_level",
    "reference_integral",
    "MODEL_NAMES",
]


class ModelError(RuntimeError):
    """Level evaluation failed (bad level index, solver breakdown, ...)."""


# ---------------------------------------------------------------------------
# piecewise linear functions and the Brownian-motion RKHS norm
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PiecewiseLinearFunction:
    """Linear interpolant of (breakpoints, values) on [0, 1].

    Breakpoints must be strictly increasing and include both interval
    endpoints.  Evaluation outside the breakpoint span clamps to the end
    values (np.interp semantics), but all uses here stay inside.
    """

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if bp.ndim != 1 or bp.shape != vals.shape or bp.size < 2:
            raise ValueError("need matching 1-d breakpoints/values with at least two knots")
        if np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    def __call__(self, x):
        return np.interp(x, self.breakpoints, self.values)

    def integral(self) -> float:
        """Exact integral over the breakpoint span (trapezoid is exact)."""
        return float(np.trapezoid(self.values, self.breakpoints))

    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.breakpoints)


def _merge_difference(g: PiecewiseLinearFunction, h: PiecewiseLinearFunction):
    """Breakpoints and values of g - h on the union of both knot sets."""
    knots = np.union1d(g.breakpoints, h.breakpoints)
    return knots, g(knots) - h(knots)


def brownian_rkhs_increment_norm(g: PiecewiseLinearFunction, h: PiecewiseLinearFunction | None = None) -> float:
    """Norm of g - h in the RKHS of the Brownian-motion kernel min(s, t).

    A piecewise-linear function anchored at zero is a finite combination
    of kernel translates, p = sum_j alpha_j min(., t_j) with alpha_j the
    drop in slope after knot t_j; the squared norm is then the double sum
    sum_ij alpha_i alpha_j min(t_i, t_j).  Both inputs must vanish at 0.
    Numerically identical to the integral of the squared slope of g - h.
    """
    if h is None:
        h = PiecewiseLinearFunction(g.breakpoints[[0, -1]], np.zeros(2))
    if g(0.0) != 0.0 or h(0.0) != 0.0:
        raise ValueError("Brownian-motion RKHS members must vanish at 0")
    knots, diff = _merge_difference(g, h)
    if knots[0] != 0.0:
        knots = np.concatenate([[0.0], knots])
        diff = np.concatenate([[0.0], diff])
    slopes = np.diff(diff) / np.diff(knots)
    # alpha_j pairs with the knot at the *right* end of segment j; the
    # slope after the final knot is zero by convention.
    alpha = slopes - np.concatenate([slopes[1:], [0.0]])
    t = knots[1:]
    kmin = np.minimum(t[:, None], t[None, :])
    return float(math.sqrt(max(alpha @ kmin @ alpha, 0.0)))


# ---------------------------------------------------------------------------
# tridiagonal helpers
# ---------------------------------------------------------------------------


def _solve_tridiagonal(lower, diag, upper, rhs):
    """Single tridiagonal solve via LAPACK's banded solver."""
    n = diag.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = upper
    ab[1, :] = diag
    ab[2, :-1] = lower
    return solve_banded((1, 1), ab, rhs)


def _thomas_batch(lower, diag, upper, rhs):
    """Thomas algorithm vectorised over a leading batch axis.

    All arrays have shape (batch, m) (off-diagonals padded to m with an
    unused final/first entry ignored).  The systems here are irreducibly
    diagonally dominant, so elimination without pivoting is stable; a zero
    pivot still raises.
    """
    batch, m = diag.shape
    c = np.empty((batch, m))
    d = np.empty((batch, m))
    piv = diag[:, 0]
    if np.any(piv == 0):
        raise ModelError("tridiagonal solve breakdown: zero pivot in first row")
    c[:, 0] = upper[:, 0] / piv
    d[:, 0] = rhs[:, 0] / piv
    for i in range(1, m):
        piv = diag[:, i] - lower[:, i] * c[:, i - 1]
        if np.any(piv == 0):
            raise ModelError(f"tridiagonal solve breakdown: zero pivot in row {i}")
        c[:, i] = upper[:, i] / piv
        d[:, i] = (rhs[:, i] - lower[:, i] * d[:, i - 1]) / piv
    x = np.empty((batch, m))
    x[:, -1] = d[:, -1]
    for i in range(m - 2, -1, -1):
        x[:, i] = d[:, i] - c[:, i] * x[:, i + 1]
    return x


# ---------------------------------------------------------------------------
# model base
# ---------------------------------------------------------------------------


class MultifidelityModel:
    """Shared interface: levels 0..L of increasing accuracy and cost."""

    name: str
    costs: tuple[float, ...]
    measure: ProductMeasure

    @property
    def levels(self) -> int:
        return len(self.costs)

    @property
    def dim(self) -> int:
        return self.measure.dim

    def _check_level(self, level: int):
        if not 0 <= level < self.levels:
            raise ModelError(f"{self.name}: level {level} outside 0..{self.levels - 1}")

    def evaluate(self, level: int, points) -> np.ndarray:
        raise NotImplementedError

    def eval_level(self, level: int, point) -> float:
        """Deterministic scalar evaluation of f_level at one point."""
        out = self.evaluate(level, np.atleast_2d(np.asarray(point, dtype=float)))
        return float(out[0])

    def increments(self, level: int, points) -> np.ndarray:
        """f_level - f_{level-1} at the given points (f_{-1} = 0)."""
        fine = self.evaluate(level, points)
        if level == 0:
            return fine
        return fine - self.evaluate(level - 1, points)

    def reference_integral(self) -> float:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# Poisson finite-element hierarchy
# ---------------------------------------------------------------------------


def poisson_exact_solution(x):
    """Exact solution of f'' = 1, f(0) = f(1) = 0."""
    x = np.asarray(x, dtype=float)
    return 0.5 * x * (x - 1.0)


POISSON_EXACT_INTEGRAL = -1.0 / 12.0


class PoissonHierarchy(MultifidelityModel):
    """Piecewise-linear FEM approximations of the 1-d Poisson problem.

    ``interior_nodes[l]`` equispaced interior nodes at level l.  The
    stiffness system uses the standard Galerkin weak form: the load vector
    integrates the (constant, = 1) forcing against each hat function.
    Coefficients are solved eagerly at construction; evaluation afterwards
    is pure and thread-safe.
    """

    name = "poisson"

    def __init__(self, interior_nodes=(4, 16, 64), costs=(3.6e-3, 8.5e-3, 42.4e-3)):
        if len(interior_nodes) != len(costs):
            raise ValueError("need one cost per level")
        if any(p < 1 for p in interior_nodes):
            raise ValueError("each level needs at least one interior node")
        if any(c <= 0 for c in costs):
            raise ValueError("costs must be positive")
        self.interior_nodes = tuple(int(p) for p in interior_nodes)
        self.costs = tuple(float(c) for c in costs)
        self.measure = ProductMeasure.uniform(0.0, 1.0)
        self._levels = [self._solve_level(p) for p in self.interior_nodes]

    @staticmethod
    def _solve_level(p: int) -> PiecewiseLinearFunction:
        delta = 1.0 / (p + 1)
        nodes = np.linspace(delta, 1.0 - delta, p)
        diag = np.full(p, 2.0 / delta)
        off = np.full(p - 1, -1.0 / delta)
        load = np.full(p, delta)  # integral of each hat against forcing 1
        coeff = _solve_tridiagonal(off, diag, off, -load)
        bp = np.concatenate([[0.0], nodes, [1.0]])
        vals = np.concatenate([[0.0], coeff, [0.0]])
        return PiecewiseLinearFunction(bp, vals)

    def level_function(self, level: int) -> PiecewiseLinearFunction:
        self._check_level(level)
        return self._levels[level]

    def evaluate(self, level: int, points) -> np.ndarray:
        self._check_level(level)
        pts = np.asarray(points, dtype=float).reshape(-1)
        return self._levels[level](pts)

    def level_integral(self, level: int) -> float:
        """Exact integral of the level-l interpolant."""
        self._check_level(level)
        return self._levels[level].integral()

    def reference_integral(self) -> float:
        """Exact integral of the top level (the estimators' target)."""
        return self.level_integral(self.levels - 1)

    def increment_norm(self, level: int) -> float:
        """Brownian-RKHS norm of f_l - f_{l-1} (f_{-1} = 0)."""
        self._check_level(level)
        if level == 0:
            return brownian_rkhs_increment_norm(self._levels[0])
        return brownian_rkhs_increment_norm(self._levels[level], self._levels[level - 1])


# ---------------------------------------------------------------------------
# random-coefficient ODE hierarchy
# ---------------------------------------------------------------------------


class OdeHierarchy(MultifidelityModel):
    """Finite-difference levels of the random-coefficient two-point problem.

    The level-l scheme discretises w1 u' with a backward difference and
    (1 + w1 x) u'' with a central difference on a grid of spacing
    ``spacings[l]``; the quantity of interest is the trapezoid integral of
    u over (0, 1).  The scheme matrix depends on the point only through
    w1 and the right-hand side only through ``forcing * w2^2``, so batches
    of points share one vectorised tridiagonal sweep per level.

    The reference integral evaluates a solver refined by
    ``reference_refine`` relative to the top level, averaged over a large
    randomised-shift Halton sample (seeded, hence deterministic).  The
    random shifts make the average unbiased even though the w2^2 factor is
    unbounded, and the spread across shifts gives an honest standard-error
    estimate, reported by ``reference_info()``.
    """

    name = "ode"

    def __init__(
        self,
        spacings=(1.0 / 8, 1.0 / 32, 1.0 / 128),
        forcing=50.0,
        costs=(1.0e-3, 2.6e-3, 21.8e-3),
        reference_points=65536,
        reference_refine=8,
        reference_shifts=8,
        reference_seed=20240808,
    ):
        if len(spacings) != len(costs):
            raise ValueError("need one cost per level")
        for h in spacings:
            if not 0 < h < 0.5 or abs(round(1.0 / h) - 1.0 / h) > 1e-9:
                raise ValueError(f"spacing {h} must be 1/m for an integer m >= 3")
        if any(c <= 0 for c in costs):
            raise ValueError("costs must be positive")
        self.spacings = tuple(float(h) for h in spacings)
        self.forcing = float(forcing)
        self.costs = tuple(float(c) for c in costs)
        self.measure = ProductMeasure((Uniform(0.0, 1.0), StandardNormal()))
        self.reference_points = int(reference_points)
        self.reference_refine = int(reference_refine)
        self.reference_shifts = int(reference_shifts)
        self.reference_seed = int(reference_seed)
        self._reference = None

    def _integral_factor(self, h: float, w1: np.ndarray) -> np.ndarray:
        """h * sum_i u_i for unit forcing, per coefficient value w1.

        Solutions scale linearly in the right-hand side, so the full
        evaluation is ``forcing * w2^2`` times this factor.
        """
        m = round(1.0 / h) - 1
        i = np.arange(1, m + 1, dtype=float)
        w1 = np.asarray(w1, dtype=float).reshape(-1, 1)
        diag = (1.0 - 2.0 * i) * w1 / h - 2.0 / h**2 * np.ones_like(w1)
        upper = np.zeros((w1.shape[0], m))
        lower = np.zeros((w1.shape[0], m))
        upper[:, :-1] = i[:-1] * w1 / h + 1.0 / h**2
        lower[:, 1:] = (i[1:] - 1.0) * w1 / h + 1.0 / h**2
        rhs = np.ones((w1.shape[0], m))
        u = _thomas_batch(lower, diag, upper, rhs)
        return h * u.sum(axis=1)

    def _evaluate_spacing(self, h: float, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(1, -1)
        if pts.shape[1] != 2:
            raise ModelError(f"ode points must be 2-d (w1, w2), got shape {pts.shape}")
        try:
            factor = self._integral_factor(h, pts[:, 0])
        except ModelError as exc:
            raise ModelError(f"ode spacing {h}: {exc} (w1 range [{pts[:, 0].min()}, {pts[:, 0].max()}])") from exc
        return self.forcing * pts[:, 1] ** 2 * factor

    def evaluate(self, level: int, points) -> np.ndarray:
        self._check_level(level)
        return self._evaluate_spacing(self.spacings[level], points)

    def reference_info(self) -> tuple[float, float]:
        """(reference integral, error estimate); computed once and cached.

        Cached across instances too: the value is a pure function of the
        hierarchy parameters, and experiment workers re-create models.
        """
        if self._reference is None:
            self._reference = _ode_reference(
                self.spacings,
                self.forcing,
                self.reference_points,
                self.reference_refine,
                self.reference_shifts,
                self.reference_seed,
            )
        return self._reference

    def reference_integral(self) -> float:
        return self.reference_info()[0]


@lru_cache(maxsize=16)
def _ode_reference(spacings, forcing, n_points, refine, shifts, seed):
    from scipy.special import ndtri

    model = OdeHierarchy(spacings, forcing, tuple(1.0 for _ in spacings))
    h_ref = spacings[-1] / refine
    per_shift = max(n_points // shifts, 1)
    base = halton_sequence(per_shift, 2)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    estimates = []
    for _ in range(shifts):
        u = np.mod(base + rng.random(2), 1.0)
        u = np.clip(u, 1e-15, 1.0 - 1e-15)
        pts = np.column_stack([u[:, 0], ndtri(u[:, 1])])
        estimates.append(float(model._evaluate_spacing(h_ref, pts).mean()))
    estimates = np.asarray(estimates)
    return float(estimates.mean()), float(estimates.std(ddof=1) / math.sqrt(shifts))


# ---------------------------------------------------------------------------
# step-function hierarchy
# ---------------------------------------------------------------------------


class StepHierarchy(MultifidelityModel):
    """Midpoint step approximations of the identity on [0, high].

    Level l uses ``breakpoint_counts[l]`` equispaced breakpoints from 0 to
    ``high``; the value on each cell is the cell midpoint (the right
    endpoint maps into the last cell).  Every level integrates to high/2
    exactly because the midpoint cell sums telescope.
    """

    name = "step"

    def __init__(self, breakpoint_counts=(3, 5, 9), high=10.0, costs=(0.5e-3, 1.0e-3, 2.0e-3)):
        if len(breakpoint_counts) != len(costs):
            raise ValueError("need one cost per level")
        if any(p < 2 for p in breakpoint_counts):
            raise ValueError("each level needs at least two breakpoints")
        if any(c <= 0 for c in costs):
            raise ValueError("costs must be positive")
        self.breakpoint_counts = tuple(int(p) for p in breakpoint_counts)
        self.high = float(high)
        self.costs = tuple(float(c) for c in costs)
        self.measure = ProductMeasure.uniform(0.0, self.high)
        self._breaks = [np.linspace(0.0, self.high, p) for p in self.breakpoint_counts]

    def evaluate(self, level: int, points) -> np.ndarray:
        self._check_level(level)
        pts = np.asarray(points, dtype=float).reshape(-1)
        breaks = self._breaks[level]
        cell = np.clip(np.searchsorted(breaks, pts, side="right") - 1, 0, breaks.size - 2)
        return 0.5 * (breaks[cell] + breaks[cell + 1])

    def level_integral(self, level: int) -> float:
        self._check_level(level)
        breaks = self._breaks[level]
        mids = 0.5 * (breaks[:-1] + breaks[1:])
        return float(np.sum(np.diff(breaks) * mids) / self.high)

    def reference_integral(self) -> float:
        return self.level_integral(self.levels - 1)


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

MODEL_NAMES = ("poisson", "ode", "step")

_FACTORIES = {
    "poisson": PoissonHierarchy,
    "ode": OdeHierarchy,
    "step": StepHierarchy,
}


def make_model(name: str, **params) -> MultifidelityModel:
    """Instantiate a registered testbed model by name."""
    try:
        factory = _FACTORIES[name.lower()]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {MODEL_NAMES}") from None
    return factory(**params)


def eval_level(model: MultifidelityModel, level: int, point) -> float:
    """Module-level convenience wrapper around ``model.eval_level``."""
    return model.eval_level(level, point)


def reference_integral(model: MultifidelityModel) -> float:
    """Module-level convenience wrapper around ``model.reference_integral``."""
    return model.reference_integral()
