"""Budget-constrained sample sizes per level, and their integerization.

Two closed forms, both from Lagrange stationarity of the respective error
bounds under a linear cost constraint:

* variance-based (multilevel MC): minimise sum V_l / n_l subject to
  sum C_l n_l = T, solved by n_l = T sqrt(V_l / C_l) / sum sqrt(V C),
* norm-based (multilevel BQ): minimise sum r_l n_l^(-tau/d) subject to
  gamma sum C_l n_l = T, solved by
  n_l = D (r_l / C_l)^(d/(tau+d)) with
  D = T / (gamma sum C^(tau/(tau+d)) r^(d/(tau+d))),

where r_l are per-level increment magnitudes in the RKHS/Sobolev norm.

Real-valued solutions are integerized by flooring (never below one sample
per level) and then greedily granting the increment with the best
objective decrease per unit cost while the realized cost is still below
budget; the last grant may overshoot by at most one evaluation, so the
integer plan costs at most T + max_l C_l.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernels import Kernel, Matern, SquaredExponential, BrownianMotion

__all__ = [
    "AllocationInput",
    "AllocationPlan",
    "AllocationError",
    "mlmc_allocation",
    "mlbq_allocation",
    "integerize_allocation",
    "matern_sobolev_order",
    "kernel_sobolev_order",
]


class AllocationError(ValueError):
    """Invalid allocation inputs or an unaffordable budget."""


@dataclass(frozen=True)
class AllocationInput:
    """Per-level magnitudes and costs plus the budget and smoothness data.

    ``magnitudes`` are variances V_l for the MC-style allocation and
    increment norms for the BQ-style one.  ``tau``/``dim``/``overhead``
    are only consulted by :func:`mlbq_allocation` (the MC closed form does
    not involve them).
    """

    magnitudes: tuple[float, ...]
    costs: tuple[float, ...]
    budget: float
    tau: float | None = None
    dim: int = 1
    overhead: float = 1.0

    def __post_init__(self):
        mags = tuple(float(v) for v in self.magnitudes)
        costs = tuple(float(c) for c in self.costs)
        object.__setattr__(self, "magnitudes", mags)
        object.__setattr__(self, "costs", costs)
        if len(mags) == 0 or len(mags) != len(costs):
            raise AllocationError(
                f"magnitudes and costs must be equal-length and nonempty, got {len(mags)} and {len(costs)}"
            )
        if any(not (v > 0 and math.isfinite(v)) for v in mags + costs):
            raise AllocationError("magnitudes and costs must be strictly positive and finite")
        if not (self.budget > 0 and math.isfinite(self.budget)):
            raise AllocationError(f"budget must be positive, got {self.budget}")
        if self.dim < 1:
            raise AllocationError(f"dimension must be >= 1, got {self.dim}")
        if self.overhead < 1.0:
            raise AllocationError(f"overhead factor must be >= 1, got {self.overhead}")

    @property
    def levels(self) -> int:
        return len(self.magnitudes)


@dataclass(frozen=True)
class AllocationPlan:
    """Real-valued optimum, its integerization and the cost/objective ledger.

    ``realized_cost`` is sum C_l n_l of the integer plan.  It can exceed
    the budget by at most one evaluation at the costliest level (the
    minimum-one rule and the final greedy grant are each one step of
    slack).  ``objective`` is the minimised bound evaluated at the integer
    plan; ``objective_real`` at the real optimum.
    """

    real_counts: tuple[float, ...]
    counts: tuple[int, ...]
    realized_cost: float
    objective: float
    objective_real: float


def matern_sobolev_order(nu: float, dim: int) -> float:
    """Sobolev smoothness of the Matern RKHS: nu + dim / 2."""
    return nu + dim / 2.0


def kernel_sobolev_order(kernel: Kernel, dim: int | None = None) -> float:
    """Smoothness tau for the norm-based allocation, derived per kernel family.

    Matern factors give nu + d/2; the Brownian kernel's space is the
    order-1 Sobolev space on the line.  Squared-exponential kernels have
    no Sobolev-equivalent RKHS, so the allocation theory does not apply
    and tau must be supplied explicitly by the caller.
    """
    d = dim if dim is not None else kernel.dim
    fams = {type(f) for f in kernel.factors}
    if fams == {Matern}:
        nus = {f.nu for f in kernel.factors}
        if len(nus) > 1:
            raise AllocationError("mixed Matern smoothness across dimensions has no single tau")
        return matern_sobolev_order(next(iter(nus)), d)
    if fams == {BrownianMotion}:
        return 1.0
    if SquaredExponential in fams:
        raise AllocationError(
            "squared-exponential kernels have no Sobolev order; supply tau explicitly"
        )
    raise AllocationError(f"no Sobolev order known for kernel factors {fams}")


def _objective(magnitudes, counts, exponent) -> float:
    return float(sum(v * n ** (-exponent) for v, n in zip(magnitudes, counts)))


def integerize_allocation(real_counts, costs, budget, *, magnitudes, exponent, overhead=1.0):
    """Floor (minimum one) then greedily top up the best level per unit cost.

    A grant is the level maximising the objective decrease
    ``v_l (n^-e - (n+1)^-e)`` per unit cost; grants continue while the
    overhead-scaled realized cost is strictly below the budget, so the
    final grant may overshoot by one evaluation.  Deterministic: ties
    break toward the lowest level.
    """
    costs = np.asarray(costs, dtype=float)
    mags = np.asarray(magnitudes, dtype=float)
    if overhead * float(costs.sum()) > budget + overhead * float(costs.max()):
        raise AllocationError(
            f"budget {budget} cannot afford one sample at every level (cost {costs.sum()})"
        )
    counts = np.maximum(np.floor(np.asarray(real_counts, dtype=float)).astype(int), 1)
    cost = overhead * float(costs @ counts)
    while cost < budget:
        gains = mags * (counts ** (-exponent) - (counts + 1.0) ** (-exponent)) / costs
        pick = int(np.argmax(gains))
        counts[pick] += 1
        cost += overhead * costs[pick]
    return tuple(int(n) for n in counts)


def mlmc_allocation(inp: AllocationInput) -> AllocationPlan:
    """Variance-based optimal counts n_l = T sqrt(V_l/C_l) / sum sqrt(V C).

    ``tau``, ``dim`` and ``overhead`` on the input are ignored; the
    minimised objective is sum V_l / n_l.
    """
    v = np.asarray(inp.magnitudes)
    c = np.asarray(inp.costs)
    denom = float(np.sum(np.sqrt(v * c)))
    real = inp.budget * np.sqrt(v / c) / denom
    counts = integerize_allocation(real, c, inp.budget, magnitudes=v, exponent=1.0)
    return AllocationPlan(
        tuple(float(r) for r in real),
        counts,
        float(c @ np.asarray(counts)),
        _objective(v, counts, 1.0),
        _objective(v, real, 1.0),
    )


def mlbq_allocation(inp: AllocationInput) -> AllocationPlan:
    """Norm-based optimal counts under the smoothness-tau error bound.

    Requires ``tau > dim / 2``.  At the real solution the overhead-scaled
    cost equals the budget exactly and the stationarity ratio
    ``(tau/d) r_l n_l^(-tau/d-1) / (gamma C_l)`` is level-independent.
    """
    if inp.tau is None:
        raise AllocationError("norm-based allocation needs tau (see kernel_sobolev_order)")
    if not inp.tau > inp.dim / 2.0:
        raise AllocationError(f"tau must exceed d/2 = {inp.dim / 2}, got {inp.tau}")
    r = np.asarray(inp.magnitudes)
    c = np.asarray(inp.costs)
    e = inp.dim / (inp.tau + inp.dim)
    denom = inp.overhead * float(np.sum(c ** (1.0 - e) * r**e))
    real = inp.budget * (r / c) ** e / denom
    counts = integerize_allocation(
        real, c, inp.budget, magnitudes=r, exponent=inp.tau / inp.dim, overhead=inp.overhead
    )
    return AllocationPlan(
        tuple(float(x) for x in real),
        counts,
        float(c @ np.asarray(counts)),
        _objective(r, counts, inp.tau / inp.dim),
        _objective(r, real, inp.tau / inp.dim),
    )
