"""Optimal deferral threshold selection.

Maximizes f(eta_o) = theta(eta_o) + lambda(eta_o) over the rate interval
(0, delta]. The exact lower endpoint is ill-posed (a zero rate means an
infinite mean threshold), so an explicit small ``epsilon_rate`` stands in
for it, and a run that would "return 0" reports the epsilon boundary
instead.

No closed-form derivative is used: the objective is evaluated on a
log-spaced grid to bracket interior maxima, each bracket is refined by
golden-section search in log space, and the refined candidates are compared
against both boundary values. This handles multiple stationary points and
needs nothing beyond objective evaluations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .analytics import ScenarioParams, theta_and_lambda
from .errors import OffloadLabError, ParameterError

__all__ = [
    "OptimizerConfig",
    "Optimum",
    "ProfileRow",
    "objective",
    "find_optimal",
    "objective_profile",
]

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class OptimizerConfig:
    """Search interval and refinement settings.

    ``delta`` is the upper bound on the threshold rate (1/seconds);
    equivalently, 1/delta is the smallest admissible mean threshold.
    ``epsilon_rate`` substitutes for the open eta_o = 0 boundary and
    defaults to delta * 1e-9. ``tolerance`` is relative on eta_o.
    """

    delta: float
    epsilon_rate: float | None = None
    grid_points: int = 64
    tolerance: float = 1e-10

    def __post_init__(self) -> None:
        if not (isinstance(self.delta, (int, float)) and self.delta > 0.0
                and math.isfinite(self.delta)):
            raise ParameterError(f"delta must be a positive finite rate, got {self.delta}")
        eps = self.resolved_epsilon
        if not (0.0 < eps < self.delta):
            raise ParameterError(
                f"epsilon_rate must lie strictly inside (0, delta), got {eps}"
            )
        if not isinstance(self.grid_points, int) or self.grid_points < 16:
            raise ParameterError(f"grid_points must be >= 16, got {self.grid_points}")
        if not (self.tolerance > 0.0):
            raise ParameterError(f"tolerance must be positive, got {self.tolerance}")

    @property
    def resolved_epsilon(self) -> float:
        return self.delta * 1e-9 if self.epsilon_rate is None else self.epsilon_rate


@dataclass(frozen=True)
class Optimum:
    """Maximizer of theta + lambda on [epsilon_rate, delta]."""

    eta_o_star: float
    expected_threshold_star: float  # 1 / eta_o_star, seconds
    objective_value: float
    theta_at: float
    lambda_at: float
    boundary_hit: str               # "none" | "lower" | "upper"


class ProfileRow(NamedTuple):
    eta_o: float
    theta: float
    lambda_: float
    objective: float


def objective(p: ScenarioParams, eta_o: float) -> float:
    """theta + lambda at the given threshold rate (p's own eta_o is ignored)."""
    if not (eta_o > 0.0 and math.isfinite(eta_o)):
        raise ParameterError(f"eta_o must be a positive finite rate, got {eta_o}")
    th, lam = theta_and_lambda(replace(p, eta_o=eta_o))
    return th + lam


def _grid(cfg: OptimizerConfig, n: int) -> np.ndarray:
    eps = cfg.resolved_epsilon
    g = np.logspace(math.log10(eps), math.log10(cfg.delta), n)
    # pin the endpoints exactly so boundary evaluations share the same inputs
    g[0] = eps
    g[-1] = cfg.delta
    return g


def _golden_max(f, lo: float, hi: float, tol: float) -> tuple[float, float]:
    """Golden-section maximization on [lo, hi]; tol is the final width."""
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def find_optimal(p: ScenarioParams, cfg: OptimizerConfig) -> Optimum:
    """Locate the threshold rate maximizing theta + lambda.

    Interior candidates are bracketed on a log grid and refined to
    ``cfg.tolerance`` relative; the best interior candidate is compared
    against both boundary values and the overall argmax is returned.
    """
    grid = _grid(cfg, cfg.grid_points)
    vals = np.array([objective(p, float(x)) for x in grid])
    bad = np.flatnonzero(~np.isfinite(vals))
    if bad.size:
        raise OffloadLabError(
            f"objective is not finite at eta_o = {grid[bad[0]]!r} "
            f"(value {vals[bad[0]]!r}); check the scenario parameters"
        )

    def f_log(x: float) -> float:
        return objective(p, math.exp(x))

    candidates: list[tuple[float, float]] = [
        (float(grid[0]), float(vals[0])),
        (float(grid[-1]), float(vals[-1])),
    ]
    log_tol = math.log1p(cfg.tolerance)
    for i in range(1, len(grid) - 1):
        if vals[i] >= vals[i - 1] and vals[i] >= vals[i + 1]:
            lo, hi = math.log(grid[i - 1]), math.log(grid[i + 1])
            x_log, fx = _golden_max(f_log, lo, hi, log_tol)
            candidates.append((math.exp(x_log), fx))

    eta_star, _ = max(candidates, key=lambda c: c[1])
    th, lam = theta_and_lambda(replace(p, eta_o=eta_star))
    if eta_star == cfg.resolved_epsilon:
        boundary = "lower"
    elif eta_star == cfg.delta:
        boundary = "upper"
    else:
        boundary = "none"
    return Optimum(
        eta_o_star=eta_star,
        expected_threshold_star=1.0 / eta_star,
        objective_value=th + lam,
        theta_at=th,
        lambda_at=lam,
        boundary_hit=boundary,
    )


def objective_profile(p: ScenarioParams, cfg: OptimizerConfig, n_points: int) -> list[ProfileRow]:
    """Log-spaced (eta_o, theta, lambda, objective) table over [epsilon, delta]."""
    if not isinstance(n_points, int) or n_points < 2:
        raise ParameterError(f"n_points must be >= 2, got {n_points}")
    rows = []
    for x in _grid(cfg, n_points):
        th, lam = theta_and_lambda(replace(p, eta_o=float(x)))
        rows.append(ProfileRow(eta_o=float(x), theta=th, lambda_=lam, objective=th + lam))
    return rows
