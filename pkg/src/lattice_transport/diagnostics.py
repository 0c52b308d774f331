"""Conserved-quantity ledger, steady-state prediction, and decay-rate fitting.

All sums are dx-weighted, so on the unit circle they coincide with integrals
and the cell count drops out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kinetics import ModelParams
from .solver import State, g_mobility


class DegenerateFitError(ValueError):
    """The error samples span less than a decade; a rate fit is meaningless."""


@dataclass(frozen=True)
class DiagnosticsRecord:
    """Per-state scalar diagnostics.

    ``variance`` is the coupled quantity
    sum (W - Wbar)^2 dx + U * prev_W_mean * sum (n - nbar)^2 dx, whose
    n-weight is the previous step's W-mean.  ``dist_to_steady`` is the
    dx-weighted l2 distance of n to its mean, which by mass conservation
    equals the distance to the predicted constant steady state.
    """

    t: float
    mass: float
    energy_total: float
    variance: float
    n_min: float
    n_max: float
    W_min: float
    W_max: float
    dist_to_steady: float


@dataclass(frozen=True)
class SteadyPrediction:
    """Predicted large-time state from the conserved quantities alone.

    kind is ``constant`` when the conserved total energy admits a nonnegative
    constant W, otherwise ``nonconstant`` (and W_inf is clamped to 0).
    """

    kind: str
    n_inf: float
    W_inf: float


def record(state: State, params: ModelParams, prev_W_mean: float) -> DiagnosticsRecord:
    """Compute all scalar diagnostics of a state; pure, deterministic."""
    dx = state.grid.dx
    n, W = state.n, state.W
    n_mean = float(n.mean())
    W_mean = float(W.mean())
    variance = float(((W - W_mean) ** 2).sum() * dx) + params.U * prev_W_mean * float(
        ((n - n_mean) ** 2).sum() * dx
    )
    return DiagnosticsRecord(
        t=state.t,
        mass=float(n.sum() * dx),
        energy_total=float(state.w_tot(params).sum() * dx),
        variance=variance,
        n_min=float(n.min()),
        n_max=float(n.max()),
        W_min=float(W.min()),
        W_max=float(W.max()),
        dist_to_steady=math.sqrt(float(((n - n_mean) ** 2).sum() * dx)),
    )


def predict_steady(n0: np.ndarray, W0: np.ndarray, params: ModelParams) -> SteadyPrediction:
    """Steady state implied by mass and total-energy conservation.

    n_inf is the mean of n^0.  The candidate constant energy is
    mean(W^0 - (U/2)(n^0)^2) + (U/2) n_inf^2; if it is negative no constant
    steady state is admissible (W must stay nonnegative), so the prediction
    flips to ``nonconstant`` with W_inf = 0.
    """
    n0 = np.asarray(n0, dtype=float)
    W0 = np.asarray(W0, dtype=float)
    if n0.shape != W0.shape:
        raise ValueError("n0 and W0 must live on the same grid")
    n_inf = float(n0.mean())
    raw = float((W0 - 0.5 * params.U * n0**2).mean()) + 0.5 * params.U * n_inf**2
    if raw >= 0:
        return SteadyPrediction(kind="constant", n_inf=n_inf, W_inf=raw)
    return SteadyPrediction(kind="nonconstant", n_inf=n_inf, W_inf=0.0)


def check_positivity_condition(
    state_km1: State,
    state_km2_W_mean: float,
    params: ModelParams,
    dt: float,
) -> tuple[bool, float]:
    """Sufficient condition for strict positivity of W at the next step (d = 1).

    Evaluates

        (G/dt) ||W - Wbar||_2^2 + U (G Wbar'' / dt + 1/2) ||n - nbar||_2^2 < Wbar

    where the norms are over the previous state, Wbar'' is the W-mean two
    steps back, and G = max g(s) over [delta, max n].  Returns (holds, margin)
    with margin = Wbar - left-hand side.  The condition is sufficient, not
    necessary: a failure does not imply loss of positivity.
    """
    if params.d != 1:
        raise ValueError("positivity condition applies to d = 1 only")
    dx = state_km1.grid.dx
    n, W = state_km1.n, state_km1.W
    nmax = float(n.max())
    if params.eta > 0:
        s_peak = min(max(0.5 / params.eta, params.delta), nmax)
    else:
        s_peak = nmax  # g is increasing for eta = 0
    G = g_mobility(s_peak, params)
    w_var = float(((W - W.mean()) ** 2).sum() * dx)
    n_var = float(((n - n.mean()) ** 2).sum() * dx)
    lhs = (G / dt) * w_var + params.U * (G * state_km2_W_mean / dt + 0.5) * n_var
    margin = float(W.mean()) - lhs
    return margin > 0, margin


def fit_decay(times, errors) -> tuple[float, float]:
    """Least-squares exponential rate: slope of log(error) against time.

    Returns (rate, r_squared) with rate = -slope.  Requires at least five
    positive samples spanning at least one decade; otherwise the fit is
    rejected as degenerate.
    """
    t = np.asarray(times, dtype=float)
    e = np.asarray(errors, dtype=float)
    if t.shape != e.shape or t.ndim != 1:
        raise ValueError("times and errors must be 1D sequences of equal length")
    if t.size < 5:
        raise ValueError(f"need at least 5 samples, got {t.size}")
    if not np.all(e > 0):
        raise ValueError("all errors must be positive")
    if float(e.max() / e.min()) < 10.0:
        raise DegenerateFitError(
            f"errors span a factor {float(e.max() / e.min()):.3g} < 10"
        )
    y = np.log(e)
    slope, intercept = np.polyfit(t, y, 1)
    fitted = slope * t + intercept
    ss_res = float(((y - fitted) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r_squared = 1.0 - ss_res / ss_tot
    return float(-slope), float(r_squared)
