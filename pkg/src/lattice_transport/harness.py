"""Grid-refinement convergence studies against nested reference solutions.

Both studies compare coarse runs to a finer reference computed with the same
scheme, so the error component shared by coarse and reference cancels and the
measured order isolates the axis under refinement.  The reference grid must
nest the coarse ones: cell averaging restricts in space (conservative, so the
restriction preserves mass exactly) and exact index alignment matches times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .kinetics import ModelParams
from .solver import InitialCondition, PeriodicGrid1D, SolverConfig, State, run_simulation

_DEGENERATE_FLOOR = 1e-14


@dataclass(frozen=True)
class ConvergenceReport:
    """Result of one refinement study.

    observed_orders holds log2 error ratios between successive halvings only;
    fitted_order is the least-squares slope in the log-log plane.  degenerate
    marks studies whose errors sit at the roundoff floor (no order defined).
    """

    axis: str
    step_sizes: tuple[float, ...]
    errors: tuple[float, ...]
    observed_orders: tuple[float, ...]
    fitted_order: float
    degenerate: bool = False


def restrict_to_coarse(fine: np.ndarray, coarse_N: int) -> np.ndarray:
    """Cell-average a fine-grid field onto a coarse grid that divides it."""
    fine = np.asarray(fine, dtype=float)
    if fine.shape[0] % coarse_N != 0:
        raise ValueError(f"fine grid {fine.shape[0]} is not a multiple of {coarse_N}")
    return fine.reshape(coarse_N, fine.shape[0] // coarse_N).mean(axis=1)


def _field(state: State, variable: str) -> np.ndarray:
    if variable == "n":
        return state.n
    if variable == "W":
        return state.W
    raise ValueError(f"variable must be 'n' or 'W', got {variable!r}")


def _finalize(axis, step_sizes, errors) -> ConvergenceReport:
    errors = [float(e) for e in errors]
    if any(e < _DEGENERATE_FLOOR for e in errors):
        return ConvergenceReport(
            axis=axis,
            step_sizes=tuple(step_sizes),
            errors=tuple(errors),
            observed_orders=(),
            fitted_order=math.nan,
            degenerate=True,
        )
    orders = []
    for j in range(len(step_sizes) - 1):
        ratio = step_sizes[j] / step_sizes[j + 1]
        if abs(ratio - 2.0) < 1e-12:
            orders.append(math.log2(errors[j] / errors[j + 1]))
    slope = float(np.polyfit(np.log(step_sizes), np.log(errors), 1)[0])
    return ConvergenceReport(
        axis=axis,
        step_sizes=tuple(step_sizes),
        errors=tuple(errors),
        observed_orders=tuple(orders),
        fitted_order=slope,
    )


def spatial_study(
    base_config: SolverConfig,
    params: ModelParams,
    initial: InitialCondition,
    grids: list[int],
    ref_N: int,
    variable: str = "n",
) -> ConvergenceReport:
    """Refine in space at fixed dt; error is the final-time l2 distance to the
    cell-averaged reference solution computed on ref_N cells.
    """
    if sorted(grids) != list(grids) or len(set(grids)) != len(grids):
        raise ValueError("grids must be strictly increasing")
    for N in grids:
        if N >= ref_N:
            raise ValueError(f"reference must be strictly finer than N = {N}")
        if ref_N % N != 0:
            raise ValueError(f"grid {N} does not divide the reference {ref_N}")

    def final_state(N: int) -> State:
        grid = PeriodicGrid1D(N)
        return run_simulation(initial.build(grid), params, base_config)[-1]

    ref = _field(final_state(ref_N), variable)
    errors = []
    for N in grids:
        u = _field(final_state(N), variable)
        diff = u - restrict_to_coarse(ref, N)
        errors.append(math.sqrt(float((diff**2).sum()) / N))
    return _finalize("space", [1.0 / N for N in grids], errors)


def temporal_study(
    base_config: SolverConfig,
    params: ModelParams,
    initial: InitialCondition,
    dts: list[float],
    ref_dt: float,
    N: int = 100,
    variable: str = "n",
) -> ConvergenceReport:
    """Refine in time on one shared grid; error is the l2-in-time, l2-in-space
    distance sqrt(sum_k dt sum_i dx (u_i^k - ref(t_k))^2) against a reference
    run at ref_dt, stored at exactly the times the coarse runs visit.
    """
    dts = sorted(dts, reverse=True)
    if ref_dt >= min(dts):
        raise ValueError("ref_dt must be smaller than every dt in the study")
    t_final = base_config.t_final
    ratios = []
    for dt in dts:
        r = dt / ref_dt
        if abs(r - round(r)) > 1e-9 * max(1.0, r):
            raise ValueError(f"dt = {dt} is not an integer multiple of ref_dt = {ref_dt}")
        steps = t_final / dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError(f"t_final = {t_final} is not an integer number of dt = {dt} steps")
        ratios.append(int(round(r)))

    grid = PeriodicGrid1D(N)
    ref_steps = int(round(t_final / ref_dt))
    needed = set()
    for r in ratios:
        needed.update(range(0, ref_steps + 1, r))

    ref_states: dict[int, np.ndarray] = {}
    counter = {"k": -1}

    def collect_ref(state: State) -> None:
        counter["k"] += 1
        if counter["k"] in needed:
            ref_states[counter["k"]] = _field(state, variable).copy()

    run_simulation(
        initial.build(grid), params, replace(base_config, dt=ref_dt),
        observers=[collect_ref],
    )

    dx = grid.dx
    errors = []
    for dt, r in zip(dts, ratios):
        snapshots: list[np.ndarray] = []
        run_simulation(
            initial.build(grid), params, replace(base_config, dt=dt),
            observers=[lambda s: snapshots.append(_field(s, variable).copy())],
        )
        acc = 0.0
        for k in range(1, len(snapshots)):
            diff = snapshots[k] - ref_states[k * r]
            acc += dt * float((diff**2).sum()) * dx
        errors.append(math.sqrt(acc))
    return _finalize("time", dts, errors)
