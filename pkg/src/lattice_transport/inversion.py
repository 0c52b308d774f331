"""Inversion of the moment map and the self-consistent density relation.

The forward map lambda -> (n, E) is smooth with Jacobian
[[omega0, omega1], [omega1, omega2]]; Newton iteration inverts it.  The
self-consistent map mu -> (n, E) additionally couples the potential
V = -U0 n back into the occupation through lambda0 = mu0 + U0 n mu1
(so that mu0 = lambda0 + lambda1 V), and its Jacobian determinant has the
closed form (omega0 omega2 - omega1^2) / (1 - U0 mu1 omega0), which blows
up on the interior singular set 1 - U0 mu1 omega0 = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .kinetics import (
    ModelParams,
    MomentPair,
    Multipliers,
    DualVariables,
    QuadratureSpec,
    moments,
    omega,
    _grid_energy,
    _occupation,
)

# Iteration ceiling for the damped fixed point (no user knob; the Newton
# ceiling settings.max_iter applies to the outer Newton loops only).
_FIXED_POINT_MAX = 500

# 1D quadrature resolution for the factorized Maxwell-Boltzmann integrals.
_MB_QUAD_M = 64


class SingularJacobianError(RuntimeError):
    """Newton Jacobian determinant fell below the singularity threshold."""


class NoConvergenceError(RuntimeError):
    """Iteration failed to reach tolerance; carries the last residual."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class InversionSettings:
    newton_tol: float = 1e-12
    max_iter: int = 50
    damping: float = 1.0
    fixed_point_tol: float = 1e-13

    def __post_init__(self) -> None:
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if not self.fixed_point_tol > 0:
            raise ValueError("fixed_point_tol must be positive")


def invert_moments(
    target: MomentPair,
    params: ModelParams,
    spec: QuadratureSpec,
    settings: InversionSettings = InversionSettings(),
) -> Multipliers:
    """Solve moments(lam) = target by damped Newton iteration.

    The initial guess lambda0 = log(n / (1 - eta n)), lambda1 = 0 is exact
    whenever the target is an isothermal state (E = 0 by parity).

    Raises SingularJacobianError when |omega0 omega2 - omega1^2| < 1e-14 at an
    iterate, NoConvergenceError after settings.max_iter iterations.
    """
    target.validate(params)
    lam0 = math.log(target.n / (1.0 - params.eta * target.n)) if params.eta > 0 \
        else math.log(target.n)
    lam = np.array([lam0, 0.0])

    def residual(vec: np.ndarray) -> np.ndarray:
        m = moments(Multipliers(vec[0], vec[1]), params, spec)
        return np.array([m.n - target.n, m.E - target.E])

    r = residual(lam)
    for _ in range(settings.max_iter):
        if np.max(np.abs(r)) < settings.newton_tol:
            return Multipliers(float(lam[0]), float(lam[1]))
        mult = Multipliers(float(lam[0]), float(lam[1]))
        w0 = omega(mult, 0, params, spec)
        w1 = omega(mult, 1, params, spec)
        w2 = omega(mult, 2, params, spec)
        det = w0 * w2 - w1 * w1
        if abs(det) < 1e-14:
            raise SingularJacobianError(
                f"moment Jacobian nearly singular: omega0*omega2 - omega1^2 = {det:.3e}"
            )
        step = np.array([w2 * r[0] - w1 * r[1], -w1 * r[0] + w0 * r[1]]) / det
        # backtracking: halve the step factor while the residual grows
        factor = settings.damping
        r_norm = np.max(np.abs(r))
        while True:
            trial = lam - factor * step
            r_trial = residual(trial)
            if np.max(np.abs(r_trial)) < r_norm or factor < 1e-4:
                lam, r = trial, r_trial
                break
            factor *= 0.5
    if np.max(np.abs(r)) < settings.newton_tol:
        return Multipliers(float(lam[0]), float(lam[1]))
    raise NoConvergenceError(
        "Newton iteration for the moment inversion did not converge",
        float(np.max(np.abs(r))), settings.max_iter,
    )


def _lambda_from_mu(mu: DualVariables, n: float, params: ModelParams) -> Multipliers:
    """lambda0 = mu0 + U0 n mu1 (from mu0 = lambda0 + lambda1 V with V = -U0 n)."""
    return Multipliers(mu.mu0 + params.U0 * n * mu.mu1, mu.mu1)


def selfconsistent_density(
    mu: DualVariables,
    params: ModelParams,
    spec: QuadratureSpec,
    settings: InversionSettings = InversionSettings(),
) -> MomentPair:
    """Solve the implicit relation n = int F(lambda(mu, n)) dp for given mu.

    Damped fixed-point iteration n <- (1 - rho) n + rho G(n), starting at
    rho = 1/2, doubling rho toward 1 while the residual decreases and halving
    it on increase.  Divergence is expected near the singular set
    1 - U0 mu1 omega0 = 0 and is reported as NoConvergenceError.
    """
    eps = _grid_energy(params, spec)

    def G(n: float) -> float:
        lam = _lambda_from_mu(mu, n, params)
        return float(_occupation(lam, eps, params.eta).mean())

    n = 0.5 if params.eta > 0 else 1.0
    rho = 0.5
    prev_res = math.inf
    for _ in range(_FIXED_POINT_MAX):
        g = G(n)
        res = abs(g - n)
        if res < settings.fixed_point_tol:
            n = g
            break
        rho = min(1.0, 2.0 * rho) if res < prev_res else max(0.5 * rho, 1e-6)
        prev_res = res
        n = (1.0 - rho) * n + rho * g
        if not math.isfinite(n):
            raise NoConvergenceError(
                "self-consistent density iteration diverged", res, _FIXED_POINT_MAX
            )
    else:
        raise NoConvergenceError(
            "self-consistent density iteration did not converge "
            "(expected near the singular set 1 - U0*mu1*omega0 = 0)",
            prev_res, _FIXED_POINT_MAX,
        )

    lam = _lambda_from_mu(mu, n, params)
    F = _occupation(lam, eps, params.eta)
    return MomentPair(n=float(F.mean()), E=float((F * eps).mean()))


class DeterminantResult(NamedTuple):
    value: float
    denominator: float      # 1 - U0 mu1 omega0
    near_singular: bool     # |denominator| < 1e-10


def jacobian_det_formula(
    mu: DualVariables,
    params: ModelParams,
    spec: QuadratureSpec,
    settings: InversionSettings = InversionSettings(),
) -> DeterminantResult:
    """Closed-form det d(n,E)/d(mu) = (omega0 omega2 - omega1^2) / (1 - U0 mu1 omega0).

    The omegas are evaluated at the self-consistent multipliers
    (mu0 + U0 n mu1, mu1).  Flags near_singular when the denominator is
    within 1e-10 of zero.
    """
    mom = selfconsistent_density(mu, params, spec, settings)
    lam = _lambda_from_mu(mu, mom.n, params)
    w0 = omega(lam, 0, params, spec)
    w1 = omega(lam, 1, params, spec)
    w2 = omega(lam, 2, params, spec)
    denom = 1.0 - params.U0 * mu.mu1 * w0
    return DeterminantResult(
        value=(w0 * w2 - w1 * w1) / denom,
        denominator=denom,
        near_singular=abs(denom) < 1e-10,
    )


class MBClosedForms(NamedTuple):
    n: float
    E: float
    I0: float
    I1: float


def mb_closed_forms(
    mu: DualVariables,
    params: ModelParams,
    settings: InversionSettings = InversionSettings(),
) -> MBClosedForms:
    """Maxwell-Boltzmann (eta = 0) factorized closed forms.

    The occupation factorizes over dimensions, so with
    I0 = int exp(-2 eps0 mu1 cos(2 pi p)) dp and
    I1 = int exp(-2 eps0 mu1 cos(2 pi p)) cos(2 pi p) dp
    the density solves the scalar relation n = e^{mu0 + U0 n mu1} I0^d and
    E = -2 d eps0 e^{mu0 + U0 n mu1} I0^{d-1} I1.  Scalar Newton iteration;
    its derivative 1 - U0 mu1 n vanishes exactly on the singular set.
    """
    if params.eta != 0.0:
        raise ValueError("closed forms require Maxwell-Boltzmann statistics (eta = 0)")
    p = (np.arange(_MB_QUAD_M) + 0.5) / _MB_QUAD_M
    c = np.cos(2.0 * np.pi * p)
    kernel = np.exp(-2.0 * params.eps0 * mu.mu1 * c)
    I0 = float(kernel.mean())
    I1 = float((kernel * c).mean())

    def f(n: float) -> float:
        return n - math.exp(mu.mu0 + params.U0 * n * mu.mu1) * I0**params.d

    n = I0**params.d * math.exp(mu.mu0)  # exact when U0 mu1 = 0
    for it in range(settings.max_iter):
        val = f(n)
        if abs(val) < settings.fixed_point_tol:
            break
        deriv = 1.0 - params.U0 * mu.mu1 * (n - val)
        if abs(deriv) < 1e-14:
            raise NoConvergenceError(
                "scalar self-consistency is singular (1 - U0*mu1*n = 0)", abs(val), it
            )
        n -= val / deriv
        if not math.isfinite(n):
            raise NoConvergenceError("scalar self-consistency diverged", abs(val), it)
    else:
        raise NoConvergenceError(
            "scalar self-consistency did not converge", abs(f(n)), settings.max_iter
        )

    prefactor = math.exp(mu.mu0 + params.U0 * n * mu.mu1)
    E = -2.0 * params.d * params.eps0 * prefactor * I0 ** (params.d - 1) * I1
    return MBClosedForms(n=n, E=E, I0=I0, I1=I1)
