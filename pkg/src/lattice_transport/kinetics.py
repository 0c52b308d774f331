"""Band structure, equilibrium statistics, and moment integrals on the momentum torus.

Everything here is a pure function of its arguments.  Integrals over the
d-dimensional unit torus are evaluated with a tensor-product midpoint rule,
which for smooth periodic integrands converges faster than any power of the
grid spacing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple

import numpy as np

# exp() argument clamp: preserves the saturation limits 0 and 1/eta
# without ever producing inf/nan.
_EXP_CLAMP = 700.0

# Hard ceiling on tensor-grid size (M**d evaluations).
_MAX_QUAD_POINTS = 2**24


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the lattice gas.

    Attributes
    ----------
    d : int
        Lattice dimension, 1 <= d <= 3.
    eps0 : float
        Tunneling energy scale (> 0); sets the band width 4*d*eps0.
    U0 : float
        On-site interaction strength (>= 0).
    eta : float
        Statistics selector in [0, 1]: 0 = Maxwell-Boltzmann, 1 = Fermi-Dirac.
    tau0 : float
        Relaxation constant (> 0).
    delta : float
        Density truncation bound, 0 < delta < 1/(1 + eta).
    """

    d: int = 1
    eps0: float = 1.0
    U0: float = 0.0
    eta: float = 1.0
    tau0: float = 1.0
    delta: float = 0.01

    def __post_init__(self) -> None:
        if not 1 <= self.d <= 3:
            raise ValueError(f"lattice dimension d must be 1, 2 or 3, got {self.d}")
        if not self.eps0 > 0:
            raise ValueError(f"eps0 must be positive, got {self.eps0}")
        if self.U0 < 0:
            raise ValueError(f"U0 must be nonnegative, got {self.U0}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if not self.tau0 > 0:
            raise ValueError(f"tau0 must be positive, got {self.tau0}")
        if not 0.0 < self.delta < 1.0 / (1.0 + self.eta):
            raise ValueError(
                f"delta must satisfy 0 < delta < 1/(1+eta) = "
                f"{1.0 / (1.0 + self.eta):.6g}, got {self.delta}"
            )

    @property
    def U(self) -> float:
        """Rescaled interaction U0 / (2 d eps0^2), always recomputed."""
        return self.U0 / (2.0 * self.d * self.eps0**2)


@dataclass(frozen=True)
class Multipliers:
    """Equilibrium parameters (lambda0, lambda1).

    lambda1 is the negative inverse temperature; positive values are allowed
    (negative absolute temperature, admissible because the band is bounded).
    """

    lambda0: float
    lambda1: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lambda0) and math.isfinite(self.lambda1)):
            raise ValueError("multipliers must be finite")


@dataclass(frozen=True)
class DualVariables:
    """Dual entropy variables (mu0, mu1)."""

    mu0: float
    mu1: float

    @classmethod
    def from_multipliers(cls, lam: Multipliers, V: float) -> "DualVariables":
        """mu0 = lambda0 + lambda1*V, mu1 = lambda1."""
        return cls(lam.lambda0 + lam.lambda1 * V, lam.lambda1)


@dataclass(frozen=True)
class MomentPair:
    """Particle density n and energy density E."""

    n: float
    E: float

    def validate(self, params: ModelParams) -> None:
        """Check admissibility: n in the open density range, |E| < band edge * n."""
        if params.eta > 0:
            if not 0.0 < self.n < 1.0 / params.eta:
                raise ValueError(
                    f"n must lie in (0, {1.0 / params.eta:.6g}) for eta = "
                    f"{params.eta}, got {self.n}"
                )
        elif not self.n > 0:
            raise ValueError(f"n must be positive, got {self.n}")
        emax = 2.0 * params.d * params.eps0 * self.n
        if not abs(self.E) < emax:
            raise ValueError(f"|E| must be below 2*d*eps0*n = {emax:.6g}, got {self.E}")


@dataclass(frozen=True)
class QuadratureSpec:
    """Tensor-product midpoint rule: M points per dimension on the d-torus."""

    M: int = 64
    d: int = 1

    def __post_init__(self) -> None:
        if self.M < 4 or self.M % 2 != 0:
            raise ValueError(f"M must be even and >= 4, got {self.M}")
        if not 1 <= self.d <= 3:
            raise ValueError(f"quadrature dimension must be 1, 2 or 3, got {self.d}")
        if self.M**self.d > _MAX_QUAD_POINTS:
            raise ValueError(
                f"quadrature budget M**d = {self.M}**{self.d} exceeds {_MAX_QUAD_POINTS}"
            )


@lru_cache(maxsize=32)
def _torus_points(M: int, d: int) -> np.ndarray:
    """Flat array of midpoint nodes, shape (M**d, d), read-only."""
    axis = (np.arange(M) + 0.5) / M
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    pts.setflags(write=False)
    return pts


@lru_cache(maxsize=32)
def _sin_cos_grid(M: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    """sin(2 pi p_k) and cos(2 pi p_k) on the node grid, each (M**d, d)."""
    pts = _torus_points(M, d)
    s = np.sin(2.0 * np.pi * pts)
    c = np.cos(2.0 * np.pi * pts)
    s.setflags(write=False)
    c.setflags(write=False)
    return s, c


def _grid_energy(params: ModelParams, spec: QuadratureSpec) -> np.ndarray:
    """Band energy at every quadrature node, shape (M**d,)."""
    _, c = _sin_cos_grid(spec.M, params.d)
    return -2.0 * params.eps0 * c.sum(axis=-1)


def band_energy(p, params: ModelParams):
    """Dispersion relation eps(p) = -2 eps0 sum_i cos(2 pi p_i).

    ``p`` is a point (or array of points) on the d-torus with coordinates in
    the last axis.  The range is [-2 d eps0, 2 d eps0].
    """
    p = np.asarray(p, dtype=float)
    if p.shape[-1:] != (params.d,):
        raise ValueError(f"point must have {params.d} coordinates, got shape {p.shape}")
    return -2.0 * params.eps0 * np.cos(2.0 * np.pi * p).sum(axis=-1)


def velocity(p, params: ModelParams):
    """Group velocity u(p) = grad_p eps(p); component i is 4 pi eps0 sin(2 pi p_i)."""
    p = np.asarray(p, dtype=float)
    if p.shape[-1:] != (params.d,):
        raise ValueError(f"point must have {params.d} coordinates, got shape {p.shape}")
    return 4.0 * np.pi * params.eps0 * np.sin(2.0 * np.pi * p)


def _occupation(lam: Multipliers, eps, eta: float):
    """1 / (eta + exp(-lambda0 - lambda1 * eps)) with a clamped exponent."""
    arg = np.clip(-lam.lambda0 - lam.lambda1 * np.asarray(eps, dtype=float),
                  -_EXP_CLAMP, _EXP_CLAMP)
    return 1.0 / (eta + np.exp(arg))


def equilibrium(lam: Multipliers, p, params: ModelParams):
    """Equilibrium occupation F(lambda; p).

    Saturates gracefully at the limits 0 and 1/eta instead of overflowing.
    """
    return _occupation(lam, band_energy(p, params), params.eta)


def torus_integrate(f: Callable[[np.ndarray], np.ndarray], spec: QuadratureSpec) -> float:
    """Integrate ``f`` over the unit d-torus with the midpoint tensor rule.

    ``f`` receives an (M**d, d) array of points and must return one value per
    point.  The torus has unit measure, so the integral is the plain mean.
    """
    pts = _torus_points(spec.M, spec.d)
    values = np.asarray(f(pts), dtype=float)
    if values.shape != (pts.shape[0],):
        raise ValueError("integrand must return one value per quadrature point")
    return float(values.mean())


def moments(lam: Multipliers, params: ModelParams, spec: QuadratureSpec) -> MomentPair:
    """Particle and energy densities n = int F dp, E = int F eps dp."""
    eps = _grid_energy(params, spec)
    F = _occupation(lam, eps, params.eta)
    return MomentPair(n=float(F.mean()), E=float((F * eps).mean()))


def omega(lam: Multipliers, i: int, params: ModelParams, spec: QuadratureSpec) -> float:
    """Susceptibility moment omega_i = int F (1 - eta F) eps^i dp, 0 <= i <= 4."""
    if not 0 <= i <= 4:
        raise ValueError(f"omega order must lie in 0..4, got {i}")
    eps = _grid_energy(params, spec)
    F = _occupation(lam, eps, params.eta)
    return float((F * (1.0 - params.eta * F) * eps**i).mean())


def gamma(lam: Multipliers, i: int, params: ModelParams, spec: QuadratureSpec) -> float:
    """Gradient-weighted moment Gamma_i = int eps^i |grad eps|^2 F (1 - eta F) dp."""
    if i not in (0, 1, 2):
        raise ValueError(f"gamma order must be 0, 1 or 2, got {i}")
    s, c = _sin_cos_grid(spec.M, params.d)
    eps = -2.0 * params.eps0 * c.sum(axis=-1)
    usq = (4.0 * np.pi * params.eps0) ** 2 * (s**2).sum(axis=-1)
    F = _occupation(lam, eps, params.eta)
    return float((eps**i * usq * F * (1.0 - params.eta * F)).mean())


def diffusion_matrix(
    lam: Multipliers, tau: float, params: ModelParams, spec: QuadratureSpec
) -> np.ndarray:
    """Diffusion matrix with blocks D_ij^{kl} = tau int u_k u_l F(1-eta F) eps^{i+j} dp.

    Returns the full (2d x 2d) matrix [[D00, D01], [D01, D11]]; it is assembled
    symmetrically, so it equals its transpose exactly.
    """
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    d = params.d
    s, c = _sin_cos_grid(spec.M, d)
    eps = -2.0 * params.eps0 * c.sum(axis=-1)
    F = _occupation(lam, eps, params.eta)
    FF = F * (1.0 - params.eta * F)
    u = 4.0 * np.pi * params.eps0 * s

    def block(power: int) -> np.ndarray:
        weight = FF * eps**power
        b = np.empty((d, d))
        for k in range(d):
            for l in range(k, d):
                val = tau * float((u[:, k] * u[:, l] * weight).mean())
                b[k, l] = val
                b[l, k] = val
        return b

    b00, b01, b11 = block(0), block(1), block(2)
    D = np.empty((2 * d, 2 * d))
    D[:d, :d] = b00
    D[:d, d:] = b01
    D[d:, :d] = b01
    D[d:, d:] = b11
    return D


class ClosedFormIntegrals(NamedTuple):
    """Analytic values of the basic torus integrals.

    The velocity integrals are diagonal in (i, j); the fields hold the
    diagonal value (off-diagonal entries vanish).
    """

    eps_sq: float          # int eps^2 dp          = 2 d eps0^2
    vel_sq: float          # int u_i u_j dp        = (1/2)(4 pi eps0)^2 delta_ij
    eps_vel_sq: float      # int eps u_i u_j dp    = 0
    eps_sq_vel_sq: float   # int eps^2 u_i u_j dp  = 8 (2d-1) pi^2 eps0^4 delta_ij


def appendix_closed_forms(params: ModelParams) -> ClosedFormIntegrals:
    """Closed forms of the flat-occupation torus integrals."""
    e0 = params.eps0
    return ClosedFormIntegrals(
        eps_sq=2.0 * params.d * e0**2,
        vel_sq=0.5 * (4.0 * np.pi * e0) ** 2,
        eps_vel_sq=0.0,
        eps_sq_vel_sq=8.0 * (2.0 * params.d - 1.0) * np.pi**2 * e0**4,
    )


def entropy_density(lam: Multipliers, params: ModelParams, spec: QuadratureSpec) -> float:
    """Equilibrium entropy density h(lambda).

    For eta > 0:  h = n lambda0 + E lambda1 - (1/eta) int log(1 + eta e^{lambda0+lambda1 eps}) dp.
    For eta = 0 the Maxwell-Boltzmann limit applies: h = n lambda0 + E lambda1 - n,
    which equals int (F log F - F) dp.
    """
    mom = moments(lam, params, spec)
    if params.eta == 0.0:
        return mom.n * lam.lambda0 + mom.E * lam.lambda1 - mom.n
    eps = _grid_energy(params, spec)
    x = lam.lambda0 + lam.lambda1 * eps
    # log(1 + eta e^x) = logaddexp(0, x + log eta), stable for large x
    integral = float(np.logaddexp(0.0, x + math.log(params.eta)).mean())
    return mom.n * lam.lambda0 + mom.E * lam.lambda1 - integral / params.eta


def dual_coefficients(
    lam: Multipliers, V: float, tau: float, params: ModelParams, spec: QuadratureSpec
) -> tuple[DualVariables, np.ndarray]:
    """Dual variables and the symmetrized coefficient matrix.

    L00 = D00, L01 = L10 = D01 - D00 V, L11 = D11 - 2 D01 V + D00 V^2,
    assembled into one (2d x 2d) symmetric positive definite matrix.
    """
    d = params.d
    D = diffusion_matrix(lam, tau, params, spec)
    d00 = D[:d, :d]
    d01 = D[:d, d:]
    d11 = D[d:, d:]
    l01 = d01 - d00 * V
    l11 = d11 - 2.0 * d01 * V + d00 * V**2
    L = np.empty((2 * d, 2 * d))
    L[:d, :d] = d00
    L[:d, d:] = l01
    L[d:, :d] = l01
    L[d:, d:] = l11
    return DualVariables.from_multipliers(lam, V), L
