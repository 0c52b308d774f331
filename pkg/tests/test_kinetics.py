"""Kinetics: dispersion, equilibrium, quadrature, and the moment integrals."""

import math

import numpy as np
import pytest

from lattice_transport import (
    ModelParams,
    Multipliers,
    QuadratureSpec,
    appendix_closed_forms,
    band_energy,
    diffusion_matrix,
    dual_coefficients,
    entropy_density,
    equilibrium,
    gamma,
    moments,
    omega,
    torus_integrate,
    velocity,
)

PI = math.pi


def bessel_i0(x):
    """Series oracle: I0(x) = sum (x/2)^{2k} / (k!)^2."""
    total, term, k = 0.0, 1.0, 0
    while abs(term) > 1e-18 * max(1.0, abs(total)):
        total += term
        k += 1
        term *= (x / 2.0) ** 2 / k**2
    return total


def bessel_i1(x):
    """Series oracle: I1(x) = sum (x/2)^{2k+1} / (k! (k+1)!)."""
    total, term, k = 0.0, x / 2.0, 0
    while abs(term) > 1e-18 * max(1.0, abs(total)):
        total += term
        k += 1
        term *= (x / 2.0) ** 2 / (k * (k + 1))
    return total


def spec_for(params, M=64):
    return QuadratureSpec(M=M, d=params.d)


# ---------------------------------------------------------------- dispersion


def test_band_energy_examples():
    assert band_energy([0.0], ModelParams(d=1, eps0=1.0)) == pytest.approx(-2.0)
    assert band_energy([0.25, 0.25], ModelParams(d=2, eps0=1.0)) == pytest.approx(0.0, abs=1e-15)
    assert band_energy([0.5], ModelParams(d=1, eps0=0.5)) == pytest.approx(1.0)


def test_band_energy_range_and_vectorization():
    params = ModelParams(d=3, eps0=0.7)
    rng = np.random.default_rng(0)
    pts = rng.uniform(0.0, 1.0, size=(200, 3))
    eps = band_energy(pts, params)
    assert eps.shape == (200,)
    assert np.all(np.abs(eps) <= 2 * 3 * 0.7 + 1e-12)


def test_band_energy_rejects_wrong_dimension():
    with pytest.raises(ValueError):
        band_energy([0.1, 0.2], ModelParams(d=1))


def test_velocity_examples():
    assert velocity([0.0], ModelParams(d=1, eps0=1.0))[0] == pytest.approx(0.0)
    assert velocity([0.25], ModelParams(d=1, eps0=1.0))[0] == pytest.approx(4 * PI)
    v = velocity([0.75, 0.0], ModelParams(d=2, eps0=1.0))
    assert v[0] == pytest.approx(-4 * PI)
    assert v[1] == pytest.approx(0.0, abs=1e-15)


# --------------------------------------------------------------- equilibrium


def test_equilibrium_examples():
    p1 = ModelParams(d=1, eps0=1.0, eta=1.0)
    for x in (0.0, 0.3, 0.77):
        assert equilibrium(Multipliers(0, 0), [x], p1) == pytest.approx(0.5)
    p0 = ModelParams(d=1, eps0=1.0, eta=0.0)
    assert equilibrium(Multipliers(0, 0), [0.1], p0) == pytest.approx(1.0)
    assert equilibrium(Multipliers(math.log(2), 0), [0.9], p0) == pytest.approx(2.0)


def test_equilibrium_saturates_instead_of_overflowing():
    p = ModelParams(d=1, eps0=1.0, eta=1.0)
    lo = equilibrium(Multipliers(-1e6, 0.0), [0.2], p)
    hi = equilibrium(Multipliers(1e6, 0.0), [0.2], p)
    assert np.isfinite(lo) and 0.0 <= lo < 1e-300
    assert hi == pytest.approx(1.0)
    assert np.isfinite(equilibrium(Multipliers(1e6, 0.0), [0.2], ModelParams(eta=0.0)))


def test_fermi_bound():
    p = ModelParams(d=2, eps0=1.3, eta=1.0)
    rng = np.random.default_rng(7)
    pts = rng.uniform(0.0, 1.0, size=(100, 2))
    for lam in (Multipliers(0.4, -1.1), Multipliers(-2.0, 2.0)):
        F = equilibrium(lam, pts, p)
        assert np.all(F > 0.0) and np.all(F < 1.0)


# ---------------------------------------------------------------- quadrature


def test_torus_integrate_constant():
    spec = QuadratureSpec(M=16, d=2)
    assert torus_integrate(lambda p: np.ones(p.shape[0]), spec) == pytest.approx(1.0)


def test_torus_integrate_eps_squared_d2():
    params = ModelParams(d=2, eps0=1.0)
    spec = QuadratureSpec(M=64, d=2)
    val = torus_integrate(lambda p: band_energy(p, params) ** 2, spec)
    assert abs(val - 4.0) < 1e-12


def test_torus_integrate_eps_mean_zero():
    params = ModelParams(d=1, eps0=1.0)
    spec = QuadratureSpec(M=64, d=1)
    assert abs(torus_integrate(lambda p: band_energy(p, params), spec)) < 1e-14


def test_quadrature_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(M=3, d=1)  # below 4
    with pytest.raises(ValueError):
        QuadratureSpec(M=7, d=1)  # odd
    QuadratureSpec(M=6, d=1)


def test_quadrature_budget_rejected():
    with pytest.raises(ValueError):
        QuadratureSpec(M=8192, d=2)  # 2^26 evaluations


def test_quadrature_convergence_eps_squared():
    params = ModelParams(d=1, eps0=1.0)
    errs = []
    for M in (8, 16, 32, 64):
        spec = QuadratureSpec(M=M, d=1)
        val = torus_integrate(lambda p: band_energy(p, params) ** 2, spec)
        errs.append(abs(val - 2.0))
    assert errs[-1] < 1e-12
    for a, b in zip(errs, errs[1:]):
        assert b <= a + 1e-13


def test_quadrature_convergence_smooth_occupation():
    # non-polynomial smooth integrand: spectral decay until the roundoff floor
    params = ModelParams(d=1, eps0=1.0, eta=1.0)
    lam = Multipliers(0.3, 0.7)
    ref = moments(lam, params, QuadratureSpec(M=512, d=1)).n
    errs = [abs(moments(lam, params, QuadratureSpec(M=M, d=1)).n - ref)
            for M in (4, 8, 16)]
    assert errs[0] > errs[1] > errs[2] or errs[2] < 1e-15


def test_parity_odd_integrands_vanish():
    # u_1 eps^j F is odd under p -> 1 - p, so every quadrature cancels exactly
    params = ModelParams(d=1, eps0=1.0, eta=1.0)
    spec = QuadratureSpec(M=64, d=1)
    for lam in (Multipliers(0.0, 0.0), Multipliers(0.5, -0.8), Multipliers(-1.0, 1.2)):
        for j in (0, 1, 2):
            def f(p, lam=lam, j=j):
                return (velocity(p, params)[:, 0]
                        * band_energy(p, params) ** j
                        * equilibrium(lam, p, params))
            assert abs(torus_integrate(f, spec)) < 1e-12


# ------------------------------------------------------------------- moments


def test_moments_flat_fermi():
    m = moments(Multipliers(0, 0), ModelParams(d=1, eta=1.0), QuadratureSpec(M=64, d=1))
    assert m.n == pytest.approx(0.5, abs=1e-14)
    assert m.E == pytest.approx(0.0, abs=1e-14)


def test_moments_bessel_value():
    # eta=0, lambda=(0,1), eps0=1/2: n = I0(1), E = +2*eps0*I1(1) by parity
    params = ModelParams(d=1, eps0=0.5, eta=0.0)
    m = moments(Multipliers(0.0, 1.0), params, QuadratureSpec(M=64, d=1))
    assert m.n == pytest.approx(bessel_i0(1.0), rel=1e-13)
    # independent high-resolution quadrature oracle
    fine = moments(Multipliers(0.0, 1.0), params, QuadratureSpec(M=1024, d=1))
    assert m.n == pytest.approx(fine.n, rel=1e-13)
    assert m.E == pytest.approx(fine.E, rel=1e-13)


def test_moments_maxwell_boltzmann_limit():
    # deep in the dilute limit Fermi-Dirac reduces to Maxwell-Boltzmann
    params = ModelParams(d=1, eps0=1.0, eta=1.0)
    m = moments(Multipliers(-50.0, 0.0), params, QuadratureSpec(M=256, d=1))
    assert m.n == pytest.approx(math.exp(-50.0), rel=1e-10)
    assert abs(m.E) < 1e-22


# ----------------------------------------------------- omega / gamma moments


def test_omega_examples():
    p0 = ModelParams(d=1, eps0=1.0, eta=0.0)
    spec = QuadratureSpec(M=64, d=1)
    assert omega(Multipliers(0, 0), 0, p0, spec) == pytest.approx(1.0)
    p1 = ModelParams(d=1, eps0=1.0, eta=1.0)
    assert omega(Multipliers(0, 0), 2, p1, spec) == pytest.approx(0.5, abs=1e-13)
    assert abs(omega(Multipliers(0.7, 0.0), 1, p0, spec)) < 1e-13


def test_omega_order_validation():
    with pytest.raises(ValueError):
        omega(Multipliers(0, 0), 5, ModelParams(), QuadratureSpec(M=8, d=1))


def test_gamma_examples():
    spec = QuadratureSpec(M=64, d=1)
    p1 = ModelParams(d=1, eps0=1.0, eta=1.0)
    assert gamma(Multipliers(0, 0), 0, p1, spec) == pytest.approx(2 * PI**2, rel=1e-13)
    assert abs(gamma(Multipliers(0, 0), 1, p1, spec)) < 1e-12
    p2 = ModelParams(d=2, eps0=1.0, eta=0.0)
    assert gamma(Multipliers(0, 0), 0, p2, QuadratureSpec(M=64, d=2)) == pytest.approx(
        16 * PI**2, rel=1e-13
    )
    with pytest.raises(ValueError):
        gamma(Multipliers(0, 0), 3, p1, spec)


# ---------------------------------------------------------- diffusion matrix


def test_diffusion_matrix_flat_fermi_values():
    p = ModelParams(d=1, eps0=1.0, eta=1.0)
    D = diffusion_matrix(Multipliers(0, 0), 1.0, p, QuadratureSpec(M=64, d=1))
    assert D[0, 0] == pytest.approx(2 * PI**2, rel=1e-13)
    assert D[1, 1] == pytest.approx(2 * PI**2, rel=1e-13)
    assert abs(D[0, 1]) < 1e-12


def test_diffusion_matrix_offdiagonal_block_vanishes_at_lambda1_zero():
    p = ModelParams(d=2, eps0=0.8, eta=0.0)
    D = diffusion_matrix(Multipliers(0.4, 0.0), 1.3, p, QuadratureSpec(M=32, d=2))
    assert np.max(np.abs(D[:2, 2:])) < 1e-12


def test_diffusion_matrix_bitwise_symmetric():
    p = ModelParams(d=2, eps0=1.1, eta=1.0)
    rng = np.random.default_rng(3)
    for _ in range(5):
        lam = Multipliers(*rng.uniform(-1, 1, 2))
        D = diffusion_matrix(lam, 0.7, p, QuadratureSpec(M=16, d=2))
        assert np.array_equal(D, D.T)


def test_diffusion_and_dual_matrices_positive_definite():
    rng = np.random.default_rng(11)
    for d in (1, 2):
        p = ModelParams(d=d, eps0=1.0, eta=1.0)
        spec = QuadratureSpec(M=32, d=d)
        for _ in range(50):
            lam = Multipliers(*rng.uniform(-2, 2, 2))
            V = rng.uniform(-2, 2)
            D = diffusion_matrix(lam, 1.0, p, spec)
            _, L = dual_coefficients(lam, V, 1.0, p, spec)
            assert np.linalg.eigvalsh(D).min() > 0
            assert np.linalg.eigvalsh(L).min() > 0
            assert np.array_equal(L, L.T)


# --------------------------------------------------------- appendix integrals


@pytest.mark.parametrize(
    "d,eps0,expected",
    [
        (1, 1.0, (2.0, 8 * PI**2, 0.0, 8 * PI**2)),
        (2, 1.0, (4.0, 8 * PI**2, 0.0, 24 * PI**2)),
        (3, 0.5, (1.5, 2 * PI**2, 0.0, 2.5 * PI**2)),
    ],
)
def test_appendix_closed_forms(d, eps0, expected):
    got = appendix_closed_forms(ModelParams(d=d, eps0=eps0))
    assert got == pytest.approx(expected, rel=1e-14)


def test_appendix_matches_quadrature_all_pairs():
    # every (i, j) velocity pair, not just the diagonal
    for d in (1, 2):
        params = ModelParams(d=d, eps0=1.0)
        spec = QuadratureSpec(M=64, d=d)
        closed = appendix_closed_forms(params)
        for i in range(d):
            for j in range(d):
                def uij(p, i=i, j=j):
                    u = velocity(p, params)
                    return u[:, i] * u[:, j]
                ref = closed.vel_sq if i == j else 0.0
                assert abs(torus_integrate(uij, spec) - ref) < 1e-10
                eps2ref = closed.eps_sq_vel_sq if i == j else 0.0
                got = torus_integrate(
                    lambda p, i=i, j=j: band_energy(p, params) ** 2
                    * velocity(p, params)[:, i] * velocity(p, params)[:, j],
                    spec,
                )
                assert abs(got - eps2ref) < 1e-10


# ------------------------------------------------------------------- entropy


def test_entropy_flat_fermi_is_minus_log2():
    for d in (1, 2):
        p = ModelParams(d=d, eps0=1.0, eta=1.0)
        h = entropy_density(Multipliers(0, 0), p, QuadratureSpec(M=32, d=d))
        assert h == pytest.approx(-math.log(2), rel=1e-13)


def test_entropy_matches_primal_integrand():
    # oracle: direct quadrature of F log F + (1/eta)(1 - eta F) log(1 - eta F)
    p = ModelParams(d=1, eps0=1.0, eta=1.0)
    spec = QuadratureSpec(M=128, d=1)
    for lam in (Multipliers(-3.0, 0.0), Multipliers(0.4, 0.9)):
        def primal(pts):
            F = equilibrium(lam, pts, p)
            return F * np.log(F) + (1 - F) * np.log(1 - F)
        assert entropy_density(lam, p, spec) == pytest.approx(
            torus_integrate(primal, spec), rel=1e-12
        )


def test_entropy_maxwell_boltzmann_limit():
    p = ModelParams(d=1, eps0=1.0, eta=0.0)
    spec = QuadratureSpec(M=128, d=1)
    lam = Multipliers(-0.7, 0.4)
    def primal(pts):
        F = equilibrium(lam, pts, p)
        return F * np.log(F) - F
    assert entropy_density(lam, p, spec) == pytest.approx(
        torus_integrate(primal, spec), rel=1e-12
    )


# --------------------------------------------------------- dual coefficients


def test_dual_coefficients_collapse_at_zero_potential():
    p = ModelParams(d=1, eps0=1.0, eta=1.0)
    spec = QuadratureSpec(M=32, d=1)
    lam = Multipliers(0.3, -0.5)
    mu, L = dual_coefficients(lam, 0.0, 1.0, p, spec)
    D = diffusion_matrix(lam, 1.0, p, spec)
    assert np.array_equal(L, D)
    assert mu.mu0 == lam.lambda0 and mu.mu1 == lam.lambda1


def test_dual_coefficients_flat_fermi_value():
    p = ModelParams(d=1, eps0=1.0, eta=1.0)
    mu, L = dual_coefficients(Multipliers(0, 0), 1.0, 1.0, p, QuadratureSpec(M=64, d=1))
    assert L[1, 1] == pytest.approx(4 * PI**2, rel=1e-13)
    assert mu.mu0 == pytest.approx(0.0) and mu.mu1 == pytest.approx(0.0)


# ------------------------------------------------- expansion / identity checks


def test_occupation_derivative_matches_susceptibility():
    # dF/dlambda1 = eps * F * (1 - eta F), checked by central differences
    p = ModelParams(d=1, eps0=1.0, eta=1.0)
    rng = np.random.default_rng(5)
    pts = rng.uniform(0, 1, size=(20, 1))
    lam0, lam1, h = 0.3, -0.6, 1e-6
    fd = (equilibrium(Multipliers(lam0, lam1 + h), pts, p)
          - equilibrium(Multipliers(lam0, lam1 - h), pts, p)) / (2 * h)
    F = equilibrium(Multipliers(lam0, lam1), pts, p)
    exact = band_energy(pts, p) * F * (1 - F)
    assert np.max(np.abs(fd - exact) / np.maximum(np.abs(exact), 1e-3)) < 1e-6


def test_mb_susceptibility_determinant_identity():
    # Maxwell-Boltzmann identity, quadrature as ground truth:
    # omega0*omega2 - omega1^2 = 4 eps0^2 d n^2 - E n / lambda1 - E^2 / d.
    for d, eps0, lam in [
        (1, 1.0, Multipliers(0.2, 0.7)),
        (2, 0.5, Multipliers(-0.3, 0.4)),
        (3, 1.0, Multipliers(0.1, -0.6)),
    ]:
        p = ModelParams(d=d, eps0=eps0, eta=0.0)
        spec = QuadratureSpec(M=64, d=d)
        m = moments(lam, p, spec)
        lhs = omega(lam, 0, p, spec) * omega(lam, 2, p, spec) - omega(lam, 1, p, spec) ** 2
        rhs = (4 * eps0**2 * d * m.n**2
               - m.E * m.n / lam.lambda1
               - m.E**2 / d)
        assert lhs == pytest.approx(rhs, rel=1e-12)


# ---------------------------------------------------------------- validation


def test_model_params_validation():
    with pytest.raises(ValueError):
        ModelParams(d=4)
    with pytest.raises(ValueError):
        ModelParams(eps0=0.0)
    with pytest.raises(ValueError):
        ModelParams(U0=-1.0)
    with pytest.raises(ValueError):
        ModelParams(eta=1.5)
    with pytest.raises(ValueError):
        ModelParams(delta=0.6, eta=1.0)  # 1/(1+eta) = 0.5


def test_model_params_derived_interaction():
    p = ModelParams(d=2, eps0=0.5, U0=3.0)
    assert p.U == pytest.approx(3.0 / (2 * 2 * 0.25), rel=1e-15)


def test_multipliers_must_be_finite():
    with pytest.raises(ValueError):
        Multipliers(math.inf, 0.0)
