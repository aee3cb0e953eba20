"""
Тесты функционала свободной энергии, невязки и целевого функционала.
"""
import numpy as np
import pytest

from app.core.exceptions import InvalidArgumentError
from app.schemas.model import ModelParams
from app.services.energy import (
    chemical_potential,
    design_objective,
    double_well,
    double_well_gamma,
    energy_gradient,
    free_energy,
    inv_neumann_laplacian,
    residual,
)
from app.services.fem import NodalField, build_rect_mesh


def _smooth_state(mesh, m=0.0):
    """m + 0.3 cos(2πx1): нулевое среднее отклонения на равномерной сетке."""
    return m + 0.3 * np.cos(2.0 * np.pi * mesh.x)


@pytest.mark.unit
class TestDoubleWell:
    """Тесты двухъямного потенциала."""

    def test_values(self):
        assert double_well(0.0) == 0.25
        assert double_well(1.0, 1) == 0.0
        assert double_well(0.0, 2) == -1.0
        assert double_well(2.0, 3) == 12.0

    def test_invalid_order(self):
        with pytest.raises(InvalidArgumentError):
            double_well(0.0, 4)

    def test_gamma_one_is_exact_second_derivative(self):
        u = np.linspace(-2.0, 2.0, 11)
        assert double_well_gamma(u, 1.0) == pytest.approx(double_well(u, 2))

    def test_gamma_zero_is_convex(self):
        u = np.linspace(-2.0, 2.0, 11)
        assert np.all(double_well_gamma(u, 0.0) >= 0.0)

    def test_gamma_out_of_range(self):
        with pytest.raises(InvalidArgumentError):
            double_well_gamma(0.5, 1.5)


@pytest.mark.unit
class TestFreeEnergy:
    """Тесты свободной энергии F."""

    def test_homogeneous_state(self, square3_mesh, params):
        """u ≡ 0, f ≡ 0 на [0, 3]²: F = 9·W(0) = 2.25."""
        zero = NodalField.zeros(square3_mesh)
        assert free_energy(zero, zero, params, square3_mesh) == pytest.approx(2.25, rel=1e-12)

    def test_pure_phase_has_zero_energy(self, square3_mesh):
        """u ≡ 1 при m = 1 (вне допустимого диапазона схемы, только для проверки формулы)."""
        p = ModelParams.model_construct(eps=0.08, sigma=12.8, m=1.0)
        one = NodalField.constant(square3_mesh, 1.0)
        assert free_energy(one, NodalField.zeros(square3_mesh), p, square3_mesh) == pytest.approx(0.0, abs=1e-12)

    def test_substrate_term(self, unit_mesh):
        """u ≡ m, f ≡ c: F = |Ω|(W(m) + c·m)."""
        p = ModelParams(eps=0.1, sigma=10.0, m=0.2)
        u = NodalField.constant(unit_mesh, 0.2)
        f = NodalField.constant(unit_mesh, -0.5)
        assert free_energy(u, f, p, unit_mesh) == pytest.approx(0.2304 - 0.1, rel=1e-10)

    def test_nonlocal_term_is_nonnegative(self, unit_mesh):
        with_sigma = ModelParams(eps=0.1, sigma=10.0, m=0.0)
        without_sigma = ModelParams(eps=0.1, sigma=0.0, m=0.0)
        u = _smooth_state(unit_mesh)
        zero = np.zeros(unit_mesh.n_nodes)
        assert free_energy(u, zero, with_sigma, unit_mesh) > free_energy(u, zero, without_sigma, unit_mesh)

    def test_gradient_matches_finite_difference(self, solver_mesh, params_small, rng):
        """Производная F по направлению с нулевым средним совпадает с вариацией."""
        mesh = solver_mesh
        u = _smooth_state(mesh)
        f = 0.2 * np.sin(np.pi * mesh.y)
        v = np.sin(2.0 * np.pi * mesh.y) * np.cos(np.pi * mesh.x)
        v -= mesh.mean(v)
        h = 1e-5
        fd = (free_energy(u + h * v, f, params_small, mesh) - free_energy(u - h * v, f, params_small, mesh)) / (2 * h)
        exact = float(energy_gradient(u, f, params_small, mesh) @ v)
        assert fd == pytest.approx(exact, rel=1e-6, abs=1e-9)


@pytest.mark.unit
class TestResidual:
    """Тесты слабой невязки и химического потенциала."""

    def test_chemical_potential_zeroes_second_equation(self, unit_mesh, params_small):
        u = _smooth_state(unit_mesh)
        f = np.zeros(unit_mesh.n_nodes)
        mu = chemical_potential(u, f, params_small, unit_mesh)
        res = residual(u, mu, f, params_small, unit_mesh)
        assert np.abs(res.r_mu).max() < 1e-10
        assert np.abs(res.r_u).max() > 1e-3

    def test_homogeneous_state_is_equilibrium(self, unit_mesh, params_small):
        zero = np.zeros(unit_mesh.n_nodes)
        res = residual(zero, zero, zero, params_small, unit_mesh)
        assert res.norm(unit_mesh) == 0.0


@pytest.mark.unit
class TestNeumannLaplacian:
    """Тесты обратного лапласиана Неймана."""

    def test_solves_with_zero_mean(self, unit_mesh):
        d = _smooth_state(unit_mesh)
        g = unit_mesh.mass @ d
        w = inv_neumann_laplacian(unit_mesh, g).values
        assert unit_mesh.stiffness @ w == pytest.approx(g, abs=1e-10)
        assert abs(unit_mesh.integral(w)) < 1e-10

    def test_incompatible_data(self, unit_mesh):
        with pytest.raises(InvalidArgumentError):
            inv_neumann_laplacian(unit_mesh, unit_mesh.lumped_mass)

    def test_zero_data(self, unit_mesh):
        w = inv_neumann_laplacian(unit_mesh, np.zeros(unit_mesh.n_nodes))
        assert not np.any(w.values)

    def test_converges_on_cosine(self):
        """−Δw = π²cos(πx1) с условием Неймана: w = cos(πx1), ошибка в L² убывает как h²."""
        errors = []
        for n in (8, 16, 32):
            mesh = build_rect_mesh(1.0, 1.0, n, n)
            exact = np.cos(np.pi * mesh.x)
            w = inv_neumann_laplacian(mesh, mesh.mass @ (np.pi**2 * exact)).values
            diff = w - exact
            errors.append(np.sqrt(diff @ (mesh.mass @ diff)))
        assert errors[-1] < 1e-2
        for coarse, fine in zip(errors, errors[1:]):
            assert coarse / fine > 3.5


@pytest.mark.unit
class TestDesignObjective:
    """Тесты целевого функционала Q."""

    def test_zero_at_target(self, unit_mesh, rng):
        u = rng.uniform(-1, 1, unit_mesh.n_nodes)
        assert design_objective(u, u, unit_mesh) == 0.0

    def test_opposite_phases(self, square3_mesh):
        plus = NodalField.constant(square3_mesh, 1.0)
        minus = NodalField.constant(square3_mesh, -1.0)
        assert design_objective(plus, minus, square3_mesh) == pytest.approx(36.0, rel=1e-12)
