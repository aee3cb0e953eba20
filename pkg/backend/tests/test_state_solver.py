"""
Тесты энергетически устойчивого метода Ньютона.
"""
import numpy as np
import pytest

from app.core.exceptions import InvalidArgumentError, SolverFailureError, StateSolveError
from app.schemas.model import FieldSamplerParams, ModelParams
from app.services.energy import chemical_potential, energy_gradient, free_energy
from app.services.fem import NodalField, SolveLedger, build_rect_mesh
from app.services.random_field import sample_initial_guess
from app.services.state_solver import StateSolver, linearized_operator, solve_state


@pytest.mark.unit
class TestLinearization:
    """Тесты блочного оператора линеаризации."""

    def test_shape(self, unit_mesh, params_small):
        op = linearized_operator(unit_mesh, np.zeros(unit_mesh.n_nodes), params_small)
        assert op.shape == (2 * unit_mesh.n_nodes, 2 * unit_mesh.n_nodes)

    def test_sigma_zero_rejected(self, unit_mesh):
        with pytest.raises(InvalidArgumentError):
            StateSolver(unit_mesh, ModelParams(eps=0.1, sigma=0.0))

    def test_gamma_out_of_range(self, unit_mesh, params_small):
        solver = StateSolver(unit_mesh, params_small)
        zero = np.zeros(unit_mesh.n_nodes)
        with pytest.raises(InvalidArgumentError):
            solver.newton_step(zero, zero, zero, gamma=2.0)

    def test_armijo_requires_descent(self, unit_mesh, params_small):
        solver = StateSolver(unit_mesh, params_small)
        u = 0.3 * np.cos(2.0 * np.pi * unit_mesh.x)
        with pytest.raises(InvalidArgumentError):
            solver.armijo_search(u, np.zeros(unit_mesh.n_nodes), np.zeros(unit_mesh.n_nodes))


@pytest.mark.integration
class TestSolveState:
    """Тесты решения задачи состояния."""

    def test_homogeneous_start_needs_no_iterations(self, solver_mesh, params_small):
        zero = NodalField.zeros(solver_mesh)
        report = StateSolver(solver_mesh, params_small).solve_state(zero, zero)
        assert report.converged
        assert report.iterations == 0
        assert report.newton_solves == 0
        assert report.energy == pytest.approx(0.25, rel=1e-12)

    def test_random_start_converges(self, solver_mesh, params_small, random_u0):
        zero = NodalField.zeros(solver_mesh)
        report = StateSolver(solver_mesh, params_small).solve_state(zero, random_u0)
        assert report.converged
        assert report.final_residual <= 1e-8
        assert report.residuals[-1] == report.final_residual
        assert report.iterations <= 200
        # Энергия не возрастает (с допуском на округление)
        energies = np.array(report.energies)
        assert np.all(np.diff(energies) <= 1e-12 * np.abs(energies[:-1]))
        # Ламели выгоднее однородного состояния
        assert report.energy < 0.25
        assert len(report.gammas) == len(report.betas) == report.iterations

    def test_mass_is_conserved(self, solver_mesh, params_small, random_u0):
        zero = NodalField.zeros(solver_mesh)
        report = solve_state(zero, random_u0, params_small, solver_mesh)
        assert solver_mesh.mean(report.u.values) == pytest.approx(params_small.m, abs=1e-10)

    def test_initial_mass_is_shifted(self, solver_mesh, params_small, random_u0):
        zero = NodalField.zeros(solver_mesh)
        shifted = NodalField(solver_mesh, random_u0.values + 0.05)
        report = StateSolver(solver_mesh, params_small).solve_state(zero, shifted, max_iter=1)
        assert solver_mesh.mean(report.u.values) == pytest.approx(params_small.m, abs=1e-10)

    def test_iteration_budget_is_reported(self, solver_mesh, params_small, random_u0):
        """Исчерпание max_iter даёт отчёт, а не исключение."""
        zero = NodalField.zeros(solver_mesh)
        report = StateSolver(solver_mesh, params_small).solve_state(zero, random_u0, max_iter=1)
        assert not report.converged
        assert report.iterations == 1
        assert report.final_residual > 1e-8

    def test_reported_energy_matches_state(self, solver_mesh, params_small, random_u0):
        f = NodalField(solver_mesh, -0.3 * np.exp(-((solver_mesh.x - 0.5) ** 2) / 0.08))
        report = StateSolver(solver_mesh, params_small).solve_state(f, random_u0)
        assert report.energy == pytest.approx(free_energy(report.u, f, params_small, solver_mesh), rel=1e-12)

    def test_deterministic(self, solver_mesh, params_small, random_u0):
        zero = NodalField.zeros(solver_mesh)
        first = StateSolver(solver_mesh, params_small).solve_state(zero, random_u0)
        second = StateSolver(solver_mesh, params_small).solve_state(zero, random_u0)
        assert np.array_equal(first.u.values, second.u.values)

    def test_ledger_counts_newton_solves(self, solver_mesh, params_small, random_u0, mocker):
        ledger = SolveLedger()
        solver = StateSolver(solver_mesh, params_small, ledger=ledger)
        spy = mocker.spy(solver, "newton_step")
        report = solver.solve_state(NodalField.zeros(solver_mesh), random_u0)
        assert spy.call_count == report.newton_solves
        assert ledger.count(SolveLedger.STATE_NEWTON) == report.newton_solves
        assert report.newton_solves >= report.iterations

    def test_warm_start_from_equilibrium(self, solver_mesh, params_small, random_u0):
        zero = NodalField.zeros(solver_mesh)
        solver = StateSolver(solver_mesh, params_small)
        first = solver.solve_state(zero, random_u0)
        again = solver.solve_state(zero, first.u)
        assert again.iterations <= 1
        assert again.converged


@pytest.mark.slow
class TestSolveStateAcceptance:
    """Сходимость на [0, 3]² при (m, ε, σ) = (0, 0.08, 12.8) и h = 0.05."""

    @pytest.mark.parametrize("seed", range(10))
    def test_converges(self, params, seed):
        mesh = build_rect_mesh(3.0, 3.0, 60, 60)
        u0 = sample_initial_guess(mesh, params, FieldSamplerParams(seed=seed))
        report = StateSolver(mesh, params).solve_state(NodalField.zeros(mesh), u0)
        assert report.converged
        assert report.iterations <= 200
        assert report.energy < 2.25
        energies = np.array(report.energies)
        assert np.all(np.diff(energies) <= 1e-12 * np.abs(energies[:-1]))


@pytest.mark.unit
class TestRoundoffSlope:
    """Наклон точного шага Ньютона на уровне округления вблизи решения."""

    @pytest.fixture
    def setup(self, unit_mesh, params_small):
        solver = StateSolver(unit_mesh, params_small)
        u = 0.3 * np.cos(2.0 * np.pi * unit_mesh.x)
        zero = np.zeros(unit_mesh.n_nodes)
        mu = chemical_potential(u, zero, params_small, unit_mesh).values
        grad = energy_gradient(u, zero, params_small, unit_mesh)
        return solver, u, mu, zero, grad

    def _step_with_slope(self, mesh, grad, slope):
        du = NodalField(mesh, grad * (slope / float(grad @ grad)))
        return du, NodalField.zeros(mesh)

    def test_roundoff_slope_keeps_full_newton_step(self, unit_mesh, setup, mocker):
        solver, u, mu, zero, grad = setup
        step = mocker.patch.object(solver, "newton_step", return_value=self._step_with_slope(unit_mesh, grad, 1e-16))
        du, _, gamma, slope = solver.find_descent_direction(u, mu, zero)
        assert gamma == 1.0
        assert abs(slope) <= solver.slope_floor(free_energy(u, zero, solver.params, unit_mesh))
        assert step.call_count == 1

    def test_positive_slope_exhausts_gamma(self, unit_mesh, setup, mocker):
        solver, u, mu, zero, grad = setup
        step = mocker.patch.object(solver, "newton_step", return_value=self._step_with_slope(unit_mesh, grad, 1e-3))
        with pytest.raises(SolverFailureError) as exc:
            solver.find_descent_direction(u, mu, zero)
        assert step.call_args_list[-1].args[3] == 0.0
        assert len(exc.value.detail["attempts"]) == step.call_count

    def test_solve_state_takes_roundoff_step_without_search(self, solver_mesh, params_small, random_u0, mocker):
        solver = StateSolver(solver_mesh, params_small)
        du = NodalField.zeros(solver_mesh)
        mocker.patch.object(solver, "find_descent_direction", return_value=(du, du, 1.0, 1e-17))
        search = mocker.spy(solver, "armijo_search")
        report = solver.solve_state(NodalField.zeros(solver_mesh), random_u0, max_iter=2)
        assert search.call_count == 0
        assert report.roundoff_steps == 2
        assert report.betas == [1.0, 1.0]
        assert report.gammas == [1.0, 1.0]


@pytest.mark.unit
class TestInterruptedSolve:
    """Сбой поиска шага отдаёт отчёт по последнему принятому приближению."""

    def test_report_travels_with_error(self, solver_mesh, params_small, random_u0, mocker):
        solver = StateSolver(solver_mesh, params_small)
        mocker.patch.object(
            solver, "armijo_search", side_effect=SolverFailureError("Поиск шага Армихо исчерпан", {"halvings": 40})
        )
        with pytest.raises(StateSolveError) as exc:
            solver.solve_state(NodalField.zeros(solver_mesh), random_u0)

        report = exc.value.report
        assert report.iterations == 0
        assert not report.converged
        assert report.newton_solves >= 1
        assert solver_mesh.mean(report.u.values) == pytest.approx(params_small.m, abs=1e-10)
        assert exc.value.detail["halvings"] == 40
        assert exc.value.detail["residual"] == report.final_residual
        assert isinstance(exc.value, SolverFailureError)
