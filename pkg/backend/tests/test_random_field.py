"""
Тесты случайных начальных приближений.
"""
import numpy as np
import pytest
from pydantic import ValidationError

from app.schemas.model import FieldSamplerParams, ModelParams
from app.services.fem import build_rect_mesh
from app.services.random_field import sample_gaussian_field, sample_initial_guess


@pytest.mark.unit
class TestFieldSamplerParams:
    """Валидация параметров распределения."""

    @pytest.mark.parametrize("seed", [-1, 2**64])
    def test_seed_range(self, seed):
        with pytest.raises(ValidationError):
            FieldSamplerParams(seed=seed)

    def test_largest_seed_accepted(self):
        assert FieldSamplerParams(seed=2**64 - 1).seed == 2**64 - 1

    def test_correlation_length(self):
        fp = FieldSamplerParams(delta_G=0.8, gamma_G=0.02)
        assert fp.correlation_length == pytest.approx(np.sqrt(0.025))

    def test_unknown_field_rejected(self):
        with pytest.raises(ValidationError):
            FieldSamplerParams(sigma=1.0)


@pytest.mark.unit
class TestSampleInitialGuess:
    """Тесты u⁽⁰⁾ = m + s·erf(ξ)."""

    def test_deterministic_per_seed(self, unit_mesh, params_small):
        fp = FieldSamplerParams(seed=11)
        first = sample_initial_guess(unit_mesh, params_small, fp)
        second = sample_initial_guess(unit_mesh, params_small, fp)
        assert np.array_equal(first.values, second.values)

    def test_seeds_differ(self, unit_mesh, params_small):
        a = sample_initial_guess(unit_mesh, params_small, FieldSamplerParams(seed=1))
        b = sample_initial_guess(unit_mesh, params_small, FieldSamplerParams(seed=2))
        assert not np.array_equal(a.values, b.values)

    def test_values_inside_open_interval(self, unit_mesh):
        p = ModelParams(eps=0.1, sigma=10.0, m=0.3)
        fp = FieldSamplerParams(s=0.5, seed=4)
        u0 = sample_initial_guess(unit_mesh, p, fp).values
        assert np.all(u0 > -0.2) and np.all(u0 < 0.8)

    def test_large_scale_stays_bounded(self, unit_mesh, params_small):
        fp = FieldSamplerParams(s=1.0, delta_G=0.01, gamma_G=1e-4, seed=9)
        u0 = sample_initial_guess(unit_mesh, params_small, fp).values
        assert np.all(np.abs(u0) < 1.0)

    def test_zero_scale_is_constant(self, unit_mesh):
        p = ModelParams(eps=0.1, sigma=10.0, m=-0.2)
        u0 = sample_initial_guess(unit_mesh, p, FieldSamplerParams(s=0.0, seed=5))
        assert np.all(u0.values == -0.2)

    def test_gaussian_field_is_not_trivial(self, solver_mesh):
        xi = sample_gaussian_field(solver_mesh, FieldSamplerParams(seed=0))
        assert xi.shape == (solver_mesh.n_nodes,)
        assert np.std(xi) > 0.0

    def test_longer_correlation_is_smoother(self, solver_mesh):
        """Больший γ_G даёт меньшую энергию градиента на единицу дисперсии."""
        K = solver_mesh.stiffness
        ratios = []
        for gamma_G in (1e-3, 1e-1):
            xi = sample_gaussian_field(solver_mesh, FieldSamplerParams(gamma_G=gamma_G, seed=2))
            xi = xi - solver_mesh.mean(xi)
            ratios.append(float(xi @ (K @ xi)) / float(xi @ (solver_mesh.mass @ xi)))
        assert ratios[1] < ratios[0]


@pytest.mark.slow
class TestSamplerStatistics:
    """Статистика по многим зёрнам."""

    def test_mean_at_node(self, unit_mesh, params_small):
        node = unit_mesh.n_nodes // 2
        values = np.array(
            [
                sample_initial_guess(unit_mesh, params_small, FieldSamplerParams(seed=seed)).values[node]
                for seed in range(200)
            ]
        )
        bound = 3.0 * values.std(ddof=1) / np.sqrt(values.size)
        assert abs(values.mean() - params_small.m) <= bound

    def test_correlation_decays_with_distance(self):
        mesh = build_rect_mesh(3.0, 3.0, 30, 30)
        fp = FieldSamplerParams()
        near_limit = 10.0 * fp.correlation_length
        left = int(np.flatnonzero(np.isclose(mesh.x, 0.0) & np.isclose(mesh.y, 1.5))[0])
        right = int(np.flatnonzero(np.isclose(mesh.x, 3.0) & np.isclose(mesh.y, 1.5))[0])
        assert np.linalg.norm(mesh.nodes[left] - mesh.nodes[right]) > near_limit

        fields = np.array([sample_gaussian_field(mesh, fp.model_copy(update={"seed": seed})) for seed in range(500)])
        corr = np.corrcoef(fields[:, left], fields[:, right])[0, 1]
        assert abs(corr) < 0.2

        neighbour = left + 1
        assert np.corrcoef(fields[:, left], fields[:, neighbour])[0, 1] > abs(corr)
