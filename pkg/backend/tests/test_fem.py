"""
Тесты сетки, сборки операторов и разреженных решений.
"""
import numpy as np
import pytest
import scipy.sparse as sp

from app.core.exceptions import InvalidArgumentError, NumericalDomainError
from app.services.fem import (
    NodalField,
    SolveLedger,
    SparseOperator,
    assemble_pointwise_load,
    as_values,
    assemble_weighted_mass,
    block_operator,
    build_mesh_for_resolution,
    build_rect_mesh,
    h1_dual_norm,
    integrate_pointwise,
    quadrature_points,
    solve_sparse,
)


@pytest.mark.unit
class TestMesh:
    """Тесты построения сетки."""

    def test_counts(self):
        """Число узлов и элементов прямоугольной сетки."""
        mesh = build_rect_mesh(2.0, 1.0, 4, 2)
        assert mesh.n_nodes == 15
        assert mesh.n_elements == 16
        assert mesh.h == pytest.approx(0.5)

    def test_node_order_is_row_major(self):
        """Узлы нумеруются построчно, x1 быстрее."""
        mesh = build_rect_mesh(2.0, 1.0, 4, 2)
        assert mesh.nodes[1] == pytest.approx([0.5, 0.0])
        assert mesh.nodes[5] == pytest.approx([0.0, 0.5])
        assert mesh.nodes[-1] == pytest.approx([2.0, 1.0])

    def test_element_areas_sum_to_domain(self):
        mesh = build_rect_mesh(3.0, 2.0, 7, 5)
        assert mesh.areas.sum() == pytest.approx(6.0)
        assert np.all(mesh.areas > 0)

    def test_resolution(self):
        """Сетка по шагу h: число ячеек ⌈l/h⌉."""
        mesh = build_mesh_for_resolution(3.0, 3.0, 0.04)
        assert (mesh.nx, mesh.ny) == (75, 75)

    @pytest.mark.parametrize("args", [(0.0, 1.0, 2, 2), (1.0, 1.0, 0, 2), (1.0, -1.0, 2, 2), (1.0, 1.0, 2.5, 2)])
    def test_invalid_arguments(self, args):
        with pytest.raises(InvalidArgumentError):
            build_rect_mesh(*args)

    def test_operators_are_cached(self, unit_mesh):
        assert unit_mesh.mass is unit_mesh.mass
        assert unit_mesh.h1_operator is unit_mesh.h1_operator

    def test_quadrature_points_inside_domain(self, unit_mesh):
        pts = quadrature_points(unit_mesh)
        assert pts.shape == (unit_mesh.n_elements, 6, 2)
        assert pts.min() > 0.0 and pts.max() < 1.0


@pytest.mark.unit
class TestNodalField:
    """Тесты узловых полей."""

    def test_length_mismatch(self, unit_mesh):
        with pytest.raises(InvalidArgumentError):
            NodalField(unit_mesh, np.zeros(3))

    def test_non_finite(self, unit_mesh):
        values = np.zeros(unit_mesh.n_nodes)
        values[4] = np.nan
        with pytest.raises(InvalidArgumentError):
            NodalField(unit_mesh, values)

    def test_constant_and_copy(self, unit_mesh):
        field = NodalField.constant(unit_mesh, 0.25)
        clone = field.copy()
        clone.values[0] = 1.0
        assert field.values[0] == 0.25
        assert len(field) == unit_mesh.n_nodes

    def test_list_and_integer_input(self, unit_mesh):
        """Списки и целочисленные массивы приводятся к float без ошибок копирования."""
        ints = np.arange(unit_mesh.n_nodes)
        field = NodalField(unit_mesh, ints, copy=False)
        assert field.values.dtype == np.float64
        assert field.values[-1] == unit_mesh.n_nodes - 1
        from_list = NodalField(unit_mesh, [1] * unit_mesh.n_nodes, copy=False)
        assert np.all(from_list.values == 1.0)

    def test_copy_flag(self, unit_mesh):
        values = np.zeros(unit_mesh.n_nodes)
        assert NodalField(unit_mesh, values, copy=False).values is values
        assert NodalField(unit_mesh, values).values is not values

    def test_field_from_other_mesh_with_same_size(self, unit_mesh):
        twin = build_rect_mesh(1.0, 1.0, 10, 10)
        with pytest.raises(InvalidArgumentError):
            as_values(NodalField.zeros(twin), unit_mesh)
        assert as_values(NodalField.zeros(unit_mesh), unit_mesh).shape == (unit_mesh.n_nodes,)


@pytest.mark.unit
class TestAssembly:
    """Тесты матриц масс и жёсткости и квадратурных нагрузок."""

    def test_mass_integrates_constants(self):
        mesh = build_rect_mesh(3.0, 2.0, 6, 4)
        ones = np.ones(mesh.n_nodes)
        assert ones @ (mesh.mass @ ones) == pytest.approx(6.0, rel=1e-13)
        assert mesh.lumped_mass.sum() == pytest.approx(6.0, rel=1e-13)

    def test_stiffness_annihilates_constants(self, unit_mesh):
        assert np.abs(unit_mesh.stiffness @ np.ones(unit_mesh.n_nodes)).max() < 1e-12

    def test_stiffness_energy_of_linear_field(self):
        """∫|∇x1|² dx = площадь области."""
        mesh = build_rect_mesh(2.0, 1.5, 5, 3)
        x = mesh.x
        assert x @ (mesh.stiffness @ x) == pytest.approx(3.0, rel=1e-12)

    def test_operators_symmetric(self, unit_mesh):
        for op in (unit_mesh.mass, unit_mesh.stiffness):
            assert abs(op.matrix - op.matrix.T).max() == 0.0

    def test_quadrature_integrates_quadratic_exactly(self, unit_mesh):
        """Для u_h = x1 интеграл ∫u² = 1/3 точен."""
        value = integrate_pointwise(unit_mesh, lambda u: u * u, unit_mesh.x)
        assert value == pytest.approx(1.0 / 3.0, rel=1e-12)

    def test_unit_load_matches_mass_row_sums(self, unit_mesh):
        load = assemble_pointwise_load(unit_mesh, lambda u: np.ones_like(u), np.zeros(unit_mesh.n_nodes))
        assert load == pytest.approx(unit_mesh.lumped_mass, rel=1e-12)

    def test_weighted_mass_with_unit_weight(self, unit_mesh):
        weighted = assemble_weighted_mass(unit_mesh, lambda u: 1.0 + 0.0 * u, np.zeros(unit_mesh.n_nodes))
        assert abs(weighted.matrix - unit_mesh.mass.matrix).max() < 1e-15

    def test_non_finite_load_raises(self, unit_mesh):
        with pytest.raises(NumericalDomainError):
            assemble_pointwise_load(unit_mesh, lambda u: 1.0 / u, np.zeros(unit_mesh.n_nodes))


@pytest.mark.unit
class TestSparseSolve:
    """Тесты прямых разреженных решений."""

    def test_mass_solve(self, unit_mesh, rng):
        v = rng.standard_normal(unit_mesh.n_nodes)
        x = solve_sparse(unit_mesh.mass, unit_mesh.mass @ v, reuse=True)
        assert x == pytest.approx(v, rel=1e-9, abs=1e-9)

    def test_transpose_solve(self, rng):
        matrix = sp.csr_matrix(np.array([[4.0, 1.0, 0.0], [0.0, 3.0, 2.0], [1.0, 0.0, 5.0]]))
        op = SparseOperator(matrix, name="test")
        b = rng.standard_normal(3)
        x = solve_sparse(op, b, reuse=True, transpose=True)
        assert matrix.T @ x == pytest.approx(b, rel=1e-12, abs=1e-12)

    def test_block_operator(self, unit_mesh):
        op = block_operator([[unit_mesh.mass, None], [None, unit_mesh.mass]], name="diag")
        assert op.shape == (2 * unit_mesh.n_nodes, 2 * unit_mesh.n_nodes)

    def test_rhs_size_mismatch(self, unit_mesh):
        with pytest.raises(InvalidArgumentError):
            solve_sparse(unit_mesh.mass, np.ones(3))


@pytest.mark.unit
class TestDualNorm:
    """Тесты двойственной нормы невязки."""

    def test_zero_residual(self, unit_mesh):
        zero = np.zeros(unit_mesh.n_nodes)
        assert h1_dual_norm(unit_mesh, zero, zero) == 0.0

    def test_riesz_representer(self, unit_mesh, rng):
        """Для r = (M+K)v норма равна √(vᵀ(M+K)v)."""
        v = rng.standard_normal(unit_mesh.n_nodes)
        A = unit_mesh.h1_operator
        r = A @ v
        assert h1_dual_norm(unit_mesh, r) == pytest.approx(np.sqrt(v @ (A @ v)), rel=1e-9)

    def test_components_add_in_quadrature(self, unit_mesh, rng):
        r1 = rng.standard_normal(unit_mesh.n_nodes)
        r2 = rng.standard_normal(unit_mesh.n_nodes)
        combined = h1_dual_norm(unit_mesh, r1, r2)
        assert combined**2 == pytest.approx(h1_dual_norm(unit_mesh, r1) ** 2 + h1_dual_norm(unit_mesh, r2) ** 2)


@pytest.mark.unit
class TestSolveLedger:
    """Тесты учёта линейных решений."""

    def test_identity(self):
        ledger = SolveLedger()
        ledger.record(SolveLedger.STATE_NEWTON, 5)
        ledger.record(SolveLedger.ADJOINT)
        for _ in range(3):
            ledger.record_hessian_action()
            ledger.record(SolveLedger.INCREMENTAL_FORWARD)
            ledger.record(SolveLedger.INCREMENTAL_ADJOINT)
        snap = ledger.snapshot()
        assert snap["total"] == 5 + 1 + 2 * 3
        assert snap["hessian_actions"] == 3
        assert ledger.identity_holds()

    def test_identity_violation(self):
        ledger = SolveLedger()
        ledger.record_hessian_action()
        ledger.record(SolveLedger.INCREMENTAL_FORWARD)
        assert not ledger.identity_holds()

    def test_unknown_category(self):
        with pytest.raises(InvalidArgumentError):
            SolveLedger().record("unknown")


@pytest.mark.unit
class TestDualNormProperties:
    """Свойства нормы: однородность и неравенство треугольника."""

    @pytest.mark.parametrize("scale", [-3.0, 0.5, 7.25])
    def test_homogeneity(self, unit_mesh, rng, scale):
        r_u = rng.standard_normal(unit_mesh.n_nodes)
        r_mu = rng.standard_normal(unit_mesh.n_nodes)
        base = h1_dual_norm(unit_mesh, r_u, r_mu)
        assert h1_dual_norm(unit_mesh, scale * r_u, scale * r_mu) == pytest.approx(abs(scale) * base, rel=1e-12)

    def test_triangle_inequality(self, unit_mesh, rng):
        for _ in range(5):
            a_u, a_mu, b_u, b_mu = rng.standard_normal((4, unit_mesh.n_nodes))
            total = h1_dual_norm(unit_mesh, a_u + b_u, a_mu + b_mu)
            assert total <= h1_dual_norm(unit_mesh, a_u, a_mu) + h1_dual_norm(unit_mesh, b_u, b_mu) + 1e-12
