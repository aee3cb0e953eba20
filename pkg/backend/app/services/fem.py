"""
Конечные элементы P1 на структурированной треугольной сетке прямоугольника.

Сборка матриц масс и жёсткости, нелинейных нагрузок по квадратуре степени 4,
разреженные прямые решения с повторным использованием факторизации
и двойственная норма невязки в (H¹)'.
"""
import logging
import threading
from typing import Any, Callable, Dict, Hashable, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from app.core.config import settings
from app.core.exceptions import InvalidArgumentError, NumericalDomainError, SolverFailureError

logger = logging.getLogger(__name__)

# Квадратура степени 4 на треугольнике (6 точек): барицентрические координаты и веса
_QA, _QB = 0.445948490915965, 0.091576213509771
_WA, _WB = 0.223381589678011, 0.109951743655322
QUAD_BARYCENTRIC = np.array(
    [
        [1.0 - 2.0 * _QA, _QA, _QA],
        [_QA, 1.0 - 2.0 * _QA, _QA],
        [_QA, _QA, 1.0 - 2.0 * _QA],
        [1.0 - 2.0 * _QB, _QB, _QB],
        [_QB, 1.0 - 2.0 * _QB, _QB],
        [_QB, _QB, 1.0 - 2.0 * _QB],
    ]
)
QUAD_WEIGHTS = np.array([_WA, _WA, _WA, _WB, _WB, _WB])

_ELEMENT_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


class Mesh:
    """
    Треугольная сетка прямоугольника [0, l1]×[0, l2].

    Узлы пронумерованы построчно (x1 быстрее), каждая ячейка делится
    диагональю на два прямоугольных треугольника. После построения
    сетка неизменяема; собранные операторы и факторизации кэшируются
    на ней потокобезопасно.
    """

    def __init__(self, l1: float, l2: float, nx: int, ny: int, nodes: np.ndarray, elements: np.ndarray):
        self.l1 = float(l1)
        self.l2 = float(l2)
        self.nx = int(nx)
        self.ny = int(ny)
        self.nodes = np.ascontiguousarray(nodes, dtype=float)
        self.elements = np.ascontiguousarray(elements, dtype=np.int64)
        self.h = max(self.l1 / self.nx, self.l2 / self.ny)

        pts = self.nodes[self.elements]
        d1 = pts[:, 1] - pts[:, 0]
        d2 = pts[:, 2] - pts[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        if np.any(det <= 0.0):
            raise InvalidArgumentError("Сетка содержит вырожденные или вывернутые элементы")
        self.areas = 0.5 * det

        # Градиенты барицентрических функций на каждом элементе: (ne, 3, 2)
        g1 = np.stack([d2[:, 1], -d2[:, 0]], axis=1) / det[:, None]
        g2 = np.stack([-d1[:, 1], d1[:, 0]], axis=1) / det[:, None]
        self.gradients = np.stack([-(g1 + g2), g1, g2], axis=1)

        for arr in (self.nodes, self.elements, self.areas, self.gradients):
            arr.setflags(write=False)

        self._cache: Dict[Hashable, Any] = {}
        self._lock = threading.RLock()

    def __repr__(self) -> str:
        return f"<Mesh {self.l1:g}x{self.l2:g} nx={self.nx} ny={self.ny} h={self.h:.4g}>"

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def area(self) -> float:
        return self.l1 * self.l2

    @property
    def x(self) -> np.ndarray:
        return self.nodes[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.nodes[:, 1]

    def cached(self, key: Hashable, factory: Callable[[], Any]) -> Any:
        """Возвращает закэшированный объект, создавая его один раз."""
        with self._lock:
            if key not in self._cache:
                self._cache[key] = factory()
            return self._cache[key]

    @property
    def mass(self) -> "SparseOperator":
        return self.cached("mass", lambda: assemble_mass(self))

    @property
    def stiffness(self) -> "SparseOperator":
        return self.cached("stiffness", lambda: assemble_stiffness(self))

    @property
    def lumped_mass(self) -> np.ndarray:
        return self.cached("lumped_mass", lambda: np.asarray(self.mass.matrix.sum(axis=1)).ravel())

    @property
    def h1_operator(self) -> "SparseOperator":
        """Оператор M + K (отображение Рисса в H¹)."""
        return self.cached(
            "h1",
            lambda: SparseOperator(self.mass.matrix + self.stiffness.matrix, symmetric=True, name="mass+stiffness"),
        )

    def warm_up(self) -> None:
        """Собирает общие операторы заранее (перед параллельной работой)."""
        self.h1_operator.factorization()
        self.mass.factorization()

    def integral(self, values: np.ndarray) -> float:
        """∫ v_h dx для узлового поля."""
        return float(self.lumped_mass @ values)

    def mean(self, values: np.ndarray) -> float:
        return self.integral(values) / self.area

    def interpolate(self, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "NodalField":
        """Узловая интерполяция функции fn(x1, x2)."""
        values = np.broadcast_to(np.asarray(fn(self.x, self.y), dtype=float), (self.n_nodes,))
        return NodalField(self, values)


class NodalField:
    """Вектор коэффициентов P1-поля на узлах сетки."""

    __slots__ = ("mesh", "values")

    def __init__(self, mesh: Mesh, values: Any, copy: bool = True):
        arr = np.asarray(values, dtype=float).reshape(-1)
        if copy:
            arr = arr.copy()
        if arr.shape[0] != mesh.n_nodes:
            raise InvalidArgumentError(
                "Длина поля не совпадает с числом узлов",
                {"expected": mesh.n_nodes, "got": int(arr.shape[0])},
            )
        if not np.all(np.isfinite(arr)):
            raise InvalidArgumentError("Поле содержит нечисловые значения")
        self.mesh = mesh
        self.values = arr

    @classmethod
    def zeros(cls, mesh: Mesh) -> "NodalField":
        return cls(mesh, np.zeros(mesh.n_nodes), copy=False)

    @classmethod
    def constant(cls, mesh: Mesh, value: float) -> "NodalField":
        return cls(mesh, np.full(mesh.n_nodes, float(value)), copy=False)

    def copy(self) -> "NodalField":
        return NodalField(self.mesh, self.values)

    def __len__(self) -> int:
        return self.values.shape[0]

    def __repr__(self) -> str:
        return f"<NodalField n={len(self)} min={self.values.min():.4g} max={self.values.max():.4g}>"


FieldLike = Union[NodalField, np.ndarray, Sequence[float]]


def as_values(field: FieldLike, mesh: Mesh) -> np.ndarray:
    """Приводит поле или массив к проверенному вектору коэффициентов."""
    if isinstance(field, NodalField):
        if field.mesh is not mesh:
            raise InvalidArgumentError("Поле задано на другой сетке", {"field_mesh": repr(field.mesh), "mesh": repr(mesh)})
        return field.values
    return NodalField(mesh, field, copy=False).values


class SparseOperator:
    """Квадратная разреженная матрица (CSR) с кэшем LU-факторизации."""

    def __init__(self, matrix: Any, symmetric: bool = False, name: str = "operator"):
        matrix = sp.csr_matrix(matrix, dtype=float)
        if matrix.shape[0] != matrix.shape[1]:
            raise InvalidArgumentError("Оператор должен быть квадратным", {"shape": matrix.shape})
        self.matrix = matrix
        self.symmetric = symmetric
        self.name = name
        self._lu = None
        self._lock = threading.Lock()

    def __repr__(self) -> str:
        return f"<SparseOperator {self.name} n={self.shape[0]} nnz={self.matrix.nnz}>"

    @property
    def shape(self) -> Tuple[int, int]:
        return self.matrix.shape

    def __matmul__(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    def norm_inf(self) -> float:
        return float(abs(self.matrix).sum(axis=1).max()) if self.matrix.nnz else 0.0

    def factorization(self):
        """LU-факторизация, создаётся один раз и переиспользуется."""
        with self._lock:
            if self._lu is None:
                self._lu = _factorize(self.matrix, self.name)
            return self._lu


def _factorize(matrix: sp.spmatrix, name: str):
    try:
        return splu(sp.csc_matrix(matrix))
    except RuntimeError as e:
        raise SolverFailureError(
            f"Факторизация оператора '{name}' не удалась: {e}",
            {"operator": name, "shape": matrix.shape, "nnz": int(matrix.nnz)},
        ) from e


OperatorLike = Union[SparseOperator, sp.spmatrix, Sequence[Sequence[Any]]]


def block_operator(blocks: Sequence[Sequence[Any]], name: str = "block") -> SparseOperator:
    """Собирает блочный оператор 2×2 (или больше) из разреженных блоков."""
    raw = [[blk.matrix if isinstance(blk, SparseOperator) else blk for blk in row] for row in blocks]
    return SparseOperator(sp.bmat(raw, format="csr"), symmetric=False, name=name)


def _as_operator(A: OperatorLike) -> SparseOperator:
    if isinstance(A, SparseOperator):
        return A
    if sp.issparse(A):
        return SparseOperator(A)
    return block_operator(A)


def solve_sparse(A: OperatorLike, b: np.ndarray, reuse: bool = False, transpose: bool = False) -> np.ndarray:
    """
    Прямое разреженное решение A x = b (или Aᵀ x = b).

    Args:
        A: Оператор, разреженная матрица или блоки 2×2
        b: Правая часть
        reuse: Использовать закэшированную факторизацию оператора
        transpose: Решать транспонированную систему

    Returns:
        Решение x

    Raises:
        SolverFailureError: вырожденная факторизация или большая невязка
    """
    op = _as_operator(A)
    rhs = np.asarray(b, dtype=float)
    if rhs.shape[0] != op.shape[0]:
        raise InvalidArgumentError("Размер правой части не совпадает с оператором", {"n": op.shape[0], "b": rhs.shape})

    lu = op.factorization() if reuse else _factorize(op.matrix, op.name)
    x = lu.solve(rhs, trans="T" if transpose else "N")

    matrix = op.matrix.T if transpose else op.matrix
    residual = float(np.linalg.norm(matrix @ x - rhs))
    bound = settings.SOLVER_RESIDUAL_RTOL * (op.norm_inf() * float(np.linalg.norm(x)) + float(np.linalg.norm(rhs)))
    if not np.all(np.isfinite(x)) or residual > bound:
        raise SolverFailureError(
            f"Решение системы '{op.name}' неточно",
            {"operator": op.name, "residual": residual, "bound": bound, "finite": bool(np.all(np.isfinite(x)))},
        )
    return x


def build_rect_mesh(l1: float, l2: float, nx: int, ny: int) -> Mesh:
    """
    Равномерная сетка прямоугольных треугольников на [0, l1]×[0, l2].

    Args:
        l1, l2: Длины сторон
        nx, ny: Число ячеек по осям

    Returns:
        Сетка с (nx+1)(ny+1) узлами и 2·nx·ny элементами
    """
    if not (np.isfinite(l1) and np.isfinite(l2)) or l1 <= 0 or l2 <= 0:
        raise InvalidArgumentError("Размеры области должны быть положительны", {"l1": l1, "l2": l2})
    if isinstance(nx, bool) or isinstance(ny, bool) or int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise InvalidArgumentError("Число ячеек должно быть целым >= 1", {"nx": nx, "ny": ny})
    nx, ny = int(nx), int(ny)

    xs = np.linspace(0.0, l1, nx + 1)
    ys = np.linspace(0.0, l2, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    n0 = (j * (nx + 1) + i).ravel()
    n1 = n0 + 1
    n2 = n0 + nx + 1
    n3 = n2 + 1
    lower = np.column_stack([n0, n1, n3])
    upper = np.column_stack([n0, n3, n2])
    elements = np.empty((2 * nx * ny, 3), dtype=np.int64)
    elements[0::2] = lower
    elements[1::2] = upper

    mesh = Mesh(l1, l2, nx, ny, nodes, elements)
    logger.debug(f"Построена сетка {mesh!r}: {mesh.n_nodes} узлов, {mesh.n_elements} элементов")
    return mesh


def build_mesh_for_resolution(l1: float, l2: float, h: float) -> Mesh:
    """Сетка с шагом не больше h по каждой оси."""
    if h <= 0:
        raise InvalidArgumentError("Шаг сетки должен быть положителен", {"h": h})
    return build_rect_mesh(l1, l2, max(1, int(np.ceil(l1 / h - 1e-12))), max(1, int(np.ceil(l2 / h - 1e-12))))


def _assemble(mesh: Mesh, local: np.ndarray, name: str) -> SparseOperator:
    rows = np.repeat(mesh.elements, 3, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, 3)).ravel()
    matrix = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes)).tocsr()
    # Точная симметрия независимо от порядка суммирования
    matrix = (0.5 * (matrix + matrix.T)).tocsr()
    return SparseOperator(matrix, symmetric=True, name=name)


def assemble_mass(mesh: Mesh) -> SparseOperator:
    """Матрица масс M_ij = ∫ N_i N_j dx."""
    local = mesh.areas[:, None, None] * _ELEMENT_MASS[None, :, :]
    return _assemble(mesh, local, "mass")


def assemble_stiffness(mesh: Mesh) -> SparseOperator:
    """Матрица жёсткости K_ij = ∫ ∇N_i·∇N_j dx."""
    g = mesh.gradients
    local = mesh.areas[:, None, None] * np.einsum("eik,ejk->eij", g, g)
    return _assemble(mesh, local, "stiffness")


def values_at_quadrature(mesh: Mesh, values: np.ndarray) -> np.ndarray:
    """Значения P1-поля в точках квадратуры: (n_elements, n_quad)."""
    return values[mesh.elements] @ QUAD_BARYCENTRIC.T


def quadrature_points(mesh: Mesh) -> np.ndarray:
    """Физические координаты точек квадратуры: (n_elements, n_quad, 2)."""
    return np.einsum("qi,eik->eqk", QUAD_BARYCENTRIC, mesh.nodes[mesh.elements])


def _pointwise(mesh: Mesh, g: Callable[..., Any], fields: Sequence[FieldLike]) -> np.ndarray:
    args = [values_at_quadrature(mesh, as_values(f, mesh)) for f in fields]
    with np.errstate(all="ignore"):
        gq = np.asarray(g(*args), dtype=float)
    gq = np.broadcast_to(gq, (mesh.n_elements, QUAD_WEIGHTS.shape[0]))
    if not np.all(np.isfinite(gq)):
        raise NumericalDomainError("Нелинейная нагрузка содержит нечисловые значения")
    return gq


def assemble_pointwise_load(mesh: Mesh, g: Callable[..., Any], *fields: FieldLike) -> np.ndarray:
    """
    Вектор нагрузки b_i = ∫ g(u_h, ...) N_i dx.

    Args:
        mesh: Сетка
        g: Поточечная функция значений полей в точках квадратуры
        fields: Поля-аргументы g

    Returns:
        Вектор длины n_nodes
    """
    gq = _pointwise(mesh, g, fields)
    local = mesh.areas[:, None] * np.einsum("q,eq,qi->ei", QUAD_WEIGHTS, gq, QUAD_BARYCENTRIC)
    return np.bincount(mesh.elements.ravel(), weights=local.ravel(), minlength=mesh.n_nodes)


def integrate_pointwise(mesh: Mesh, g: Callable[..., Any], *fields: FieldLike) -> float:
    """∫ g(u_h, ...) dx по той же квадратуре."""
    gq = _pointwise(mesh, g, fields)
    return float(mesh.areas @ (gq @ QUAD_WEIGHTS))


def assemble_weighted_mass(mesh: Mesh, g: Callable[..., Any], *fields: FieldLike) -> SparseOperator:
    """Взвешенная матрица масс ∫ g(u_h, ...) N_i N_j dx."""
    gq = _pointwise(mesh, g, fields)
    local = mesh.areas[:, None, None] * np.einsum(
        "q,eq,qi,qj->eij", QUAD_WEIGHTS, gq, QUAD_BARYCENTRIC, QUAD_BARYCENTRIC
    )
    return _assemble(mesh, local, "weighted_mass")


def h1_dual_norm(mesh: Mesh, *residuals: np.ndarray) -> float:
    """
    Норма невязки в (H¹)': √(Σ rᵀ(M+K)⁻¹r) по всем компонентам.

    Для пары невязок (r_u, r_mu) компоненты складываются в квадратуре.
    """
    if not residuals:
        raise InvalidArgumentError("Нужна хотя бы одна невязка")
    total = 0.0
    for r in residuals:
        r = np.asarray(r, dtype=float)
        if r.shape[0] != mesh.n_nodes:
            raise InvalidArgumentError("Размер невязки не совпадает с сеткой", {"n": mesh.n_nodes, "r": r.shape})
        if not np.any(r):
            continue
        total += max(0.0, float(r @ solve_sparse(mesh.h1_operator, r, reuse=True)))
    return float(np.sqrt(total))


class SolveLedger:
    """
    Счётчики линейных решений по категориям PDE.

    N_t = Σ решений Ньютона + сопряжённые + 2·(действия гессиана).
    """

    STATE_NEWTON = "state_newton"
    ADJOINT = "adjoint"
    INCREMENTAL_FORWARD = "incremental_forward"
    INCREMENTAL_ADJOINT = "incremental_adjoint"
    CATEGORIES = (STATE_NEWTON, ADJOINT, INCREMENTAL_FORWARD, INCREMENTAL_ADJOINT)

    def __init__(self) -> None:
        self._counts = {name: 0 for name in self.CATEGORIES}
        self._hessian_actions = 0
        self._lock = threading.Lock()

    def record(self, category: str, n: int = 1) -> None:
        if category not in self._counts:
            raise InvalidArgumentError(f"Неизвестная категория решений: {category}")
        with self._lock:
            self._counts[category] += n

    def record_hessian_action(self) -> None:
        with self._lock:
            self._hessian_actions += 1

    @property
    def hessian_actions(self) -> int:
        return self._hessian_actions

    def count(self, category: str) -> int:
        return self._counts[category]

    @property
    def total(self) -> int:
        return sum(self._counts.values())

    def snapshot(self) -> Dict[str, int]:
        with self._lock:
            data = dict(self._counts)
            data["hessian_actions"] = self._hessian_actions
        data["total"] = sum(data[c] for c in self.CATEGORIES)
        return data

    def identity_holds(self) -> bool:
        """Проверка N_t = Σ Ньютон + сопряжённые + 2·действия гессиана."""
        snap = self.snapshot()
        expected = snap[self.STATE_NEWTON] + snap[self.ADJOINT] + 2 * snap["hessian_actions"]
        return (
            snap["total"] == expected
            and snap[self.INCREMENTAL_FORWARD] == snap["hessian_actions"]
            and snap[self.INCREMENTAL_ADJOINT] == snap["hessian_actions"]
        )
