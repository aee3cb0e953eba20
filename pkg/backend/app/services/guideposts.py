"""
Параметризация поля подложки метками.

f(x) = −Σ_i τ(x3)·φ(|x − r_i|²), φ(t) = w·exp(−t/2b²).
Круги двигаются по (x1, x2), полоски только по x1. Производные по вектору
дизайна - узловые интерполянты полей производных формы; с функциональными
градиентами они спариваются через матрицу масс.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import InvalidArgumentError, NumericalDomainError
from app.schemas.guidepost import GuidepostConfig, GuidepostShape, PenaltyParams
from app.schemas.model import ModelParams
from app.services.fem import FieldLike, Mesh, NodalField, as_values

logger = logging.getLogger(__name__)

PenaltyValue = Tuple[float, np.ndarray, np.ndarray]


@dataclass(frozen=True, eq=False)
class DesignVariables:
    """
    Плоский вектор координат меток.

    Круги идут парами (r1_1, r2_1, r1_2, r2_2, …), у полоски одна координата x1.
    Положения могут выйти из области: штраф стенок мягко возвращает их.
    """

    z: np.ndarray
    shape: GuidepostShape = GuidepostShape.STRIP

    def __post_init__(self) -> None:
        object.__setattr__(self, "shape", GuidepostShape(self.shape))
        z = np.array(self.z, dtype=float).reshape(-1)
        if z.size == 0 or z.size % self.dim:
            raise InvalidArgumentError(
                f"Длина вектора дизайна {z.size} не согласуется с формой '{self.shape.value}'"
            )
        if not np.all(np.isfinite(z)):
            raise InvalidArgumentError("Вектор дизайна содержит нечисловые значения")
        z.setflags(write=False)
        object.__setattr__(self, "z", z)

    @classmethod
    def from_positions(cls, positions: Sequence, shape: GuidepostShape) -> "DesignVariables":
        return cls(np.asarray(positions, dtype=float).reshape(-1), shape)

    @property
    def dim(self) -> int:
        return 2 if self.shape == GuidepostShape.CIRCLE else 1

    @property
    def count(self) -> int:
        return self.z.size // self.dim

    @property
    def positions(self) -> np.ndarray:
        """Центры меток массивом (count, dim)."""
        return self.z.reshape(self.count, self.dim)

    def with_z(self, z: np.ndarray) -> "DesignVariables":
        return DesignVariables(z, self.shape)

    def __len__(self) -> int:
        return self.z.size


def _check(z: DesignVariables, cfg: GuidepostConfig) -> None:
    if z.shape != cfg.shape or z.count != cfg.count:
        raise InvalidArgumentError(
            "Вектор дизайна не соответствует конфигурации меток",
            {"shape": z.shape.value, "count": z.count, "expected": [cfg.shape.value, cfg.count]},
        )


def shape_function(t: np.ndarray, w: float, b: float, order: int = 0) -> np.ndarray:
    """φ(t) = w·exp(−t/2b²) и две её производные по t."""
    phi = w * np.exp(-t / (2.0 * b * b))
    if order == 0:
        return phi
    if order == 1:
        return -phi / (2.0 * b * b)
    if order == 2:
        return phi / (4.0 * b**4)
    raise InvalidArgumentError(f"Порядок производной функции формы должен быть 0..2, получено {order}")


def decay_profile(x3: np.ndarray, d_s: float) -> np.ndarray:
    """τ(x3) = exp(−x3²/2d_s²)."""
    if not d_s > 0:
        raise InvalidArgumentError("Длина затухания должна быть положительна", {"d_s": d_s})
    x3 = np.asarray(x3, dtype=float)
    return np.exp(-(x3 * x3) / (2.0 * d_s * d_s))


def decay_length(c_s: float, p: ModelParams) -> float:
    """d_s = 12√3·c_s²·ε / √(σ(1 − m²))."""
    if c_s <= 0:
        raise InvalidArgumentError("c_s должно быть положительно", {"c_s": c_s})
    if p.sigma <= 0:
        raise InvalidArgumentError("Длина затухания не определена при σ = 0")
    return float(12.0 * np.sqrt(3.0) * c_s**2 * p.eps / np.sqrt(p.sigma * (1.0 - p.m**2)))


def _offsets(z: DesignVariables, points: np.ndarray) -> np.ndarray:
    # r_i − x для каждой метки и точки: (count, n_points, dim)
    coords = points[:, : z.dim]
    return z.positions[:, None, :] - coords[None, :, :]


def substrate_at_points(
    z: DesignVariables,
    cfg: GuidepostConfig,
    points: np.ndarray,
    params: Optional[ModelParams] = None,
) -> np.ndarray:
    """
    Значения f в произвольных точках.

    Точки задаются как (x1, x2) или (x1, x2, x3). При третьем столбце и
    выключенном ``cfg.thin_film`` значение умножается на τ(x3) с длиной
    затухания ``decay_length(cfg.c_s, params)``.
    """
    _check(z, cfg)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] not in (2, 3):
        raise InvalidArgumentError("У точек должно быть 2 или 3 координаты", {"shape": points.shape})
    diff = _offsets(z, points)
    field = -shape_function(np.sum(diff * diff, axis=2), cfg.w, cfg.b).sum(axis=0)
    if points.shape[1] == 3 and not cfg.thin_film:
        if params is None:
            raise InvalidArgumentError("Для затухания по x3 нужны параметры модели")
        field = field * decay_profile(points[:, 2], decay_length(cfg.c_s, params))
    return field


def eval_substrate(z: DesignVariables, cfg: GuidepostConfig, mesh: Mesh) -> NodalField:
    """Узловой интерполянт f на двумерной сетке (τ = 1)."""
    return NodalField(mesh, substrate_at_points(z, cfg, mesh.nodes), copy=False)


def shape_derivative_fields(z: DesignVariables, cfg: GuidepostConfig, mesh: Mesh) -> np.ndarray:
    """
    Узловые поля ∂f/∂z_k, строка на компоненту дизайна: (n_design, n_nodes).

    ∂f/∂r_i = −2φ'(|x − r_i|²)(r_i − x).
    """
    _check(z, cfg)
    diff = _offsets(z, mesh.nodes)
    dphi = shape_function(np.sum(diff * diff, axis=2), cfg.w, cfg.b, order=1)
    fields = -2.0 * dphi[:, :, None] * diff
    return np.ascontiguousarray(fields.transpose(0, 2, 1).reshape(len(z), mesh.n_nodes))


def shape_second_derivative_fields(z: DesignVariables, cfg: GuidepostConfig, mesh: Mesh) -> np.ndarray:
    """
    Узловые поля ∂²f/∂r_i² по меткам: (count, dim, dim, n_nodes).

    ∂²f/∂r_i² = −(4φ''(r_i − x)(r_i − x)ᵀ + 2φ'I); смешанные блоки разных меток равны нулю.
    """
    _check(z, cfg)
    diff = _offsets(z, mesh.nodes)
    t = np.sum(diff * diff, axis=2)
    dphi = shape_function(t, cfg.w, cfg.b, order=1)
    ddphi = shape_function(t, cfg.w, cfg.b, order=2)
    outer = np.einsum("inc,ind->icdn", diff, diff)
    eye = np.eye(z.dim)[None, :, :, None]
    return -(4.0 * ddphi[:, None, None, :] * outer + 2.0 * dphi[:, None, None, :] * eye)


def grad_design(z: DesignVariables, cfg: GuidepostConfig, grad_f: FieldLike, mesh: Mesh) -> np.ndarray:
    """∂Q/∂z_k = ⟨D_fQ, ∂f/∂z_k⟩ через матрицу масс."""
    g = as_values(grad_f, mesh)
    return shape_derivative_fields(z, cfg, mesh) @ (mesh.mass @ g)


def hessian_action_design(
    z: DesignVariables,
    cfg: GuidepostConfig,
    z_hat: np.ndarray,
    grad_f: FieldLike,
    hessian_action_f: Callable[[NodalField], NodalField],
    mesh: Mesh,
) -> np.ndarray:
    """
    Действие гессиана Q в пространстве дизайна.

    [Hẑ]_i = ⟨D²_fQ (Σ_j ∂f/∂r_j·r̂_j), ∂f/∂r_i⟩ + ⟨D_fQ, ∂²f/∂r_i² r̂_i⟩.
    ``hessian_action_f`` вызывается ровно один раз.
    """
    z_hat = np.asarray(z_hat, dtype=float).reshape(-1)
    if z_hat.size != len(z):
        raise InvalidArgumentError("Длина направления не совпадает с вектором дизайна")
    if not np.any(z_hat):
        return np.zeros(len(z))

    first = shape_derivative_fields(z, cfg, mesh)
    direction = NodalField(mesh, z_hat @ first, copy=False)
    h_f = as_values(hessian_action_f(direction), mesh)
    action = first @ (mesh.mass @ h_f)

    m_grad = mesh.mass @ as_values(grad_f, mesh)
    second = shape_second_derivative_fields(z, cfg, mesh) @ m_grad  # (count, dim, dim)
    action += np.einsum("icd,id->ic", second, z_hat.reshape(z.count, z.dim)).reshape(-1)
    return action


def penalty_repel(z: DesignVariables, alpha: float) -> PenaltyValue:
    """
    Штраф отталкивания α·Σ_{i<j} ψ(|r_i − r_j|²), ψ(t) = 1/t.

    Сумма по неупорядоченным парам, градиент α·Σ_{j≠i} 2ψ'(·)(r_i − r_j).
    Внедиагональные блоки гессиана −α(4ψ''ddᵀ + 2ψ'I); сумма блоков в строке равна нулю.

    Raises:
        NumericalDomainError: две метки совпали
    """
    n, dim = z.count, z.dim
    pos = z.positions
    value = 0.0
    grad = np.zeros((n, dim))
    hess = np.zeros((n, dim, n, dim))
    eye = np.eye(dim)
    for i in range(n):
        for j in range(i + 1, n):
            d = pos[i] - pos[j]
            t = float(d @ d)
            if t == 0.0:
                raise NumericalDomainError(
                    "Метки совпадают", {"i": i, "j": j, "position": pos[i].tolist()}
                )
            psi, dpsi, ddpsi = 1.0 / t, -1.0 / t**2, 2.0 / t**3
            value += psi
            grad[i] += 2.0 * dpsi * d
            grad[j] -= 2.0 * dpsi * d
            block = 4.0 * ddpsi * np.outer(d, d) + 2.0 * dpsi * eye
            hess[i, :, i, :] += block
            hess[j, :, j, :] += block
            hess[i, :, j, :] -= block
            hess[j, :, i, :] -= block
    return alpha * value, alpha * grad.reshape(-1), alpha * hess.reshape(n * dim, n * dim)


def penalty_wall(z: DesignVariables, a1: float, a2: float, l1: float, l2: float) -> PenaltyValue:
    """Экспоненциальный штраф стенок, удерживающий метки в (0, l1)×(0, l2); у полосок только x1."""
    pos = z.positions
    value = 0.0
    grad = np.zeros_like(pos)
    diag = np.zeros_like(pos)
    for c, (a, length) in enumerate([(a1, l1), (a2, l2)][: z.dim]):
        r = pos[:, c]
        low, high = np.exp(-a * r), np.exp(-a * (length - r))
        value += float(np.sum(low + high))
        grad[:, c] = -a * (low - high)
        diag[:, c] = a * a * (low + high)
    return value, grad.reshape(-1), np.diag(diag.reshape(-1))


def penalty_total(z: DesignVariables, penalty: PenaltyParams, l1: float, l2: float) -> PenaltyValue:
    """P_repel + P_wall; ноль при выключенных штрафах."""
    n = len(z)
    if not penalty.enabled:
        return 0.0, np.zeros(n), np.zeros((n, n))
    rv, rg, rh = penalty_repel(z, penalty.alpha)
    wv, wg, wh = penalty_wall(z, penalty.a1, penalty.a2, l1, l2)
    return rv + wv, rg + wg, rh + wh
