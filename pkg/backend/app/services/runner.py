"""
Команды CLI: simulate, optimize, assess, sweep.

Каждая команда получает проверенный RunConfig и каталог вывода,
пишет поля/журналы/отчёты через field_io и возвращает код выхода.
"""
import logging
from pathlib import Path
from typing import List, Optional

import numpy as np
from pydantic import ValidationError

from app.core.config import settings
from app.core.exceptions import ConfigError, InvalidArgumentError
from app.schemas.guidepost import GuidepostConfig, GuidepostShape
from app.schemas.model import ModelParams
from app.schemas.optimizer import OptIterationRecord
from app.schemas.reports import SweepRow
from app.schemas.run import MeshSpec, RunConfig
from app.services.design_problem import DesignEvaluation, GuidepostDesignProblem
from app.services.energy import design_objective
from app.services.fem import Mesh, NodalField, build_mesh_for_resolution, build_rect_mesh
from app.services.field_io import (
    JsonlWriter,
    format_validation_error,
    read_design_csv,
    write_design_csv,
    write_field_csv,
    write_json,
    write_mesh_csv,
    write_sweep_csv,
)
from app.services.guideposts import DesignVariables, eval_substrate, penalty_repel
from app.services.optimizer import DesignOptimizer
from app.services.random_field import sample_initial_guess
from app.services.robustness import RobustnessAssessor
from app.services.state_solver import StateSolver
from app.services.targets import build_target

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2

# Допуск кратности диапазона развёртки шагу
_GRID_RTOL = 1e-9


def apply_overrides(
    config: RunConfig,
    seed: Optional[int] = None,
    jobs: Optional[int] = None,
    out: Optional[Path] = None,
) -> RunConfig:
    """Флаги --seed/--jobs/--out поверх значений файла конфигурации."""
    if seed is None and jobs is None and out is None:
        return config
    data = config.model_dump()
    if seed is not None:
        data["sampler"]["seed"] = seed
    if jobs is not None:
        data["jobs"] = jobs
    if out is not None:
        data["output_dir"] = Path(out)
    # Повторная валидация проверяет ограничения seed и jobs
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Некорректные флаги командной строки: {format_validation_error(e)}") from e


def output_dir(config: RunConfig, command: str) -> Path:
    path = Path(config.output_dir) if config.output_dir is not None else Path(settings.OUTPUT_DIR) / command
    path.mkdir(parents=True, exist_ok=True)
    return path


def build_mesh(spec: MeshSpec, params: ModelParams) -> Mesh:
    """Сетка по nx/ny либо по шагу h (по умолчанию ε/2)."""
    if spec.nx is not None:
        mesh = build_rect_mesh(spec.l1, spec.l2, spec.nx, spec.ny)
    else:
        mesh = build_mesh_for_resolution(spec.l1, spec.l2, spec.h or params.eps / 2.0)
    logger.info(f"Сетка {spec.l1}×{spec.l2}: {mesh.nx}×{mesh.ny} ячеек, {mesh.n_nodes} узлов")
    return mesh


def default_design(cfg: GuidepostConfig, l1: float, l2: float) -> DesignVariables:
    """Равномерная расстановка: полоски в l1·(i+½)/N, круги в ((i+½)·l1/N, l2/2)."""
    centres = l1 * (np.arange(cfg.count) + 0.5) / cfg.count
    if cfg.shape == GuidepostShape.STRIP:
        return DesignVariables(centres, GuidepostShape.STRIP)
    positions = np.column_stack([centres, np.full(cfg.count, l2 / 2.0)])
    return DesignVariables.from_positions(positions, GuidepostShape.CIRCLE)


def initial_design(config: RunConfig, mesh: Mesh) -> DesignVariables:
    if config.initial_design is not None:
        return DesignVariables(np.array(config.initial_design), config.guideposts.shape)
    return default_design(config.guideposts, mesh.l1, mesh.l2)


def initial_state(config: RunConfig, mesh: Mesh, homogeneous: bool) -> NodalField:
    if homogeneous:
        return NodalField.constant(mesh, config.model.m)
    return sample_initial_guess(mesh, config.model, config.sampler)


def _write_state_fields(out: Path, mesh: Mesh, **fields) -> None:
    write_mesh_csv(out, mesh)
    for name, field in fields.items():
        write_field_csv(out / f"{name}.csv", field, mesh)


def cmd_simulate(config: RunConfig) -> int:
    """
    Одно решение задачи состояния.

    Подложка строится по initial_design, если он задан; иначе f ≡ 0.
    Пишет u0.csv, u.csv, mu.csv, f.csv, сетку и report.json.
    """
    out = output_dir(config, "simulate")
    mesh = build_mesh(config.mesh, config.model)
    if config.initial_design is not None:
        f = eval_substrate(initial_design(config, mesh), config.guideposts, mesh)
    else:
        f = NodalField.zeros(mesh)
    u0 = initial_state(config, mesh, config.homogeneous_start)

    solver = StateSolver(mesh, config.model)
    state = solver.solve_state(
        f, u0, tol=config.optimizer.state_tol, max_iter=config.optimizer.state_max_iter
    )
    _write_state_fields(out, mesh, u0=u0, u=state.u, mu=state.mu, f=f)
    report = {
        "F": state.energy,
        "residual": state.final_residual,
        "iterations": state.iterations,
        "converged": state.converged,
        "seed": config.sampler.seed,
        "state": state.model_dump(mode="json"),
    }
    write_json(out / "report.json", report)
    logger.info(f"simulate: результаты записаны в {out}")
    return EXIT_OK


def cmd_optimize(config: RunConfig) -> int:
    """
    Оптимизация положений меток под целевую морфологию.

    Returns:
        0 при ‖∇J‖ ≤ g_tol, 2 при исчерпании max_outer
    """
    out = output_dir(config, "optimize")
    opt = config.optimizer
    mesh = build_mesh(config.mesh, config.model)
    u_d = build_target(mesh, config.target)
    z0 = initial_design(config, mesh)
    problem = GuidepostDesignProblem(
        mesh,
        config.model,
        config.guideposts,
        opt.penalty,
        u_d,
        use_objective=opt.use_objective,
        state_tol=opt.state_tol,
        state_max_iter=opt.state_max_iter,
    )
    u_init = initial_state(config, mesh, opt.initial_state == "homogeneous")
    write_mesh_csv(out, mesh)
    write_field_csv(out / "u_d.csv", u_d, mesh)
    write_design_csv(out / "design_initial.csv", z0)

    with JsonlWriter(out / "trace.jsonl") as trace_writer:

        def on_iteration(record: OptIterationRecord, ev: DesignEvaluation) -> None:
            trace_writer.write(record.trace_row())
            if opt.snapshot_every and record.k % opt.snapshot_every == 0 and ev.state is not None:
                write_field_csv(out / "snapshots" / f"u_{record.k:04d}.csv", ev.state.u, mesh)

        result = DesignOptimizer(problem, opt).optimize(z0, u_init, callback=on_iteration)

    trace, ev = result.trace, result.evaluation
    write_design_csv(out / "design.csv", result.z)
    write_field_csv(out / "f.csv", ev.f, mesh)
    if result.state is not None:
        write_field_csv(out / "u.csv", result.state.u, mesh)
        write_field_csv(out / "mu.csv", result.state.mu, mesh)
    summary = {
        "converged": trace.converged,
        "stop_reason": trace.stop_reason.value if trace.stop_reason else None,
        "iterations": trace.iterations,
        "total_inner_iters": trace.total_inner_iters,
        "solve_counts": trace.solve_counts,
        "solve_identity_holds": trace.solve_identity_holds,
        "J": ev.J,
        "Q": ev.Q,
        "P": ev.P,
        "grad_norm": ev.grad_norm,
        "z": result.z.z,
        "shape": result.z.shape.value,
    }
    write_json(out / "summary.json", summary)
    if not trace.solve_identity_holds:
        logger.warning(f"Тождество учёта решений нарушено: {trace.solve_counts}")
    logger.info(f"optimize: результаты записаны в {out}")
    return EXIT_OK if trace.converged else EXIT_NOT_CONVERGED


def _design_path(config: RunConfig) -> Path:
    if config.assess.design_path is not None:
        return Path(config.assess.design_path)
    base = Path(config.output_dir) if config.output_dir is not None else Path(settings.OUTPUT_DIR) / "optimize"
    fallback = base / "design.csv"
    if fallback.is_file():
        return fallback
    raise ConfigError("Не задан файл дизайна: укажите assess.design_path", {"searched": str(fallback)})


def cmd_assess(config: RunConfig) -> int:
    """
    Оценка устойчивости дизайна по N случайным начальным приближениям.

    Зёрна: sampler.seed, sampler.seed + 1, ...; состояние минимальной
    энергии экспортируется как u_min_energy.csv.
    """
    z = read_design_csv(_design_path(config))
    out = output_dir(config, "assess")
    mesh = build_mesh(config.mesh, config.model)
    u_d = build_target(mesh, config.target)
    jobs = config.jobs or settings.DEFAULT_JOBS
    assessor = RobustnessAssessor(
        mesh,
        config.model,
        config.guideposts,
        config.sampler,
        jobs=jobs,
        state_tol=config.optimizer.state_tol,
        state_max_iter=config.optimizer.state_max_iter,
    )
    result = assessor.assess(z, u_d, config.assess.n_samples, config.sampler.seed)
    write_json(out / "assessment.json", result.report)
    _write_state_fields(out, mesh, u_min_energy=result.best_state.u, f=result.f, u_d=u_d)
    stats = result.report.stats
    logger.info(
        f"assess: Q mean={stats.mean:.6g} std={stats.std:.3g} по {stats.count} выборкам; "
        f"минимум энергии у seed={result.report.min_energy_seed}"
    )
    return EXIT_OK


def sweep_grid(l_s_min: float, l_s_max: float, step: float) -> np.ndarray:
    """
    Сетка l_s = l_s_min + k·step, k = 0..n, с точным правым концом.

    Raises:
        InvalidArgumentError: шаг не положителен или диапазон не кратен шагу
    """
    if step <= 0.0:
        raise InvalidArgumentError("Шаг развёртки должен быть положителен", {"step": step})
    ratio = (l_s_max - l_s_min) / step
    n = int(round(ratio))
    if n < 0 or abs(ratio - n) > _GRID_RTOL * max(1.0, abs(ratio)):
        raise InvalidArgumentError(
            "Диапазон развёртки не кратен шагу",
            {"l_s_min": l_s_min, "l_s_max": l_s_max, "step": step},
        )
    grid = l_s_min + step * np.arange(n + 1)
    grid[-1] = l_s_max
    return grid


def run_sweep(
    solver: StateSolver,
    config: RunConfig,
    u_d: NodalField,
    u0: NodalField,
    mode: Optional[str] = None,
) -> List[SweepRow]:
    """
    Решает состояние для каждого l_s сетки развёртки.

    mode (по умолчанию config.sweep.mode): continuation передаёт в шаг k+1
    равновесие шага k как есть, fixed каждый раз стартует из u0.
    """
    spec = config.sweep
    mode = spec.mode if mode is None else mode
    mesh = solver.mesh
    alpha = config.optimizer.penalty.alpha
    offsets = np.arange(config.guideposts.count, dtype=float)

    rows: List[SweepRow] = []
    u_prev = u0
    for l_s in sweep_grid(spec.l_s_min, spec.l_s_max, spec.step):
        z = DesignVariables(spec.left + offsets * l_s, GuidepostShape.STRIP)
        f = eval_substrate(z, config.guideposts, mesh)
        u_init = u_prev if mode == "continuation" else u0
        state = solver.solve_state(
            f, u_init, tol=config.optimizer.state_tol, max_iter=config.optimizer.state_max_iter
        )
        q = design_objective(state.u, u_d, mesh)
        p_repel = penalty_repel(z, alpha)[0]
        rows.append(
            SweepRow(
                l_s=float(l_s), Q=q, P_repel=p_repel, J=q + p_repel,
                converged=state.converged, iterations=state.iterations,
            )
        )
        logger.info(f"l_s={l_s:.4f}: Q={q:.6g} P_repel={p_repel:.6g}{'' if state.converged else ' (не сошлось)'}")
        u_prev = state.u
    return rows


def cmd_sweep(config: RunConfig) -> int:
    """
    Развёртка Q по шагу l_s равноотстоящих полосок (левая в sweep.left).

    В режиме continuation каждое решение стартует из равновесия
    предыдущего шага; в режиме fixed всегда из одного u⁽⁰⁾.
    """
    if config.guideposts.shape != GuidepostShape.STRIP:
        raise ConfigError("Развёртка поддерживает только полоски", {"shape": config.guideposts.shape.value})
    spec = config.sweep
    out = output_dir(config, "sweep")
    mesh = build_mesh(config.mesh, config.model)
    u_d = build_target(mesh, config.target)
    u0 = initial_state(config, mesh, config.homogeneous_start)

    rows = run_sweep(StateSolver(mesh, config.model), config, u_d, u0)
    write_sweep_csv(out / "sweep.csv", rows)
    q = np.array([r.Q for r in rows])
    jump = float(np.max(np.abs(np.diff(q)))) if q.size > 1 else 0.0
    logger.info(f"sweep ({spec.mode}): {len(rows)} точек, max |ΔQ| = {jump:.4g}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "optimize": cmd_optimize,
    "assess": cmd_assess,
    "sweep": cmd_sweep,
}
