"""Training loop and the experiment drivers built on top of it.

A single `train` call is a pure function of its `TrainConfig` (every random
draw flows from the config seed), which is what makes the higher-level
drivers trustworthy: batch-size sweeps with per-batch learning-rate
re-tuning and token-consumption ratios, the eleven-cell component ablation
grid, the width-telescoping hyperparameter search, and the empirical
convergence-rate fit.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, RangeError
from .linalg import F64, Rng, dtype_of
from .optim import (
    OptimizerBank,
    OptimizerSpec,
    SCHEDULE_KINDS,
    Schedule,
    _clip_grad_arrays,
    schedule_eta,
)
from .tasks import MlpSpec, QuadraticSpec, TaskSpec, build_task

STOP_RULES = ("fixed-steps", "tokens-to-target")

# Five-point learning-rate grid used for per-cell re-tuning in sweeps,
# spanning a factor of 16 around the configured eta0.
ETA_TUNING_MULTIPLIERS = (0.25, 0.5, 1.0, 2.0, 4.0)

_DIVERGENCE_FACTOR = 10.0


@dataclass(frozen=True)
class TrainConfig:
    """Complete, seedable description of one training run.

    "Tokens" means samples: one training sample consumed is one token, and
    every eval row satisfies tokens_seen = step * batch_size (also under
    ``full_batch``, which swaps the sampled rows for the whole training set
    without changing the accounting).

    ``total_steps`` must be a multiple of ``eval_every`` so that the eval
    grid, and therefore the smoothed target-crossing detector, does not
    depend on where the run happens to stop.
    """

    task: TaskSpec
    optimizer: OptimizerSpec
    batch_size: int = 32
    total_steps: int = 200
    seed: int = 0
    precision: str = "f64"
    schedule_kind: str = "cosine-with-linear-warmup"
    warmup_fraction: float = 0.01
    eta_min_fraction: float = 0.0
    target_loss: float | None = None
    stop_rule: str = "fixed-steps"
    eval_every: int = 10
    full_batch: bool = False
    smooth_window: int = 5
    spike_ratio: float = 1.25
    clip_norm: float = 1.0
    record_wall_time: bool = False
    run_id: str = ""

    def __post_init__(self):
        if not isinstance(self.task, (QuadraticSpec, MlpSpec)):
            raise ConfigError(f"unknown task spec {type(self.task).__name__}")
        if not isinstance(self.optimizer, OptimizerSpec):
            raise ConfigError("optimizer must be an OptimizerSpec")
        if self.batch_size < 1:
            raise RangeError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.total_steps < 1:
            raise RangeError(f"total_steps must be >= 1, got {self.total_steps}")
        if self.eval_every < 1:
            raise RangeError(f"eval_every must be >= 1, got {self.eval_every}")
        if self.total_steps % self.eval_every != 0:
            raise RangeError(
                f"total_steps ({self.total_steps}) must be a multiple of "
                f"eval_every ({self.eval_every})"
            )
        dtype_of(self.precision)
        if self.schedule_kind not in SCHEDULE_KINDS:
            raise RangeError(f"unknown schedule kind {self.schedule_kind!r}")
        if self.stop_rule not in STOP_RULES:
            raise RangeError(f"stop_rule must be one of {STOP_RULES}, got {self.stop_rule!r}")
        if self.stop_rule == "tokens-to-target" and self.target_loss is None:
            raise ConfigError("stop_rule 'tokens-to-target' requires target_loss")
        if self.target_loss is not None and not math.isfinite(self.target_loss):
            raise RangeError("target_loss must be finite")
        if self.smooth_window < 1:
            raise RangeError(f"smooth_window must be >= 1, got {self.smooth_window}")
        if self.spike_ratio <= 1.0:
            raise RangeError(f"spike_ratio must exceed 1, got {self.spike_ratio}")
        if self.clip_norm <= 0.0:
            raise RangeError(f"clip_norm must be positive, got {self.clip_norm}")

    @property
    def resolved_run_id(self) -> str:
        if self.run_id:
            return self.run_id
        return (f"{self.task.kind}-{self.optimizer.kind}"
                f"-b{self.batch_size}-s{self.seed}")


@dataclass(frozen=True)
class EvalRow:
    """One evaluation snapshot; mirrors one run-CSV data row."""

    step: int
    tokens_seen: int
    train_loss: float
    val_loss: float
    grad_global_norm: float
    update_rms: float
    eta_t: float
    wall_ms: float


@dataclass(frozen=True)
class RunRecord:
    """Everything one run produced: eval rows plus the derived summary.

    ``terminated`` is one of 'completed' (ran the full step budget),
    'target-reached' (stopped at the smoothed target crossing), or
    'diverged'. ``tokens_to_target`` is the tokens_seen of the first eval
    row whose trailing-mean val loss reached the target, independent of the
    stop rule; None when no crossing happened.
    """

    run_id: str
    optimizer: str
    batch_size: int
    rows: tuple[EvalRow, ...]
    tokens_to_target: int | None
    terminated: str
    loss_spike_count: int
    final_val_loss: float
    state_scalar_count: int
    config: TrainConfig


def _make_bank(spec: OptimizerSpec, shapes: dict[str, tuple[int, ...]], dtype) -> OptimizerBank:
    if spec.kind == "muon":
        return OptimizerBank(shapes, "muon", muon=spec.muon_hyper(),
                             weight_decay=spec.weight_decay,
                             beta1=spec.beta1, beta2=spec.beta2, eps=spec.eps,
                             dtype=dtype)
    return OptimizerBank(shapes, "adamw", weight_decay=spec.weight_decay,
                         beta1=spec.beta1, beta2=spec.beta2, eps=spec.eps,
                         dtype=dtype)


def _objective_grad_norm(task, params: dict[str, np.ndarray]) -> float:
    grads = task.objective_grads(params)
    return math.sqrt(sum(float(np.sum(g.astype(F64) ** 2)) for g in grads.values()))


def _spike_count(vals: Sequence[float], ratio: float) -> int:
    count = 0
    running_min = math.inf
    for v in vals:
        if v > ratio * running_min:
            count += 1
        if v < running_min:
            running_min = v
    return count


def train(config: TrainConfig) -> RunRecord:
    """Run one training loop; deterministic given the config.

    Per step: draw a batch (or take the full set), compute the loss and
    gradients, inject task noise if configured, clip the global gradient
    norm, and apply one optimizer step. Every ``eval_every`` steps an eval
    row records the full train/val losses, the exact full-objective
    gradient norm, the realized update RMS, and the learning rate used.

    Divergence (non-finite loss/gradient/parameter, or an eval val loss
    that is NaN or above 10x the initial one) terminates the run with the
    'diverged' flag instead of raising.
    """
    dtype = dtype_of(config.precision)
    root = Rng(config.seed)
    task = build_task(config.task, root.child("data"))
    params = task.init_params(root.child("init"), dtype=dtype)
    batch_rng = root.child("batch")
    noise_rng = root.child("noise")
    shapes = {name: arr.shape for name, arr in params.items()}
    bank = _make_bank(config.optimizer, shapes, dtype)
    sched = Schedule(eta0=config.optimizer.eta0, total_steps=config.total_steps,
                     warmup_fraction=config.warmup_fraction,
                     kind=config.schedule_kind,
                     eta_min_fraction=config.eta_min_fraction)
    t0 = time.perf_counter()

    def snapshot(step: int, eta: float) -> EvalRow:
        with np.errstate(all="ignore"):
            train_loss = float(task.train_loss(params))
            val_loss = float(task.val_loss(params))
            grad_norm = _objective_grad_norm(task, params)
        wall = (time.perf_counter() - t0) * 1e3 if config.record_wall_time else 0.0
        return EvalRow(step=step, tokens_seen=step * config.batch_size,
                       train_loss=train_loss, val_loss=val_loss,
                       grad_global_norm=grad_norm,
                       update_rms=bank.last_update_rms, eta_t=eta,
                       wall_ms=wall)

    rows = [snapshot(0, schedule_eta(sched, 0))]
    initial_val = rows[0].val_loss
    tokens_to_target: int | None = None
    terminated = "completed"
    noise_sigma = float(task.noise_sigma)

    if (config.target_loss is not None
            and rows[0].val_loss <= config.target_loss):
        tokens_to_target = 0
        if config.stop_rule == "tokens-to-target":
            terminated = "target-reached"

    if terminated == "completed":
        for step in range(1, config.total_steps + 1):
            eta = schedule_eta(sched, step)
            idx = (None if config.full_batch
                   else task.sample_batch(batch_rng, config.batch_size))
            with np.errstate(all="ignore"):
                loss, grads = task.batch_loss_grad(params, idx)
                if noise_sigma > 0.0:
                    for name in grads:
                        g = grads[name]
                        grads[name] = (g + noise_sigma
                                       * noise_rng.normal(g.shape)).astype(g.dtype,
                                                                           copy=False)
                finite = math.isfinite(loss) and all(
                    np.all(np.isfinite(g)) for g in grads.values()
                )
                if finite:
                    grads, _ = _clip_grad_arrays(grads, config.clip_norm)
                    params = bank.step(params, grads, eta)
                    finite = all(np.all(np.isfinite(p)) for p in params.values())
            if not finite:
                terminated = "diverged"
                break
            if step % config.eval_every != 0:
                continue
            row = snapshot(step, eta)
            rows.append(row)
            if (not math.isfinite(row.val_loss)
                    or row.val_loss > _DIVERGENCE_FACTOR * initial_val):
                terminated = "diverged"
                break
            if config.target_loss is not None and tokens_to_target is None:
                window = rows[-config.smooth_window:]
                smoothed = sum(r.val_loss for r in window) / len(window)
                if smoothed <= config.target_loss:
                    tokens_to_target = row.tokens_seen
                    if config.stop_rule == "tokens-to-target":
                        terminated = "target-reached"
                        break

    vals = [r.val_loss for r in rows]
    spikes = _spike_count(vals, config.spike_ratio) if len(rows) >= 2 else 0
    return RunRecord(
        run_id=config.resolved_run_id,
        optimizer=config.optimizer.kind,
        batch_size=config.batch_size,
        rows=tuple(rows),
        tokens_to_target=tokens_to_target,
        terminated=terminated,
        loss_spike_count=spikes,
        final_val_loss=rows[-1].val_loss,
        state_scalar_count=bank.state_scalar_count(),
        config=config,
    )


def loss_spike_count(record: RunRecord, spike_ratio: float = 1.25) -> int:
    """Count eval rows whose val loss exceeds spike_ratio times the running min.

    The first row is never a spike (there is no prior minimum to exceed).
    """
    if spike_ratio <= 1.0:
        raise RangeError(f"spike_ratio must exceed 1, got {spike_ratio}")
    if len(record.rows) < 2:
        raise RangeError("loss_spike_count needs at least 2 eval rows")
    return _spike_count([r.val_loss for r in record.rows], spike_ratio)


def rate_check(record: RunRecord) -> float:
    """Fitted slope of log running-mean squared gradient norm versus log step.

    Uses the exact full-objective gradient norms of the eval rows (step 0
    excluded). Requires the inverse-sqrt schedule, because the decay-rate
    statement this checks assumes eta_t = eta0 / sqrt(t); a run under
    cosine decay would measure the schedule, not the optimizer.
    """
    if record.config.schedule_kind != "inverse-sqrt":
        raise RangeError(
            "rate_check requires schedule_kind 'inverse-sqrt', got "
            f"{record.config.schedule_kind!r}"
        )
    rows = [r for r in record.rows if r.step >= 1]
    if len(rows) < 20:
        raise RangeError(f"rate_check needs >= 20 eval rows, got {len(rows)}")
    g2 = np.array([r.grad_global_norm for r in rows], dtype=F64) ** 2
    running_mean = np.cumsum(g2) / np.arange(1, len(rows) + 1, dtype=F64)
    x = np.log(np.array([r.step for r in rows], dtype=F64))
    y = np.log(np.maximum(running_mean, 1e-300))
    slope = float(np.polyfit(x, y, 1)[0])
    return slope


def _run_many(configs: Sequence[TrainConfig], workers: int) -> list[RunRecord]:
    if workers < 1:
        raise RangeError(f"workers must be >= 1, got {workers}")
    if workers == 1 or len(configs) <= 1:
        return [train(c) for c in configs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(train, configs))


# ---------------------------------------------------------------------------
# Batch-size sweep with token-consumption ratios
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepCell:
    """One (batch size, optimizer) measurement after learning-rate re-tuning."""

    batch_size: int
    optimizer: str
    run_id: str
    seed: int
    eta0: float
    tokens_to_target: int | None
    terminated: str
    final_val_loss: float


@dataclass(frozen=True)
class SweepResult:
    """Token consumptions per (B, optimizer) and the derived per-B ratios.

    ``ratios[B]`` = AdamW tokens-to-target / Muon tokens-to-target, present
    only where both cells reached the target.
    ``ratio_monotone_nondecreasing`` reports whether the ratio sequence is
    nondecreasing over ascending B (None when fewer than two ratios exist).
    """

    batch_grid: tuple[int, ...]
    target_loss: float
    cells: tuple[SweepCell, ...]
    ratios: dict[int, float]
    ratio_monotone_nondecreasing: bool | None
    records: dict[str, RunRecord] = field(repr=False)
    provenance: dict = field(repr=False)


def _sweep_cell(base: TrainConfig, kind: str, batch_size: int,
                cell_seed: int) -> tuple[SweepCell, RunRecord, dict]:
    """Tune eta on the five-point grid, then measure tokens-to-target.

    Tuning runs are fixed-step; each records the tokens at which its
    smoothed val loss first crossed the target, if ever. The winning eta is
    the one that crossed earliest, with final val loss breaking ties and
    ranking etas that never crossed. This keeps the tuning criterion aligned
    with the token-consumption quantity the sweep reports.
    """
    spec = replace(base.optimizer, kind=kind)
    tuning: dict[str, dict] = {}
    best_eta = spec.eta0
    best_score = (math.inf, math.inf)
    for mult in ETA_TUNING_MULTIPLIERS:
        eta = spec.eta0 * mult
        cfg = replace(base, batch_size=batch_size, seed=cell_seed,
                      optimizer=replace(spec, eta0=eta),
                      stop_rule="fixed-steps",
                      run_id=f"tune-{kind}-b{batch_size}-x{mult}")
        rec = train(cfg)
        final = rec.final_val_loss
        tuning[repr(mult)] = {"tokens_to_target": rec.tokens_to_target,
                              "final_val_loss": final}
        crossed = rec.tokens_to_target
        score = (math.inf if crossed is None else float(crossed),
                 final if math.isfinite(final) else math.inf)
        if score < best_score:
            best_score = score
            best_eta = eta
    run_id = f"{kind}-b{batch_size}"
    measured = train(replace(base, batch_size=batch_size, seed=cell_seed,
                             optimizer=replace(spec, eta0=best_eta),
                             stop_rule="tokens-to-target", run_id=run_id))
    cell = SweepCell(batch_size=batch_size, optimizer=kind, run_id=run_id,
                     seed=cell_seed, eta0=best_eta,
                     tokens_to_target=measured.tokens_to_target,
                     terminated=measured.terminated,
                     final_val_loss=measured.final_val_loss)
    prov = {"run_id": run_id, "optimizer": kind, "batch_size": batch_size,
            "seed": cell_seed, "eta0": best_eta, "eta_tuning": tuning,
            "tokens_to_target": measured.tokens_to_target,
            "terminated": measured.terminated}
    return cell, measured, prov


def batch_sweep(base: TrainConfig, batch_grid: Sequence[int],
                workers: int = 1) -> SweepResult:
    """Measure tokens-to-target for both optimizers over a batch-size grid.

    Each (B, optimizer) cell re-tunes the peak learning rate on a five-point
    log grid (tuning runs are fixed-step and judged by earliest target
    crossing, then final val loss), then measures tokens-to-target with the
    tuned eta. Cell seeds derive from the base seed by cell tag, so cells
    are independent and may run in parallel without changing any number.
    """
    if not batch_grid:
        raise RangeError("batch_grid must be nonempty")
    if any(b < 1 for b in batch_grid):
        raise RangeError(f"batch sizes must be >= 1, got {tuple(batch_grid)}")
    if base.target_loss is None:
        raise ConfigError("batch_sweep requires target_loss in the base config")
    grid = tuple(int(b) for b in batch_grid)
    root = Rng(base.seed)
    jobs: list[Callable[[], tuple[SweepCell, RunRecord, dict]]] = []
    for b in grid:
        for kind in ("muon", "adamw"):
            seed = root.child(f"cell-{kind}-b{b}").seed
            jobs.append(lambda b=b, kind=kind, seed=seed:
                        _sweep_cell(base, kind, b, seed))
    if workers == 1 or len(jobs) <= 1:
        outcomes = [job() for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(lambda job: job(), jobs))

    cells = tuple(out[0] for out in outcomes)
    records = {out[1].run_id: out[1] for out in outcomes}
    by_key = {(c.batch_size, c.optimizer): c for c in cells}
    ratios: dict[int, float] = {}
    for b in grid:
        mu = by_key[(b, "muon")].tokens_to_target
        ad = by_key[(b, "adamw")].tokens_to_target
        if mu is not None and ad is not None and mu > 0:
            ratios[b] = ad / mu
    present = [ratios[b] for b in sorted(ratios)]
    monotone = None
    if len(present) >= 2:
        monotone = all(later >= earlier
                       for earlier, later in zip(present, present[1:]))
    provenance = {
        "base_seed": base.seed,
        "target_loss": base.target_loss,
        "smooth_window": base.smooth_window,
        "batch_grid": list(grid),
        "eta_multipliers": list(ETA_TUNING_MULTIPLIERS),
        "total_steps": base.total_steps,
        "task": base.task.kind,
        "cells": [out[2] for out in outcomes],
    }
    return SweepResult(batch_grid=grid, target_loss=base.target_loss,
                       cells=cells, ratios=ratios,
                       ratio_monotone_nondecreasing=monotone,
                       records=records, provenance=provenance)


# ---------------------------------------------------------------------------
# Component ablation grid
# ---------------------------------------------------------------------------

ABLATION_CELLS = (
    "full",
    "momentum-only",
    "newton-schulz-k3",
    "newton-schulz-k10",
    "taylor-coefficients",
    "no-weight-decay",
    "no-rms-matching",
    "dynamic-rms",
    "batch-quarter",
    "batch-1x",
    "batch-4x",
)


@dataclass(frozen=True)
class AblationCell:
    """Summary line for one ablation cell (one table row)."""

    name: str
    run_id: str
    batch_size: int
    final_val_loss: float
    steps_to_target: int | None
    loss_spike_count: int
    state_scalar_count: int
    terminated: str


@dataclass(frozen=True)
class AblationTable:
    cells: tuple[AblationCell, ...]
    records: dict[str, RunRecord] = field(repr=False)
    provenance: dict = field(repr=False)


def _ablation_config(base: TrainConfig, name: str) -> TrainConfig:
    spec = base.optimizer
    batch = base.batch_size
    if name == "full":
        pass
    elif name == "momentum-only":
        spec = replace(spec, momentum_only=True)
    elif name == "newton-schulz-k3":
        spec = replace(spec, k_iters=3)
    elif name == "newton-schulz-k10":
        spec = replace(spec, k_iters=10)
    elif name == "taylor-coefficients":
        spec = replace(spec, coeffs="taylor")
    elif name == "no-weight-decay":
        spec = replace(spec, weight_decay=0.0)
    elif name == "no-rms-matching":
        spec = replace(spec, rms_matching=False)
    elif name == "dynamic-rms":
        spec = replace(spec, dynamic_rms=True)
    elif name == "batch-quarter":
        batch = max(1, base.batch_size // 4)
    elif name == "batch-1x":
        batch = base.batch_size
    elif name == "batch-4x":
        batch = base.batch_size * 4
    else:
        raise ConfigError(f"unknown ablation cell {name!r}")
    return replace(base, optimizer=spec, batch_size=batch,
                   stop_rule="fixed-steps", run_id=f"ablate-{name}")


def ablate(base: TrainConfig, axes: Sequence[str] | None = None,
           workers: int = 1) -> AblationTable:
    """Run the component-ablation grid and summarize one row per cell.

    All cells share the base seed, so they see identical data, identical
    initialization, and identical batch draws (where batch sizes agree);
    only the ablated component differs. The batch-1x cell is deliberately
    identical to the full cell, which doubles as an internal determinism
    cross-check of the grid itself. Cells run the full step budget;
    steps-to-target is derived from the first smoothed target crossing.
    """
    if base.optimizer.kind != "muon":
        raise ConfigError("ablate expects a muon optimizer as the base")
    if base.target_loss is None:
        raise ConfigError("ablate requires target_loss for steps-to-target")
    names = ABLATION_CELLS if axes is None else tuple(axes)
    if not names:
        raise RangeError("ablation axes must be nonempty")
    unknown = [n for n in names if n not in ABLATION_CELLS]
    if unknown:
        raise ConfigError(f"unknown ablation cells {unknown}")
    configs = [_ablation_config(base, name) for name in names]
    results = _run_many(configs, workers)
    cells = []
    records = {}
    for name, rec in zip(names, results):
        steps = (None if rec.tokens_to_target is None
                 else rec.tokens_to_target // rec.batch_size)
        cells.append(AblationCell(
            name=name, run_id=rec.run_id, batch_size=rec.batch_size,
            final_val_loss=rec.final_val_loss, steps_to_target=steps,
            loss_spike_count=rec.loss_spike_count,
            state_scalar_count=rec.state_scalar_count,
            terminated=rec.terminated,
        ))
        records[rec.run_id] = rec
    provenance = {"seed": base.seed, "target_loss": base.target_loss,
                  "base_batch_size": base.batch_size,
                  "total_steps": base.total_steps,
                  "cells": list(names)}
    return AblationTable(cells=tuple(cells), records=records,
                         provenance=provenance)


# ---------------------------------------------------------------------------
# Width-telescoping hyperparameter sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TelescopeGrid:
    """Log-spaced (eta, weight decay) search grid, symmetric around a center.

    ``points`` values per axis span center * 10^[-extent, +extent]; extents
    are measured in decades and halve at each width doubling.
    """

    eta_center: float
    lambda_center: float
    eta_extent: float = 0.5
    lambda_extent: float = 0.5
    points: int = 3

    def __post_init__(self):
        if self.points < 1:
            raise ConfigError(f"grid needs >= 1 point per axis, got {self.points}")
        if self.eta_center <= 0.0 or self.lambda_center <= 0.0:
            raise RangeError("grid centers must be positive")
        if self.eta_extent <= 0.0 or self.lambda_extent <= 0.0:
            raise RangeError("grid extents must be positive")


def _log_grid(center: float, extent: float, points: int) -> tuple[float, ...]:
    if points == 1:
        return (center,)
    lo = math.log10(center) - extent
    hi = math.log10(center) + extent
    return tuple(float(10.0 ** e) for e in np.linspace(lo, hi, points))


@dataclass(frozen=True)
class TelescopeStage:
    """One width's grid search: the grid, the loss surface, and the winner."""

    width: int
    etas: tuple[float, ...]
    lambdas: tuple[float, ...]
    val_losses: tuple[tuple[float, ...], ...]
    best_eta: float
    best_lambda: float
    best_val_loss: float


@dataclass(frozen=True)
class TelescopeResult:
    start_width: int
    end_width: int
    stages: tuple[TelescopeStage, ...]
    provenance: dict = field(repr=False)


def telescope_sweep(base: TrainConfig, start_width: int, end_width: int,
                    grid: TelescopeGrid, workers: int = 1) -> TelescopeResult:
    """Search (eta, weight decay) while doubling the MLP hidden width.

    Stage one searches the full grid at ``start_width``; each doubling
    recenters the grid on the previous winner and halves both extents
    (two hyperparameters, so the grid area shrinks fourfold per stage).
    Total cost is one constant-size grid per doubling. Ties on the loss
    surface resolve to the first cell in (eta, lambda) row-major order.
    """
    if not isinstance(base.task, MlpSpec):
        raise ConfigError("telescope_sweep requires an MLP task")
    if start_width < 2:
        raise RangeError(f"start_width must be >= 2, got {start_width}")
    doublings = end_width / start_width
    j = round(math.log2(doublings)) if doublings > 0 else -1
    if j < 1 or start_width * 2 ** j != end_width:
        raise RangeError(
            f"end_width must be start_width * 2^j with j >= 1, got "
            f"{start_width} -> {end_width}"
        )

    depth = len(base.task.hidden)
    eta_c, lam_c = grid.eta_center, grid.lambda_center
    eta_e, lam_e = grid.eta_extent, grid.lambda_extent
    stages = []
    width = start_width
    while width <= end_width:
        etas = _log_grid(eta_c, eta_e, grid.points)
        lams = _log_grid(lam_c, lam_e, grid.points)
        task = replace(base.task, hidden=(width,) * depth)
        configs = []
        for eta in etas:
            for lam in lams:
                spec = replace(base.optimizer, eta0=eta, weight_decay=lam)
                configs.append(replace(
                    base, task=task, optimizer=spec, stop_rule="fixed-steps",
                    run_id=f"telescope-w{width}-eta{eta:.6g}-lam{lam:.6g}",
                ))
        results = _run_many(configs, workers)
        flat = np.array([r.final_val_loss for r in results], dtype=F64)
        flat = np.where(np.isfinite(flat), flat, np.inf)
        best = int(np.argmin(flat))
        bi, bj = divmod(best, len(lams))
        losses = tuple(
            tuple(float(flat[i * len(lams) + j2]) for j2 in range(len(lams)))
            for i in range(len(etas))
        )
        stages.append(TelescopeStage(
            width=width, etas=etas, lambdas=lams, val_losses=losses,
            best_eta=etas[bi], best_lambda=lams[bj],
            best_val_loss=float(flat[best]),
        ))
        eta_c, lam_c = etas[bi], lams[bj]
        eta_e *= 0.5
        lam_e *= 0.5
        width *= 2

    provenance = {"seed": base.seed, "total_steps": base.total_steps,
                  "batch_size": base.batch_size, "points": grid.points,
                  "initial_extents": [grid.eta_extent, grid.lambda_extent],
                  "widths": [s.width for s in stages]}
    return TelescopeResult(start_width=start_width, end_width=end_width,
                           stages=tuple(stages), provenance=provenance)


__all__ = [
    "ABLATION_CELLS",
    "AblationCell",
    "AblationTable",
    "ETA_TUNING_MULTIPLIERS",
    "EvalRow",
    "RunRecord",
    "STOP_RULES",
    "SweepCell",
    "SweepResult",
    "TelescopeGrid",
    "TelescopeResult",
    "TelescopeStage",
    "TrainConfig",
    "ablate",
    "batch_sweep",
    "loss_spike_count",
    "rate_check",
    "telescope_sweep",
    "train",
]
