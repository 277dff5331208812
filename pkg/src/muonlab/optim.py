"""Muon and AdamW updates, the LR schedule, gradient clipping, and routing.

The Muon step orthogonalizes the momentum buffer (exactly via SVD or
iteratively via Newton-Schulz), rescales it so the update RMS matches what
AdamW would typically produce, and applies decoupled weight decay:

    M_t = beta * M_{t-1} + (1 - beta) * G_t
    U_t = msign(M_t)
    W_{t+1} = W_t - eta_t * (0.2 * sqrt(n) * U_t + lambda * W_t)

AdamW is the standard bias-corrected baseline with decoupled decay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .errors import DegenerateInputError, NumericError, RangeError, ShapeError
from .linalg import F64, Matrix, svd
from .msign import (
    NsCoefficients,
    OPTIMIZED_COEFFS,
    _ns_orthogonalize,
    msign_exact,
)

_ZERO_MOMENTUM_TOL = 1e-12
_NORM_EPS = 1e-12


@dataclass(frozen=True)
class MuonHyper:
    """Muon hyperparameters.

    ``rms_dim`` picks which dimension enters the 0.2 * sqrt(n) scale:
    'fan-out' uses the second dimension (parameters are fan_in x fan_out),
    'max' uses max(rows, cols). ``momentum_only`` and ``dynamic_rms`` exist
    for ablation cells: the former skips orthogonalization and uses the
    Frobenius-normalized momentum, the latter rescales each update so its
    realized RMS equals ``rms_factor`` exactly.
    """

    eta0: float
    weight_decay: float = 0.1
    beta: float = 0.9
    k_iters: int = 5
    coeffs: NsCoefficients = OPTIMIZED_COEFFS
    rms_factor: float = 0.2
    rms_matching: bool = True
    rms_dim: Literal["fan-out", "max"] = "fan-out"
    exact_msign: bool = False
    momentum_only: bool = False
    dynamic_rms: bool = False

    def __post_init__(self):
        if self.eta0 <= 0.0:
            raise RangeError(f"eta0 must be positive, got {self.eta0}")
        if self.weight_decay < 0.0:
            raise RangeError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if not 0.0 <= self.beta < 1.0:
            raise RangeError(f"beta must lie in [0, 1), got {self.beta}")
        if self.k_iters < 1:
            raise RangeError(f"k_iters must be >= 1, got {self.k_iters}")
        if self.rms_factor <= 0.0:
            raise RangeError(f"rms_factor must be positive, got {self.rms_factor}")
        if self.rms_dim not in ("fan-out", "max"):
            raise RangeError(f"rms_dim must be 'fan-out' or 'max', got {self.rms_dim!r}")


@dataclass(frozen=True)
class MuonState:
    """Per-parameter Muon state: the momentum buffer."""

    momentum: Matrix

    @staticmethod
    def fresh(rows: int, cols: int, dtype=F64) -> "MuonState":
        return MuonState(momentum=Matrix.zeros(rows, cols, dtype=dtype))


@dataclass(frozen=True)
class AdamWState:
    """Per-parameter AdamW state: first/second moments and the step count."""

    m: Matrix
    v: Matrix
    step_count: int
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.m.shape != self.v.shape:
            raise ShapeError("moment buffers must share a shape")
        if self.step_count < 0:
            raise RangeError(f"step_count must be >= 0, got {self.step_count}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise RangeError("betas must lie in [0, 1)")
        if self.eps <= 0.0:
            raise RangeError(f"eps must be positive, got {self.eps}")
        if np.any(self.v.a < 0.0):
            raise NumericError("second moment must be nonnegative")

    @staticmethod
    def fresh(rows: int, cols: int, dtype=F64, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> "AdamWState":
        zero = Matrix.zeros(rows, cols, dtype=dtype)
        return AdamWState(m=zero, v=zero, step_count=0,
                          beta1=beta1, beta2=beta2, eps=eps)


def _muon_direction(momentum: np.ndarray, hyper: MuonHyper) -> np.ndarray:
    """Unscaled update direction from a momentum buffer (array core)."""
    norm = float(np.linalg.norm(momentum))
    if norm < _ZERO_MOMENTUM_TOL:
        return np.zeros_like(momentum)
    if hyper.momentum_only:
        return momentum / norm
    if hyper.exact_msign:
        u = msign_exact(Matrix(momentum.astype(F64)))
        return u.a.astype(momentum.dtype, copy=False)
    return _ns_orthogonalize(momentum, hyper.coeffs, hyper.k_iters,
                             norm_eps=_NORM_EPS)


def _rms_scale(hyper: MuonHyper, shape: tuple[int, int], u: np.ndarray) -> float:
    if not hyper.rms_matching:
        return 1.0
    if hyper.dynamic_rms:
        unorm = float(np.linalg.norm(u))
        if unorm == 0.0:
            return 0.0
        return hyper.rms_factor * math.sqrt(shape[0] * shape[1]) / unorm
    n = shape[1] if hyper.rms_dim == "fan-out" else max(shape)
    return hyper.rms_factor * math.sqrt(n)


def _muon_core(w: np.ndarray, g: np.ndarray, momentum: np.ndarray,
               hyper: MuonHyper, eta_t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One Muon step on raw arrays; returns (new_w, new_momentum, update)."""
    momentum = hyper.beta * momentum + (1.0 - hyper.beta) * g
    u = _muon_direction(momentum, hyper)
    s = _rms_scale(hyper, w.shape, u)
    update = eta_t * (s * u + hyper.weight_decay * w)
    return w - update, momentum, update


def _adamw_core(w: np.ndarray, g: np.ndarray, m: np.ndarray, v: np.ndarray,
                step_count: int, beta1: float, beta2: float, eps: float,
                eta_t: float, weight_decay: float,
                ) -> tuple[np.ndarray, np.ndarray, np.ndarray, int, np.ndarray]:
    """One AdamW step on raw arrays; returns (new_w, m, v, t, update)."""
    t = step_count + 1
    m = beta1 * m + (1.0 - beta1) * g
    v = beta2 * v + (1.0 - beta2) * (g * g)
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    update = eta_t * (m_hat / (np.sqrt(v_hat) + eps) + weight_decay * w)
    return w - update, m, v, t, update


def muon_step(w: Matrix, g: Matrix, state: MuonState, hyper: MuonHyper,
              eta_t: float) -> tuple[Matrix, MuonState]:
    """One Muon update; returns the new weights and the new state.

    When the momentum Frobenius norm falls below 1e-12 the update direction
    is the zero matrix (weight decay still applies).
    """
    if w.shape != g.shape or w.shape != state.momentum.shape:
        raise ShapeError(
            f"w {w.shape}, g {g.shape}, momentum {state.momentum.shape} must match"
        )
    if eta_t < 0.0:
        raise RangeError(f"eta_t must be >= 0, got {eta_t}")
    new_w, new_mom, _ = _muon_core(w.a, g.a, state.momentum.a, hyper, eta_t)
    return Matrix(new_w), MuonState(momentum=Matrix(new_mom))


def adamw_step(w: Matrix, g: Matrix, state: AdamWState, eta_t: float,
               weight_decay: float) -> tuple[Matrix, AdamWState]:
    """One bias-corrected AdamW update with decoupled weight decay."""
    if w.shape != g.shape or w.shape != state.m.shape:
        raise ShapeError(f"w {w.shape}, g {g.shape}, state {state.m.shape} must match")
    if eta_t < 0.0:
        raise RangeError(f"eta_t must be >= 0, got {eta_t}")
    if weight_decay < 0.0:
        raise RangeError(f"weight_decay must be >= 0, got {weight_decay}")
    new_w, m, v, t, _ = _adamw_core(
        w.a, g.a, state.m.a, state.v.a, state.step_count,
        state.beta1, state.beta2, state.eps, eta_t, weight_decay,
    )
    new_state = AdamWState(m=Matrix(m), v=Matrix(v), step_count=t,
                           beta1=state.beta1, beta2=state.beta2, eps=state.eps)
    return Matrix(new_w), new_state


def shampoo_direction(g: Matrix) -> np.ndarray:
    """(G G^T)^{-1/4} G (G^T G)^{-1/4} via the SVD oracle (f64).

    Fourth roots are Moore-Penrose on the thin factors; the input must have
    full rank. Exists to cross-check the beta = 0 equivalence with msign.
    """
    res = svd(g)
    if res.rank < min(g.rows, g.cols):
        raise DegenerateInputError(
            f"shampoo oracle requires full rank, got rank {res.rank} for {g.shape}"
        )
    s_inv_quarter = np.asarray(res.singular_values, dtype=F64) ** -0.5
    u, v = res.u.a, res.v.a
    left = (u * s_inv_quarter) @ u.T
    right = (v * s_inv_quarter) @ v.T
    return left @ g.a.astype(F64) @ right


def shampoo_step_oracle(w: Matrix, g: Matrix, eta_t: float) -> Matrix:
    """One Shampoo step with exact inverse fourth roots (no preconditioner state)."""
    if w.shape != g.shape:
        raise ShapeError(f"w {w.shape} and g {g.shape} must match")
    if eta_t < 0.0:
        raise RangeError(f"eta_t must be >= 0, got {eta_t}")
    return Matrix(w.a.astype(F64) - eta_t * shampoo_direction(g), dtype=w.dtype)


SCHEDULE_KINDS = ("cosine-with-linear-warmup", "inverse-sqrt")


@dataclass(frozen=True)
class Schedule:
    """Per-step learning rate: cosine decay with linear warmup, or eta0/sqrt(t).

    ``warmup_fraction`` accepts [0, 0.02]; 0.005 to 0.02 is the recommended
    band, 0 disables warmup. The inverse-sqrt kind ignores warmup and exists
    for the convergence-rate check.
    """

    eta0: float
    total_steps: int
    warmup_fraction: float = 0.01
    kind: str = "cosine-with-linear-warmup"
    eta_min_fraction: float = 0.0

    def __post_init__(self):
        if self.eta0 <= 0.0:
            raise RangeError(f"eta0 must be positive, got {self.eta0}")
        if self.total_steps < 1:
            raise RangeError(f"total_steps must be >= 1, got {self.total_steps}")
        if not 0.0 <= self.warmup_fraction <= 0.02:
            raise RangeError(
                f"warmup_fraction must lie in [0, 0.02], got {self.warmup_fraction}"
            )
        if not 0.0 <= self.eta_min_fraction <= 0.01:
            raise RangeError(
                f"eta_min_fraction must lie in [0, 0.01], got {self.eta_min_fraction}"
            )
        if self.kind not in SCHEDULE_KINDS:
            raise RangeError(f"unknown schedule kind {self.kind!r}")

    @property
    def warmup_steps(self) -> int:
        return int(round(self.warmup_fraction * self.total_steps))


def schedule_eta(sched: Schedule, step: int) -> float:
    """Learning rate at an integer step in [0, total_steps]."""
    if not 0 <= step <= sched.total_steps:
        raise RangeError(
            f"step must lie in [0, {sched.total_steps}], got {step}"
        )
    if sched.kind == "inverse-sqrt":
        return sched.eta0 / math.sqrt(max(step, 1))
    ws = sched.warmup_steps
    if ws > 0 and step <= ws:
        return sched.eta0 * (step / ws)
    if sched.total_steps == ws:
        return sched.eta0
    progress = (step - ws) / (sched.total_steps - ws)
    eta_min = sched.eta0 * sched.eta_min_fraction
    return eta_min + (sched.eta0 - eta_min) * 0.5 * (1.0 + math.cos(math.pi * progress))


def clip_global_norm(grads: Sequence[Matrix], max_norm: float) -> list[Matrix]:
    """Jointly rescale gradients so their global L2 norm is at most max_norm."""
    if max_norm <= 0.0:
        raise RangeError(f"max_norm must be positive, got {max_norm}")
    total = math.sqrt(sum(float(np.sum(g.a.astype(F64) ** 2)) for g in grads))
    if total <= max_norm:
        return list(grads)
    factor = max_norm / total
    return [Matrix(g.a * factor) for g in grads]


def _clip_grad_arrays(grads: dict[str, np.ndarray], max_norm: float,
                      ) -> tuple[dict[str, np.ndarray], float]:
    """Array-core global clip; returns (clipped grads, pre-clip global norm)."""
    total = math.sqrt(sum(float(np.sum(g.astype(F64) ** 2)) for g in grads.values()))
    if total <= max_norm or total == 0.0:
        return grads, total
    factor = max_norm / total
    return {k: g * factor for k, g in grads.items()}, total


def route_parameter(shape) -> Literal["muon", "adamw"]:
    """Muon for genuinely 2-D parameters, AdamW for vectors and degenerate mats.

    Accepts an int (vector length) or a shape tuple. 1-D parameters and
    1 x n / m x 1 matrices route to AdamW; anything higher-dimensional is
    unsupported at desk scale.
    """
    if isinstance(shape, (int, np.integer)):
        return "adamw"
    shape = tuple(shape)
    if len(shape) == 1:
        return "adamw"
    if len(shape) == 2:
        return "muon" if shape[0] >= 2 and shape[1] >= 2 else "adamw"
    raise ShapeError(f"unsupported parameter shape {shape}")


class OptimizerBank:
    """Per-parameter optimizer states with shape-based routing.

    ``matrix_rule`` picks the optimizer for 2-D parameters ('muon' or
    'adamw'); vectors always run AdamW. Vector parameters take no weight
    decay (biases are conventionally undecayed), matrix parameters take the
    decay from their hyperparameters.
    """

    def __init__(self, shapes: dict[str, tuple[int, ...]],
                 matrix_rule: Literal["muon", "adamw"],
                 muon: MuonHyper | None = None,
                 weight_decay: float = 0.0,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 dtype=F64):
        if matrix_rule not in ("muon", "adamw"):
            raise RangeError(f"matrix_rule must be 'muon' or 'adamw', got {matrix_rule!r}")
        if matrix_rule == "muon" and muon is None:
            raise RangeError("matrix_rule 'muon' requires MuonHyper")
        self.muon = muon
        self.weight_decay = weight_decay
        self._betas = (beta1, beta2, eps)
        self._route: dict[str, str] = {}
        self._mom: dict[str, np.ndarray] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self._t: dict[str, int] = {}
        self.last_update_rms = 0.0
        for name, shape in shapes.items():
            route = route_parameter(shape)
            if route == "muon" and matrix_rule == "muon":
                self._route[name] = "muon"
                self._mom[name] = np.zeros(shape, dtype=dtype)
            else:
                self._route[name] = "adamw"
                self._m[name] = np.zeros(shape, dtype=dtype)
                self._v[name] = np.zeros(shape, dtype=dtype)
                self._t[name] = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
             eta_t: float) -> dict[str, np.ndarray]:
        """Apply one update to every parameter; returns the new parameter dict."""
        beta1, beta2, eps = self._betas
        new_params: dict[str, np.ndarray] = {}
        update_sq = 0.0
        count = 0
        for name, w in params.items():
            g = grads[name]
            if self._route[name] == "muon":
                new_w, new_mom, update = _muon_core(w, g, self._mom[name],
                                                    self.muon, eta_t)
                self._mom[name] = new_mom
            else:
                decay = self.weight_decay if np.ndim(w) == 2 and min(w.shape) >= 2 else 0.0
                new_w, m, v, t, update = _adamw_core(
                    w, g, self._m[name], self._v[name], self._t[name],
                    beta1, beta2, eps, eta_t, decay,
                )
                self._m[name], self._v[name], self._t[name] = m, v, t
            new_params[name] = new_w
            update_sq += float(np.sum(update.astype(F64) ** 2))
            count += update.size
        self.last_update_rms = math.sqrt(update_sq / count) if count else 0.0
        return new_params

    def state_scalar_count(self) -> int:
        """Total auxiliary scalars held: momentum entries plus both moments."""
        total = sum(buf.size for buf in self._mom.values())
        total += sum(2 * buf.size for buf in self._m.values())
        return total


@dataclass(frozen=True)
class OptimizerSpec:
    """JSON-friendly optimizer description used by run configurations.

    ``kind`` selects the optimizer for matrix parameters; vector parameters
    always run AdamW. The Muon-specific fields are ignored for AdamW runs
    and vice versa.
    """

    kind: Literal["muon", "adamw"] = "muon"
    eta0: float = 0.02
    weight_decay: float = 0.1
    beta: float = 0.9
    k_iters: int = 5
    coeffs: str = "optimized"
    rms_factor: float = 0.2
    rms_matching: bool = True
    rms_dim: str = "fan-out"
    exact_msign: bool = False
    momentum_only: bool = False
    dynamic_rms: bool = False
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("muon", "adamw"):
            raise RangeError(f"optimizer kind must be 'muon' or 'adamw', got {self.kind!r}")

    def muon_hyper(self) -> MuonHyper:
        from .msign import coefficient_preset

        return MuonHyper(
            eta0=self.eta0,
            weight_decay=self.weight_decay,
            beta=self.beta,
            k_iters=self.k_iters,
            coeffs=coefficient_preset(self.coeffs),
            rms_factor=self.rms_factor,
            rms_matching=self.rms_matching,
            rms_dim=self.rms_dim,
            exact_msign=self.exact_msign,
            momentum_only=self.momentum_only,
            dynamic_rms=self.dynamic_rms,
        )
