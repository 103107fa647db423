"""Optimizers and the interleaved theta/phi training loop."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import grad_engine as ge
from .distributions import AnnealSchedule
from .errors import ContractViolation, DomainError, NumericFailure
from .grad_engine import ParameterSet

log = logging.getLogger(__name__)

KINDS = ("sgd", "adam", "rmsprop")
TRACE_COLUMNS = ("step", "phase", "sigma", "loss", "bound_mean", "bound_stderr")


class TrainingAborted(NumericFailure):
    """Raised on a non-finite loss or a numeric failure inside the
    objective. Carries the trace so far and the last
    parameter values that produced a finite loss."""

    def __init__(self, message, trace, snapshot, **diagnostics):
        super().__init__(message, **diagnostics)
        self.trace = trace
        self.snapshot = snapshot


@dataclass
class OptimizerState:
    kind: str
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    decay: float = 0.9
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractViolation(f"optimizer kind must be one of {KINDS}, got {self.kind!r}")
        if self.lr < 0:
            raise ContractViolation("learning rate must be non-negative")


def optimizer_step(state: OptimizerState, params: ParameterSet, grads: dict) -> ParameterSet:
    """Apply one update to every parameter in ``params``.

    ``grads`` must cover every name in ``params``; extra names (gradients of
    the other role) are ignored.
    """
    missing = [k for k in params if k not in grads]
    if missing:
        raise ContractViolation(f"no gradient for {missing}")
    state.step += 1
    t = state.step
    for name in params.names():
        p, g = params[name], np.asarray(grads[name], dtype=np.float64)
        if g.shape != p.shape:
            raise ContractViolation(f"gradient shape {g.shape} != {p.shape} for {name}")
        if state.kind == "sgd":
            params[name] = p - state.lr * g
        elif state.kind == "adam":
            m = state.beta1 * state.m.get(name, 0.0) + (1 - state.beta1) * g
            v = state.beta2 * state.v.get(name, 0.0) + (1 - state.beta2) * g * g
            state.m[name], state.v[name] = m, v
            mhat = m / (1 - state.beta1**t)
            vhat = v / (1 - state.beta2**t)
            params[name] = p - state.lr * mhat / (np.sqrt(vhat) + state.eps)
        else:
            v = state.decay * state.v.get(name, 0.0) + (1 - state.decay) * g * g
            state.v[name] = v
            params[name] = p - state.lr * g / (np.sqrt(v) + state.eps)
    return params


class Optimizer:
    """An :class:`OptimizerState` bound to one parameter set."""

    def __init__(self, params: ParameterSet, kind: str = "adam", lr: float = 1e-3, **hyper):
        self.params = params
        self.state = OptimizerState(kind, lr, **hyper)

    def step(self, grads: dict) -> None:
        optimizer_step(self.state, self.params, grads)


@dataclass(frozen=True)
class LoopSchedule:
    """``phi_steps`` phi-only updates precede each theta update. With
    ``simultaneous`` the theta-step gradient also updates phi. ``sigma`` is
    used when ``anneal`` is None."""

    total_steps: int
    phi_steps: int = 0
    batch_size: int = 100
    anneal: AnnealSchedule | None = None
    sigma: float | None = None
    seed: int = 0
    bound_every: int = 0
    snapshot_every: int = 0
    simultaneous: bool = False

    def __post_init__(self):
        if self.total_steps < 1 or self.phi_steps < 0 or self.batch_size < 1:
            raise ContractViolation("need total_steps >= 1, phi_steps >= 0, batch_size >= 1")

    def sigma_at(self, step: int) -> float | None:
        return self.anneal(step) if self.anneal is not None else self.sigma


@dataclass
class TrainResult:
    trace: list[dict]
    snapshots: list[tuple[int, dict]]


Objective = Callable[[float | None, np.random.Generator], "ge.Tensor"]


def _gradient(objective: Objective, sigma, rng):
    with ge.Tape() as tape:
        try:
            loss = objective(sigma, rng)
        except (DomainError, NumericFailure) as err:
            log.warning("objective failed: %s", err)
            return math.nan, None
        value = float(loss.value)
        if not math.isfinite(value):
            return value, None
        return value, tape.backward(loss)


def interleaved_train(objective: Objective, theta_opt: Optimizer | None,
                      phi_opt: Optimizer | None, schedule: LoopSchedule, rng=None,
                      bound_fn: Callable | None = None,
                      phi_objective: Objective | None = None) -> TrainResult:
    """Per theta step: refresh sigma, run ``phi_steps`` phi-only updates, then
    one theta update.

    ``objective(sigma, rng)`` must build a scalar on the active tape.
    ``bound_fn(sigma, rng)`` returning a BoundEstimate is called every
    ``bound_every`` steps for the trace.
    """
    rng = rng if rng is not None else np.random.default_rng(schedule.seed)
    phi_objective = phi_objective or objective
    trace: list[dict] = []
    snapshots: list[tuple[int, dict]] = []
    sets = [o.params for o in (theta_opt, phi_opt) if o is not None]
    last_good = [ps.snapshot() for ps in sets]

    def evaluate(fn, step, phase, sigma):
        nonlocal last_good
        before = [ps.snapshot() for ps in sets]
        value, grads = _gradient(fn, sigma, rng)
        if grads is None:
            raise TrainingAborted(f"non-finite loss at step {step} ({phase})", trace, last_good,
                                  step=step, phase=phase, loss=value)
        last_good = before
        return value, grads

    for step in range(schedule.total_steps):
        sigma = schedule.sigma_at(step)
        if phi_opt is not None and schedule.phi_steps:
            losses = []
            for _ in range(schedule.phi_steps):
                value, grads = evaluate(phi_objective, step, "phi", sigma)
                losses.append(value)
                phi_opt.step(grads)
            trace.append(_row(step, "phi", sigma, float(np.mean(losses))))
        if theta_opt is not None:
            value, grads = evaluate(objective, step, "theta", sigma)
            theta_opt.step(grads)
            if schedule.simultaneous and phi_opt is not None:
                phi_opt.step(grads)
            row = _row(step, "theta", sigma, value)
            if bound_fn is not None and schedule.bound_every and step % schedule.bound_every == 0:
                est = bound_fn(sigma, rng)
                row["bound_mean"], row["bound_stderr"] = est.value, est.std_error
            trace.append(row)
        if schedule.snapshot_every and (step + 1) % schedule.snapshot_every == 0:
            snapshots.append((step + 1, {k: v.copy() for ps in sets for k, v in ps.items()}))
    return TrainResult(trace, snapshots)


def _row(step, phase, sigma, loss) -> dict:
    return {"step": step, "phase": phase, "sigma": math.nan if sigma is None else sigma,
            "loss": loss, "bound_mean": math.nan, "bound_stderr": math.nan}


def write_trace_csv(rows: list[dict], path, columns=None) -> None:
    columns = list(columns or (rows[0].keys() if rows else TRACE_COLUMNS))
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
