"""Per-vector GRASTA and GROUSE updates and a stream runner.

Each step takes an immutable :class:`TrackerState` and returns a new one, so
a state can be replayed or branched freely.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple

import numpy as np

from .admm import AdmmParams, AdmmSolution, lad_projector, solve_lad
from .core import (
    GradientSketch,
    PartialObservation,
    as_basis,
    compute_gradient,
    geodesic_step,
    orthonormality_error,
    reorthonormalize,
    subspace_distance,
    zero_pad,
)
from .errors import DegeneracyError, GrastaError, InputValidationError
from .seeding import substream
from .stepsize import StepSizeParams, StepSizeState, update_step

_logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrackerConfig:
    ambient_dim: int
    rank: int
    admm: AdmmParams = AdmmParams()
    step: StepSizeParams = StepSizeParams()
    mode: str = "grasta"
    grouse_eta: float = 0.02
    # Largest geodesic rotation (radians) GRASTA applies per vector; the rule's
    # eta is kept as-is in the trace.
    max_angle: float = 0.5
    reortho_every: int = 500

    def __post_init__(self):
        if not 1 <= self.rank < self.ambient_dim:
            raise InputValidationError(f"need 1 <= rank < n, got rank={self.rank}, n={self.ambient_dim}")
        if self.mode not in ("grasta", "grouse"):
            raise InputValidationError(f"unknown mode {self.mode!r}")
        if not self.grouse_eta > 0:
            raise InputValidationError("grouse_eta must be positive")
        if not self.max_angle > 0:
            raise InputValidationError("max_angle must be positive")
        if self.reortho_every < 1:
            raise InputValidationError("reortho_every must be >= 1")


@dataclass(frozen=True)
class TrackerState:
    basis: np.ndarray
    step_state: StepSizeState
    t: int = 0
    geodesic_steps: int = 0
    # Orthonormality drift measured just before the latest reorthonormalization.
    drift_before_reortho: float = 0.0


class StepResult(NamedTuple):
    state: TrackerState
    solution: AdmmSolution | None
    eta: float


def init_state(config: TrackerConfig, seed: int = 0, basis=None) -> TrackerState:
    """Fresh state; ``U0`` is a seeded Gaussian matrix orthonormalized unless given."""
    if basis is None:
        rng = substream(seed, "init")
        basis = reorthonormalize(rng.standard_normal((config.ambient_dim, config.rank)))
    basis = as_basis(basis)
    if basis.shape != (config.ambient_dim, config.rank):
        raise InputValidationError(f"initial basis has shape {basis.shape}")
    return TrackerState(basis.copy(), StepSizeState.initial(config.step))


def _advance_basis(state: TrackerState, new_basis: np.ndarray, config: TrackerConfig) -> dict:
    steps = state.geodesic_steps + 1
    drift = state.drift_before_reortho
    if steps % config.reortho_every == 0:
        drift = orthonormality_error(new_basis)
        new_basis = reorthonormalize(new_basis)
    return dict(basis=new_basis, geodesic_steps=steps, drift_before_reortho=drift)


def grasta_step(state: TrackerState, obs: PartialObservation, config: TrackerConfig,
                warm: AdmmSolution | None = None) -> StepResult:
    """One GRASTA update: ADMM fit, rank-one gradient, adaptive step, geodesic move."""
    U = state.basis
    if obs.ambient_dim != U.shape[0]:
        raise InputValidationError(f"observation has n={obs.ambient_dim}, tracker n={U.shape[0]}")
    try:
        sol = solve_lad(U[obs.indices], obs.values, config.admm, warm)
    except DegeneracyError as exc:
        _logger.info("t=%d: skipping vector (%s)", state.t, exc)
        return StepResult(replace(state, t=state.t + 1), None, 0.0)

    grad = compute_gradient(U, obs, sol, config.admm.rho)
    eta, step_state = update_step(state.step_state, grad, config.step)
    fields = dict(step_state=step_state, t=state.t + 1)
    if grad.sigma > 0 and np.linalg.norm(grad.weight) > 0:
        applied = min(eta, config.max_angle / grad.sigma)
        fields.update(_advance_basis(state, geodesic_step(U, grad, applied), config))
    return StepResult(replace(state, **fields), sol, eta)


def grouse_step(state: TrackerState, obs: PartialObservation, config: TrackerConfig) -> StepResult:
    """One GROUSE update: least-squares fit and a constant-size geodesic step."""
    U = state.basis
    n = U.shape[0]
    if obs.ambient_dim != n:
        raise InputValidationError(f"observation has n={obs.ambient_dim}, tracker n={n}")
    U_omega = U[obs.indices]
    try:
        w = lad_projector(U_omega) @ obs.values
    except DegeneracyError as exc:
        _logger.info("t=%d: skipping vector (%s)", state.t, exc)
        return StepResult(replace(state, t=state.t + 1), None, 0.0)

    resid = zero_pad(obs.values - U_omega @ w, obs.indices, n)
    sigma = float(np.linalg.norm(resid) * np.linalg.norm(w))
    sol = AdmmSolution(np.zeros(len(obs)), w, np.zeros(len(obs)), 0, True, 0.0, 0.0)
    fields = dict(t=state.t + 1)
    if sigma > 0:
        grad = GradientSketch(-resid, w, sigma)
        fields.update(_advance_basis(state, geodesic_step(U, grad, config.grouse_eta), config))
    return StepResult(replace(state, **fields), sol, config.grouse_eta)


def step(state: TrackerState, obs: PartialObservation, config: TrackerConfig) -> StepResult:
    if config.mode == "grouse":
        return grouse_step(state, obs, config)
    return grasta_step(state, obs, config)


def rel_err_vector(v_hat, v) -> float:
    """``||v_hat - v||_2 / ||v||_2``."""
    v_hat = np.asarray(v_hat, dtype=float)
    v = np.asarray(v, dtype=float)
    if v_hat.shape != v.shape:
        raise InputValidationError(f"shape mismatch {v_hat.shape} vs {v.shape}")
    denom = np.linalg.norm(v)
    if denom == 0:
        raise InputValidationError("reference vector has zero norm")
    return float(np.linalg.norm(v_hat - v) / denom)


@dataclass
class TraceRecord:
    t: int
    rel_err: float
    eta: float
    admm_iters: int
    converged: bool
    wall_ns: int


TRACE_COLUMNS = ("t", "rel_err", "eta", "admm_iters", "converged", "wall_ns")


@dataclass
class TraceLog:
    records: list[TraceRecord] = field(default_factory=list)
    events: list[str] = field(default_factory=list)

    def append(self, rec: TraceRecord) -> None:
        self.records.append(rec)

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def total_seconds(self) -> float:
        return sum(r.wall_ns for r in self.records) / 1e9

    def fps(self) -> float:
        secs = self.total_seconds()
        return len(self.records) / secs if secs > 0 else float("inf")

    def to_csv(self, path, header: Iterable[str] = (), timing: bool = True) -> None:
        with open(path, "w", newline="") as fh:
            for line in header:
                fh.write(f"# {line}\n")
            for ev in self.events:
                fh.write(f"# event: {ev}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRACE_COLUMNS)
            for r in self.records:
                writer.writerow([
                    r.t, repr(float(r.rel_err)), repr(float(r.eta)), r.admm_iters,
                    int(r.converged), r.wall_ns if timing else 0,
                ])

    @classmethod
    def from_csv(cls, path) -> "TraceLog":
        log = cls()
        with open(path, newline="") as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
        for row in csv.DictReader(lines):
            log.append(TraceRecord(
                int(row["t"]), float(row["rel_err"]), float(row["eta"]),
                int(row["admm_iters"]), bool(int(row["converged"])), int(row["wall_ns"]),
            ))
        return log


def _truth_error(truth, state_before: TrackerState, state_after: TrackerState,
                 sol: AdmmSolution | None) -> float:
    if truth is None:
        return math.nan
    truth = np.asarray(truth, dtype=float)
    if truth.ndim == 2:
        return subspace_distance(state_after.basis, truth)
    if sol is None:
        return math.nan
    return rel_err_vector(state_before.basis @ sol.weight, truth)


def track_stream(config: TrackerConfig, observations: Iterable[PartialObservation],
                 truth: Iterable | None = None, state: TrackerState | None = None,
                 seed: int = 0) -> tuple[TrackerState, TraceLog]:
    """Run the configured tracker over a stream and record a trace.

    ``truth`` items are either clean full vectors (RelErr of ``U_t w*``, the
    fit made before the update) or true bases (subspace distance after the
    update). Per-step failures are logged as events; the stream continues.
    """
    if state is None:
        state = init_state(config, seed)
    log = TraceLog()
    truth_iter = iter(truth) if truth is not None else None
    for obs in observations:
        ref = next(truth_iter) if truth_iter is not None else None
        t = state.t
        start = time.perf_counter_ns()
        try:
            result = step(state, obs, config)
        except GrastaError as exc:
            log.events.append(f"t={t}: {exc}")
            state = replace(state, t=t + 1)
            log.append(TraceRecord(t, math.nan, 0.0, 0, False, time.perf_counter_ns() - start))
            continue
        elapsed = time.perf_counter_ns() - start
        if result.solution is None:
            log.events.append(f"t={t}: degenerate observation skipped")
        err = _truth_error(ref, state, result.state, result.solution)
        sol = result.solution
        log.append(TraceRecord(
            t, err, result.eta, sol.iterations if sol else 0,
            bool(sol.converged) if sol else False, elapsed,
        ))
        state = result.state
    return state, log
