"""Tracking protocols shared by the CLI and the test suites."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .errors import InputValidationError
from .seeding import substream
from .synth import (
    GenModelParams,
    GeneratedVector,
    random_orthonormal,
    rotating_subspace,
    sudden_change_schedule,
    vector_stream,
)
from .tracker import TraceLog, TrackerConfig, TrackerState, track_stream

PROTOCOLS = ("stationary", "rotating", "sudden")


@dataclass
class ProtocolRun:
    state: TrackerState | None
    trace: TraceLog
    # per-step noise relative power ||zeta|| / ||U_true w||
    n_rel: list[float] = field(default_factory=list)

    def rel_err(self) -> np.ndarray:
        return self.trace.column("rel_err") if len(self.trace) else np.zeros(0)

    def final_rel_err(self, window: int = 100) -> float:
        e = self.rel_err()[-window:]
        e = e[np.isfinite(e)]
        return float(e.mean()) if e.size else float("nan")

    def final_n_rel(self, window: int = 100) -> float:
        x = np.asarray(self.n_rel[-window:])
        return float(x.mean()) if x.size else float("nan")


def protocol_vectors(protocol: str, params: GenModelParams, steps: int, seed: int = 0,
                     delta: float = 1e-5, period: int = 5000) -> Iterator[GeneratedVector]:
    """Data stream for a named protocol; the true subspace comes from the ``truth`` sub-stream."""
    if protocol not in PROTOCOLS:
        raise InputValidationError(f"unknown protocol {protocol!r}; choose from {PROTOCOLS}")
    rng = substream(seed, "truth")
    if protocol == "stationary":
        U = random_orthonormal(params.n, params.d, rng)
        return vector_stream(U, params, steps, seed)
    if protocol == "rotating":
        U0 = random_orthonormal(params.n, params.d, rng)
        return vector_stream(rotating_subspace(U0, delta, rng), params, steps, seed)
    return vector_stream(sudden_change_schedule(params.n, params.d, period, rng), params, steps, seed)


def run_protocol(config: TrackerConfig, vectors: Iterator[GeneratedVector], seed: int = 0,
                 state: TrackerState | None = None) -> ProtocolRun:
    """Track a generated stream, scoring each step against its clean vector."""
    n_rel: list[float] = []
    truths: list[np.ndarray] = []

    def observations():
        for g in vectors:
            truths.append(g.truth)
            n_rel.append(float(np.linalg.norm(g.noise) / np.linalg.norm(g.truth)))
            yield g.obs

    def truth_iter():
        while True:
            yield truths.pop(0)

    final, trace = track_stream(config, observations(), truth_iter(), state=state, seed=seed)
    return ProtocolRun(final, trace, n_rel)
