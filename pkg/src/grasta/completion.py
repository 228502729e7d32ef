"""Robust matrix completion by cycling the tracker over matrix columns."""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .admm import AdmmParams, AdmmSolution, solve_lad
from .errors import DegeneracyError, InputValidationError
from .observed import SparseObservedMatrix
from .seeding import substream
from .stepsize import StepSizeParams
from .synth import gen_mc_instance
from .tracker import TrackerConfig, grasta_step, grouse_step, init_state, rel_err_vector

_logger = logging.getLogger(__name__)

OUTLIER_FRACTIONS = (0.0, 0.01, 0.05, 0.10, 0.15, 0.20)
# Step-size scale for completion. Matrix entries here are O(sqrt(d)), much
# larger than unit-norm tracking vectors, so the tracking default of 1 is too big.
COMPLETION_C = 0.001
# Constant GROUSE step tuned on clean desk-scale instances.
COMPLETION_GROUSE_ETA = 3e-4
# In-cycle ADMM solves use a reachable tolerance so warm starts can end them
# early; the final weight pass solves to the tight default.
CYCLE_EPS = (1e-5, 1e-3)
FINAL_ADMM = AdmmParams(max_iter=1000)

__all__ = [
    "CompletionResult",
    "ProtocolParams",
    "OUTLIER_FRACTIONS",
    "compare_grouse_grasta",
    "completion_config",
    "grouse_complete",
    "rel_err_matrix",
    "rel_err_vector",
    "robust_complete",
    "write_comparison_csv",
]


def rel_err_matrix(M_hat, M) -> float:
    """``||M_hat - M||_F / ||M||_F``."""
    M_hat = np.asarray(M_hat, dtype=float)
    M = np.asarray(M, dtype=float)
    if M_hat.shape != M.shape:
        raise InputValidationError(f"shape mismatch {M_hat.shape} vs {M.shape}")
    denom = np.linalg.norm(M)
    if denom == 0:
        raise InputValidationError("reference matrix has zero norm")
    return float(np.linalg.norm(M_hat - M) / denom)


def completion_config(rows: int, d: int, c_scale: float = COMPLETION_C, rho: float = 1.8,
                      max_iter: int = 60, grouse_eta: float = COMPLETION_GROUSE_ETA,
                      mode: str = "grasta") -> TrackerConfig:
    admm = AdmmParams(rho=rho, eps_abs=CYCLE_EPS[0], eps_rel=CYCLE_EPS[1], max_iter=max_iter)
    return TrackerConfig(
        rows, d, admm=admm,
        step=StepSizeParams(c_scale=c_scale), mode=mode, grouse_eta=grouse_eta,
    )


@dataclass
class CompletionResult:
    basis: np.ndarray
    weights: np.ndarray
    # Columns with fewer observed entries than the rank
    skipped: list[int] = field(default_factory=list)
    cycle_iterations: list[int] = field(default_factory=list)
    # sum_j ||U[omega_j] w_j + s_j - v_j||_1 at the end of each cycle
    cycle_feasibility: list[float] = field(default_factory=list)
    sparse: SparseObservedMatrix | None = None

    def __iter__(self):
        # allows ``U, W = robust_complete(...)``
        return iter((self.basis, self.weights))

    def low_rank(self) -> np.ndarray:
        return self.basis @ self.weights


def _final_weights(U: np.ndarray, obs: SparseObservedMatrix, d: int, admm: AdmmParams | None):
    """Refit every column against the converged basis; least-norm for sparse columns."""
    W = np.zeros((d, obs.cols))
    S_vals = np.zeros(len(obs))
    starts = obs._starts
    for j in range(obs.cols):
        col = obs.column(j)
        U_om = U[col.indices]
        if len(col) == 0:
            continue
        if len(col) < d or admm is None:
            W[:, j] = np.linalg.lstsq(U_om, col.values, rcond=None)[0]
            continue
        try:
            sol = solve_lad(U_om, col.values, admm)
        except DegeneracyError:
            W[:, j] = np.linalg.lstsq(U_om, col.values, rcond=None)[0]
            continue
        W[:, j] = sol.weight
        S_vals[starts[j]:starts[j + 1]] = sol.sparse
    sparse = SparseObservedMatrix(obs.rows, obs.cols, obs.row_idx, obs.col_idx, S_vals)
    return W, sparse


def _check(obs: SparseObservedMatrix, d: int, cycles: int) -> list[int]:
    if not 1 <= d < obs.rows:
        raise InputValidationError(f"need 1 <= d < rows, got d={d}, rows={obs.rows}")
    if cycles < 1:
        raise InputValidationError("cycles must be >= 1")
    skipped = np.flatnonzero(obs.column_counts() < d).tolist()
    if len(skipped) == obs.cols:
        raise DegeneracyError(f"every column has fewer than d={d} observed entries")
    if skipped:
        _logger.warning("%d columns have fewer than %d entries and are skipped", len(skipped), d)
    return skipped


def robust_complete(obs: SparseObservedMatrix, d: int, cycles: int = 10,
                    config: TrackerConfig | None = None, seed: int = 0,
                    warm_start: bool = True, order: Sequence[int] | None = None) -> CompletionResult:
    """Estimate ``U`` and ``W`` with ``P_omega(U W + S) = P_omega(V)``.

    Columns are visited in ``order`` (default: natural order) once per cycle;
    each revisit warm-starts ADMM from the same column's previous solution.
    """
    if config is None:
        config = completion_config(obs.rows, d)
    if config.rank != d or config.ambient_dim != obs.rows:
        raise InputValidationError("config dimensions do not match the problem")
    skipped = _check(obs, d, cycles)
    skip = set(skipped)
    cols = [j for j in (range(obs.cols) if order is None else order) if j not in skip]

    state = init_state(config, seed)
    warm: dict[int, AdmmSolution] = {}
    result = CompletionResult(state.basis, np.zeros((d, obs.cols)), skipped)
    for _ in range(cycles):
        iters = 0
        for j in cols:
            col = obs.column(j)
            state, sol, _ = grasta_step(state, col, config, warm.get(j) if warm_start else None)
            if sol is not None:
                warm[j] = sol
                iters += sol.iterations
        U = state.basis
        feas = 0.0
        for j, sol in warm.items():
            col = obs.column(j)
            feas += float(np.abs(U[col.indices] @ sol.weight + sol.sparse - col.values).sum())
        result.cycle_iterations.append(iters)
        result.cycle_feasibility.append(feas)

    result.basis = state.basis
    final = replace(FINAL_ADMM, rho=config.admm.rho)
    result.weights, result.sparse = _final_weights(state.basis, obs, d, final)
    return result


def grouse_complete(obs: SparseObservedMatrix, d: int, cycles: int = 10,
                    config: TrackerConfig | None = None, seed: int = 0) -> CompletionResult:
    """The l2 baseline: constant-step GROUSE cycles and a least-squares final pass."""
    if config is None:
        config = completion_config(obs.rows, d, mode="grouse")
    if config.rank != d or config.ambient_dim != obs.rows:
        raise InputValidationError("config dimensions do not match the problem")
    skipped = _check(obs, d, cycles)
    skip = set(skipped)
    state = init_state(config, seed)
    for _ in range(cycles):
        for j in range(obs.cols):
            if j not in skip:
                state = grouse_step(state, obs.column(j), config).state
    W, _ = _final_weights(state.basis, obs, d, None)
    return CompletionResult(state.basis, W, skipped)


@dataclass(frozen=True)
class ProtocolParams:
    rows: int = 200
    cols: int = 200
    d: int = 5
    density: float = 0.3
    noise_var: float = 1e-6
    cycles: int = 10
    trials: int = 5
    fractions: tuple[float, ...] = OUTLIER_FRACTIONS
    methods: tuple[str, ...] = ("grouse", "grasta")
    c_scale: float = COMPLETION_C
    grouse_eta: float = COMPLETION_GROUSE_ETA
    rho: float = 1.8
    max_iter: int = 60

    @classmethod
    def full_scale(cls, **kw) -> "ProtocolParams":
        return cls(rows=500, cols=500, **kw)


def _trial(args) -> tuple[str, float, float, float]:
    method, frac, trial, p, seed = args
    rng = substream(seed, f"mc/{frac!r}/{trial}")
    obs, L = gen_mc_instance(p.rows, p.cols, p.d, frac, p.density, np.sqrt(p.noise_var), rng)
    cfg = completion_config(p.rows, p.d, p.c_scale, p.rho, p.max_iter, p.grouse_eta, method)
    init_seed = int(substream(seed, f"init/{trial}").integers(2**31))
    start = time.perf_counter()
    if method == "grasta":
        res = robust_complete(obs, p.d, p.cycles, cfg, init_seed)
    else:
        res = grouse_complete(obs, p.d, p.cycles, cfg, init_seed)
    secs = time.perf_counter() - start
    return method, frac, rel_err_matrix(res.low_rank(), L), secs


def compare_grouse_grasta(params: ProtocolParams = ProtocolParams(), seed: int = 0,
                          jobs: int = 1) -> list[dict]:
    """Mean/std RelErr over seeded trials for every (method, outlier fraction).

    Both methods see the same instances. Rows are ordered method-major.
    """
    for m in params.methods:
        if m not in ("grouse", "grasta"):
            raise InputValidationError(f"unknown method {m!r}")
    tasks = [(m, f, k, params, seed) for m in params.methods
             for f in params.fractions for k in range(params.trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outs = list(pool.map(_trial, tasks))
    else:
        outs = [_trial(t) for t in tasks]
    rows = []
    for m in params.methods:
        for f in params.fractions:
            errs = [e for (mm, ff, e, _) in outs if mm == m and ff == f]
            secs = [s for (mm, ff, _, s) in outs if mm == m and ff == f]
            rows.append(dict(method=m, outlier_fraction=f, rel_err_mean=float(np.mean(errs)),
                             rel_err_std=float(np.std(errs)), seconds=float(np.mean(secs))))
    return rows


def write_comparison_csv(path, rows: list[dict], header: Sequence[str] = (),
                         timing: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "outlier_fraction", "rel_err_mean", "rel_err_std", "seconds"])
        for r in rows:
            writer.writerow([r["method"], repr(r["outlier_fraction"]), repr(r["rel_err_mean"]),
                             repr(r["rel_err_std"]), repr(r["seconds"] if timing else 0.0)])
