"""Command-line entry point: ``grasta {gen,track,complete,video} ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import __version__
from .completion import (
    ProtocolParams,
    OUTLIER_FRACTIONS,
    completion_config,
    compare_grouse_grasta,
    grouse_complete,
    rel_err_matrix,
    robust_complete,
    write_comparison_csv,
)
from .config import RunConfig, load_config_file
from .core import PartialObservation
from .errors import GrastaError, InputValidationError
from .experiments import PROTOCOLS, protocol_vectors, run_protocol
from .matio import load_matrix, read_triplets, save_matrix, write_triplets
from .observed import SparseObservedMatrix
from .seeding import substream
from .synth import GenModelParams, gen_mc_instance, gen_synthetic_video, random_orthonormal, vector_stream
from .stepsize import StepSizeState
from .tracker import TrackerConfig, init_state, track_stream
from .video import (
    FrameSequence,
    foreground_mask,
    foreground_to_image,
    load_pgm_sequence,
    mask_f1,
    pan_schedule,
    save_pgm_sequence,
    separate_stream,
    track_and_separate,
    train_background,
    virtual_pan,
)

_logger = logging.getLogger("grasta")


class UsageError(Exception):
    pass


# --- helpers -----------------------------------------------------------------

def _header(cfg: RunConfig, extra: dict | None = None) -> list[str]:
    lines = [f"artifact {__version__}", f"experiment: {cfg.kind}", f"seed: {cfg.seed}"]
    for k, v in (extra or {}).items():
        lines.append(f"{k}: {v}")
    lines.extend(f"config: {line}" for line in cfg.lines())
    return lines


STEP_STATE_FILE = "step_state.csv"


def _write_step_state(path: str, step: StepSizeState, cfg: RunConfig) -> None:
    with open(path, "w", newline="") as fh:
        for line in _header(cfg):
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mu", "level"])
        w.writerow([repr(step.mu), step.level])


def _read_step_state(path: str) -> StepSizeState:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(line for line in fh if not line.startswith("#")))
        mu, level = float(rows[1][0]), int(rows[1][1])
    except (IndexError, ValueError) as exc:
        raise InputValidationError(f"malformed step state file {path}: {exc}") from None
    return StepSizeState(mu, level)


def _tracker_config(cfg: RunConfig, n: int, d: int) -> TrackerConfig:
    return TrackerConfig(
        n, d, admm=cfg.admm_params(), step=cfg.step_params(), mode=cfg["tracker.mode"],
        grouse_eta=cfg["tracker.grouse_eta"], max_angle=cfg["tracker.max_angle"],
        reortho_every=cfg["tracker.reortho_every"],
    )


def _outdir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _resolve(args, kind: str, mapping: dict[str, str]) -> RunConfig:
    file_values = load_config_file(args.config) if args.config else {}
    overrides = {key: getattr(args, attr, None) for attr, key in mapping.items()}
    return RunConfig.resolve(kind, args.seed, file_values, overrides)


_TRACKER_FLAGS = {
    "rho": "admm.rho", "max_iter": "admm.max_iter", "c_scale": "step.c_scale",
    "rule": "step.rule", "mode": "tracker.mode", "grouse_eta": "tracker.grouse_eta",
    "max_angle": "tracker.max_angle",
}


def _add_tracker_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("tracker")
    g.add_argument("--rho", type=float, help="ADMM penalty, 0 < rho < 2 (default 1.8)")
    g.add_argument("--max-iter", type=int, help="ADMM iteration cap (default 60)")
    g.add_argument("--c-scale", type=float, help="step-size constant C (default per experiment)")
    g.add_argument("--rule", choices=("multilevel", "diminishing"))
    g.add_argument("--mode", choices=("grasta", "grouse"))
    g.add_argument("--grouse-eta", type=float, help="constant GROUSE step")
    g.add_argument("--max-angle", type=float, help="largest geodesic rotation per step (radians)")


# --- gen -----------------------------------------------------------------------

def cmd_gen(args) -> int:
    out = _outdir(args)
    if args.kind == "stream":
        cfg = _resolve(args, "track", {
            "n": "track.n", "d": "track.d", "outliers": "track.outliers",
            "sampling": "track.sampling", "noise_var": "track.noise_var", "steps": "track.steps",
        })
        params = GenModelParams(cfg["track.n"], cfg["track.d"], cfg["track.outliers"],
                                cfg["track.sampling"], float(np.sqrt(cfg["track.noise_var"])))
        steps = cfg["track.steps"]
        U = random_orthonormal(params.n, params.d, substream(cfg.seed, "truth"))
        obs = np.full((params.n, steps), np.nan)
        truth = np.zeros((params.n, steps))
        for t, g in enumerate(vector_stream(U, params, steps, cfg.seed)):
            obs[g.obs.indices, t] = g.obs.values
            truth[:, t] = g.truth
        save_matrix(os.path.join(out, "observed.grmat"), obs)
        save_matrix(os.path.join(out, "truth.grmat"), truth)
        save_matrix(os.path.join(out, "basis.grmat"), U)
        print(f"wrote {steps} vectors of length {params.n} to {out}")
        return 0
    # matrix completion instance
    cfg = _resolve(args, "complete", {
        "rows": "complete.rows", "cols": "complete.cols", "d": "complete.d",
        "density": "complete.density", "noise_var": "complete.noise_var",
    })
    frac = 0.1 if args.outliers is None else args.outliers
    obs, L = gen_mc_instance(cfg["complete.rows"], cfg["complete.cols"], cfg["complete.d"], frac,
                             cfg["complete.density"], float(np.sqrt(cfg["complete.noise_var"])),
                             substream(cfg.seed, "data"))
    write_triplets(os.path.join(out, "observed.csv"), obs.rows, obs.cols, obs.triplets(),
                   header=_header(cfg, {"outlier_fraction": frac}))
    save_matrix(os.path.join(out, "truth.grmat"), L)
    print(f"wrote {len(obs)} observed entries of a {obs.rows}x{obs.cols} matrix to {out}")
    return 0


# --- track ---------------------------------------------------------------------

def cmd_track(args) -> int:
    mapping = {
        "protocol": "track.protocol", "n": "track.n", "d": "track.d", "outliers": "track.outliers",
        "sampling": "track.sampling", "noise_var": "track.noise_var", "steps": "track.steps",
        "delta": "track.delta", "period": "track.period", **_TRACKER_FLAGS,
    }
    cfg = _resolve(args, "track", mapping)
    if cfg["track.protocol"] not in PROTOCOLS:
        raise UsageError(f"unknown protocol {cfg['track.protocol']!r}")
    if cfg["track.steps"] < 0:
        raise UsageError("--steps must be >= 0")
    if args.truth and not args.input:
        raise UsageError("--truth needs --input")
    out = _outdir(args)
    start = time.perf_counter()

    if args.input:
        V = load_matrix(args.input)
        n, steps = V.shape
        d = cfg["track.d"]
        truth = load_matrix(args.truth) if args.truth else None
        if truth is not None and truth.shape != V.shape:
            raise InputValidationError("truth matrix shape differs from the input")
        observations = (PartialObservation(np.flatnonzero(np.isfinite(V[:, t])),
                                           V[np.isfinite(V[:, t]), t], n) for t in range(steps))
        truths = (truth[:, t] for t in range(steps)) if truth is not None else None
        state, trace = track_stream(_tracker_config(cfg, n, d), observations, truths, seed=cfg.seed)
        e = trace.column("rel_err")[-100:] if len(trace) else np.zeros(0)
        e = e[np.isfinite(e)]
        final, n_rel = (float(e.mean()) if e.size else float("nan")), float("nan")
        basis = state.basis
    else:
        n, d, steps = cfg["track.n"], cfg["track.d"], cfg["track.steps"]
        params = GenModelParams(n, d, cfg["track.outliers"], cfg["track.sampling"],
                                float(np.sqrt(cfg["track.noise_var"])))
        vectors = protocol_vectors(cfg["track.protocol"], params, steps, cfg.seed,
                                   cfg["track.delta"], cfg["track.period"])
        run = run_protocol(_tracker_config(cfg, n, d), vectors, cfg.seed)
        trace, final, n_rel = run.trace, run.final_rel_err(), run.final_n_rel()
        basis = run.state.basis
    seconds = time.perf_counter() - start

    trace.to_csv(os.path.join(out, "trace.csv"), _header(cfg), timing=not args.no_timing)
    save_matrix(os.path.join(out, "basis.grmat"), basis)
    secs = 0.0 if args.no_timing else seconds
    print(f"final_rel_err={final:.6g} n_rel={n_rel:.6g} steps={len(trace)} seconds={secs:.3f}")
    return 0


# --- complete ------------------------------------------------------------------

def cmd_complete(args) -> int:
    mapping = {
        "rows": "complete.rows", "cols": "complete.cols", "d": "complete.d",
        "density": "complete.density", "noise_var": "complete.noise_var",
        "cycles": "complete.cycles", "trials": "complete.trials", "grouse_eta": "complete.grouse_eta",
        "rho": "admm.rho", "max_iter": "admm.max_iter", "c_scale": "step.c_scale",
    }
    cfg = _resolve(args, "complete", mapping)
    if not args.input and not args.generate:
        raise UsageError("give --input FILE or --generate")
    if args.input and args.generate:
        raise UsageError("--input and --generate are exclusive")
    out = _outdir(args)
    methods = ("grouse", "grasta") if args.method == "both" else (args.method,)

    if args.generate:
        rows, cols = cfg["complete.rows"], cfg["complete.cols"]
        if args.full_scale:
            rows = cols = 500
        fractions = OUTLIER_FRACTIONS if args.outliers is None else (args.outliers,)
        params = ProtocolParams(
            rows=rows, cols=cols, d=cfg["complete.d"], density=cfg["complete.density"],
            noise_var=cfg["complete.noise_var"], cycles=cfg["complete.cycles"],
            trials=cfg["complete.trials"], fractions=tuple(fractions), methods=methods,
            c_scale=cfg["step.c_scale"], grouse_eta=cfg["complete.grouse_eta"],
            rho=cfg["admm.rho"], max_iter=cfg["admm.max_iter"],
        )
        table = compare_grouse_grasta(params, cfg.seed, args.jobs)
        extra = {"grouse_step": f"constant eta={params.grouse_eta!r}", "rows": rows, "cols": cols}
        write_comparison_csv(os.path.join(out, "comparison.csv"), table, _header(cfg, extra),
                             timing=not args.no_timing)
        for r in table:
            print(f"{r['method']:7s} outliers={r['outlier_fraction']:<5g} "
                  f"rel_err={r['rel_err_mean']:.3e} +- {r['rel_err_std']:.1e}")
        return 0

    if args.input.endswith(".csv"):
        obs = SparseObservedMatrix(*read_triplets(args.input))
    else:
        M = load_matrix(args.input)
        mask = np.isfinite(M)
        obs = SparseObservedMatrix.from_dense(np.where(mask, M, 0.0), mask)
    d = cfg["complete.d"]
    rows = []
    for method in methods:
        tc = completion_config(obs.rows, d, cfg["step.c_scale"], cfg["admm.rho"],
                               cfg["admm.max_iter"], cfg["complete.grouse_eta"], method)
        start = time.perf_counter()
        if method == "grasta":
            res = robust_complete(obs, d, cfg["complete.cycles"], tc, cfg.seed)
        else:
            res = grouse_complete(obs, d, cfg["complete.cycles"], tc, cfg.seed)
        secs = time.perf_counter() - start
        save_matrix(os.path.join(out, f"{method}_U.grmat"), res.basis)
        save_matrix(os.path.join(out, f"{method}_W.grmat"), res.weights)
        err = float("nan")
        if args.truth:
            err = rel_err_matrix(res.low_rank(), load_matrix(args.truth))
        rows.append(dict(method=method, outlier_fraction=float("nan"), rel_err_mean=err,
                         rel_err_std=0.0, seconds=secs))
        print(f"{method}: rel_err={err:.3e} skipped_columns={len(res.skipped)}")
    write_comparison_csv(os.path.join(out, "comparison.csv"), rows, _header(cfg),
                         timing=not args.no_timing)
    return 0


# --- video ---------------------------------------------------------------------

_VIDEO_FLAGS = {
    "rank": "video.rank", "train_pixels": "video.train_pixels", "train_frames": "video.train_frames",
    "train_cycles": "video.train_cycles", "separate_pixels": "video.separate_pixels",
    "update_pixels": "video.update_pixels", **_TRACKER_FLAGS,
}


def _load_frames(args) -> FrameSequence:
    if not args.input:
        raise UsageError("--input PATTERN is required, e.g. frames/frame_%04d.pgm")
    return load_pgm_sequence(args.input, args.start, args.count)


def _write_separation(out: str, results, shape) -> None:
    h, w = shape
    bg = np.stack([np.clip(r.background.reshape(h, w), 0, 1) for r in results])
    fg = np.stack([foreground_to_image(r.foreground.reshape(h, w)) for r in results])
    save_pgm_sequence(bg, os.path.join(out, "bg_%04d.pgm"))
    save_pgm_sequence(fg, os.path.join(out, "fg_%04d.pgm"))


def _mask_score(args, results, shape) -> float | None:
    if not args.masks:
        return None
    masks = load_pgm_sequence(args.masks, args.start, len(results)).pixels > 0.5
    fg = np.stack([r.foreground.reshape(shape) for r in results])
    pred = np.stack([foreground_mask(fg[t], ~masks[t]) for t in range(len(results))])
    return mask_f1(pred, masks)


def cmd_video(args) -> int:
    cfg = _resolve(args, "video", _VIDEO_FLAGS)
    out = _outdir(args)
    action = args.action

    if action == "synth":
        sv = gen_synthetic_video(args.width, args.height, args.frames, args.objects,
                                 args.drift, cfg.seed)
        save_pgm_sequence(sv.frames, os.path.join(out, "frame_%04d.pgm"))
        save_pgm_sequence(sv.masks.astype(float), os.path.join(out, "mask_%04d.pgm"))
        save_pgm_sequence(sv.background, os.path.join(out, "background_%04d.pgm"))
        print(f"wrote {args.frames} frames of {args.width}x{args.height} to {out}")
        return 0

    frames = _load_frames(args)
    shape = (frames.height, frames.width)
    d = cfg["video.rank"]
    tconf = _tracker_config(cfg, frames.ambient_dim, d)

    if action == "pan":
        offsets = pan_schedule(frames.frame_count, frames.width, args.view_width, args.pan, args.period)
        panned = virtual_pan(frames, args.view_width, offsets)
        save_pgm_sequence(panned, os.path.join(out, "pan_%04d.pgm"))
        with open(os.path.join(out, "offsets.csv"), "w", newline="") as fh:
            for line in _header(cfg):
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["frame", "offset"])
            w.writerows(enumerate(offsets.tolist()))
        print(f"wrote {panned.frame_count} frames of {args.view_width}x{panned.height} to {out}")
        return 0

    if action == "train":
        start = time.perf_counter()
        state = train_background(frames, None, d, cfg["video.train_pixels"], cfg["video.train_cycles"],
                                 tconf, cfg.seed, cfg["video.train_frames"], return_state=True)
        secs = 0.0 if args.no_timing else time.perf_counter() - start
        save_matrix(os.path.join(out, "basis.grmat"), state.basis)
        _write_step_state(os.path.join(out, STEP_STATE_FILE), state.step_state, cfg)
        print(f"trained rank-{d} background on {min(cfg['video.train_frames'], len(frames))} "
              f"frames in {secs:.3f} s")
        return 0

    if not args.basis:
        raise UsageError("--basis FILE is required (run `video train` first)")
    U = load_matrix(args.basis)
    if U.shape != (frames.ambient_dim, d):
        raise InputValidationError(f"basis has shape {U.shape}, expected {(frames.ambient_dim, d)}")
    if action == "separate":
        results, trace = separate_stream(frames, U, cfg["video.separate_pixels"], tconf.admm, cfg.seed)
    else:
        start_state = init_state(tconf, basis=U)
        path = args.step_state or os.path.join(os.path.dirname(args.basis), STEP_STATE_FILE)
        if args.step_state or os.path.exists(path):
            start_state = replace(start_state, step_state=_read_step_state(path))
        else:
            _logger.warning("no %s next to the basis; the step size starts from scratch",
                            STEP_STATE_FILE)
        results, trace, _ = track_and_separate(frames, start_state, tconf, cfg["video.update_pixels"],
                                               cfg["video.separate_pixels"], cfg.seed)
    if any(r is None for r in results):
        raise GrastaError("some frames could not be separated; see trace events")
    _write_separation(out, results, shape)
    f1 = _mask_score(args, results, shape)
    extra = {"f1": repr(f1)} if f1 is not None else {}
    trace.to_csv(os.path.join(out, "trace.csv"), _header(cfg, extra), timing=not args.no_timing)
    fps = "n/a" if args.no_timing else f"{trace.fps():.1f}"
    msg = f"separated {len(results)} frames, fps={fps}"
    if f1 is not None:
        msg += f", mask_f1={f1:.4f}"
    print(msg)
    return 0


# --- parser --------------------------------------------------------------------

def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", metavar="PATH", default=default(None), help="key=value config file")
    p.add_argument("--seed", type=int, default=default(0))
    p.add_argument("--out", metavar="DIR", default=default("out"))
    p.add_argument("--jobs", type=int, default=default(1), help="parallel trials for `complete`")
    p.add_argument("--no-timing", action="store_true", default=default(False),
                   help="write zero wall times so outputs are byte-identical across runs")
    p.add_argument("-v", "--verbose", action="store_true", default=default(False))
    return p


def build_parser() -> argparse.ArgumentParser:
    sub_globals = _global_flags(suppress=True)
    parser = argparse.ArgumentParser(
        prog="grasta", parents=[_global_flags(suppress=False)],
        description="Robust subspace tracking, matrix completion and video separation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[sub_globals], help="write synthetic data")
    g.add_argument("kind", choices=("stream", "mc"))
    for flag in ("--n", "--d", "--steps", "--rows", "--cols"):
        g.add_argument(flag, type=int)
    for flag in ("--outliers", "--sampling", "--noise-var", "--density"):
        g.add_argument(flag, type=float)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("track", parents=[sub_globals], help="run a tracking protocol")
    t.add_argument("--protocol", choices=PROTOCOLS)
    t.add_argument("--n", type=int)
    t.add_argument("--d", type=int)
    t.add_argument("--outliers", type=float)
    t.add_argument("--sampling", type=float)
    t.add_argument("--noise-var", type=float)
    t.add_argument("--steps", type=int)
    t.add_argument("--delta", type=float, help="rotation speed (rotating protocol)")
    t.add_argument("--period", type=int, help="switch period (sudden protocol)")
    t.add_argument("--input", help="n x T matrix (GRMAT1 or CSV), NaN marks missing entries")
    t.add_argument("--truth", help="clean n x T matrix for RelErr")
    _add_tracker_flags(t)
    t.set_defaults(func=cmd_track)

    c = sub.add_parser("complete", parents=[sub_globals], help="robust matrix completion")
    c.add_argument("--generate", action="store_true", help="run the seeded comparison grid")
    c.add_argument("--full-scale", action="store_true", help="500 x 500 instances")
    c.add_argument("--input", help="triplet CSV or GRMAT1 with NaN for missing entries")
    c.add_argument("--truth", help="true low-rank matrix for RelErr")
    c.add_argument("--method", choices=("grasta", "grouse", "both"), default="both")
    c.add_argument("--outliers", type=float, help="single outlier fraction (default: full grid)")
    for flag in ("--rows", "--cols", "--d", "--cycles", "--trials", "--max-iter"):
        c.add_argument(flag, type=int)
    for flag in ("--density", "--noise-var", "--grouse-eta", "--rho", "--c-scale"):
        c.add_argument(flag, type=float)
    c.set_defaults(func=cmd_complete)

    v = sub.add_parser("video", parents=[sub_globals], help="video background separation")
    v.add_argument("action", choices=("synth", "train", "separate", "track", "pan"))
    v.add_argument("--input", help="printf-style PGM pattern, e.g. frames/frame_%%04d.pgm")
    v.add_argument("--start", type=int, default=0)
    v.add_argument("--count", type=int)
    v.add_argument("--basis", help="background basis from `video train`")
    v.add_argument("--step-state", help="step-size state from `video train` "
                   "(default: step_state.csv next to the basis)")
    v.add_argument("--masks", help="ground-truth mask pattern for scoring")
    v.add_argument("--width", type=int, default=80)
    v.add_argument("--height", type=int, default=60)
    v.add_argument("--frames", type=int, default=200)
    v.add_argument("--objects", type=int, default=2)
    v.add_argument("--drift", type=float, default=0.0, help="total brightness change (synth)")
    v.add_argument("--view-width", type=int, default=88)
    v.add_argument("--pan", type=int, default=20)
    v.add_argument("--period", type=int, default=100)
    v.add_argument("--rank", type=int)
    for flag in ("--train-pixels", "--separate-pixels", "--update-pixels"):
        v.add_argument(flag, type=float)
    v.add_argument("--train-frames", type=int)
    v.add_argument("--train-cycles", type=int)
    _add_tracker_flags(v)
    v.set_defaults(func=cmd_video)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"grasta: error: {exc}", file=sys.stderr)
        return 2
    except InputValidationError as exc:
        print(f"grasta: error: {exc}", file=sys.stderr)
        return 2
    except (GrastaError, OSError, ArithmeticError) as exc:
        print(f"grasta: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
