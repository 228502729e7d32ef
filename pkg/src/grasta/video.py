"""Video background/foreground separation on grayscale frame sequences.

Each frame is flattened (row-major) into one ambient vector. The background
of a frame is its projection ``U w`` onto the tracked subspace, fitted by LAD
on a random pixel subset; the foreground is the rest of the frame.
"""

from __future__ import annotations

import logging
import os
import queue
import re
import threading
import time
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .admm import AdmmParams, solve_lad
from .core import PartialObservation
from .errors import DegeneracyError, GrastaError, InputValidationError
from .seeding import as_rng, substream
from .stepsize import StepSizeParams
from .tracker import TraceLog, TraceRecord, TrackerConfig, TrackerState, grasta_step, init_state

_logger = logging.getLogger(__name__)

# Step-size scale for video. Frame vectors have norms in the tens, so the
# tracking default of 1 overshoots; 0.01 trains clean backgrounds to ~1e-6.
VIDEO_C = 0.01


@dataclass(frozen=True)
class FrameSequence:
    """Grayscale frames with intensities in [0, 1], shape ``(T, height, width)``."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=float)
        if px.ndim == 2:
            px = px[None]
        if px.ndim != 3:
            raise InputValidationError(f"frames must be (T, h, w), got shape {px.shape}")
        if px.size and (px.min() < 0.0 or px.max() > 1.0 or not np.all(np.isfinite(px))):
            raise InputValidationError("intensities must lie in [0, 1]")
        object.__setattr__(self, "pixels", px)

    @property
    def frame_count(self) -> int:
        return self.pixels.shape[0]

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]

    @property
    def ambient_dim(self) -> int:
        return self.height * self.width

    def __len__(self) -> int:
        return self.frame_count

    def vector(self, t: int) -> np.ndarray:
        return self.pixels[t].reshape(-1)

    def matrix(self) -> np.ndarray:
        """Frames as columns of an ``n x T`` matrix."""
        return self.pixels.reshape(self.frame_count, -1).T


class SeparationResult(NamedTuple):
    background: np.ndarray
    foreground: np.ndarray
    weight: np.ndarray


# --- PGM I/O -----------------------------------------------------------------

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens, pos = [], 0
    for _ in range(count):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise InputValidationError("truncated PGM header")
        tokens.append(m.group(1))
        pos = m.end()
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(data) or data[pos:pos + 1] not in (b" ", b"\n", b"\r", b"\t"):
        raise InputValidationError("malformed PGM header")
    return tokens, pos + 1


def decode_pgm(data: bytes) -> np.ndarray:
    """Decode a binary (P5) PGM into a float array in [0, 1]."""
    magic = data[:2]
    if magic in (b"P6", b"P3"):
        raise InputValidationError("colour PPM input is not supported; convert to grayscale")
    if magic != b"P5":
        raise InputValidationError(f"not a binary PGM (magic {magic!r})")
    try:
        (_, w, h, maxval), pos = _header_tokens(data, 4)
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise InputValidationError(f"malformed PGM header: {exc}") from None
    if w < 1 or h < 1 or not 1 <= maxval <= 65535:
        raise InputValidationError(f"bad PGM dimensions or maxval ({w}x{h}, {maxval})")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = w * h * dtype.itemsize
    raster = data[pos:pos + need]
    if len(raster) != need:
        raise InputValidationError(f"PGM raster has {len(raster)} bytes, expected {need}")
    img = np.frombuffer(raster, dtype=dtype).reshape(h, w).astype(float) / maxval
    if img.max(initial=0.0) > 1.0:
        raise InputValidationError("PGM sample exceeds maxval")
    return img


def encode_pgm(frame, maxval: int = 255) -> bytes:
    """Quantize to ``round(x * maxval)`` (half up) and encode as P5."""
    img = np.asarray(frame, dtype=float)
    if img.ndim != 2:
        raise InputValidationError("a PGM frame must be 2-D")
    if maxval not in (255, 65535):
        raise InputValidationError("maxval must be 255 or 65535")
    q = np.floor(np.clip(img, 0.0, 1.0) * maxval + 0.5)
    dtype = ">u2" if maxval > 255 else "u1"
    h, w = img.shape
    return f"P5\n{w} {h}\n{maxval}\n".encode() + q.astype(dtype).tobytes()


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_pgm(fh.read())


def save_pgm(frame, path, maxval: int = 255) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pgm(frame, maxval))


def _frame_paths(pattern: str, start: int, count: int | None) -> list[str]:
    try:
        pattern % 0
    except (TypeError, ValueError):
        raise InputValidationError(
            f"path pattern {pattern!r} needs one printf-style integer field, e.g. frame_%04d.pgm"
        ) from None
    paths = []
    i = start
    while count is None or len(paths) < count:
        p = pattern % i
        if not os.path.exists(p):
            if count is not None:
                raise InputValidationError(f"missing frame {p}")
            break
        paths.append(p)
        i += 1
    if not paths:
        raise InputValidationError(f"no frames match {pattern!r} starting at {start}")
    return paths


def iter_pgm_sequence(pattern: str, start: int = 0, count: int | None = None,
                      prefetch: int = 4) -> Iterator[np.ndarray]:
    """Yield decoded frames in order while a reader thread decodes ahead.

    At most ``prefetch`` decoded frames wait in the queue.
    """
    paths = _frame_paths(pattern, start, count)
    q: queue.Queue = queue.Queue(maxsize=max(1, prefetch))
    stop = threading.Event()
    done = object()

    def reader():
        try:
            for p in paths:
                if stop.is_set():
                    return
                q.put(read_pgm(p))
            q.put(done)
        except Exception as exc:  # handed to the consumer
            q.put(exc)

    th = threading.Thread(target=reader, daemon=True)
    th.start()
    shape = None
    try:
        while True:
            item = q.get()
            if item is done:
                return
            if isinstance(item, Exception):
                raise item
            if shape is None:
                shape = item.shape
            elif item.shape != shape:
                raise InputValidationError(f"frame size {item.shape} differs from {shape}")
            yield item
    finally:
        stop.set()
        # drain so a blocked reader can see the stop flag
        while th.is_alive():
            try:
                q.get_nowait()
            except queue.Empty:
                th.join(timeout=0.01)


def load_pgm_sequence(pattern: str, start: int = 0, count: int | None = None,
                      prefetch: int = 4) -> FrameSequence:
    return FrameSequence(np.stack(list(iter_pgm_sequence(pattern, start, count, prefetch))))


def save_pgm_sequence(frames, pattern: str, start: int = 0, maxval: int = 255) -> list[str]:
    px = frames.pixels if isinstance(frames, FrameSequence) else np.asarray(frames)
    paths = []
    for t, img in enumerate(px):
        p = pattern % (start + t)
        save_pgm(img, p, maxval)
        paths.append(p)
    return paths


def foreground_to_image(fg) -> np.ndarray:
    """Signed residual centred at mid-gray: ``clip(0.5 + fg / 2, 0, 1)``."""
    return np.clip(0.5 + 0.5 * np.asarray(fg, dtype=float), 0.0, 1.0)


# --- separation --------------------------------------------------------------

def video_config(n: int, d: int = 5, c_scale: float = VIDEO_C, rho: float = 1.8,
                 max_iter: int = 60, max_angle: float = 0.5) -> TrackerConfig:
    return TrackerConfig(n, d, admm=AdmmParams(rho=rho, max_iter=max_iter),
                         step=StepSizeParams(c_scale=c_scale), max_angle=max_angle)


def sample_pixels(n: int, fraction: float, rng) -> np.ndarray:
    if not 0.0 < fraction <= 1.0:
        raise InputValidationError("pixel fraction must lie in (0, 1]")
    m = int(round(fraction * n))
    if m == n:
        return np.arange(n)
    return np.sort(as_rng(rng).choice(n, m, replace=False))


def train_background(frames: FrameSequence, indices: Sequence[int] | None = None, d: int = 5,
                     pixel_fraction: float = 0.3, cycles: int = 5,
                     config: TrackerConfig | None = None, seed: int = 0,
                     n_train: int = 50, return_state: bool = False):
    """Fit a rank-``d`` background subspace from a few frames.

    ``indices`` defaults to ``n_train`` frames drawn at random without
    replacement. Each visit observes a fresh random pixel subset. Returns the
    basis, or the full tracker state when ``return_state`` is set so that
    tracking can continue with the step size reached during training.
    """
    n = frames.ambient_dim
    if config is None:
        config = video_config(n, d)
    if indices is None:
        k = min(n_train, frames.frame_count)
        indices = np.sort(substream(seed, "frames").choice(frames.frame_count, k, replace=False))
    indices = [int(i) for i in indices]
    if not indices or min(indices) < 0 or max(indices) >= frames.frame_count:
        raise InputValidationError("training frame indices out of range")
    if int(round(pixel_fraction * n)) < d:
        raise DegeneracyError("pixel fraction too small for the rank")
    rng = substream(seed, "sampling")
    state = init_state(config, seed)
    for _ in range(cycles):
        for t in indices:
            v = frames.vector(t)
            omega = sample_pixels(n, pixel_fraction, rng)
            state = grasta_step(state, PartialObservation(omega, v[omega], n), config).state
    return state if return_state else state.basis


def separate_frame(U, frame, pixel_fraction: float = 1.0, admm: AdmmParams = AdmmParams(),
                   rng=None) -> SeparationResult:
    """LAD-fit ``w`` on sampled pixels; ``BG = U w`` on all pixels, ``FG = frame - BG``."""
    v = np.asarray(frame, dtype=float).reshape(-1)
    n, d = U.shape
    if v.size != n:
        raise InputValidationError(f"frame has {v.size} pixels, basis expects {n}")
    omega = sample_pixels(n, pixel_fraction, rng if rng is not None else np.random.default_rng(0))
    if omega.size < d:
        raise DegeneracyError("too few sampled pixels for the rank")
    sol = solve_lad(U[omega], v[omega], admm)
    bg = U @ sol.weight
    return SeparationResult(bg, v - bg, sol.weight)


def track_and_separate(frames: FrameSequence, U0, config: TrackerConfig | None = None,
                       update_fraction: float = 0.3, separate_fraction: float = 1.0,
                       seed: int = 0, keep_bases: bool = False):
    """Track the background through the video and separate every frame.

    ``U0`` is a basis or a :class:`TrackerState` from training. Starting from
    a bare basis resets the adaptive step size, which can throw a converged
    basis off for the first frames when frame norms are large.

    Per frame: one tracker step on ``update_fraction`` of the pixels, then
    separation against the updated basis. Returns ``(results, trace, bases)``;
    ``bases`` is empty unless ``keep_bases``. Trace wall times cover both
    phases, so ``trace.fps()`` is the tracking-and-separation throughput.
    """
    n = frames.ambient_dim
    basis = U0.basis if isinstance(U0, TrackerState) else np.asarray(U0)
    if config is None:
        config = video_config(n, basis.shape[1])
    if isinstance(U0, TrackerState):
        if basis.shape != (config.ambient_dim, config.rank):
            raise InputValidationError(f"tracker state basis has shape {basis.shape}")
        state = U0
    else:
        state = init_state(config, basis=basis)
    rng = substream(seed, "sampling")
    results: list[SeparationResult | None] = []
    bases: list[np.ndarray] = []
    trace = TraceLog()
    for t in range(frames.frame_count):
        v = frames.vector(t)
        start = time.perf_counter_ns()
        try:
            omega = sample_pixels(n, update_fraction, rng)
            state, sol, eta = grasta_step(state, PartialObservation(omega, v[omega], n), config)
            res = separate_frame(state.basis, v, separate_fraction, config.admm, rng)
            iters, conv = (sol.iterations, sol.converged) if sol is not None else (0, False)
        except GrastaError as exc:
            trace.events.append(f"t={t}: {exc}")
            res, eta, iters, conv = None, 0.0, 0, False
        elapsed = time.perf_counter_ns() - start
        err = float(np.linalg.norm(res.foreground) / np.linalg.norm(v)) if res and np.any(v) else np.nan
        trace.append(TraceRecord(t, err, eta, iters, conv, elapsed))
        results.append(res)
        if keep_bases:
            bases.append(state.basis)
    return results, trace, bases


def separate_stream(frames: FrameSequence, U, pixel_fraction: float = 0.3,
                    admm: AdmmParams = AdmmParams(), seed: int = 0):
    """Separate every frame against a fixed basis. Returns ``(results, trace)``."""
    rng = substream(seed, "sampling")
    trace = TraceLog()
    results = []
    for t in range(frames.frame_count):
        v = frames.vector(t)
        start = time.perf_counter_ns()
        try:
            res = separate_frame(U, v, pixel_fraction, admm, rng)
        except GrastaError as exc:
            trace.events.append(f"t={t}: {exc}")
            res = None
        elapsed = time.perf_counter_ns() - start
        err = float(np.linalg.norm(res.foreground) / np.linalg.norm(v)) if res and np.any(v) else np.nan
        trace.append(TraceRecord(t, err, 0.0, 0, res is not None, elapsed))
        results.append(res)
    return results, trace


# --- virtual pan -------------------------------------------------------------

def pan_schedule(frame_count: int, source_width: int, view_width: int, pan: int = 20,
                 period: int = 100) -> np.ndarray:
    """Offset ``min(pan * (t // period), source_width - view_width)`` per frame."""
    if view_width < 1 or view_width > source_width:
        raise InputValidationError("view width must lie in [1, source width]")
    if pan < 0 or period < 1:
        raise InputValidationError("need pan >= 0 and period >= 1")
    t = np.arange(frame_count)
    return np.minimum(pan * (t // period), source_width - view_width)


def virtual_pan(frames: FrameSequence, view_width: int, offsets: Sequence[int]) -> FrameSequence:
    """Crop a ``view_width``-wide window at each frame's column offset."""
    offsets = np.asarray(offsets, dtype=int)
    if offsets.shape != (frames.frame_count,):
        raise InputValidationError("need one offset per frame")
    if view_width < 1 or np.any(offsets < 0) or np.any(offsets + view_width > frames.width):
        raise InputValidationError("pan offset moves the view outside the frame")
    out = np.stack([frames.pixels[t, :, o:o + view_width] for t, o in enumerate(offsets)])
    return FrameSequence(out)


# --- evaluation --------------------------------------------------------------

def foreground_mask(fg, background_pixels=None, factor: float = 3.0) -> np.ndarray:
    """``|fg| > factor * median(|fg|)`` with the median taken over known background pixels.

    Without ``background_pixels`` the median runs over all pixels.
    """
    a = np.abs(np.asarray(fg, dtype=float))
    ref = a if background_pixels is None else a[np.asarray(background_pixels, dtype=bool)]
    thresh = factor * (np.median(ref) if ref.size else 0.0)
    return a > thresh


def mask_f1(pred, truth) -> float:
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if pred.shape != truth.shape:
        raise InputValidationError("mask shapes differ")
    tp = np.count_nonzero(pred & truth)
    denom = np.count_nonzero(pred) + np.count_nonzero(truth)
    return 1.0 if denom == 0 else 2.0 * tp / denom
