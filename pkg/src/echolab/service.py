"""HTTP facade for interactive echo exploration.

A session bundles an uploaded image, a configured filter, and the
compressed echo factors; echo requests reconstruct from the stored factors
at an optional reduced rank, so the explorer's rank slider never recomputes
the filter. Sessions are immutable after creation and kept in a small LRU
store. Raw echo values are served alongside the 8-bit raster so clients
can rescale without another round trip.
"""

import base64
import collections
import contextlib
import json
import os
import threading
import time
import uuid

import anyio
import numpy as np
from fastapi import FastAPI, File, Form, Request, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse

from . import compression
from .errors import PgmError
from .filters import build_smoothing_filter
from .grid import parse_pgm, rescale_for_display

DEFAULT_WIDTH_BUDGET = 3300  # keeps reconstruction under the latency target
DEFAULT_MAX_SESSIONS = 4


class Session:
    __slots__ = ("id", "original", "filtered", "filter_summary", "compressed", "created")

    def __init__(self, sid, original, filtered, filter_summary, compressed):
        self.id = sid
        self.original = original
        self.filtered = filtered
        self.filter_summary = filter_summary
        self.compressed = compressed
        self.created = time.time()


class SessionStore:
    """Thread-safe LRU store; creation and eviction are serialised."""

    def __init__(self, capacity):
        self.capacity = capacity
        self._lock = threading.Lock()
        self._sessions = collections.OrderedDict()

    def add(self, session):
        with self._lock:
            self._sessions[session.id] = session
            self._sessions.move_to_end(session.id)
            while len(self._sessions) > self.capacity:
                self._sessions.popitem(last=False)

    def get(self, sid):
        with self._lock:
            session = self._sessions.get(sid)
            if session is not None:
                self._sessions.move_to_end(sid)
            return session

    def __len__(self):
        with self._lock:
            return len(self._sessions)


def _b64(arr):
    return base64.b64encode(np.ascontiguousarray(arr).tobytes()).decode("ascii")


def _raster_payload(raw, nx, ny, extra=None):
    (raster,) = rescale_for_display([raw], "per-image-linear")
    payload = {
        "nx": nx,
        "ny": ny,
        "raster": _b64(raster),
        "raw": _b64(np.asarray(raw, dtype="<f8")),
        "raw_max": float(np.max(raw, initial=0.0)),
    }
    if extra:
        payload.update(extra)
    return payload


def worker_count():
    """Worker cap from ECHOLAB_THREADS (defaults to the CPU count)."""
    value = os.environ.get("ECHOLAB_THREADS")
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            pass
    return os.cpu_count() or 1


def create_app(max_sessions=DEFAULT_MAX_SESSIONS, width_budget=DEFAULT_WIDTH_BUDGET):
    @contextlib.asynccontextmanager
    async def lifespan(_app):
        # ECHOLAB_THREADS caps the pool running the synchronous handlers
        anyio.to_thread.current_default_thread_limiter().total_tokens = worker_count()
        yield

    app = FastAPI(title="echolab echo service", lifespan=lifespan)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    store = SessionStore(max_sessions)
    app.state.sessions = store

    def error(status, message):
        return JSONResponse({"detail": message}, status_code=status)

    @app.post("/sessions", status_code=201)
    async def create_session(
        image: UploadFile = File(...),
        filter: str = Form(...),
        compression_config: str = Form("{}", alias="compression"),
    ):
        blob = await image.read()
        if not blob:
            return error(400, "empty image upload")
        try:
            img = parse_pgm(blob, source=image.filename or "upload")
        except PgmError as exc:
            return error(400, f"bad image: {exc}")
        try:
            filter_params = json.loads(filter)
            comp_params = json.loads(compression_config)
        except json.JSONDecodeError as exc:
            return error(400, f"bad JSON: {exc}")
        if not isinstance(filter_params, dict) or not isinstance(comp_params, dict):
            return error(400, "filter and compression configs must be JSON objects")

        try:
            cfg = _compression_config(comp_params)
        except (TypeError, ValueError) as exc:
            return error(422, f"invalid compression parameters: {exc}")
        width = cfg.resolve_rank(img.n) + cfg.oversample
        if width > width_budget:
            return error(507, f"k + oversample = {width} exceeds budget {width_budget}")
        if width > img.n:
            return error(422, f"k + oversample = {width} exceeds pixel count {img.n}")

        try:
            inst = build_smoothing_filter(img, filter_params)
        except (TypeError, ValueError) as exc:
            return error(422, f"invalid filter parameters: {exc}")

        compressed = compression.compress_echoes(
            inst.operator, cfg, img.nx, img.ny,
            meta={"filter": inst.method, "params": inst.params},
        )
        session = Session(uuid.uuid4().hex[:16], img, inst.filtered, inst.summary(), compressed)
        store.add(session)
        return JSONResponse(
            {
                "id": session.id,
                "nx": img.nx,
                "ny": img.ny,
                "filter": session.filter_summary,
                "k": compressed.svd.k,
                "exclusions": len(compressed.exclusions),
                "spectrum_url": f"/sessions/{session.id}/spectrum",
            },
            status_code=201,
        )

    @app.get("/sessions/{sid}/echo")
    def get_echo(sid: str, x: int, y: int, direction: str = "source",
                 rank: int | None = None):
        session = store.get(sid)
        if session is None:
            return error(404, "unknown session")
        c = session.compressed
        if not (0 <= x < c.nx and 0 <= y < c.ny):
            return error(400, f"coordinates ({x}, {y}) out of range")
        if direction not in ("source", "drain"):
            return error(400, f"unknown direction {direction!r}")
        if rank is not None and not 0 < rank <= c.svd.k:
            return error(400, f"rank must lie in [1, {c.svd.k}]")
        index = y * c.nx + x
        if direction == "source":
            echo = compression.reconstruct_source(c, index, rank=rank)
        else:
            echo = compression.reconstruct_drain(c, index, rank=rank)
        return JSONResponse(_raster_payload(echo.raw, c.nx, c.ny,
                                            {"location": {"x": x, "y": y},
                                             "direction": direction}))

    @app.get("/sessions/{sid}/cumulative")
    async def get_cumulative(request: Request, sid: str,
                             pixels: str | None = None, direction: str = "source"):
        session = store.get(sid)
        if session is None:
            return error(404, "unknown session")
        pixel_list = None
        body = await request.body()
        if body:
            try:
                payload = json.loads(body)
                pixel_list = [(int(p[0]), int(p[1])) for p in payload["pixels"]]
                direction = payload.get("direction", direction)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                return error(400, f"bad cumulative request body: {exc}")
        elif pixels:
            try:
                pixel_list = [
                    tuple(int(v) for v in chunk.split(","))
                    for chunk in pixels.split(";") if chunk
                ]
            except ValueError as exc:
                return error(400, f"bad pixels parameter: {exc}")
        if not pixel_list:
            return error(400, "no pixels given")
        c = session.compressed
        if direction not in ("source", "drain"):
            return error(400, f"unknown direction {direction!r}")
        total = np.zeros(c.dim)
        for x, y in pixel_list:
            if not (0 <= x < c.nx and 0 <= y < c.ny):
                return error(400, f"coordinates ({x}, {y}) out of range")
            index = y * c.nx + x
            if direction == "source":
                total += compression.reconstruct_source(c, index).raw
            else:
                total += compression.reconstruct_drain(c, index).raw
        return JSONResponse(_raster_payload(total, c.nx, c.ny,
                                            {"pixels": [list(p) for p in pixel_list],
                                             "direction": direction}))

    @app.get("/sessions/{sid}/spectrum")
    def get_spectrum(sid: str):
        session = store.get(sid)
        if session is None:
            return error(404, "unknown session")
        lines = [f"{i},{s:.17g}" for i, s in enumerate(session.compressed.svd.sigma, start=1)]
        return PlainTextResponse("\n".join(lines) + "\n", media_type="text/csv")

    @app.get("/sessions/{sid}/image")
    def get_image(sid: str, which: str = "original"):
        session = store.get(sid)
        if session is None:
            return error(404, "unknown session")
        if which not in ("original", "filtered"):
            return error(400, f"unknown image {which!r}")
        img = session.original if which == "original" else session.filtered
        return JSONResponse(_raster_payload(img.data, img.nx, img.ny, {"which": which}))

    return app


def _compression_config(params):
    allowed = {"rank", "rank_fraction", "power", "oversample", "seed", "epsilon",
               "hutchinson_probes", "diagonal_probes"}
    unknown = set(params) - allowed
    if unknown:
        raise ValueError(f"unknown compression parameters {sorted(unknown)}")
    if "rank" not in params and "rank_fraction" not in params:
        params = {**params, "rank_fraction": 0.025}
    return compression.CompressionConfig(**params)
