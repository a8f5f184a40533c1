"""HTTP routing gateway and a mock completion backend."""
from __future__ import annotations

import asyncio
import json
import threading
import time
from pathlib import Path

import httpx
import uvicorn
from fastapi import FastAPI, Request
from fastapi.concurrency import run_in_threadpool
from fastapi.responses import JSONResponse

from .checkpoint import load_checkpoint
from .config import GatewayConfig


class Stats:
    """Per-model selection counts, updated under a lock."""

    def __init__(self, names: list[str]):
        self._lock = threading.Lock()
        self._counts = {n: 0 for n in names}

    def record(self, name: str) -> None:
        with self._lock:
            self._counts[name] += 1

    def snapshot(self) -> dict:
        with self._lock:
            counts = dict(self._counts)
        return {"counts": counts, "total": sum(counts.values())}


async def _query_field(request: Request):
    """Return (query, None) or (None, error response)."""
    try:
        body = json.loads(await request.body())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        return None, JSONResponse({"error": "malformed JSON body", "detail": str(exc)}, status_code=400)
    if not isinstance(body, dict):
        return None, JSONResponse({"error": "body must be a JSON object"}, status_code=400)
    q = body.get("query")
    if not isinstance(q, str):
        return None, JSONResponse({"error": "invalid field", "field": "query",
                                   "detail": "missing" if q is None else f"expected string, got {type(q).__name__}"},
                                  status_code=400)
    return q, None


def create_app(config: GatewayConfig, router=None) -> FastAPI:
    """Gateway app; ``router`` defaults to the checkpoint named in ``config``."""
    router = router if router is not None else load_checkpoint(config.checkpoint)
    config.check_models(router.n_models)
    names = {b.index: b.name for b in config.backends}
    stats = Stats([names[i] for i in sorted(names)])
    app = FastAPI(title="routing gateway")
    app.state.router = router
    app.state.stats = stats

    async def decide(query: str) -> dict:
        d = await run_in_threadpool(router.route, query)
        return {"model": names[d.index], "index": d.index, "scores": [float(s) for s in d.scores],
                "router_latency_ms": d.latency_ms}

    @app.post("/route")
    async def route_endpoint(request: Request):
        query, err = await _query_field(request)
        if err is not None:
            return err
        try:
            out = await decide(query)
        except ValueError as exc:
            return JSONResponse({"error": "input rejected", "field": "query", "detail": str(exc)}, status_code=400)
        stats.record(out["model"])
        return out

    @app.post("/generate")
    async def generate_endpoint(request: Request):
        if config.mode != "route-and-proxy":
            return JSONResponse({"error": "generation disabled in route-only mode"}, status_code=409)
        query, err = await _query_field(request)
        if err is not None:
            return err
        try:
            out = await decide(query)
        except ValueError as exc:
            return JSONResponse({"error": "input rejected", "field": "query", "detail": str(exc)}, status_code=400)
        stats.record(out["model"])
        backend = config.backend(out["index"])
        t0 = time.perf_counter()
        try:
            async with httpx.AsyncClient(timeout=backend.timeout_ms / 1000.0) as client:
                resp = await client.post(backend.url.rstrip("/") + "/complete", json={"prompt": query})
            resp.raise_for_status()
            text = resp.json()["text"]
        except httpx.TimeoutException:
            return JSONResponse({**out, "error": f"backend {backend.name} timed out after {backend.timeout_ms} ms"},
                                status_code=504)
        except (httpx.HTTPError, KeyError, ValueError) as exc:
            return JSONResponse({**out, "error": f"backend {backend.name} failed: {exc}"}, status_code=502)
        return {**out, "text": text, "backend_latency_ms": (time.perf_counter() - t0) * 1e3}

    @app.get("/healthz")
    async def healthz():
        return {"status": "ok", "router": getattr(router, "kind", "router"), "n_models": router.n_models,
                "mode": config.mode, "metadata": getattr(router, "metadata", {})}

    @app.get("/stats")
    async def stats_endpoint():
        return stats.snapshot()

    return app


def create_mock_app(name: str, delay_ms: float = 0.0) -> FastAPI:
    """Deterministic completion stub: ``{"prompt"} -> {"text"}`` mentioning ``name``."""
    app = FastAPI(title=f"mock backend {name}")

    @app.post("/complete")
    async def complete(request: Request):
        try:
            body = json.loads(await request.body())
            prompt = body["prompt"]
        except (json.JSONDecodeError, KeyError, TypeError):
            return JSONResponse({"error": "expected {\"prompt\": text}"}, status_code=400)
        if delay_ms:
            await asyncio.sleep(delay_ms / 1000.0)
        return {"text": f"[{name}] canned completion for: {prompt}"}

    return app


class ServerThread:
    """Run an ASGI app with uvicorn on a background thread (port 0 picks a free port)."""

    def __init__(self, app, host: str = "127.0.0.1", port: int = 0):
        self.server = uvicorn.Server(uvicorn.Config(app, host=host, port=port, log_level="warning",
                                                    lifespan="off"))
        self.thread = threading.Thread(target=self.server.run, daemon=True)

    def __enter__(self) -> "ServerThread":
        self.thread.start()
        deadline = time.monotonic() + 10
        while not self.server.started:
            if time.monotonic() > deadline or not self.thread.is_alive():
                raise RuntimeError("server failed to start")
            time.sleep(0.01)
        return self

    @property
    def url(self) -> str:
        host, port = self.server.servers[0].sockets[0].getsockname()[:2]
        return f"http://{host}:{port}"

    def stop(self) -> None:
        self.server.should_exit = True
        self.thread.join(timeout=10)

    def __exit__(self, *exc) -> None:
        self.stop()


def serve(config: GatewayConfig | str | Path) -> None:
    if not isinstance(config, GatewayConfig):
        config = GatewayConfig.load(config)
    host, port = config.host_port()
    uvicorn.run(create_app(config), host=host, port=port, log_level="info")


__all__ = ["create_app", "create_mock_app", "ServerThread", "serve", "Stats"]
