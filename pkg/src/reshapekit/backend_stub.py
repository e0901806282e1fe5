"""Loopback generation backend.

Speaks the same wire protocol as a real diffusion backend — multipart
POST /generate with a reference image, a conditioning image, and a JSON
parameter blob — but synthesizes nothing: it returns the conditioning
image tinted by a prompt-and-seed-derived color. That is enough to
exercise the full edit → render → generate loop end to end, verify that
conditioning actually reaches the backend, and keep outputs
deterministic for a given request.
"""

from __future__ import annotations

import hashlib
import json

import cv2
import numpy as np
from fastapi import FastAPI, File, Form, UploadFile
from fastapi.responses import JSONResponse, Response

REQUIRED_PARAM_KEYS = ("prompt", "steps", "guidance", "seed")


def tint_color(prompt: str, seed: int) -> tuple[int, int, int]:
    """Deterministic RGB tint from the prompt text and the seed."""
    digest = hashlib.sha256(f"{prompt}|{seed}".encode()).digest()
    # Keep channels in [96, 223] so the tint never crushes the grayscale
    # structure of the conditioning image to black or white.
    return tuple(96 + (b % 128) for b in digest[:3])


def render_stub_image(conditioning_png: bytes, prompt: str, seed: int) -> bytes:
    gray = cv2.imdecode(np.frombuffer(conditioning_png, np.uint8), cv2.IMREAD_GRAYSCALE)
    if gray is None:
        raise ValueError("conditioning payload is not a decodable image")
    r, g, b = tint_color(prompt, seed)
    scale = gray.astype(np.float64) / 255.0
    rgb = np.stack(
        [scale * b, scale * g, scale * r], axis=-1  # cv2 writes BGR
    )
    ok, buf = cv2.imencode(".png", np.round(rgb).astype(np.uint8))
    if not ok:
        raise ValueError("stub image encode failed")
    return buf.tobytes()


def create_stub_app():
    """FastAPI app implementing POST /generate and GET /healthz."""
    app = FastAPI(title="reshapekit-stub-backend", docs_url=None, redoc_url=None)

    @app.get("/healthz")
    async def healthz():
        return {"status": "ok", "kind": "stub"}

    @app.post("/generate")
    async def generate(
        reference: UploadFile = File(...),
        conditioning: UploadFile = File(...),
        params: str = Form(...),
    ):
        try:
            parsed = json.loads(params)
        except json.JSONDecodeError:
            return JSONResponse(status_code=400, content={"error": "params is not JSON"})
        missing = [k for k in REQUIRED_PARAM_KEYS if k not in parsed]
        if missing:
            return JSONResponse(
                status_code=400, content={"error": f"params lacks keys: {missing}"}
            )
        reference_bytes = await reference.read()
        conditioning_bytes = await conditioning.read()
        try:
            image = render_stub_image(
                conditioning_bytes, parsed["prompt"], int(parsed["seed"])
            )
        except ValueError as exc:
            return JSONResponse(status_code=400, content={"error": str(exc)})
        meta = {
            "kind": "stub",
            "prompt": parsed["prompt"],
            "seed": int(parsed["seed"]),
            "steps": parsed["steps"],
            "guidance": parsed["guidance"],
            "reference_sha256": hashlib.sha256(reference_bytes).hexdigest(),
            "conditioning_sha256": hashlib.sha256(conditioning_bytes).hexdigest(),
        }
        return Response(
            content=image,
            media_type="image/png",
            headers={"X-Generation-Meta": json.dumps(meta, sort_keys=True)},
        )

    return app
