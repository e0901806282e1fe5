"""Editing service: project persistence, fit import, slider sessions,
conditioning rendering, and the wire protocol to the generation backend.

The service holds no neural networks. It owns the deterministic half of
the pipeline — shape coefficients, depth conditioning, bookkeeping — and
ships reference + conditioning images to an external HTTP backend for the
actual image synthesis. A loopback stub backend (see backend_stub.py)
stands in for that service during tests and demos.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
import uuid
from dataclasses import dataclass
from pathlib import Path

import cv2
import httpx
import numpy as np
from fastapi import FastAPI, File, Request, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response

from .bodymodel import BodyModel, skin
from .mapping import (
    AttributeMap,
    attributes_to_beta,
    measure,
)
from .render import Camera, depth_to_conditioning, render_depth

CANONICAL_PROMPTS = (
    "Make the person fatter",
    "Make the person thinner",
    "Make the person muscular",
)
NEUTRAL_PROMPT = "A photo of a person"
ALLOWED_PROMPTS = frozenset(CANONICAL_PROMPTS) | {NEUTRAL_PROMPT}

DEFAULT_BACKEND_PARAMS = {"steps": 30, "guidance": 2.5, "seed": 0}

ENV_DATA_DIR = "RESHAPEKIT_DATA_DIR"
ENV_BACKEND_URL = "RESHAPEKIT_BACKEND_URL"
ENV_MODEL_PATH = "RESHAPEKIT_MODEL_PATH"
ENV_MAP_PATH = "RESHAPEKIT_MAP_PATH"


class ServiceError(Exception):
    """Base service failure; ``status`` suggests the HTTP mapping."""

    status = 400


class ProjectNotFoundError(ServiceError):
    status = 404


class NoFitError(ServiceError):
    status = 409


class PromptError(ServiceError):
    status = 422


class BackendError(ServiceError):
    status = 502

    def __init__(self, message: str, attempts: list | None = None):
        super().__init__(message)
        self.attempts = attempts or []


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


class ProjectStore:
    """One directory per project: a JSON state file plus content-addressed
    blobs. Writes are temp-file-then-rename, so a crash can lose at most
    the in-flight update, never corrupt an existing state."""

    def __init__(self, data_dir: str | Path):
        self.root = Path(data_dir)
        (self.root / "projects").mkdir(parents=True, exist_ok=True)

    def _project_dir(self, project_id: str) -> Path:
        return self.root / "projects" / project_id

    def list_projects(self) -> list[str]:
        return sorted(p.name for p in (self.root / "projects").iterdir() if p.is_dir())

    def exists(self, project_id: str) -> bool:
        return (self._project_dir(project_id) / "state.json").exists()

    def save_state(self, state: dict) -> None:
        pdir = self._project_dir(state["id"])
        pdir.mkdir(parents=True, exist_ok=True)
        target = pdir / "state.json"
        tmp = pdir / "state.json.tmp"
        tmp.write_text(json.dumps(state, indent=2, sort_keys=True))
        tmp.replace(target)

    def load_state(self, project_id: str) -> dict:
        path = self._project_dir(project_id) / "state.json"
        if not path.exists():
            raise ProjectNotFoundError(f"no project {project_id!r}")
        return json.loads(path.read_text())

    def put_blob(self, project_id: str, data: bytes) -> str:
        digest = hashlib.sha256(data).hexdigest()
        bdir = self._project_dir(project_id) / "blobs"
        bdir.mkdir(parents=True, exist_ok=True)
        target = bdir / digest
        if not target.exists():
            tmp = bdir / f".{digest}.tmp"
            tmp.write_bytes(data)
            tmp.replace(target)
        return digest

    def get_blob(self, project_id: str, digest: str) -> bytes:
        path = self._project_dir(project_id) / "blobs" / digest
        if not path.exists():
            raise ServiceError(f"blob {digest[:12]}… missing from project {project_id!r}")
        return path.read_bytes()


# ---------------------------------------------------------------------------
# service core (framework-free)
# ---------------------------------------------------------------------------


@dataclass
class GenerationOutcome:
    record: dict
    image: bytes


class ReshapeService:
    """All service behavior, independent of any web framework.

    ``transport`` is handed to httpx and exists so tests can wire the
    backend client to an in-process app or a mock without a socket.
    """

    def __init__(
        self,
        model: BodyModel,
        attribute_map: AttributeMap,
        store: ProjectStore,
        backend_url: str | None = None,
        transport: httpx.BaseTransport | None = None,
        retry_base_delay: float = 0.5,
    ):
        self.model = model
        self.attribute_map = attribute_map
        self.store = store
        self.backend_url = backend_url
        self._transport = transport
        self._retry_base_delay = retry_base_delay
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _lock(self, project_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(project_id, threading.Lock())

    # -- projects ------------------------------------------------------

    def create_project(self, reference_png: bytes) -> dict:
        image = cv2.imdecode(np.frombuffer(reference_png, np.uint8), cv2.IMREAD_UNCHANGED)
        if image is None:
            raise ServiceError("reference image could not be decoded")
        project_id = uuid.uuid4().hex[:12]
        digest = self.store.put_blob(project_id, reference_png)
        state = {
            "id": project_id,
            "created_at": time.time(),
            "reference_blob": digest,
            "reference_size": [int(image.shape[1]), int(image.shape[0])],
            "fit": None,
            "history": [],
            "generations": [],
        }
        self.store.save_state(state)
        return state

    def get_state(self, project_id: str) -> dict:
        return self.store.load_state(project_id)

    # -- fit import ----------------------------------------------------

    def import_fit(self, project_id: str, fit_doc: dict) -> dict:
        with self._lock(project_id):
            state = self.store.load_state(project_id)
            beta, theta, camera, size = self._parse_fit(fit_doc)
            state["fit"] = {
                "beta": beta.tolist(),
                "theta": theta.tolist(),
                "camera": camera.to_dict(),
                "image_size": list(size),
                "imported_at": time.time(),
            }
            entry = self._make_history_entry(state, beta, kind="fit_import", edits={})
            state["history"].append(entry)
            self.store.save_state(state)
            return state

    def _parse_fit(self, fit_doc: dict):
        if not isinstance(fit_doc, dict):
            raise ServiceError("fit document must be a JSON object")
        missing = [k for k in ("beta", "theta", "camera") if k not in fit_doc]
        if missing:
            raise ServiceError(f"fit document lacks fields: {missing}")
        beta = np.asarray(fit_doc["beta"], dtype=np.float64).reshape(-1)
        if beta.shape[0] != self.model.num_betas:
            raise ServiceError(
                f"beta has {beta.shape[0]} entries, model expects {self.model.num_betas}"
            )
        theta = np.asarray(fit_doc["theta"], dtype=np.float64).reshape(-1)
        if theta.shape[0] != 3 * self.model.num_joints:
            raise ServiceError(
                f"theta has {theta.shape[0]} entries, model expects {3 * self.model.num_joints}"
            )
        try:
            camera = Camera.from_dict(fit_doc["camera"])
        except (KeyError, TypeError) as exc:
            raise ServiceError(f"camera document invalid: {exc}") from exc
        size = fit_doc.get("image_size", [768, 1024])
        if (
            not isinstance(size, (list, tuple))
            or len(size) != 2
            or any(int(v) <= 0 for v in size)
        ):
            raise ServiceError("image_size must be [width, height] of positive ints")
        return beta, theta, camera, (int(size[0]), int(size[1]))

    # -- sliders ---------------------------------------------------------

    def apply_sliders(self, project_id: str, edits: dict) -> dict:
        """Absolute attribute targets -> new β, conditioning render, history."""
        with self._lock(project_id):
            state = self.store.load_state(project_id)
            if state["fit"] is None:
                raise NoFitError("project has no imported fit")
            for name, value in edits.items():
                if name not in self.attribute_map.names:
                    raise ServiceError(f"unknown attribute {name!r}")
                if not np.isfinite(float(value)):
                    raise ServiceError(f"attribute {name!r} target must be finite")

            beta_now = np.asarray(self._current_beta(state), dtype=np.float64)
            beta_new = attributes_to_beta(
                self.model,
                self.attribute_map,
                beta_now,
                {k: float(v) for k, v in edits.items()},
            )
            entry = self._make_history_entry(state, beta_new, kind="sliders", edits=edits)
            state["history"].append(entry)
            self.store.save_state(state)
            return entry

    def _current_beta(self, state: dict) -> list:
        if state["history"]:
            return state["history"][-1]["beta"]
        return state["fit"]["beta"]

    def _make_history_entry(self, state, beta: np.ndarray, kind: str, edits: dict) -> dict:
        beta = np.asarray(beta, dtype=np.float64)
        png = self._render_conditioning_png(state, beta)
        blob = self.store.put_blob(state["id"], png)
        return {
            "index": len(state["history"]),
            "timestamp": time.time(),
            "kind": kind,
            "edits": {k: float(v) for k, v in edits.items()},
            "beta": beta.tolist(),
            "slider_state": {k: float(v) for k, v in measure(self.model, beta).items()},
            "conditioning_blob": blob,
        }

    def _render_conditioning_png(self, state: dict, beta: np.ndarray) -> bytes:
        fit = state["fit"]
        camera = Camera.from_dict(fit["camera"])
        width, height = fit["image_size"]
        mesh = skin(self.model, beta, np.asarray(fit["theta"]))
        cond = depth_to_conditioning(render_depth(mesh, camera, width, height))
        ok, buf = cv2.imencode(".png", cond)
        if not ok:
            raise ServiceError("conditioning image encode failed")
        return buf.tobytes()

    def get_conditioning_png(self, project_id: str) -> bytes:
        state = self.store.load_state(project_id)
        if not state["history"]:
            raise NoFitError("project has no conditioning image yet")
        return self.store.get_blob(project_id, state["history"][-1]["conditioning_blob"])

    def get_reference_png(self, project_id: str) -> bytes:
        state = self.store.load_state(project_id)
        return self.store.get_blob(project_id, state["reference_blob"])

    def get_mesh(self, project_id: str) -> dict:
        state = self.store.load_state(project_id)
        if state["fit"] is None:
            raise NoFitError("project has no imported fit")
        beta = np.asarray(self._current_beta(state), dtype=np.float64)
        mesh = skin(self.model, beta, np.asarray(state["fit"]["theta"]))
        return {
            "vertices": mesh.vertices.tolist(),
            "faces": mesh.faces.tolist(),
        }

    # -- history determinism ---------------------------------------------

    def replay_history(self, project_id: str) -> list[np.ndarray]:
        """Recompute every β from the imported fit and the recorded edits."""
        state = self.store.load_state(project_id)
        if state["fit"] is None:
            return []
        betas = []
        beta = np.asarray(state["fit"]["beta"], dtype=np.float64)
        for entry in state["history"]:
            if entry["kind"] == "fit_import":
                beta = np.asarray(state["fit"]["beta"], dtype=np.float64)
            else:
                beta = attributes_to_beta(
                    self.model, self.attribute_map, beta, entry["edits"]
                )
            betas.append(beta)
        return betas

    def verify_history(self, project_id: str) -> bool:
        """True iff replay reproduces every stored β bit-exactly."""
        state = self.store.load_state(project_id)
        replayed = self.replay_history(project_id)
        stored = [np.asarray(e["beta"], dtype=np.float64) for e in state["history"]]
        return len(replayed) == len(stored) and all(
            np.array_equal(a, b) for a, b in zip(replayed, stored)
        )

    # -- generation --------------------------------------------------------

    def request_generation(
        self,
        project_id: str,
        prompt: str,
        params: dict | None = None,
        history_index: int | None = None,
    ) -> GenerationOutcome:
        if prompt not in ALLOWED_PROMPTS:
            raise PromptError(
                f"prompt must be one of {sorted(ALLOWED_PROMPTS)}; got {prompt!r}"
            )
        if self.backend_url is None:
            raise BackendError("no generation backend configured")

        with self._lock(project_id):
            state = self.store.load_state(project_id)
            if not state["history"]:
                raise NoFitError("nothing to generate from; import a fit first")
            if history_index is None:
                history_index = state["history"][-1]["index"]
            matching = [e for e in state["history"] if e["index"] == history_index]
            if not matching:
                raise ServiceError(f"history entry {history_index} does not exist")
            entry = matching[0]

            merged = {**DEFAULT_BACKEND_PARAMS, **(params or {})}
            reference = self.store.get_blob(project_id, state["reference_blob"])
            conditioning = self.store.get_blob(project_id, entry["conditioning_blob"])
            digest = hashlib.sha256(
                json.dumps(
                    {
                        "prompt": prompt,
                        "reference_sha256": state["reference_blob"],
                        "conditioning_sha256": entry["conditioning_blob"],
                        "params": merged,
                    },
                    sort_keys=True,
                ).encode()
            ).hexdigest()

            image, meta, attempts = self._call_backend(prompt, reference, conditioning, merged)

            output_blob = self.store.put_blob(project_id, image)
            record = {
                "index": len(state["generations"]),
                "timestamp": time.time(),
                "history_index": history_index,
                "prompt": prompt,
                "params": merged,
                "request_digest": digest,
                "output_blob": output_blob,
                "backend_meta": meta,
                "attempts": attempts,
            }
            state["generations"].append(record)
            self.store.save_state(state)
            return GenerationOutcome(record=record, image=image)

    def _call_backend(self, prompt, reference_png, conditioning_png, params):
        """POST /generate with retries on transport failure.

        An HTTP error status means the backend is alive and rejecting the
        request: its payload is surfaced verbatim with no retry. Transport
        errors retry 3 times with exponential backoff.
        """
        attempts = []
        with httpx.Client(
            base_url=self.backend_url, transport=self._transport, timeout=60.0
        ) as client:
            for attempt in range(3):
                try:
                    response = client.post(
                        "/generate",
                        files={
                            "reference": ("reference.png", reference_png, "image/png"),
                            "conditioning": ("conditioning.png", conditioning_png, "image/png"),
                        },
                        data={"params": json.dumps({"prompt": prompt, **params})},
                    )
                except httpx.TransportError as exc:
                    attempts.append({"attempt": attempt + 1, "error": str(exc)})
                    if attempt < 2:
                        time.sleep(self._retry_base_delay * (2**attempt))
                    continue
                if response.status_code != 200:
                    raise BackendError(
                        f"backend returned {response.status_code}: {response.text}",
                        attempts,
                    )
                meta = {}
                if "x-generation-meta" in response.headers:
                    meta = json.loads(response.headers["x-generation-meta"])
                return response.content, meta, attempts
        raise BackendError("backend unreachable after 3 attempts", attempts)

    # -- misc ---------------------------------------------------------------

    def health(self) -> dict:
        from . import __version__

        return {
            "status": "ok",
            "version": __version__,
            "model": {
                "vertices": self.model.num_vertices,
                "joints": self.model.num_joints,
                "betas": self.model.num_betas,
            },
            "backend": self.backend_url,
        }

    def map_info(self) -> dict:
        return self.attribute_map.to_dict()


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------


def default_attribute_map(model: BodyModel) -> AttributeMap:
    """Deterministic fallback map fitted on a measured corpus of the model.

    The map is fitted on as many attributes as the model has shape
    coefficients (a square linear system). Editing one attribute pins the
    remaining ones at their current values; with more attributes than
    coefficients that solve becomes a least-squares compromise in which
    near-collinear girth measurements can cancel the requested change, so
    sliders would stop responding. A square, well-conditioned system keeps
    every slider effective.
    """
    from .mapping import ATTRIBUTE_NAMES, build_measurement_corpus, fit_attribute_map

    betas, attrs = build_measurement_corpus(model, n=200, seed=7)
    names = ATTRIBUTE_NAMES[: min(model.num_betas, len(ATTRIBUTE_NAMES))]
    columns = [ATTRIBUTE_NAMES.index(n) for n in names]
    return fit_attribute_map(betas, attrs[:, columns], names=names)


def build_service(
    data_dir: str | Path | None = None,
    model_path: str | Path | None = None,
    map_path: str | Path | None = None,
    backend_url: str | None = None,
    transport: httpx.BaseTransport | None = None,
    retry_base_delay: float = 0.5,
) -> ReshapeService:
    """Construct a service from explicit arguments, falling back to env vars
    and finally to the built-in test model / derived attribute map."""
    from .bodymodel import load_model, make_test_model
    from .mapping import load_map

    data_dir = data_dir or os.environ.get(ENV_DATA_DIR) or "./reshapekit-data"
    model_path = model_path or os.environ.get(ENV_MODEL_PATH)
    map_path = map_path or os.environ.get(ENV_MAP_PATH)
    backend_url = backend_url or os.environ.get(ENV_BACKEND_URL)

    model = load_model(model_path) if model_path else make_test_model(seed=0)
    amap = load_map(map_path) if map_path else default_attribute_map(model)
    return ReshapeService(
        model=model,
        attribute_map=amap,
        store=ProjectStore(data_dir),
        backend_url=backend_url,
        transport=transport,
        retry_base_delay=retry_base_delay,
    )


def create_app(service: ReshapeService | None = None, **kwargs):
    """FastAPI wrapper; every route delegates to the framework-free core."""
    app = FastAPI(title="reshapekit", docs_url=None, redoc_url=None)
    # Browser clients are served from a different origin than the API.
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    svc = service or build_service(**kwargs)
    app.state.service = svc

    @app.exception_handler(ServiceError)
    async def _service_error(request: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status, content={"error": str(exc)})

    @app.get("/healthz")
    async def healthz():
        return svc.health()

    @app.get("/map")
    async def attribute_map():
        return svc.map_info()

    @app.post("/projects")
    async def create_project(reference: UploadFile = File(...)):
        state = svc.create_project(await reference.read())
        return {"project_id": state["id"]}

    @app.post("/projects/{project_id}/fit")
    async def import_fit(project_id: str, fit_doc: dict):
        state = svc.import_fit(project_id, fit_doc)
        return {
            "project_id": project_id,
            "history_index": state["history"][-1]["index"],
            "slider_state": state["history"][-1]["slider_state"],
        }

    @app.post("/projects/{project_id}/sliders")
    async def apply_sliders(project_id: str, body: dict):
        edits = body.get("edits", body)
        entry = svc.apply_sliders(project_id, edits)
        return {
            "history_index": entry["index"],
            "beta": entry["beta"],
            "slider_state": entry["slider_state"],
        }

    @app.get("/projects/{project_id}/conditioning.png")
    async def conditioning_png(project_id: str):
        return Response(content=svc.get_conditioning_png(project_id), media_type="image/png")

    @app.get("/projects/{project_id}/reference.png")
    async def reference_png(project_id: str):
        return Response(content=svc.get_reference_png(project_id), media_type="image/png")

    @app.get("/projects/{project_id}/mesh.json")
    async def mesh_json(project_id: str):
        return svc.get_mesh(project_id)

    @app.post("/projects/{project_id}/generate")
    async def generate(project_id: str, body: dict):
        outcome = svc.request_generation(
            project_id,
            prompt=body.get("prompt", ""),
            params=body.get("params"),
            history_index=body.get("history_index"),
        )
        return outcome.record

    @app.get("/projects/{project_id}/generations/{index}/output.png")
    async def generation_output(project_id: str, index: int):
        state = svc.get_state(project_id)
        records = [g for g in state["generations"] if g["index"] == index]
        if not records:
            raise ProjectNotFoundError(f"no generation {index} in {project_id!r}")
        blob = svc.store.get_blob(project_id, records[0]["output_blob"])
        return Response(content=blob, media_type="image/png")

    @app.get("/projects/{project_id}/history")
    async def history(project_id: str):
        state = svc.get_state(project_id)
        return {
            "project_id": project_id,
            "fit": state["fit"],
            "entries": state["history"],
            "generations": state["generations"],
        }

    return app
