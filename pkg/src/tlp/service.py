"""Local HTTP service for case browsing and prompt-conditioned synthesis.

Endpoints (JSON bodies, CORS enabled for local UI development):

* ``GET /api/cases`` -- ``[{"id", "split", "resolution"}, ...]`` in id order.
* ``GET /api/cases/<id>/images`` -- x1/x2/y/lesion as base64 grayscale PNG
  plus the affine intensity window used for 8-bit quantization.
* ``POST /api/synthesize`` -- body ``{"case_id", "prompt", "return_metrics"}``
  where ``prompt`` is absent/null (no prompt), the literal string
  ``"lesion"`` (stored ground-truth mask) or a run-length encoded mask
  ``{"height", "width", "runs": [...]}``. Runs alternate zero-runs and
  one-runs, row-major, starting with a zero-run (a leading 0 is legal and
  means the mask starts with ones). Run lengths must sum to height*width.

Synthesis requests are serialized through a lock (one model instance);
read-only endpoints run concurrently. Responses carry the checkpoint's
SHA-256 and the model's init seed so sessions are auditable. Status codes:
400 malformed prompt/body, 404 unknown image id, 409 no checkpoint loaded,
422 unknown case for synthesis, 500 manifest corruption.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .errors import TlpError
from .metrics import nmse, psnr, ssim
from .model import load_checkpoint
from .phantom import read_case, read_manifest
from .io import encode_gray_png
from .tensor import Tensor, no_grad


def rle_decode(spec: dict, expected_shape: tuple[int, int]) -> np.ndarray:
    """Decode the documented RLE mask encoding; raises ValueError when malformed."""
    if not isinstance(spec, dict):
        raise ValueError("prompt must be an object with height/width/runs")
    try:
        height, width = int(spec["height"]), int(spec["width"])
        runs = list(spec["runs"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed RLE mask: {exc}") from exc
    if (height, width) != tuple(expected_shape):
        raise ValueError(f"mask extents {height}x{width} do not match case {expected_shape}")
    if any((not isinstance(r, int)) or r < 0 for r in runs):
        raise ValueError("run lengths must be non-negative integers")
    if sum(runs) != height * width:
        raise ValueError(f"run lengths sum to {sum(runs)}, expected {height * width}")
    flat = np.zeros(height * width, dtype=np.float32)
    pos, value = 0, 0.0
    for run in runs:
        if value > 0 and run:
            flat[pos : pos + run] = 1.0
        pos += run
        value = 1.0 - value
    return flat.reshape(height, width)


def rle_encode(mask: np.ndarray) -> dict:
    """Inverse of rle_decode (used by tests and scripted clients)."""
    flat = (np.asarray(mask).reshape(-1) > 0).astype(np.int64)
    runs, current, count = [], 0, 0
    for v in flat:
        if v == current:
            count += 1
        else:
            runs.append(count)
            current, count = v, 1
    runs.append(count)
    return {"height": mask.shape[0], "width": mask.shape[1], "runs": [int(r) for r in runs]}


def _png_b64(img: np.ndarray, lo: float, hi: float) -> dict:
    q = np.clip((np.asarray(img, dtype=np.float64) - lo) / (hi - lo) * 255.0, 0, 255)
    blob = encode_gray_png(q.round().astype(np.uint8))
    return {
        "png_base64": base64.b64encode(blob).decode("ascii"),
        "window": {"lo": lo, "hi": hi},
    }


class InferenceService:
    """Behaviour behind the HTTP handler; usable directly from Python."""

    def __init__(self, data_dir: str, ckpt_path: str | None = None):
        self.data_dir = data_dir
        self.manifest = None
        self.manifest_error = None
        try:
            self.manifest = read_manifest(data_dir)
        except TlpError as exc:
            self.manifest_error = str(exc)
        self.generator = None
        self.checkpoint_hash = None
        if ckpt_path is not None:
            self.generator = load_checkpoint(ckpt_path)
            if self.generator.kind != "generator":
                raise TlpError(f"checkpoint holds a {self.generator.kind}, not a generator")
            with open(ckpt_path, "rb") as fh:
                self.checkpoint_hash = hashlib.sha256(fh.read()).hexdigest()
        self._model_lock = threading.Lock()
        self._case_cache: dict[str, object] = {}
        self._cache_lock = threading.Lock()

    # -- data access ------------------------------------------------------------

    def _splits(self) -> dict[str, str]:
        return {c["id"]: c["split"] for c in self.manifest["cases"]}

    def _load_case(self, case_id: str):
        with self._cache_lock:
            if case_id not in self._case_cache:
                self._case_cache[case_id] = read_case(os.path.join(self.data_dir, case_id))
            return self._case_cache[case_id]

    # -- endpoint bodies ----------------------------------------------------------

    def list_cases(self) -> list[dict]:
        resolution = self.manifest.get("resolution")
        return [
            {"id": cid, "split": split, "resolution": [resolution, resolution]}
            for cid, split in sorted(self._splits().items())
        ]

    def case_images(self, case_id: str) -> dict:
        case = self._load_case(case_id)
        return {
            "id": case_id,
            "x1": _png_b64(case.x1, -1.0, 1.0),
            "x2": _png_b64(case.x2, -1.0, 1.0),
            "y": _png_b64(case.y, -1.0, 1.0),
            "lesion": _png_b64(case.lesion, 0.0, 1.0),
        }

    def synthesize(self, request: dict) -> dict:
        case_id = request.get("case_id")
        if not isinstance(case_id, str):
            raise ValueError("case_id must be a string")
        if case_id not in self._splits():
            raise KeyError(case_id)
        case = self._load_case(case_id)
        prompt_spec = request.get("prompt")
        if prompt_spec in (None, "none"):
            prompt = np.zeros_like(case.lesion)
        elif prompt_spec == "lesion":
            prompt = case.lesion
        else:
            prompt = rle_decode(prompt_spec, case.lesion.shape)

        gen = self.generator
        with self._model_lock:
            x2 = None if gen.config.single_input else Tensor(case.x2[None, None])
            with no_grad():
                out = gen.forward(Tensor(case.x1[None, None]), x2, Tensor(prompt[None, None]))
        y_hat = out.data[0, 0]
        body = {
            "case_id": case_id,
            "y_hat": _png_b64(y_hat, -1.0, 1.0),
            "stats": {
                "min": float(y_hat.min()),
                "max": float(y_hat.max()),
                "mean": float(y_hat.mean()),
            },
            "checkpoint_hash": self.checkpoint_hash,
            "model_seed": gen.init_seed,
        }
        if request.get("return_metrics"):
            body["metrics"] = {
                "psnr_db": psnr(y_hat, case.y),
                "ssim": ssim(y_hat, case.y),
                "nmse": nmse(y_hat, case.y),
            }
        return body

    def make_server(self, host: str = "127.0.0.1", port: int = 8700) -> ThreadingHTTPServer:
        service = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):  # keep test output quiet
                pass

            def _send(self, code: int, payload: dict | list):
                blob = json.dumps(payload).encode("utf-8")
                self.send_response(code)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(blob)))
                self.send_header("Access-Control-Allow-Origin", "*")
                self.end_headers()
                self.wfile.write(blob)

            def do_OPTIONS(self):
                self.send_response(204)
                self.send_header("Access-Control-Allow-Origin", "*")
                self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
                self.send_header("Access-Control-Allow-Headers", "Content-Type")
                self.end_headers()

            def do_GET(self):
                parts = [p for p in self.path.split("?")[0].split("/") if p]
                if parts == ["api", "cases"]:
                    if service.manifest is None:
                        self._send(500, {"error": f"manifest unavailable: {service.manifest_error}"})
                        return
                    self._send(200, service.list_cases())
                    return
                if len(parts) == 4 and parts[:2] == ["api", "cases"] and parts[3] == "images":
                    if service.manifest is None:
                        self._send(500, {"error": f"manifest unavailable: {service.manifest_error}"})
                        return
                    case_id = parts[2]
                    if case_id not in service._splits():
                        self._send(404, {"error": f"unknown case {case_id!r}"})
                        return
                    try:
                        self._send(200, service.case_images(case_id))
                    except TlpError as exc:
                        self._send(500, {"error": str(exc)})
                    return
                self._send(404, {"error": f"no route for {self.path!r}"})

            def do_POST(self):
                if self.path.split("?")[0] != "/api/synthesize":
                    self._send(404, {"error": f"no route for {self.path!r}"})
                    return
                if service.manifest is None:
                    self._send(500, {"error": f"manifest unavailable: {service.manifest_error}"})
                    return
                if service.generator is None:
                    self._send(409, {"error": "no checkpoint loaded"})
                    return
                try:
                    length = int(self.headers.get("Content-Length", "0"))
                    request = json.loads(self.rfile.read(length).decode("utf-8"))
                    if not isinstance(request, dict):
                        raise ValueError("request body must be a JSON object")
                except (json.JSONDecodeError, UnicodeDecodeError, ValueError) as exc:
                    self._send(400, {"error": f"bad request body: {exc}"})
                    return
                try:
                    self._send(200, service.synthesize(request))
                except KeyError as exc:
                    self._send(422, {"error": f"unknown case {exc.args[0]!r}"})
                except ValueError as exc:
                    self._send(400, {"error": str(exc)})
                except TlpError as exc:
                    self._send(500, {"error": str(exc)})

        return ThreadingHTTPServer((host, port), Handler)
