import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from stir.types import Clip, FrameRef


def make_frames(n, video_id="vid", fps=3.0, start=0):
    return [FrameRef(video_id, start + i, (start + i) / fps) for i in range(n)]


def make_clips(video_id, lengths, fps=3.0):
    clips = []
    pos = 0
    for length in lengths:
        frames = tuple(FrameRef(video_id, i, i / fps) for i in range(pos, pos + length))
        clips.append(Clip(video_id, pos, pos + length, frames))
        pos += length
    return clips


class StubBackendServer:
    """In-process HTTP stub for the /embed, /score and /health protocol.

    `embed_fn(body) -> list of vectors` and `score_fn(body) -> list of
    5-logit rows` are injected per test; every request is recorded.
    """

    def __init__(self, dim=8, embed_fn=None, score_fn=None):
        self.dim = dim
        self.requests = []
        rng = np.random.default_rng(0)

        def default_embed(body):
            count = len(body.get("frame_indices") or [None])
            if body["kind"] in ("clip", "query"):
                count = 1
            return rng.normal(size=(count, self.dim)).tolist()

        def default_score(body):
            return [[0.0, 0.0, 0.0, 0.0, 100.0] for _ in body["frame_indices"]]

        self.embed_fn = embed_fn or default_embed
        self.score_fn = score_fn or default_score

        stub = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def _reply(self, code, payload):
                data = json.dumps(payload).encode()
                self.send_response(code)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def do_GET(self):
                stub.requests.append(("GET", self.path, None))
                if self.path == "/health":
                    self._reply(200, {"status": "ok", "dim": stub.dim})
                else:
                    self._reply(404, {"error": "not found"})

            def do_POST(self):
                body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                stub.requests.append(("POST", self.path, body))
                try:
                    if self.path == "/embed":
                        self._reply(200, {"vectors": stub.embed_fn(body)})
                    elif self.path == "/score":
                        self._reply(200, {"logits": stub.score_fn(body)})
                    else:
                        self._reply(404, {"error": "not found"})
                except Exception as exc:  # noqa: BLE001 - surface as HTTP 500
                    self._reply(500, {"error": str(exc)})

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def endpoint(self):
        host, port = self.server.server_address
        return f"http://{host}:{port}"

    def close(self):
        self.server.shutdown()
        self.server.server_close()


