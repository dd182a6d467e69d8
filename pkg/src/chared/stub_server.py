"""Reference HTTP server for the next-token wire protocol.

Serves a toy model behind ``POST /v1/next_token_distribution`` with the
request/response shapes the remote provider expects.  Useful for
integration tests, for recording offline replay fixtures, and as a
worked example of what a real backend adapter must produce.
"""

from __future__ import annotations

import json
import math
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .core import EOS_ATOM
from .providers import ToyLanguageModel


class _Handler(BaseHTTPRequestHandler):
    model: ToyLanguageModel

    def do_POST(self):  # noqa: N802 (http.server API)
        if self.path != "/v1/next_token_distribution":
            self.send_error(404)
            return
        length = int(self.headers.get("Content-Length", 0))
        try:
            body = json.loads(self.rfile.read(length))
            prompt = body["prompt"]
        except (json.JSONDecodeError, KeyError):
            self.send_error(400, "body must be JSON with a 'prompt' field")
            return
        try:
            dist = self.model.conditional(prompt)
        except Exception as exc:
            self.send_error(422, str(exc))
            return
        tokens = []
        eos_logprob = None
        for token, p in sorted(dist.entries.items()):
            if p <= 0.0:
                continue
            if token == EOS_ATOM:
                eos_logprob = math.log(p)
            else:
                tokens.append({"text": token, "logprob": math.log(p)})
        payload: dict = {"tokens": tokens}
        if eos_logprob is not None:
            payload["eos_logprob"] = eos_logprob
        data = json.dumps(payload).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):  # keep test output quiet
        pass


def serve_toy_model(model: ToyLanguageModel, host: str = "127.0.0.1", port: int = 0):
    """Start a background server for ``model``; returns (server, base_url).

    Call ``server.shutdown()`` when done.
    """
    handler = type("BoundHandler", (_Handler,), {"model": model})
    server = ThreadingHTTPServer((host, port), handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, f"http://{host}:{server.server_address[1]}"
