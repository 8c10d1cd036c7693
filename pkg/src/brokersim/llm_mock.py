"""Scripted chat-completion endpoint for exercising the adapter in CI.

Serves the generic {model, temperature, messages} wire format over local HTTP
and answers as one of the rule-based carrier personas.  The handler is
stateless: persona and rate band come from the bracketed trailer the adapter
embeds in the carrier system prompt, and the negotiation so far is replayed
from the message history on every request.  Failure injection knobs cover the
client's retry, malformed-body, timeout, truncation, and reparse paths.
"""

from __future__ import annotations

import json
import re
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .carrier import PERSONAS, CarrierState, ResponseKind, carrier_respond
from .domain import Load, ProtocolConfig
from .llm_adapter import format_money

_TRAILER_RE = re.compile(
    r"\[sim\] persona=(\w+) r_min=([\d.]+) r_max=([\d.]+)"
)
_ROUND_RE = re.compile(r"\[Round (\d+) of (\d+)\.")
_AMOUNT_RE = re.compile(r"\$\s?(\d{1,3}(?:,\d{3})+|\d+)(?:\.(\d{1,2}))?")

_GARBAGE_REPLY = "Hmm, let me run the numbers and get back to you."


def _amounts(text: str) -> list[float]:
    out = []
    for m in _AMOUNT_RE.finditer(text):
        whole = m.group(1).replace(",", "")
        out.append(float(f"{whole}.{m.group(2)}" if m.group(2) else whole))
    return out


def scripted_carrier_reply(messages: list[dict]) -> str:
    """Answer the latest broker message the way the matching rule-based
    carrier would, replaying all prior rounds to rebuild its state."""
    system = next(m["content"] for m in messages if m["role"] == "system")
    trailer = _TRAILER_RE.search(system)
    if trailer is None:
        raise ValueError("carrier system prompt lacks the [sim] trailer")
    persona = trailer.group(1)
    r_min, r_max = float(trailer.group(2)), float(trailer.group(3))
    load = Load(
        id="mock-load", origin="A", destination="B",
        r_min=r_min, r_max=r_max, r_target=(r_min + r_max) / 2,
    )

    pairs = []
    max_rounds = 10
    for msg in messages:
        if msg["role"] != "user":
            continue
        note = _ROUND_RE.search(msg["content"])
        offers = _amounts(msg["content"])
        if note and offers:
            pairs.append((int(note.group(1)), offers[-1]))
            max_rounds = int(note.group(2))
    if not pairs:
        return "Share a number and we can talk."

    params = PERSONAS[persona]
    config = ProtocolConfig(max_rounds=max_rounds)
    state = CarrierState()
    response = None
    for round_no, offer in pairs:
        response = carrier_respond(params, state, round_no, offer, load, config)

    if response.kind is ResponseKind.ACCEPT:
        return f"Deal. I accept ${format_money(response.rate)} for this load."
    if response.kind is ResponseKind.WALK_AWAY:
        return "No, I'll have to pass on this one."
    return f"Best I can do is ${format_money(response.rate)} for this lane."


class _Handler(BaseHTTPRequestHandler):
    def do_POST(self):  # noqa: N802 (http.server API)
        owner: MockLlmServer = self.server.owner  # type: ignore[attr-defined]
        if self.path != "/chat/completions":
            self._send(404, {"error": "not found"})
            return
        length = int(self.headers.get("Content-Length", 0))
        try:
            payload = json.loads(self.rfile.read(length))
        except ValueError:
            self._send(400, {"error": "bad json"})
            return
        status, body = owner.handle(payload)
        self._send(status, body)

    def _send(self, status: int, body) -> None:
        raw = (body if isinstance(body, str) else json.dumps(body)).encode()
        try:
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(raw)))
            self.end_headers()
            self.wfile.write(raw)
        except (BrokenPipeError, ConnectionResetError):
            # Client gave up (timeout tests do this on purpose); drop it.
            pass

    def log_message(self, *args):  # quiet test output
        pass


class MockLlmServer:
    """Local endpoint scripted from the rule-based carriers.

    fail_first: answer the first N requests with HTTP 500.
    malformed_first: then answer N requests with a schema-violating body.
    garbage_first: then answer N requests with prose carrying no rate.
    delay_s: sleep before each response (drives client timeouts).
    pad_response: append N filler characters after the scripted reply.
    """

    def __init__(self, fail_first: int = 0, malformed_first: int = 0,
                 garbage_first: int = 0, delay_s: float = 0.0,
                 pad_response: int = 0):
        self.fail_first = fail_first
        self.malformed_first = malformed_first
        self.garbage_first = garbage_first
        self.delay_s = delay_s
        self.pad_response = pad_response
        self.request_count = 0
        self.requests: list[dict] = []
        self._lock = threading.Lock()
        self._httpd: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None
        self.base_url = ""

    def start(self) -> str:
        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
        self._httpd.owner = self  # type: ignore[attr-defined]
        self.base_url = f"http://127.0.0.1:{self._httpd.server_address[1]}"
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self.base_url

    def stop(self) -> None:
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
            self._httpd = None

    def __enter__(self) -> "MockLlmServer":
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.stop()

    def handle(self, payload: dict) -> tuple[int, dict]:
        with self._lock:
            self.request_count += 1
            n = self.request_count
            self.requests.append(payload)
        if self.delay_s:
            time.sleep(self.delay_s)
        if n <= self.fail_first:
            return 500, {"error": "synthetic outage"}
        if n <= self.fail_first + self.malformed_first:
            return 200, {"unexpected": "shape"}
        if n <= self.fail_first + self.malformed_first + self.garbage_first:
            content = _GARBAGE_REPLY
        else:
            try:
                content = scripted_carrier_reply(payload.get("messages", []))
            except (ValueError, KeyError) as exc:
                return 400, {"error": str(exc)}
        if self.pad_response:
            content = content + " " + "x" * self.pad_response
        return 200, {
            "model": payload.get("model", "mock-model"),
            "choices": [{"message": {"role": "assistant", "content": content}}],
        }
