"""Small builders shared across test modules."""

import http.server
import json
import threading

from bwsq.annotate import AnnotatorId, Judgment
from bwsq.corpus import Corpus, SurveyRecord

ANN = AnnotatorId("llm", "tester")


def record(i: int, text: str | None = None, binary=None, multi=None,
           species: str | None = None, office: str | None = None,
           split: str | None = None) -> SurveyRecord:
    return SurveyRecord(
        record_id=f"r{i:03d}",
        species_id=species or f"SP_{i % 3}",
        office_id=office or f"FO_{i % 5}",
        text=text if text is not None else f"Beobachtung Nummer {i} im Revier.",
        binary_label=binary,
        multi_label=multi,
        split=split,
    )


def corpus(n: int, **kw) -> Corpus:
    return Corpus([record(i, **kw) for i in range(n)], source="test")


def judgment(tuple_id: str, best: int, worst: int, valid: bool = True,
             annotator: AnnotatorId = ANN) -> Judgment:
    # best/worst are 1-based positions within the tuple
    return Judgment(tuple_id=tuple_id, annotator=annotator,
                    best_index=best, worst_index=worst, valid=valid)


class MockChatServer:
    """Scripted chat-completions endpoint on a localhost port.

    `script(body, index)` sees the parsed request body and the 0-based
    request counter. It returns the assistant message content as a string,
    or an (http_status, payload_dict) pair for fault injection. Every
    request is recorded in `self.requests`.
    """

    def __init__(self, script):
        self.script = script
        self.requests: list[dict] = []
        self._lock = threading.Lock()
        outer = self

        class Handler(http.server.BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", "0"))
                body = json.loads(self.rfile.read(length) or b"{}")
                with outer._lock:
                    index = len(outer.requests)
                    outer.requests.append({
                        "path": self.path,
                        "authorization": self.headers.get("Authorization"),
                        "body": body,
                    })
                result = outer.script(body, index)
                if isinstance(result, tuple):
                    status, payload = result
                else:
                    status = 200
                    payload = {"choices": [{"message": {"content": result}}]}
                data = json.dumps(payload).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self._server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def base_url(self) -> str:
        return f"http://127.0.0.1:{self._server.server_address[1]}/v1"

    def __enter__(self) -> "MockChatServer":
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self._server.shutdown()
        self._server.server_close()
