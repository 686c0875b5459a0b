import json
import sys
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qsl, unquote, urlsplit

from app.models.schema import open_database
from app.routes.endpoints import match_route
from app.services.errors import ServiceError
from app.services.users import authenticate


class ParsedRequest:
    def __init__(self, viewer, query, body):
        self.viewer = viewer
        self.query = query
        self.body = body


class ConduitHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    db = None
    lock = threading.Lock()

    def _send(self, status, payload):
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _error(self, status, message):
        self._send(status, {"errors": {"body": [message]}})

    def _read_body(self):
        if "chunked" in (self.headers.get("Transfer-Encoding") or "").lower():
            chunks = []
            while True:
                size = int(self.rfile.readline().split(b";")[0].strip() or b"0", 16)
                if size == 0:
                    while self.rfile.readline() not in (b"\r\n", b"\n", b""):
                        pass
                    return b"".join(chunks)
                chunks.append(self.rfile.read(size))
                self.rfile.readline()
        length = int(self.headers.get("Content-Length") or 0)
        return self.rfile.read(length) if length else b""

    def _dispatch(self, method):
        url = urlsplit(self.path)
        raw = self._read_body()
        matched = match_route(method, url.path)
        if matched is None:
            return self._error(404, "not found")
        status, handler, params = matched
        try:
            body = json.loads(raw) if raw else None
        except ValueError:
            return self._error(422, "request body is not valid JSON")
        header = self.headers.get("Authorization") or ""
        token = header[len("Token "):].strip() if header.startswith("Token ") else None
        with self.lock:
            try:
                request = ParsedRequest(
                    authenticate(self.db, token), dict(parse_qsl(url.query)), body
                )
                payload = handler(self.db, request, *[unquote(p) for p in params])
            except ServiceError as err:
                return self._error(err.status, err.message)
        self._send(status, payload)

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_PUT(self):
        self._dispatch("PUT")

    def do_DELETE(self):
        self._dispatch("DELETE")

    def log_message(self, format, *args):
        sys.stderr.write("%s %s\n" % (self.command, format % args))


def build_server(host, port):
    ConduitHandler.db = open_database()
    ThreadingHTTPServer.allow_reuse_address = True
    server = ThreadingHTTPServer((host, port), ConduitHandler)
    server.daemon_threads = True
    return server
