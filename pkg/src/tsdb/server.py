"""Read-only network access to a database over a line-based text protocol.

Each request is one UTF-8 line; the server answers with a block:

* ``PING`` -> ``PONG``
* ``RELATIONS`` -> ``OK <n>``, the relation names, then a line ``.``
* ``QUERY <text>`` -> ``OK <n>``, *n* result rows in the delimited data-file
  format, then ``.``; or ``ERR 422 <diagnostic>`` for a bad query

Anything else gets ``ERR 400 <message>``.  The client reads exactly *n* row
lines, so a row that renders as ``.`` is not mistaken for the terminator.
Queries run against a snapshot taken when the server starts.
"""

from __future__ import annotations

import logging
import socket
import socketserver
import threading
from typing import Optional

from tsdb.query import QueryError, ResultTable, parse_projection, run_query
from tsdb.storage import Database, TsdbError

DEFAULT_PORT = 4242
TERMINATOR = "."

log = logging.getLogger(__name__)


class RemoteError(TsdbError):
    """An ``ERR`` response from the server."""

    def __init__(self, code: int, message: str):
        super().__init__(f"ERR {code} {message}")
        self.code = code
        self.message = message


class ProtocolError(TsdbError):
    pass


class ServerUnavailable(TsdbError):
    pass


def one_line(text: str) -> str:
    return " ".join(str(text).split("\n"))


def answer(db: Database, request: str) -> str:
    """The complete response block (newline-terminated) for one request line."""
    verb, _, rest = request.partition(" ")
    if request == "PING":
        return "PONG\n"
    if request == "RELATIONS":
        names = db.schema.relation_names
        return f"OK {len(names)}\n" + "".join(n + "\n" for n in names) + TERMINATOR + "\n"
    if verb == "QUERY" and rest.strip():
        try:
            table = run_query(db, rest)
        except QueryError as exc:
            return f"ERR 422 {one_line(exc)}\n"
        return f"OK {len(table)}\n" + table.render_delimited() + TERMINATOR + "\n"
    if verb == "QUERY":
        return "ERR 422 empty query\n"
    return f"ERR 400 unsupported request {one_line(request)[:80]!r}; the server is read-only\n"


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        server: TsdbServer = self.server
        for raw in self.rfile:
            try:
                request = raw.decode("utf-8").rstrip("\r\n")
            except UnicodeDecodeError:
                reply = "ERR 400 request is not valid UTF-8\n"
            else:
                with server.tracker:
                    try:
                        reply = answer(server.snapshot, request)
                    except Exception as exc:  # keep serving other requests
                        log.exception("request failed: %r", request)
                        reply = f"ERR 500 {one_line(exc)}\n"
            try:
                self.wfile.write(reply.encode("utf-8"))
                self.wfile.flush()
            except OSError:
                return


class _InFlight:
    """Counts requests being answered so shutdown can wait for them."""

    def __init__(self):
        self.count = 0
        self.cond = threading.Condition()

    def __enter__(self):
        with self.cond:
            self.count += 1

    def __exit__(self, *exc):
        with self.cond:
            self.count -= 1
            self.cond.notify_all()

    def wait_idle(self, timeout: Optional[float] = None) -> bool:
        with self.cond:
            return self.cond.wait_for(lambda: self.count == 0, timeout)


class TsdbServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, db: Database, host: str = "127.0.0.1", port: int = DEFAULT_PORT):
        self.snapshot = db.snapshot()
        self.tracker = _InFlight()
        super().__init__((host, port), _Handler)

    @property
    def port(self) -> int:
        return self.server_address[1]

    def start_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread

    def stop(self, timeout: float = 5.0):
        """Stop accepting, let in-flight responses finish, close the socket."""
        self.shutdown()
        self.tracker.wait_idle(timeout)
        self.server_close()


def serve(db: Database, port: int = DEFAULT_PORT, host: str = "127.0.0.1") -> None:
    server = TsdbServer(db, host, port)
    log.info("serving %s database on %s:%d", db.language, host, server.port)
    thread = server.start_background()
    try:
        while thread.is_alive():
            thread.join(0.5)
    except KeyboardInterrupt:
        log.info("interrupted; finishing in-flight requests")
    finally:
        server.stop()


class Client:
    """A connection to a server; usable as a context manager."""

    def __init__(self, host: str = "127.0.0.1", port: int = DEFAULT_PORT,
                 timeout: Optional[float] = 30.0):
        try:
            self.sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise ServerUnavailable(f"cannot connect to {host}:{port}: {exc}") from exc
        self.reader = self.sock.makefile("r", encoding="utf-8", newline="\n")

    def close(self):
        self.reader.close()
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _line(self) -> str:
        try:
            line = self.reader.readline()
        except OSError as exc:
            raise ServerUnavailable(f"connection lost: {exc}") from exc
        if not line.endswith("\n"):
            raise ProtocolError("connection closed mid-response")
        return line[:-1]

    def request(self, line: str) -> list[str]:
        """Send one request; return the row lines of an ``OK`` block.

        ``PONG`` comes back as ``["PONG"]``; ``ERR`` raises :class:`RemoteError`.
        """
        if "\n" in line:
            raise ValueError("requests are single lines")
        try:
            self.sock.sendall((line + "\n").encode("utf-8"))
        except OSError as exc:
            raise ServerUnavailable(f"connection lost: {exc}") from exc
        status = self._line()
        if status == "PONG":
            return [status]
        if status.startswith("ERR "):
            code, _, message = status[4:].partition(" ")
            raise RemoteError(int(code) if code.isdigit() else 0, message)
        if not status.startswith("OK ") or not status[3:].isdigit():
            raise ProtocolError(f"unexpected status line {status!r}")
        rows = [self._line() for _ in range(int(status[3:]))]
        if self._line() != TERMINATOR:
            raise ProtocolError("missing terminator")
        return rows

    def ping(self) -> bool:
        return self.request("PING") == ["PONG"]

    def relations(self) -> list[str]:
        return self.request("RELATIONS")

    def query(self, text: str) -> ResultTable:
        rows = self.request("QUERY " + text)
        try:
            header = parse_projection(text)
        except QueryError:
            header = ()
        return ResultTable.from_delimited(header, rows)


def remote_query(host: str, port: int, text: str, timeout: Optional[float] = 30.0) -> ResultTable:
    """Evaluate *text* on a server.  Cells come back as strings."""
    with Client(host, port, timeout) as client:
        return client.query(text)
