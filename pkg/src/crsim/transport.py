"""Line-delimited JSON wire protocol between the conversation manager and an agent.

Request:  {"conversation_id": str, "turn": int, "utterance": str}
Response: {"utterance": str, "actions": [label, ...]}   ("actions" only in oracle mode)
"""
from __future__ import annotations

import dataclasses as dc
import json
import queue
import shlex
import socket
import subprocess
import threading
from typing import Protocol

DEFAULT_TIMEOUT = 10.0
CAPABILITIES = ("Disclose", "Refine", "Inquire", "Navigate", "MixedInitiative")


class AgentError(RuntimeError):
    """Agent timed out, disconnected or answered outside the protocol."""


def encode(message: dict) -> str:
    return json.dumps(message, ensure_ascii=False, separators=(",", ":")) + "\n"


def decode_response(line: str) -> dict:
    try:
        msg = json.loads(line)
    except json.JSONDecodeError:
        raise AgentError(f"malformed response: {line[:80]!r}") from None
    if not isinstance(msg, dict) or "error" in msg or not isinstance(msg.get("utterance"), str):
        raise AgentError(f"protocol error: {line[:80]!r}")
    actions = msg.get("actions")
    if actions is not None and not (isinstance(actions, list) and all(isinstance(a, str) for a in actions)):
        raise AgentError("'actions' must be a list of labels")
    return msg


class LineHandler(Protocol):
    def handle_line(self, line: str) -> str: ...


class Connection:
    def exchange(self, conversation_id: str, turn: int, utterance: str) -> dict:
        line = encode({"conversation_id": conversation_id, "turn": turn, "utterance": utterance})
        return decode_response(self._roundtrip(line))

    def _roundtrip(self, line: str) -> str:
        raise NotImplementedError

    def close(self) -> None:
        pass


class InProcessConnection(Connection):
    """Serialized round trip to a handler living in this process."""

    def __init__(self, handler: LineHandler):
        self.handler = handler

    def _roundtrip(self, line: str) -> str:
        return self.handler.handle_line(line)


class SubprocessChannel:
    """One child process shared by all conversations of an endpoint; requests are serialized."""

    def __init__(self, command: str | list[str], timeout: float):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = timeout
        self.proc = subprocess.Popen(argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                     stderr=subprocess.DEVNULL, text=True, encoding="utf-8", bufsize=1)
        self._lines: queue.Queue = queue.Queue()
        self._lock = threading.Lock()
        threading.Thread(target=self._pump, daemon=True).start()

    def _pump(self):
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def roundtrip(self, line: str) -> str:
        with self._lock:
            try:
                self.proc.stdin.write(line)
                self.proc.stdin.flush()
            except (BrokenPipeError, OSError, ValueError):
                raise AgentError("agent process is gone") from None
            try:
                reply = self._lines.get(timeout=self.timeout)
            except queue.Empty:
                raise AgentError(f"no response within {self.timeout}s") from None
            if reply is None:
                self._lines.put(None)
                raise AgentError("agent closed its output")
            return reply

    def close(self):
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            try:
                self.proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self.proc.kill()


class SubprocessConnection(Connection):
    def __init__(self, channel: SubprocessChannel):
        self.channel = channel

    def _roundtrip(self, line: str) -> str:
        return self.channel.roundtrip(line)


class TcpConnection(Connection):
    """One TCP connection per conversation."""

    def __init__(self, host: str, port: int, timeout: float):
        try:
            self.sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as e:
            raise AgentError(f"cannot reach {host}:{port}: {e}") from None
        self.sock.settimeout(timeout)
        self.reader = self.sock.makefile("r", encoding="utf-8", newline="\n")

    def _roundtrip(self, line: str) -> str:
        try:
            self.sock.sendall(line.encode("utf-8"))
            reply = self.reader.readline()
        except socket.timeout:
            raise AgentError("response timed out") from None
        except OSError as e:
            raise AgentError(f"connection failed: {e}") from None
        if not reply:
            raise AgentError("agent closed the connection")
        return reply

    def close(self):
        try:
            self.reader.close()
            self.sock.close()
        except OSError:
            pass


@dc.dataclass
class AgentEndpoint:
    """Where an agent lives and what it claims to support.

    ``transport`` is ``"inproc"`` (with ``handler``), ``"stdio:<command>"`` or ``"tcp:HOST:PORT"``.
    """
    name: str
    transport: str
    capabilities: frozenset[str] = frozenset(CAPABILITIES)
    timeout: float = DEFAULT_TIMEOUT
    handler: LineHandler | None = None
    _channel: SubprocessChannel | None = dc.field(default=None, repr=False)

    def __post_init__(self):
        self.capabilities = frozenset(self.capabilities)
        if not self.capabilities:
            raise ValueError("capability set must be non-empty")
        unknown = self.capabilities - set(CAPABILITIES)
        if unknown:
            raise ValueError(f"unknown capabilities {sorted(unknown)}")

    def connect(self) -> Connection:
        if self.transport == "inproc":
            if self.handler is None:
                raise AgentError("in-process endpoint without a handler")
            return InProcessConnection(self.handler)
        if self.transport.startswith("stdio:"):
            if self._channel is None or self._channel.proc.poll() is not None:
                self._channel = SubprocessChannel(self.transport[len("stdio:"):], self.timeout)
            return SubprocessConnection(self._channel)
        if self.transport.startswith("tcp:"):
            host, _, port = self.transport[len("tcp:"):].rpartition(":")
            return TcpConnection(host or "127.0.0.1", int(port), self.timeout)
        raise ValueError(f"unknown transport {self.transport!r}")

    def close(self):
        if self._channel is not None:
            self._channel.close()
            self._channel = None

