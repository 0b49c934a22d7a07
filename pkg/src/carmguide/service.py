"""WebSocket boundary around the session core.

Clients send {"type": "cmd", "verb": ..., "args": ..., "request_id": ...}
and receive a {"type": "reply", ...} addressed to them plus a
{"type": "snapshot", ...} broadcast to every connection after each applied
mutation. All mutations funnel through one lock around the pure transition
function, so concurrent clients serialize cleanly and the sequence number
linearizes the history.
"""

from __future__ import annotations

import threading
import time
from pathlib import Path

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .config import SessionConfig, default_config
from .session import (
    CommandError,
    CommandMessage,
    SessionRecorder,
    handle_command,
    initial_state,
    snapshot,
)


class SessionHub:
    """Owns the single writable session state and its subscriber list."""

    def __init__(self, config: SessionConfig | None = None, recorder=None):
        self.config = config or default_config()
        self._state = initial_state(self.config)
        self._lock = threading.Lock()
        self._recorder: SessionRecorder | None = recorder
        self._epoch = time.monotonic()

    def _now(self) -> float:
        return time.monotonic() - self._epoch

    def submit(self, cmd: CommandMessage, t: float | None = None) -> tuple[dict, dict | None]:
        """Apply one command; returns (reply, snapshot-or-None if unchanged)."""
        with self._lock:
            stamp = self._now() if t is None else t
            if self._recorder is not None:
                self._recorder.record_command(stamp, cmd)
            new_state, reply, _events = handle_command(self._state, cmd, stamp)
            changed = new_state.sequence != self._state.sequence
            self._state = new_state
            snap = snapshot(new_state) if changed else None
        return reply, snap

    def current_snapshot(self) -> dict:
        with self._lock:
            return snapshot(self._state)

    @property
    def state(self):
        with self._lock:
            return self._state


def create_app(
    config: SessionConfig | None = None,
    record_path=None,
    frontend_dir=None,
) -> FastAPI:
    recorder = SessionRecorder(record_path) if record_path else None
    hub = SessionHub(config, recorder)
    app = FastAPI(title="carmguide session service")
    app.state.hub = hub
    clients: list[WebSocket] = []
    clients_lock = threading.Lock()

    @app.get("/state")
    def get_state():
        return hub.current_snapshot()

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        with clients_lock:
            clients.append(ws)
        try:
            await ws.send_json(hub.current_snapshot())
            while True:
                msg = await ws.receive_json()
                if msg.get("type") != "cmd":
                    await ws.send_json(
                        {"type": "reply", "request_id": msg.get("request_id", ""),
                         "ok": False, "error": f"unsupported message type {msg.get('type')!r}"}
                    )
                    continue
                try:
                    cmd = CommandMessage(
                        verb=msg.get("verb", ""),
                        args=msg.get("args", {}),
                        client_id=str(id(ws)),
                        request_id=msg.get("request_id", ""),
                    )
                except CommandError as exc:
                    await ws.send_json(
                        {"type": "reply", "request_id": msg.get("request_id", ""),
                         "ok": False, "error": str(exc)}
                    )
                    continue
                reply, snap = hub.submit(cmd)
                await ws.send_json(reply)
                if snap is not None:
                    with clients_lock:
                        targets = list(clients)
                    for peer in targets:
                        try:
                            await peer.send_json(snap)
                        except Exception:
                            pass
        except WebSocketDisconnect:
            pass
        finally:
            with clients_lock:
                if ws in clients:
                    clients.remove(ws)

    if frontend_dir and Path(frontend_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True), name="ui")
    return app
