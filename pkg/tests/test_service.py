"""WebSocket protocol round trips through the in-process test client."""

import pytest
from fastapi.testclient import TestClient

from carmguide.config import default_config
from carmguide.service import create_app


@pytest.fixture
def client():
    app = create_app(default_config())
    with TestClient(app) as c:
        yield c


def recv_until(ws, msg_type):
    for _ in range(20):
        msg = ws.receive_json()
        if msg["type"] == msg_type:
            return msg
    raise AssertionError(f"no {msg_type} message received")


def test_http_state_endpoint(client):
    snap = client.get("/state").json()
    assert snap["sequence"] == 0
    assert snap["dofs"]["orbital"] == 0.0
    assert snap["live_visible"] is True


def test_command_reply_and_snapshot(client):
    with client.websocket_connect("/ws") as ws:
        hello = ws.receive_json()
        assert hello["type"] == "snapshot" and hello["sequence"] == 0
        ws.send_json(
            {"type": "cmd", "verb": "adjust_dof",
             "args": {"name": "orbital", "delta": 15.0}, "request_id": "q1"}
        )
        reply = recv_until(ws, "reply")
        assert reply["ok"] and reply["request_id"] == "q1"
        snap = recv_until(ws, "snapshot")
        assert snap["sequence"] == 1
        assert snap["dofs"]["orbital"] == 15.0


def test_error_reply_without_broadcast(client):
    with client.websocket_connect("/ws") as ws:
        ws.receive_json()
        ws.send_json(
            {"type": "cmd", "verb": "show_view", "args": {"name": "ghost"},
             "request_id": "q2"}
        )
        reply = recv_until(ws, "reply")
        assert not reply["ok"] and "ghost" in reply["error"]
        # Next command still works and produces the first real snapshot.
        ws.send_json({"type": "cmd", "verb": "toggle_live", "args": {}, "request_id": "q3"})
        assert recv_until(ws, "reply")["ok"]
        assert recv_until(ws, "snapshot")["sequence"] == 1


def test_unknown_verb_rejected(client):
    with client.websocket_connect("/ws") as ws:
        ws.receive_json()
        ws.send_json({"type": "cmd", "verb": "warp", "args": {}, "request_id": "q"})
        reply = recv_until(ws, "reply")
        assert not reply["ok"] and "warp" in reply["error"]


def test_two_clients_share_broadcasts(client):
    with client.websocket_connect("/ws") as a, client.websocket_connect("/ws") as b:
        a.receive_json()
        b.receive_json()
        a.send_json(
            {"type": "cmd", "verb": "save_view", "args": {"name": "Position 1"},
             "request_id": "qa"}
        )
        assert recv_until(a, "reply")["ok"]
        snap_a = recv_until(a, "snapshot")
        snap_b = recv_until(b, "snapshot")
        assert snap_a["sequence"] == snap_b["sequence"] == 1
        assert snap_a["saved_views"] == ["Position 1"]


def test_save_show_alignment_over_wire(client):
    with client.websocket_connect("/ws") as ws:
        ws.receive_json()
        for i, (verb, args) in enumerate(
            [
                ("save_view", {"name": "p1"}),
                ("adjust_dof", {"name": "base_x", "delta": 25.0}),
                ("show_view", {"name": "p1"}),
                ("request_alignment", {}),
            ]
        ):
            ws.send_json({"type": "cmd", "verb": verb, "args": args, "request_id": str(i)})
            reply = recv_until(ws, "reply")
            assert reply["ok"], reply
            snap = recv_until(ws, "snapshot")
        assert snap["alignment"] is not None
        assert snap["alignment"]["dof_hints"]["increments"]["base_x"] == pytest.approx(
            -25.0, abs=2.0
        )
        assert snap["shown_view"] == "p1"
        assert snap["shown_cloud"] is not None
