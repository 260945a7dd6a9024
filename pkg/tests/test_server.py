import socket

import pytest
from fastapi.testclient import TestClient

from ractdas.frame_codec import TagId
from ractdas.registry import Registry, Role
from ractdas.server import create_app, start_node_server


@pytest.fixture
def registry():
    reg = Registry()
    reg.register_user("alice", "s3cretpw!", Role.OWNER)
    reg.register_user("op1", "operator-pw", Role.OPERATOR)
    return reg


@pytest.fixture
def client(registry):
    return TestClient(create_app(registry))


def login(client, login_id, password):
    r = client.post("/login", json={"login_id": login_id, "password": password})
    assert r.status_code == 200
    return {"Authorization": f"Bearer {r.json()['token']}"}


def test_login_returns_token_role_and_high_water(client):
    r = client.post("/login", json={"login_id": "alice", "password": "s3cretpw!"})
    body = r.json()
    assert body["role"] == "owner"
    assert "token" in body and "server_event_id" in body


def test_bad_credentials_maps_to_401(client):
    r = client.post("/login", json={"login_id": "alice", "password": "nope-nope"})
    assert r.status_code == 401
    assert r.json()["error"] == "BadCredentials"


def test_owner_tag_and_report_flow(client):
    headers = login(client, "alice", "s3cretpw!")
    r = client.post("/tags", json={"tag_id": "0F0184F07A"}, headers=headers)
    assert r.status_code == 201
    r = client.post("/reports/0F0184F07A", headers=headers)
    assert r.status_code == 201
    r = client.get("/tags/0F0184F07A", headers=headers)
    assert r.json()["status"] == "reported_stolen"
    r = client.post("/reports/0F0184F07A", headers=headers)
    assert r.status_code == 409 and r.json()["error"] == "AlreadyReported"
    r = client.delete("/reports/0F0184F07A", headers=headers)
    assert r.status_code == 200
    r = client.get("/tags/0F0184F07A", headers=headers)
    assert r.json()["status"] == "clear"


def test_release_is_operator_only(client, registry):
    owner = login(client, "alice", "s3cretpw!")
    operator = login(client, "op1", "operator-pw")
    r = client.post("/release/cp1", headers=owner)
    assert r.status_code == 403 and r.json()["error"] == "NotAuthorized"
    r = client.post("/release/cp1", headers=operator)
    assert r.status_code == 200
    assert registry.pop_release("cp1")


def test_events_cursor_resume(client):
    headers = login(client, "alice", "s3cretpw!")
    client.post("/tags", json={"tag_id": "0F0184F07A"}, headers=headers)
    r = client.get("/events", params={"since": 0}, headers=headers)
    body = r.json()
    ids = [e["event_id"] for e in body["events"]]
    assert ids == sorted(ids)
    assert body["server_event_id"] == ids[-1]
    r2 = client.get("/events", params={"since": ids[-1]}, headers=headers)
    assert r2.json()["events"] == []
    client.post("/reports/0F0184F07A", headers=headers)
    r3 = client.get("/events", params={"since": ids[-1]}, headers=headers)
    kinds = [e["kind"] for e in r3.json()["events"]]
    assert kinds == ["report_opened"]


def test_every_response_carries_high_water(client):
    headers = login(client, "alice", "s3cretpw!")
    r = client.post("/tags", json={"tag_id": "0F0184F07A"}, headers=headers)
    assert "server_event_id" in r.json()
    r = client.get("/tags/0F0184F07A", headers=headers)
    assert "server_event_id" in r.json()


def test_missing_token_rejected(client):
    assert client.post("/tags", json={"tag_id": "0F0184F07A"}).status_code == 401
    assert client.get("/events").status_code == 401


def test_unknown_tag_maps_to_404(client):
    headers = login(client, "alice", "s3cretpw!")
    r = client.get("/tags/AAAAAAAAAA", headers=headers)
    assert r.status_code == 404 and r.json()["error"] == "UnknownTag"


def test_owner_cannot_create_operator(client):
    headers = login(client, "alice", "s3cretpw!")
    r = client.post("/users", headers=headers,
                    json={"login": "op2", "password": "password9",
                          "role": "operator"})
    assert r.status_code == 403
    operator = login(client, "op1", "operator-pw")
    r = client.post("/users", headers=operator,
                    json={"login": "op2", "password": "password9",
                          "role": "operator"})
    assert r.status_code == 201


# --- checkpost TCP line protocol ------------------------------------------------


def test_node_line_protocol_round_trip(registry):
    registry.register_tag("alice", TagId("0F0184F07A"))
    server = start_node_server(registry, "127.0.0.1", 0)
    port = server.server_address[1]
    try:
        with socket.create_connection(("127.0.0.1", port), timeout=5) as sock:
            f = sock.makefile("rwb")
            f.write(b"DETECT cp1 0F0184F07A\n")
            f.flush()
            assert f.readline().strip() == b"CODE G"
            f.write(b"ECHO G\n")
            f.flush()
            assert f.readline().strip() == b"ACK"
            # stolen path with one echo corruption
            registry.report_stolen("alice",
                                   registry.tags["0F0184F07A"].tag)
            f.write(b"DETECT cp1 0F0184F07A\n")
            f.flush()
            assert f.readline().strip() == b"CODE A"
            f.write(b"ECHO G\n")
            f.flush()
            assert f.readline().strip() == b"RESEND A"
            f.write(b"ECHO A\n")
            f.flush()
            assert f.readline().strip() == b"ACK"
    finally:
        server.shutdown()
        server.server_close()
    assert [d.echo_ok for d in registry.detections] == [True, True]
    assert registry.detections[-1].verdict.value == "A"


def test_node_line_protocol_echo_without_detect(registry):
    server = start_node_server(registry, "127.0.0.1", 0)
    port = server.server_address[1]
    try:
        with socket.create_connection(("127.0.0.1", port), timeout=5) as sock:
            f = sock.makefile("rwb")
            f.write(b"DETECT cp9 0F0184F07A\n")
            f.flush()
            assert f.readline().strip() == b"CODE A"  # unregistered, strict
            f.write(b"ECHO A\n")
            f.flush()
            assert f.readline().strip() == b"ACK"
            f.write(b"ECHO A\n")
            f.flush()
            assert f.readline().startswith(b"ERR ProtocolOrderViolation")
    finally:
        server.shutdown()
        server.server_close()
