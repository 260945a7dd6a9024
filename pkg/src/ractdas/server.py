"""Network front of the registry: HTTP API for consoles, TCP lines for nodes.

HTTP endpoints (JSON bodies, bearer-token auth):
    POST   /login                  -> {token, role, server_event_id}
    POST   /users                  -> create account
    POST   /tags                   -> register a tag to the session owner
    POST   /reports/{tag_id}       -> report stolen
    DELETE /reports/{tag_id}       -> clear report
    POST   /release/{checkpost_id} -> operator gate release
    GET    /events?since=N         -> incremental event feed
    GET    /tags/{tag_id}          -> tag record

Every response carries a monotone server_event_id high-water mark.

The checkpost line protocol runs on a plain TCP socket, one message per line:
    DETECT <checkpost_id> <tag_id>  ->  CODE <A|G>
    ECHO <A|G>                      ->  ACK | RESEND <A|G>
"""

from __future__ import annotations

import socketserver
import threading

from fastapi import FastAPI, Header, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import registry as reg
from .checkpost import Verdict
from .frame_codec import TagId

_STATUS = {
    reg.BadCredentials: 401,
    reg.SessionExpired: 401,
    reg.NotAuthorized: 403,
    reg.RoleViolation: 403,
    reg.UnknownOwner: 404,
    reg.UnknownTag: 404,
    reg.DuplicateLogin: 409,
    reg.DuplicateTag: 409,
    reg.AlreadyReported: 409,
    reg.NoOpenReport: 409,
    reg.WeakPassword: 400,
    reg.ProtocolOrderViolation: 409,
}


class LoginBody(BaseModel):
    login_id: str
    password: str


class UserBody(BaseModel):
    login: str
    password: str
    role: str


class TagBody(BaseModel):
    tag_id: str


def create_app(registry: reg.Registry) -> FastAPI:
    app = FastAPI(title="ractdas registry")

    @app.exception_handler(reg.RegistryError)
    async def registry_error(_: Request, exc: reg.RegistryError):
        return JSONResponse(
            status_code=_STATUS.get(type(exc), 400),
            content={"error": type(exc).__name__, "message": str(exc),
                     "server_event_id": registry.server_event_id})

    @app.exception_handler(ValueError)
    async def value_error(_: Request, exc: ValueError):
        return JSONResponse(status_code=400,
                            content={"error": "BadRequest", "message": str(exc),
                                     "server_event_id": registry.server_event_id})

    def _session(authorization: str | None) -> str:
        if not authorization or not authorization.startswith("Bearer "):
            raise reg.BadCredentials("missing bearer token")
        return registry.resolve_session(authorization.removeprefix("Bearer "))

    def _ok(**extra) -> dict:
        return {"server_event_id": registry.server_event_id, **extra}

    @app.post("/login")
    def login(body: LoginBody):
        token = registry.login(body.login_id, body.password)
        return _ok(token=token, role=registry.users[body.login_id].role.value,
                   login_id=body.login_id)

    @app.post("/users", status_code=201)
    def create_user(body: UserBody, authorization: str | None = Header(None)):
        actor = None
        if authorization:
            actor = _session(authorization)
        account = registry.register_user(body.login, body.password,
                                         reg.Role(body.role), actor_login=actor)
        return _ok(login=account.login_id, role=account.role.value)

    @app.post("/tags", status_code=201)
    def register_tag(body: TagBody, authorization: str | None = Header(None)):
        login = _session(authorization)
        record = registry.register_tag(login, TagId(body.tag_id))
        return _ok(tag=record.tag.digits, owner=record.owner_login,
                   status=record.status.value)

    @app.post("/reports/{tag_id}", status_code=201)
    def report_stolen(tag_id: str, authorization: str | None = Header(None)):
        login = _session(authorization)
        report = registry.report_stolen(login, TagId(tag_id))
        return _ok(tag=report.tag.digits, opened_at=report.opened_at)

    @app.delete("/reports/{tag_id}")
    def clear_report(tag_id: str, authorization: str | None = Header(None)):
        login = _session(authorization)
        report = registry.clear_report(login, TagId(tag_id))
        return _ok(tag=report.tag.digits, closed_at=report.closed_at)

    @app.post("/release/{checkpost_id}")
    def release(checkpost_id: str, authorization: str | None = Header(None)):
        login = _session(authorization)
        registry.release(login, checkpost_id)
        return _ok(checkpost=checkpost_id)

    @app.get("/events")
    def events(since: int = 0, authorization: str | None = Header(None)):
        _session(authorization)
        items, high_water = registry.events_since(since)
        return {"server_event_id": high_water,
                "events": [{"event_id": e.event_id, "at": e.at,
                            "kind": e.kind, "payload": e.payload}
                           for e in items]}

    @app.get("/tags/{tag_id}")
    def tag_info(tag_id: str, authorization: str | None = Header(None)):
        _session(authorization)
        record = registry.tag_info(TagId(tag_id))
        return _ok(tag=record.tag.digits, owner=record.owner_login,
                   status=record.status.value, registered_at=record.registered_at)

    return app


class NodeLineHandler(socketserver.StreamRequestHandler):
    """One connection per checkpost; the first DETECT binds its identity."""

    def handle(self):
        registry: reg.Registry = self.server.registry  # type: ignore[attr-defined]
        checkpost_id: str | None = None
        for raw in self.rfile:
            line = raw.decode("ascii", errors="replace").strip()
            if not line:
                continue
            parts = line.split()
            try:
                if parts[0] == "DETECT" and len(parts) == 3:
                    checkpost_id = parts[1]
                    verdict = registry.handle_detect(checkpost_id, TagId(parts[2]))
                    self.wfile.write(f"CODE {verdict.value}\n".encode())
                elif parts[0] == "ECHO" and len(parts) == 2 and checkpost_id:
                    status, resend = registry.handle_echo(checkpost_id,
                                                          Verdict(parts[1]))
                    if status == "ACK":
                        self.wfile.write(b"ACK\n")
                    else:
                        self.wfile.write(f"RESEND {resend.value}\n".encode())
                else:
                    self.wfile.write(b"ERR bad message\n")
            except (reg.RegistryError, ValueError) as exc:
                self.wfile.write(f"ERR {type(exc).__name__}\n".encode())
            self.wfile.flush()


class NodeLineServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], registry: reg.Registry):
        super().__init__(address, NodeLineHandler)
        self.registry = registry


def start_node_server(registry: reg.Registry, host: str, port: int) -> NodeLineServer:
    server = NodeLineServer((host, port), registry)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    return server
