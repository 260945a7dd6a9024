"""Centralized theft registry: accounts, tag records, reports, verdicts.

State is event-sourced: every mutation is appended to a journal (one JSON
record per line) and replaying a journal reconstructs the exact state that
produced it. Sessions and in-flight detect/echo exchanges are ephemeral and
deliberately not journaled.

All mutations are serialized through one lock; the observable contract is
linearizability of the public operations.
"""

from __future__ import annotations

import hashlib
import json
import secrets
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Optional

from .checkpost import Verdict
from .frame_codec import TagId

PBKDF2_ITERATIONS = 1000
MIN_PASSWORD_LEN = 8
SESSION_TTL = 30 * 60.0  # seconds
ECHO_MAX_RETRIES = 3


class Role(Enum):
    OWNER = "owner"
    OPERATOR = "operator"


class Policy(Enum):
    STRICT = "strict"  # unregistered tags are arrested
    LENIENT = "lenient"  # only reported tags are arrested


class TagStatus(Enum):
    CLEAR = "clear"
    REPORTED_STOLEN = "reported_stolen"


# --- errors ----------------------------------------------------------------


class RegistryError(Exception):
    """Base class; subclasses name the domain error exactly."""


class DuplicateLogin(RegistryError):
    pass


class WeakPassword(RegistryError):
    pass


class UnknownOwner(RegistryError):
    pass


class DuplicateTag(RegistryError):
    pass


class RoleViolation(RegistryError):
    pass


class NotAuthorized(RegistryError):
    pass


class UnknownTag(RegistryError):
    pass


class AlreadyReported(RegistryError):
    pass


class NoOpenReport(RegistryError):
    pass


class BadCredentials(RegistryError):
    pass


class SessionExpired(RegistryError):
    pass


class ProtocolOrderViolation(RegistryError):
    pass


class CorruptRecord(RegistryError):
    """Journal replay hit an unparsable or out-of-order record.

    Carries the 1-based line number and the state reconstructed from the
    records before it (which is intact and usable).
    """

    def __init__(self, line_no: int, reason: str, state: "Registry"):
        super().__init__(f"corrupt journal record at line {line_no}: {reason}")
        self.line_no = line_no
        self.state = state


# --- records ---------------------------------------------------------------


@dataclass
class UserAccount:
    login_id: str
    role: Role
    salt: bytes
    digest: bytes
    owned_tags: set[str] = field(default_factory=set)


@dataclass
class TagRecord:
    tag: TagId
    owner_login: str
    registered_at: float
    status: TagStatus = TagStatus.CLEAR


@dataclass
class TheftReport:
    tag: TagId
    reported_by: str
    opened_at: float
    closed_at: Optional[float] = None


@dataclass(frozen=True)
class DetectionEvent:
    event_id: int
    checkpost_id: str
    tag: TagId
    verdict: Verdict
    echo_ok: bool
    at: float


@dataclass(frozen=True)
class Event:
    """One entry of the append-only feed served to consoles."""

    event_id: int
    at: float
    kind: str
    payload: dict


@dataclass
class _Session:
    login_id: str
    expires_at: float


@dataclass
class _Exchange:
    tag: TagId
    verdict: Verdict
    retries: int = 0
    started_at: float = 0.0


def _hash_password(password: str, salt: bytes) -> bytes:
    return hashlib.pbkdf2_hmac("sha256", password.encode(), salt, PBKDF2_ITERATIONS)


class Registry:
    """In-memory state plus append-only journal."""

    def __init__(self, journal_path: str | Path | None = None,
                 policy: Policy = Policy.STRICT,
                 now_fn: Callable[[], float] = time.time):
        self._lock = threading.RLock()
        self._now = now_fn
        self.policy = policy
        self.users: dict[str, UserAccount] = {}
        self.tags: dict[str, TagRecord] = {}
        self.open_reports: dict[str, TheftReport] = {}
        self.closed_reports: list[TheftReport] = []
        self.detections: list[DetectionEvent] = []
        self.events: list[Event] = []
        self._seq = 0  # journal record counter
        self._event_id = 0
        self._sessions: dict[str, _Session] = {}
        self._exchanges: dict[str, _Exchange] = {}
        self._pending_releases: set[str] = set()
        self._journal_path = Path(journal_path) if journal_path else None
        self._journal_file = None
        if self._journal_path:
            self._journal_file = open(self._journal_path, "a", encoding="utf-8")
        self._journal_lines: list[str] = []  # in-memory copy, handy for tests

    # --- journal machinery ---------------------------------------------

    def _commit(self, record_type: str, payload: dict) -> dict:
        """Append a record to the journal and apply it. Caller holds the lock."""
        self._seq += 1
        record = {"seq": self._seq, "ts": self._now(), "type": record_type, **payload}
        line = json.dumps(record, sort_keys=True)
        self._journal_lines.append(line)
        if self._journal_file:
            self._journal_file.write(line + "\n")
            self._journal_file.flush()
        self._apply(record)
        return record

    def _emit(self, at: float, kind: str, payload: dict) -> int:
        self._event_id += 1
        self.events.append(Event(self._event_id, at, kind, payload))
        return self._event_id

    def _apply(self, rec: dict):
        """Replay-safe state transition for one journal record."""
        t, ts = rec["type"], rec["ts"]
        if t == "user":
            self.users[rec["login"]] = UserAccount(
                rec["login"], Role(rec["role"]),
                bytes.fromhex(rec["salt"]), bytes.fromhex(rec["digest"]))
            self._emit(ts, "user_registered",
                       {"login": rec["login"], "role": rec["role"]})
        elif t == "password":
            u = self.users[rec["login"]]
            u.salt = bytes.fromhex(rec["salt"])
            u.digest = bytes.fromhex(rec["digest"])
        elif t == "tag":
            self.tags[rec["tag"]] = TagRecord(TagId(rec["tag"]), rec["owner"], ts)
            self.users[rec["owner"]].owned_tags.add(rec["tag"])
            self._emit(ts, "tag_registered",
                       {"tag": rec["tag"], "owner": rec["owner"]})
        elif t == "report_open":
            self.open_reports[rec["tag"]] = TheftReport(TagId(rec["tag"]), rec["by"], ts)
            self.tags[rec["tag"]].status = TagStatus.REPORTED_STOLEN
            self._emit(ts, "report_opened", {"tag": rec["tag"], "by": rec["by"]})
        elif t == "report_close":
            report = self.open_reports.pop(rec["tag"])
            report.closed_at = ts
            self.closed_reports.append(report)
            self.tags[rec["tag"]].status = TagStatus.CLEAR
            self._emit(ts, "report_cleared", {"tag": rec["tag"], "by": rec["by"]})
        elif t == "detection":
            verdict = Verdict(rec["verdict"])
            eid = self._emit(ts, "detection", {
                "checkpost": rec["checkpost"], "tag": rec["tag"],
                "verdict": rec["verdict"], "echo_ok": rec["echo_ok"]})
            self.detections.append(DetectionEvent(
                eid, rec["checkpost"], TagId(rec["tag"]), verdict, rec["echo_ok"], ts))
        elif t == "release":
            self._emit(ts, "gate_released", {"checkpost": rec["checkpost"], "by": rec["by"]})
        else:
            raise ValueError(f"unknown record type {t!r}")

    @classmethod
    def journal_replay(cls, path: str | Path, policy: Policy = Policy.STRICT,
                       now_fn: Callable[[], float] = time.time) -> "Registry":
        """Rebuild a registry from a journal file.

        Raises CorruptRecord at the first bad line; the exception carries the
        intact state reconstructed from everything before it.
        """
        reg = cls(journal_path=None, policy=policy, now_fn=now_fn)
        with open(path, encoding="utf-8") as f:
            for line_no, line in enumerate(f, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                    if rec["seq"] != reg._seq + 1:
                        raise ValueError(f"non-monotone seq {rec['seq']}")
                    reg._seq = rec["seq"]
                    reg._apply(rec)
                except (ValueError, KeyError, TypeError) as exc:
                    raise CorruptRecord(line_no, str(exc), reg) from exc
                reg._journal_lines.append(line)
        return reg

    # --- accounts & sessions --------------------------------------------

    def register_user(self, login: str, password: str, role: Role,
                      actor_login: str | None = None) -> UserAccount:
        with self._lock:
            if login in self.users:
                raise DuplicateLogin(login)
            if len(password) < MIN_PASSWORD_LEN:
                raise WeakPassword(f"password must be >= {MIN_PASSWORD_LEN} characters")
            if role is Role.OPERATOR and any(
                    u.role is Role.OPERATOR for u in self.users.values()):
                # operator creation requires an existing operator once one exists
                actor = self.users.get(actor_login or "")
                if actor is None or actor.role is not Role.OPERATOR:
                    raise NotAuthorized("only operators may create operator accounts")
            salt = secrets.token_bytes(16)
            digest = _hash_password(password, salt)
            self._commit("user", {"login": login, "role": role.value,
                                  "salt": salt.hex(), "digest": digest.hex()})
            return self.users[login]

    def login(self, login_id: str, password: str) -> str:
        with self._lock:
            user = self.users.get(login_id)
            if user is None or _hash_password(password, user.salt) != user.digest:
                raise BadCredentials("bad login or password")
            token = secrets.token_hex(16)
            self._sessions[token] = _Session(login_id, self._now() + SESSION_TTL)
            return token

    def resolve_session(self, token: str) -> str:
        with self._lock:
            sess = self._sessions.get(token)
            if sess is None:
                raise BadCredentials("unknown session token")
            if self._now() > sess.expires_at:
                del self._sessions[token]
                raise SessionExpired("session expired")
            return sess.login_id

    def change_password(self, token: str, old: str, new: str) -> None:
        with self._lock:
            login = self.resolve_session(token)
            user = self.users[login]
            if _hash_password(old, user.salt) != user.digest:
                raise BadCredentials("old password does not match")
            if len(new) < MIN_PASSWORD_LEN:
                raise WeakPassword(f"password must be >= {MIN_PASSWORD_LEN} characters")
            salt = secrets.token_bytes(16)
            self._commit("password", {"login": login, "salt": salt.hex(),
                                      "digest": _hash_password(new, salt).hex()})

    # --- tags & reports ---------------------------------------------------

    def register_tag(self, owner_login: str, tag: TagId) -> TagRecord:
        with self._lock:
            owner = self.users.get(owner_login)
            if owner is None:
                raise UnknownOwner(owner_login)
            if owner.role is not Role.OWNER:
                raise RoleViolation("operators cannot own tags")
            if tag.digits in self.tags:
                raise DuplicateTag(tag.digits)
            self._commit("tag", {"tag": tag.digits, "owner": owner_login})
            return self.tags[tag.digits]

    def _check_report_auth(self, actor_login: str, tag: TagId):
        actor = self.users.get(actor_login)
        if actor is None:
            raise NotAuthorized(f"unknown actor {actor_login}")
        if actor.role is Role.OPERATOR:
            return
        if self.tags[tag.digits].owner_login != actor_login:
            raise NotAuthorized("only the tag's owner or an operator may do this")

    def report_stolen(self, actor_login: str, tag: TagId) -> TheftReport:
        with self._lock:
            if tag.digits not in self.tags:
                raise UnknownTag(tag.digits)
            self._check_report_auth(actor_login, tag)
            if tag.digits in self.open_reports:
                raise AlreadyReported(tag.digits)
            self._commit("report_open", {"tag": tag.digits, "by": actor_login})
            return self.open_reports[tag.digits]

    def clear_report(self, actor_login: str, tag: TagId) -> TheftReport:
        with self._lock:
            if tag.digits not in self.tags:
                raise UnknownTag(tag.digits)
            if tag.digits not in self.open_reports:
                raise NoOpenReport(tag.digits)
            self._check_report_auth(actor_login, tag)
            self._commit("report_close", {"tag": tag.digits, "by": actor_login})
            return self.closed_reports[-1]

    # --- verdicts & checkpost protocol -----------------------------------

    def decide(self, tag: TagId) -> Verdict:
        """ARREST for reported (and, under STRICT, unregistered) tags."""
        with self._lock:
            record = self.tags.get(tag.digits)
            if record is None:
                return Verdict.ARREST if self.policy is Policy.STRICT else Verdict.GO
            if record.status is TagStatus.REPORTED_STOLEN:
                return Verdict.ARREST
            return Verdict.GO

    def handle_detect(self, checkpost_id: str, tag: TagId) -> Verdict:
        with self._lock:
            outstanding = self._exchanges.get(checkpost_id)
            if outstanding is not None:
                if outstanding.tag == tag:
                    # node retry after a lost reply: repeat the verdict
                    return outstanding.verdict
                raise ProtocolOrderViolation(
                    f"checkpost {checkpost_id} already has an outstanding detect")
            verdict = self.decide(tag)
            self._exchanges[checkpost_id] = _Exchange(tag, verdict, 0, self._now())
            return verdict

    def handle_echo(self, checkpost_id: str, echoed: Verdict) -> tuple[str, Verdict | None]:
        """Returns ("ACK", None) or ("RESEND", original verdict)."""
        with self._lock:
            ex = self._exchanges.get(checkpost_id)
            if ex is None:
                raise ProtocolOrderViolation(
                    f"echo from {checkpost_id} with no outstanding detect")
            if echoed is ex.verdict:
                del self._exchanges[checkpost_id]
                self._commit("detection", {
                    "checkpost": checkpost_id, "tag": ex.tag.digits,
                    "verdict": ex.verdict.value, "echo_ok": True})
                return ("ACK", None)
            ex.retries += 1
            if ex.retries <= ECHO_MAX_RETRIES:
                return ("RESEND", ex.verdict)
            del self._exchanges[checkpost_id]
            self._commit("detection", {
                "checkpost": checkpost_id, "tag": ex.tag.digits,
                "verdict": ex.verdict.value, "echo_ok": False})
            return ("ACK", None)

    def release(self, actor_login: str, checkpost_id: str) -> None:
        with self._lock:
            actor = self.users.get(actor_login)
            if actor is None or actor.role is not Role.OPERATOR:
                raise NotAuthorized("only operators may release a gate")
            self._commit("release", {"checkpost": checkpost_id, "by": actor_login})
            self._pending_releases.add(checkpost_id)

    def pop_release(self, checkpost_id: str) -> bool:
        """Consume a pending release command for a checkpost (simulator poll)."""
        with self._lock:
            if checkpost_id in self._pending_releases:
                self._pending_releases.discard(checkpost_id)
                return True
            return False

    # --- queries -----------------------------------------------------------

    def events_since(self, since_id: int) -> tuple[list[Event], int]:
        with self._lock:
            return [e for e in self.events if e.event_id > since_id], self._event_id

    @property
    def server_event_id(self) -> int:
        return self._event_id

    def tag_info(self, tag: TagId) -> TagRecord:
        with self._lock:
            record = self.tags.get(tag.digits)
            if record is None:
                raise UnknownTag(tag.digits)
            return record

    def snapshot(self) -> dict:
        """Comparable view of the durable state (ephemera excluded)."""
        with self._lock:
            return {
                "users": {
                    u.login_id: {"role": u.role.value, "salt": u.salt.hex(),
                                 "digest": u.digest.hex(),
                                 "owned": sorted(u.owned_tags)}
                    for u in self.users.values()},
                "tags": {
                    t.tag.digits: {"owner": t.owner_login, "status": t.status.value,
                                   "registered_at": t.registered_at}
                    for t in self.tags.values()},
                "open_reports": {
                    r.tag.digits: {"by": r.reported_by, "opened_at": r.opened_at}
                    for r in self.open_reports.values()},
                "closed_reports": [
                    {"tag": r.tag.digits, "by": r.reported_by,
                     "opened_at": r.opened_at, "closed_at": r.closed_at}
                    for r in self.closed_reports],
                "detections": [
                    {"id": d.event_id, "checkpost": d.checkpost_id,
                     "tag": d.tag.digits, "verdict": d.verdict.value,
                     "echo_ok": d.echo_ok, "at": d.at}
                    for d in self.detections],
                "seq": self._seq,
                "event_id": self._event_id,
            }

    def close(self):
        if self._journal_file:
            self._journal_file.close()
            self._journal_file = None
