"""Check-post controller: a deterministic state machine over a muxed channel.

The node continuously scans, forwards a seen tag to the server, waits for a
one-byte verdict, echoes it back so the server can verify the link, and
actuates the gate on acknowledgement. The Rx multiplexer points at the
reader while scanning and at the server for the rest of the exchange.

Fail-secure: exhausted retries close the gate and raise an alarm. A closed
gate reopens only on an operator release.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

from .frame_codec import TagId


class Verdict(Enum):
    ARREST = "A"
    GO = "G"


# one-byte wire codes; printable ASCII for log readability
ARREST_BYTE = 0x41  # 'A'
GO_BYTE = 0x47  # 'G'

_BYTE_TO_VERDICT = {ARREST_BYTE: Verdict.ARREST, GO_BYTE: Verdict.GO}
_VERDICT_TO_BYTE = {v: b for b, v in _BYTE_TO_VERDICT.items()}


def verdict_wire_byte(v: Verdict) -> int:
    return _VERDICT_TO_BYTE[v]


def verdict_from_byte(octet: int) -> Verdict | None:
    """None for any octet that is not a decision code."""
    return _BYTE_TO_VERDICT.get(octet)


class Mode(Enum):
    SCANNING = "scanning"
    AWAIT_CODE = "await_code"
    ECHOING = "echoing"


class MuxSource(Enum):
    READER = "reader"
    SERVER = "server"


class Gate(Enum):
    OPEN = "open"
    CLOSED = "closed"


# --- events ---------------------------------------------------------------


@dataclass(frozen=True)
class TagScanned:
    tag: TagId


@dataclass(frozen=True)
class ServerByte:
    octet: int


@dataclass(frozen=True)
class AckReceived:
    pass


@dataclass(frozen=True)
class ResendReceived:
    verdict: Verdict


@dataclass(frozen=True)
class Timeout:
    pass


@dataclass(frozen=True)
class OperatorRelease:
    pass


NodeEvent = TagScanned | ServerByte | AckReceived | ResendReceived | Timeout | OperatorRelease


# --- actions --------------------------------------------------------------


@dataclass(frozen=True)
class SendToServer:
    tag: TagId


@dataclass(frozen=True)
class SelectMux:
    source: MuxSource


@dataclass(frozen=True)
class SendEcho:
    verdict: Verdict


@dataclass(frozen=True)
class CloseGate:
    pass


@dataclass(frozen=True)
class KeepGateOpen:
    pass


@dataclass(frozen=True)
class OpenGate:
    pass


@dataclass(frozen=True)
class RaiseAlarm:
    reason: str


NodeAction = SendToServer | SelectMux | SendEcho | CloseGate | KeepGateOpen | OpenGate | RaiseAlarm


class IllegalEvent(Exception):
    """Event is impossible for the current mux source: a harness bug."""

    def __init__(self, state: "CheckpostState", event: NodeEvent):
        super().__init__(f"illegal event {event} in mode {state.mode}, mux {state.mux}")
        self.state = state
        self.event = event


@dataclass(frozen=True)
class CheckpostConfig:
    max_retries: int = 3
    dedupe_window: float = 2.0  # simulated seconds


@dataclass(frozen=True)
class CheckpostState:
    id: str
    mode: Mode = Mode.SCANNING
    mux: MuxSource = MuxSource.READER
    gate: Gate = Gate.OPEN
    pending_tag: TagId | None = None
    pending_verdict: Verdict | None = None
    retries: int = 0
    last_tag: TagId | None = None
    last_tag_time: float | None = None


def initial_state(checkpost_id: str) -> CheckpostState:
    return CheckpostState(id=checkpost_id)


def dedupe_filter(state: CheckpostState, tag: TagId, now: float,
                  config: CheckpostConfig = CheckpostConfig()) -> bool:
    """True to accept the scan, False to suppress a recent repeat.

    Continuous-mode reading re-reports the same tag while the vehicle sits
    in range; repeats of the last accepted tag inside the window are noise.
    """
    if state.last_tag != tag or state.last_tag_time is None:
        return True
    return now - state.last_tag_time >= config.dedupe_window


def _fail_secure(state: CheckpostState, reason: str) -> tuple[CheckpostState, list[NodeAction]]:
    new = replace(state, mode=Mode.SCANNING, mux=MuxSource.READER, gate=Gate.CLOSED,
                  pending_tag=None, pending_verdict=None, retries=0)
    return new, [CloseGate(), RaiseAlarm(reason), SelectMux(MuxSource.READER)]


def step(state: CheckpostState, event: NodeEvent, now: float,
         config: CheckpostConfig = CheckpostConfig()) -> tuple[CheckpostState, list[NodeAction]]:
    """Advance the node by one event; pure in (state, event, now, config)."""
    if isinstance(event, OperatorRelease):
        if state.gate is Gate.CLOSED:
            return replace(state, gate=Gate.OPEN), [OpenGate()]
        return state, []

    if isinstance(event, TagScanned):
        if state.mux is not MuxSource.READER or state.mode is not Mode.SCANNING:
            raise IllegalEvent(state, event)
        if not dedupe_filter(state, event.tag, now, config):
            return state, []
        new = replace(state, mode=Mode.AWAIT_CODE, mux=MuxSource.SERVER,
                      pending_tag=event.tag, retries=0,
                      last_tag=event.tag, last_tag_time=now)
        return new, [SendToServer(event.tag), SelectMux(MuxSource.SERVER)]

    if isinstance(event, Timeout):
        if state.mode is Mode.SCANNING:
            return state, []  # stale timer, nothing outstanding
        if state.retries >= config.max_retries:
            return _fail_secure(state, "fail-secure")
        if state.mode is Mode.AWAIT_CODE:
            return (replace(state, retries=state.retries + 1),
                    [SendToServer(state.pending_tag)])
        return (replace(state, retries=state.retries + 1),
                [SendEcho(state.pending_verdict)])

    # remaining events arrive on the server leg
    if state.mux is not MuxSource.SERVER:
        raise IllegalEvent(state, event)

    if isinstance(event, ServerByte):
        if state.mode is not Mode.AWAIT_CODE:
            raise IllegalEvent(state, event)
        verdict = verdict_from_byte(event.octet)
        if verdict is None:
            # unknown code byte: treated as a mismatch, retry the forward
            if state.retries >= config.max_retries:
                return _fail_secure(state, "fail-secure")
            return (replace(state, retries=state.retries + 1),
                    [SendToServer(state.pending_tag)])
        return (replace(state, mode=Mode.ECHOING, pending_verdict=verdict),
                [SendEcho(verdict)])

    if isinstance(event, AckReceived):
        if state.mode is not Mode.ECHOING:
            raise IllegalEvent(state, event)
        verdict = state.pending_verdict
        new = replace(state, mode=Mode.SCANNING, mux=MuxSource.READER,
                      pending_tag=None, pending_verdict=None, retries=0,
                      gate=Gate.CLOSED if verdict is Verdict.ARREST else state.gate)
        actuate: NodeAction = CloseGate() if verdict is Verdict.ARREST else KeepGateOpen()
        return new, [actuate, SelectMux(MuxSource.READER)]

    if isinstance(event, ResendReceived):
        if state.mode is not Mode.ECHOING:
            raise IllegalEvent(state, event)
        if state.retries >= config.max_retries:
            return _fail_secure(state, "fail-secure")
        return (replace(state, retries=state.retries + 1, pending_verdict=event.verdict),
                [SendEcho(event.verdict)])

    raise IllegalEvent(state, event)
