"""Deterministic discrete-event world: vehicles, reader zones, serial links.

Vehicles are line-follower robots moving along a 1-D route (steering is
abstracted to arc-length motion; the controller truth table is still
modeled). Each checkpost has a reader zone, a controller node, and a gate.
Link speeds turn into per-byte latencies so traces are reproducible without
wall-clock timing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

from . import checkpost as cp
from . import singulation
from .frame_codec import FRAME_LEN, TagId
from .registry import Policy, Registry, Role

# line-follower geometry and comparator thresholds
LINE_HALF_WIDTH = 0.01  # meters; sensors straddle the line when centered
SENSOR_SPACING = 0.03
IR_THRESHOLD_V = 0.5  # below threshold = over the white line = logic 1
OBSTACLE_THRESHOLD_V = 4.0
OBSTACLE_RANGE = 0.10  # meters

IR_ON_LINE_V = 0.2
IR_OFF_LINE_V = 3.0
OBSTACLE_NEAR_V = 4.5
OBSTACLE_FAR_V = 0.0

DEFAULT_DT = 0.01
DEFAULT_SPEED = 0.2
DEFAULT_READER_RANGE = 0.1016  # 4 inches
REPLY_TIMEOUT = 1.0  # node retry timer, simulated seconds


class ScenarioInvalid(Exception):
    pass


class RegistryUnreachable(Exception):
    pass


class DriveAction(Enum):
    FORWARD = "forward"
    LEFT = "left"
    RIGHT = "right"
    STOP = "stop"


@dataclass(frozen=True)
class LineFollowerState:
    left_ir: float  # volts
    right_ir: float
    obstacle: float
    last_action: DriveAction = DriveAction.FORWARD

    @property
    def left_on_line(self) -> bool:
        return self.left_ir < IR_THRESHOLD_V

    @property
    def right_on_line(self) -> bool:
        return self.right_ir < IR_THRESHOLD_V

    @property
    def obstacle_near(self) -> bool:
        return self.obstacle >= OBSTACLE_THRESHOLD_V


@dataclass(frozen=True)
class LinkModel:
    reader_link_bps: int = 2400
    server_link_bps: int = 9600
    server_extra_rtt: float = 0.0

    @property
    def frame_latency(self) -> float:
        """Time for one 12-byte tag frame on the reader link (120 bits)."""
        return FRAME_LEN * 10 / self.reader_link_bps

    def line_latency(self, n_bytes: int) -> float:
        return n_bytes * 10 / self.server_link_bps


@dataclass
class Vehicle:
    id: str
    tag: Optional[TagId]
    route: list[float]  # monotone arc-length waypoints; first = start, last = end
    speed: float
    start_time: float = 0.0
    registered: bool = True
    lateral_offset: float = 0.0
    position: float = field(init=False)
    controller: LineFollowerState = field(
        default=LineFollowerState(IR_OFF_LINE_V, IR_OFF_LINE_V, OBSTACLE_FAR_V))
    done: bool = False

    def __post_init__(self):
        self.position = self.route[0]

    @property
    def active(self) -> bool:
        return not self.done

    @property
    def stopped(self) -> bool:
        return self.controller.last_action is DriveAction.STOP


@dataclass
class CheckpostSite:
    id: str
    position: float
    range: float = DEFAULT_READER_RANGE
    enabled: bool = True
    config: cp.CheckpostConfig = field(default_factory=cp.CheckpostConfig)
    state: cp.CheckpostState = field(init=False)
    in_zone: set[str] = field(default_factory=set)  # vehicle ids
    last_sched: dict[str, float] = field(default_factory=dict)  # tag -> t
    scan_busy: bool = False
    reply_deadline: Optional[float] = None

    def __post_init__(self):
        self.state = cp.initial_state(self.id)

    @property
    def gate_closed(self) -> bool:
        return self.state.gate is cp.Gate.CLOSED


@dataclass(frozen=True)
class ScheduledAction:
    at: float
    kind: str  # report_stolen | clear_report | operator_release
    tag: Optional[TagId] = None
    checkpost: Optional[str] = None


@dataclass(frozen=True)
class Scenario:
    version: int
    seed: int
    dt: float
    duration: float
    policy: Policy
    link: LinkModel
    checkposts: tuple[dict, ...]
    vehicles: tuple[dict, ...]
    actions: tuple[ScheduledAction, ...]


_TOP_FIELDS = {"version", "seed", "dt", "duration", "policy", "checkposts",
               "vehicles", "actions", "link"}
_CP_FIELDS = {"id", "position", "range", "enabled"}
_VEH_FIELDS = {"id", "tag", "route", "speed", "start_time", "registered",
               "lateral_offset"}
_ACT_FIELDS = {"at", "kind", "tag", "checkpost"}
_LINK_FIELDS = {"reader_link_bps", "server_link_bps", "server_extra_rtt"}


def _reject_unknown(obj: dict, allowed: set[str], where: str):
    extra = set(obj) - allowed
    if extra:
        raise ScenarioInvalid(f"unknown fields {sorted(extra)} in {where}")


def parse_scenario(doc: dict) -> Scenario:
    """Validate a scenario document (already parsed JSON). Unknown fields reject."""
    if not isinstance(doc, dict):
        raise ScenarioInvalid("scenario must be an object")
    _reject_unknown(doc, _TOP_FIELDS, "scenario")
    for key in ("version", "seed", "duration", "checkposts", "vehicles"):
        if key not in doc:
            raise ScenarioInvalid(f"missing required field {key!r}")
    if doc["version"] != 1:
        raise ScenarioInvalid(f"unsupported scenario version {doc['version']}")
    dt = float(doc.get("dt", DEFAULT_DT))
    duration = float(doc["duration"])
    if dt <= 0 or duration < 0:
        raise ScenarioInvalid("dt must be > 0 and duration >= 0")
    link_doc = doc.get("link", {})
    _reject_unknown(link_doc, _LINK_FIELDS, "link")
    link = LinkModel(**link_doc)
    cp_ids = set()
    for c in doc["checkposts"]:
        _reject_unknown(c, _CP_FIELDS, f"checkpost {c.get('id')}")
        if c["id"] in cp_ids:
            raise ScenarioInvalid(f"duplicate checkpost id {c['id']}")
        cp_ids.add(c["id"])
    tags = set()
    max_speed = 0.0
    for v in doc["vehicles"]:
        _reject_unknown(v, _VEH_FIELDS, f"vehicle {v.get('id')}")
        route = v.get("route")
        if not route or len(route) < 2 or any(
                b < a for a, b in zip(route, route[1:])):
            raise ScenarioInvalid(f"vehicle {v.get('id')}: route must be monotone")
        if v.get("tag") is not None:
            tag = TagId(v["tag"])
            if tag.digits in tags:
                raise ScenarioInvalid(f"duplicate tag {tag}")
            tags.add(tag.digits)
        max_speed = max(max_speed, float(v["speed"]))
    if max_speed * dt >= OBSTACLE_RANGE:
        raise ScenarioInvalid(
            f"dt*speed = {max_speed * dt} must stay below the "
            f"{OBSTACLE_RANGE} m obstacle interlock distance")
    actions = []
    for a in doc.get("actions", []):
        _reject_unknown(a, _ACT_FIELDS, "action")
        at = float(a["at"])
        if not 0 <= at <= duration:
            raise ScenarioInvalid(f"action time {at} outside scenario duration")
        kind = a["kind"]
        if kind in ("report_stolen", "clear_report"):
            if a.get("tag") is None or TagId(a["tag"]).digits not in tags:
                raise ScenarioInvalid(f"action {kind}: unknown tag {a.get('tag')}")
            actions.append(ScheduledAction(at, kind, tag=TagId(a["tag"])))
        elif kind == "operator_release":
            if a.get("checkpost") not in cp_ids:
                raise ScenarioInvalid(
                    f"action {kind}: unknown checkpost {a.get('checkpost')}")
            actions.append(ScheduledAction(at, kind, checkpost=a["checkpost"]))
        else:
            raise ScenarioInvalid(f"unknown action kind {kind!r}")
    return Scenario(
        version=1, seed=int(doc["seed"]), dt=dt, duration=duration,
        policy=Policy(doc.get("policy", "strict")), link=link,
        checkposts=tuple(doc["checkposts"]), vehicles=tuple(doc["vehicles"]),
        actions=tuple(sorted(actions, key=lambda a: a.at)))


def load_scenario(path: str | Path) -> Scenario:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioInvalid(f"scenario file is not valid JSON: {exc}") from exc
    return parse_scenario(doc)


# --- sensing & driving ------------------------------------------------------


def sense(vehicle: Vehicle, world: "World") -> LineFollowerState:
    """Read the two line sensors and the obstacle sensor."""
    left_pos = vehicle.lateral_offset - SENSOR_SPACING / 2
    right_pos = vehicle.lateral_offset + SENSOR_SPACING / 2
    left_v = IR_ON_LINE_V if abs(left_pos) <= LINE_HALF_WIDTH else IR_OFF_LINE_V
    right_v = IR_ON_LINE_V if abs(right_pos) <= LINE_HALF_WIDTH else IR_OFF_LINE_V
    dist = world.obstruction_distance(vehicle)
    obstacle_v = OBSTACLE_NEAR_V if dist is not None and dist <= OBSTACLE_RANGE \
        else OBSTACLE_FAR_V
    return LineFollowerState(left_v, right_v, obstacle_v,
                             vehicle.controller.last_action)


def drive(state: LineFollowerState) -> DriveAction:
    """Controller truth table: obstacle wins, then line correction."""
    if state.obstacle_near:
        return DriveAction.STOP
    if state.left_on_line and state.right_on_line:
        return DriveAction.STOP  # junction / lost line: conservative halt
    if state.left_on_line:
        return DriveAction.LEFT
    if state.right_on_line:
        return DriveAction.RIGHT
    return DriveAction.FORWARD


# --- trace ------------------------------------------------------------------


@dataclass(frozen=True)
class TraceRecord:
    seq: int
    t: float
    kind: str
    payload: dict

    def to_line(self) -> str:
        body = json.dumps(self.payload, sort_keys=True, separators=(",", ":"))
        return f"{self.seq}\t{self.t:.6f}\t{self.kind}\t{body}"


class EventTrace:
    def __init__(self):
        self.records: list[TraceRecord] = []

    def add(self, t: float, kind: str, **payload) -> TraceRecord:
        rec = TraceRecord(len(self.records) + 1, t, kind, payload)
        self.records.append(rec)
        return rec

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def by_kind(self, kind: str) -> list[TraceRecord]:
        return [r for r in self.records if r.kind == kind]

    def to_lines(self) -> list[str]:
        return [r.to_line() for r in self.records]

    def write(self, path: str | Path):
        Path(path).write_text("\n".join(self.to_lines()) + "\n")


# --- the world ---------------------------------------------------------------


@dataclass(order=True)
class _Message:
    t: float
    seq: int
    kind: str = field(compare=False)  # scan | to_server | to_node
    target: str = field(compare=False)  # checkpost id
    payload: dict = field(compare=False)


class World:
    """Single-timeline world; advance() moves it one tick."""

    def __init__(self, scenario: Scenario, registry: Registry | None = None):
        self.scenario = scenario
        self.dt = scenario.dt
        self.tick = 0
        self.now = 0.0
        self.link = scenario.link
        self.trace = EventTrace()
        self.registry = registry if registry is not None else Registry(
            policy=scenario.policy, now_fn=lambda: self.now)
        self.sites = {c["id"]: CheckpostSite(
            c["id"], float(c["position"]),
            float(c.get("range", DEFAULT_READER_RANGE)),
            bool(c.get("enabled", True)))
            for c in scenario.checkposts}
        self.vehicles = [Vehicle(
            id=v["id"],
            tag=TagId(v["tag"]) if v.get("tag") is not None else None,
            route=[float(x) for x in v["route"]],
            speed=float(v["speed"]),
            start_time=float(v.get("start_time", 0.0)),
            registered=bool(v.get("registered", True)),
            lateral_offset=float(v.get("lateral_offset", 0.0)))
            for v in scenario.vehicles]
        self.vehicles.sort(key=lambda v: v.id)
        self._messages: list[_Message] = []
        self._msg_seq = 0
        self._pending_actions = list(scenario.actions)
        self._bootstrap_accounts()

    # owners and registrations the scenario implies, created at t=0
    def _bootstrap_accounts(self):
        reg = self.registry
        if "scenario-op" not in reg.users:
            reg.register_user("scenario-op", "scenario-op-pass", Role.OPERATOR)
        for v in self.vehicles:
            if v.tag is not None and v.registered:
                owner = f"owner-{v.id}"
                if owner not in reg.users:
                    reg.register_user(owner, "scenario-own-pass", Role.OWNER)
                if v.tag.digits not in reg.tags:
                    reg.register_tag(owner, v.tag)

    # --- geometry helpers -------------------------------------------------

    def obstruction_distance(self, vehicle: Vehicle) -> float | None:
        """Distance to the nearest closed gate or stopped vehicle ahead."""
        best = None
        for site in self.sites.values():
            if site.gate_closed and site.position > vehicle.position:
                d = site.position - vehicle.position
                best = d if best is None else min(best, d)
        for other in self.vehicles:
            if other is vehicle or other.done or not other.stopped:
                continue
            if other.position > vehicle.position:
                d = other.position - vehicle.position
                best = d if best is None else min(best, d)
        return best

    # --- message plumbing ---------------------------------------------------

    def _schedule(self, t: float, kind: str, target: str, **payload):
        self._msg_seq += 1
        self._messages.append(_Message(t, self._msg_seq, kind, target, payload))

    def _apply_node_actions(self, site: CheckpostSite, actions, t: float):
        for action in actions:
            if isinstance(action, cp.SendToServer):
                line = f"DETECT {site.id} {action.tag}"
                self._schedule(t + self.link.line_latency(len(line) + 1),
                               "to_server", site.id, line=line)
                site.reply_deadline = t + REPLY_TIMEOUT
            elif isinstance(action, cp.SendEcho):
                line = f"ECHO {action.verdict.value}"
                self._schedule(t + self.link.line_latency(len(line) + 1),
                               "to_server", site.id, line=line)
                site.reply_deadline = t + REPLY_TIMEOUT
            elif isinstance(action, cp.CloseGate):
                self.trace.add(t, "gate_close", checkpost=site.id)
            elif isinstance(action, cp.KeepGateOpen):
                self.trace.add(t, "gate_keep_open", checkpost=site.id)
            elif isinstance(action, cp.OpenGate):
                self.trace.add(t, "gate_open", checkpost=site.id)
            elif isinstance(action, cp.RaiseAlarm):
                self.trace.add(t, "alarm", checkpost=site.id, reason=action.reason)
            # SelectMux is already reflected in the node state
        if site.state.mode is cp.Mode.SCANNING:
            site.reply_deadline = None

    def _step_node(self, site: CheckpostSite, event, t: float):
        state, actions = cp.step(site.state, event, t, site.config)
        site.state = state
        self._apply_node_actions(site, actions, t)

    def _deliver(self, msg: _Message):
        site = self.sites[msg.target]
        t = msg.t
        if msg.kind == "scan":
            site.scan_busy = False
            tag = TagId(msg.payload["tag"])
            self.trace.add(t, "tag_scanned", checkpost=site.id, tag=tag.digits,
                           vehicle=msg.payload["vehicle"],
                           frame_latency=self.link.frame_latency)
            if site.state.mode is cp.Mode.SCANNING:
                self._step_node(site, cp.TagScanned(tag), t)
        elif msg.kind == "to_server":
            self._handle_server_line(site, msg.payload["line"], t)
        elif msg.kind == "to_node":
            event = msg.payload["event"]
            kind = msg.payload["trace_kind"]
            self.trace.add(t, kind, checkpost=site.id, **msg.payload.get("extra", {}))
            if site.state.mode is not cp.Mode.SCANNING:
                self._step_node(site, event, t)

    def _handle_server_line(self, site: CheckpostSite, line: str, t: float):
        parts = line.split()
        reply_at = t + self.link.server_extra_rtt
        if parts[0] == "DETECT":
            tag = TagId(parts[2])
            verdict = self.registry.handle_detect(site.id, tag)
            self.trace.add(t, "detect", checkpost=site.id, tag=tag.digits,
                           verdict=verdict.value)
            reply = f"CODE {verdict.value}"
            self._schedule(reply_at + self.link.line_latency(len(reply) + 1),
                           "to_node", site.id,
                           event=cp.ServerByte(cp.verdict_wire_byte(verdict)),
                           trace_kind="code", extra={"verdict": verdict.value})
        elif parts[0] == "ECHO":
            verdict = cp.Verdict(parts[1])
            status, resend = self.registry.handle_echo(site.id, verdict)
            self.trace.add(t, "echo", checkpost=site.id, verdict=verdict.value)
            if status == "ACK":
                self._schedule(reply_at + self.link.line_latency(4),
                               "to_node", site.id, event=cp.AckReceived(),
                               trace_kind="ack", extra={})
            else:
                reply = f"RESEND {resend.value}"
                self._schedule(reply_at + self.link.line_latency(len(reply) + 1),
                               "to_node", site.id,
                               event=cp.ResendReceived(resend),
                               trace_kind="resend", extra={"verdict": resend.value})

    # --- scheduled scenario actions ----------------------------------------

    def _apply_scheduled(self):
        while self._pending_actions and self._pending_actions[0].at <= self.now:
            act = self._pending_actions.pop(0)
            if act.kind == "report_stolen":
                self.registry.report_stolen("scenario-op", act.tag)
                self.trace.add(self.now, "action_report_stolen", tag=act.tag.digits)
            elif act.kind == "clear_report":
                self.registry.clear_report("scenario-op", act.tag)
                self.trace.add(self.now, "action_clear_report", tag=act.tag.digits)
            elif act.kind == "operator_release":
                self.registry.release("scenario-op", act.checkpost)
                self.trace.add(self.now, "action_operator_release",
                               checkpost=act.checkpost)

    # --- main loop -----------------------------------------------------------

    def advance(self):
        """One tick: deliver messages, apply actions, move vehicles, scan."""
        self.tick += 1
        self.now = self.tick * self.dt
        self._apply_scheduled()

        due = sorted(m for m in self._messages if m.t <= self.now)
        self._messages = [m for m in self._messages if m.t > self.now]
        for msg in due:
            self._deliver(msg)

        for site in sorted(self.sites.values(), key=lambda s: s.id):
            if self.registry.pop_release(site.id):
                self._step_node(site, cp.OperatorRelease(), self.now)
            if (site.reply_deadline is not None
                    and self.now > site.reply_deadline
                    and site.state.mode is not cp.Mode.SCANNING):
                site.reply_deadline = None
                self._step_node(site, cp.Timeout(), self.now)

        for vehicle in self.vehicles:
            if vehicle.done or self.now < vehicle.start_time:
                continue
            state = sense(vehicle, self)
            action = drive(state)
            if action is DriveAction.STOP and not vehicle.stopped:
                self.trace.add(self.now, "vehicle_stop", vehicle=vehicle.id,
                               position=round(vehicle.position, 9))
            elif action is not DriveAction.STOP and vehicle.stopped:
                self.trace.add(self.now, "vehicle_resume", vehicle=vehicle.id,
                               position=round(vehicle.position, 9))
            vehicle.controller = LineFollowerState(
                state.left_ir, state.right_ir, state.obstacle, action)
            if action is DriveAction.FORWARD:
                vehicle.position += vehicle.speed * self.dt
                if vehicle.position >= vehicle.route[-1]:
                    vehicle.position = vehicle.route[-1]
                    vehicle.done = True
                    self.trace.add(self.now, "vehicle_exit", vehicle=vehicle.id)

        for site in sorted(self.sites.values(), key=lambda s: s.id):
            self._scan_zone(site)

    def _scan_zone(self, site: CheckpostSite):
        if not site.enabled:
            return
        present: dict[str, str] = {}  # tag digits -> vehicle id
        for vehicle in self.vehicles:
            if (vehicle.tag is not None and not vehicle.done
                    and self.now >= vehicle.start_time
                    and abs(vehicle.position - site.position) <= site.range):
                present[vehicle.tag.digits] = vehicle.id
                if vehicle.id not in site.in_zone:
                    site.in_zone.add(vehicle.id)
                    self.trace.add(self.now, "zone_enter", checkpost=site.id,
                                   vehicle=vehicle.id, tag=vehicle.tag.digits)
        gone = {vid for vid in site.in_zone if vid not in present.values()}
        site.in_zone -= gone
        if site.scan_busy or site.state.mode is not cp.Mode.SCANNING:
            return
        window = site.config.dedupe_window
        eligible = {d for d in present
                    if self.now - site.last_sched.get(d, -window) >= window}
        if not eligible:
            return
        if len(eligible) == 1:
            chosen = next(iter(eligible))
        else:
            order, _ = singulation.tree_singulate(singulation.TagField(
                frozenset(TagId(d) for d in eligible), self.scenario.seed))
            chosen = order[0].digits
        site.last_sched[chosen] = self.now
        site.scan_busy = True
        self.trace.add(self.now, "frame_tx", checkpost=site.id, tag=chosen,
                       vehicle=present[chosen])
        self._schedule(self.now + self.link.frame_latency, "scan", site.id,
                       tag=chosen, vehicle=present[chosen])

    def run(self) -> EventTrace:
        n_ticks = int(round(self.scenario.duration / self.dt))
        for _ in range(n_ticks):
            self.advance()
        return self.trace


def run_scenario(scenario: Scenario, registry: Registry | None = None) -> EventTrace:
    """Execute a scenario to completion; identical inputs give identical traces."""
    return World(scenario, registry).run()
