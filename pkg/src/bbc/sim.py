"""Deterministic discrete-event simulation of a biometric-blockchain VANET.

Vehicles drive on a 1-D ring road; roadside units sit at fixed, evenly
spaced positions. V2X traffic travels by radio to every node within range.
Consensus traffic (driving proofs, proposals, votes) rides the roadside
backbone and reaches every node. All randomness comes from named seeded
streams and time is logical ``(round, tick)``, so a run is a pure function
of its scenario.

One round::

    tick 0      RoundStart: honest and adversary traffic
    tick L      driving proofs
    tick 2L     qualification, election, proposal; votes follow delivery
    tick 4L     RoundTimeout: commit or skip
    tick 4L+1   Move

with ``L = latency_max + 1`` so each phase's traffic lands before the next.
"""

from __future__ import annotations

import enum
import heapq
import logging
from collections import Counter
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .biometrics import STREAM_PROBE, Fleet, SigningKey, seeded_rng
from .consensus import (
    Decision,
    DeliveryRecord,
    DrivingProof,
    Phase,
    RoundState,
    Vote,
    elect,
    make_driving_proof,
    propose,
    qualify,
    try_commit,
    vote,
)
from .credits import CreditLedger
from .ledger import Block, ChainState, validate_block
from .messages import FRESHNESS_WINDOW, Kind, MsgType, Rejection, V2XMessage, validate_message
from .store import dumps_chain, dumps_registry

log = logging.getLogger(__name__)

STREAM_NODE = 6
MIN_SPEED = 10.0
MAX_SPEED = 30.0
MAX_INFLATION = 3


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class Mode(enum.Enum):
    FORGE_SIGNATURE = "ForgeSignature"
    INFLATE_CLAIM = "InflateClaim"
    REPLAY = "Replay"
    DROP = "Drop"


class Role(enum.Enum):
    VEHICLE = "vehicle"
    INFRA = "infra"


@dataclass(frozen=True)
class Scenario:
    seed: int = 1
    n_vehicles: int = 10
    n_infra: int = 2
    road_length: float = 2000.0
    radio_range: float = 300.0
    rounds: int = 200
    latency_min: int = 1
    latency_max: int = 5
    adversaries: Mapping[int, Mode] = field(default_factory=dict)
    match_threshold: float = 0.85
    activity_window: int = 5
    drop_probability: float = 0.0

    @property
    def n_nodes(self) -> int:
        return self.n_vehicles + self.n_infra

    @property
    def phase_ticks(self) -> int:
        return self.latency_max + 1

    def validate(self) -> None:
        ints = ("seed", "n_vehicles", "n_infra", "rounds", "latency_min", "latency_max", "activity_window")
        for key in ints:
            value = getattr(self, key)
            if type(value) is not int:
                raise ConfigError(key, "must be an integer")
        for key in ("road_length", "radio_range", "match_threshold", "drop_probability"):
            value = getattr(self, key)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(key, "must be a number")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed", "must be a 64-bit unsigned integer")
        for key in ("n_vehicles", "rounds", "latency_min", "latency_max", "activity_window"):
            if getattr(self, key) < 1:
                raise ConfigError(key, "must be positive")
        if self.n_infra < 0:
            raise ConfigError("n_infra", "must not be negative")
        for key in ("road_length", "radio_range"):
            if not getattr(self, key) > 0:
                raise ConfigError(key, "must be positive")
        if self.latency_max < self.latency_min:
            raise ConfigError("latency_max", "must be >= latency_min")
        if not 0.0 < self.match_threshold < 1.0:
            raise ConfigError("match_threshold", "must lie in (0, 1)")
        if not 0.0 <= self.drop_probability < 1.0:
            raise ConfigError("drop_probability", "must lie in [0, 1)")
        for node_id, mode in self.adversaries.items():
            if type(node_id) is not int or not 0 <= node_id < self.n_vehicles:
                raise ConfigError("adversaries", f"node {node_id!r} is not a vehicle id")
            if not isinstance(mode, Mode):
                raise ConfigError("adversaries", f"unknown mode {mode!r}")
        if len(self.adversaries) >= self.n_vehicles:
            raise ConfigError("adversaries", "adversary count must be below n_vehicles")

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "Scenario":
        """Build from flat config keys; unknown keys are errors."""
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError(key, "unknown configuration key")
        kwargs = dict(data)
        if "adversaries" in kwargs:
            raw = kwargs["adversaries"]
            if not isinstance(raw, Mapping):
                raise ConfigError("adversaries", "must be a table of node id -> mode")
            parsed: dict[int, Mode] = {}
            for k, v in raw.items():
                try:
                    parsed[int(k)] = Mode(v)
                except (TypeError, ValueError):
                    raise ConfigError("adversaries", f"bad entry {k!r} = {v!r}") from None
            kwargs["adversaries"] = parsed
        scenario = cls(**kwargs)
        scenario.validate()
        return scenario

    def to_lines(self) -> list[str]:
        out = []
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "adversaries":
                value = ",".join(f"{k}:{m.value}" for k, m in sorted(value.items())) or "-"
            out.append(f"scenario.{f.name}={value}")
        return out


def ring_distance(a: float, b: float, length: float) -> float:
    d = abs(a - b) % length
    return min(d, length - d)


@dataclass(eq=False)
class Node:
    node_id: int
    role: Role
    biometric_id: bytes
    key: SigningKey
    mode: Mode | None
    position: float
    speed: float
    rng: np.random.Generator
    chain: ChainState
    seen_seq: dict[bytes, int] = field(default_factory=dict)
    mempool: dict[bytes, V2XMessage] = field(default_factory=dict)
    outbox: list[tuple[int, bytes]] = field(default_factory=list)
    captured: list[tuple[int, V2XMessage]] = field(default_factory=list)
    proofs: list[DrivingProof] = field(default_factory=list)
    round_state: RoundState | None = None
    proposal_valid: bool = False
    next_seq: int = 0

    @property
    def honest(self) -> bool:
        return self.mode is None

    @property
    def ledger(self) -> CreditLedger:
        return self.chain.ledger

    def take_seq(self) -> int:
        seq = self.next_seq
        self.next_seq += 1
        return seq


class EventKind(enum.IntEnum):
    ROUND_START = 0
    DELIVER = 1
    PROOFS = 2
    ELECT = 3
    TIMEOUT = 4
    MOVE = 5


@dataclass(frozen=True)
class Delivery:
    target: int
    emitter: int
    item: Any


class EventQueue:
    """Total order by ``(round, tick, insertion sequence)``."""

    def __init__(self) -> None:
        self._heap: list[tuple[int, int, int, EventKind, Any]] = []
        self._seq = 0

    def push(self, round_no: int, tick: int, kind: EventKind, payload: Any = None) -> None:
        heapq.heappush(self._heap, (round_no, tick, self._seq, kind, payload))
        self._seq += 1

    def pop(self) -> tuple[int, int, EventKind, Any]:
        r, t, _, kind, payload = heapq.heappop(self._heap)
        return r, t, kind, payload

    def __len__(self) -> int:
        return len(self._heap)


@dataclass
class World:
    scenario: Scenario
    fleet: Fleet
    nodes: list[Node]
    queue: EventQueue = field(default_factory=EventQueue)
    delivered: dict[bytes, DeliveryRecord] = field(default_factory=dict)
    round: int = 0
    tick: int = 0
    log_lines: list[str] = field(default_factory=list)
    traces: list[str] = field(default_factory=list)
    counters: Counter = field(default_factory=Counter)
    committed_at: dict[int, set[bytes]] = field(default_factory=dict)
    leader_counts: Counter = field(default_factory=Counter)

    @property
    def registry(self):
        return self.fleet.registry

    @property
    def online(self) -> int:
        return len(self.nodes)

    def by_id(self, biometric_id: bytes) -> Node:
        return self.nodes[self.fleet.ids.index(biometric_id)]

    def observer(self) -> Node:
        return next((n for n in self.nodes if n.honest), self.nodes[0])

    def emit(self, line: str) -> None:
        self.log_lines.append(f"r={self.round} t={self.tick} {line}")


def build_world(scenario: Scenario, fleet: Fleet | None = None, validate: bool = True) -> World:
    """Enroll every node and place it; ``validate=False`` skips scenario checks (tests only)."""
    if validate:
        scenario.validate()
    if fleet is None:
        fleet = Fleet(scenario.seed, scenario.n_nodes)
    elif len(fleet) != scenario.n_nodes:
        raise ConfigError("n_vehicles", f"registry has {len(fleet)} identities, scenario needs {scenario.n_nodes}")
    nodes = []
    for node_id, bid in enumerate(fleet.ids):
        rng = seeded_rng(scenario.seed, node_id, STREAM_NODE)
        if node_id < scenario.n_vehicles:
            role = Role.VEHICLE
            position = float(rng.uniform(0.0, scenario.road_length))
            speed = float(rng.uniform(MIN_SPEED, MAX_SPEED))
        else:
            role = Role.INFRA
            k = node_id - scenario.n_vehicles
            position = (k + 0.5) * scenario.road_length / scenario.n_infra
            speed = 0.0
        nodes.append(
            Node(
                node_id=node_id,
                role=role,
                biometric_id=bid,
                key=fleet.device_keys[node_id],
                mode=scenario.adversaries.get(node_id),
                position=position,
                speed=speed,
                rng=rng,
                chain=ChainState.genesis(fleet.registry),
            )
        )
    world = World(scenario, fleet, nodes)
    _probe_identities(world)
    return world


def _probe_identities(world: World) -> None:
    """One genuine and one impostor re-verification per identity, for the report."""
    authority = world.fleet.authority
    thr = world.scenario.match_threshold
    for node in world.nodes:
        rng = seeded_rng(world.scenario.seed, node.node_id, STREAM_PROBE)
        _, genuine = authority.verify_probe(node.biometric_id, world.fleet.probe(node.node_id, rng), thr)
        _, impostor = authority.verify_probe(node.biometric_id, world.fleet.impostor_probe(rng), thr)
        world.counters["probe.genuine_accepts"] += genuine
        world.counters["probe.impostor_accepts"] += impostor


# -- network -----------------------------------------------------------------


def in_range(world: World, sender: Node) -> list[Node]:
    s = world.scenario
    return [
        n
        for n in world.nodes
        if n is not sender and ring_distance(n.position, sender.position, s.road_length) <= s.radio_range
    ]


def broadcast(world: World, sender: Node, message: V2XMessage) -> list[tuple[int, int, int]]:
    """Schedule radio delivery to every node in range. Returns ``(target, round, tick)`` triples."""
    s = world.scenario
    scheduled = []
    world.counters["messages_sent"] += 1
    for target in in_range(world, sender):
        if s.drop_probability > 0 and sender.rng.random() < s.drop_probability:
            world.counters["radio_drops"] += 1
            continue
        tick = world.tick + int(sender.rng.integers(s.latency_min, s.latency_max + 1))
        world.queue.push(world.round, tick, EventKind.DELIVER, Delivery(target.node_id, sender.node_id, message))
        scheduled.append((target.node_id, world.round, tick))
    return scheduled


def backbone(world: World, sender: Node, item: Any) -> None:
    """Consensus traffic to every node; the sender's own copy arrives immediately."""
    s = world.scenario
    for target in world.nodes:
        latency = 0 if target is sender else int(sender.rng.integers(s.latency_min, s.latency_max + 1))
        world.queue.push(world.round, world.tick + latency, EventKind.DELIVER, Delivery(target.node_id, sender.node_id, item))


# -- traffic -----------------------------------------------------------------

_VEHICLE_TYPES = (MsgType.SAFETY_ALERT, MsgType.TRAFFIC_INFO, MsgType.SERVICE_REQUEST)


def _payload(node: Node, round_no: int) -> bytes:
    return f"node={node.node_id};pos={node.position:.2f};speed={node.speed:.2f};round={round_no}".encode()


def honest_message(world: World, node: Node) -> V2XMessage:
    if node.role is Role.VEHICLE:
        msg_type = _VEHICLE_TYPES[int(node.rng.integers(0, len(_VEHICLE_TYPES)))]
        kind = Kind.V2I if msg_type is MsgType.SERVICE_REQUEST else Kind.V2V
    else:
        msg_type, kind = MsgType.TRAFFIC_INFO, Kind.V2I
    return V2XMessage(
        kind,
        msg_type,
        _payload(node, world.round),
        node.biometric_id,
        node.ledger[node.biometric_id],
        node.take_seq(),
        world.round,
    ).signed(node.key)


def adversary_act(node: Node, world: World) -> list[V2XMessage]:
    """Characteristic malformed traffic for ``node.mode`` (drawn from the node's own stream)."""
    mode = node.mode
    if mode is Mode.DROP or mode is None:
        return []
    if mode is Mode.REPLAY:
        older = [(r, m) for r, m in node.captured if r < world.round]
        if not older:
            return []
        latest = max(r for r, _ in older)
        pool = [m for r, m in older if r == latest]
        return [pool[int(node.rng.integers(0, len(pool)))]]
    base = V2XMessage(
        Kind.V2V,
        MsgType.SAFETY_ALERT,
        _payload(node, world.round),
        node.biometric_id,
        node.ledger[node.biometric_id],
        node.take_seq(),
        world.round,
    )
    if mode is Mode.FORGE_SIGNATURE:
        return [replace(base, signature=node.rng.bytes(64))]
    inflation = int(node.rng.integers(1, MAX_INFLATION + 1))
    return [replace(base, credit_claim=base.credit_claim + inflation).signed(node.key)]


def _send_traffic(world: World, node: Node) -> None:
    if node.honest:
        outgoing = [honest_message(world, node)]
        for msg in outgoing:
            node.mempool[msg.digest] = msg
    else:
        outgoing = adversary_act(node, world)
    for msg in outgoing:
        if msg.sender_id == node.biometric_id:
            node.outbox.append((world.round, msg.digest))
        broadcast(world, node, msg)


# -- event handlers ----------------------------------------------------------


def _on_round_start(world: World) -> None:
    r = world.round
    horizon = r - FRESHNESS_WINDOW
    keep = r - world.scenario.activity_window
    for node in world.nodes:
        node.round_state = RoundState(r)
        node.proofs = []
        node.proposal_valid = False
        node.mempool = {d: m for d, m in node.mempool.items() if m.timestamp >= horizon}
        node.outbox = [(rr, d) for rr, d in node.outbox if rr > keep]
        node.captured = [(rr, m) for rr, m in node.captured if rr >= horizon]
    for node in world.nodes:
        _send_traffic(world, node)


def _on_message(world: World, node: Node, emitter: Node, msg: V2XMessage) -> None:
    world.counters["deliveries"] += 1
    if node.mode is Mode.REPLAY:
        node.captured.append((world.round, msg))
    observed = node.seen_seq.get(msg.sender_id, -1) >= msg.seq
    code = validate_message(msg, node.ledger.credits, world.registry, world.round, node.seen_seq)
    if emitter.mode is not None:
        mode = emitter.mode.value
        world.counters[f"adversary.{mode}.deliveries"] += 1
        world.counters[f"adversary.{mode}.{code.value if code else 'Accepted'}"] += 1
        if emitter.mode is Mode.REPLAY and observed:
            world.counters["adversary.Replay.observed"] += 1
            world.counters[f"adversary.Replay.observed_{code.value if code else 'Accepted'}"] += 1
    if code is not None:
        world.counters[f"rejections.{code.value}"] += 1
        world.emit(
            f"reject node={node.node_id} emitter={emitter.node_id} sender={msg.sender_id.hex()[:16]} "
            f"seq={msg.seq} code={code.value}"
        )
        return
    world.counters["legal_deliveries"] += 1
    node.seen_seq[msg.sender_id] = msg.seq
    node.mempool.setdefault(msg.digest, msg)
    world.delivered.setdefault(msg.digest, DeliveryRecord(msg.sender_id, world.round))


def _on_proofs(world: World) -> None:
    for node in world.nodes:
        if node.role is not Role.VEHICLE or node.mode is Mode.DROP:
            continue
        if node.mode is Mode.FORGE_SIGNATURE:
            recent = tuple(sorted({d for r, d in node.outbox if r > world.round - world.scenario.activity_window}))
            if recent:
                backbone(world, node, DrivingProof(node.biometric_id, world.round, recent, node.rng.bytes(64)))
            continue
        proof = make_driving_proof(
            node.biometric_id, node.key, world.round, node.outbox, world.delivered, world.scenario.activity_window
        )
        if proof is not None:
            backbone(world, node, proof)


def _on_elect(world: World) -> None:
    for node in world.nodes:
        state = node.round_state
        state.candidates = qualify(
            node.proofs, world.round, world.delivered, world.registry, world.scenario.activity_window
        )
        state.leader = elect(state.candidates, node.ledger)
    for node in world.nodes:
        state = node.round_state
        if state.leader != node.biometric_id or not node.honest:
            continue
        block, heartbeat = propose(
            node.biometric_id,
            node.key,
            node.mempool.values(),
            node.chain,
            world.registry,
            world.round,
            state.candidates,
            node.next_seq,
        )
        if heartbeat:
            node.take_seq()
            world.counters["heartbeat_blocks"] += 1
        backbone(world, node, block)


def _on_proposal(world: World, node: Node, block: Block) -> None:
    state = node.round_state
    if state.phase is not Phase.COLLECTING or block.header.leader_id != state.leader or block.header.nonce != world.round:
        world.emit(f"ignore-proposal node={node.node_id}")
        return
    state.set_proposal(block)
    if node.honest:
        ballot = vote(node.biometric_id, node.key, block, node.chain, world.registry, state.candidates)
        node.proposal_valid = ballot.decision is Decision.ACCEPT
        if not node.proposal_valid:
            world.emit(f"reject-block node={node.node_id}")
        backbone(world, node, ballot)
        return
    code = validate_block(block, node.chain.head, node.ledger, world.registry, node.chain.last_seq, state.candidates)
    node.proposal_valid = code is None
    if node.mode is Mode.DROP:
        return
    if node.mode is Mode.FORGE_SIGNATURE:
        ballot = Vote(node.biometric_id, world.round, block.hash, Decision.ACCEPT, node.rng.bytes(64))
    else:
        ballot = Vote(node.biometric_id, world.round, block.hash, Decision.REJECT)
        ballot = replace(ballot, signature=node.key.sign(ballot.signing_bytes()))
    backbone(world, node, ballot)


def _on_timeout(world: World) -> None:
    observer = world.observer()
    for node in world.nodes:
        state = try_commit(node.round_state, world.online)
        node.round_state = state
        if state.phase is Phase.COMMITTED and node.proposal_valid:
            block = state.proposal
            node.chain.append(block)
            for msg in block.messages():
                node.mempool.pop(msg.digest, None)
                if msg.seq > node.seen_seq.get(msg.sender_id, -1):
                    node.seen_seq[msg.sender_id] = msg.seq
            node.mempool = {
                d: m for d, m in node.mempool.items() if m.seq > node.chain.last_seq.get(m.sender_id, -1)
            }
            if node.honest:
                world.committed_at.setdefault(block.height, set()).add(block.hash)
        elif state.phase is Phase.COMMITTED:
            world.emit(f"refuse-commit node={node.node_id}")
    _trace(world, observer)


def _trace(world: World, node: Node) -> None:
    state = node.round_state
    c = world.counters
    if state.candidates:
        c["candidate_rounds"] += 1
    if state.phase is Phase.COMMITTED:
        c["committed_rounds"] += 1
        world.leader_counts[state.leader] += 1
    else:
        c["skipped_rounds"] += 1
    world.traces.append(
        " ".join(
            (
                f"round={state.round}",
                f"phase={state.phase.value}",
                f"leader={state.leader.hex() if state.leader else '-'}",
                f"proposal={state.proposal.hash.hex() if state.proposal else '-'}",
                f"accepts={state.accepts}",
                f"rejects={state.rejects}",
                f"online={world.online}",
                f"height={node.chain.height}",
                f"candidates={','.join(sorted(x.hex() for x in state.candidates)) or '-'}",
            )
        )
    )


def _on_move(world: World) -> None:
    length = world.scenario.road_length
    for node in world.nodes:
        if node.role is Role.VEHICLE:
            node.position = (node.position + node.speed) % length


def _dispatch(world: World, delivery: Delivery) -> None:
    node = world.nodes[delivery.target]
    item = delivery.item
    if isinstance(item, V2XMessage):
        _on_message(world, node, world.nodes[delivery.emitter], item)
    elif isinstance(item, DrivingProof):
        if item.round == world.round:
            node.proofs.append(item)
    elif isinstance(item, Block):
        _on_proposal(world, node, item)
    elif isinstance(item, Vote):
        node.round_state.add_vote(item, world.registry)
    else:  # pragma: no cover
        raise TypeError(f"unknown delivery {type(item).__name__}")


def step_round(world: World, round_no: int) -> None:
    L = world.scenario.phase_ticks
    q = world.queue
    q.push(round_no, 0, EventKind.ROUND_START)
    q.push(round_no, L, EventKind.PROOFS)
    q.push(round_no, 2 * L, EventKind.ELECT)
    q.push(round_no, 4 * L, EventKind.TIMEOUT)
    q.push(round_no, 4 * L + 1, EventKind.MOVE)
    while q:
        world.round, world.tick, kind, payload = q.pop()
        if kind is EventKind.DELIVER:
            _dispatch(world, payload)
        elif kind is EventKind.ROUND_START:
            _on_round_start(world)
        elif kind is EventKind.PROOFS:
            _on_proofs(world)
        elif kind is EventKind.ELECT:
            _on_elect(world)
        elif kind is EventKind.TIMEOUT:
            _on_timeout(world)
        elif kind is EventKind.MOVE:
            _on_move(world)


# -- results -----------------------------------------------------------------


@dataclass
class RunResult:
    scenario: Scenario
    fleet_seed: int
    world: World
    metrics: dict[str, str]

    @property
    def chains(self) -> list[list[Block]]:
        return [n.chain.blocks for n in self.world.nodes]

    @property
    def ledgers(self) -> list[CreditLedger]:
        return [n.ledger for n in self.world.nodes]

    @property
    def traces(self) -> list[str]:
        return self.world.traces

    def files(self) -> dict[str, str]:
        """Output tree as ``relative path -> text``."""
        out = {
            "registry.txt": dumps_registry(self.world.registry, self.fleet_seed),
            "run.log": "".join(
                line + "\n" for line in (*(f"trace {t}" for t in self.world.traces), *self.world.log_lines)
            ),
            "metrics.txt": "".join(f"{k}={v}\n" for k, v in self.metrics.items()),
        }
        for node in self.world.nodes:
            out[f"node-{node.node_id:03d}.chain"] = dumps_chain(node.chain.blocks)
        return dict(sorted(out.items()))

    def write(self, out_dir: str | Path) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for name, text in self.files().items():
            path = out / name
            path.write_text(text, encoding="ascii", newline="\n")
            written.append(path)
        return written


def _metrics(world: World) -> dict[str, str]:
    s = world.scenario
    c = world.counters
    honest = [n for n in world.nodes if n.honest]
    heads = {n.chain.head.hash for n in honest}
    ref = world.observer()
    committed = c["committed_rounds"]
    candidate_rounds = c["candidate_rounds"]
    top = max(world.leader_counts.values(), default=0)
    enrollees = len(world.registry)
    m: dict[str, str] = {}
    for line in s.to_lines():
        k, v = line.split("=", 1)
        m[k] = v
    m["rounds"] = str(s.rounds)
    m["candidate_rounds"] = str(candidate_rounds)
    m["committed_rounds"] = str(committed)
    m["skipped_rounds"] = str(c["skipped_rounds"])
    m["commit_rate"] = f"{committed / candidate_rounds:.6f}" if candidate_rounds else "0.000000"
    m["final_height"] = str(ref.chain.height)
    m["distinct_honest_heads"] = str(len(heads))
    m["converged"] = "true" if len(heads) == 1 else "false"
    m["safety_violations"] = str(sum(len(v) > 1 for v in world.committed_at.values()))
    m["leader_concentration"] = f"{top / committed:.6f}" if committed else "0.000000"
    m["distinct_leaders"] = str(len(world.leader_counts))
    m["heartbeat_blocks"] = str(c["heartbeat_blocks"])
    for key in ("messages_sent", "deliveries", "legal_deliveries", "radio_drops"):
        m[key] = str(c[key])
    for code in Rejection:
        m[f"rejections.{code.value}"] = str(c[f"rejections.{code.value}"])
    for key in sorted(k for k in c if k.startswith("adversary.")):
        m[key] = str(c[key])
    m["probe.genuine_accepts"] = str(c["probe.genuine_accepts"])
    m["probe.impostor_accepts"] = str(c["probe.impostor_accepts"])
    m["conservation"] = "true" if ref.ledger.total == enrollees + ref.chain.height else "false"
    m["head"] = ref.chain.head.hash.hex()
    m["ledger.height"] = str(ref.ledger.as_of_height)
    for hex_id, credit in ref.ledger.table():
        m[f"credit.{hex_id}"] = str(credit)
    return m


def run(scenario: Scenario, fleet: Fleet | None = None, validate: bool = True) -> RunResult:
    """Execute every round of ``scenario`` and collect chains, traces and metrics."""
    world = build_world(scenario, fleet, validate)
    for round_no in range(1, scenario.rounds + 1):
        step_round(world, round_no)
    log.info("run seed=%d finished at height %d", scenario.seed, world.observer().chain.height)
    return RunResult(scenario, world.fleet.seed, world, _metrics(world))
