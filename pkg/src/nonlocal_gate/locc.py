"""Two-party session: local gates, local measurements, classical bits.

Qubits A and A1 belong to party A; B, B1 and the corrector ancilla B2
belong to party B. Gates may only touch one party's qubits and only
classical bits cross between parties. Every step is appended to the trace
and every consumed resource is counted in the ledger, which is itself a
fold over the trace.
"""
from __future__ import annotations

import functools
import json
import math
from dataclasses import asdict, dataclass, field
from typing import IO, Iterable, NamedTuple, Sequence

import numpy as np

from . import statevec as sv
from .channel import ChannelSpec, InvalidChannel, prepare_channel

OWNER = {"A": "A", "A1": "A", "B": "B", "B1": "B", "B2": "B"}
PARTIES = ("A", "B")

EVENT_KINDS = (
    "prepare",
    "gate",
    "measure",
    "povm",
    "classical-send",
    "recall",
    "discard",
    "abort",
    "success",
)


class LocalityViolation(RuntimeError):
    pass


class InvalidInput(InvalidChannel):
    """A control or target amplitude pair that cannot be normalized."""


class TraceEvent(NamedTuple):
    kind: str
    step: str
    payload: dict


@dataclass(frozen=True)
class ResourceLedger:
    ebits_consumed: int = 0
    classical_bits_A_to_B: int = 0
    classical_bits_B_to_A: int = 0
    ancilla_qubits: int = 0
    measurements: int = 0
    memory_bits: int = 0

    def __add__(self, other: "ResourceLedger") -> "ResourceLedger":
        return ResourceLedger(*(x + y for x, y in zip(astuple_ledger(self), astuple_ledger(other))))

    def as_dict(self) -> dict:
        return {
            "ebits": self.ebits_consumed,
            "bits_a_to_b": self.classical_bits_A_to_B,
            "bits_b_to_a": self.classical_bits_B_to_A,
            "ancilla_qubits": self.ancilla_qubits,
            "measurements": self.measurements,
            "memory_bits": self.memory_bits,
        }


def astuple_ledger(ledger: ResourceLedger) -> tuple[int, ...]:
    return tuple(asdict(ledger).values())


def _ledger_field(event: TraceEvent) -> str | None:
    kind, p = event.kind, event.payload
    if kind == "prepare":
        return {"ebit": "ebits_consumed", "ancilla": "ancilla_qubits"}.get(p["resource"])
    if kind in ("measure", "povm"):
        return "measurements"
    if kind == "classical-send":
        return "classical_bits_A_to_B" if p["from"] == "A" else "classical_bits_B_to_A"
    if kind == "recall":
        return "memory_bits"
    return None


def ledger_from_trace(events: Iterable[TraceEvent]) -> ResourceLedger:
    """Resource counts implied by a trace."""
    counts = dict.fromkeys(ResourceLedger.__dataclass_fields__, 0)
    for event in events:
        name = _ledger_field(event)
        if name is not None:
            counts[name] += 1
    return ResourceLedger(**counts)


@dataclass(frozen=True, eq=False)
class Session:
    """One attempt's register, trace and classical memory.

    The ledger is not stored; it is always recomputed from the trace.
    """

    state: sv.StateVector
    trace: tuple[TraceEvent, ...] = ()
    memory: dict = field(default_factory=dict)
    phase: str = "fresh"
    channel: ChannelSpec | None = None

    @property
    def ledger(self) -> ResourceLedger:
        return ledger_from_trace(self.trace)

    def evolve(self, **changes) -> "Session":
        # Cheaper than dataclasses.replace; fields are never validated anyway.
        new = object.__new__(Session)
        new.__dict__.update(self.__dict__, **changes)
        return new

    def log(self, kind: str, step: str, **payload) -> "Session":
        return self.evolve(trace=self.trace + (TraceEvent(kind, step, payload),))

    def append(self, kind: str, step: str, payload: dict, **changes) -> "Session":
        """Log one event and apply field changes in a single copy."""
        return self.evolve(trace=self.trace + (TraceEvent(kind, step, payload),), **changes)

    def owned(self, party: str) -> tuple[str, ...]:
        return tuple(q for q in self.state.labels if OWNER[q] == party)


def _normalized_pair(pair: Sequence[complex], name: str) -> tuple[complex, complex]:
    x, y = (complex(v) for v in pair)
    norm = math.hypot(abs(x), abs(y))
    if not math.isfinite(norm) or norm == 0.0:
        raise InvalidInput(f"{name} amplitudes {tuple(pair)} have zero norm")
    return x / norm, y / norm


def new_session(
    control: Sequence[complex], target: Sequence[complex], channel: ChannelSpec
) -> Session:
    """Fresh register |A>|E~>_{A1 B1}|B> with one e-bit on the ledger."""
    return _fresh_session(
        _normalized_pair(control, "control"), _normalized_pair(target, "target"), channel
    )


@functools.lru_cache(maxsize=256)
def _fresh_session(control: tuple, target: tuple, channel: ChannelSpec) -> Session:
    # sessions are immutable, so every attempt can start from the same object
    (a, b), (c, d) = control, target
    ebit = prepare_channel(channel, ("A1", "B1")).amps
    amps = np.multiply.outer(np.multiply.outer([a, b], ebit), [c, d]).reshape(-1)
    state = sv.make_state(amps, ("A", "A1", "B1", "B"))
    return (
        Session(state, channel=channel)
        .log("prepare", "input", resource="input", party="A", qubits=["A"])
        .log("prepare", "channel", resource="ebit", party="AB", qubits=["A1", "B1"],
             alpha=channel.alpha, beta=channel.beta)
        .log("prepare", "input", resource="input", party="B", qubits=["B"])
    )


def _check_owned(session: Session, party: str, qubits: Sequence[str]) -> None:
    for q in qubits:
        if OWNER.get(q) != party:
            if party not in PARTIES:
                raise ValueError(f"unknown party {party!r}")
            foreign = [q for q in qubits if OWNER.get(q) != party]
            raise LocalityViolation(f"party {party} cannot act on {foreign}")


def apply_local(
    session: Session, party: str, gate: sv.GateMatrix, targets: Sequence[str], step: str = ""
) -> Session:
    _check_owned(session, party, targets)
    state = sv.apply_gate(session.state, gate, targets)
    payload = {"party": party, "gate": gate.name, "targets": list(targets)}
    return session.append("gate", step, payload, state=state)


def measure_local(
    session: Session,
    party: str,
    qubit: str,
    draw: float,
    step: str = "",
    basis: np.ndarray | None = None,
    discard: bool = False,
) -> tuple[Session, sv.MeasurementRecord]:
    """Measure ``qubit``; with ``discard`` the measured qubit also leaves the register."""
    _check_owned(session, party, [qubit])
    record = sv.measure_projective(session.state, qubit, draw, basis)
    payload = {
        "party": party, "qubit": qubit, "outcome": record.outcome,
        "probability": record.probability, "threshold": record.p_zero,
        "basis": "computational" if basis is None else "custom",
    }
    if not discard:
        return session.append("measure", step, payload, state=record.post_state), record
    events = (
        TraceEvent("measure", step, payload),
        TraceEvent("discard", step, {"party": party, "qubit": qubit}),
    )
    return session.evolve(state=record.remainder, trace=session.trace + events), record


def povm_local(
    session: Session,
    party: str,
    qubit: str,
    success: sv.PovmElement,
    draw: float,
    step: str = "",
) -> tuple[Session, bool, float]:
    """Two-outcome measurement {E, 1 - E} with rank-one ``E``.

    Success iff ``draw < <psi|E|psi>`` (logged as the event's threshold); on success the measured qubit is
    consumed and the rest collapses by the rank-one rule. On failure the
    register is left as it was; the caller abandons the attempt.
    """
    _check_owned(session, party, [qubit])
    probability, post = sv.apply_rank_one_element(session.state, qubit, success)
    succeeded = post is not None and draw < probability
    if succeeded:
        session = session.evolve(state=post)
    session = session.log(
        "povm", step, party=party, qubit=qubit, outcome="success" if succeeded else "failure",
        probability=probability if succeeded else 1.0 - probability,
        threshold=probability if post is not None else 0.0,
    )
    return session, succeeded, probability


def allocate_ancilla(
    session: Session, party: str, label: str, step: str = "", after: str | None = None
) -> Session:
    """Add ``label`` in |0>, placed right after qubit ``after`` (default: last)."""
    _check_owned(session, party, [label])
    position = None if after is None else session.state.index(after) + 1
    state = sv.insert_qubit(session.state, label, (1.0, 0.0), position)
    payload = {"resource": "ancilla", "party": party, "qubits": [label]}
    return session.append("prepare", step, payload, state=state)


def discard_qubit(session: Session, qubit: str, step: str = "") -> Session:
    payload = {"party": OWNER[qubit], "qubit": qubit}
    return session.append("discard", step, payload, state=sv.discard(session.state, qubit))


def send_bit(session: Session, sender: str, receiver: str, bit: int, step: str = "") -> Session:
    if sender == receiver:
        raise ValueError(f"party {sender} cannot send a bit to itself")
    if sender not in PARTIES or receiver not in PARTIES:
        raise ValueError(f"unknown party in {sender}->{receiver}")
    memory = dict(session.memory)
    memory[receiver] = int(bit)
    payload = {"from": sender, "to": receiver, "bit": int(bit)}
    return session.append("classical-send", step, payload, memory=memory)


def recall_bit(session: Session, party: str, step: str = "") -> tuple[Session, int]:
    """Read the party's one-bit classical memory."""
    if party not in session.memory:
        raise LookupError(f"party {party} holds no classical bit")
    bit = session.memory[party]
    return session.log("recall", step, party=party, bit=bit), bit


def cross_party_gates(events: Iterable[TraceEvent]) -> list[TraceEvent]:
    """Gate events that touch qubits of both parties (should always be empty)."""
    bad = []
    for event in events:
        if event.kind != "gate":
            continue
        owners = {OWNER[q] for q in event.payload["targets"]}
        if len(owners) != 1 or owners != {event.payload["party"]}:
            bad.append(event)
    return bad


def _plain(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    raise TypeError(f"cannot serialize {type(value).__name__}")


def write_trace(events: Iterable[TraceEvent], out: IO[str], **extra) -> None:
    """Line-delimited JSON, one event per line.

    Field order is fixed: any ``extra`` fields, then seq, kind, step, payload.
    """
    for seq, event in enumerate(events):
        record = dict(extra)
        record.update(seq=seq, kind=event.kind, step=event.step, payload=event.payload)
        out.write(json.dumps(record, separators=(",", ":"), default=_plain) + "\n")


def read_trace(lines: Iterable[str]) -> list[TraceEvent]:
    events = []
    for line in lines:
        line = line.strip()
        if line:
            record = json.loads(line)
            events.append(TraceEvent(record["kind"], record["step"], record["payload"]))
    return events
