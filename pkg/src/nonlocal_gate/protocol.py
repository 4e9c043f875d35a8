"""Probabilistic nonlocal C-NOT built from local units.

Pipeline per attempt::

    new_session -> es_unit -> run_corrector -> ec_unit

The swap unit leaves (A, B1) in a control e-bit that still depends on the
channel; the corrector makes it exactly a|00> + b|11> or reports failure,
in which case the whole attempt is restarted with fresh qubits. On a
perfect channel the corrector is skipped unless the orthogonal variant
was asked for.
"""
from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import locc
from . import statevec as sv
from .analysis import (
    Stats,
    binomial_stats,
    corrector_runs,
    entanglement_entropy,
    exact_success_probability,
)
from .channel import ChannelSpec, prepare_channel
from .config import (
    CHUNK_TRIALS,
    CorrectorKind,
    RunConfig,
    batch_draws,
    draw_stream,
    trial_draws,
)
from .locc import ResourceLedger, Session, TraceEvent, ledger_from_trace

__all__ = [
    "prepare_channel",
    "corrector_unitary",
    "printed_corrector_matrix",
    "controlled_rotation",
    "corrector_decomposition",
    "search_decomposition",
    "compose",
    "povm_pair",
    "es_unit",
    "run_corrector",
    "ec_unit",
    "nonlocal_cnot",
    "purification_experiment",
]

DECOMPOSITION_TOL = 1e-10


class BadPhase(RuntimeError):
    pass


class DecompositionNotFound(RuntimeError):
    pass


class MaxAttemptsExceeded(RuntimeError):
    def __init__(self, result: "RunResult"):
        self.result = result
        super().__init__(
            f"no success in {result.attempts} attempts (swap outcomes {list(result.es_outcome_bits)})"
        )


# --- corrector matrices -----------------------------------------------------


def printed_corrector_matrix(m: int, theta: float) -> np.ndarray:
    """The two-qubit corrector matrix exactly as printed, on (B1, B2).

    For ``m = 1`` the printed bottom row ``(0, 1, 0, 1)`` is kept, which is
    not unitary; use :func:`corrector_unitary` for the working gate.
    """
    c, s = np.cos(theta), np.sin(theta)
    if m == 0:
        return np.array([[c, s, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [-s, c, 0, 0]], dtype=complex)
    return np.array([[1, 0, 0, 0], [0, 0, -s, c], [0, 0, c, s], [0, 1, 0, 1]], dtype=complex)


@functools.lru_cache(maxsize=256)
def corrector_unitary(m: int, theta: float) -> sv.GateMatrix:
    """Conditioned corrector U_m on (B1, B2); the m=1 bottom row reads (0, 1, 0, 0)."""
    if m not in (0, 1):
        raise ValueError(f"outcome must be 0 or 1, got {m}")
    matrix = printed_corrector_matrix(m, theta)
    if m == 1:
        matrix[3] = [0, 1, 0, 0]
    return sv.GateMatrix(matrix, f"U{m}")


def controlled_rotation(theta: float) -> sv.GateMatrix:
    """Controlled-U with control B1, target B2: on B1=1, |0> -> c|0> + s|1>, |1> -> -s|0> + c|1>."""
    c, s = np.cos(theta), np.sin(theta)
    return sv.GateMatrix(
        [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, c, -s], [0, 0, s, c]], f"CU({theta:.12g})"
    )


@dataclass(frozen=True)
class DecompositionStep:
    """One gate of a corrector circuit; ``targets`` is ordered high bit first."""

    name: str
    gate: sv.GateMatrix
    targets: tuple[str, ...]


_PAIR = ("B1", "B2")


def _embed(step: DecompositionStep) -> np.ndarray:
    # 4x4 action of the step on the (B1, B2) register.
    basis = np.eye(4, dtype=complex)
    columns = []
    for k in range(4):
        ket = sv.StateVector(basis[k], _PAIR)
        columns.append(sv.apply_gate(ket, step.gate, step.targets).amps)
    return np.column_stack(columns)


def compose(steps) -> sv.GateMatrix:
    """Matrix product of ``steps`` in application order (first step acts first)."""
    total = np.eye(4, dtype=complex)
    for step in steps:
        total = _embed(step) @ total
    return sv.GateMatrix(total, "+".join(step.name for step in steps) or "I")


def _atoms(theta: float) -> dict[str, DecompositionStep]:
    return {
        "CNOT(B1->B2)": DecompositionStep("CNOT(B1->B2)", sv.CNOT, ("B1", "B2")),
        "CNOT(B2->B1)": DecompositionStep("CNOT(B2->B1)", sv.CNOT, ("B2", "B1")),
        "CU(+theta)": DecompositionStep("CU(+theta)", controlled_rotation(theta), ("B1", "B2")),
        "CU(-theta)": DecompositionStep("CU(-theta)", controlled_rotation(-theta), ("B1", "B2")),
        "X(B1)": DecompositionStep("X(B1)", sv.X, ("B1",)),
        "X(B2)": DecompositionStep("X(B2)", sv.X, ("B2",)),
    }


def search_decomposition(m: int, theta: float) -> list[str]:
    """Brute-force the gate order that reproduces U_m.

    Candidates are one C-NOT (either control) and one controlled rotation
    (sign of theta free) in either order; for ``m = 0`` the pair is wrapped
    in the same sigma_x on B1 or B2 before and after. Returns the first
    matching sequence of atom names.
    """
    atoms = _atoms(theta)
    target = corrector_unitary(m, theta)
    wraps = [None] if m == 1 else ["X(B1)", "X(B2)"]
    for wrap in wraps:
        for cnot, cu in itertools.product(("CNOT(B1->B2)", "CNOT(B2->B1)"), ("CU(+theta)", "CU(-theta)")):
            for core in ((cu, cnot), (cnot, cu)):
                names = list(core) if wrap is None else [wrap, *core, wrap]
                candidate = compose(atoms[n] for n in names)
                if sv.gates_equal_up_to_phase(candidate, target, DECOMPOSITION_TOL):
                    return names
    raise DecompositionNotFound(f"no sequence reproduces U{m} at theta={theta}")


# Found by search_decomposition for every theta in [0, pi/2); the sigma_x
# pair is the conditioned sigma_x that only fires for m = 0.
_CORE_SEQUENCE = ("CU(-theta)", "CNOT(B2->B1)")
_CONDITIONED_FLIP = "X(B1)"


def corrector_decomposition(m: int, theta: float) -> list[DecompositionStep]:
    atoms = _atoms(theta)
    names = list(_CORE_SEQUENCE)
    if m == 0:
        names = [_CONDITIONED_FLIP, *names, _CONDITIONED_FLIP]
    steps = [atoms[n] for n in names]
    if not sv.gates_equal_up_to_phase(compose(steps), corrector_unitary(m, theta), DECOMPOSITION_TOL):
        raise DecompositionNotFound(f"stored sequence fails for m={m}, theta={theta}")
    return steps


# --- POVM corrector -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PovmPair:
    success: sv.PovmElement
    failure: sv.PovmElement
    m: int
    psi: np.ndarray
    phi: np.ndarray

    @functools.cached_property
    def basis(self) -> sv.GateMatrix:
        """Orthonormal basis {psi_m, phi_m} as the columns of a unitary."""
        return sv.GateMatrix(np.column_stack([self.psi, self.phi]), f"basis{self.m}")


@functools.lru_cache(maxsize=256)
def povm_pair(m: int, spec: ChannelSpec) -> PovmPair:
    """Success element (1/alpha^2)|psi_m><psi_m| and its complement, built literally."""
    al, be = spec.alpha, spec.beta
    if m == 0:
        psi, phi = np.array([be, al]), np.array([al, -be])
    elif m == 1:
        psi, phi = np.array([al, be]), np.array([be, -al])
    else:
        raise ValueError(f"outcome must be 0 or 1, got {m}")
    success = np.outer(psi, psi.conj()) / al**2
    return PovmPair(
        success=sv.PovmElement(success, "success"),
        failure=sv.PovmElement(np.eye(2) - success, "failure"),
        m=m,
        psi=psi.astype(complex),
        phi=phi.astype(complex),
    )


# --- units --------------------------------------------------------------------


def control_ebit(a: complex, b: complex) -> sv.StateVector:
    """a|00> + b|11> on (A, B1)."""
    return sv.make_state([a, 0, 0, b], ("A", "B1"))


def direct_cnot(control, target) -> sv.StateVector:
    """CNOT(|A>|B>) computed in one register, for comparison."""
    return _direct_cnot(tuple(control), tuple(target))


@functools.lru_cache(maxsize=1024)
def _direct_cnot(control, target) -> sv.StateVector:
    state = sv.kron(sv.make_state(control, ["A"]), sv.make_state(target, ["B"]))
    return sv.apply_gate(state, sv.CNOT, ("A", "B"))


def es_unit(session: Session, draw: float) -> tuple[Session, int]:
    """Swap the channel's entanglement onto (A, B1); returns the A1 outcome."""
    if session.phase != "fresh":
        raise BadPhase(f"swap unit needs a fresh session, phase is {session.phase!r}")
    s = locc.apply_local(session, "A", sv.CNOT, ("A", "A1"), "es")
    s, record = locc.measure_local(s, "A", "A1", draw, "es", discard=True)
    s = locc.send_bit(s, "A", "B", record.outcome, "es")
    if record.outcome == 1:
        s = locc.apply_local(s, "B", sv.X, ("B1",), "es")
    return s.evolve(phase="swapped"), record.outcome


@dataclass(frozen=True, eq=False)
class CorrectorOutcome:
    """``post_state`` is the (A, B1) control e-bit, present iff the corrector succeeded."""

    succeeded: bool
    probability: float
    register: sv.StateVector | None = None

    @functools.cached_property
    def post_state(self) -> sv.StateVector | None:
        return None if self.register is None else sv.reduce_to(self.register, ("A", "B1"))


def run_corrector(
    session: Session, m: int, kind: CorrectorKind, draw: float
) -> tuple[Session, CorrectorOutcome]:
    """Try to turn the channel-dependent control e-bit into the exact one.

    ``probability`` in the outcome is the conditional success probability
    of this attempt, whatever the actual result.
    """
    if session.phase != "swapped":
        raise BadPhase(f"corrector needs the swapped phase, phase is {session.phase!r}")
    kind = CorrectorKind(kind)
    channel = session.channel
    s, remembered = locc.recall_bit(session, "B", "corrector")
    if remembered != m:
        raise ValueError(f"party B remembers outcome {remembered}, corrector called with {m}")
    s = locc.allocate_ancilla(s, "B", "B2", "corrector", after="B1")

    if kind is CorrectorKind.CUO:
        s = locc.apply_local(s, "B", corrector_unitary(m, channel.theta), ("B1", "B2"), "corrector")
        s, record = locc.measure_local(s, "B", "B2", draw, "corrector", discard=True)
        succeeded = record.outcome == 0
        p_success = record.probability if succeeded else 1.0 - record.probability
    else:
        pair = povm_pair(m, channel)
        s = locc.apply_local(s, "B", sv.CNOT, ("B1", "B2"), "corrector")
        if kind is CorrectorKind.POVM_LITERAL:
            s, succeeded, p_success = locc.povm_local(s, "B", "B2", pair.success, draw, "corrector")
        else:
            s, record = locc.measure_local(
                s, "B", "B2", draw, "corrector", basis=pair.basis, discard=True
            )
            succeeded = record.outcome == 0
            p_success = record.probability if succeeded else 1.0 - record.probability

    s = locc.send_bit(s, "B", "A", int(succeeded), "corrector")
    if not succeeded:
        return s.append("abort", "corrector", {}, phase="aborted"), CorrectorOutcome(False, p_success, None)
    return s.evolve(phase="corrected"), CorrectorOutcome(True, p_success, s.state)


def ec_unit(session: Session, draw: float) -> Session:
    """NOT on B steered by the control e-bit on (A, B1)."""
    if session.phase not in ("swapped", "corrected"):
        raise BadPhase(f"EC unit needs a control e-bit, phase is {session.phase!r}")
    s = locc.apply_local(session, "B", sv.CNOT, ("B1", "B"), "ec")
    s = locc.apply_local(s, "B", sv.H, ("B1",), "ec")
    s, record = locc.measure_local(s, "B", "B1", draw, "ec", discard=True)
    s = locc.send_bit(s, "B", "A", record.outcome, "ec")
    if record.outcome == 1:
        s = locc.apply_local(s, "A", sv.Z, ("A",), "ec")
    return s.append("success", "ec", {}, phase="done")


# --- full gate ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RunResult:
    succeeded: bool
    attempts: int
    es_outcome_bits: tuple[int, ...]
    final_state: sv.StateVector | None
    fidelity: float | None
    attempt_traces: tuple[tuple[TraceEvent, ...], ...]

    @property
    def trace(self) -> list[TraceEvent]:
        return [event for attempt in self.attempt_traces for event in attempt]

    @property
    def attempt_ledgers(self) -> list[ResourceLedger]:
        return [ledger_from_trace(t) for t in self.attempt_traces]

    @property
    def ledger(self) -> ResourceLedger:
        """Resources of every attempt, failed ones included."""
        return sum(self.attempt_ledgers, ResourceLedger())


def _as_draws(randomness) -> Iterator[float]:
    if isinstance(randomness, np.random.Generator):
        return draw_stream(randomness)
    return iter(randomness)


def nonlocal_cnot(config: RunConfig, randomness, raise_on_failure: bool = True) -> RunResult:
    """Run the gate, restarting from scratch after corrector failures.

    ``randomness`` is a numpy Generator or any iterable of draws in [0, 1).
    Raises :class:`MaxAttemptsExceeded` (carrying the result) when every
    attempt fails, unless ``raise_on_failure`` is false.
    """
    draws = _as_draws(randomness)
    channel = config.channel
    bits, traces = [], []
    for _ in range(config.max_attempts):
        s = new_attempt(config, channel)
        s, m = es_unit(s, next(draws))
        bits.append(m)
        if corrector_runs(channel, config.corrector):
            s, outcome = run_corrector(s, m, config.corrector, next(draws))
            if not outcome.succeeded:
                traces.append(s.trace)
                continue
        s = ec_unit(s, next(draws))
        traces.append(s.trace)
        final = sv.reduce_to(s.state, ("A", "B"))
        return RunResult(
            True, len(bits), tuple(bits), final,
            sv.fidelity(final, direct_cnot(config.control, config.target)),
            tuple(traces),
        )
    result = RunResult(False, len(bits), tuple(bits), None, None, tuple(traces))
    if raise_on_failure:
        raise MaxAttemptsExceeded(result)
    return result


def new_attempt(config: RunConfig, channel: ChannelSpec | None = None) -> Session:
    return locc.new_session(config.control, config.target, channel or config.channel)


def run_trial(config: RunConfig, trial: int, draws=None) -> RunResult:
    """Trial ``trial`` of a batch, drawing from its own slice of ``config.seed``'s stream.

    ``draws`` may pass that slice in precomputed (see :func:`config.batch_draws`).
    """
    if draws is None:
        draws = trial_draws(config.seed, trial, config.max_attempts)
    return nonlocal_cnot(config, draws.tolist(), raise_on_failure=False)


_DRAW_EVENTS = ("measure", "povm")


class BranchCache:
    """Memo of :func:`nonlocal_cnot` for one config, keyed by outcome path.

    For a fixed config the run is a deterministic function of its
    measurement outcomes, and each outcome is ``draw < threshold`` with the
    threshold logged on the event that consumed the draw. The cache is a
    binary tree over those thresholds: a trial walks it with its draws and
    only runs the engine when it reaches a branch nobody has taken yet, so
    every returned result is the one the engine would have produced.
    """

    def __init__(self, config: RunConfig):
        self.config = config
        self.misses = 0
        self._top: list = [None]

    def run(self, draws: Sequence[float]) -> RunResult:
        node, i = self._top[0], 0
        while type(node) is list:
            node = node[1] if draws[i] < node[0] else node[2]
            i += 1
        if node is not None:
            return node
        result = nonlocal_cnot(self.config, draws, raise_on_failure=False)
        self._insert(result)
        return result

    def _insert(self, result: RunResult) -> None:
        self.misses += 1
        holder, slot = self._top, 0
        for event in result.trace:
            if event.kind not in _DRAW_EVENTS:
                continue
            threshold = event.payload["threshold"]
            first = event.payload["outcome"] in (0, "success")
            node = holder[slot]
            if node is None:
                node = holder[slot] = [threshold, None, None]
            elif node[0] != threshold:
                raise RuntimeError("engine is not deterministic in its outcomes")
            holder, slot = node, 1 if first else 2
        holder[slot] = result


def run_trials(config: RunConfig, trials: int | None = None, memo: bool = True):
    """Yield ``(index, RunResult)`` for every trial of a batch, in order.

    With ``memo`` the trials share a :class:`BranchCache`; results are
    identical either way, only faster.
    """
    trials = config.trials if trials is None else trials
    cache = BranchCache(config) if memo else None
    for start in range(0, trials, CHUNK_TRIALS):
        count = min(CHUNK_TRIALS, trials - start)
        table = batch_draws(config.seed, start, count, config.max_attempts).tolist()
        for offset, row in enumerate(table):
            if cache is None:
                result = nonlocal_cnot(config, row, raise_on_failure=False)
            else:
                result = cache.run(row)
            yield start + offset, result


def propagated_success_probability(a, b, spec: ChannelSpec, kind: CorrectorKind) -> float:
    """Single-attempt success probability summed over swap outcomes.

    Each branch is forced through the real units and weighted by the
    probabilities the engine records, so this is independent of the closed
    forms in :mod:`nonlocal_gate.analysis`.
    """
    config = RunConfig(control=(a, b), alpha=spec.alpha, corrector=kind)
    total = 0.0
    for m, draw in ((0, 0.0), (1, np.nextafter(1.0, 0.0))):
        s, outcome_bit = es_unit(new_attempt(config, spec), draw)
        p_m = next(e.payload["probability"] for e in s.trace if e.kind == "measure")
        if outcome_bit != m:
            continue  # branch has zero weight
        if not corrector_runs(spec, kind):
            total += p_m
            continue
        _, outcome = run_corrector(s, m, kind, 0.0)
        total += p_m * outcome.probability
    return total


# --- purification -------------------------------------------------------------

BELL = sv.make_state([1, 0, 0, 1], ("A", "B"))


@dataclass(frozen=True)
class TrialRow:
    trial: int
    attempts: int
    succeeded: bool
    m_bits: tuple[int, ...]
    fidelity: float | None


def trial_row(index: int, result: RunResult, reference: sv.StateVector | None = None) -> TrialRow:
    fid = result.fidelity
    if reference is not None and result.final_state is not None:
        fid = sv.fidelity(reference, result.final_state)
    return TrialRow(index, result.attempts, result.succeeded, result.es_outcome_bits, fid)


@dataclass(frozen=True)
class PurificationReport:
    alpha: float
    beta: float
    corrector: CorrectorKind
    stats: Stats
    expected_rate: float
    mean_fidelity: float | None
    min_fidelity: float | None
    mean_entropy: float | None
    min_entropy: float | None
    rows: tuple[TrialRow, ...] = field(repr=False, default=())
    cross_party_gates: int = 0

    @property
    def successes(self) -> int:
        return self.stats.successes


def purification_config(spec: ChannelSpec, kind: CorrectorKind, trials: int, seed: int) -> RunConfig:
    """Inputs |+> and |0>, one attempt per trial."""
    return RunConfig(
        control=(np.sqrt(0.5), np.sqrt(0.5)), target=(1.0, 0.0), alpha=spec.alpha,
        corrector=kind, trials=trials, seed=seed, max_attempts=1, mode="purify",
    )


def purification_experiment(
    spec: ChannelSpec, kind: CorrectorKind, trials: int, seed: int
) -> PurificationReport:
    """Feed |+>|0> through single-attempt gates and measure the Bell pairs produced."""
    if trials < 1:
        raise ValueError("need at least one trial")
    config = purification_config(spec, kind, trials, seed)
    rows, fidelities, entropies = [], [], []
    cross = 0
    for i, result in run_trials(config):
        cross += len(locc.cross_party_gates(result.trace))
        rows.append(trial_row(i, result, BELL))
        if result.succeeded:
            fidelities.append(rows[-1].fidelity)
            entropies.append(entanglement_entropy(result.final_state, ["A"]))
    expected = exact_success_probability(spec, kind)
    return PurificationReport(
        alpha=spec.alpha,
        beta=spec.beta,
        corrector=CorrectorKind(kind),
        stats=binomial_stats(len(fidelities), trials, expected),
        expected_rate=expected,
        mean_fidelity=float(np.mean(fidelities)) if fidelities else None,
        min_fidelity=min(fidelities) if fidelities else None,
        mean_entropy=float(np.mean(entropies)) if entropies else None,
        min_entropy=min(entropies) if entropies else None,
        rows=tuple(rows),
        cross_party_gates=cross,
    )
