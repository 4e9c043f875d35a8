"""Exact pure-state engine over labeled qubits.

Bit ordering: the label at position 0 is the most significant bit of the
amplitude index, so ``labels=("A", "B1")`` stores |A B1> in the usual
left-to-right ket order.

All values are immutable; every operation returns a new object.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

MAX_QUBITS = 8
NORM_TOL = 1e-12
RANK_TOL = 1e-10
ZERO_PROB = 1e-14


class StateError(ValueError):
    """Base class for engine errors."""


class LengthMismatch(StateError):
    pass


class ZeroNorm(StateError):
    pass


class UnknownLabel(StateError):
    pass


class ArityMismatch(StateError):
    pass


class NotUnitary(StateError):
    pass


class NotHermitian(StateError):
    pass


class NotRankOne(StateError):
    pass


class BadPartition(StateError):
    pass


class LabelMismatch(StateError):
    pass


class NotProduct(StateError):
    """Raised when a qubit cannot be dropped because it is entangled."""


def _frozen(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class StateVector:
    amps: np.ndarray
    labels: tuple[str, ...]

    @property
    def qubit_count(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise UnknownLabel(f"qubit {label!r} not in {self.labels}") from None

    def tensor(self) -> np.ndarray:
        """Amplitudes reshaped to one axis per qubit."""
        return self.amps.reshape((2,) * self.qubit_count)

    def split(self, axis: int) -> np.ndarray:
        """View of shape (left, 2, right) isolating qubit ``axis``."""
        n = self.qubit_count
        return self.amps.reshape(1 << axis, 2, 1 << (n - axis - 1))

    def norm(self) -> float:
        return float(np.sqrt(np.vdot(self.amps, self.amps).real))

    def amplitude(self, bits: str) -> complex:
        """Amplitude of the basis ket written as a bit string, e.g. ``"011"``."""
        return complex(self.amps[int(bits, 2)])

    def __repr__(self) -> str:
        terms = [
            f"({a.real:+.6g}{a.imag:+.6g}j)|{i:0{self.qubit_count}b}>"
            for i, a in enumerate(self.amps)
            if abs(a) > 1e-12
        ]
        return f"StateVector[{','.join(self.labels)}]: " + " ".join(terms)


def _checked_labels(labels: Iterable[str]) -> tuple[str, ...]:
    labels = tuple(labels)
    if not 1 <= len(labels) <= MAX_QUBITS:
        raise LengthMismatch(f"need 1..{MAX_QUBITS} qubits, got {len(labels)}")
    if len(set(labels)) != len(labels):
        raise LengthMismatch(f"duplicate labels in {labels}")
    return labels


def make_state(amplitudes: Sequence[complex], labels: Sequence[str]) -> StateVector:
    """Build a normalized state; the input is copied and rescaled.

    Raises:
        LengthMismatch: if ``len(amplitudes) != 2**len(labels)``.
        ZeroNorm: for an all-zero vector.
    """
    labels = _checked_labels(labels)
    amps = np.array(amplitudes, dtype=complex).reshape(-1)
    if amps.size != 2 ** len(labels):
        raise LengthMismatch(f"{amps.size} amplitudes for {len(labels)} qubits")
    norm = np.sqrt(np.vdot(amps, amps).real)
    if not np.isfinite(norm):
        raise StateError("non-finite amplitude")
    if norm == 0.0:
        raise ZeroNorm("cannot normalize the zero vector")
    return StateVector(_frozen(amps / norm), labels)


@functools.lru_cache(maxsize=64)
def _basis_state(bits: str, labels: tuple[str, ...]) -> StateVector:
    amps = np.zeros(2 ** len(bits), dtype=complex)
    amps[int(bits, 2)] = 1.0
    return make_state(amps, labels)


def basis_state(bits: str, labels: Sequence[str]) -> StateVector:
    return _basis_state(bits, tuple(labels))


def _from_trusted(amps: np.ndarray, labels: tuple[str, ...]) -> StateVector:
    # Internal constructor for results of norm-preserving operations.
    amps.flags.writeable = False
    new = object.__new__(StateVector)
    new.__dict__.update(amps=amps, labels=labels)
    return new


def kron(first: StateVector, second: StateVector) -> StateVector:
    """Tensor product; ``first``'s labels come first."""
    labels = _checked_labels(first.labels + second.labels)
    return _from_trusted(np.multiply.outer(first.amps, second.amps).reshape(-1), labels)


@dataclass(frozen=True, eq=False)
class GateMatrix:
    """A unitary on one or two qubits, checked on construction."""

    entries: np.ndarray
    name: str = "U"

    def __post_init__(self):
        entries = np.array(self.entries, dtype=complex)
        if entries.shape not in ((2, 2), (4, 4)):
            raise ArityMismatch(f"gate must be 2x2 or 4x4, got {entries.shape}")
        residual = unitarity_residual(entries)
        if residual > NORM_TOL:
            raise NotUnitary(f"{self.name}: |G^dag G - 1| = {residual:.3g}")
        object.__setattr__(self, "entries", _frozen(entries))

    @property
    def arity(self) -> int:
        return 1 if self.entries.shape[0] == 2 else 2

    @functools.cached_property
    def adjoint(self) -> "GateMatrix":
        return GateMatrix(self.entries.conj().T, f"{self.name}^dag")

    def __matmul__(self, other: "GateMatrix") -> "GateMatrix":
        return GateMatrix(self.entries @ other.entries, f"{self.name}*{other.name}")


def unitarity_residual(matrix: np.ndarray) -> float:
    """Max-entry deviation of ``M^dag M`` from the identity."""
    matrix = np.asarray(matrix, dtype=complex)
    return float(np.max(np.abs(matrix.conj().T @ matrix - np.eye(matrix.shape[0]))))


_S = 1 / np.sqrt(2)
I2 = GateMatrix(np.eye(2), "I")
X = GateMatrix([[0, 1], [1, 0]], "X")
Z = GateMatrix([[1, 0], [0, -1]], "Z")
H = GateMatrix([[_S, _S], [_S, -_S]], "H")
CNOT = GateMatrix([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], "CNOT")


def kron_gates(first: GateMatrix, second: GateMatrix) -> GateMatrix:
    return GateMatrix(np.kron(first.entries, second.entries), f"{first.name}(x){second.name}")


def apply_gate(state: StateVector, gate: GateMatrix, targets: Sequence[str]) -> StateVector:
    """Apply ``gate`` to ``targets``; the first target is the gate's high bit."""
    targets = tuple(targets)
    k = len(targets)
    if k != gate.arity:
        raise ArityMismatch(f"{gate.name} acts on {gate.arity} qubits, got {targets}")
    if k > 1 and len(set(targets)) != k:
        raise ArityMismatch(f"repeated target in {targets}")
    n = len(state.labels)
    if k == 1:
        axis = state.index(targets[0])
        block = state.amps.reshape(1 << axis, 2, 1 << (n - axis - 1))
        return _from_trusted((gate.entries @ block).reshape(-1), state.labels)
    axes = tuple(state.index(t) for t in targets)
    if axes[1] == axes[0] + 1:
        block = state.amps.reshape(1 << axes[0], 4, 1 << (n - axes[1] - 1))
        return _from_trusted((gate.entries @ block).reshape(-1), state.labels)
    perm, inverse = _permutation(n, axes)
    block = state.tensor().transpose(perm).reshape(1 << len(axes), -1)
    out = (gate.entries @ block).reshape((2,) * n).transpose(inverse)
    return _from_trusted(out.reshape(-1), state.labels)


@functools.lru_cache(maxsize=None)
def _permutation(n: int, axes: tuple[int, ...]) -> tuple[list[int], list[int]]:
    # Axis order bringing ``axes`` to the front, and its inverse.
    perm = list(axes) + [i for i in range(n) if i not in axes]
    return perm, [perm.index(i) for i in range(n)]


@dataclass(frozen=True, eq=False)
class MeasurementRecord:
    """Outcome of a one-qubit projective measurement.

    ``remainder`` is the collapsed state of the other qubits; ``post_state``
    (built on first access) keeps the measured qubit in its outcome vector.
    """

    qubit: str
    outcome: int
    probability: float
    remainder: StateVector | None
    axis: int
    outcome_vector: np.ndarray
    p_zero: float = math.nan
    _post_state: StateVector | None = None

    @functools.cached_property
    def post_state(self) -> StateVector:
        if self._post_state is not None:
            return self._post_state
        return insert_qubit(self.remainder, self.qubit, self.outcome_vector, self.axis)


def _branch_weights(state: StateVector, axis: int) -> list[float]:
    """Squared norms of the |0> and |1> branches of qubit ``axis``."""
    t = state.split(axis)
    return np.einsum("ijk,ijk->j", t.conj(), t).real.tolist()


_COMPUTATIONAL = (np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex))


def measure_projective(
    state: StateVector,
    qubit: str,
    draw: float,
    basis: "np.ndarray | GateMatrix | None" = None,
) -> MeasurementRecord:
    """Measure one qubit; outcome 0 iff ``draw < P(0)``.

    ``basis`` optionally gives the measurement basis as the columns of a 2x2
    unitary (outcome k selects column k), or as a one-qubit GateMatrix whose
    columns play that role. The post-measurement state keeps the qubit,
    collapsed onto the selected basis vector.
    """
    axis = state.index(qubit)
    if basis is not None:
        if not isinstance(basis, GateMatrix):
            basis = GateMatrix(basis, "basis")
        state = apply_gate(state, basis.adjoint, (qubit,))
        basis = basis.entries
    w0, w1 = _branch_weights(state, axis)
    p0 = w0 / (w0 + w1)
    outcome = 0 if draw < p0 else 1
    probability = p0 if outcome == 0 else 1.0 - p0
    vector = _COMPUTATIONAL[outcome] if basis is None else basis[:, outcome]
    if state.qubit_count == 1:
        post = _from_trusted(vector.copy(), state.labels)
        return MeasurementRecord(qubit, outcome, probability, None, axis, vector, p0, post)
    kept = state.split(axis)[:, outcome, :] * (1.0 / math.sqrt(w1 if outcome else w0))
    rest = state.labels[:axis] + state.labels[axis + 1 :]
    remainder = _from_trusted(kept.reshape(-1), rest)
    return MeasurementRecord(qubit, outcome, probability, remainder, axis, vector, p0)


def insert_qubit(state: StateVector, label: str, vector, position: int | None = None) -> StateVector:
    """Tensor a one-qubit state into ``state`` at label position ``position`` (default: last)."""
    n = state.qubit_count
    position = n if position is None else position
    labels = _checked_labels(state.labels[:position] + (label,) + state.labels[position:])
    vector = np.asarray(vector, dtype=complex)
    block = state.amps.reshape(1 << position, 1, 1 << (n - position))
    out = block * vector.reshape(1, 2, 1)
    return _from_trusted(out.reshape(-1), labels)


@dataclass(frozen=True, eq=False)
class PovmElement:
    """Hermitian 2x2 measurement operator.

    Positivity and ``E <= 1`` are deliberately not enforced here; see
    :func:`nonlocal_gate.analysis.validate_povm`.
    """

    entries: np.ndarray
    label: str = "success"

    def __post_init__(self):
        entries = np.array(self.entries, dtype=complex)
        if entries.shape != (2, 2):
            raise ArityMismatch(f"POVM element must be 2x2, got {entries.shape}")
        if np.max(np.abs(entries - entries.conj().T)) > NORM_TOL:
            raise NotHermitian(f"{self.label} element is not Hermitian")
        object.__setattr__(self, "entries", _frozen(entries))

    @functools.cached_property
    def rank_one_factor(self) -> tuple[float, np.ndarray]:
        """Return ``(k, v)`` with ``entries = k |v><v|`` and ``|v|=1``."""
        values, vectors = np.linalg.eigh(self.entries)
        scale = max(float(np.max(np.abs(values))), 1.0)
        if abs(values[0]) > RANK_TOL * scale or values[1] <= RANK_TOL * scale:
            raise NotRankOne(f"{self.label} element has eigenvalues {values}")
        return float(values[1]), vectors[:, 1]


def apply_rank_one_element(
    state: StateVector, qubit: str, element: PovmElement
) -> tuple[float, StateVector | None]:
    """Outcome probability <psi|E|psi> and the collapsed remainder.

    For ``E = k|v><v|`` the measured qubit ends in |v> and is removed; the
    returned state covers the remaining qubits. ``None`` is returned for a
    vanishing branch.
    """
    k, v = element.rank_one_factor
    axis = state.index(qubit)
    projected = np.tensordot(v.conj(), state.tensor(), axes=([0], [axis]))
    weight = float(np.vdot(projected, projected).real)
    probability = k * weight
    if probability < ZERO_PROB or state.qubit_count == 1:
        return probability, None
    labels = state.labels[:axis] + state.labels[axis + 1 :]
    return probability, _from_trusted(projected.reshape(-1) / np.sqrt(weight), labels)


def _bipartite_matrix(state: StateVector, left: Iterable[str]) -> tuple[np.ndarray, list[int], list[int]]:
    left = list(dict.fromkeys(left))
    axes_left = [state.index(q) for q in left]
    axes_right = [i for i in range(state.qubit_count) if i not in axes_left]
    if not axes_left or not axes_right:
        raise BadPartition(f"{left} is not a proper nonempty subset of {state.labels}")
    t = np.transpose(state.tensor(), axes_left + axes_right)
    return t.reshape(2 ** len(axes_left), -1), axes_left, axes_right


def schmidt_spectrum(state: StateVector, left: Iterable[str]) -> np.ndarray:
    """Schmidt coefficients across ``left | rest``, descending."""
    matrix, _, _ = _bipartite_matrix(state, left)
    return np.linalg.svd(matrix, compute_uv=False)


def reduce_to(state: StateVector, keep: Sequence[str]) -> StateVector:
    """Pure state of ``keep`` when it is in a product with the rest.

    The result uses the order of ``keep``. The global phase of the factor is
    arbitrary.
    """
    keep = tuple(keep)
    if set(keep) == set(state.labels):
        return permute(state, keep)
    matrix, _, _ = _bipartite_matrix(state, keep)
    # Try the rank-one factorization from the heaviest column before SVD.
    column = matrix[:, np.argmax(np.einsum("ij,ij->j", matrix.conj(), matrix).real)]
    factor = column / np.sqrt(np.vdot(column, column).real)
    if np.max(np.abs(matrix - np.outer(factor, factor.conj() @ matrix))) <= RANK_TOL:
        return _from_trusted(factor, keep)
    u, s, _ = np.linalg.svd(matrix, full_matrices=False)
    if s.size > 1 and s[1] > RANK_TOL:
        raise NotProduct(f"{keep} entangled with the rest (schmidt {s[1]:.3g})")
    return _from_trusted(np.ascontiguousarray(u[:, 0]), keep)


def discard(state: StateVector, qubit: str) -> StateVector:
    """Drop a qubit that is unentangled with the rest."""
    axis = state.index(qubit)
    rest = state.labels[:axis] + state.labels[axis + 1 :]
    weights = _branch_weights(state, axis)
    for k in (0, 1):
        if weights[1 - k] < RANK_TOL**2:
            # Qubit sits in |k>: keep that slice.
            kept = state.split(axis)[:, k, :] / np.sqrt(weights[k])
            return _from_trusted(kept.reshape(-1), rest)
    return reduce_to(state, rest)


def permute(state: StateVector, order: Sequence[str]) -> StateVector:
    order = tuple(order)
    if sorted(order) != sorted(state.labels):
        raise LabelMismatch(f"{order} vs {state.labels}")
    if order == state.labels:
        return state
    axes = [state.index(q) for q in order]
    return _from_trusted(np.transpose(state.tensor(), axes).reshape(-1), order)


def fidelity(s1: StateVector, s2: StateVector) -> float:
    """|<s1|s2>|^2 after aligning ``s2`` to ``s1``'s label order."""
    if set(s1.labels) != set(s2.labels):
        raise LabelMismatch(f"{s1.labels} vs {s2.labels}")
    aligned = permute(s2, s1.labels)
    return float(min(abs(np.vdot(s1.amps, aligned.amps)) ** 2, 1.0))


def gates_equal_up_to_phase(g1: GateMatrix, g2: GateMatrix, tol: float) -> bool:
    if g1.arity != g2.arity:
        raise ArityMismatch(f"arity {g1.arity} vs {g2.arity}")
    a, b = g1.entries, g2.entries
    pivot = np.unravel_index(np.argmax(np.abs(b)), b.shape)
    phase = a[pivot] / b[pivot]
    if abs(abs(phase) - 1.0) > tol:
        return False
    return bool(np.max(np.abs(a - phase * b)) <= tol)
