import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nonlocal_gate import locc, protocol
from nonlocal_gate import statevec as sv
from nonlocal_gate.channel import ChannelSpec
from nonlocal_gate.config import CorrectorKind, RunConfig

from conftest import alphas, draws, unit_pairs

SPEC = ChannelSpec.from_alpha(0.8)
A, B = math.sqrt(0.9), math.sqrt(0.1)
# frozen with exact rational arithmetic: p0 = 153/250, p1 = 97/250
P0, P1 = 0.612, 0.388
SIN_075 = 0.66143782776614765  # sin(acos 0.75)


def swapped(control=(A, B), spec=SPEC, draw=0.0, target=(1.0, 0.0)):
    config = RunConfig(control=control, target=target, alpha=spec.alpha)
    return protocol.es_unit(protocol.new_attempt(config, spec), draw)


def pair_state(session):
    return sv.reduce_to(session.state, ("A", "B1"))


# --- swap unit ----------------------------------------------------------------


def test_es_perfect_channel_gives_bell():
    s, m = swapped((2**-0.5, 2**-0.5), ChannelSpec.from_alpha(2**-0.5), 0.2)
    assert m == 0
    assert sv.fidelity(pair_state(s), sv.make_state([1, 0, 0, 1], ("A", "B1"))) > 1 - 1e-12


@pytest.mark.parametrize("draw,m,p,amps", [
    (0.0, 0, P0, [A * 0.8, 0, 0, B * 0.6]),
    (0.99, 1, P1, [A * 0.6, 0, 0, B * 0.8]),
])
def test_es_branches(draw, m, p, amps):
    s, got = swapped(draw=draw)
    assert got == m
    measured = next(e for e in s.trace if e.kind == "measure")
    assert abs(measured.payload["probability"] - p) <= 1e-12
    expected = sv.make_state(amps, ("A", "B1"))
    assert sv.fidelity(pair_state(s), expected) > 1 - 1e-12
    assert "A1" not in s.state.labels


# --- corrector matrices -------------------------------------------------------


def test_u0_printed_entries():
    theta = math.acos(0.75)
    u0 = protocol.corrector_unitary(0, theta).entries
    expected = np.array([
        [0.75, SIN_075, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [-SIN_075, 0.75, 0, 0]
    ])
    assert np.max(np.abs(u0 - expected)) <= 1e-12


def test_u1_at_theta_zero_is_permutation():
    u1 = protocol.corrector_unitary(1, 0.0).entries
    assert np.allclose(u1[:, 0], [1, 0, 0, 0])
    assert np.allclose(u1[:, 1], [0, 0, 0, 1])
    assert np.allclose(u1[:, 2], [0, 0, 1, 0])
    assert np.allclose(u1[:, 3], [0, 1, 0, 0])


def test_printed_u1_is_not_unitary():
    assert sv.unitarity_residual(protocol.printed_corrector_matrix(1, 0.7)) > 0.1
    with pytest.raises(sv.NotUnitary):
        sv.GateMatrix(protocol.printed_corrector_matrix(1, 0.7))


def test_u1_action_on_swapped_state():
    theta = math.acos(0.75)
    spec = ChannelSpec(1.0, 0.75)
    al, be = spec.alpha, spec.beta
    p1 = A**2 * be**2 + B**2 * al**2
    theta_t1 = sv.make_state([A * be, 0, 0, B * al], ("A", "B1"))
    state = sv.insert_qubit(theta_t1, "B2", (1, 0))
    out = sv.apply_gate(state, protocol.corrector_unitary(1, theta), ("B1", "B2"))
    expected = np.zeros(8)
    expected[0b000] = be * A
    expected[0b110] = be * B
    expected[0b101] = -B * al * math.sin(theta)
    assert np.max(np.abs(out.amps - expected / math.sqrt(p1))) <= 1e-12


@given(st.floats(0.0, math.pi / 2, exclude_max=True))
def test_u0_is_sigma_x_conjugate_of_u1(theta):
    x1 = np.kron(sv.X.entries, np.eye(2))
    u0 = protocol.corrector_unitary(0, theta).entries
    u1 = protocol.corrector_unitary(1, theta).entries
    assert np.max(np.abs(u0 - x1 @ u1 @ x1)) <= 1e-12


@given(st.floats(0.0, math.pi / 2, exclude_max=True), st.sampled_from([0, 1]))
def test_decomposition_composes_to_corrector(theta, m):
    steps = protocol.corrector_decomposition(m, theta)
    names = [s.name for s in steps]
    assert ("X(B1)" in names) == (m == 0)
    assert sv.gates_equal_up_to_phase(
        protocol.compose(steps), protocol.corrector_unitary(m, theta), 1e-10
    )


def test_search_agrees_with_stored_sequence():
    for theta in (0.1, 0.7, 1.4):
        for m in (0, 1):
            found = protocol.search_decomposition(m, theta)
            assert found == [s.name for s in protocol.corrector_decomposition(m, theta)]


def test_controlled_rotation_at_zero_is_identity():
    assert np.allclose(protocol.controlled_rotation(0.0).entries, np.eye(4))


# --- POVM ---------------------------------------------------------------------


def test_povm_pair_entries():
    pair = protocol.povm_pair(0, SPEC)
    assert np.max(np.abs(pair.success.entries - [[0.5625, 0.75], [0.75, 1.0]])) <= 1e-12
    assert np.allclose(protocol.povm_pair(1, SPEC).psi, [0.8, 0.6])


@given(alphas, st.sampled_from([0, 1]))
def test_povm_pair_completeness_and_orthogonality(alpha, m):
    pair = protocol.povm_pair(m, ChannelSpec.from_alpha(alpha))
    assert np.max(np.abs(pair.success.entries + pair.failure.entries - np.eye(2))) <= 1e-12
    assert abs(np.vdot(pair.psi, pair.phi)) <= 1e-12


# --- corrector ----------------------------------------------------------------


@pytest.mark.parametrize("kind,prob", [
    (CorrectorKind.CUO, 0.58823529411764706),
    (CorrectorKind.POVM_LITERAL, 0.58823529411764706),
    (CorrectorKind.ORTHOGONAL, 0.37647058823529412),
])
def test_corrector_success_probability_m0(kind, prob):
    s, m = swapped(draw=0.0)
    s, outcome = protocol.run_corrector(s, m, kind, 0.0)
    assert outcome.succeeded
    assert abs(outcome.probability - prob) <= 1e-12
    target = protocol.control_ebit(A, B)
    assert sv.fidelity(outcome.post_state, target) > 1 - 1e-12
    assert "B2" not in s.state.labels


@pytest.mark.parametrize("kind", list(CorrectorKind))
def test_corrector_failure_aborts(kind):
    s, m = swapped(draw=0.0)
    s, outcome = protocol.run_corrector(s, m, kind, np.nextafter(1.0, 0.0))
    assert not outcome.succeeded and outcome.post_state is None
    assert s.phase == "aborted" and s.trace[-1].kind == "abort"
    with pytest.raises(protocol.BadPhase):
        protocol.ec_unit(s, 0.1)


def test_corrector_on_perfect_channel_never_fails():
    spec = ChannelSpec.from_alpha(2**-0.5)
    for draw in (0.0, 0.99):
        s, m = swapped(spec=spec, draw=draw)
        _, outcome = protocol.run_corrector(s, m, CorrectorKind.CUO, np.nextafter(1.0, 0.0))
        assert outcome.succeeded and abs(outcome.probability - 1.0) <= 1e-12


def test_corrector_phase_checks():
    config = RunConfig()
    with pytest.raises(protocol.BadPhase):
        protocol.run_corrector(protocol.new_attempt(config), 0, CorrectorKind.CUO, 0.0)
    s, m = swapped()
    with pytest.raises(ValueError):
        protocol.run_corrector(s, 1 - m, CorrectorKind.CUO, 0.0)


# --- EC unit and full gate ----------------------------------------------------


def test_ec_purifies_plus_zero():
    s, m = swapped((2**-0.5, 2**-0.5), draw=0.0)
    s, outcome = protocol.run_corrector(s, m, CorrectorKind.CUO, 0.0)
    s = protocol.ec_unit(s, 0.1)
    final = sv.reduce_to(s.state, ("A", "B"))
    assert sv.fidelity(final, protocol.BELL) > 1 - 1e-12


@given(unit_pairs(), unit_pairs())
def test_ec_branches_agree(control, target):
    spec = ChannelSpec.from_alpha(2**-0.5)
    s, _ = swapped(control, spec, 0.3, target)
    s = s.evolve(phase="corrected")
    out = [sv.reduce_to(protocol.ec_unit(s, d).state, ("A", "B")) for d in (0.1, 0.9)]
    assert sv.fidelity(out[0], out[1]) > 1 - 1e-12
    assert sv.fidelity(out[0], protocol.direct_cnot(control, target)) > 1 - 1e-12


def test_control_zero_leaves_target():
    config = RunConfig(control=(1, 0), target=(0.6, 0.8), alpha=2**-0.5)
    result = protocol.nonlocal_cnot(config, [0.5, 0.5])
    assert sv.fidelity(result.final_state, sv.make_state([0.6, 0.8, 0, 0], ("A", "B"))) > 1 - 1e-12


@given(unit_pairs(), unit_pairs(), alphas, st.sampled_from(list(CorrectorKind)),
       st.lists(draws, min_size=30, max_size=30))
def test_gate_is_cnot_whenever_it_succeeds(control, target, alpha, kind, ds):
    config = RunConfig(control=control, target=target, alpha=alpha, corrector=kind, max_attempts=10)
    result = protocol.nonlocal_cnot(config, ds, raise_on_failure=False)
    assert result.attempts >= 1
    assert (result.final_state is not None) == result.succeeded
    if result.succeeded:
        assert result.fidelity > 1 - 1e-10
    assert locc.cross_party_gates(result.trace) == []


def test_orthogonal_corrector_runs_on_perfect_channel():
    config = RunConfig(alpha=2**-0.5, corrector=CorrectorKind.ORTHOGONAL)
    result = protocol.nonlocal_cnot(config, [0.3, 0.0, 0.3])
    assert any(e.step == "corrector" for e in result.trace)
    assert result.fidelity > 1 - 1e-12


def test_perfect_channel_ledger_and_no_corrector():
    config = RunConfig(control=(0.6, 0.8), target=(0.8, 0.6), alpha=2**-0.5)
    result = protocol.nonlocal_cnot(config, [0.3, 0.3])
    assert result.attempts == 1
    assert not any(e.step == "corrector" for e in result.trace)
    assert result.ledger == locc.ResourceLedger(1, 1, 1, 0, 2, 0)


def test_corrector_ledger_delta():
    config = RunConfig(alpha=0.8)
    result = protocol.nonlocal_cnot(config, [0.0, 0.0, 0.0])
    assert result.ledger == locc.ResourceLedger(1, 1, 2, 1, 3, 1)


def test_max_attempts_exceeded():
    config = RunConfig(alpha=0.8, max_attempts=3)
    with pytest.raises(protocol.MaxAttemptsExceeded) as info:
        protocol.nonlocal_cnot(config, [0.0, 0.99999] * 10)
    result = info.value.result
    assert result.attempts == 3 and not result.succeeded
    assert result.ledger.ebits_consumed == 3
    assert len(result.attempt_ledgers) == 3


def test_run_trial_replays_batch():
    config = RunConfig(alpha=0.8, max_attempts=4, seed=11)
    batch = dict(protocol.run_trials(config, 50, memo=False))
    for i in (0, 17, 49):
        assert protocol.run_trial(config, i).trace == batch[i].trace


@pytest.mark.parametrize("kind", list(CorrectorKind))
def test_branch_cache_is_exact(kind):
    config = RunConfig(alpha=0.85, corrector=kind, max_attempts=3, seed=5, control=(0.6, 0.8))
    plain = [r for _, r in protocol.run_trials(config, 400, memo=False)]
    cached = [r for _, r in protocol.run_trials(config, 400)]
    for x, y in zip(plain, cached):
        assert x.trace == y.trace
        assert x.fidelity == y.fidelity
        assert x.es_outcome_bits == y.es_outcome_bits


def test_propagated_probability_matches_closed_form():
    for kind, expected in [(CorrectorKind.CUO, 0.72), (CorrectorKind.ORTHOGONAL, 0.4608)]:
        got = protocol.propagated_success_probability(A, B, SPEC, kind)
        assert abs(got - expected) <= 1e-12


def test_purification_small_run():
    report = protocol.purification_experiment(SPEC, CorrectorKind.CUO, 200, seed=1)
    assert report.expected_rate == pytest.approx(0.72)
    assert report.min_fidelity > 1 - 1e-10
    assert abs(report.min_entropy - 1.0) <= 1e-10
    assert report.cross_party_gates == 0
    assert len(report.rows) == 200
