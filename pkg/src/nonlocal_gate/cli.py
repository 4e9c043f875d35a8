"""Command-line front end: configure a run, execute it, print a report.

Exit status is 0 on success, 2 on usage errors and 3 when a single run
exhausts ``--max-attempts``.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Sequence

import numpy as np

from . import analysis, locc, protocol
from .channel import prepare_channel
from .config import FORMATS, MODES, CorrectorKind, RunConfig, trial_draws

SIG_DIGITS = 15
EXIT_USAGE = 2
EXIT_EXHAUSTED = 3

_CORRECTORS = {kind.value: kind for kind in CorrectorKind}


# --- argument parsing ---------------------------------------------------------


def _alpha(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not math.sqrt(0.5) - 1e-12 <= value < 1.0:
        raise argparse.ArgumentTypeError(
            f"{value} outside [1/sqrt(2), 1); alpha below 1/sqrt(2) would make beta > alpha"
        )
    return value


def _pair(text: str) -> tuple[float, float]:
    parts = text.split(",")
    try:
        pair = tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected two comma-separated reals, got {text!r}") from None
    if len(pair) != 2:
        raise argparse.ArgumentTypeError(f"expected two comma-separated reals, got {text!r}")
    if not all(map(math.isfinite, pair)) or math.hypot(*pair) == 0.0:
        raise argparse.ArgumentTypeError(f"amplitudes {text!r} must be finite and not both zero")
    return pair


def _count(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"must be a 64-bit unsigned integer, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nonlocal-gate",
        description="Probabilistic nonlocal CNOT over a partially entangled channel.",
    )
    parser.add_argument("--alpha", type=_alpha, default=0.8,
                        help="larger Schmidt coefficient of the channel (default 0.8)")
    parser.add_argument("--control", type=_pair, default=(math.sqrt(0.5), math.sqrt(0.5)),
                        metavar="a,b", help="control amplitudes (default 0.7071,0.7071)")
    parser.add_argument("--target", type=_pair, default=(1.0, 0.0),
                        metavar="c,d", help="target amplitudes (default 1,0)")
    parser.add_argument("--corrector", choices=sorted(_CORRECTORS), default="cuo")
    parser.add_argument("--trials", type=_count, default=1, metavar="N")
    parser.add_argument("--seed", type=_seed, default=0, metavar="S")
    parser.add_argument("--mode", choices=MODES, default="single")
    parser.add_argument("--format", choices=FORMATS, default="json", dest="output_format")
    parser.add_argument("--max-attempts", type=_count, default=64, metavar="K")
    parser.add_argument("--trace", metavar="PATH",
                        help="write the event log of every run as line-delimited JSON")
    return parser


def parse_args(arguments: Sequence[str]) -> tuple[RunConfig, str | None]:
    ns = build_parser().parse_args(list(arguments))
    config = RunConfig(
        control=ns.control, target=ns.target, alpha=ns.alpha,
        corrector=_CORRECTORS[ns.corrector], trials=ns.trials, seed=ns.seed,
        max_attempts=ns.max_attempts, mode=ns.mode, output_format=ns.output_format,
    )
    return config, ns.trace


def parse_config(arguments: Sequence[str]) -> RunConfig:
    """Flags to a validated config; bad flags exit with status 2."""
    return parse_args(arguments)[0]


# --- report encoding ----------------------------------------------------------


def _real(x: float) -> float:
    return float(f"{x:.{SIG_DIGITS}g}")


def plain(value):
    """JSON-ready copy of ``value`` with reals cut to 15 significant digits."""
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return _real(value) if math.isfinite(value) else None
    if isinstance(value, (complex, np.complexfloating)):
        return [_real(value.real), _real(value.imag)]
    if isinstance(value, np.ndarray):
        return plain(value.tolist())
    if isinstance(value, CorrectorKind):
        return value.value
    return value


def _csv_cell(value) -> str:
    value = plain(value)
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, list):
        return ";".join(str(v) for v in value)
    return str(value)


def emit_report(report: dict, output_format: str = "json") -> bytes:
    """Encode a report; identical reports always give identical bytes.

    JSON keeps the report's key order and drops private ``_`` keys. CSV
    writes the ``_rows`` list of dicts (one shared set of keys), one line each.
    """
    if output_format == "json":
        body = {k: v for k, v in report.items() if not k.startswith("_")}
        return (json.dumps(plain(body), indent=2, allow_nan=False) + "\n").encode()
    if output_format == "csv":
        rows = report["_rows"]
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        header = list(rows[0]) if rows else []
        writer.writerow(header)
        for row in rows:
            writer.writerow([_csv_cell(row[k]) for k in header])
        return buffer.getvalue().encode()
    raise ValueError(f"unknown format {output_format!r}")


def _state_amplitudes(state) -> dict | None:
    if state is None:
        return None
    return {"labels": list(state.labels), "amplitudes": [complex(z) for z in state.amps]}


def _trial_rows(rows) -> list[dict]:
    return [
        {"trial": r.trial, "attempts": r.attempts, "succeeded": r.succeeded,
         "m_bits": "".join(map(str, r.m_bits)), "fidelity": r.fidelity}
        for r in rows
    ]


# --- modes --------------------------------------------------------------------


def _write_traces(path: str, runs) -> None:
    with open(path, "w", encoding="utf-8") as out:
        for trial, result in runs:
            for attempt, trace in enumerate(result.attempt_traces, start=1):
                locc.write_trace(trace, out, trial=trial, attempt=attempt)


def run_single(config: RunConfig) -> tuple[dict, int, list]:
    draws = trial_draws(config.seed, 0, config.max_attempts).tolist()
    try:
        result, status = protocol.nonlocal_cnot(config, draws), 0
    except protocol.MaxAttemptsExceeded as exc:
        result, status = exc.result, EXIT_EXHAUSTED
    report = {
        "config": config.as_dict(),
        "succeeded": result.succeeded,
        "attempts": result.attempts,
        "es_outcome_bits": list(result.es_outcome_bits),
        "fidelity": result.fidelity,
        "final_state": _state_amplitudes(result.final_state),
        "ledger": result.ledger.as_dict(),
        "attempt_ledgers": [led.as_dict() for led in result.attempt_ledgers],
        "cross_party_gates": len(locc.cross_party_gates(result.trace)),
        "_rows": _trial_rows([protocol.trial_row(0, result)]),
    }
    return report, status, [(0, result)]


def run_montecarlo(config: RunConfig) -> tuple[dict, int, list]:
    per_attempt = analysis.exact_success_probability(config.channel, config.corrector)
    expected = 1.0 - (1.0 - per_attempt) ** config.max_attempts
    results = list(protocol.run_trials(config))
    ledgers: dict[int, locc.ResourceLedger] = {}
    total = locc.ResourceLedger()
    for _, result in results:
        # memoized trials share result objects; fold each distinct one once
        key = id(result)
        if key not in ledgers:
            ledgers[key] = result.ledger
        total = total + ledgers[key]
    stats = analysis.binomial_stats(sum(r.succeeded for _, r in results), len(results), expected)
    cross = sum(len(locc.cross_party_gates(r.trace)) for r in {id(r): r for _, r in results}.values())
    report = {
        "config": config.as_dict(),
        "per_attempt_probability": per_attempt,
        "stats": stats.as_dict(),
        "mean_attempts": sum(r.attempts for _, r in results) / len(results),
        "ledger_total": total.as_dict(),
        "cross_party_gates": cross,
        "_rows": _trial_rows(protocol.trial_row(i, r) for i, r in results),
    }
    return report, 0, results


def run_purify(config: RunConfig) -> tuple[dict, int, list]:
    rep = protocol.purification_experiment(config.channel, config.corrector, config.trials, config.seed)
    resolved = protocol.purification_config(config.channel, config.corrector, config.trials, config.seed)
    report = {
        "config": {**resolved.as_dict(), "format": config.output_format},
        "alpha": rep.alpha,
        "beta": rep.beta,
        "corrector": rep.corrector,
        "input_entropy": analysis.entanglement_entropy(
            prepare_channel(config.channel), ["A1"]
        ),
        "expected_rate": rep.expected_rate,
        "stats": rep.stats.as_dict(),
        "mean_fidelity": rep.mean_fidelity,
        "min_fidelity": rep.min_fidelity,
        "mean_entropy": rep.mean_entropy,
        "min_entropy": rep.min_entropy,
        "cross_party_gates": rep.cross_party_gates,
        "_rows": _trial_rows(rep.rows),
    }
    return report, 0, []


def run_validate(config: RunConfig) -> tuple[dict, int, list]:
    spec = config.channel
    branches, rows = {}, []
    for m in (0, 1):
        pair = protocol.povm_pair(m, spec)
        result = analysis.validate_povm(pair).as_dict()
        result["psi_phi_overlap"] = abs(complex(np.vdot(pair.psi, pair.phi)))
        branches[f"m{m}"] = result
        rows.append({"m": m, **result})
    report = {
        "config": config.as_dict(),
        "expected_max_eigen_success": 1.0 / spec.alpha**2,
        "is_physical": all(b["is_physical"] for b in branches.values()),
        "max_eigen_success": max(b["max_eigen_success"] for b in branches.values()),
        "branches": branches,
        "_rows": rows,
    }
    return report, 0, []


def run_exact(config: RunConfig) -> tuple[dict, int, list]:
    spec = config.channel
    a, b = config.control
    p0, p1 = analysis.outcome_distribution(a, b, spec)
    kinds, rows = {}, []
    for kind in CorrectorKind:
        closed = analysis.exact_success_probability(spec, kind)
        propagated = protocol.propagated_success_probability(a, b, spec, kind)
        entry = {
            "closed_form": closed,
            "propagated": propagated,
            "residual": abs(closed - propagated),
            "conditional": [
                analysis.conditional_success_probability(a, b, spec, kind, m) for m in (0, 1)
            ],
        }
        kinds[kind.value] = entry
        rows.append({"corrector": kind.value, **entry})
    report = {
        "config": config.as_dict(),
        "alpha": spec.alpha,
        "beta": spec.beta,
        "theta": spec.theta,
        "outcome_distribution": [p0, p1],
        "correctors": kinds,
        "_rows": rows,
    }
    return report, 0, []


_RUNNERS = {
    "single": run_single,
    "montecarlo": run_montecarlo,
    "purify": run_purify,
    "validate": run_validate,
    "exact": run_exact,
}


def main(argv: Sequence[str] | None = None) -> int:
    config, trace_path = parse_args(sys.argv[1:] if argv is None else argv)
    report, status, runs = _RUNNERS[config.mode](config)
    if trace_path is not None:
        if config.mode == "purify":
            runs = protocol.run_trials(protocol.purification_config(
                config.channel, config.corrector, config.trials, config.seed
            ))
        _write_traces(trace_path, runs)
    sys.stdout.buffer.write(emit_report(report, config.output_format))
    sys.stdout.flush()
    if status == EXIT_EXHAUSTED:
        print(f"error: all {config.max_attempts} attempts failed", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
