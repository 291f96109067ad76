"""Stage diagnostics and the exhaustive search for eavesdropper exit moves.

The search asks, for a parameterized family of mid-protocol states: is there
a short sequence of mod-d gates on (k, e) after which Eve's memory is in a
product state while Bob still decodes the current key exactly, for every key
assignment at once?  Candidates found by the fast permutation path are
re-verified through dense matrices before they are reported.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Callable, Sequence

import numpy as np

from . import adversary, serialize
from .errors import (
    ConfigError,
    ExplosionGuard,
    FamilyTooLarge,
    IllegalRegisterAccess,
    InvariantViolation,
)
from .qudit import (
    GateSpec,
    PureState,
    RegisterLayout,
    apply_gate,
    apply_gate_dense,
    partial_trace,
    schmidt_rank,
    von_neumann_entropy,
)

# a decode or residual value counts as certain above this probability
CERTAINTY = 1.0 - 1e-9

MAX_SEARCH_DEPTH = 3
ENUMERATION_CAP = 1_000_000
KEY_TUPLE_CAP = 10_000


@dataclass(frozen=True)
class StageDiagnostics:
    """Snapshot of one protocol stage: key-qudit spectrum and Schmidt cuts."""

    round_index: int
    stage: str
    rho_k_spectrum: tuple[float, ...] | None
    entropy_k: float | None
    schmidt_ranks: dict
    decode_ok: bool | None

    def to_json_dict(self) -> dict:
        return {
            "round": self.round_index,
            "stage": self.stage,
            "rho_k_spectrum": None if self.rho_k_spectrum is None else list(self.rho_k_spectrum),
            "entropy_k": self.entropy_k,
            "schmidt_ranks": dict(self.schmidt_ranks),
            "decode_ok": self.decode_ok,
        }


def _cut_sides(labels: Sequence[str]) -> dict:
    eve = {l for l in labels if l.startswith("e")}
    return {
        "e|abk": (eve, {"a", "b", "k"}),
        "e|ab": (eve, {"a", "b"}),
        "a|bke": ({"a"}, {"b", "k"} | eve),
    }


def diagnose(state: PureState, round_index: int, stage: str,
             decode_ok: bool | None = None, tol: float = 1e-8) -> StageDiagnostics:
    """Spectrum and entropy of the key qudit plus standard Schmidt cuts.

    Cuts that do not partition the current layout are skipped.
    """
    labels = set(state.layout.labels)
    spectrum = None
    entropy = None
    if "k" in labels and len(labels) > 1:
        rho_k = partial_trace(state, {"k"})
        spectrum = tuple(float(x) for x in rho_k.spectrum())
        entropy = von_neumann_entropy(rho_k)
    ranks = {}
    for name, (side_a, side_b) in _cut_sides(state.layout.labels).items():
        if side_a and side_a | side_b == labels and not side_a & side_b:
            ranks[name] = schmidt_rank(state, side_a, tol)
    return StageDiagnostics(
        round_index=round_index,
        stage=stage,
        rho_k_spectrum=spectrum,
        entropy_k=entropy,
        schmidt_ranks=ranks,
        decode_ok=decode_ok,
    )


@dataclass(frozen=True)
class RoundTemplate:
    """Family of mid-round states parameterized by a key tuple.

    current_key_index points at the tuple slot Bob is about to decode.
    """

    template_id: str
    key_arity: int
    current_key_index: int
    build: Callable[[int, tuple[int, ...]], PureState]


def _exit_window_round1(d: int, keys: tuple[int, ...]) -> PureState:
    """Round 1 in transit, Eve's memory holding a copy of the flying value."""
    (q1,) = keys
    layout = RegisterLayout(d, ("a", "b", "k", "e"))
    amps = np.zeros(layout.dim, dtype=np.complex128)
    for j in range(d):
        amps[layout.index_of((j, j, (j + q1) % d, (j + q1) % d))] = 1.0 / np.sqrt(d)
    return PureState(layout, amps)


def _round2_still_entangled(d: int, keys: tuple[int, ...]) -> PureState:
    """Round 2 in transit after Eve stayed entangled through round 1."""
    q1, q2 = keys
    layout = RegisterLayout(d, ("a", "b", "k", "e"))
    amps = np.zeros(layout.dim, dtype=np.complex128)
    for j in range(d):
        amps[layout.index_of((j, j, (j + q2) % d, (j + q1) % d))] = 1.0 / np.sqrt(d)
    return PureState(layout, amps)


TEMPLATES = {
    "stage5_round1": RoundTemplate("stage5_round1", 1, 0, _exit_window_round1),
    "post_round1_round2": RoundTemplate("post_round1_round2", 2, 1, _round2_still_entangled),
}


def get_template(template_id: str) -> RoundTemplate:
    try:
        return TEMPLATES[template_id]
    except KeyError:
        raise ConfigError(
            f"unknown template {template_id!r}; known: {sorted(TEMPLATES)}") from None


def default_gate_family(d: int) -> tuple[GateSpec, ...]:
    """Searchable alphabet: mod-d adds between k and e plus shifts of e.

    s = 0 members are identities and are pruned from the alphabet; they only
    duplicate shorter sequences.
    """
    gates = [GateSpec.controlled_add("k", "e", s) for s in range(1, d)]
    gates += [GateSpec.controlled_add("e", "k", s) for s in range(1, d)]
    gates += [GateSpec.shift("e", s) for s in range(1, d)]
    return tuple(gates)


def _family_description(family: Sequence[GateSpec], d: int, is_default: bool) -> str:
    if is_default:
        return (f"cadd(k->e,s), cadd(e->k,s), shift(e,s) for s in 1..{d - 1}; "
                "identity pruned")
    return f"custom family of {len(family)} gates"


@dataclass(frozen=True)
class KeyCaseEvidence:
    """Outcome of both exit conditions for one key assignment."""

    keys: tuple[int, ...]
    rank_e: int
    bob_outcome: int | None
    deterministic: bool
    residual: int | None
    ok: bool

    def to_json_dict(self) -> dict:
        return {
            "keys": list(self.keys),
            "rank_e": self.rank_e,
            "bob_outcome": self.bob_outcome,
            "deterministic": self.deterministic,
            "residual": self.residual,
            "ok": self.ok,
        }


@dataclass(frozen=True)
class CandidateVerdict:
    verified: bool
    evidence: tuple[KeyCaseEvidence, ...]


@dataclass(frozen=True)
class SearchCandidate:
    sequence: tuple[GateSpec, ...]
    verdict: str
    residual_expression: str | None
    residual_values: dict

    def to_json_dict(self) -> dict:
        return {
            "sequence": [adversary.gate_to_obj(g) for g in self.sequence],
            "verdict": self.verdict,
            "residual_expression": self.residual_expression,
            "residual_values": [
                {"keys": list(k), "value": v}
                for k, v in sorted(self.residual_values.items())
            ],
        }


@dataclass(frozen=True)
class FeasibilityReport:
    template_id: str
    d: int
    depth: int
    family: str
    rank_tol: float
    candidates: tuple[SearchCandidate, ...]
    exhaustive: bool
    enumeration_count: int

    def to_json_dict(self) -> dict:
        return {
            "schema_version": "feasibility/1",
            "template": self.template_id,
            "d": self.d,
            "depth": self.depth,
            "family": self.family,
            "rank_tol": self.rank_tol,
            "exhaustive": self.exhaustive,
            "enumeration_count": self.enumeration_count,
            "candidates": [c.to_json_dict() for c in self.candidates],
        }


def _evaluate_sequence(template: RoundTemplate, d: int, sequence: Sequence[GateSpec],
                       rank_tol: float, dense: bool) -> CandidateVerdict:
    """Check both exit conditions for every key assignment.

    Condition order per assignment: Eve's memory must be product across
    {e} | {a,b,k} before the qudit is forwarded, then Bob's decode must yield
    the current round's key with certainty.
    """
    step = apply_gate_dense if dense else apply_gate
    evidence = []
    all_ok = True
    for keys in product(range(d), repeat=template.key_arity):
        state = template.build(d, keys)
        for gate in sequence:
            state = step(state, gate)
        rank = schmidt_rank(state, {"e"}, rank_tol)
        residual_probs = state.probabilities("e")
        residual_value = int(np.argmax(residual_probs))
        residual = residual_value if residual_probs[residual_value] >= CERTAINTY else None

        decoded = step(state, GateSpec.controlled_add("b", "k", d - 1))
        k_probs = decoded.probabilities("k")
        outcome = int(np.argmax(k_probs))
        deterministic = bool(k_probs[outcome] >= CERTAINTY)
        ok = rank == 1 and deterministic and outcome == keys[template.current_key_index]
        evidence.append(KeyCaseEvidence(
            keys=keys,
            rank_e=rank,
            bob_outcome=outcome if deterministic else None,
            deterministic=deterministic,
            residual=residual,
            ok=ok,
        ))
        all_ok = all_ok and ok
    return CandidateVerdict(verified=all_ok, evidence=tuple(evidence))


def verify_candidate(template: RoundTemplate | str, d: int, sequence: Sequence[GateSpec],
                     rank_tol: float = 1e-8) -> CandidateVerdict:
    """Re-check a candidate from scratch through the dense-matrix path.

    Accepts any gate sequence confined to registers k and e, not only
    members of the default search family.
    """
    if isinstance(template, str):
        template = get_template(template)
    for gate in sequence:
        illegal = set(gate.registers) - {"k", "e"}
        if illegal:
            raise IllegalRegisterAccess(
                f"candidate gates may touch only k and e, found {sorted(illegal)}")
    return _evaluate_sequence(template, d, tuple(sequence), rank_tol, dense=True)


def _affine_expression(values: dict, d: int, arity: int) -> str | None:
    """Render residuals as c + sum(a_i * q_i) mod d when that form fits."""
    const = values[(0,) * arity]
    coeffs = []
    for i in range(arity):
        unit = tuple(1 if j == i else 0 for j in range(arity))
        coeffs.append((values[unit] - const) % d)
    for keys, value in values.items():
        predicted = (const + sum(c * k for c, k in zip(coeffs, keys))) % d
        if predicted != value:
            return None
    terms = []
    if const:
        terms.append(str(const))
    for i, c in enumerate(coeffs):
        if c == 1:
            terms.append(f"q{i + 1}")
        elif c:
            terms.append(f"{c}*q{i + 1}")
    body = " + ".join(terms) if terms else "0"
    return f"{body} (mod {d})"


def feasibility_search(template: RoundTemplate | str, d: int, max_depth: int = 1,
                       family: Sequence[GateSpec] | None = None,
                       rank_tol: float = 1e-8) -> FeasibilityReport:
    """Enumerate all gate sequences up to max_depth and keep the exits.

    Sequences are visited in lexicographic order over the family alphabet,
    shortest first; the empty sequence is included.  Every candidate that
    passes the fast path is re-verified densely before being reported.
    """
    if isinstance(template, str):
        template = get_template(template)
    if not 0 <= max_depth <= MAX_SEARCH_DEPTH:
        raise ConfigError(f"max_depth must be in 0..{MAX_SEARCH_DEPTH}, got {max_depth}")
    if d ** template.key_arity > KEY_TUPLE_CAP:
        raise ExplosionGuard(
            f"d^arity = {d ** template.key_arity} key assignments exceed {KEY_TUPLE_CAP}")
    is_default = family is None
    fam = default_gate_family(d) if is_default else tuple(family)
    total = sum(len(fam) ** depth for depth in range(max_depth + 1))
    if total > ENUMERATION_CAP:
        raise FamilyTooLarge(f"{total} sequences exceed the cap of {ENUMERATION_CAP}")

    enumerated = 0
    candidates = []
    for depth in range(max_depth + 1):
        for sequence in product(fam, repeat=depth):
            enumerated += 1
            fast = _evaluate_sequence(template, d, sequence, rank_tol, dense=False)
            if not fast.verified:
                continue
            dense = _evaluate_sequence(template, d, sequence, rank_tol, dense=True)
            if not dense.verified:
                raise InvariantViolation(
                    "fast path accepted a sequence the dense oracle rejects")
            residual_values = {ev.keys: ev.residual for ev in dense.evidence}
            candidates.append(SearchCandidate(
                sequence=sequence,
                verdict="verified",
                residual_expression=_affine_expression(
                    residual_values, d, template.key_arity),
                residual_values=residual_values,
            ))
    if enumerated != total:
        raise InvariantViolation(
            f"enumerated {enumerated} sequences, closed form says {total}")
    return FeasibilityReport(
        template_id=template.template_id,
        d=d,
        depth=max_depth,
        family=_family_description(fam, d, is_default),
        rank_tol=rank_tol,
        candidates=tuple(candidates),
        exhaustive=True,
        enumeration_count=enumerated,
    )


def render_report(report) -> str:
    """Deterministic JSON text for a feasibility report or diagnostics."""
    if isinstance(report, FeasibilityReport):
        return serialize.dumps(report.to_json_dict())
    if isinstance(report, StageDiagnostics):
        doc = {"schema_version": "diagnostics/1"}
        doc.update(report.to_json_dict())
        return serialize.dumps(doc)
    if isinstance(report, (list, tuple)) and all(
            isinstance(r, StageDiagnostics) for r in report):
        return serialize.dumps({
            "schema_version": "diagnostics/1",
            "stages": [r.to_json_dict() for r in report],
        })
    raise TypeError(f"cannot render {type(report).__name__}")
