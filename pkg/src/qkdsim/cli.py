"""Command-line front end: validate scenarios, run sessions, search for exits.

Exit codes: 0 success, 1 bad configuration or scenario, 2 internal invariant
failure during a run, 3 I/O or unexpected internal error.  The tolerance used
for Schmidt-rank cutoffs resolves as: --tol flag, then the QKDSIM_TOL
environment variable, then 1e-8.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources

import jsonschema

from . import __version__
from .adversary import compile_schedule, script_from_obj
from .analysis import feasibility_search, render_report
from .errors import (
    ConfigError,
    ExplosionGuard,
    FamilyTooLarge,
    IllegalRegisterAccess,
    InvalidDimension,
    InvariantViolation,
    NonUnitaryMatrix,
    ScriptRegisterUnknown,
    UnknownPreset,
    ValueOutOfRange,
)
from .protocol import ProtocolConfig, control_check, run_session
from .serialize import dumps, format_float

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INVARIANT = 2
EXIT_INTERNAL = 3

DEFAULT_TOL = 1e-8
TOL_ENV_VAR = "QKDSIM_TOL"

# user-input failures that map to exit code 1; anything else internal is 3
_CONFIG_ERRORS = (
    ConfigError,
    ValueOutOfRange,
    InvalidDimension,
    UnknownPreset,
    ScriptRegisterUnknown,
    IllegalRegisterAccess,
    ExplosionGuard,
    FamilyTooLarge,
    NonUnitaryMatrix,
)


def _schema() -> dict:
    text = resources.files("qkdsim.schemas").joinpath("scenario.schema.json").read_text()
    return json.loads(text)


def load_scenario(path: str) -> dict:
    """Parse and validate a scenario file; raises ConfigError with the field."""
    with open(path, "r", encoding="utf-8") as handle:
        raw = handle.read()
    try:
        scenario = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: "
                          f"{exc.msg}") from exc
    validator = jsonschema.Draft202012Validator(_schema())
    problems = sorted(validator.iter_errors(scenario), key=lambda e: list(e.absolute_path))
    if problems:
        details = "; ".join(
            f"{'/'.join(str(p) for p in err.absolute_path) or '<root>'}: {err.message}"
            for err in problems)
        raise ConfigError(f"{path}: schema violations: {details}")
    _check_semantics(path, scenario)
    return scenario


def _check_semantics(path: str, scenario: dict) -> None:
    d = scenario["d"]
    keys = scenario.get("keys")
    rounds = scenario.get("rounds")
    if isinstance(keys, list):
        for i, q in enumerate(keys):
            if not 0 <= q < d:
                raise ConfigError(f"{path}: keys[{i}] = {q} not in [0, {d})")
        if rounds is not None and len(keys) != rounds:
            raise ConfigError(f"{path}: {len(keys)} keys for {rounds} rounds")
    if rounds is not None:
        for r in scenario.get("control_rounds", []):
            if r > rounds:
                raise ConfigError(f"{path}: control round {r} beyond rounds = {rounds}")
    attack = scenario.get("attack")
    if attack and "script" in attack:
        script_from_obj(attack["script"])


def _resolve_tol(flag_value: float | None) -> float:
    if flag_value is not None:
        return flag_value
    env = os.environ.get(TOL_ENV_VAR)
    if env is not None:
        try:
            return float(env)
        except ValueError as exc:
            raise ConfigError(f"{TOL_ENV_VAR} = {env!r} is not a number") from exc
    return DEFAULT_TOL


def _build_session(scenario: dict, seed_flag: int | None):
    if "rounds" not in scenario:
        raise ConfigError('scenario needs "rounds" to run a session')
    if "keys" not in scenario:
        raise ConfigError('scenario needs "keys" to run a session')
    keys = scenario["keys"]
    explicit = tuple(keys) if isinstance(keys, list) else None
    key_seed = keys["seed"] if isinstance(keys, dict) else None
    seed = seed_flag if seed_flag is not None else scenario.get("seed", 0)
    config = ProtocolConfig(
        d=scenario["d"],
        rounds=scenario["rounds"],
        keys=explicit,
        key_seed=key_seed,
        control_rounds=frozenset(scenario.get("control_rounds", [])),
        eve_registers=scenario.get("eve_registers", 1),
        seed=seed,
    )
    attack = scenario.get("attack", {"preset": "none"})
    if "preset" in attack:
        attack_name = attack["preset"]
        script = compile_schedule(attack_name, config)
    else:
        attack_name = "script"
        script = script_from_obj(attack["script"])
    return config, script, attack_name


def _write_output(text: str, args, scenario: dict) -> None:
    path = args.out or scenario.get("output")
    if path:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


def cmd_validate(args) -> int:
    load_scenario(args.scenario)
    print(f"{args.scenario}: ok")
    return EXIT_OK


def _text_report(config, attack_name, tol, transcripts, check) -> str:
    lines = [
        f"d={config.d} rounds={config.rounds} seed={config.seed} "
        f"attack={attack_name} tol={format_float(tol)}",
        "round  mode     sent  decoded  rank_e  entropy_k",
    ]
    for t in transcripts:
        rank = t.diagnostics["round_end"].schmidt_ranks.get("e|ab")
        entropy = t.diagnostics["post_encode"].entropy_k
        rank_text = "-" if rank is None else str(rank)
        # + 0.0 folds -0.0 so a collapsed carrier prints 0.000000
        entropy_text = "-" if entropy is None else f"{entropy + 0.0:.6f}"
        lines.append(
            f"{t.round_index:5d}  {t.mode:<7s}  {t.key_sent:4d}  {t.key_decoded:7d}  "
            f"{rank_text:>6}  {entropy_text}")
    lines.append(
        f"control: checked={check.checked} mismatches={check.mismatches} "
        f"rate={check.rate:.6f}")
    return "\n".join(lines) + "\n"


def cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    tol = _resolve_tol(args.tol)
    config, script, attack_name = _build_session(scenario, args.seed)
    requested = tuple(scenario.get("diagnostics", []))
    stages = requested
    if args.format == "text":
        stages = tuple(dict.fromkeys(requested + ("post_encode", "round_end")))
    transcripts = run_session(config, script, diagnostics=stages, schmidt_tol=tol)
    check = control_check(transcripts, config.control_rounds)

    if args.format == "text":
        text = _text_report(config, attack_name, tol, transcripts, check)
    else:
        doc = {
            "schema_version": "transcript/1",
            "d": config.d,
            "rounds": config.rounds,
            "seed": config.seed,
            "tolerance": tol,
            "attack": attack_name,
            "transcripts": [t.to_json_dict() for t in transcripts],
            "control_check": {
                "checked": check.checked,
                "mismatches": check.mismatches,
                "rate": check.rate,
            },
        }
        text = dumps(doc)
    _write_output(text, args, scenario)
    return EXIT_OK


def cmd_search(args) -> int:
    scenario = load_scenario(args.scenario)
    tol = _resolve_tol(args.tol)
    if "template" not in scenario:
        raise ConfigError('scenario needs a "template" to search')
    report = feasibility_search(
        scenario["template"], scenario["d"], max_depth=args.depth, rank_tol=tol)
    _write_output(render_report(report), args, scenario)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qkdsim",
        description="Simulate a reusable-carrier qudit QKD protocol and probe attacks on it.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="check a scenario file")
    p_validate.add_argument("scenario")
    p_validate.set_defaults(handler=cmd_validate)

    p_run = sub.add_parser("run", help="run a protocol session")
    p_run.add_argument("scenario")
    p_run.add_argument("--seed", type=int, default=None, help="overrides the scenario seed")
    p_run.add_argument("--out", default=None, help="report path (default: scenario output or stdout)")
    p_run.add_argument("--format", choices=("json", "text"), default="json")
    p_run.add_argument("--tol", type=float, default=None, help="Schmidt-rank cutoff")
    p_run.set_defaults(handler=cmd_run)

    p_search = sub.add_parser("search", help="search for eavesdropper exit sequences")
    p_search.add_argument("scenario")
    p_search.add_argument("--depth", type=int, default=1, help="max gate-sequence length")
    p_search.add_argument("--out", default=None)
    p_search.add_argument("--tol", type=float, default=None, help="Schmidt-rank cutoff")
    p_search.set_defaults(handler=cmd_search)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except _CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - last resort, keep the exit contract
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
