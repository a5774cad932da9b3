"""``bbc`` command line: run scenarios, validate chain stores, audit credits, enroll fleets.

Exit codes: 0 success, 1 usage/config error, 2 validation failure,
3 audit or golden mismatch, 4 internal error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .biometrics import Fleet
from .credits import audit, fold_events
from .ledger import ChainValidationError
from .sim import ConfigError, Scenario, run
from .store import StoreError, dumps_registry, read_chain, read_registry, write_registry

log = logging.getLogger("bbc")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INVALID = 2
EXIT_MISMATCH = 3
EXIT_INTERNAL = 4

RUN_KEYS = ("out_dir", "verbosity", "golden", "registry")


class UsageError(Exception):
    pass


def _err(message: str) -> None:
    print(f"error: {message}", file=sys.stderr)


def load_config(path: str | Path) -> tuple[Scenario, dict[str, Any]]:
    """Split a flat TOML config into the scenario and run options."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"config {path}: {exc}") from None
    options = {k: data.pop(k) for k in RUN_KEYS if k in data}
    for key in ("road_length", "radio_range", "match_threshold", "drop_probability"):
        if type(data.get(key)) is int:
            data[key] = float(data[key])
    return Scenario.from_mapping(data), options


def _fleet_from_registry(path: str | Path, scenario: Scenario) -> Fleet:
    try:
        text = Path(path).read_text(encoding="ascii")
        _, seed = read_registry(path)
    except (OSError, UnicodeDecodeError, StoreError) as exc:
        raise UsageError(f"registry {path}: {exc}") from None
    if seed is None:
        raise UsageError(f"registry {path}: no fleet seed recorded; regenerate it with 'bbc enroll'")
    fleet = Fleet(seed, scenario.n_nodes)
    if dumps_registry(fleet.registry, seed) != text:
        raise UsageError(
            f"registry {path} does not match a {scenario.n_nodes}-node fleet for seed {seed}"
        )
    return fleet


def _compare_golden(files: dict[str, str], golden: Path) -> list[str]:
    if golden.is_dir():
        expected = {
            p.relative_to(golden).as_posix(): p.read_text(encoding="ascii")
            for p in sorted(golden.rglob("*"))
            if p.is_file()
        }
        names = sorted(set(expected) | set(files))
        return [n for n in names if expected.get(n) != files.get(n)]
    return [] if golden.read_text(encoding="ascii") == files["run.log"] else ["run.log"]


def cmd_run(args: argparse.Namespace) -> int:
    scenario, options = load_config(args.config)
    out = args.out or options.get("out_dir")
    if not out:
        raise UsageError("no output directory: pass --out or set out_dir")
    registry = args.registry or options.get("registry")
    golden = args.golden or options.get("golden")
    if "verbosity" in options:
        logging.getLogger().setLevel(logging.WARNING - 10 * min(int(options["verbosity"]), 2))
    fleet = _fleet_from_registry(registry, scenario) if registry else None

    result = run(scenario, fleet)
    written = result.write(out)
    m = result.metrics
    print(
        f"run seed={scenario.seed} rounds={scenario.rounds} height={m['final_height']} "
        f"commit_rate={m['commit_rate']} converged={m['converged']} files={len(written)} out={out}"
    )
    if golden:
        diffs = _compare_golden(result.files(), Path(golden))
        if diffs:
            _err(f"golden mismatch in {', '.join(diffs)}")
            return EXIT_MISMATCH
        print(f"golden match: {golden}")
    return EXIT_OK


def _load_inputs(chain_path: str, registry_path: str):
    try:
        registry, _ = read_registry(registry_path)
    except (OSError, UnicodeDecodeError) as exc:
        raise UsageError(f"cannot read registry {registry_path}: {exc}") from None
    except StoreError as exc:
        raise ValidationFailure(f"registry {registry_path}: {exc}") from None
    try:
        blocks = read_chain(chain_path)
    except OSError as exc:
        raise UsageError(f"cannot read chain store {chain_path}: {exc.strerror}") from None
    except StoreError as exc:
        raise ValidationFailure(f"parse error: {exc}") from None
    return blocks, registry


class ValidationFailure(Exception):
    pass


def cmd_validate(args: argparse.Namespace) -> int:
    blocks, registry = _load_inputs(args.chain, args.registry)
    try:
        ledger, _ = audit(blocks, registry)
    except ChainValidationError as exc:
        msg = "no genesis" if exc.detail == "no genesis" else f"height={exc.height} code={exc.code.value}"
        raise ValidationFailure(f"invalid: {msg}") from None
    print(f"valid blocks={len(blocks)} height={blocks[-1].height} head={blocks[-1].hash.hex()}")
    return EXIT_OK


def _read_snapshot(path: Path) -> dict[str, str]:
    snapshot = {}
    for line in path.read_text(encoding="ascii").splitlines():
        key, sep, value = line.partition("=")
        if sep and (key.startswith("credit.") or key == "ledger.height"):
            snapshot[key] = value
    return snapshot


def cmd_audit(args: argparse.Namespace) -> int:
    blocks, registry = _load_inputs(args.chain, args.registry)
    try:
        ledger, events = audit(blocks, registry)
    except ChainValidationError as exc:
        raise ValidationFailure(f"invalid: height={exc.height} code={exc.code.value}") from None

    lines = [f"# audit height={ledger.as_of_height} head={blocks[-1].hash.hex()} events={len(events)}"]
    lines += [f"event {ev.line()}" for ev in events]
    lines += [f"credit {hex_id} {credit}" for hex_id, credit in ledger.table()]
    report = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(report, encoding="ascii", newline="\n")
    else:
        sys.stdout.write(report)

    if fold_events(events) != dict(ledger.credits):
        _err("event log does not fold to the replayed credit table")
        return EXIT_MISMATCH
    metrics = Path(args.metrics) if args.metrics else Path(args.chain).with_name("metrics.txt")
    if metrics.is_file():
        snapshot = _read_snapshot(metrics)
        live = {f"credit.{k}": str(v) for k, v in ledger.table()}
        live["ledger.height"] = str(ledger.as_of_height)
        if snapshot and snapshot != live:
            bad = sorted(k for k in set(snapshot) | set(live) if snapshot.get(k) != live.get(k))
            _err(f"credit snapshot mismatch against {metrics}: {', '.join(bad[:5])}")
            return EXIT_MISMATCH
        print(f"# snapshot match: {metrics}", file=sys.stderr)
    return EXIT_OK


def cmd_enroll(args: argparse.Namespace) -> int:
    if args.size is None or args.size < 1:
        raise UsageError("--size must be at least 1")
    if args.seed is None or not 0 <= args.seed < 2**64:
        raise UsageError("--seed must be a 64-bit unsigned integer")
    fleet = Fleet(args.seed, args.size)
    if args.out:
        write_registry(args.out, fleet.registry, args.seed)
        print(f"enrolled {len(fleet)} identities seed={args.seed} -> {args.out}")
    else:
        sys.stdout.write(dumps_registry(fleet.registry, args.seed))
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse exits 2 by default; usage errors are 1 here
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bbc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="execute a scenario and write its output tree")
    p.add_argument("--config", required=True, metavar="PATH")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--golden", metavar="PATH", help="run log file or output directory to byte-compare")
    p.add_argument("--registry", metavar="PATH", help="fleet registry from 'bbc enroll'")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="validate a chain store")
    p.add_argument("chain", metavar="CHAIN")
    p.add_argument("--registry", required=True, metavar="PATH")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("audit", help="replay credits from a chain store")
    p.add_argument("chain", metavar="CHAIN")
    p.add_argument("--registry", required=True, metavar="PATH")
    p.add_argument("--metrics", metavar="PATH", help="metrics file with a credit snapshot")
    p.add_argument("--out", metavar="PATH", help="write the report here instead of stdout")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("enroll", help="generate a synthetic fleet registry")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(func=cmd_enroll)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        _err(str(exc))
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    except ValidationFailure as exc:
        _err(str(exc))
        return EXIT_INVALID
    except Exception:  # noqa: BLE001
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
