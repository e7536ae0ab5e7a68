"""Command line front end: run scripts, check equation balance, serve sessions.

Exit codes are the machine contract: 0 pass, 1 failed asserts or an
unbalanced equation, 2 parse error, 3 environment problem (busy port).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources

from . import chemistry
from .chemistry import FormulaError, parse_equation
from .scene import build_scene
from .script import ScriptError, ScriptRuntimeError, parse_script, run_script

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_PARSE = 2
EXIT_ENV = 3


def bundled_script(name: str) -> str:
    """Text of a shipped example script, e.g. "brown_ring.lab"."""
    return resources.files("vlab.labs").joinpath(name).read_text(encoding="utf-8")


def _cmd_run(args) -> int:
    try:
        with open(args.script, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE
    try:
        script = parse_script(text)
    except ScriptError as e:
        print(f"error: {args.script}:{e}", file=sys.stderr)
        return EXIT_PARSE

    world = build_scene(seed=args.seed)

    hook = None
    every = 0
    if args.snapshots:
        os.makedirs(args.snapshots, exist_ok=True)
        every = args.snapshot_every

        def hook(w):
            from .session import snapshot_dict
            path = os.path.join(args.snapshots, f"snapshot_{w.tick:07d}.json")
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(snapshot_dict(w), fh)

    try:
        report = run_script(script, world, snapshot_hook=hook, snapshot_every=every)
    except ScriptRuntimeError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL

    if args.hash:
        print(report.digest)
    else:
        out = report.to_json()
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(out + "\n")
        else:
            print(out)
    return EXIT_OK if report.passed else EXIT_FAIL


def _cmd_balance(args) -> int:
    try:
        lhs, rhs = parse_equation(args.equation)
    except FormulaError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE
    left = chemistry._tally(lhs)
    right = chemistry._tally(rhs)
    for sym in sorted(set(left) | set(right)):
        print(f"{sym}: {left.get(sym, 0)} -> {right.get(sym, 0)}")
    if left == right:
        print("BALANCED")
        return EXIT_OK
    print("UNBALANCED")
    return EXIT_FAIL


def _cmd_serve(args) -> int:
    from .session import replay_log, serve_forever

    if args.replay:
        try:
            digest = replay_log(args.replay)
        except (OSError, ValueError) as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_PARSE
        print(digest)
        return EXIT_OK

    port = args.port
    env_port = os.environ.get("VLAB_PORT")
    if env_port:
        port = int(env_port)
    try:
        serve_forever(port=port, seed=args.seed, record_path=args.record)
    except OSError as e:
        print(f"error: cannot bind port {port}: {e}", file=sys.stderr)
        return EXIT_ENV
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vlab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a protocol script headlessly")
    run.add_argument("script", help="path to a .lab script")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", help="write the report here instead of stdout")
    run.add_argument("--hash", action="store_true", help="print only the final digest")
    run.add_argument("--snapshots", help="dump periodic snapshots into this directory")
    run.add_argument("--snapshot-every", type=int, default=60)
    run.set_defaults(fn=_cmd_run)

    bal = sub.add_parser("balance", help="verify a chemical equation balances")
    bal.add_argument("equation", help='e.g. "2HNO3 + 3H2SO4 + 6FeSO4 -> 3Fe2(SO4)3 + 2NO + 4H2O"')
    bal.set_defaults(fn=_cmd_balance)

    srv = sub.add_parser("serve", help="serve a live session over websockets")
    srv.add_argument("--port", type=int, default=8787)
    srv.add_argument("--seed", type=int, default=0)
    srv.add_argument("--record", help="append applied commands to this log file")
    srv.add_argument("--replay", help="replay a recorded log headlessly and print the digest")
    srv.set_defaults(fn=_cmd_serve)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
