"""Line-oriented protocol language driving the bench headlessly.

One statement per line, `#` comments, whitespace tolerant. The same verb
vocabulary is what interactive clients send over the wire. Scripts are
linear by design: no loops, no variables.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from . import chemistry
from .world import World

VERBS = ("grab", "release_hand", "move", "tilt", "pipette_press",
         "pipette_release", "add", "wait", "assert")

ASSERT_KINDS = ("verdict", "count", "spills")
OPS = {"==": lambda a, b: a == b, "!=": lambda a, b: a != b,
       "<=": lambda a, b: a <= b, ">=": lambda a, b: a >= b,
       "<": lambda a, b: a < b, ">": lambda a, b: a > b}


class ScriptError(ValueError):
    """Positioned script syntax error (1-based line and column)."""

    def __init__(self, line: int, col: int, message: str, expected=()):
        self.line = line
        self.col = col
        self.expected = tuple(expected)
        hint = f"; expected one of: {', '.join(expected)}" if expected else ""
        super().__init__(f"{line}:{col}: {message}{hint}")


class ScriptRuntimeError(RuntimeError):
    pass


@dataclass(frozen=True)
class Statement:
    verb: str
    args: tuple
    line: int
    col: int

    def render(self) -> str:
        a = self.args
        if self.verb == "move":
            return f"move {a[0]} {a[1]:g} {a[2]:g} {a[3]:g} over {a[4]}"
        if self.verb == "tilt":
            return f"tilt {a[0]} {a[1]:g} over {a[2]}"
        if self.verb == "add":
            return f"add {a[0]} {a[1]} {a[2]:g} {a[3]}"
        if self.verb == "wait":
            return f"wait {a[0]}"
        if self.verb == "grab":
            return f"grab {a[0]}"
        if self.verb == "assert":
            return "assert " + " ".join(str(x) for x in a)
        return self.verb


@dataclass
class Script:
    statements: list
    source: str = ""

    def render(self) -> str:
        return "\n".join(s.render() for s in self.statements) + "\n"


def _int_arg(tok, line, col, minimum=None):
    try:
        v = int(tok)
    except ValueError:
        raise ScriptError(line, col, f"expected integer, got {tok!r}") from None
    if minimum is not None and v < minimum:
        raise ScriptError(line, col, f"integer must be >= {minimum}, got {v}")
    return v


def _float_arg(tok, line, col):
    try:
        return float(tok)
    except ValueError:
        raise ScriptError(line, col, f"expected number, got {tok!r}") from None


def parse_script(text: str) -> Script:
    if not isinstance(text, str):
        text = str(text)
    statements = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0]
        toks = line.split()
        if not toks:
            continue
        col = raw.index(toks[0]) + 1
        verb = toks[0]
        args = toks[1:]

        def need(n, usage):
            if len(args) != n:
                raise ScriptError(lineno, col, f"{verb} needs {usage}")

        if verb == "grab":
            need(1, "an object name")
            st = Statement("grab", (args[0],), lineno, col)
        elif verb == "release_hand":
            need(0, "no arguments")
            st = Statement("release_hand", (), lineno, col)
        elif verb == "move":
            if len(args) != 6 or args[4] != "over":
                raise ScriptError(lineno, col, "move needs: name x y z over ticks")
            xyz = tuple(_float_arg(a, lineno, col) for a in args[1:4])
            ticks = _int_arg(args[5], lineno, col, minimum=1)
            st = Statement("move", (args[0], *xyz, ticks), lineno, col)
        elif verb == "tilt":
            if len(args) != 4 or args[2] != "over":
                raise ScriptError(lineno, col, "tilt needs: name degrees over ticks")
            deg = _float_arg(args[1], lineno, col)
            if not -180.0 <= deg <= 180.0:
                raise ScriptError(lineno, col, f"tilt degrees out of [-180, 180]: {deg:g}")
            ticks = _int_arg(args[3], lineno, col, minimum=1)
            st = Statement("tilt", (args[0], deg, ticks), lineno, col)
        elif verb == "pipette_press":
            need(0, "no arguments")
            st = Statement("pipette_press", (), lineno, col)
        elif verb == "pipette_release":
            need(0, "no arguments")
            st = Statement("pipette_release", (), lineno, col)
        elif verb == "add":
            need(4, "vessel species grams method")
            grams = _float_arg(args[2], lineno, col)
            if grams <= 0:
                raise ScriptError(lineno, col, "add amount must be positive")
            if args[3] not in chemistry.METHODS:
                raise ScriptError(lineno, col, f"unknown method {args[3]!r}",
                                  expected=chemistry.METHODS)
            st = Statement("add", (args[0], args[1], grams, args[3]), lineno, col)
        elif verb == "wait":
            need(1, "a tick count")
            st = Statement("wait", (_int_arg(args[0], lineno, col, minimum=0),),
                           lineno, col)
        elif verb == "assert":
            st = _parse_assert(args, lineno, col)
        else:
            raise ScriptError(lineno, col, f"unknown verb {verb!r}", expected=VERBS)
        statements.append(st)
    return Script(statements, text)


def _parse_assert(args, lineno, col):
    if not args:
        raise ScriptError(lineno, col, "assert needs a predicate", expected=ASSERT_KINDS)
    kind = args[0]
    if kind == "verdict":
        if len(args) != 2 or args[1] not in (chemistry.BROWN_RING, chemistry.NO_REACTION,
                                             chemistry.INTERFERENCE):
            raise ScriptError(lineno, col, "assert verdict needs one of the verdicts",
                              expected=(chemistry.BROWN_RING, chemistry.NO_REACTION,
                                        chemistry.INTERFERENCE))
        return Statement("assert", ("verdict", args[1]), lineno, col)
    if kind == "count":
        if len(args) != 4 or args[2] not in OPS:
            raise ScriptError(lineno, col, "assert count needs: vessel op n",
                              expected=tuple(OPS))
        return Statement("assert", ("count", args[1], args[2],
                                    _int_arg(args[3], lineno, col)), lineno, col)
    if kind == "spills":
        if len(args) != 3 or args[1] not in OPS:
            raise ScriptError(lineno, col, "assert spills needs: op n",
                              expected=tuple(OPS))
        return Statement("assert", ("spills", args[1],
                                    _int_arg(args[2], lineno, col)), lineno, col)
    raise ScriptError(lineno, col, f"unknown assert kind {kind!r}", expected=ASSERT_KINDS)


@dataclass
class AssertResult:
    line: int
    text: str
    passed: bool
    actual: str


@dataclass
class Report:
    dt: float
    seed: int
    statements: list = field(default_factory=list)   # rendered statements, in order
    asserts: list = field(default_factory=list)      # AssertResult
    events: list = field(default_factory=list)       # TransferEvents as dicts
    verdict: str = chemistry.NO_REACTION
    digest: str = ""
    final_tick: int = 0
    used_add_shortcut: bool = False

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.asserts)

    def to_dict(self) -> dict:
        return {
            "dt": self.dt,
            "seed": self.seed,
            "statements": self.statements,
            "asserts": [vars(a) for a in self.asserts],
            "events": self.events,
            "verdict": self.verdict,
            "digest": self.digest,
            "final_tick": self.final_tick,
            "used_add_shortcut": self.used_add_shortcut,
            "passed": self.passed,
        }

    def to_json(self, indent=2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def apply_statement(world: World, st: Statement) -> int:
    """Apply one statement; returns how many ticks it consumes."""
    v, a = st.verb, st.args
    if v == "grab":
        try:
            world.grab(a[0])
        except KeyError as e:
            raise ScriptRuntimeError(f"line {st.line}: {e.args[0]}") from None
        return 0
    if v == "release_hand":
        world.release_hand()
        return 0
    if v == "move":
        try:
            world.command_move(a[0], a[1:4], a[4])
        except (KeyError, RuntimeError) as e:
            raise ScriptRuntimeError(f"line {st.line}: {e}") from None
        return a[4]
    if v == "tilt":
        try:
            world.command_tilt(a[0], a[1], a[2])
        except (KeyError, RuntimeError) as e:
            raise ScriptRuntimeError(f"line {st.line}: {e}") from None
        return a[2]
    if v == "pipette_press":
        world.press_bulb()
        return 0
    if v == "pipette_release":
        world.release_pipette()
        return 0
    if v == "add":
        try:
            world.add_to_mixture(a[0], a[1], a[2], a[3])
        except KeyError as e:
            raise ScriptRuntimeError(f"line {st.line}: {e.args[0]}") from None
        return 0
    if v == "wait":
        return a[0]
    raise AssertionError(f"unhandled verb {v}")


def check_assert(world: World, st: Statement) -> AssertResult:
    a = st.args
    if a[0] == "verdict":
        actual = world.refresh_verdict()
        ok = actual == a[1]
    elif a[0] == "count":
        actual = len(world.particles_of(a[1])) if a[1] in world.vessels else -1
        ok = OPS[a[2]](actual, a[3])
    else:  # spills
        actual = world.spill_count
        ok = OPS[a[1]](actual, a[2])
    return AssertResult(st.line, st.render(), ok, str(actual))


def run_script(script: Script, world: World,
               snapshot_hook=None, snapshot_every: int = 0) -> Report:
    """Interpret a parsed script against the world, tick by tick.

    A failing assert marks the report failed but does not halt execution.
    `snapshot_hook(world)` is invoked every `snapshot_every` ticks when set.
    """
    report = Report(dt=world.dt, seed=world.rng_seed)

    def run_ticks(n):
        for _ in range(n):
            world.step()
            if snapshot_hook and snapshot_every and world.tick % snapshot_every == 0:
                snapshot_hook(world)

    for st in script.statements:
        report.statements.append(st.render())
        if st.verb == "assert":
            report.asserts.append(check_assert(world, st))
            continue
        if st.verb == "add":
            report.used_add_shortcut = True
        ticks = apply_statement(world, st)
        run_ticks(ticks)

    report.events = [vars(e) for e in world.events]
    report.verdict = world.refresh_verdict()
    report.digest = world.digest()
    report.final_tick = world.tick
    return report
