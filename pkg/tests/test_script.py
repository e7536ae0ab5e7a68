"""Protocol language: parsing, positioned errors, interpretation, reports."""

import json

import pytest

from vlab.scene import build_scene
from vlab.script import (Script, ScriptError, ScriptRuntimeError, VERBS,
                         parse_script, run_script)


def test_parse_every_verb():
    text = """\
# a comment line
grab tube
move tube 0 0.1 0 over 30
tilt tube -45.5 over 10
release_hand
pipette_press
pipette_release
add tube water 2.5 poured
wait 60
assert verdict no_reaction
assert count tube >= 0
assert spills == 0
"""
    script = parse_script(text)
    verbs = [s.verb for s in script.statements]
    assert verbs == ["grab", "move", "tilt", "release_hand", "pipette_press",
                     "pipette_release", "add", "wait", "assert", "assert", "assert"]
    assert script.statements[0].line == 2


def test_render_reparse_round_trip():
    text = "grab tube\nmove tube 0 0.1 0 over 30\ntilt tube 45 over 10\n" \
           "add tube water 2.5 poured\nwait 60\nassert spills == 0\n"
    script = parse_script(text)
    again = parse_script(script.render())
    assert [s.verb for s in again.statements] == [s.verb for s in script.statements]
    assert [s.args for s in again.statements] == [s.args for s in script.statements]


def test_unknown_verb_reports_position_and_expectations():
    with pytest.raises(ScriptError) as e:
        parse_script("tlit tube 45 over 10")
    assert e.value.line == 1 and e.value.col == 1
    assert set(e.value.expected) == set(VERBS)
    assert "1:1" in str(e.value)


def test_error_line_numbers_skip_blanks_and_comments():
    with pytest.raises(ScriptError) as e:
        parse_script("wait 10\n\n# comment\n   bogus\n")
    assert e.value.line == 4 and e.value.col == 4


@pytest.mark.parametrize("line", [
    "grab",
    "move tube 0 0 0 for 10",
    "move tube 0 x 0 over 10",
    "move tube 0 0 0 over 0",
    "tilt tube 190 over 10",
    "tilt tube -181 over 10",
    "tilt tube 45 over nope",
    "add tube water -1 poured",
    "add tube water 1 sideways",
    "wait -5",
    "wait",
    "assert",
    "assert verdict maybe",
    "assert count tube ~ 3",
    "assert spills >< 1",
])
def test_malformed_statements_raise_script_error(line):
    with pytest.raises(ScriptError):
        parse_script(line)


def test_tilt_range_inclusive_endpoints():
    parse_script("tilt tube 180 over 1\ntilt tube -180 over 1")


def test_run_script_tick_budget():
    world = build_scene(seed=0, contents={})
    report = run_script(parse_script("wait 30\ngrab tube\n"
                                     "move tube 0 0.05 0 over 20\nwait 10"), world)
    assert report.final_tick == 60
    assert world.tick == 60


def test_failing_assert_marks_report_but_continues():
    world = build_scene(seed=0, contents={})
    report = run_script(parse_script(
        "assert verdict brown_ring\nwait 5\nassert spills == 0"), world)
    assert not report.passed
    assert [a.passed for a in report.asserts] == [False, True]
    assert report.final_tick == 5  # execution did not stop at the failure


def test_add_shortcut_is_flagged_in_report():
    world = build_scene(seed=0, contents={})
    report = run_script(parse_script("add tube water 1 poured"), world)
    assert report.used_add_shortcut
    clean = run_script(parse_script("wait 1"), build_scene(seed=0, contents={}))
    assert not clean.used_add_shortcut


def test_report_json_is_machine_readable():
    world = build_scene(seed=9, contents={})
    report = run_script(parse_script("wait 2\nassert spills <= 0"), world)
    data = json.loads(report.to_json())
    assert data["seed"] == 9
    assert data["passed"] is True
    assert data["final_tick"] == 2
    assert len(data["digest"]) == 64


def test_runtime_error_names_the_line():
    world = build_scene(seed=0, contents={})
    with pytest.raises(ScriptRuntimeError, match="line 2"):
        run_script(parse_script("wait 1\ngrab flask"), world)


def test_move_before_grab_is_a_runtime_error():
    world = build_scene(seed=0, contents={})
    with pytest.raises(ScriptRuntimeError):
        run_script(parse_script("move tube 0 0.1 0 over 10"), world)


def test_count_assert_on_unknown_vessel_fails_not_crashes():
    world = build_scene(seed=0, contents={})
    report = run_script(parse_script("assert count flask == 0"), world)
    assert not report.passed
