"""Acceptance suite: one test per criterion, each printing its pass/fail line.

The whole suite is computed once per session (in parallel when more than one
CPU is available); set ``MEISSNER_LAB_JOBS`` to override the worker count.
"""

import os

import pytest

from meissner_lab.acceptance import ALL, run_acceptance


def _jobs() -> int:
    env = os.environ.get("MEISSNER_LAB_JOBS")
    if env:
        return max(1, int(env))
    return max(1, min(4, os.cpu_count() or 1))


@pytest.fixture(scope="session")
def results(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance")
    res = run_acceptance(seed=0, jobs=_jobs(), out_dir=out)
    return {r.number: r for r in res}


def _report(results, n, capsys):
    r = results[n]
    with capsys.disabled():
        print("\n" + r.line())
    return r


def test_all_criteria_present(results):
    assert sorted(results) == list(ALL) == list(range(1, 16))


@pytest.mark.parametrize("n", range(1, 15))
def test_criterion(results, n, capsys):
    r = _report(results, n, capsys)
    assert r.passed, r.line()


def test_criterion_15_determinism(results, capsys):
    r = _report(results, 15, capsys)
    assert r.passed, r.line()
    # an independent rerun of a deterministic unit reproduces its table bodies
    again = run_acceptance(only=[1], seed=0)[0]
    first = results[1]
    assert sorted(again.tables) == sorted(first.tables)
    for stem in first.tables:
        assert again.tables[stem].body() == first.tables[stem].body()
