from __future__ import annotations

import functools

import pytest

from otcurvature import config as cf
from otcurvature import transport as tr

GALLERY = ("segments", "segments-kappa-zero", "cylinder-endpoint", "cylinder-interior",
           "sphere-arc", "sphere-cap", "hyperbolic", "static")

# acceptance outcomes, filled by tests/test_acceptance.py: number -> list of (ok, detail)
CRITERIA: dict[int, list[tuple[bool, str]]] = {}
TITLES: dict[int, str] = {}


@functools.lru_cache(maxsize=None)
def gallery_config(name: str) -> cf.ScenarioConfig:
    return cf.load(cf.resolve(f"gallery:{name}"))


@functools.lru_cache(maxsize=None)
def gallery_flow(name: str, particles: int | None = None) -> tr.InterpolationResult:
    cfg = gallery_config(name)
    if particles is not None:
        import dataclasses

        cfg = dataclasses.replace(cfg, particles=particles)
    return tr.flow(cfg.scenarios())


@pytest.fixture(scope="session")
def flows():
    return gallery_flow


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        parts = CRITERIA[n]
        ok = all(p for p, _ in parts)
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {TITLES.get(n, '')}: {detail}")
