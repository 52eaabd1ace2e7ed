import functools

import pytest
from hypothesis import HealthCheck, settings

from infbend import grid as G
from infbend import surface as S
from infbend.asymptotic import build_field

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("default")


@functools.lru_cache(maxsize=None)
def surface_setup(name, N):
    """(definition, grid, jet, forms, field) for a catalogue surface."""
    sd = S.get_surface(name)
    g = G.build_domain(sd.region, N)
    jet = S.eval_jet(sd, g)
    forms = S.fundamental_forms(jet)
    return sd, g, jet, forms, build_field(forms)


@functools.lru_cache(maxsize=None)
def disc_grid(N, radius=1.0):
    return G.build_domain(G.disc(radius), N)


@pytest.fixture
def setup():
    return surface_setup


@functools.lru_cache(maxsize=None)
def pipeline_stages(surface, N, k=2, seed="one"):
    """(config, analysis, integral, solve, bend) from the staged pipeline, nothing written."""
    from infbend import pipeline as PL

    cfg = PL.RunConfig(surface=surface, grid=N, k=k, seed=seed)
    an = PL.analyze(cfg)
    it = PL.integral(an, cfg)
    sv = PL.solve(an, it, cfg)
    return cfg, an, it, sv, PL.bend(an, sv, cfg)


# acceptance summary: one line per criterion

_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and not rep.failed):
        return
    detail = dict(item.user_properties).get("detail", "")
    _CRITERIA[mark.args[0]] = (rep.passed, mark.args[1], detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for key in sorted(_CRITERIA, key=lambda k: int(k[1:])):
        ok, title, detail = _CRITERIA[key]
        line = f"{'PASS' if ok else 'FAIL'} {key:>3} {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
