import json
from pathlib import Path

import numpy as np
import pytest

from visinstruct.backends import BackendSet, Capability, MockBackend, MockScript, ToyImageGenerator
from visinstruct.runtime import DiffusionRuntime

DATA = Path(__file__).resolve().parents[1] / "src" / "visinstruct" / "data"


@pytest.fixture(scope="session")
def runtime():
    return DiffusionRuntime.create()


@pytest.fixture(scope="session")
def small_runtime():
    # T=10 keeps engine tests fast; the loop structure is the same
    return DiffusionRuntime.create(timesteps=10)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def make_backends(runtime, entries=(), strict=False, toy=True):
    """Every capability on one shared script; ImageGenerator on the toy model unless ``toy`` is False."""
    script = MockScript.from_dict({"strict": strict, "entries": list(entries)})
    backends = {c: MockBackend(c, script) for c in Capability}
    if toy:
        backends[Capability.IMAGE_GENERATOR] = ToyImageGenerator(runtime)
    return BackendSet(backends), script


@pytest.fixture
def sample_corpus_path():
    return DATA / "sample_tasks.json"


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return path


class Spy:
    """Wraps a backend and keeps every request it receives."""

    def __init__(self, inner):
        self.inner = inner
        self.capability = inner.capability
        self.kind = inner.kind
        self.requests = []

    def invoke(self, request):
        self.requests.append(request)
        return self.inner.invoke(request)


def spy_on(backends, capability):
    from visinstruct.backends import Capability as Cap

    spy = Spy(backends.backends[Cap(capability)])
    backends.backends[Cap(capability)] = spy
    return spy


# -- acceptance summary ----------------------------------------------------------

ACCEPTANCE = {}  # criterion number -> (passed, label, detail)
_SESSION = {}


def pytest_sessionstart(session):
    import time

    _SESSION["t0"] = time.perf_counter()


def pytest_terminal_summary(terminalreporter):
    import time

    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, label, detail = ACCEPTANCE[n]
        tr.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {label}  [{detail}]")
    wall = time.perf_counter() - _SESSION.get("t0", time.perf_counter())
    tr.write_line(f"suite wall-clock {wall:.1f} s (budget 180 s): {'PASS' if wall < 180 else 'FAIL'}")
