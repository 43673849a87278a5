import numpy as np
import pytest
from hypothesis import settings

from wbench.corpus import SynthCorpus
from wbench.imagecore import RGB, ImageBuf

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def rand_image(seed: int, h: int = 32, w: int = 32, lattice: bool = True) -> ImageBuf:
    rng = np.random.default_rng(seed)
    data = rng.random((h, w, 3))
    if lattice:
        data = np.floor(data * 255 + 0.5) / 255
    return ImageBuf(data, RGB)


@pytest.fixture(scope="session")
def small_corpus():
    return list(SynthCorpus(4, 256, seed=123))


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "ACCEPTANCE_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
