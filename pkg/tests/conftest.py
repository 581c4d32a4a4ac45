import os
import sys

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=30, deadline=None)
settings.register_profile("ci", max_examples=100, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def conv_reference(x, w, b=None, stride=1, padding=0, groups=1):
    """Direct nested-loop grouped cross-correlation in float64."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n, c_in, h, wd = x.shape
    c_out, cg, kh, kw = w.shape
    og = c_out // groups
    xp = np.zeros((n, c_in, h + 2 * padding, wd + 2 * padding))
    xp[:, :, padding : padding + h, padding : padding + wd] = x
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((n, c_out, ho, wo))
    for s in range(n):
        for o in range(c_out):
            g = o // og
            for yy in range(ho):
                for xx in range(wo):
                    acc = 0.0
                    for c in range(cg):
                        for i in range(kh):
                            for j in range(kw):
                                acc += w[o, c, i, j] * xp[s, g * cg + c, yy * stride + i, xx * stride + j]
                    out[s, o, yy, xx] = acc + (0.0 if b is None else float(b[o]))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = sorted(getattr(mod, "RESULTS", []))
    if results:
        terminalreporter.section("acceptance criteria")
        for _, line in results:
            terminalreporter.write_line(line)
