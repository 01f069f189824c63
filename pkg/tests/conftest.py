import random
import sys
from pathlib import Path

from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))

from oracles import random_schedule  # noqa: E402

settings.register_profile(
    "default",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("default")


@st.composite
def schedules(draw, dims=(1, 2), max_levels=3):
    dim = draw(st.sampled_from(dims))
    levels = draw(st.integers(1, max_levels))
    rng = draw(st.randoms(use_true_random=False))
    return random_schedule(rng, dim, levels)


def rationals(lo=-8, hi=8, den=4):
    return st.builds(
        lambda n, d: __import__("fractions").Fraction(n, d),
        st.integers(lo * den, hi * den),
        st.sampled_from([d for d in (1, 2, 4, 8) if d <= den]),
    )


@st.composite
def boxsets(draw, dim=None, q=4, window=4, max_boxes=4):
    from fractions import Fraction

    from cfforge.boxset import BoxSet, union_all

    dim = dim or draw(st.integers(1, 3))
    count = draw(st.integers(0, max_boxes))
    sets = []
    for _ in range(count):
        lo, hi = [], []
        for _ in range(dim):
            a = draw(st.integers(0, window * q - 1))
            b = draw(st.integers(a + 1, window * q))
            lo.append(Fraction(a, q))
            hi.append(Fraction(b, q))
        sets.append(BoxSet.from_box(lo, hi))
    return union_all(sets, dim)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        ok, detail = mod.RESULTS[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
