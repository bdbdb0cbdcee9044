import pytest

from sipthermal.stackmodel import stack_from_layers


def slab(t_um=400.0, k=10.0, size_mm=1.0, htc=1000.0, bottom_htc=0.0):
    return stack_from_layers([("slab", size_mm, size_mm, t_um, k)], top_htc=htc, bottom_htc=bottom_htc)


def three_layer(size_mm=1.0, htc=2500.0, bottom_htc=200.0):
    """Spreader over a thin low-k bond over an active die, all the same footprint."""
    return stack_from_layers(
        [("die", size_mm, size_mm, 50.0, 140.0), ("bond", size_mm, size_mm, 10.0, 1.5),
         ("lid", size_mm, size_mm, 200.0, 400.0)],
        top_htc=htc, bottom_htc=bottom_htc, name="three",
    )


@pytest.fixture
def slab_stack():
    return slab()


@pytest.fixture
def three_stack():
    return three_layer()


_criteria: dict[int, tuple[bool, str]] = {}


def record(n: int, ok: bool, detail: str) -> None:
    _criteria[n] = (ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        ok, detail = _criteria[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
