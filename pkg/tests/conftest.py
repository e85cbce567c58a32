import pytest

from vadsphere.data import Split, synthesize_dataset

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def small_synth():
    ds, embed, offset = synthesize_dataset(96, feat_dim=6, frames=5, noise=0.05, seed=3)
    return ds


@pytest.fixture(scope="session")
def small_splits(small_synth):
    return small_synth.subset(Split.TRAIN), small_synth.subset(Split.VAL)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
