import shutil

import pytest

from vegcover.cli import main

TINY = [
    "--seed", "2",
    "--set", "simulate.grid_size=6", "--set", "simulate.wavelength_count=3", "--set", "simulate.date_count=4",
    "--set", "simulate.n_obs_per_type=2", "--set", "simulate.L=6", "--set", "simulate.M=6",
    "--set", "mcmc.n_burnin=20", "--set", "mcmc.n_keep=20",
]


@pytest.fixture(scope="session")
def tiny_sim(tmp_path_factory):
    """A 36-site synthetic data set written by the simulate command."""
    out = tmp_path_factory.mktemp("tiny") / "sim"
    assert main(["simulate", "--out", str(out), "--quiet", *TINY]) == 0
    return out


@pytest.fixture(scope="session")
def tiny_fit(tiny_sim, tmp_path_factory):
    """The tiny data set after ``fit --j-add 5``; returns the data directory."""
    work = tmp_path_factory.mktemp("tinyfit") / "sim"
    shutil.copytree(tiny_sim, work)
    assert main(["fit", "--config", str(work / "config.yaml"), "--j-add", "5", "--quiet"]) == 0
    return work


_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance(capsys):
    """Record and print one PASS/FAIL line for an acceptance criterion."""
    def report(number, title, ok, detail):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
