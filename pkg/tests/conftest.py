import json
from pathlib import Path

import numpy as np
import pytest

from rsinfer import cli
from rsinfer.io import read_atoms, read_samples

# (criterion, passed, detail) rows filled by test_acceptance
ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")


class DemoRun:
    """Artifacts of one ``truss-demo`` invocation."""

    def __init__(self, root: Path):
        self.root = root

    def meta(self, case: str, name: str = "samples.txt") -> dict:
        return json.loads((self.root / case / f"{name}.meta.json").read_text())

    def atoms(self, case: str):
        return read_atoms(self.root / case / "atoms.csv")[0]

    def samples(self, case: str):
        return read_samples(self.root / case / "samples.txt")

    def config(self, case: str):
        from rsinfer.io import load_run_config

        return load_run_config(self.root / f"config_{case}.json")

    def cdf_rows(self, case: str) -> dict:
        import csv

        with open(self.root / case / "cdf_bounds.csv") as fh:
            rows = list(csv.DictReader(fh))
        out = {}
        for name in {r["name"] for r in rows}:
            keys = ("x", "prior_lower", "prior_upper", "posterior_lower", "posterior_upper")
            out[name] = np.array([[float(r[k]) for k in keys] for r in rows if r["name"] == name])
        return out


@pytest.fixture(scope="session")
def demo(tmp_path_factory) -> DemoRun:
    root = tmp_path_factory.mktemp("demo")
    assert cli.main(["truss-demo", "--out", str(root)]) == 0
    return DemoRun(root)
