import csv
import json
from pathlib import Path

import numpy as np
import pytest

from snn_forge import dataio
from snn_forge.dataio import Dataset

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "data"
EXPERIMENTS = ROOT / "experiments"
WBC_MANIFEST = DATA / "wbc" / "manifest.json"


@pytest.fixture
def and_data():
    return Dataset([[0, 0], [0, 1], [1, 0], [1, 1]], [0, 0, 0, 1], ["a", "b"], name="AND")


@pytest.fixture(scope="session")
def wbc_raw():
    return dataio.load_manifest(WBC_MANIFEST)


@pytest.fixture(scope="session")
def wbc(wbc_raw):
    return dataio.prepare(wbc_raw)


def random_dataset(rng, N, n, name="rand"):
    X = rng.uniform(0, 1, (N, n))
    y = (rng.uniform(size=N) < 0.5).astype(float)
    return Dataset(X, y, [f"x{j}" for j in range(n)], name=name)


@pytest.fixture
def toy_manifest(tmp_path):
    """60 rows, 14 features, a few missing cells: wide enough to exercise feature reduction."""
    rng = np.random.default_rng(0)
    n = 14
    X = rng.normal(size=(60, n))
    y = (X[:, 0] + X[:, 3] > 0)
    with (tmp_path / "toy.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{j}" for j in range(n)] + ["label"])
        for i, (row, t) in enumerate(zip(X, y)):
            cells = [repr(float(v)) for v in row]
            if i % 11 == 2:
                cells[5] = "?"
            w.writerow(cells + ["yes" if t else "no"])
    man = {"name": "TOY", "csv": "toy.csv", "label_column": "label", "positive_token": "yes",
           "negative_token": "no", "missing_token": "?"}
    (tmp_path / "toy.json").write_text(json.dumps(man))
    return tmp_path / "toy.json"


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def record_criterion(number, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
