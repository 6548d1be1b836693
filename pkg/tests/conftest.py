from pathlib import Path

import numpy as np
import pytest
import torch

from gnm.scenegen.digits import as_bank, fallback_digit_banks

ROOT = Path(__file__).resolve().parents[1]
CLASSIFIER = ROOT / "artifacts" / "patch_classifier.pt"

_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line for an acceptance criterion, then assert it."""
    lines = request.config.stash[_ACCEPTANCE_KEY]

    def record(number: int, name: str, ok: bool, detail: str = ""):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
        lines.append((number, line))
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def digit_banks():
    (tr, ytr), (te, yte) = fallback_digit_banks()
    return as_bank(tr, ytr), as_bank(te, yte, "test")


@pytest.fixture(scope="session")
def bank(digit_banks):
    return digit_banks[0]


@pytest.fixture(scope="session")
def classifier():
    from gnm.eval.classifier import load_classifier
    if not CLASSIFIER.is_file():
        pytest.skip("patch classifier artifact not built (scripts/train_patch_classifier.py)")
    return load_classifier(CLASSIFIER)


@pytest.fixture
def torch_seed():
    torch.manual_seed(0)
    np.random.seed(0)
