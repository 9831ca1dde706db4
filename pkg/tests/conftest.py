import json
import sys
from pathlib import Path

import pytest

TESTS_DIR = Path(__file__).resolve().parent
FIXTURES = TESTS_DIR / "fixtures"

# lets test modules import derbuild regardless of invocation style
if str(TESTS_DIR) not in sys.path:
    sys.path.insert(0, str(TESTS_DIR))

# filled by test_acceptance; rendered after the run so the verdict per
# criterion is visible even when every test passes
ACCEPTANCE_RESULTS: list[tuple[int, str, bool]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num, name, passed in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(
            f"criterion {num} ({name}): {'PASS' if passed else 'FAIL'}"
        )


def fixture_bytes(name: str) -> bytes:
    return (FIXTURES / name).read_bytes()


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def manifest() -> dict:
    return json.loads((FIXTURES / "ground_truth.json").read_text())


@pytest.fixture(scope="session")
def nexus6_leaf_der() -> bytes:
    return fixture_bytes("nexus6_leaf.der")


@pytest.fixture(scope="session")
def s7_leaf_der() -> bytes:
    return fixture_bytes("s7_leaf.der")


@pytest.fixture(scope="session")
def nexus6_image() -> bytes:
    return fixture_bytes("nexus6_tz.bin")


@pytest.fixture(scope="session")
def s7_image() -> bytes:
    return fixture_bytes("s7_tz.mbn")
