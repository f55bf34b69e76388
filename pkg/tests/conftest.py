import pytest

# Small but complete configuration for CLI smoke runs and the determinism check.
SMOKE_TOML = """\
seed = 11

[expert]
num_runs = 6
train_runs = 5

[train]
epochs = 2
batch_size = 16
conv_filters = [8, 8, 8]
dense_units = [16, 8]

[run]
trials = 2
max_time = 30.0
"""


@pytest.fixture
def smoke_config(tmp_path):
    p = tmp_path / "smoke.toml"
    p.write_text(SMOKE_TOML)
    return p


# Acceptance results, filled in by tests/test_acceptance.py: {id: (passed, title, detail)}
ACCEPTANCE: dict = {}


@pytest.fixture
def record():
    def _record(key, title, passed, detail=""):
        ACCEPTANCE[key] = (bool(passed), title, detail)
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        passed, title, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {key}  {title}"
                                    + (f"  [{detail}]" if detail else ""))
