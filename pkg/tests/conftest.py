import pytest

from spagent.config import RunConfig

TINY = dict(
    n_train=2,
    n_val=1,
    n_test=2,
    dims=(32, 32, 32),
    organ_center=0.4,
    organ_radius=7.0,
    extent=16,
    pixel_pitch=1.0,
    hidden=(16, 16),
    demos_per_volume=2,
    il_epochs=2,
    rl_steps=120,
    warmup=32,
    capacity=500,
    val_interval=60,
    log_interval=40,
    eps_decay_steps=100,
)


@pytest.fixture
def tiny_cfg(tmp_path) -> RunConfig:
    return RunConfig(out_dir=str(tmp_path / "run"), dataset_dir=str(tmp_path / "data"), **TINY)


def tiny_config_text(**extra) -> str:
    items = dict(TINY, **extra)
    lines = ["# tiny run used by the test suite"]
    for k, v in items.items():
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


# acceptance results, one line per criterion, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
