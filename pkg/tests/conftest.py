import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from clangvqa import numkit as nk

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")


@pytest.fixture(autouse=True)
def float64_mode():
    with nk.precision("float64"):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_adjacency(rng, n):
    """Symmetric nonnegative weights with a unit diagonal."""
    A = rng.uniform(0.0, 1.0, (n, n))
    A = (A + A.T) / 2
    np.fill_diagonal(A, 1.0)
    return A


@pytest.fixture(scope="session")
def corpus():
    """10,000 generated samples at the standard settings, shared across modules."""
    from clangvqa.data_synth import DatasetSpec, build_vocabulary, iter_samples

    spec = DatasetSpec(num_samples=10_000, seed=7)
    return spec, build_vocabulary(spec), list(iter_samples(spec))


@pytest.fixture(scope="session")
def small_dataset():
    from clangvqa.data_synth import DatasetSpec, generate_dataset

    return generate_dataset(DatasetSpec(num_samples=80, seed=3))


@pytest.fixture(scope="session")
def tiny_dataset():
    """Small graphs (M=48) so that training tests finish in seconds."""
    from clangvqa.data_synth import DatasetSpec, generate_dataset

    return generate_dataset(DatasetSpec(num_samples=48, K=2, L=6, N=4, num_val=16, seed=5))


@pytest.fixture
def tiny_config():
    from clangvqa.trainer import TrainConfig

    return TrainConfig(d=16, P=2, batch_size=8, epochs=2, seed=3)


ACCEPTANCE_LINES: dict[str, str] = {}
ACCEPTANCE_NOTES: list[str] = []


@pytest.fixture(scope="session")
def verdict():
    """Record a criterion's pass/fail line, then assert on it."""

    def record(name: str, ok: bool, detail: str) -> None:
        line = f"{name}: {'PASS' if ok else 'FAIL'} | {detail}"
        ACCEPTANCE_LINES[name] = line
        print(line)
        assert ok, line

    record.note = ACCEPTANCE_NOTES.append
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[name])
    for note in ACCEPTANCE_NOTES:
        terminalreporter.write_line(f"  {note}")
