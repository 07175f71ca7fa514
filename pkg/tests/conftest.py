import pytest

from ctxprior.synth import SceneWorld, SynthConfig, generate_expectation_dataset


@pytest.fixture(scope="session")
def small_world():
    cfg = SynthConfig(n_scenes=200, n_detection_scenes=400, seed=11)
    return SceneWorld(cfg)


@pytest.fixture(scope="session")
def small_expectations(small_world):
    return generate_expectation_dataset(small_world.config, small_world)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance") or __import__("sys").modules.get("tests.test_acceptance")
    if mod is None:
        return
    lines = [mod.RESULTS[k] for k in sorted(mod.RESULTS)]
    for n in range(1, 11):
        if n not in mod.RESULTS:
            lines.insert(n - 1, f"criterion {n:>2}: SKIP  not run")
    terminalreporter.section("acceptance criteria")
    for line in lines:
        terminalreporter.write_line(line)
