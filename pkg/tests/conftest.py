import pytest

from stemflow.batching import Dataset
from stemflow.corpus import CorpusConfig, build_corpus
from stemflow.training import TrainConfig, init_state, save_checkpoint


@pytest.fixture(scope="session")
def corpus_manifest(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    return build_corpus(CorpusConfig(num_compositions=48, seed=11), out)


@pytest.fixture(scope="session")
def dataset(corpus_manifest):
    return Dataset.load(corpus_manifest)


@pytest.fixture(scope="session")
def untrained_checkpoint(tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "untrained.sfck"
    save_checkpoint(path, init_state(TrainConfig(steps=1, seed=0)))
    return path


# Criterion labels printed as one pass/fail line each after the run.
ACCEPTANCE_LABELS = {}
_acceptance_results = {}


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    for nodeid_part, label in ACCEPTANCE_LABELS.items():
        if nodeid_part in report.nodeid:
            _acceptance_results[label] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_acceptance_results, key=lambda s: int(s[1:].split()[0])):
        outcome = _acceptance_results[label]
        word = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{label}: {word}")
