import numpy as np
import pytest

from convhash.dataset import load_vocalizations, read_manifest
from convhash.frontend import CsfExtractor
from convhash.model import ConvexHashClassifier
from convhash.synth import SynthSpec, generate

ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """Three synthetic classes, ten vocalizations each."""
    out = tmp_path_factory.mktemp("corpus")
    generate(SynthSpec(q=3, vocs_per_class=10, seed=3), out)
    return out / "manifest.csv"


@pytest.fixture(scope="session")
def small_extractor():
    return CsfExtractor(proj_dim=120, random_state=1)


@pytest.fixture(scope="session")
def small_vocs(small_corpus, small_extractor):
    return load_vocalizations(read_manifest(small_corpus), small_extractor)


def small_classifier(**kw):
    params = dict(n_archetypes=6, n_medoids=4, max_iter=30, random_state=2)
    params.update(kw)
    return ConvexHashClassifier(**params)


@pytest.fixture(scope="session")
def small_model(small_vocs):
    clf = small_classifier()
    clf.fit([v.csfs for v in small_vocs], [v.label for v in small_vocs])
    return clf
