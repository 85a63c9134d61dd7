import numpy as np
import pytest

from noisespec.dataset import generate_dataset, load_corpus
from noisespec.network import DESK_CONFIG, build_network, save_weights, train


@pytest.fixture(scope="session")
def shared_corpus_dir(tmp_path_factory):
    """A small corpus shared by the I/O-oriented test modules."""
    out = tmp_path_factory.mktemp("shared") / "corpus"
    generate_dataset(out, 300, noise_sigma=0.03, seed=101)
    return out


@pytest.fixture(scope="session")
def shared_corpus(shared_corpus_dir):
    return load_corpus(shared_corpus_dir)


@pytest.fixture(scope="session")
def shared_model(shared_corpus):
    """A briefly trained model; adequate for plumbing tests, not accuracy."""
    weights = build_network(DESK_CONFIG, seed=0)
    weights, _ = train(weights, shared_corpus, epochs=4, seed=0)
    return weights


@pytest.fixture(scope="session")
def shared_model_path(shared_model, tmp_path_factory):
    path = tmp_path_factory.mktemp("model") / "model.bin"
    save_weights(shared_model, path)
    return path
