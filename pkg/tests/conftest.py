import os
import sys

import numpy as np
import pytest
import torch

sys.path.insert(0, os.path.dirname(__file__))

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def corpus_dirs(tmp_path_factory):
    """Small WAV inventory shared by dataset/CLI tests."""
    from synthmat import make_corpus

    root = tmp_path_factory.mktemp("corpus")
    clean_dir, noise_dir = make_corpus(str(root), n_clean=6, n_noise=3, seconds_each=5.0, seed=7)
    return clean_dir, noise_dir


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
