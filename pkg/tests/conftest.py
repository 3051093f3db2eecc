import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from synthcorpus import make_corpus  # noqa: E402

from docshift.pipeline import load_dataset  # noqa: E402


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    return make_corpus(tmp_path_factory.mktemp("corpus"), n_docs=5, seed=7)


@pytest.fixture(scope="session")
def corpus_docs(corpus_dir):
    return [entry.doc for entry in load_dataset(corpus_dir, "ie")]


@pytest.fixture()
def doc(corpus_docs):
    return corpus_docs[0]
