import shutil
import sys

import pytest

from tsdb.genvar import make_test_set, replacement
from tsdb.storage import load_database, sample_home

FIG1_ID = 24020101
FIG1_INPUT = "L' ingénieur vient ."
PUBLISHED_QUERY = '''select i-id i-input
    where i-wf = 1 &
          p-name = "C_Agreement" &
          a-function = "subj" &
          a-category ~ "^PRON"'''


def mock_adapter(*args):
    return [sys.executable, "-m", "tsdb.adapters.mock", *map(str, args)]


@pytest.fixture
def sample_db():
    return load_database(sample_home(), "fr")


@pytest.fixture
def home(tmp_path):
    """A writable copy of the bundled sample database."""
    target = tmp_path / "home"
    shutil.copytree(sample_home(), target)
    return target


@pytest.fixture
def two_item_db(sample_db):
    """The sample plus its derived "viens" variant, grouped as test set 1."""
    make_test_set(sample_db, FIG1_ID, [replacement((2, 3), "viens")])
    return sample_db
