import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ctxgreedy.situation import ContextTaxonomies  # noqa: E402
from ctxgreedy.taxonomy import Dimension, Taxonomy  # noqa: E402

SMALL = {"R": None, "A": "R", "B": "R", "A1": "A", "A2": "A"}


@pytest.fixture
def small_tree() -> Taxonomy:
    return Taxonomy(Dimension.LOCATION, SMALL)


@pytest.fixture
def small_taxonomies() -> ContextTaxonomies:
    return ContextTaxonomies(*(Taxonomy(d, SMALL) for d in Dimension))
