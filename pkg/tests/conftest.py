import hashlib
from pathlib import Path

import pytest

from caloraify.kb import ingest_csv_path
from caloraify.retrieval import build_index
from caloraify.vlm import StubBackend

DATA_DIR = Path(__file__).parent / "data"

FIXTURE_CSV = DATA_DIR / "foods.csv"
FIXTURE_IMAGE = DATA_DIR / "fixture_dish.png"
OTHER_IMAGE = DATA_DIR / "other_dish.png"
STUB_FIXTURES = DATA_DIR / "stub_fixtures.jsonl"

STUB_RESPONSE = "- 2 cups flour\n- 3 eggs"

# Expected values for the fixture dish, derived by hand from the CSV constants:
# flour: 2 cups * 236.5882365 ml * 0.4226752837730375 g/ml = 200 g -> 700 kcal
# eggs: 3 pieces * 50 g = 150 g at 80 kcal/100 g -> 120 kcal
FIXTURE_FLOUR_GRAMS = 200.0
FIXTURE_FLOUR_KCAL = 700.0
FIXTURE_EGGS_GRAMS = 150.0
FIXTURE_EGGS_KCAL = 120.0
FIXTURE_TOTAL_KCAL = 820.0


@pytest.fixture(scope="session")
def fixture_kb():
    return ingest_csv_path(str(FIXTURE_CSV))


@pytest.fixture(scope="session")
def fixture_index(fixture_kb):
    return build_index(fixture_kb)


@pytest.fixture(scope="session")
def fixture_image_bytes():
    return FIXTURE_IMAGE.read_bytes()


@pytest.fixture(scope="session")
def other_image_bytes():
    return OTHER_IMAGE.read_bytes()


@pytest.fixture()
def stub_backend(fixture_image_bytes):
    digest = hashlib.sha256(fixture_image_bytes).hexdigest()
    return StubBackend({digest: STUB_RESPONSE})
