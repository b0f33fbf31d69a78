from pathlib import Path

import pytest

from claimcheck.corpus import Relation, load_relation_file

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def ged() -> Relation:
    return load_relation_file(DATA / "GED.csv")


@pytest.fixture(scope="session")
def ged_relations(ged) -> dict[str, Relation]:
    return {ged.name: ged}
