import pytest

from corpusdb.populate import populate, populate_persons, populate_reference_tables
from corpusdb.sources import enumerate_containers
from corpusdb.synthetic import write_dataset


@pytest.fixture(scope="session")
def dataset(tmp_path_factory):
    """10 containers of 100 works plus every reference file."""
    return write_dataset(tmp_path_factory.mktemp("dataset"), 10, 100, seed=0)


@pytest.fixture(scope="session")
def source(dataset):
    return enumerate_containers(dataset["crossref"])


@pytest.fixture(scope="session")
def full_db(dataset, source, tmp_path_factory):
    """Fully populated database, shared read-only between tests."""
    db = tmp_path_factory.mktemp("full") / "full.db"
    populate(db, source)
    populate_persons(db, dataset["orcid"])
    populate_reference_tables(db, ror=dataset["ror"], journals=dataset["journals"],
                              funders=dataset["funders"], doaj=dataset["doaj"],
                              asjc=dataset["asjc"])
    return db


@pytest.fixture
def small_source(tmp_path):
    from corpusdb.synthetic import write_container_set
    root = tmp_path / "small"
    works = write_container_set(root, 3, 20, seed=7)
    return enumerate_containers(root), works
