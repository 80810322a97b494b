import pytest

from crag import cf_model, corpus, demo, entity_link
from crag.corpus import Split


@pytest.fixture(scope="session")
def demo_dialogues():
    return demo.build_dialogues()


@pytest.fixture(scope="session")
def demo_db(demo_dialogues):
    return corpus.build_item_database(demo_dialogues, metadata=demo.MOVIE_YEARS)


@pytest.fixture(scope="session")
def demo_train(demo_dialogues):
    return [d for d in demo_dialogues if d.split is Split.TRAIN]


@pytest.fixture(scope="session")
def demo_test(demo_dialogues):
    return [d for d in demo_dialogues if d.split is Split.TEST]


@pytest.fixture(scope="session")
def demo_model(demo_train, demo_db):
    R = corpus.build_interactions(demo_train, demo_db)
    return cf_model.fit_ease(R, demo_db, lam=demo.DEMO_LAMBDA)


@pytest.fixture(scope="session")
def demo_index(demo_db):
    return entity_link.TitleIndex(demo_db)


@pytest.fixture(scope="session")
def demo_records(demo_test, demo_db):
    return corpus.make_eval_records(demo_test, demo_db)


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    """On-disk demo fixture: dialogues, model, recorded transcript, config."""
    d = tmp_path_factory.mktemp("crag-demo")
    demo.write_fixture(d)
    return d
