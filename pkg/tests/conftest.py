import pytest

from mrpchan.models import GeneModelParams, build_gene_model, build_leakage_model


@pytest.fixture(scope="session")
def gene_model():
    return build_gene_model(GeneModelParams())


@pytest.fixture(scope="session")
def leakage_model():
    return build_leakage_model()
