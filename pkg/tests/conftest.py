import random

import pytest

from crsim.corpus import estimate_cir6, estimate_qrfa
from crsim.engine import SimulatorConfig
from crsim.nlg import TemplateBank
from crsim.nlu import EntityCatalog
from crsim.stub import StubAgent, StubAgentSpec
from crsim.synthetic import make_catalog, make_dialogues, make_ratings
from crsim.transport import AgentEndpoint


@pytest.fixture(scope="session")
def catalog():
    return make_catalog(80, seed=1)


@pytest.fixture(scope="session")
def ratings(catalog):
    return make_ratings(catalog, n_users=150, seed=1)


@pytest.fixture(scope="session")
def corpus(catalog):
    return make_dialogues(40, seed=1, catalog=catalog, agent_quality=0.8)


@pytest.fixture(scope="session")
def models(corpus):
    return {"CIR6": estimate_cir6(corpus), "QRFA": estimate_qrfa(corpus)}


@pytest.fixture(scope="session")
def user_bank():
    return TemplateBank.load()


@pytest.fixture(scope="session")
def agent_bank():
    return TemplateBank.load(speaker="AGENT")


@pytest.fixture(scope="session")
def entities(catalog):
    return EntityCatalog.from_catalog(catalog)


@pytest.fixture(scope="session")
def make_sim(models, ratings, user_bank, agent_bank, entities):
    index = agent_bank.to_index()

    def make(interaction="CIR6", preference="SINGLE", **kw):
        return SimulatorConfig(interaction, preference, kw.pop("model", models[interaction]),
                               kw.pop("ratings", ratings),
                               user_bank, index, entities, **kw)
    return make


@pytest.fixture(scope="session")
def make_stub(catalog, user_bank, agent_bank):
    def make(name="PERFECT", policy="PERFECT", p=1.0, capabilities=None, **kw):
        fields = {"name": name, "policy": policy, "p": p, **kw}
        if capabilities is not None:
            fields["capabilities"] = capabilities
        spec = StubAgentSpec.from_dict(fields)
        agent = StubAgent(spec, catalog, user_bank, agent_bank)
        return AgentEndpoint(name, "inproc", spec.capabilities, handler=agent)
    return make


@pytest.fixture
def rng():
    return random.Random(1234)
