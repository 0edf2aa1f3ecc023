"""Experiment configuration: one declarative file (JSON or YAML) describing simulators,
agents, data and outputs, plus builders that turn it into runnable objects."""
from __future__ import annotations

import dataclasses as dc
import json
import os
import shlex
import sys
import tempfile
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import yaml

from .corpus import TransitionModel, load_catalog, load_dialogues, load_ratings
from .engine import ConfigError, SimulatorConfig
from .evaluation import ActionDistribution
from .nlg import TemplateBank
from .nlu import EntityCatalog, LabeledUtteranceIndex
from .stub import StubAgent, StubAgentSpec
from .transport import CAPABILITIES, DEFAULT_TIMEOUT, AgentEndpoint

SIMULATORS = {"QRFA-Single": ("QRFA", "SINGLE"), "CIR6-Single": ("CIR6", "SINGLE"),
              "CIR6-PKG": ("CIR6", "PKG")}


def packaged(name: str) -> Path:
    return Path(str(resources.files("crsim.data").joinpath(name)))


def atomic_write(path: str | Path, text: str) -> None:
    """Write to a sibling temp file, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


@dc.dataclass
class AgentConfig:
    name: str
    transport: str = "inproc"           # inproc | stdio | stdio:<cmd> | tcp:HOST:PORT
    capabilities: tuple[str, ...] = CAPABILITIES
    stub: dict | None = None            # StubAgentSpec fields when the agent is a stub
    timeout: float = DEFAULT_TIMEOUT

    @classmethod
    def from_dict(cls, d: Mapping) -> "AgentConfig":
        d = dict(d)
        unknown = set(d) - {f.name for f in dc.fields(cls)}
        if unknown:
            raise ConfigError(f"agent {d.get('name')!r}: unknown keys {sorted(unknown)}")
        if "name" not in d:
            raise ConfigError("every agent needs a name")
        if "capabilities" in d:
            d["capabilities"] = tuple(d["capabilities"])
        return cls(**d)

    def stub_spec(self) -> StubAgentSpec:
        fields = {"name": self.name, "capabilities": self.capabilities, **(self.stub or {})}
        return StubAgentSpec.from_dict(fields)


@dc.dataclass
class ExperimentConfig:
    agents: list[AgentConfig]
    simulators: tuple[str, ...] = tuple(SIMULATORS)
    n_dialogues: int = 100
    base_seed: int = 0
    dialogues: str | None = None        # training corpus; also the DS-KL reference by default
    reference: str | None = None
    ratings: str | None = None
    catalog: str | None = None
    models: str = "models"              # trained artifacts directory
    out: str = "out"
    oracle_nlu: bool = False
    turn_cap: int = 50
    alpha: float = 0.1
    user_first: bool = True
    workers: int = 1
    source: str | None = dc.field(default=None, repr=False)   # config file path, for stdio stubs

    def __post_init__(self):
        if self.n_dialogues < 1:
            raise ConfigError("n_dialogues must be at least 1")
        bad = [s for s in self.simulators if s not in SIMULATORS]
        if bad:
            raise ConfigError(f"unknown simulators {bad}; choose from {list(SIMULATORS)}")
        if not self.agents:
            raise ConfigError("no agents configured")
        names = [a.name for a in self.agents]
        if len(set(names)) != len(names):
            raise ConfigError("agent names must be unique")
        for attr in ("dialogues", "reference", "ratings", "catalog"):
            path = getattr(self, attr)
            if path is not None and not Path(path).is_file():
                raise ConfigError(f"{attr} file not found: {path}")

    @property
    def dialogues_path(self) -> Path:
        return Path(self.dialogues) if self.dialogues else packaged("dialogues.jsonl")

    @property
    def reference_path(self) -> Path:
        return Path(self.reference) if self.reference else self.dialogues_path

    @property
    def ratings_path(self) -> Path:
        return Path(self.ratings) if self.ratings else packaged("ratings.csv")

    @property
    def catalog_path(self) -> Path:
        return Path(self.catalog) if self.catalog else packaged("catalog.csv")

    def agent(self, name: str) -> AgentConfig:
        for a in self.agents:
            if a.name == name:
                return a
        raise ConfigError(f"no agent named {name!r}")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any], base: Path | None = None) -> "ExperimentConfig":
        d = dict(d)
        unknown = set(d) - {f.name for f in dc.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        # relative paths are taken relative to the config file
        if base is not None:
            for key in ("dialogues", "reference", "ratings", "catalog", "models", "out"):
                if d.get(key) and not Path(d[key]).is_absolute():
                    d[key] = str(base / d[key])
        d["agents"] = [AgentConfig.from_dict(a) for a in d.get("agents", ())]
        if "simulators" in d:
            d["simulators"] = tuple(d["simulators"])
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        try:
            data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
        except (json.JSONDecodeError, yaml.YAMLError) as e:
            raise ConfigError(f"cannot parse {path}: {e}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        cfg = cls.from_dict(data, base=path.resolve().parent)
        cfg.source = str(path.resolve())
        return cfg


def default_agents() -> list[AgentConfig]:
    """Three stubs of designed quality, best first."""
    return [AgentConfig("PERFECT", stub={"policy": "PERFECT"}),
            AgentConfig("FLAKY-0.8", stub={"policy": "FLAKY", "p": 0.8}),
            AgentConfig("FLAKY-0.6", stub={"policy": "FLAKY", "p": 0.6})]


# ---------------------------------------------------------------------------
# trained artifacts

MODEL_FILES = {"CIR6": "cir6.json", "QRFA": "qrfa.json"}
INDEX_FILE = "agent_index.csv"


@dc.dataclass
class Artifacts:
    models: dict[str, TransitionModel]
    agent_index: LabeledUtteranceIndex

    @classmethod
    def load(cls, directory: str | Path) -> "Artifacts":
        directory = Path(directory)
        missing = [n for n in (*MODEL_FILES.values(), INDEX_FILE) if not (directory / n).is_file()]
        if missing:
            raise ConfigError(f"trained artifacts missing in {directory}: {missing}; run 'crsim train'")
        models = {k: TransitionModel.load(directory / f) for k, f in MODEL_FILES.items()}
        return cls(models, LabeledUtteranceIndex.load(directory / INDEX_FILE))


@dc.dataclass
class Resources:
    """Data shared by every simulator of one experiment."""
    ratings: object
    user_bank: TemplateBank
    agent_bank: TemplateBank
    entities: EntityCatalog

    @classmethod
    def load(cls, cfg: ExperimentConfig) -> "Resources":
        catalog = load_catalog(cfg.catalog_path)
        ratings = load_ratings(cfg.ratings_path, catalog)
        return cls(ratings, TemplateBank.load(), TemplateBank.load(speaker="AGENT"),
                   EntityCatalog.from_catalog(catalog))


def build_simulator(name: str, artifacts: Artifacts, res: Resources, cfg: ExperimentConfig,
                    seed: int | None = None) -> SimulatorConfig:
    interaction, preference = SIMULATORS[name]
    return SimulatorConfig(interaction, preference, artifacts.models[interaction], res.ratings,
                           res.user_bank, artifacts.agent_index, res.entities,
                           turn_cap=cfg.turn_cap, seed=cfg.base_seed if seed is None else seed,
                           oracle_nlu=cfg.oracle_nlu, user_first=cfg.user_first)


def build_stub(agent: AgentConfig, res: Resources) -> StubAgent:
    return StubAgent(agent.stub_spec(), res.ratings.catalog, res.user_bank, res.agent_bank)


def stub_command(cfg: ExperimentConfig, agent: AgentConfig) -> str:
    base = f"{shlex.quote(sys.executable)} -m crsim stub --transport stdio --agent {shlex.quote(agent.name)}"
    if cfg.source is not None:
        return f"{base} --config {shlex.quote(cfg.source)}"
    # no file to point at: pass the simple policies as flags
    stub = agent.stub or {}
    if not set(stub) <= {"policy", "p", "seed", "oracle"} or stub.get("policy") == "SCRIPTED":
        raise ConfigError(f"agent {agent.name!r}: this stub needs a config file to run over stdio")
    cmd = f"{base} --policy {stub.get('policy', 'PERFECT')} --p {stub.get('p', 1.0)} --seed {stub.get('seed', 0)}"
    return cmd + (" --oracle" if stub.get("oracle") else "")


def build_endpoint(agent: AgentConfig, cfg: ExperimentConfig, res: Resources,
                   transport: str | None = None) -> AgentEndpoint:
    """Endpoint for one configured agent. Stub agents honour ``transport``; for
    ``tcp`` the caller is responsible for starting the server."""
    transport = transport or agent.transport
    handler = None
    if transport == "inproc":
        if agent.stub is None:
            raise ConfigError(f"agent {agent.name!r}: inproc transport needs a stub spec")
        handler = build_stub(agent, res)
    elif transport == "stdio":
        if agent.stub is None:
            raise ConfigError(f"agent {agent.name!r}: give 'stdio:<command>' for external agents")
        transport = "stdio:" + stub_command(cfg, agent)
    elif not transport.startswith(("stdio:", "tcp:")):
        raise ConfigError(f"agent {agent.name!r}: unknown transport {transport!r}")
    try:
        return AgentEndpoint(agent.name, transport, frozenset(agent.capabilities), agent.timeout, handler)
    except ValueError as e:
        raise ConfigError(f"agent {agent.name!r}: {e}") from None


def load_reference(cfg: ExperimentConfig) -> ActionDistribution:
    return ActionDistribution.from_corpus(load_dialogues(cfg.reference_path), cfg.alpha)
