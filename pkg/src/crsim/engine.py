"""Conversation manager: runs the simulated user against an agent endpoint."""
from __future__ import annotations

import dataclasses as dc
import random
from concurrent.futures import ThreadPoolExecutor

from .corpus import RatingsCorpus, TransitionModel, sample_initial_agenda
from .domain import (
    RECOMMENDING_KINDS, AgentActionKind, CompatibilityTable, DialogueAction, DialogueTranscript,
    Goal, Speaker, Status, TaxonomyError, Turn, UserActionKind, default_table,
)
from .interaction import (
    Cir6StateDiagram, SimulationState, apply_pkg_early_stop, default_diagram, goal_accomplished,
    update_agenda,
)
from .nlg import TemplateBank, render
from .nlu import DEFAULT_FLOOR, EntityCatalog, LabeledUtteranceIndex, link_entities
from .preference import PkgPreferences, SingleItemPreferences, sample_profile
from .transport import AgentEndpoint, AgentError

DEFAULT_TURN_CAP = 50
VALID_CONFIGS = {("QRFA", "SINGLE"), ("CIR6", "SINGLE"), ("CIR6", "PKG")}

SENTIMENT_WORDS = {1: "loved", 0: "did not mind", -1: "disliked"}

_SLOTS_FOR = {
    UserActionKind.DISCLOSE: ("ITEM", "ATTRIBUTE"),
    UserActionKind.REVISE: ("ATTRIBUTE",),
    UserActionKind.REFINE: ("ATTRIBUTE",),
    UserActionKind.EXPAND: ("ATTRIBUTE",),
    UserActionKind.SUBSET: ("ATTRIBUTE",),
    UserActionKind.COMPARE: ("ITEM",),
    UserActionKind.SIMILAR: ("ITEM",),
    UserActionKind.SUGGEST: ("ITEM",),
    UserActionKind.NOTE: ("ITEM", "SENTIMENT"),
}


class ConfigError(ValueError):
    pass


@dc.dataclass
class SimulatorConfig:
    interaction: str                 # QRFA | CIR6
    preference: str                  # SINGLE | PKG
    model: TransitionModel
    ratings: RatingsCorpus
    user_bank: TemplateBank
    agent_index: LabeledUtteranceIndex
    entities: EntityCatalog
    diagram: Cir6StateDiagram = dc.field(default_factory=default_diagram)
    table: CompatibilityTable = dc.field(default_factory=default_table)
    turn_cap: int = DEFAULT_TURN_CAP
    floor: float = DEFAULT_FLOOR
    seed: int = 0
    oracle_nlu: bool = False
    user_first: bool = True

    def __post_init__(self):
        self.interaction = self.interaction.upper()
        self.preference = self.preference.upper()
        if (self.interaction, self.preference) not in VALID_CONFIGS:
            raise ConfigError(f"unsupported simulator {self.name}")
        if self.model.kind != self.interaction:
            raise ConfigError(f"{self.name} needs a {self.interaction} model, got {self.model.kind}")
        if self.turn_cap < 1:
            raise ConfigError("turn cap must be positive")
        self._titles = {i: c.title for i, c in self.ratings.catalog.items()}
        self._attributes = self.ratings.attributes()

    @property
    def name(self) -> str:
        return f"{self.interaction}-{self.preference.title() if self.preference == 'SINGLE' else 'PKG'}"


class _User:
    """Per-dialogue simulated user: preferences, goal and slot filling."""

    def __init__(self, config: SimulatorConfig, rng: random.Random):
        self.config = config
        self.rng = rng
        profile = sample_profile(config.ratings, rng)
        cls = PkgPreferences if config.preference == "PKG" else SingleItemPreferences
        self.prefs = cls(profile, config._attributes, rng)
        attr = self.prefs.favourite_attribute()
        self.goal = Goal(constraints=(("ATTRIBUTE", attr),) if attr else ())
        self.last_recommended: str | None = None

    def fill(self, kind: UserActionKind) -> DialogueAction:
        slots = []
        for name in _SLOTS_FOR.get(kind, ()):
            if name == "ATTRIBUTE":
                value = dict(self.goal.constraints).get("ATTRIBUTE") or "popular"
            elif name == "ITEM":
                if kind in (UserActionKind.COMPARE, UserActionKind.NOTE) and self.last_recommended:
                    value = self.last_recommended
                else:
                    value = self.prefs.favourite_item()
            else:
                item = dict(slots).get("ITEM") or self.prefs.favourite_item()
                value = SENTIMENT_WORDS[self.prefs.preference(item)]
            slots.append((name, value))
        return DialogueAction(kind, tuple(slots))

    def note_on(self, item: str) -> DialogueAction:
        score = self.prefs.preference(item)
        return DialogueAction(UserActionKind.NOTE, (("ITEM", item), ("SENTIMENT", SENTIMENT_WORDS[score])))


def _understand(config: SimulatorConfig, response: dict):
    """Agent act and linked item of one agent response; (None, None) when not understood."""
    utterance = response["utterance"]
    kind = None
    if config.oracle_nlu and response.get("actions"):
        try:
            kind = AgentActionKind.parse(response["actions"][0])
        except TaxonomyError:
            kind = None
    else:
        kind = config.agent_index.classify(utterance).kind
    item = None
    if kind is not None:
        for _, slot, eid in link_entities(utterance, config.agent_index, config.entities, config.floor):
            if slot == "ITEM":
                item = eid
                break
    return kind, item


def run_dialogue(config: SimulatorConfig, endpoint: AgentEndpoint, seed: int | None = None,
                 conversation_id: str | None = None) -> DialogueTranscript:
    seed = config.seed if seed is None else seed
    cid = conversation_id or f"{config.name}/{endpoint.name}/{seed}"
    rng = random.Random(seed)
    user = _User(config, rng)
    state = SimulationState(sample_initial_agenda(config.model, rng, config.diagram), user.goal)
    initial = tuple(a.kind.label for a in reversed(state.agenda.bottom_to_top()))
    turns: list[Turn] = []
    status = Status.COMPLETED
    noted: set[str] = set()
    pending: DialogueAction | None = None
    user_turns = 0

    try:
        conn = endpoint.connect()
    except AgentError:
        return DialogueTranscript(cid, seed, Status.AGENT_ERROR, (), initial, config.name, endpoint.name)

    try:
        if not config.user_first:
            try:
                opening = conn.exchange(cid, 0, "")
            except AgentError:
                status = Status.AGENT_ERROR
            else:
                kind, item = _understand(config, opening)
                acts = (DialogueAction(kind, (("ITEM", item),) if item else ()),) if kind else ()
                turns.append(Turn(len(turns), Speaker.AGENT, opening["utterance"], acts, None, "opening"))

        while status is Status.COMPLETED and state.agenda:
            if user_turns >= config.turn_cap:
                status = Status.TURN_CAP_REACHED
                break
            interjection = pending is not None
            action = pending if interjection else user.fill(state.agenda.top.kind)
            pending = None
            text = render(action, config.user_bank, rng, config._titles)
            turns.append(Turn(len(turns), Speaker.USER, text, (action,),
                              note="interjection" if interjection else None))
            user_turns += 1
            try:
                response = conn.exchange(cid, len(turns) - 1, text)
            except AgentError as e:
                status = Status.AGENT_ERROR
                turns.append(Turn(len(turns), Speaker.AGENT, "", (), False, f"error: {e}"))
                break

            kind, item = _understand(config, response)
            delta = goal_accomplished(action.kind, kind, config.table)
            state.last_user_action = action
            state.last_agent_action = kind
            state.turn += 1
            notes = []
            if not interjection:
                if delta and kind in RECOMMENDING_KINDS and item:
                    user.goal = user.goal.satisfy("RECOMMENDATION")
                    state.goal = user.goal
                state.agenda = update_agenda(state, config.model, delta, rng)
                notes.append("pull" if delta else "push")
            if kind in RECOMMENDING_KINDS and item:
                user.last_recommended = item
                if config.preference == "PKG":
                    state.agenda, outcome = apply_pkg_early_stop(state, user.prefs, item)
                    if outcome == "early_stop":
                        notes.append("early_stop")
                    elif outcome == "consumed" and item not in noted and state.agenda:
                        noted.add(item)
                        pending = user.note_on(item)
                        notes.append("consumed")
            acts = (DialogueAction(kind, (("ITEM", item),) if item else ()),) if kind else ()
            turns.append(Turn(len(turns), Speaker.AGENT, response["utterance"], acts, delta,
                              ";".join(notes) or None))
    finally:
        conn.close()

    return DialogueTranscript(cid, seed, status, tuple(turns), initial, config.name, endpoint.name)


def run_campaign(config: SimulatorConfig, endpoint: AgentEndpoint, n_dialogues: int,
                 base_seed: int = 0, workers: int = 1) -> list[DialogueTranscript]:
    """``n_dialogues`` independent dialogues seeded base_seed + i, returned in index order."""
    if n_dialogues < 1:
        raise ValueError("n_dialogues must be at least 1")

    def one(i: int) -> DialogueTranscript:
        return run_dialogue(config, endpoint, base_seed + i,
                            f"{config.name}/{endpoint.name}/{base_seed}/{i}")

    if workers <= 1:
        return [one(i) for i in range(n_dialogues)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(n_dialogues)))


def verify_transcript(transcript: DialogueTranscript, table: CompatibilityTable | None = None) -> bool:
    """Recompute every agent turn's delta from the recorded acts."""
    last_user = None
    for turn in transcript.turns:
        if turn.speaker is Speaker.USER:
            last_user = turn.actions[0] if turn.actions else None
            continue
        if turn.goal_satisfied is None:
            continue
        b = turn.actions[0].kind if turn.actions else None
        expected = last_user is not None and goal_accomplished(last_user.kind, b, table)
        if bool(turn.goal_satisfied) != expected:
            return False
    return True


def profile_signature(config: SimulatorConfig, seed: int) -> tuple:
    """Profile a dialogue with this seed would sample (for audits and tests)."""
    rng = random.Random(seed)
    p = sample_profile(config.ratings, rng)
    return p.user_id, tuple(sorted(p.sentiments.items()))
