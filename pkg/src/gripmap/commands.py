"""Operator command parsing over a fixed lexicon.

A command like "gently pick up the plastic cup" resolves to the task
tuple (object, action, lambda). Matching is keyword/synonym lookup over a
JSON lexicon, deliberately transparent rather than a language model: new
objects are a data change, not a code change.

Matching rules: the text is lowercased and punctuation-stripped, phrases
match on word boundaries, and a longer synonym wins over any synonym it
contains ("plastic cup" beats "cup"). Synonyms may map to several objects
(a bare "cup"); if only such an ambiguous synonym matches, parsing fails
loudly instead of guessing.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources

OBJECT_IDS = ("paper_cup", "plastic_cup", "glass_goblet")
ACTIONS = ("pick_up", "pick_and_place", "hand_over")
LAMBDA_LEVELS = (0.3, 0.7, 1.0)


class CommandError(Exception):
    pass


class UnknownObject(CommandError):
    """No noun in the command matches the object synonym table."""


class AmbiguousObject(CommandError):
    """The command matches two or more distinct objects."""


@dataclass(frozen=True)
class TaskCommand:
    object_id: str          # one of OBJECT_IDS
    action: str             # one of ACTIONS
    lam: float              # force scaling factor, one of LAMBDA_LEVELS

    def to_dict(self) -> dict:
        return {"object": self.object_id, "action": self.action,
                "lambda": self.lam}


@dataclass(frozen=True)
class Lexicon:
    objects: dict[str, tuple[str, ...]]    # synonym -> candidate object ids
    actions: dict[str, str]                # phrase -> action
    modifiers: dict[str, float]            # adverb -> lambda
    default_lambda: float = 0.7
    default_action: str = "pick_up"

    @staticmethod
    def from_dict(data: dict) -> "Lexicon":
        objects = {}
        for syn, ids in data["objects"].items():
            ids = (ids,) if isinstance(ids, str) else tuple(ids)
            for oid in ids:
                if oid not in OBJECT_IDS:
                    raise ValueError(f"unknown object id {oid!r} in lexicon")
            objects[_normalize(syn)] = ids
        actions = {}
        for phrase, action in data["actions"].items():
            if action not in ACTIONS:
                raise ValueError(f"unknown action {action!r} in lexicon")
            actions[_normalize(phrase)] = action
        modifiers = {_normalize(w): float(v)
                     for w, v in data["modifiers"].items()}
        return Lexicon(objects=objects, actions=actions, modifiers=modifiers,
                       default_lambda=float(data.get("default_lambda", 0.7)),
                       default_action=data.get("default_action", "pick_up"))

    @staticmethod
    def load(path: str | None = None) -> "Lexicon":
        if path is None:
            text = resources.files("gripmap.data") \
                .joinpath("lexicon.json").read_text(encoding="utf-8")
        else:
            with open(path, "r", encoding="utf-8") as fh:
                text = fh.read()
        return Lexicon.from_dict(json.loads(text))


_DEFAULT_LEXICON: Lexicon | None = None


def default_lexicon() -> Lexicon:
    global _DEFAULT_LEXICON
    if _DEFAULT_LEXICON is None:
        _DEFAULT_LEXICON = Lexicon.load()
    return _DEFAULT_LEXICON


def _normalize(text: str) -> str:
    return " ".join(re.sub(r"[^a-z0-9\s]", " ", text.lower()).split())


def _phrase_matches(tokens: list[str], phrase: str) -> list[tuple[int, int]]:
    """Token spans [start, end) where the phrase occurs."""
    words = phrase.split()
    n = len(words)
    return [(i, i + n) for i in range(len(tokens) - n + 1)
            if tokens[i:i + n] == words]


def _maximal_spans(matches: list[tuple[int, int, str]]
                   ) -> list[tuple[int, int, str]]:
    """Drop matches whose span lies inside a strictly longer match."""
    out = []
    for s, e, phrase in matches:
        covered = any(
            (s2 <= s and e <= e2) and (e2 - s2 > e - s)
            for s2, e2, _ in matches)
        if not covered:
            out.append((s, e, phrase))
    return out


def parse_command(text: str,
                  lexicon: Lexicon | None = None) -> TaskCommand:
    """Resolve an operator command into (object, action, lambda).

    Case-insensitive and whitespace-normalized. Raises UnknownObject when
    no synonym matches and AmbiguousObject when distinct objects match (or
    only a multi-object synonym like a bare "cup" does).
    """
    if not text or not text.strip():
        raise CommandError("empty command")
    if lexicon is None:
        lexicon = default_lexicon()
    tokens = _normalize(text).split()

    obj_matches = []
    for syn in lexicon.objects:
        for s, e in _phrase_matches(tokens, syn):
            obj_matches.append((s, e, syn))
    obj_matches = _maximal_spans(obj_matches)
    if not obj_matches:
        raise UnknownObject(f"no known object in {text!r}")
    candidates: set[str] = set()
    for _, _, syn in obj_matches:
        candidates.update(lexicon.objects[syn])
    if len(candidates) > 1:
        raise AmbiguousObject(
            f"{text!r} could mean any of {sorted(candidates)}")
    object_id = candidates.pop()

    act_matches = []
    for phrase in lexicon.actions:
        for s, e in _phrase_matches(tokens, phrase):
            act_matches.append((s, e, phrase))
    act_matches = _maximal_spans(act_matches)
    if act_matches:
        # longest phrase wins; earliest occurrence breaks remaining ties
        act_matches.sort(key=lambda m: (-(m[1] - m[0]), m[0]))
        action = lexicon.actions[act_matches[0][2]]
    else:
        action = lexicon.default_action

    lam = lexicon.default_lambda
    for token in tokens:                     # first modifier wins
        if token in lexicon.modifiers:
            lam = lexicon.modifiers[token]
            break
    return TaskCommand(object_id=object_id, action=action, lam=lam)
