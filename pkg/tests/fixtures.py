"""Planted-gold fixtures over the toy KB.

Each fixture question carries a scripted gold path (SearchNodes ->
SearchGraphPatterns -> ExecuteSPARQL -> Done), pseudo-random decoy branches,
and optionally a shallow valid-but-wrong terminal. A discriminating reward
scores gold-path prefixes 1.0 and everything else 0.0.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from kbsearch.agent import AgentState, TreeScriptBackend, parse_agent_output
from kbsearch.kb import KnowledgeBase
from kbsearch.reward import FunctionRewardModel
from kbsearch.sparql import canonical_answers, evaluate, parse_query


def completion(tool: str, argument: str = "", thought: str = "ok") -> str:
    if tool == "Done":
        return f"Thought: {thought}\nAction: Done"
    return f"Thought: {thought}\nAction: {tool}({argument})"


@dataclass
class PlantedQuestion:
    qid: str
    question: str
    gold_sparql: str
    gold_answers: frozenset
    gold_path: list[str]  # completions, last one is Done
    deep_decoy: bool = False
    wrong_terminal: bool = False
    gold_key: tuple = field(default_factory=tuple)  # (tool, argument) prefix keys


# question templates over the toy KB: (template, hint, gold sparql, subject class)
_TEMPLATES = [
    ("what is the capital of {label}?", "capital",
     "SELECT DISTINCT ?x WHERE {{ e:{eid} p:capital ?x . }}", "c_country"),
    ("who is the head of government of {label}?", "head of government",
     "SELECT DISTINCT ?x WHERE {{ e:{eid} p:head_of_government ?x . }}", "c_country"),
    ("which country is {label} located in?", "located in",
     "SELECT DISTINCT ?x WHERE {{ e:{eid} p:located_in ?x . }}", "c_city"),
    ("what form of government does {label} have?", "form of government",
     "SELECT DISTINCT ?x WHERE {{ e:{eid} p:form_of_government ?x . }}", "c_country"),
    ("how many cities are located in {label}?", "located in",
     "SELECT (COUNT(DISTINCT ?c) AS ?n) WHERE {{ ?c p:located_in e:{eid} . }}",
     "c_country"),
    ("where was {label} born?", "place of birth",
     "SELECT DISTINCT ?x WHERE {{ e:{eid} p:place_of_birth ?x . }}", "c_person"),
    ("what is the official language of {label}?", "official language",
     "SELECT DISTINCT ?x WHERE {{ e:{eid} p:official_language ?x . }}", "c_country"),
]

_WRONG_QUERY = "SELECT DISTINCT ?x WHERE {{ e:{eid} p:instance_of ?x . }}"


def _gold_path(kb: KnowledgeBase, eid: str, label: str, hint: str,
               gold_sparql: str) -> list[str]:
    anchor = f'SELECT ?e WHERE {{ ?e p:name "{label}" . }}'
    return [
        completion("SearchNodes", f'"{label.lower()}"', "find the topic entity"),
        completion("SearchGraphPatterns", f"'{anchor}', semantic=\"{hint}\"",
                   "inspect one-hop predicates"),
        completion("ExecuteSPARQL", f"'{gold_sparql}'", "run the query"),
        completion("Done", thought="the result answers the question"),
    ]


def build_planted_fixture(kb: KnowledgeBase, count: int = 50, seed: int = 20240321,
                          wrong_terminals: bool = False
                          ) -> tuple[list[PlantedQuestion], TreeScriptBackend]:
    """Build `count` questions with decoys; ~70% get deep decoy chains."""
    rng = random.Random(seed)
    by_class: dict[str, list[str]] = {}
    for st in kb.statements:
        if st.predicate == "instance_of" and isinstance(st.object, str):
            by_class.setdefault(st.object, []).append(st.subject)
    subjects = []
    for template_index, (_t, _h, _s, subject_class) in enumerate(_TEMPLATES):
        subjects.extend((template_index, eid)
                        for eid in sorted(by_class.get(subject_class, ())))

    rng.shuffle(subjects)
    script = TreeScriptBackend()
    questions: list[PlantedQuestion] = []
    node_labels = sorted(label for label, _desc in kb.entities.values())

    for i, (template_index, eid) in enumerate(subjects[:count]):
        template, hint, sparql_tpl, _subject_class = _TEMPLATES[template_index]
        label = kb.entities[eid][0]
        question = template.format(label=label)
        gold_sparql = sparql_tpl.format(eid=eid)
        gold = canonical_answers(evaluate(parse_query(gold_sparql), kb))
        assert gold, f"fixture gold query is empty for {question}"
        path = _gold_path(kb, eid, label, hint, gold_sparql)
        deep = rng.random() < 0.7
        q = PlantedQuestion(qid=f"q{i:03d}", question=question,
                            gold_sparql=gold_sparql, gold_answers=frozenset(gold),
                            gold_path=path, deep_decoy=deep,
                            wrong_terminal=wrong_terminals and rng.random() < 0.8)
        q.gold_key = tuple((a.tool, a.argument) for a in map(parse_agent_output, path))
        questions.append(q)

        # a per-question pool of distinct decoy labels, never the gold anchor
        # (distinct labels keep sibling fingerprints distinct under dedup)
        pool = [x for x in node_labels if x != label]
        rng.shuffle(pool)
        labels_iter = iter(pool)

        # gold chain plus decoys at every prefix
        prefix: list[tuple[str, str]] = []
        for depth, step in enumerate(path):
            decoys = _decoys_at(rng, labels_iter, eid, depth, q)
            script.add(question, tuple(prefix), [step, *decoys])
            action = parse_agent_output(step)
            prefix.append((action.tool, action.argument))
            for decoy in decoys:
                d_action = parse_agent_output(decoy)
                d_prefix = [*prefix[:-1], (d_action.tool, d_action.argument)]
                if d_action.tool == "ExecuteSPARQL" and q.wrong_terminal and depth == 1:
                    # a valid but wrong terminal, shallower than the gold Done
                    script.add(question, tuple(d_prefix), [completion("Done")])
                elif q.deep_decoy and depth == 0 and d_action.tool == "SearchNodes":
                    _extend_decoy_chain(script, labels_iter, question,
                                        d_prefix, length=6)
    return questions, script


def _decoys_at(rng: random.Random, labels_iter, eid: str, depth: int,
               q: PlantedQuestion) -> list[str]:
    if depth >= len(q.gold_path) - 1:
        return []
    decoys = []
    if q.deep_decoy and depth == 0:
        # the seed of the deep chain: always a search, so it can be expanded
        decoys.append(completion(
            "SearchNodes", f'"{next(labels_iter).lower()}"', "look around"))
    n = rng.randint(1, 2)
    for _ in range(n):
        roll = rng.random()
        if q.wrong_terminal and depth == 1:
            decoys.append(completion(
                "ExecuteSPARQL", f"'{_WRONG_QUERY.format(eid=eid)}'", "try a shortcut"))
            continue
        if roll < 0.55:
            decoys.append(completion(
                "SearchNodes", f'"{next(labels_iter).lower()}"', "look around"))
        elif roll < 0.8:
            decoys.append(completion(
                "ExecuteSPARQL", "'SELECT ?x WHERE { ?x p:nonexistent ?y . }'",
                "guess a relation"))
        else:
            decoys.append(completion("Done", thought="give up"))
    return decoys


def _extend_decoy_chain(script: TreeScriptBackend, labels_iter, question: str,
                        prefix: list[tuple[str, str]], length: int) -> None:
    for _ in range(length):
        step = completion("SearchNodes", f'"{next(labels_iter).lower()}"', "wander")
        script.add(question, tuple(prefix), [step])
        action = parse_agent_output(step)
        prefix = [*prefix, (action.tool, action.argument)]


def discriminating_reward(questions: list[PlantedQuestion]) -> FunctionRewardModel:
    """1.0 on gold-path prefixes, 0.0 elsewhere (perfectly discriminating)."""
    gold_keys = {q.question: q.gold_key for q in questions}

    def score(state: AgentState) -> float:
        gold = gold_keys.get(state.question, ())
        path = tuple((a.tool, a.argument) for a, _o in state.history)
        return 1.0 if path == gold[:len(path)] else 0.0

    return FunctionRewardModel(score)
