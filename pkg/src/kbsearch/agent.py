"""Action-proposal backends and the prompt/completion wire format.

A state is the full interaction history of one branch. Rendering a state and
parsing agent completions are exact inverses for well-formed actions, which
keeps exported trajectories replayable.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Optional, Protocol

from .assets import PromptAssets
from .tools import TOOLS, Action, Observation


class ActionParseError(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class AgentTransportError(Exception):
    """The backend failed to produce completions after bounded retries."""


@dataclass
class AgentState:
    question: str
    history: list[tuple[Action, Optional[Observation]]] = field(default_factory=list)

    @property
    def depth(self) -> int:
        return len(self.history)


def _quote_argument(text: str) -> str:
    if '"' in text and "'" not in text:
        return f"'{text}'"
    escaped = text.replace("\\", "\\\\").replace('"', '\\"')
    return f'"{escaped}"'


def render_action(action: Action) -> str:
    if action.tool == "Done":
        invocation = "Done"
    else:
        invocation = f"{action.tool}({action.argument})"
    return f"Thought: {action.thought}\nAction: {invocation}"


def make_action(tool: str, argument: str = "", thought: str = "",
                hint: Optional[str] = None) -> Action:
    """Build an Action with a canonically quoted argument.

    `argument` is the raw tool input (query text, search text); `hint` adds
    the semantic= part for SearchGraphPatterns.
    """
    if tool == "Done":
        return Action("Done", "", thought)
    quoted = _quote_argument(argument)
    if hint is not None:
        quoted += f", semantic={_quote_argument(hint)}"
    return Action(tool, quoted, thought)


_ACTION_LINE_RE = re.compile(r"^[ \t]*Action[ \t]*:[ \t]*", re.MULTILINE)
_TOOL_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def _scan_argument(text: str, start: int) -> tuple[str, int]:
    """Consume a parenthesized argument honoring quotes and nesting."""
    assert text[start] == "("
    depth = 0
    i = start
    quote = None
    while i < len(text):
        ch = text[i]
        if quote is not None:
            if ch == "\\":
                i += 2
                continue
            if ch == quote:
                quote = None
        elif ch in "'\"":
            quote = ch
        elif ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth == 0:
                return text[start + 1:i], i + 1
        i += 1
    raise ActionParseError("unterminated tool argument")


def parse_agent_output(text: str) -> Action:
    """Extract the thought and exactly one Tool(argument) invocation."""
    matches = list(_ACTION_LINE_RE.finditer(text))
    if not matches:
        raise ActionParseError("no Action line found")
    if len(matches) > 1:
        raise ActionParseError("multiple Action lines found")
    m = matches[0]
    thought = text[:m.start()].strip()
    if thought.startswith("Thought:"):
        thought = thought[len("Thought:"):].strip()

    rest = text[m.end():]
    name_match = _TOOL_NAME_RE.match(rest.lstrip())
    if not name_match:
        raise ActionParseError("missing tool name after Action:")
    tool = name_match.group()
    if tool not in TOOLS:
        raise ActionParseError(f"unknown tool {tool!r}")
    offset = rest.index(tool) + len(tool)
    after = rest[offset:]
    stripped = after.lstrip()
    if not stripped or not stripped.startswith("("):
        if tool == "Done":
            return Action("Done", "", thought, raw=text)
        raise ActionParseError(f"{tool} requires a parenthesized argument")
    paren_at = offset + (len(after) - len(stripped))
    argument, _end = _scan_argument(rest, paren_at)
    argument = argument.strip()
    if tool == "Done":
        if argument:
            raise ActionParseError("Done takes no argument")
        return Action("Done", "", thought, raw=text)
    return Action(tool, argument, thought, raw=text)


def render_state_prompt(state: AgentState, assets: PromptAssets) -> list[dict[str, str]]:
    """Deterministic chat-message serialization of a state.

    system (tool docs + format rules), then user question, then alternating
    assistant (thought+action) and user (observation) turns.
    """
    messages = [
        {"role": "system", "content": assets.tool_docs + "\n\n" + assets.format_rules},
        {"role": "user", "content": f"Question: {state.question}"},
    ]
    for action, observation in state.history:
        messages.append({"role": "assistant", "content": render_action(action)})
        if observation is not None:
            messages.append({"role": "user",
                             "content": f"Observation:\n{observation.text}"})
    return messages


class AgentBackend(Protocol):
    kind: str

    def propose_raw(self, state: AgentState, n: int) -> list[str]:
        """Return 1..n raw completions for the state."""


def propose_actions(backend: AgentBackend, state: AgentState,
                    n: int) -> tuple[list[Action], int]:
    """Sample up to n actions; unparseable completions are dropped and counted."""
    completions = backend.propose_raw(state, n)
    actions: list[Action] = []
    failures = 0
    for completion in completions[:n]:
        try:
            actions.append(parse_agent_output(completion))
        except ActionParseError:
            failures += 1
    return actions, failures


def _path_key(state: AgentState) -> tuple[tuple[str, str], ...]:
    return tuple((a.tool, a.argument) for a, _o in state.history)


class TreeScriptBackend:
    """Deterministic scripted agent: a per-question map from the action path
    taken so far to the completions to return there.

    Used for offline tests and the CLI's scripted mode. Unknown paths yield
    no completions, which the engine treats as a fruitless expansion.
    """

    kind = "scripted"

    def __init__(self, pad_to_n: bool = False):
        self._scripts: dict[str, dict[tuple, list[str]]] = {}
        self.pad_to_n = pad_to_n

    def add(self, question: str, path: tuple[tuple[str, str], ...],
            completions: list[str]) -> None:
        table = self._scripts.setdefault(question, {})
        table.setdefault(tuple(path), []).extend(completions)

    def extend_plan(self, question: str, plan: list[str]) -> None:
        """Register a linear plan: completion i is served after steps 0..i-1."""
        path: list[tuple[str, str]] = []
        for completion in plan:
            action = parse_agent_output(completion)
            self.add(question, tuple(path), [completion])
            path.append((action.tool, action.argument))

    def propose_raw(self, state: AgentState, n: int) -> list[str]:
        table = self._scripts.get(state.question, {})
        completions = table.get(_path_key(state), [])
        if self.pad_to_n and completions:
            repeated = (completions * n)[:max(n, len(completions))]
            return repeated[:n]
        return completions[:n]

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for question, table in self._scripts.items():
                for key, completions in table.items():
                    rec = {"question": question, "path": [list(p) for p in key],
                           "completions": completions}
                    fh.write(json.dumps(rec, ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path: str, pad_to_n: bool = False) -> "TreeScriptBackend":
        backend = cls(pad_to_n=pad_to_n)
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                backend.add(rec["question"],
                            tuple((p[0], p[1]) for p in rec["path"]),
                            list(rec["completions"]))
        return backend


class ChatAgentBackend:
    """Agent served by any chat-completion backend (live endpoint or replay)."""

    kind = "chat-endpoint"

    def __init__(self, chat_backend, assets: PromptAssets, temperature: float = 1.0):
        self.chat_backend = chat_backend
        self.assets = assets
        self.temperature = temperature

    def propose_raw(self, state: AgentState, n: int) -> list[str]:
        messages = render_state_prompt(state, self.assets)
        return self.chat_backend.complete(messages, n=n, temperature=self.temperature)
