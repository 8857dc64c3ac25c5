"""Editable prompt assets. The packaged defaults can be overridden per KB
flavor by pointing `prompt_dir` at a directory with the same file names."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

ASSET_FILES = {
    "tool_docs": "tool_docs.txt",
    "format_rules": "format_rules.txt",
    "eval_task": "eval_task.txt",
    "eval_guidelines": "eval_guidelines.txt",
    "eval_exemplars": "eval_exemplars.txt",
    "eval_format": "eval_format.txt",
}


class AssetError(Exception):
    """A prompt asset file is missing or unreadable."""


@dataclass(frozen=True)
class PromptAssets:
    tool_docs: str
    format_rules: str
    eval_task: str
    eval_guidelines: str
    eval_exemplars: str
    eval_format: str


def default_asset_dir() -> Path:
    return Path(resources.files("kbsearch") / "assets")


def load_prompt_assets(prompt_dir: Optional[str] = None) -> PromptAssets:
    base = Path(prompt_dir) if prompt_dir else default_asset_dir()
    values = {}
    for key, filename in ASSET_FILES.items():
        path = base / filename
        if not path.is_file():
            raise AssetError(f"missing prompt asset file: {path}")
        values[key] = path.read_text(encoding="utf-8")
    return PromptAssets(**values)
