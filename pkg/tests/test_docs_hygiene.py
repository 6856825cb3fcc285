"""Source and docs stay free of citation-style references."""

import re
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
FILES = [*(ROOT / "src").rglob("*.py"), *(ROOT / "tests").glob("*.py"), *(ROOT / "benchmarks").glob("*.py"),
         ROOT / "README.md"]
BANNED = [r"\bthe paper\b", r"\bthe spec\b", r"\bEq\.\s*\(", r"§", "—", r"Algorithm 1", r"\bTheorem\b", r"\bLemma\b"]


def test_no_citation_references():
    hits = []
    for f in FILES:
        if f.name == "test_docs_hygiene.py":
            continue
        text = f.read_text()
        hits += [f"{f.name}: {pat}" for pat in BANNED if re.search(pat, text, re.IGNORECASE)]
    assert not hits, hits
