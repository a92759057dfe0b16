"""Text normalization shared by the corpus, graph, and embedding layers.

All label matching in the toolkit is exact token match after this
normalization; there is no fuzzy entity linking.
"""

import re

_NON_WORD = re.compile(r"[^\w\s]+", flags=re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase, strip punctuation, split on whitespace."""
    return _NON_WORD.sub(" ", text.lower()).split()


def normalize_label(label: str) -> str:
    """Canonical concept label: case-folded, whitespace collapsed.

    Used as the stable concept id, so identical input files always
    produce identical ids.
    """
    return " ".join(label.casefold().split())
