"""Training data for the sentence-ordering model.

Positives are brief stories left as-is; each negative moves one sentence of
the same story to a different seeded-random position, so a pair differs in
sentence order only.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from ..textops import split_sentences

logger = logging.getLogger(__name__)


class OrderingLabel(str, Enum):
    IN_ORDER = "in_order"
    OUT_OF_ORDER = "out_of_order"


@dataclass(frozen=True)
class OrderingExample:
    story_text: str
    target_sentence: str
    label: OrderingLabel

    def violations(self) -> list[str]:
        out = []
        if self.target_sentence not in self.story_text:
            out.append("target_sentence does not occur in story_text")
        return out


def build_ordering_dataset(
    stories: list[str], negatives_per_story: int = 1, seed: int = 0
) -> list[OrderingExample]:
    """One (positive, negative) pair per story per negative requested.

    Stories with fewer than three sentences are skipped with a warning.
    """
    if negatives_per_story < 1:
        raise ValueError("negatives_per_story must be >= 1")
    rng = random.Random(seed)
    examples: list[OrderingExample] = []
    for story_index, story in enumerate(stories):
        sentences = split_sentences(story)
        if len(sentences) < 3:
            logger.warning(
                "story %d has %d sentence(s), need 3; skipped",
                story_index,
                len(sentences),
            )
            continue
        for _ in range(negatives_per_story):
            target_index = rng.randrange(len(sentences))
            target = sentences[target_index]
            examples.append(
                OrderingExample(" ".join(sentences), target, OrderingLabel.IN_ORDER)
            )
            # resample until the sentence actually moves
            new_index = target_index
            while new_index == target_index:
                new_index = rng.randrange(len(sentences))
            shuffled = list(sentences)
            shuffled.pop(target_index)
            shuffled.insert(new_index, target)
            examples.append(
                OrderingExample(" ".join(shuffled), target, OrderingLabel.OUT_OF_ORDER)
            )
    return examples


def write_ordering_dataset(path: str | Path, examples: list[OrderingExample]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for example in examples:
            record = {
                "story_text": example.story_text,
                "target_sentence": example.target_sentence,
                "label": example.label.value,
            }
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")


def read_ordering_dataset(path: str | Path) -> list[OrderingExample]:
    examples = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            examples.append(
                OrderingExample(
                    record["story_text"],
                    record["target_sentence"],
                    OrderingLabel(record["label"]),
                )
            )
    return examples
