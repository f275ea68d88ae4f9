"""Sentence-ordering model: dataset reading, training, artifact serving.

The training data is the engine's line-delimited JSON export: one record per
line with story_text, target_sentence, and label ("in_order" or
"out_of_order").  The model is a logistic regression over neighbor-overlap
features; the artifact records its held-out accuracy so a deployment can
refuse a model that failed to beat chance.
"""

from __future__ import annotations

import json
import logging
import pickle
import random
from dataclasses import dataclass
from pathlib import Path

from sklearn.linear_model import LogisticRegression

from .lexical import jaccard, split_sentences

logger = logging.getLogger(__name__)

LABELS = ("in_order", "out_of_order")
ARTIFACT_FORMAT = 1


@dataclass(frozen=True)
class OrderingRecord:
    story_text: str
    target_sentence: str
    label: str


def read_dataset(path: str | Path) -> list[OrderingRecord]:
    """Parse the exported jsonl; schema problems raise ValueError."""
    records: list[OrderingRecord] = []
    with open(path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"line {line_number}: invalid JSON") from exc
            try:
                record = OrderingRecord(
                    story_text=data["story_text"],
                    target_sentence=data["target_sentence"],
                    label=data["label"],
                )
            except (KeyError, TypeError) as exc:
                raise ValueError(f"line {line_number}: missing field {exc}") from exc
            if record.label not in LABELS:
                raise ValueError(
                    f"line {line_number}: unknown label {record.label!r}"
                )
            if record.target_sentence not in record.story_text:
                raise ValueError(
                    f"line {line_number}: target sentence not found in story"
                )
            records.append(record)
    return records


def featurize(story_text: str, target_sentence: str) -> list[float]:
    """Neighbor-fit features for one (story, sentence) pair."""
    sentences = split_sentences(story_text)
    if target_sentence in sentences:
        index = sentences.index(target_sentence)
    else:  # substring fallback; the schema check normally prevents this
        index = 0
    count = max(len(sentences), 1)
    neighbors = [sentences[i] for i in (index - 1, index + 1)
                 if 0 <= i < len(sentences)]
    others = [s for i, s in enumerate(sentences)
              if i != index and s not in neighbors]
    near = (sum(jaccard(target_sentence, n) for n in neighbors) / len(neighbors)
            if neighbors else 0.0)
    far = (sum(jaccard(target_sentence, o) for o in others) / len(others)
           if others else 0.0)
    return [
        near,
        far,
        near - far,
        index / count,
        len(neighbors) / 2.0,
    ]


@dataclass
class OrderingModel:
    classifier: LogisticRegression
    heldout_accuracy: float
    training_size: int

    def probability_in_order(self, context: str, sentence: str) -> float:
        features = [featurize(context, sentence)]
        in_order_column = list(self.classifier.classes_).index(1)
        return float(self.classifier.predict_proba(features)[0][in_order_column])

    def save(self, path: str | Path) -> None:
        payload = {
            "format": ARTIFACT_FORMAT,
            "classifier": self.classifier,
            "heldout_accuracy": self.heldout_accuracy,
            "training_size": self.training_size,
        }
        with open(path, "wb") as handle:
            pickle.dump(payload, handle)


def load_model(path: str | Path) -> OrderingModel:
    with open(path, "rb") as handle:
        try:
            payload = pickle.load(handle)
        except Exception as exc:  # pickle raises a grab bag on corrupt input
            raise ValueError(f"{path}: not a readable artifact ({exc})") from exc
    if not isinstance(payload, dict) or payload.get("format") != ARTIFACT_FORMAT:
        raise ValueError(f"{path}: not an ordering-model artifact")
    return OrderingModel(
        classifier=payload["classifier"],
        heldout_accuracy=payload["heldout_accuracy"],
        training_size=payload["training_size"],
    )


def train_ordering_model(
    records: list[OrderingRecord],
    *,
    heldout_fraction: float = 0.25,
    seed: int = 0,
) -> OrderingModel:
    """Fit the classifier and measure accuracy on a held-out split."""
    if not records:
        raise ValueError("ordering dataset is empty")
    positives = sum(1 for r in records if r.label == "in_order")
    logger.info(
        "ordering dataset: %d examples (%d in order / %d out of order)",
        len(records), positives, len(records) - positives,
    )
    rows = [(featurize(r.story_text, r.target_sentence),
             1 if r.label == "in_order" else 0)
            for r in records]
    random.Random(seed).shuffle(rows)
    holdout = max(1, int(len(rows) * heldout_fraction))
    test_rows, train_rows = rows[:holdout], rows[holdout:]
    if not train_rows:
        train_rows = test_rows
    classifier = LogisticRegression(max_iter=500)
    classifier.fit([x for x, _ in train_rows], [y for _, y in train_rows])
    correct = sum(
        1 for x, y in test_rows if classifier.predict([x])[0] == y
    )
    accuracy = correct / len(test_rows)
    logger.info("held-out accuracy %.3f on %d examples", accuracy, len(test_rows))
    return OrderingModel(
        classifier=classifier,
        heldout_accuracy=accuracy,
        training_size=len(train_rows),
    )
