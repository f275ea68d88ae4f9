"""In-process deterministic language model for tests and offline runs.

Outputs are content-keyed: every response is seeded from the backend seed
plus the request text itself, never from call order, so identical runs (and
resumed runs) reproduce bit-for-bit.

Two override layers sit above the procedural generator:

- scripted responses, keyed by request fingerprint (``c:`` completion,
  ``i:`` insertion, ``d:`` next-token distribution), loaded from a JSON file
  or installed by tests; queues pop FIFO and the last entry sticks
- prompt sniffers, which recognize the pipeline's own prompt layouts
  (outline slots, character probes, scene locations, fact prompts, rolling
  prompts) and produce plausibly-shaped text for each
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import threading
from importlib import resources
from pathlib import Path

from ..errors import BudgetError, ConfigError, ValidationError
from ..seeding import stable_float, stable_hash, stable_rng
from ..textops import first_sentence
from .base import (
    DEFAULT_CONTEXT_WINDOW,
    CompletionRequest,
    DecodingSession,
    LMBackend,
    TokenDistribution,
    WordTokenizer,
)

EOT_MARKER = "<|endoftext|>"

# child-count offsets over a base of 2: mostly 2-3 children, 4-5 now and then
_TARGET_WHEEL = (0, 0, 1, 0, 1, 2, 0, 1, 0, 3)

_SECTION_RE = re.compile(r"#\s*section:\s*(\w+)")
_MARKER_LINE_RE = re.compile(r"^( *)(\d+|[a-z]+)\.$")
_FULL_NAME_RE = re.compile(r"^Full Name: (.+?) \1 ", re.MULTILINE)
_ABOUT_RE = re.compile(r"This context tells us the following about (.+?):")
_ROMAN_VALUES = {"i": 1, "v": 5, "x": 10, "l": 50, "c": 100, "d": 500, "m": 1000}


def load_vocabulary() -> tuple[list[str], dict[str, list[str]]]:
    """Ordered token pieces plus the named pools from the vocab file."""
    text = (
        resources.files("doc_engine")
        .joinpath("backends", "mock_vocab.txt")
        .read_text(encoding="utf-8")
    )
    pieces: list[str] = []
    pools: dict[str, list[str]] = {}
    current: list[str] | None = None
    for line in text.splitlines():
        if line.startswith("#"):
            match = _SECTION_RE.match(line)
            if match:
                current = pools.setdefault(match.group(1), [])
            continue
        if not line.strip():
            continue
        piece = line.strip()
        pieces.append(piece)
        if current is not None:
            current.append(piece)
    return pieces, pools


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def completion_fingerprint(prompt: str) -> str:
    return f"c:{_sha(prompt)}"


def insertion_fingerprint(prefix: str, suffix: str) -> str:
    return f"i:{_sha(prefix)}:{_sha(suffix)}"


def distribution_fingerprint(session_text: str) -> str:
    return f"d:{_sha(session_text)}"


def _roman_to_int(label: str) -> int:
    total = 0
    prev = 0
    for ch in reversed(label):
        value = _ROMAN_VALUES[ch]
        total = total - value if value < prev else total + value
        prev = max(prev, value)
    return total


def _letters_to_index(label: str) -> int:
    index = 0
    for ch in label:
        index = index * 26 + (ord(ch) - ord("a") + 1)
    return index - 1


def parse_marker_line(line: str) -> tuple[int, int] | None:
    """(depth, slot_index) for a bare outline label line, else None."""
    match = _MARKER_LINE_RE.match(line)
    if not match:
        return None
    indent, label = match.groups()
    depth = len(indent) // 8 + 1
    if label.isdigit():
        return depth, int(label) - 1
    if depth >= 3 and set(label) <= set(_ROMAN_VALUES):
        return depth, _roman_to_int(label) - 1
    return depth, _letters_to_index(label)


class MockBackend(LMBackend):
    """Deterministic LMBackend over a small word vocabulary."""

    def __init__(
        self,
        seed: int = 0,
        *,
        script_path: str | Path | None = None,
        scripts: dict[str, list[str]] | None = None,
        distribution_mode: str = "contextual",
        context_window: int = DEFAULT_CONTEXT_WINDOW,
    ) -> None:
        if distribution_mode not in ("contextual", "unigram"):
            raise ConfigError(f"unknown distribution_mode {distribution_mode!r}")
        pieces, pools = load_vocabulary()
        self.tokenizer = WordTokenizer(pieces)
        self.context_window = context_window
        self.eot_marker = EOT_MARKER
        self.seed = seed
        self.distribution_mode = distribution_mode
        self._pools = pools
        self._lock = threading.Lock()
        self._scripts: dict[str, list[str]] = {}
        if script_path is not None:
            loaded = json.loads(Path(script_path).read_text(encoding="utf-8"))
            if not isinstance(loaded, dict):
                raise ConfigError("script file must be a JSON object")
            for key, value in loaded.items():
                if not isinstance(value, list) or not all(
                    isinstance(v, str) for v in value
                ):
                    raise ConfigError(f"script {key!r}: responses must be strings")
                self._scripts[key] = list(value)
        if scripts:
            for key, value in scripts.items():
                self._scripts[key] = list(value)
        gen_sections = (
            "function",
            "function_cap",
            "verbs",
            "nouns",
            "adjectives",
            "first_names",
            "surnames",
            "special",
        )
        gen_pieces = [p for name in gen_sections for p in pools.get(name, [])]
        gen_pieces += [".", ",", "'", "!", "\n"]
        seen: set[int] = set()
        self._gen_ids: list[int] = []
        for piece in gen_pieces:
            tid = self.tokenizer.encode(piece)[0]
            if tid not in seen:
                seen.add(tid)
                self._gen_ids.append(tid)

    # -- scripting -----------------------------------------------------------

    def script_completion(self, prompt: str, responses: list[str]) -> None:
        with self._lock:
            self._scripts.setdefault(completion_fingerprint(prompt), []).extend(responses)

    def script_insertion(self, prefix: str, suffix: str, responses: list[str]) -> None:
        with self._lock:
            self._scripts.setdefault(
                insertion_fingerprint(prefix, suffix), []
            ).extend(responses)

    def script_distribution(self, session_text: str, pieces: list[str]) -> None:
        with self._lock:
            self._scripts.setdefault(
                distribution_fingerprint(session_text), []
            ).extend(pieces)

    def _scripted(self, fingerprint: str) -> str | None:
        with self._lock:
            queue = self._scripts.get(fingerprint)
            if not queue:
                return None
            if len(queue) > 1:
                return queue.pop(0)
            return queue[0]  # last response sticks

    def _has_distribution_scripts(self) -> bool:
        with self._lock:
            return any(key.startswith("d:") for key in self._scripts)

    # -- LMBackend ------------------------------------------------------------

    def complete(self, request: CompletionRequest) -> list[str]:
        problems = request.violations()
        if problems:
            raise ValidationError("; ".join(problems))
        self._check_budget(request.prompt, request.suffix or "", request.max_tokens)
        fingerprint = completion_fingerprint(request.prompt)
        out = []
        for index in range(request.num_candidates):
            scripted = self._scripted(fingerprint)
            if scripted is not None:
                out.append(scripted)
            else:
                text = self._generate(request.prompt, "", index, request)
                out.append(self._apply_stops(text, request.stop_sequences))
        return out

    def _insert_native(
        self, prefix: str, suffix: str, request: CompletionRequest
    ) -> list[str]:
        self._check_budget(prefix, suffix, request.max_tokens)
        fingerprint = insertion_fingerprint(prefix, suffix)
        out = []
        for index in range(request.num_candidates):
            scripted = self._scripted(fingerprint)
            if scripted is not None:
                out.append(scripted)
            else:
                text = self._generate(prefix, suffix, index, request)
                out.append(self._apply_stops(text, request.stop_sequences))
        return out

    def next_distribution(self, session: DecodingSession, k: int) -> TokenDistribution:
        if k < 1:
            raise ValidationError("k must be >= 1")
        if self._has_distribution_scripts():
            forced = self._scripted(distribution_fingerprint(session.text()))
            if forced is not None:
                return self._forced_distribution(forced, k)
        if self.distribution_mode == "contextual":
            tail = [self.tokenizer.piece(t) for t in session.token_ids[-32:]]
            seed = stable_hash(self.seed, "dist", *tail)
        else:
            seed = stable_hash(self.seed, "dist")
        rng = stable_rng(seed)
        temperature = max(session.temperature, 1e-6)
        scale = 4.0 / temperature
        scaled = [rng.random() * scale for _ in self._gen_ids]
        top = max(scaled)
        lse = top + math.log(math.fsum(math.exp(x - top) for x in scaled))
        if k >= len(scaled):
            best = list(zip(scaled, self._gen_ids))
        else:
            best = sorted(zip(scaled, self._gen_ids), reverse=True)[:k]
        return TokenDistribution(
            entries={tid: x - lse for x, tid in best}, k=k
        )

    # -- internals -------------------------------------------------------------

    def _check_budget(self, prompt: str, suffix: str, max_tokens: int) -> None:
        used = self.tokenizer.count(prompt) + (
            self.tokenizer.count(suffix) if suffix else 0
        )
        if used + max_tokens > self.context_window:
            raise BudgetError(
                f"request needs {used} prompt tokens + {max_tokens} new tokens, "
                f"context window is {self.context_window}"
            )

    def _forced_distribution(self, piece: str, k: int) -> TokenDistribution:
        ids = self.tokenizer.encode(piece)
        if len(ids) != 1:
            raise ConfigError(f"scripted distribution piece {piece!r} is not one token")
        forced = ids[0]
        entries = {forced: math.log(0.9)}
        fillers = [tid for tid in self._gen_ids if tid != forced]
        share = 0.09 / max(len(fillers[: k - 1]), 1)
        for tid in fillers[: k - 1]:
            entries[tid] = math.log(share)
        return TokenDistribution(entries=entries, k=k)

    def _apply_stops(self, text: str, stops: list[str]) -> str:
        cut = len(text)
        for stop in stops:
            found = text.find(stop)
            if found != -1:
                cut = min(cut, found)
        return text[:cut]

    # -- procedural generation ---------------------------------------------------

    def _generate(
        self, prompt: str, suffix: str, index: int, request: CompletionRequest
    ) -> str:
        if suffix.startswith("\n\nAdditionally, we know from elsewhere that"):
            return self._gen_fact(prompt, index, request.temperature)
        if prompt.endswith("This scene is located in"):
            return self._gen_location(prompt)
        if "List all characters mentioned in this sentence." in prompt:
            return self._gen_mentions(prompt)
        if prompt.endswith("'s full name:") or (
            "'s full names:" in prompt and prompt.endswith("1.")
        ):
            return self._gen_resolution(prompt)
        if prompt.endswith("Setting: The story is set in"):
            return self._gen_setting(prompt)
        if "List the major characters in the story" in prompt:
            return self._gen_inventory(prompt)
        if "Write a premise for a short story" in prompt:
            return self._gen_premise(prompt)
        if "Summarize the events in this passage" in prompt:
            return self._gen_summary(prompt)
        if "\nOutline:" in prompt:
            lines = prompt.splitlines()
            marker = parse_marker_line(lines[-1]) if lines else None
            if marker is not None:
                return self._gen_outline_event(prompt, marker, index, request.temperature)
        rng = stable_rng(self.seed, "prose", prompt, index, round(request.temperature, 3))
        return self._prose(rng, request.max_tokens)

    # pools ------------------------------------------------------------------

    def _pick(self, rng, section: str) -> str:
        return rng.choice(self._pools[section])

    def _full_name(self, rng) -> str:
        return f"{self._pick(rng, 'first_names')} {self._pick(rng, 'surnames')}"

    def _event_sentence(self, rng, cast: list[str] | None = None) -> str:
        name = self._cast_name(rng, cast)
        verb = self._pick(rng, "verbs")
        adj = self._pick(rng, "adjectives")
        noun = self._pick(rng, "nouns")
        place = self._pick(rng, "places")
        shape = rng.randrange(3)
        if shape == 0:
            return f"{name} {verb} the {adj} {noun} near the {place}."
        if shape == 1:
            other = self._cast_name(rng, cast)
            return f"{name} {verb} {other} at the {place} and {self._pick(rng, 'verbs')} the {noun}."
        return f"{name} {verb} the {noun} in the {adj} {place}."

    def _cast_name(self, rng, cast: list[str] | None) -> str:
        if cast and rng.random() < 0.75:
            return rng.choice(cast)
        return self._pick(rng, "first_names")

    def _prose_sentence(self, rng) -> str:
        name = self._pick(rng, "first_names")
        verb = self._pick(rng, "verbs")
        noun = self._pick(rng, "nouns")
        adj = self._pick(rng, "adjectives")
        shape = rng.randrange(3)
        if shape == 0:
            return f"{name} {verb} the {adj} {noun}."
        if shape == 1:
            return f"The {noun} was {adj} and {name} {verb} it."
        return f"She {verb} the {noun} and {self._pick(rng, 'verbs')} the {adj} {self._pick(rng, 'places')}."

    def _prose(self, rng, max_tokens: int) -> str:
        parts: list[str] = []
        count = 0
        sentences_in_paragraph = 0
        while count < max_tokens:
            sentence = self._prose_sentence(rng)
            if parts:
                if sentences_in_paragraph >= rng.randint(2, 4):
                    parts.append("\n")
                    sentences_in_paragraph = 0
                else:
                    parts.append(" ")
            parts.append(sentence)
            sentences_in_paragraph += 1
            count += self.tokenizer.count(sentence) + 1
        text = "".join(parts)
        ids = self.tokenizer.encode(text)
        if len(ids) > max_tokens:
            text = self.tokenizer.decode(ids[:max_tokens])
        return text

    # sniffed generators --------------------------------------------------------

    def _gen_outline_event(
        self,
        prompt: str,
        marker: tuple[int, int],
        index: int,
        temperature: float,
    ) -> str:
        depth, slot_index = marker
        lines = [line for line in prompt.splitlines() if line.strip()]
        parent_key = "<root>"
        for pos, line in enumerate(lines):
            if "List the main events" in line:
                if pos and lines[pos - 1].strip() != "Outline:":
                    parent_key = lines[pos - 1].strip()
                break
        # branching skews 2-4 with occasional 5s; inner parents sometimes
        # under-produce so retry ladders get hit, but the root always yields
        # a usable top level
        target = 2 + _TARGET_WHEEL[stable_hash(self.seed, "children", parent_key) % 10]
        if depth > 1 and stable_float(self.seed, "fewkids", parent_key) < 0.10:
            target = 1
        terminal_inline = stable_hash(self.seed, "eotstyle", parent_key) % 2 == 1
        if slot_index >= target:
            return f" {EOT_MARKER}"
        rng = stable_rng(
            self.seed, "event", parent_key, depth, slot_index, index,
            round(temperature, 3),
        )
        sentence = self._event_sentence(rng, cast=self._prompt_cast(prompt))
        if terminal_inline and slot_index == target - 1:
            return f" {sentence} {EOT_MARKER}"
        return f" {sentence}"

    def _prompt_cast(self, prompt: str) -> list[str]:
        """First names of the characters listed in the prompt header."""
        block = prompt.split("Characters:\n", 1)
        if len(block) < 2:
            return []
        known = set(self._pools["first_names"])
        cast: list[str] = []
        for line in block[1].split("\n\n", 1)[0].splitlines():
            first = line.split(" ", 1)[0]
            if first in known and first not in cast:
                cast.append(first)
        return cast

    def _gen_mentions(self, prompt: str) -> str:
        event_line = prompt.split("\n", 1)[0]
        rng = stable_rng(self.seed, "mentions", event_line)
        known = set(self._pools["first_names"])
        found = []
        for word in re.findall(r"[A-Za-z']+", event_line):
            if word in known and word not in found:
                found.append(word)
        items = list(found)
        if rng.random() < 0.25 or not items:
            items.append(f"the {self._pick(rng, 'roles')}")
        if rng.random() < 0.15:
            items.append(f"the {self._pick(rng, 'groups')}")
        parts = [f" {items[0]}"]
        for pos, item in enumerate(items[1:], start=2):
            parts.append(f" {pos}. {item}")
        return "".join(parts)

    def _gen_resolution(self, prompt: str) -> str:
        names = _FULL_NAME_RE.findall(prompt)
        if not names:
            return " nobody"
        group = "'s full names:" in prompt
        if group:
            picks = names[-2:] if len(names) >= 2 else names
            parts = [f" {picks[-1]}"]
            if len(picks) == 2:
                parts.append(f" 2. {picks[0]}")
            return "".join(parts)
        question = prompt.rsplit("\n", 1)[-1]
        mention_words = set(re.findall(r"[A-Za-z']+", question.lower())) - {
            "s", "full", "name"
        }
        for name in reversed(names):
            name_words = {w.lower() for w in name.split()}
            if name_words & mention_words:
                return f" {name}"
        return f" {names[-1]}"

    def _gen_fact(self, prompt: str, index: int, temperature: float) -> str:
        event_line = prompt.split("\n", 1)[0]
        about = _ABOUT_RE.search(prompt)
        name = about.group(1) if about else "Someone"
        rng = stable_rng(self.seed, "fact", event_line, name, index, round(temperature, 3))
        first = name.split()[0]
        shape = rng.randrange(4)
        if shape == 0:
            return f" {name} is {self._pick(rng, 'adjectives')}."
        if shape == 1:
            return f" {first} {self._pick(rng, 'verbs')} the {self._pick(rng, 'nouns')}."
        if shape == 2:
            return f" She {self._pick(rng, 'verbs')} the {self._pick(rng, 'adjectives')} {self._pick(rng, 'nouns')}."
        return f" {first} is in the {self._pick(rng, 'places')}."

    def _gen_location(self, prompt: str) -> str:
        leaf_line = prompt.rstrip().rsplit("\n", 1)[-1]
        rng = stable_rng(self.seed, "location", leaf_line)
        if rng.random() < 0.10:
            return ""
        return f" the {self._pick(rng, 'adjectives')} {self._pick(rng, 'places')}."

    def _gen_setting(self, prompt: str) -> str:
        rng = stable_rng(self.seed, "setting", prompt)
        return (
            f" a {self._pick(rng, 'adjectives')} {self._pick(rng, 'places')}"
            f" near the {self._pick(rng, 'nouns')}."
        )

    def _gen_inventory(self, prompt: str) -> str:
        rng = stable_rng(self.seed, "inventory", prompt)
        count = 6 + rng.randrange(3)
        firsts = rng.sample(self._pools["first_names"], count)
        surs = rng.sample(self._pools["surnames"], count)
        lines = []
        for first, sur in zip(firsts, surs):
            role = self._pick(rng, "roles")
            adj = self._pick(rng, "adjectives")
            lines.append(f"{first} {sur} is a {adj} {role}.")
        return "\n\n" + "\n".join(lines)

    def _gen_premise(self, prompt: str) -> str:
        rng = stable_rng(self.seed, "premise", prompt)
        hero = self._full_name(rng)
        friend = self._full_name(rng)
        place = self._pick(rng, "places")
        noun = self._pick(rng, "nouns")
        adj = self._pick(rng, "adjectives")
        sentences = [
            f"{hero} lives in a {self._pick(rng, 'adjectives')} {place} "
            f"and guards the {noun} there.",
            f"When the {noun} is {adj}, {hero.split()[0]} asks {friend} for help.",
            f"Together they cross the {self._pick(rng, 'nouns')} and learn "
            f"what the {self._pick(rng, 'adjectives')} {self._pick(rng, 'places')} hides.",
            f"What they find changes the {self._pick(rng, 'places')} for good.",
        ]
        text = " ".join(sentences)
        while len(text.split()) > 60:
            sentences.pop()
            text = " ".join(sentences)
        return f" {text}"

    def _gen_summary(self, prompt: str) -> str:
        head, _, _ = prompt.rpartition("\n\nSummary:")
        _, _, passage = head.partition("Passage:\n\n")
        paragraphs = [p for p in passage.split("\n") if p.strip()]
        sentences = [first_sentence(p) for p in paragraphs]
        summary = " ".join(s for s in sentences if s)
        return f" {summary}" if summary else " Nothing has happened yet."
