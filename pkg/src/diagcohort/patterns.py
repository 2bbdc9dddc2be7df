"""Pattern DSL and the multi-pattern matcher used for diagnosis detection.

A pattern is a line of text such as ``my recent CONDITION diagnos*``:

* ``CONDITION`` and ``DOCTOR`` are placeholders, expanded with the
  condition-term list of one diagnosis label and the doctor-term list.
* ``*`` may only close a word; ``diagnos*`` matches the stem followed by any
  run of word characters, ending at a word boundary.
* Alternatives are anchored at word boundaries on both sides.

Patterns are lowercased (through :func:`normalize_text`) when compiled, so
they must be matched against normalized text.

All alternatives of one matcher live in a single character trie whose
wildcard steps are explicit edges. A regular expression built from the
literal heads of the alternatives finds candidate start positions at C
speed; the trie is only walked from those positions.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

from .corpus import APOSTROPHE_FOLD, normalize_text

PLACEHOLDERS = ("CONDITION", "DOCTOR")
_CAPS_WORD = re.compile(r"(?<![\w-])[A-Z][A-Z_]+(?![\w-])")
_WORD_RUN = re.compile(r"\w*")
_IS_WORD = re.compile(r"\w")


class PatternError(ValueError):
    """Invalid pattern text or an expansion that cannot be performed."""


class Kind(str, Enum):
    INCLUSION = "inclusion"
    EXCLUSION = "exclusion"
    CONDITION = "condition"
    DOCTOR = "doctor"


class MatchSpan(NamedTuple):
    pattern_id: int
    start: int
    end: int
    kind: Kind


def _check_wildcards(pattern: str) -> None:
    for i, ch in enumerate(pattern):
        if ch != "*":
            continue
        before = pattern[i - 1] if i > 0 else ""
        after = pattern[i + 1] if i + 1 < len(pattern) else ""
        if not before or not _IS_WORD.match(before):
            raise PatternError(f"'*' must follow a word character in {pattern!r}")
        if after and (_IS_WORD.match(after) or after == "*"):
            raise PatternError(f"'*' in the middle of a word in {pattern!r}")


def parse_pattern_file(text: str, *, placeholders: bool = True) -> list[str]:
    """Parse one pattern per line; ``#`` lines are comments.

    With ``placeholders=False`` (term lists) ALL-CAPS words are ordinary
    text, since terms such as ``BD-II`` are written in capitals.
    """
    patterns = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            _check_wildcards(line)
        except PatternError as exc:
            raise PatternError(f"line {lineno}: {exc}") from None
        if placeholders:
            for m in _CAPS_WORD.finditer(line):
                if m.group() not in PLACEHOLDERS:
                    raise PatternError(f"line {lineno}: unknown placeholder {m.group()!r}")
        patterns.append(line)
    return patterns


def load_pattern_file(path: str | Path, *, placeholders: bool = True) -> list[str]:
    return parse_pattern_file(Path(path).read_text(encoding="utf-8"), placeholders=placeholders)


_PLACEHOLDER_RE = re.compile(r"(?<![\w-])(" + "|".join(PLACEHOLDERS) + r")(?![\w-])")


def expand_placeholders(
    pattern: str,
    condition_terms: Sequence[str],
    doctor_terms: Sequence[str],
) -> list[str]:
    """All literal (wildcard-bearing) alternatives of ``pattern``.

    Every placeholder occurrence is expanded independently, so a pattern
    with two placeholders yields the product of the term lists.
    """
    pieces = _PLACEHOLDER_RE.split(pattern)
    # odd indices of a capturing split are the placeholders
    choices: list[Sequence[str]] = []
    for i, piece in enumerate(pieces):
        if i % 2 == 0:
            choices.append((piece,))
            continue
        terms = condition_terms if piece == "CONDITION" else doctor_terms
        if not terms:
            raise PatternError(f"{pattern!r} uses {piece} but its term list is empty")
        choices.append(tuple(terms))
    return ["".join(combo) for combo in itertools.product(*choices)]


@dataclass
class PatternSet:
    inclusion_patterns: list[str]
    exclusion_patterns: list[str]
    condition_terms: dict[str, list[str]]
    doctor_terms: list[str]

    @classmethod
    def from_directory(cls, path: str | Path) -> "PatternSet":
        """Load ``inclusion.txt``, ``exclusion.txt``, ``doctor.txt`` and
        ``conditions/<LABEL>.txt`` from a pattern directory."""
        root = Path(path)
        conditions = {
            p.stem: load_pattern_file(p, placeholders=False)
            for p in sorted((root / "conditions").glob("*.txt"))
        }
        exclusion_file = root / "exclusion.txt"
        return cls(
            inclusion_patterns=load_pattern_file(root / "inclusion.txt"),
            exclusion_patterns=load_pattern_file(exclusion_file) if exclusion_file.exists() else [],
            condition_terms=conditions,
            doctor_terms=load_pattern_file(root / "doctor.txt", placeholders=False),
        )

    @property
    def labels(self) -> list[str]:
        return sorted(self.condition_terms)


@dataclass(frozen=True)
class Alternative:
    """One placeholder-free alternative, split into literal and wildcard parts."""

    text: str
    kind: Kind
    pattern_id: int
    parts: tuple[str | None, ...] = field(compare=False)  # None marks a wildcard


def _split_parts(text: str) -> tuple[str | None, ...]:
    parts: list[str | None] = []
    for i, chunk in enumerate(text.split("*")):
        if i:
            parts.append(None)
        if chunk:
            parts.append(chunk)
    return tuple(parts)


def _dedupe_key(pattern: str) -> str:
    # normalize the literal pieces only; placeholders keep their capitals
    pieces = _PLACEHOLDER_RE.split(" ".join(pattern.split()))
    return "".join(p if i % 2 else p.lower().translate(APOSTROPHE_FOLD) for i, p in enumerate(pieces))


def _dedupe(patterns: Iterable[str]) -> list[tuple[int, str]]:
    """First occurrence of each distinct pattern, with its original index."""
    seen: set[str] = set()
    out = []
    for pid, pattern in enumerate(patterns):
        key = _dedupe_key(pattern)
        if key in seen:
            continue
        seen.add(key)
        out.append((pid, pattern))
    return out


def build_alternatives(pattern_set: PatternSet, diagnosis_label: str) -> list[Alternative]:
    if diagnosis_label not in pattern_set.condition_terms:
        raise PatternError(f"no condition terms for label {diagnosis_label!r}")
    conditions = pattern_set.condition_terms[diagnosis_label]
    doctors = pattern_set.doctor_terms
    alternatives: list[Alternative] = []
    seen: set[tuple[str, Kind, int]] = set()

    def add(text: str, kind: Kind, pid: int) -> None:
        text = normalize_text(text)
        if not text:
            return
        _check_wildcards(text)
        key = (text, kind, pid)
        if key not in seen:
            seen.add(key)
            alternatives.append(Alternative(text, kind, pid, _split_parts(text)))

    for pid, term in _dedupe(conditions):
        add(term, Kind.CONDITION, pid)
    for pid, term in _dedupe(doctors):
        add(term, Kind.DOCTOR, pid)
    for kind, patterns in ((Kind.INCLUSION, pattern_set.inclusion_patterns),
                           (Kind.EXCLUSION, pattern_set.exclusion_patterns)):
        for pid, pattern in _dedupe(patterns):
            for alt in expand_placeholders(pattern, conditions, doctors):
                add(alt, kind, pid)
    return alternatives


def _left_ok(text: str, s: int) -> bool:
    return s == 0 or not (_IS_WORD.match(text, s - 1) and _IS_WORD.match(text, s))


def _right_ok(text: str, e: int) -> bool:
    return e == len(text) or not (_IS_WORD.match(text, e - 1) and _IS_WORD.match(text, e))


class _Node:
    __slots__ = ("children", "wild", "terminals")

    def __init__(self) -> None:
        self.children: dict[str, _Node] = {}
        self.wild: _Node | None = None
        self.terminals: list[tuple[Kind, int]] = []


def _trie_regex(words: Iterable[str]) -> str:
    """Regex source equivalent to an alternation of ``words``, factored as a trie."""
    trie: dict = {}
    for word in words:
        node = trie
        for ch in word:
            node = node.setdefault(ch, {})
        node[""] = {}

    def emit(node: dict) -> str:
        ends = "" in node
        branches = [re.escape(ch) + emit(child) for ch, child in sorted(node.items()) if ch]
        if not branches:
            return ""
        body = branches[0] if len(branches) == 1 else "(?:" + "|".join(branches) + ")"
        if ends:
            # a shorter word ends here; the rest is optional
            return "(?:" + body + ")?"
        return body

    return emit(trie)


class CompiledMatcher:
    """Immutable matcher for one diagnosis label of a :class:`PatternSet`."""

    def __init__(self, alternatives: Sequence[Alternative], label: str = "") -> None:
        self.label = label
        self.alternatives: tuple[Alternative, ...] = tuple(alternatives)
        self._root = _Node()
        for alt in self.alternatives:
            node = self._root
            for part in alt.parts:
                if part is None:
                    if node.wild is None:
                        node.wild = _Node()
                    node = node.wild
                    continue
                for ch in part:
                    child = node.children.get(ch)
                    if child is None:
                        child = node.children[ch] = _Node()
                    node = child
            node.terminals.append((alt.kind, alt.pattern_id))
        heads = {alt.parts[0] for alt in self.alternatives}
        if heads:
            self._prefilter = re.compile(r"(?=(?:(?<!\w)|(?!\w))" + _trie_regex(heads) + ")")
        else:
            self._prefilter = None

    def __len__(self) -> int:
        return len(self.alternatives)

    def count(self, kind: Kind) -> int:
        return sum(1 for alt in self.alternatives if alt.kind is kind)

    def find(self, text: str) -> list[MatchSpan]:
        if self._prefilter is None:
            return []
        found: set[MatchSpan] = set()
        n = len(text)
        for m in self._prefilter.finditer(text):
            s = m.start()
            stack = [(self._root, s)]
            while stack:
                node, pos = stack.pop()
                if node.terminals and pos > s and _right_ok(text, pos):
                    for kind, pid in node.terminals:
                        found.add(MatchSpan(pid, s, pos, kind))
                if node.wild is not None:
                    stack.append((node.wild, _WORD_RUN.match(text, pos).end()))
                if pos < n:
                    child = node.children.get(text[pos])
                    if child is not None:
                        stack.append((child, pos + 1))
        return sorted(found, key=_span_key)


def _span_key(span: MatchSpan) -> tuple[int, int, int, str]:
    return (span.start, span.end, span.pattern_id, span.kind.value)


def compile_matcher(pattern_set: PatternSet, diagnosis_label: str) -> CompiledMatcher:
    return CompiledMatcher(build_alternatives(pattern_set, diagnosis_label), diagnosis_label)


def find_matches(matcher: CompiledMatcher, normalized_text: str) -> list[MatchSpan]:
    """Every occurrence of every alternative, sorted by start, end, pattern id."""
    return matcher.find(normalized_text)


def span_distance(a: MatchSpan, b: MatchSpan) -> int:
    """Characters between the nearest endpoints; 0 when the spans touch or overlap."""
    return max(0, b.start - a.end, a.start - b.end)


def closest_pair(
    condition_spans: Iterable[MatchSpan],
    inclusion_spans: Iterable[MatchSpan],
) -> tuple[int, MatchSpan, MatchSpan] | None:
    """Minimum-distance (distance, condition, inclusion) triple, first in span order on ties."""
    inclusion_spans = list(inclusion_spans)
    best = None
    for c in condition_spans:
        for i in inclusion_spans:
            d = span_distance(c, i)
            if best is None or d < best[0]:
                best = (d, c, i)
                if d == 0:
                    return best
    return best


def proximity_satisfied(
    condition_spans: Iterable[MatchSpan],
    inclusion_spans: Iterable[MatchSpan],
    threshold_chars: int,
) -> bool:
    if threshold_chars < 0:
        raise ValueError("threshold_chars must be >= 0")
    pair = closest_pair(condition_spans, inclusion_spans)
    return pair is not None and pair[0] < threshold_chars


def naive_find_matches(alternatives: Iterable[Alternative], text: str) -> list[MatchSpan]:
    """Reference scanner: try every alternative at every offset.

    Independent of the trie and the prefilter; kept for tests and audits.
    """
    def is_word(ch: str) -> bool:
        return ch.isalnum() or ch == "_"

    n = len(text)
    found = set()
    for alt in alternatives:
        for s in range(n):
            if s > 0 and is_word(text[s - 1]) and is_word(text[s]):
                continue
            pos = s
            ok = True
            for part in alt.parts:
                if part is None:
                    while pos < n and is_word(text[pos]):
                        pos += 1
                elif text.startswith(part, pos):
                    pos += len(part)
                else:
                    ok = False
                    break
            if not ok or pos == s:
                continue
            if pos < n and is_word(text[pos - 1]) and is_word(text[pos]):
                continue
            found.add(MatchSpan(alt.pattern_id, s, pos, alt.kind))
    return sorted(found, key=_span_key)
