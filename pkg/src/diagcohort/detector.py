"""Self-reported diagnosis detection, cohort building, exclusions and comorbidities."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .corpus import Post, UserAccount, UserStats, normalize_text, strip_quotes
from .patterns import CompiledMatcher, Kind, MatchSpan, closest_pair

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 55

MATCHED = "matched"
EXCLUDED_BY_PATTERN = "excluded_by_pattern"
NO_CONDITION_TERM = "no_condition_term"
NO_INCLUSION = "no_inclusion"
PROXIMITY_FAILED = "proximity_failed"

BOT_NAME = "bot_name"
HIGH_VOLUME = "high_volume"
MANUAL_REMOVED = "manual_removed"
PSYCHOTIC_EXCLUDED = "psychotic_excluded"

MAX_SUBMISSIONS = 1500
MAX_COMMENTS = 200_000

TARGET_LABEL = "BD"
MDD_CONSERVATIVE = "MDD_conservative"
# order of Table-style comorbidity output
COMORBIDITY_LABELS = ("MDD", "Anxiety", "ADHD", "BPD", "PTSD", "Psychotic", "OCD", "ASD", "ED")


@dataclass(frozen=True)
class DiagnosisEvidence:
    post_id: str
    diagnosis_label: str
    decision: str
    inclusion_span: MatchSpan | None = None
    condition_span: MatchSpan | None = None
    distance_chars: int | None = None
    exclusion_pattern_id: int | None = None

    @property
    def matched(self) -> bool:
        return self.decision == MATCHED

    def to_record(self) -> dict:
        def span(s: MatchSpan | None):
            return None if s is None else {"pattern_id": s.pattern_id, "start": s.start, "end": s.end}

        return {
            "post_id": self.post_id,
            "diagnosis_label": self.diagnosis_label,
            "decision": self.decision,
            "inclusion_span": span(self.inclusion_span),
            "condition_span": span(self.condition_span),
            "distance_chars": self.distance_chars,
            "exclusion_pattern_id": self.exclusion_pattern_id,
        }


@dataclass
class CohortEntry:
    user_id: str
    evidence: list[DiagnosisEvidence] = field(default_factory=list)
    flags: set[str] = field(default_factory=set)


@dataclass(frozen=True)
class ComorbidityProfile:
    user_id: str
    diagnoses: frozenset[str]


def matching_text(post: Post) -> str:
    """Normalized "title body" with quoted lines removed from the body."""
    body = strip_quotes(post.body)
    raw = f"{post.title} {body}" if post.title else body
    return normalize_text(raw)


def classify_text(
    text: str,
    matcher: CompiledMatcher,
    threshold_chars: int = DEFAULT_THRESHOLD,
    post_id: str = "",
) -> DiagnosisEvidence:
    label = matcher.label
    spans = matcher.find(text)
    conditions = [s for s in spans if s.kind is Kind.CONDITION]
    if not conditions:
        return DiagnosisEvidence(post_id, label, NO_CONDITION_TERM)
    for s in spans:
        if s.kind is Kind.EXCLUSION:
            return DiagnosisEvidence(post_id, label, EXCLUDED_BY_PATTERN, exclusion_pattern_id=s.pattern_id)
    inclusions = [s for s in spans if s.kind is Kind.INCLUSION]
    if not inclusions:
        return DiagnosisEvidence(post_id, label, NO_INCLUSION)
    distance, cond, incl = closest_pair(conditions, inclusions)
    decision = MATCHED if distance < threshold_chars else PROXIMITY_FAILED
    return DiagnosisEvidence(post_id, label, decision, incl, cond, distance)


def classify_post(
    post: Post,
    matcher: CompiledMatcher,
    threshold_chars: int = DEFAULT_THRESHOLD,
) -> DiagnosisEvidence:
    """Decide whether ``post`` is a self-reported diagnosis statement.

    Checks run in a fixed order and the first failing one names the
    decision: condition term present, no exclusion pattern anywhere in the
    post, an inclusion pattern present, and the closest condition/inclusion
    pair nearer than ``threshold_chars``.
    """
    return classify_text(matching_text(post), matcher, threshold_chars, post.post_id)


def _evidence_order(post: Post) -> tuple[int, str]:
    return (post.created_utc, post.post_id)


def cohort_from_evidence(pairs: Iterable[tuple[Post, DiagnosisEvidence]]) -> dict[str, CohortEntry]:
    """Fold (post, evidence) pairs into cohort entries, sorted by user id."""
    found: dict[str, list[tuple[tuple[int, str], DiagnosisEvidence]]] = {}
    for post, ev in pairs:
        if ev.matched:
            found.setdefault(post.user_id, []).append((_evidence_order(post), ev))
    return {
        uid: CohortEntry(uid, [ev for _, ev in sorted(found[uid], key=lambda x: x[0])])
        for uid in sorted(found)
    }


def detect_cohort(
    posts: Iterable[Post],
    matcher: CompiledMatcher,
    threshold: int = DEFAULT_THRESHOLD,
) -> dict[str, CohortEntry]:
    return cohort_from_evidence((p, classify_post(p, matcher, threshold)) for p in posts)


def flag_bot_candidates(
    user_stats: Mapping[str, UserStats],
    accounts: Mapping[str, UserAccount],
) -> set[tuple[str, str]]:
    """Accounts that need a manual bot check (flags are not removals)."""
    flags = set()
    for uid, st in user_stats.items():
        if st.n_submissions > MAX_SUBMISSIONS or st.n_comments > MAX_COMMENTS:
            flags.add((uid, HIGH_VOLUME))
    for uid, acc in accounts.items():
        name = acc.username.lower()
        if "bot" in name or "auto" in name:
            flags.add((uid, BOT_NAME))
    return flags


@dataclass(frozen=True)
class ReviewDecision:
    user_id: str
    action: str
    reason: str = ""


def load_review(path: str | Path | None) -> dict[str, ReviewDecision]:
    """Read review.csv (user_id, action, reason); missing file means no decisions."""
    if path is None or not Path(path).exists():
        return {}
    decisions = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for rownum, row in enumerate(csv.DictReader(fh), 2):
            action = (row.get("action") or "").strip().lower()
            if action not in ("remove", "keep"):
                raise ValueError(f"{path}: row {rownum}: action must be remove or keep, got {action!r}")
            uid = (row.get("user_id") or "").strip()
            decisions[uid] = ReviewDecision(uid, action, (row.get("reason") or "").strip())
    return decisions


def apply_exclusions(
    cohort: Mapping[str, CohortEntry],
    psychotic_profiles: Mapping[str, ComorbidityProfile] | Iterable[str],
    review: Mapping[str, ReviewDecision],
) -> tuple[dict[str, CohortEntry], dict[str, int]]:
    """Remove psychotic-disorder self-reports, confirmed bots and manual removals.

    Each removed user is counted once, in the first matching class
    (psychotic, bot, manual). Returns the remaining cohort and the counts.
    """
    if isinstance(psychotic_profiles, Mapping):
        psychotic = {u for u, p in psychotic_profiles.items() if "Psychotic" in p.diagnoses}
    else:
        psychotic = set(psychotic_profiles)
    for uid in review:
        if uid not in cohort:
            logger.warning("review file mentions user %s who is not in the cohort", uid)
    counts = {"psychotic": 0, "bot": 0, "manual": 0}
    kept = {}
    for uid, entry in cohort.items():
        removal = review.get(uid)
        remove = removal is not None and removal.action == "remove"
        if uid in psychotic:
            entry.flags.add(PSYCHOTIC_EXCLUDED)
            counts["psychotic"] += 1
        elif remove and entry.flags & {BOT_NAME, HIGH_VOLUME}:
            counts["bot"] += 1
        elif remove:
            entry.flags.add(MANUAL_REMOVED)
            counts["manual"] += 1
        else:
            kept[uid] = entry
    return kept, counts


def post_labels(
    post: Post,
    matchers: Mapping[str, CompiledMatcher],
    threshold: int = DEFAULT_THRESHOLD,
) -> set[str]:
    """Labels for which ``post`` is a matched self-report."""
    text = matching_text(post)
    return {label for label, m in matchers.items() if classify_text(text, m, threshold).matched}


def labels_with_conservative(matched: set[str]) -> set[str]:
    """Add the conservative MDD label when a post matches MDD but not BD."""
    if "MDD" in matched and TARGET_LABEL not in matched:
        return matched | {MDD_CONSERVATIVE}
    return matched


def extract_comorbidities(
    posts: Iterable[Post],
    cohort: Iterable[str],
    matchers: Mapping[str, CompiledMatcher],
    threshold: int = DEFAULT_THRESHOLD,
) -> dict[str, ComorbidityProfile]:
    """Per-user diagnosis sets; BD is implied by cohort membership.

    When ``matchers`` holds both MDD and BD the conservative MDD label is
    derived post by post as well.
    """
    members = set(cohort)
    found: dict[str, set[str]] = {uid: {TARGET_LABEL} for uid in members}
    conservative = "MDD" in matchers and TARGET_LABEL in matchers
    for post in posts:
        if post.user_id not in members:
            continue
        labels = post_labels(post, matchers, threshold)
        if conservative:
            labels = labels_with_conservative(labels)
        found[post.user_id] |= labels
    return {uid: ComorbidityProfile(uid, frozenset(found[uid])) for uid in sorted(found)}


def conservative_mdd(
    posts: Iterable[Post],
    cohort: Iterable[str],
    mdd_matcher: CompiledMatcher,
    bd_matcher: CompiledMatcher,
    threshold: int = DEFAULT_THRESHOLD,
) -> set[str]:
    """Users with an MDD self-report post that is not also a BD self-report post."""
    members = set(cohort)
    users = set()
    for post in posts:
        if post.user_id not in members or post.user_id in users:
            continue
        text = matching_text(post)
        if classify_text(text, mdd_matcher, threshold).matched and not classify_text(
            text, bd_matcher, threshold
        ).matched:
            users.add(post.user_id)
    return users


def comorbidity_rates(
    profiles: Mapping[str, ComorbidityProfile],
    cohort_size: int,
    mdd_policy: str = "plain",
) -> dict[str, float]:
    """Percent of the cohort per label, plus ``any_additional``.

    ``any_additional`` counts users with at least one non-BD diagnosis,
    where MDD means plain MDD or the conservative variant per ``mdd_policy``.
    """
    if cohort_size <= 0:
        raise ValueError("cohort_size must be positive")
    if mdd_policy not in ("plain", "conservative"):
        raise ValueError(f"unknown mdd_policy {mdd_policy!r}")
    labels = list(COMORBIDITY_LABELS) + [MDD_CONSERVATIVE]
    counts = dict.fromkeys(labels, 0)
    any_additional = 0
    drop = MDD_CONSERVATIVE if mdd_policy == "plain" else "MDD"
    for profile in profiles.values():
        for label in profile.diagnoses:
            if label in counts:
                counts[label] += 1
        extra = profile.diagnoses - {TARGET_LABEL, drop}
        if extra:
            any_additional += 1
    rates = {label: counts[label] / cohort_size * 100 for label in labels}
    rates["any_additional"] = any_additional / cohort_size * 100
    return rates
