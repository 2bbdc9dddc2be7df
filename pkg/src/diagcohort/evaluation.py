"""Gold annotations, annotator agreement and per-method accuracy/coverage."""

from __future__ import annotations

import csv
import itertools
import logging
import re
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Iterable, Mapping, Sequence

logger = logging.getLogger(__name__)

VARIABLES = ("bd_diagnosis", "dob", "country", "gender")
UNLABELABLE = "?"
DOB_TOLERANCE_YEARS = 1.0

_ISO2 = re.compile(r"^[A-Z]{2}$")


class GoldError(ValueError):
    """A gold or resolutions file violates its schema."""


@dataclass(frozen=True)
class GoldAnnotation:
    user_id: str
    variable: str
    label: str
    annotator_id: str


def normalize_label(variable: str, label: str) -> str:
    """Canonical label spelling; raises ValueError on vocabulary violations."""
    label = label.strip()
    if label == UNLABELABLE:
        return label
    if variable == "gender":
        label = label.lower()
        if label not in ("f", "m", "trans"):
            raise ValueError(f"gender label must be f, m, trans or ?, got {label!r}")
    elif variable == "bd_diagnosis":
        label = label.lower()
        if label not in ("yes", "no"):
            raise ValueError(f"bd_diagnosis label must be yes or no, got {label!r}")
    elif variable == "country":
        label = label.upper()
        if not _ISO2.match(label):
            raise ValueError(f"country label must be ISO alpha-2 or ?, got {label!r}")
    elif variable == "dob":
        date.fromisoformat(label)
    else:
        raise ValueError(f"unknown variable {variable!r}")
    return label


def load_gold(path: str | Path) -> list[GoldAnnotation]:
    rows: list[GoldAnnotation] = []
    seen: set[tuple[str, str, str]] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"user_id", "variable", "label", "annotator_id"} - set(reader.fieldnames or ())
        if missing:
            raise GoldError(f"{path}: missing columns {sorted(missing)}")
        for rownum, row in enumerate(reader, 2):
            variable = row["variable"].strip()
            if variable not in VARIABLES:
                raise GoldError(f"{path}: row {rownum}: unknown variable {variable!r}")
            try:
                label = normalize_label(variable, row["label"])
            except ValueError as exc:
                raise GoldError(f"{path}: row {rownum}: {exc}") from None
            ann = GoldAnnotation(row["user_id"].strip(), variable, label, row["annotator_id"].strip())
            key = (ann.user_id, ann.variable, ann.annotator_id)
            if key in seen:
                raise GoldError(f"{path}: row {rownum}: duplicate annotation {key}")
            seen.add(key)
            rows.append(ann)
    return rows


def _pairs(annotations: Iterable[GoldAnnotation], variable: str) -> dict[str, list[GoldAnnotation]]:
    by_user: dict[str, list[GoldAnnotation]] = {}
    for ann in annotations:
        if ann.variable == variable:
            by_user.setdefault(ann.user_id, []).append(ann)
    return by_user


def raw_agreement(annotations: Iterable[GoldAnnotation], variable: str) -> float | None:
    """Percent of doubly annotated users with identical labels ("?" included)."""
    agree = total = 0
    for uid, anns in sorted(_pairs(annotations, variable).items()):
        if len(anns) != 2:
            logger.warning("user %s has %d annotations for %s; skipped", uid, len(anns), variable)
            continue
        total += 1
        agree += anns[0].label == anns[1].label
    return agree / total * 100 if total else None


@dataclass
class ResolvedGold:
    labels: dict[tuple[str, str], str]
    unresolved: list[tuple[str, str]]


def load_resolutions(path: str | Path | None) -> dict[tuple[str, str], str]:
    """resolutions.csv: user_id, variable, label."""
    if path is None or not Path(path).exists():
        return {}
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for rownum, row in enumerate(csv.DictReader(fh), 2):
            variable = row["variable"].strip()
            try:
                out[(row["user_id"].strip(), variable)] = normalize_label(variable, row["label"])
            except ValueError as exc:
                raise GoldError(f"{path}: row {rownum}: {exc}") from None
    return out


def resolve_gold(
    annotations: Iterable[GoldAnnotation],
    resolutions: Mapping[tuple[str, str], str],
) -> ResolvedGold:
    grouped: dict[tuple[str, str], set[str]] = {}
    for ann in annotations:
        grouped.setdefault((ann.user_id, ann.variable), set()).add(ann.label)
    labels, unresolved = {}, []
    for key in sorted(grouped):
        found = grouped[key]
        if len(found) == 1:
            labels[key] = next(iter(found))
        elif key in resolutions:
            labels[key] = resolutions[key]
        else:
            unresolved.append(key)
    return ResolvedGold(labels, unresolved)


def gold_for(resolved: ResolvedGold, variable: str) -> dict[str, str]:
    """Scorable gold labels for one variable: drops "?" and, for gender, "trans"."""
    out = {}
    for (uid, var), label in resolved.labels.items():
        if var != variable or label == UNLABELABLE:
            continue
        if variable == "gender" and label == "trans":
            continue
        out[uid] = label
    return out


def labels_match(variable: str, predicted: str, gold: str) -> bool:
    if variable == "dob":
        p, g = date.fromisoformat(predicted), date.fromisoformat(gold)
        return abs((p - g).days) <= DOB_TOLERANCE_YEARS * 365.25
    if variable == "country":
        return predicted.upper() == gold.upper()
    return predicted.lower() == gold.lower()


@dataclass(frozen=True)
class EvaluationResult:
    variable: str
    method_name: str
    n_gold: int
    n_predicted_on_gold: int
    n_correct: int
    n_predicted_all: int
    population_size: int
    notes: str = ""

    @property
    def n_scored(self) -> int:
        return self.n_predicted_on_gold

    @property
    def accuracy(self) -> float | None:
        return self.n_correct / self.n_scored if self.n_scored else None

    @property
    def coverage_test(self) -> float | None:
        return self.n_predicted_on_gold / self.n_gold if self.n_gold else None

    @property
    def coverage_all(self) -> float:
        return self.n_predicted_all / self.population_size


def score_method(
    predictions: Mapping[str, str | None],
    gold: Mapping[str, str],
    population_size: int,
    *,
    variable: str,
    method_name: str = "",
    notes: str = "",
) -> EvaluationResult:
    """Accuracy over gold users with a prediction, coverage over gold users
    and over the whole population. ``None`` predictions count as missing."""
    if population_size <= 0:
        raise ValueError("population_size must be positive")
    predicted = {u: v for u, v in predictions.items() if v is not None}
    on_gold = [u for u in gold if u in predicted]
    correct = sum(labels_match(variable, str(predicted[u]), gold[u]) for u in on_gold)
    return EvaluationResult(
        variable=variable,
        method_name=method_name,
        n_gold=len(gold),
        n_predicted_on_gold=len(on_gold),
        n_correct=correct,
        n_predicted_all=len(predicted),
        population_size=population_size,
        notes=notes,
    )


@dataclass(frozen=True)
class AgreementReport:
    joint: float | None
    n_joint: int
    pairwise: dict[tuple[str, str], tuple[float | None, int]]


def agreement_rate(methods: Mapping[str, Mapping[str, str | None]]) -> AgreementReport:
    """Share of users with identical labels among those every method covers,
    plus the same for each pair of methods."""
    if len(methods) < 2:
        raise ValueError("agreement needs at least two methods")
    covered = {
        name: {u: v for u, v in preds.items() if v is not None} for name, preds in methods.items()
    }

    def rate(names: Sequence[str]) -> tuple[float | None, int]:
        users = set.intersection(*(set(covered[n]) for n in names))
        if not users:
            return None, 0
        same = sum(len({covered[n][u] for n in names}) == 1 for u in users)
        return same / len(users) * 100, len(users)

    names = sorted(covered)
    joint, n_joint = rate(names)
    pairwise = {pair: rate(pair) for pair in itertools.combinations(names, 2)}
    return AgreementReport(joint, n_joint, pairwise)


def format_pct(value: float | None) -> str:
    return "n/a" if value is None else f"{value * 100:.1f}"
