"""Age, gender and country profiling of cohort users.

Self-reported age/gender comes from bracketed title tokens such as
``I [17f] just broke up``. Language-use age groups, gender scores, username
gender scores and location coordinates come from external models through a
predictions file. The hybrid methods take the most precise available source:
username > self-report > language use for gender, self-report > language use
for age.
"""

from __future__ import annotations

import csv
import json
import math
import re
import statistics
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import SUBMISSION, Post, UserAccount, normalize_text

DAYS_PER_YEAR = 365.25
SECONDS_PER_YEAR = DAYS_PER_YEAR * 86400
MIN_AGE = 13
MAX_AGE = 99
MAX_DOB_SPREAD_YEARS = 3.0

SELF_REPORTED = "self_reported"
LANGUAGE_USE = "language_use"
USERNAME = "username"
NONE = "none"

AGE_REVIEW_LOW = "age_review_low"
AGE_REVIEW_HIGH = "age_review_high"
AGE_DISCARDED_UNDER13 = "age_discarded_under13"

REVIEW_LOW_MEAN_AGE = 16
REVIEW_HIGH_MEAN_AGE = 60

# external age model buckets -> [low, high) ages at the user's latest post
HAM_AGE_GROUPS: dict[str, tuple[float, float]] = {
    "<14": (13.0, 14.0),
    "14-23": (14.0, 24.0),
    "24-45": (24.0, 46.0),
    "46-65": (46.0, 66.0),
    "66+": (66.0, 90.0),
}
REPORT_AGE_GROUPS = ("13-17", "18-29", "30-49", "50-64", "65+")
_REPORT_BOUNDS = ((18, "13-17"), (30, "18-29"), (50, "30-49"), (65, "50-64"))

USERNAME_MALE_MAX = 0.1
USERNAME_FEMALE_MIN = 0.9
USERNAME_MODEL_ID = "username"

GRID_STEP = 0.5
COUNTRY_FALLBACK_DEGREES = 2.0
UNKNOWN_COUNTRY = "unknown"


@dataclass(frozen=True)
class SelfReportCandidate:
    post_id: str
    age: int
    gender: str
    span: tuple[int, int]
    first_person: bool


_AGE_TOKEN = re.compile(
    r"(?P<open>[\[(])\s?"
    r"(?:(?P<age1>\d{2})\s?/?\s?(?P<g1>[fm])|(?P<g2>[fm])\s?/?\s?(?P<age2>\d{2}))"
    r"\s?(?P<close>[\])])"
)
_PAIRS = {"[": "]", "(": ")"}
# pronoun, optional contraction ("i'm"), then only spaces/punctuation
_PRONOUN_BEFORE = re.compile(r"(?<!\w)(?:i|me|my)((?:'[a-z]{1,2})?[^\w]*)$")
_MAX_PRONOUN_GAP = 3


def extract_self_report(title: str, post_id: str = "") -> list[SelfReportCandidate]:
    """Bracketed age/gender tokens in a submission title.

    Offsets refer to the normalized title. A token counts as first person
    when an ``i``/``me``/``my`` ends at most three non-space characters
    before it (``I [17f]``, ``I'm (25m)``).
    """
    text = normalize_text(title)
    out = []
    for m in _AGE_TOKEN.finditer(text):
        if _PAIRS[m.group("open")] != m.group("close"):
            continue
        age = int(m.group("age1") or m.group("age2"))
        if not MIN_AGE <= age <= MAX_AGE:
            continue
        gender = m.group("g1") or m.group("g2")
        before = _PRONOUN_BEFORE.search(text, 0, m.start())
        first_person = before is not None and len(before.group(1).replace(" ", "")) <= _MAX_PRONOUN_GAP
        out.append(SelfReportCandidate(post_id, age, gender, (m.start(), m.end()), first_person))
    return out


def _utc(ts: float) -> datetime:
    return datetime.fromtimestamp(ts, tz=timezone.utc)


def _midnight_ts(d: date) -> float:
    return datetime(d.year, d.month, d.day, tzinfo=timezone.utc).timestamp()


def _dob_timestamp(age_years: float, post_utc: float) -> float:
    return post_utc - age_years * SECONDS_PER_YEAR


def estimate_dob(age_years: float, post_utc: float) -> date:
    """Post date minus ``age_years`` Julian years."""
    if not MIN_AGE <= age_years <= MAX_AGE:
        raise ValueError(f"age {age_years} outside [{MIN_AGE}, {MAX_AGE}]")
    return _utc(_dob_timestamp(age_years, post_utc)).date()


def age_at(dob: date, utc: float) -> float:
    return (utc - _midnight_ts(dob)) / SECONDS_PER_YEAR


def choose_self_report(
    candidates: Sequence[SelfReportCandidate],
    post_times: Mapping[str, float],
) -> tuple[date | None, str | None] | None:
    """Reduce a user's candidates to one (dob, gender) pair.

    First-person candidates win over the rest. The dob is the median of the
    per-candidate dobs, dropped when they spread over more than three years.
    Gender is the majority vote, dropped on a tie. ``None`` without
    candidates.
    """
    if not candidates:
        return None
    kept = [c for c in candidates if c.first_person] or list(candidates)
    dobs = [_dob_timestamp(c.age, post_times[c.post_id]) for c in kept]
    dob = None
    if max(dobs) - min(dobs) <= MAX_DOB_SPREAD_YEARS * SECONDS_PER_YEAR:
        dob = _utc(statistics.median(dobs)).date()
    votes = Counter(c.gender for c in kept).most_common()
    gender = votes[0][0]
    if len(votes) > 1 and votes[1][1] == votes[0][1]:
        gender = None
    return dob, gender


def posting_ages(dob: date, post_times: Iterable[float]) -> tuple[float, float, bool]:
    """(age at first post, mean age over all posts, any post before age 13)."""
    ages = [age_at(dob, t) for t in post_times]
    if not ages:
        raise ValueError("posting_ages needs at least one post")
    return min(ages), statistics.fmean(ages), min(ages) < MIN_AGE


def bucket_age(age_years: float) -> str:
    if age_years < MIN_AGE:
        raise ValueError(f"age {age_years} below {MIN_AGE}")
    for upper, label in _REPORT_BOUNDS:
        if age_years < upper:
            return label
    return "65+"


def language_use_dob(age_group: str, last_post_utc: float) -> date:
    """Midpoint dob of a model age group anchored at the user's latest post."""
    try:
        low, high = HAM_AGE_GROUPS[age_group]
    except KeyError:
        raise ValueError(f"unknown age group {age_group!r}") from None
    return _utc(_dob_timestamp((low + high) / 2, last_post_utc)).date()


def username_gender_decision(score: float | None) -> str | None:
    if score is None:
        return None
    if score <= USERNAME_MALE_MAX:
        return "m"
    if score >= USERNAME_FEMALE_MIN:
        return "f"
    return None


def backend_gender_decision(score: float | None) -> str | None:
    if score is None:
        return None
    return "f" if score >= 0.5 else "m"


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    dob_estimate: date | None = None
    age_source: str = NONE
    first_post_age: float | None = None
    mean_posting_age: float | None = None
    age_group_first_post: str | None = None
    age_group_mean: str | None = None
    gender: str | None = None
    gender_source: str = NONE
    country: str | None = None
    flags: frozenset[str] = frozenset()
    # per-method outputs kept for evaluation: {"age": {...}, "gender": {...}}
    methods: Mapping[str, Mapping[str, object]] = field(default_factory=dict)

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["dob_estimate"] = self.dob_estimate.isoformat() if self.dob_estimate else None
        rec["flags"] = sorted(self.flags)
        for key in ("first_post_age", "mean_posting_age"):
            if rec[key] is not None:
                rec[key] = round(rec[key], 4)
        rec["methods"] = {
            attr: {m: (v.isoformat() if isinstance(v, date) else v) for m, v in sorted(values.items())}
            for attr, values in sorted(self.methods.items())
        }
        return rec

    @classmethod
    def from_record(cls, rec: Mapping) -> "UserProfile":
        rec = dict(rec)
        if rec.get("dob_estimate"):
            rec["dob_estimate"] = date.fromisoformat(rec["dob_estimate"])
        rec["flags"] = frozenset(rec.get("flags", ()))
        methods = {}
        for attr, values in rec.get("methods", {}).items():
            methods[attr] = {
                m: (date.fromisoformat(v) if attr == "age" and isinstance(v, str) else v)
                for m, v in values.items()
            }
        rec["methods"] = methods
        return cls(**rec)


def with_ages(profile: UserProfile, dob: date | None, source: str, post_times: Sequence[float]) -> UserProfile:
    """Set dob, source, posting ages and report groups in one step."""
    if dob is None or not post_times:
        return replace(profile, dob_estimate=None, age_source=NONE, first_post_age=None,
                       mean_posting_age=None, age_group_first_post=None, age_group_mean=None)
    first, mean, under13 = posting_ages(dob, post_times)
    flags = set(profile.flags)
    if under13:
        # a post before age 13 is implausible on Reddit; route to review
        flags.add(AGE_REVIEW_LOW)
    return replace(
        profile,
        dob_estimate=dob,
        age_source=source,
        first_post_age=first,
        mean_posting_age=mean,
        age_group_first_post=bucket_age(first) if first >= MIN_AGE else None,
        age_group_mean=bucket_age(mean) if mean >= MIN_AGE else None,
        flags=frozenset(flags),
    )


def apply_age_corrections(
    profile: UserProfile,
    account_created_utc: float | None,
    language_dob: date | None = None,
) -> UserProfile:
    """Flag implausible self-reported ages and drop under-13 model ages.

    Self-reported mean posting ages below 16 or above 60 get review flags
    (values stay). A language-use dob that makes the user younger than 13
    at sign-up adds ``age_discarded_under13``, which :func:`hybrid_age`
    honours.
    """
    flags = set(profile.flags)
    if profile.age_source == SELF_REPORTED and profile.mean_posting_age is not None:
        if profile.mean_posting_age < REVIEW_LOW_MEAN_AGE:
            flags.add(AGE_REVIEW_LOW)
        elif profile.mean_posting_age > REVIEW_HIGH_MEAN_AGE:
            flags.add(AGE_REVIEW_HIGH)
    if language_dob is not None and account_created_utc is not None:
        if age_at(language_dob, account_created_utc) < MIN_AGE:
            flags.add(AGE_DISCARDED_UNDER13)
    return replace(profile, flags=frozenset(flags))


def hybrid_age(profile: UserProfile, language_dob: date | None) -> tuple[date | None, str]:
    if profile.age_source == SELF_REPORTED and profile.dob_estimate is not None:
        return profile.dob_estimate, SELF_REPORTED
    if language_dob is not None and AGE_DISCARDED_UNDER13 not in profile.flags:
        return language_dob, LANGUAGE_USE
    return None, NONE


def hybrid_gender(
    profile: UserProfile,
    username_score: float | None,
    backend_gender: float | None,
) -> tuple[str | None, str]:
    """Username decision, else the self-reported gender held in ``profile``,
    else the language-use score."""
    decided = username_gender_decision(username_score)
    if decided is not None:
        return decided, USERNAME
    if profile.gender_source == SELF_REPORTED and profile.gender is not None:
        return profile.gender, SELF_REPORTED
    decided = backend_gender_decision(backend_gender)
    if decided is not None:
        return decided, LANGUAGE_USE
    return None, NONE


def _on_grid(x: float) -> bool:
    return float(x * 2).is_integer()


def _norm_lon(lon: float) -> float:
    return -180.0 if lon == 180.0 else lon


def great_circle_degrees(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dlat = p2 - p1
    dlon = math.radians(lon2 - lon1)
    a = math.sin(dlat / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dlon / 2) ** 2
    return math.degrees(2 * math.asin(min(1.0, math.sqrt(a))))


class CountryGrid:
    """0.5-degree grid point -> ISO 3166 alpha-2 code."""

    def __init__(self, cells: Mapping[tuple[float, float], str]) -> None:
        self._cells = dict(cells)

    def __len__(self) -> int:
        return len(self._cells)

    @classmethod
    def load(cls, path: str | Path) -> "CountryGrid":
        cells: dict[tuple[float, float], str] = {}
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["lat", "lon", "iso2"]:
                raise ValueError(f"{path}: expected header lat,lon,iso2, got {header}")
            for rownum, row in enumerate(reader, 2):
                try:
                    if len(row) != 3:
                        raise ValueError(f"expected 3 columns, got {len(row)}")
                    lat, lon, iso = float(row[0]), float(row[1]), row[2]
                except ValueError as exc:
                    raise ValueError(f"{path}: row {rownum}: {exc}") from None
                if not (-90 <= lat <= 90 and -180 <= lon <= 180 and _on_grid(lat) and _on_grid(lon)):
                    raise ValueError(f"{path}: row {rownum}: ({lat}, {lon}) not on the 0.5 grid")
                if not (len(iso) == 2 and iso.isalpha() and iso.isupper()):
                    raise ValueError(f"{path}: row {rownum}: bad country code {iso!r}")
                cells[(lat, _norm_lon(lon))] = iso
        return cls(cells)

    def lookup(self, lat: float, lon: float) -> str:
        lon = _norm_lon(lon)
        hit = self._cells.get((lat, lon))
        if hit is not None:
            return hit
        reach = COUNTRY_FALLBACK_DEGREES
        cos_lat = math.cos(math.radians(min(89.0, abs(lat) + reach)))
        lon_reach = min(180.0, reach / cos_lat + GRID_STEP)
        best = None
        steps_lat = int(reach / GRID_STEP)
        steps_lon = int(math.ceil(lon_reach / GRID_STEP))
        for i in range(-steps_lat, steps_lat + 1):
            clat = lat + i * GRID_STEP
            if not -90 <= clat <= 90:
                continue
            for j in range(-steps_lon, steps_lon + 1):
                clon = ((lon + j * GRID_STEP + 180.0) % 360.0) - 180.0
                iso = self._cells.get((clat, clon))
                if iso is None:
                    continue
                d = great_circle_degrees(lat, lon, clat, clon)
                if d <= reach:
                    key = (d, clat, clon, iso)
                    if best is None or key < best:
                        best = key
        return best[3] if best else UNKNOWN_COUNTRY


def map_coordinates_to_country(lat: float, lon: float, grid_lookup: CountryGrid) -> str:
    if not (_on_grid(lat) and _on_grid(lon)):
        raise ValueError(f"({lat}, {lon}) is not on the 0.5 degree grid")
    return grid_lookup.lookup(lat, lon)


def default_grid_path() -> Path:
    return Path(__file__).parent / "resources" / "country_grid.csv"


@dataclass(frozen=True)
class BackendPrediction:
    user_id: str
    attribute: str
    value: object
    score: float
    model_id: str

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
        if self.attribute == "age_group":
            if self.value not in HAM_AGE_GROUPS:
                raise ValueError(f"unknown age group {self.value!r}")
        elif self.attribute == "gender":
            if isinstance(self.value, bool) or not isinstance(self.value, (int, float)) \
                    or not 0.0 <= self.value <= 1.0:
                raise ValueError(f"gender value must be a score in [0, 1], got {self.value!r}")
        elif self.attribute == "location":
            lat, lon = self.value
            if not (-90 <= lat <= 90 and -180 <= lon <= 180 and _on_grid(lat) and _on_grid(lon)):
                raise ValueError(f"location {self.value!r} not on the 0.5 grid")
        else:
            raise ValueError(f"unknown attribute {self.attribute!r}")


@dataclass
class UserPredictions:
    age_group: str | None = None
    gender_score: float | None = None
    username_score: float | None = None
    location: tuple[float, float] | None = None


def load_predictions(lines: Iterable[str]) -> dict[str, UserPredictions]:
    """Read predictions.jsonl; gender rows from the ``username`` model are
    username scores, other gender rows are language-use scores."""
    out: dict[str, UserPredictions] = {}
    seen = set()
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            value = rec["value"]
            if rec["attribute"] == "location":
                value = (float(value[0]), float(value[1]))
            pred = BackendPrediction(str(rec["user_id"]), rec["attribute"], value,
                                     float(rec.get("score", 1.0)), str(rec.get("model_id", "")))
        except (ValueError, TypeError, KeyError, IndexError) as exc:
            raise ValueError(f"predictions line {lineno}: {exc}") from None
        is_username = pred.attribute == "gender" and pred.model_id == USERNAME_MODEL_ID
        key = (pred.user_id, pred.attribute, is_username)
        if key in seen:
            raise ValueError(f"predictions line {lineno}: duplicate {pred.attribute} for {pred.user_id}")
        seen.add(key)
        up = out.setdefault(pred.user_id, UserPredictions())
        if pred.attribute == "age_group":
            up.age_group = pred.value
        elif pred.attribute == "location":
            up.location = pred.value
        elif is_username:
            up.username_score = float(pred.value)
        else:
            up.gender_score = float(pred.value)
    return out


def build_profile(
    user_id: str,
    posts: Sequence[Post],
    account: UserAccount | None,
    predictions: UserPredictions | None,
    grid: CountryGrid | None,
) -> UserProfile:
    """Run every method for one user and fuse them."""
    predictions = predictions or UserPredictions()
    post_times = sorted(p.created_utc for p in posts)
    times_by_id = {p.post_id: p.created_utc for p in posts}
    candidates = []
    for p in posts:
        if p.kind == SUBMISSION and p.title:
            candidates.extend(extract_self_report(p.title, p.post_id))
    chosen = choose_self_report(candidates, times_by_id)
    sr_dob, sr_gender = chosen if chosen else (None, None)

    profile = UserProfile(user_id)
    profile = with_ages(profile, sr_dob, SELF_REPORTED, post_times)
    if sr_gender is not None:
        profile = replace(profile, gender=sr_gender, gender_source=SELF_REPORTED)

    lu_dob = None
    if predictions.age_group is not None and post_times:
        lu_dob = language_use_dob(predictions.age_group, post_times[-1])
    profile = apply_age_corrections(profile, account.created_utc if account else None, lu_dob)
    dob, source = hybrid_age(profile, lu_dob)
    if source != profile.age_source:
        profile = with_ages(profile, dob, source, post_times)

    gender, gsource = hybrid_gender(profile, predictions.username_score, predictions.gender_score)
    country = None
    if predictions.location is not None and grid is not None:
        iso = map_coordinates_to_country(*predictions.location, grid)
        country = None if iso == UNKNOWN_COUNTRY else iso
    kept_lu_dob = None if AGE_DISCARDED_UNDER13 in profile.flags else lu_dob
    methods = {
        "age": {SELF_REPORTED: sr_dob, LANGUAGE_USE: kept_lu_dob, "hybrid": dob},
        "gender": {
            USERNAME: username_gender_decision(predictions.username_score),
            SELF_REPORTED: sr_gender,
            LANGUAGE_USE: backend_gender_decision(predictions.gender_score),
            "hybrid": gender,
        },
        "country": {"location": country},
    }
    return replace(profile, gender=gender, gender_source=gsource, country=country, methods=methods)
