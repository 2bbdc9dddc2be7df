"""Synthetic corpora with planted ground truth.

The generator decides every user's role and attributes first, writes posts
that express them, and records the expected pipeline outcome from those
decisions alone. Nothing here calls the matcher or the profiler, so the
recorded truth is an independent check on both.
"""

from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterator

from .corpus import COMMENT, SUBMISSION, Post
from .patterns import PatternSet, compile_matcher

YEAR = 365.25 * 86400
DAY = 86400
EPOCH_LOW = int(datetime(2012, 1, 1, tzinfo=timezone.utc).timestamp())
EPOCH_HIGH = int(datetime(2016, 1, 1, tzinfo=timezone.utc).timestamp())

# Posts are phrased for the bundled pattern lists. BD terms that contain an
# MDD term ("manic depression") are left out so that BD statements never
# carry an MDD label.
BD_TERMS = ("bipolar", "Bipolar disorder", "bipolar II", "BD-II", "BD-I", "cyclothymia",
            "bipolar 1", "bp2")
LABEL_TERMS = {
    "MDD": ("depression", "major depression", "MDD", "clinical depression", "major depressive disorder"),
    "Anxiety": ("anxiety", "generalized anxiety disorder", "GAD", "social anxiety", "panic disorder"),
    "ADHD": ("ADHD", "attention deficit disorder"),
    "BPD": ("BPD", "borderline personality disorder", "borderline"),
    "PTSD": ("PTSD", "C-PTSD", "post-traumatic stress disorder"),
    "OCD": ("OCD", "obsessive compulsive disorder"),
    "ASD": ("autism", "ASD", "Asperger's", "aspergers"),
    "ED": ("eating disorder", "anorexia", "bulimia", "binge eating disorder", "ARFID"),
    "Psychotic": ("schizophrenia", "schizoaffective disorder", "psychotic disorder"),
}
EXTRA_LABELS = ("MDD", "Anxiety", "ADHD", "BPD", "PTSD", "OCD", "ASD", "ED")

SELF_REPORT_TEMPLATES = (
    "I was diagnosed with {t} last year and I am still adjusting.",
    "My psychiatrist diagnosed me with {t} in the spring.",
    "As someone with a diagnosis of {t}, this thread helps a lot.",
    "I went to a doctor and got diagnosed. It was {t}.",
    "I've been diagnosed with {t} for a while now.",
    "Since my diagnosis of {t} things have been calmer.",
    "Three years ago I got diagnosed with {t}.",
)
LABEL_TEMPLATES = (
    "I was diagnosed with {t} when I was younger.",
    "My therapist diagnosed me with {t} a few months ago.",
    "I've been diagnosed with {t} as well.",
)
# (name, template); none of these may count as a self-report
DISTRACTOR_TEMPLATES = (
    ("think", "I think I have {t} but I am not sure yet."),
    ("self", "Self diagnosed {t} here, waiting for an appointment."),
    ("third", "My mom was diagnosed with {t} years ago."),
    ("formal", "Not formally diagnosed with {t}, just guessing."),
    ("mention", "Does anyone here take lithium for {t}?"),
    ("far", "I was diagnosed years ago. We walked along the river and talked about music, "
            "books and the weather for hours. Reading about {t} today."),
    ("quoted", "> I was diagnosed with {t}\n\nThanks for sharing this."),
)
FILLER = (
    "Went for a long walk by the river this morning.",
    "Does anyone have a good recipe for lentil soup?",
    "The new album is better than I expected.",
    "Finally finished the book everyone was talking about.",
    "Work has been busy but the weekend looks quiet.",
    "My cat knocked over the plant again.",
    "Trying to get back into running after the winter.",
    "The train was late three times this week.",
    "Any tips for keeping a small garden alive?",
    "Watched an old movie last night and loved it.",
    "Coffee first, questions later.",
    "Rain all day, so I stayed in and cooked.",
)
FILLER_TITLES = (
    "Small win today", "Question about sleep schedules", "Weekend plans",
    "Looking for book suggestions", "Anyone else up late", "Update after a month",
    "Random thought", "Finally some good news",
)
SUBREDDITS = ("AskReddit", "bipolar", "cooking", "running", "books", "movies", "gardening")
ADJECTIVES = ("quiet", "blue", "swift", "calm", "green", "brave", "lucky", "gentle", "sunny", "misty")
NOUNS = ("river", "maple", "otter", "comet", "lantern", "meadow", "harbor", "falcon", "pebble", "willow")

# report age groups as [low, high)
REPORT_GROUPS = (("13-17", 13, 18), ("18-29", 18, 30), ("30-49", 30, 50), ("50-64", 50, 65), ("65+", 65, 200))
MODEL_GROUP_MID = {"<14": 13.5, "14-23": 19.0, "24-45": 35.0, "46-65": 56.0, "66+": 78.0}
# coordinates on the 0.5 degree grid with a known country
LOCATIONS = (
    ((38.5, -98.0), "US"), ((40.5, -74.0), "US"), ((51.5, -0.5), "GB"), ((53.5, -2.0), "GB"),
    ((45.5, -73.5), "CA"), ((43.5, -79.5), "CA"), ((-33.5, 151.0), "AU"), ((-37.5, 145.0), "AU"),
    ((52.5, 13.5), "DE"), ((48.0, 11.5), "DE"), ((0.0, -30.0), None), ((25.0, -40.0), None),
)


def report_group(age: float) -> str:
    for name, low, high in REPORT_GROUPS:
        if low <= age < high:
            return name
    raise ValueError(age)


@dataclass
class GroundTruth:
    candidates: set[str] = field(default_factory=set)
    cohort: set[str] = field(default_factory=set)
    removals: dict[str, set[str]] = field(default_factory=lambda: {"psychotic": set(), "bot": set(), "manual": set()})
    diagnoses: dict[str, frozenset[str]] = field(default_factory=dict)
    age_group_first_post: dict[str, str | None] = field(default_factory=dict)
    age_group_mean: dict[str, str | None] = field(default_factory=dict)
    gender: dict[str, str | None] = field(default_factory=dict)
    country: dict[str, str | None] = field(default_factory=dict)
    # annotator-style birth date, None when nothing in the posts supports one
    dob: dict[str, str | None] = field(default_factory=dict)
    n_cohort_posts: int = 0


@dataclass
class SyntheticCorpus:
    posts: list[dict]
    accounts: list[dict]
    predictions: list[dict]
    review: list[dict]
    gold: list[dict]
    resolutions: list[dict]
    truth: GroundTruth


class _Builder:
    def __init__(self, rng: random.Random) -> None:
        self.rng = rng
        self.posts: list[dict] = []
        self._n = 0

    def post(self, uid: str, ts: float, body: str, title: str = "", kind: str | None = None) -> None:
        self._n += 1
        kind = kind or (SUBMISSION if title else COMMENT)
        self.posts.append({
            "post_id": f"post{self._n:07d}x",
            "user_id": uid,
            "kind": kind,
            "title": title if kind == SUBMISSION else None,
            "body": body,
            "subreddit": self.rng.choice(SUBREDDITS),
            "created_utc": int(ts),
        })

    def statement(self, uid: str, ts: float, text: str) -> None:
        """A post carrying ``text`` either as a comment or as a submission body."""
        if "\n" in text or self.rng.random() < 0.5:
            self.post(uid, ts, text)
        else:
            self.post(uid, ts, text, title=self.rng.choice(FILLER_TITLES))


def _roles(n_users: int, rng: random.Random) -> list[str]:
    def share(frac: float) -> int:
        return max(1, round(n_users * frac))

    roles = (["bot"] * share(0.02) + ["auto_keep"] * share(0.01) + ["manual"] * share(0.006)
             + ["psychotic"] * share(0.02) + ["distractor"] * share(0.3))
    if n_users >= 100:
        roles.append("high_volume")
    if len(roles) > n_users:
        raise ValueError(f"n_users={n_users} is too small for the planted roles")
    roles += ["cohort"] * (n_users - len(roles))
    rng.shuffle(roles)
    return roles


def _username(i: int, role: str, rng: random.Random) -> str:
    if role == "bot":
        return f"{rng.choice(ADJECTIVES)}_bot_{i:04d}"
    if role == "auto_keep":
        return f"auto_{rng.choice(NOUNS)}_{i:04d}"
    return f"{rng.choice(ADJECTIVES)}_{rng.choice(NOUNS)}_{i:04d}"


def _age_title(age: int, gender: str, rng: random.Random) -> str:
    g = gender if rng.random() < 0.5 else gender.upper()
    token = rng.choice((f"({age}{g})", f"[{g}{age}]", f"({age}/{g})", f"[{age} {g}]"))
    lead = rng.choice(("I'm {tok} and", "Me {tok}:", "I {tok}"))
    return f"{lead.format(tok=token)} {rng.choice(FILLER_TITLES).lower()}"


def generate(n_users: int = 500, seed: int = 0) -> SyntheticCorpus:
    rng = random.Random(seed)
    b = _Builder(rng)
    truth = GroundTruth()
    accounts, predictions, review = [], [], []
    roles = _roles(n_users, rng)

    for i, role in enumerate(roles):
        uid = f"user{i:05d}x"
        username = _username(i, role, rng)
        in_cohort = role != "distractor"

        age_mode = rng.choice(("self", "self", "model", "both", "none", "model_under13"))
        first = rng.randint(EPOCH_LOW, EPOCH_HIGH)
        if age_mode == "model":
            span = rng.uniform(0.05, 0.5) * YEAR
        elif age_mode == "model_under13":
            span = rng.uniform(1.0, 2.0) * YEAR
        else:
            span = rng.uniform(0.1, 2.0) * YEAR
        last = first + int(span)

        times = [first, last] + [rng.randint(first, last) for _ in range(rng.randint(3, 10))]
        if role == "high_volume":
            times += [rng.randint(first, last) for _ in range(1501)]
        times.sort()
        account_created = first - 30 * DAY
        accounts.append({"user_id": uid, "username": username, "created_utc": int(account_created)})

        # time slots: planted statements take slots, the rest get filler
        slots = list(times)
        rng.shuffle(slots)

        def slot() -> int:
            return slots.pop() if slots else rng.randint(first, last)

        k0 = len(b.posts)

        diagnoses: set[str] = set()
        if in_cohort:
            bd_term = rng.choice(BD_TERMS)
            mdd_mode = rng.choice(("none", "none", "separate", "joint"))
            if mdd_mode == "joint":
                mdd_term = rng.choice(LABEL_TERMS["MDD"])
                text = f"I was diagnosed with {bd_term} and {mdd_term} last year."
                diagnoses.add("MDD")
            else:
                text = rng.choice(SELF_REPORT_TEMPLATES).format(t=bd_term)
            if "depression" in bd_term:
                # the BD term contains an MDD term: a post matching both, so plain MDD only
                diagnoses.add("MDD")
            b.statement(uid, slot(), text)
            diagnoses.add("BD")
            if mdd_mode == "separate":
                b.statement(uid, slot(), rng.choice(LABEL_TEMPLATES).format(t=rng.choice(LABEL_TERMS["MDD"])))
                diagnoses |= {"MDD", "MDD_conservative"}
            for label in EXTRA_LABELS[1:]:
                if rng.random() < 0.2:
                    b.statement(uid, slot(), rng.choice(LABEL_TEMPLATES).format(t=rng.choice(LABEL_TERMS[label])))
                    diagnoses.add(label)
            if role == "psychotic":
                b.statement(uid, slot(), rng.choice(LABEL_TEMPLATES).format(t=rng.choice(LABEL_TERMS["Psychotic"])))
                diagnoses.add("Psychotic")
            # a non-qualifying mention of some label the user does not have
            absent = [lab for lab in EXTRA_LABELS if lab not in diagnoses]
            if absent and rng.random() < 0.4:
                _, template = rng.choice(DISTRACTOR_TEMPLATES)
                b.statement(uid, slot(), template.format(t=rng.choice(LABEL_TERMS[rng.choice(absent)])))
        else:
            for _ in range(rng.randint(1, 3)):
                _, template = rng.choice(DISTRACTOR_TEMPLATES)
                b.statement(uid, slot(), template.format(t=rng.choice(BD_TERMS)))
            if rng.random() < 0.3:
                label = rng.choice(EXTRA_LABELS)
                b.statement(uid, slot(), rng.choice(LABEL_TEMPLATES).format(t=rng.choice(LABEL_TERMS[label])))

        # age and gender
        title_gender = None
        dob_ts = None
        model_group = None
        if age_mode in ("self", "both"):
            group, low, high = rng.choice(REPORT_GROUPS)
            # keep posting ages at least half a year inside the group even
            # after the (up to one year) truncation of the stated age
            a0 = rng.uniform(low + 1.5, min(high, 83) - 3)
            dob_ts = first - a0 * YEAR
            title_ts = slot()
            stated_age = int((title_ts - dob_ts) // YEAR)
            title_gender = rng.choice("fm")
            b.post(uid, title_ts, rng.choice(FILLER), title=_age_title(stated_age, title_gender, rng))
            if rng.random() < 0.3:
                other = rng.randint(13, 80)
                b.post(uid, slot(), rng.choice(FILLER),
                       title=f"My brother ({other}{rng.choice('fm')}) {rng.choice(FILLER_TITLES).lower()}")
        if age_mode in ("both", "model"):
            model_group = rng.choice(("14-23", "24-45", "46-65", "66+"))
        elif age_mode == "model_under13":
            # model places the user under 13 at sign-up, so its age is discarded
            model_group = "<14"

        while slots:
            ts = slots.pop()
            if role == "high_volume" or rng.random() < 0.4:
                b.post(uid, ts, rng.choice(FILLER), title=rng.choice(FILLER_TITLES))
            else:
                b.post(uid, ts, rng.choice(FILLER))

        user_times = [p["created_utc"] for p in b.posts[k0:]]
        age_first = age_mean = None
        if dob_ts is not None:
            ages = [(t - dob_ts) / YEAR for t in user_times]
        elif age_mode == "model":
            mid = MODEL_GROUP_MID[model_group]
            ages = [mid - (last - t) / YEAR for t in user_times]
        else:
            ages = None
        if ages:
            age_first = report_group(min(ages))
            age_mean = report_group(sum(ages) / len(ages))
        dob = None
        if dob_ts is not None:
            dob = datetime.fromtimestamp(dob_ts, tz=timezone.utc).date().isoformat()
        elif age_mode == "model":
            jitter = rng.uniform(-200, 200) * DAY
            dob = datetime.fromtimestamp(last - mid * YEAR + jitter, tz=timezone.utc).date().isoformat()

        username_score = rng.choice((None, None, 0.05, 0.1, 0.5, 0.9, 0.97))
        model_gender = rng.choice((None, 0.2, 0.5, 0.8))
        if username_score is not None and username_score <= 0.1:
            gender = "m"
        elif username_score is not None and username_score >= 0.9:
            gender = "f"
        elif title_gender is not None:
            gender = title_gender
        elif model_gender is not None:
            gender = "f" if model_gender >= 0.5 else "m"
        else:
            gender = None

        location = rng.choice(LOCATIONS + (None, None))
        country = location[1] if location else None

        if model_group is not None:
            predictions.append({"user_id": uid, "attribute": "age_group", "value": model_group,
                                "score": 0.8, "model_id": "langmodel"})
        if model_gender is not None:
            predictions.append({"user_id": uid, "attribute": "gender", "value": model_gender,
                                "score": 0.8, "model_id": "langmodel"})
        if username_score is not None:
            predictions.append({"user_id": uid, "attribute": "gender", "value": username_score,
                                "score": 1.0, "model_id": "username"})
        if location is not None:
            predictions.append({"user_id": uid, "attribute": "location", "value": list(location[0]),
                                "score": 0.7, "model_id": "geo"})

        if role in ("bot", "high_volume"):
            review.append({"user_id": uid, "action": "remove", "reason": "bot-like posting"})
        elif role == "auto_keep":
            review.append({"user_id": uid, "action": "keep", "reason": "human after review"})
        elif role == "manual":
            review.append({"user_id": uid, "action": "remove", "reason": "false positive on reading"})

        if not in_cohort:
            continue
        truth.candidates.add(uid)
        if role == "psychotic":
            truth.removals["psychotic"].add(uid)
        elif role in ("bot", "high_volume"):
            truth.removals["bot"].add(uid)
        elif role == "manual":
            truth.removals["manual"].add(uid)
        else:
            truth.cohort.add(uid)
            truth.diagnoses[uid] = frozenset(diagnoses)
            truth.age_group_first_post[uid] = age_first
            truth.age_group_mean[uid] = age_mean
            truth.gender[uid] = gender
            truth.country[uid] = country
            truth.dob[uid] = dob

    truth.n_cohort_posts = sum(p["user_id"] in truth.cohort for p in b.posts)
    gold, resolutions = _gold(truth, rng)
    b.posts.sort(key=lambda p: (p["created_utc"], p["post_id"]))
    return SyntheticCorpus(b.posts, accounts, predictions, review, gold, resolutions, truth)


def _gold(truth: GroundTruth, rng: random.Random) -> tuple[list[dict], list[dict]]:
    """Two annotators over a sample of cohort users, with a few planted disagreements."""
    users = sorted(truth.cohort)
    sample = rng.sample(users, min(60, len(users)))
    rows, resolutions = [], []
    for k, uid in enumerate(sorted(sample)):
        labels = {
            "bd_diagnosis": "yes",
            "gender": truth.gender[uid] or "?",
            "country": truth.country[uid] or "?",
            "dob": truth.dob[uid] or "?",
        }
        for variable, label in labels.items():
            second = label
            if variable == "gender" and k < 2 and label in ("f", "m"):
                second = "m" if label == "f" else "f"
                if k == 0:
                    resolutions.append({"user_id": uid, "variable": variable, "label": label})
            rows.append({"user_id": uid, "variable": variable, "label": label, "annotator_id": "a1"})
            rows.append({"user_id": uid, "variable": variable, "label": second, "annotator_id": "a2"})
    return rows, resolutions


def _write_csv(path: Path, header: tuple[str, ...], rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=header)
        writer.writeheader()
        writer.writerows(rows)


def _write_jsonl(path: Path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")


def write_corpus(corpus: SyntheticCorpus, directory: Path) -> Path:
    """Write the input files plus a run config; returns the config path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    _write_jsonl(directory / "posts.jsonl", corpus.posts)
    _write_jsonl(directory / "accounts.jsonl", corpus.accounts)
    _write_jsonl(directory / "predictions.jsonl", corpus.predictions)
    _write_csv(directory / "review.csv", ("user_id", "action", "reason"), corpus.review)
    _write_csv(directory / "gold.csv", ("user_id", "variable", "label", "annotator_id"), corpus.gold)
    _write_csv(directory / "resolutions.csv", ("user_id", "variable", "label"), corpus.resolutions)
    config = directory / "config.yaml"
    config.write_text(
        "posts: posts.jsonl\n"
        "accounts: accounts.jsonl\n"
        "predictions: predictions.jsonl\n"
        "review: review.csv\n"
        "gold: gold.csv\n"
        "resolutions: resolutions.csv\n"
        "output_dir: out\n",
        encoding="utf-8",
    )
    return config


def write_demo(directory: Path, n_users: int = 500, seed: int = 0) -> Path:
    return write_corpus(generate(n_users, seed), directory)


# ---------------------------------------------------------------- throughput fixtures

BENCHMARK_ALTERNATIVES = 300


def benchmark_pattern_set() -> PatternSet:
    """A BD pattern set that compiles to exactly 300 alternatives."""
    conditions = list(BD_TERMS) + ["bipolar disorder", "manic depressive illness", "cyclothymic disorder",
                                   "bipolar type 1", "bipolar type 2", "bp1"]
    doctors = ["doctor", "pdoc", "shrink", "psychiatrist", "psychologist", "therapist", "gp", "physician"]
    inclusion = [
        "As someone with a diagnos*",
        "my recent CONDITION diagnos*",
        "I went to a DOCTOR and got diagnos*",
        "I was diagnos* with CONDITION",
        "I've been diagnos* with CONDITION",
        "my DOCTOR diagnos* me with CONDITION",
        "I was diagnos*",
        "since my diagnos*",
    ]
    exclusion = ["Not formally diagnos*", "self diagnos*", "she’s diagnos*", "I think I have CONDITION"]
    base = PatternSet(inclusion, exclusion, {"BD": conditions}, doctors)
    missing = BENCHMARK_ALTERNATIVES - len(compile_matcher(base, "BD"))
    if missing < 0:
        raise AssertionError("benchmark pattern set overshoots 300 alternatives")
    # pad with distinct literal exclusion phrases
    pad = [f"{a} {n} {v} diagnos*" for v in ("was", "is") for a in ADJECTIVES for n in NOUNS][:missing]
    if len(pad) != missing:
        raise AssertionError("not enough padding phrases for the benchmark pattern set")
    return PatternSet(inclusion, exclusion + pad, {"BD": conditions}, doctors)


def benchmark_posts(n_posts: int, seed: int = 0) -> Iterator[Post]:
    """``n_posts`` Reddit-sized posts, about 2% of them self-report statements."""
    rng = random.Random(seed)
    pool = []
    for _ in range(4000):
        parts = rng.sample(FILLER, rng.randint(1, 5))
        r = rng.random()
        if r < 0.02:
            parts.insert(rng.randrange(len(parts) + 1), rng.choice(SELF_REPORT_TEMPLATES).format(t=rng.choice(BD_TERMS)))
        elif r < 0.06:
            parts.insert(rng.randrange(len(parts) + 1), rng.choice(DISTRACTOR_TEMPLATES)[1].format(t=rng.choice(BD_TERMS)))
        pool.append(" ".join(parts))
    base = EPOCH_LOW
    for k in range(n_posts):
        yield Post(
            post_id=f"b{k}",
            user_id=f"u{k % 50000}",
            kind=COMMENT,
            title=None,
            body=pool[rng.randrange(len(pool))],
            subreddit="bipolar",
            created_utc=base + k,
        )
