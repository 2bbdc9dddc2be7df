"""End-to-end acceptance checks, one test per criterion.

Each test prints a ``PASS criterion N: ...`` or ``FAIL criterion N: ...``
line; the lines are also repeated in the terminal summary.
"""

from __future__ import annotations

import json
import os
import random
import time
from contextlib import contextmanager
from datetime import date
from pathlib import Path

import pytest

from _cases import random_pattern_set, random_text
from conftest import VERDICTS
from diagcohort import pipeline, profiler
from diagcohort.config import load_config
from diagcohort.corpus import COMMENT, Post, Pseudonymizer, normalize_text
from diagcohort.detector import (
    EXCLUDED_BY_PATTERN,
    MATCHED,
    NO_CONDITION_TERM,
    NO_INCLUSION,
    PROXIMITY_FAILED,
    classify_post,
    classify_text,
)
from diagcohort.evaluation import GoldAnnotation, format_pct, raw_agreement, score_method
from diagcohort.patterns import compile_matcher, find_matches, naive_find_matches
from diagcohort.profiler import UserProfile, hybrid_age, hybrid_gender
from diagcohort.synthetic import benchmark_pattern_set, benchmark_posts, generate, write_corpus

T0 = 1_500_000_000


@contextmanager
def verdict(number: int, what: str):
    """Record and print the outcome of one criterion; exceptions count as FAIL."""
    note = {"detail": ""}
    try:
        yield note
    except pytest.xfail.Exception:
        line = f"FAIL criterion {number}: {what} ({note['detail']})"
        print(line)
        VERDICTS.append(line)
        raise
    except BaseException as exc:
        reason = (str(exc).splitlines() or [type(exc).__name__])[0]
        line = f"FAIL criterion {number}: {what} ({note['detail'] or reason})"
        print(line)
        VERDICTS.append(line)
        raise
    line = f"PASS criterion {number}: {what} ({note['detail']})"
    print(line)
    VERDICTS.append(line)


# ------------------------------------------------------------------ 1


def test_criterion_1_matcher_equals_naive_scanner():
    with verdict(1, "matcher equals naive scanner on 10,000 random instances") as note:
        rng = random.Random(20240601)
        start = time.perf_counter()
        mismatches = 0
        for _ in range(10_000):
            matcher = compile_matcher(random_pattern_set(rng), "BD")
            text = normalize_text(random_text(rng))
            if find_matches(matcher, text) != naive_find_matches(matcher.alternatives, text):
                mismatches += 1
        elapsed = time.perf_counter() - start
        note["detail"] = f"{mismatches} mismatches, {elapsed:.1f}s"
        assert mismatches == 0
        assert elapsed < 60


# ------------------------------------------------------------------ 2

# (body, expected decision); all classified with the small example lists only
EXAMPLE_CASES = [
    ("As someone with a diagnosis of bipolar, I find mornings hard", MATCHED),
    ("as someone with a diagnosis, bipolar meds are a juggling act", MATCHED),
    ("My recent bipolar diagnosis changed everything", MATCHED),
    ("my recent BD-II diagnosis was a relief", MATCHED),
    ("My recent cyclothymia diagnosis surprised me", MATCHED),
    ("I went to a doctor and got diagnosed with bipolar", MATCHED),
    ("I went to a pdoc and got diagnosed, it's BD-I", MATCHED),
    ("I went to a shrink and got diagnosed with manic depression", MATCHED),
    ("Not formally diagnosed with bipolar but I think so", EXCLUDED_BY_PATTERN),
    ("not formally diagnosed, but my recent bipolar diagnosis is pending", EXCLUDED_BY_PATTERN),
    ("Self diagnosed bipolar here", EXCLUDED_BY_PATTERN),
    # the exclusion phrase is literal, so a hyphenated spelling slips past it and fails later
    ("self-diagnosed with cyclothymia for now", NO_INCLUSION),
    ("She's diagnosed with bipolar II", EXCLUDED_BY_PATTERN),
    ("She’s diagnosed with BD-II and I went to a doctor and got diagnosed too", EXCLUDED_BY_PATTERN),
    ("> I went to a doctor and got diagnosed with bipolar\nthat sounds like me", NO_CONDITION_TERM),
    ("> my recent bipolar diagnosis\nwhat helped you?", NO_CONDITION_TERM),
    ("> as someone with a diagnosis of bipolar\n> more quoting\nsame here", NO_CONDITION_TERM),
    ("> bipolar is rough\nAs someone with a diagnosis I agree", NO_CONDITION_TERM),
    ("Bipolar runs in my family", NO_INCLUSION),
    ("my recent diagnosis was ADHD", NO_CONDITION_TERM),
    ("I went to a doctor and got diagnosed with the flu, and honestly the waiting room had "
     "posters about bipolar", PROXIMITY_FAILED),
    ("As someone with a diagnosis I can tell you " + "this is a long story about other things " * 2
     + "and bipolar", PROXIMITY_FAILED),
    # misfires on other diagnoses that mention the target term nearby
    ("As someone with a diagnosis of BPD, I thought it was bipolar for years", MATCHED),
    ("as someone with a diagnosis of clinical depression with bipolar tendencies", MATCHED),
    ("I went to a doctor and got diagnosed with depression, but sure I’ve got bipolar", MATCHED),
]


def test_criterion_2_example_pattern_suite(example_set):
    with verdict(2, "example patterns classify the 25-case fixture") as note:
        assert len(EXAMPLE_CASES) == 25
        matcher = compile_matcher(example_set, "BD")
        wrong = []
        for i, (body, expected) in enumerate(EXAMPLE_CASES):
            got = classify_post(Post(f"p{i}", "u", COMMENT, None, body, "s", T0), matcher).decision
            if got != expected:
                wrong.append((i, expected, got))
        note["detail"] = f"{25 - len(wrong)}/25 as expected"
        assert wrong == []


# ------------------------------------------------------------------ 3


def _gap_text(gap: int, condition_first: bool) -> str:
    filler = "" if gap == 0 else " " if gap == 1 else " " + "y" * (gap - 2) + " "
    incl, cond = "as someone with a diagnosis", "bipolar"
    return cond + filler + incl if condition_first else incl + filler + cond


def _proximity_fixture() -> list[str]:
    rng = random.Random(55)
    texts = [_gap_text(g, rng.random() < 0.5) for g in rng.sample(range(0, 230), 40)]
    texts += [
        "my recent bipolar diagnosis",
        "self diagnosed bipolar, as someone with a diagnosis",
        "bipolar",
        "as someone with a diagnosis",
        "nothing to see",
        "bipolar " + "z" * 120 + " as someone with a diagnosis " + "z" * 30 + " cyclothymia",
        "i went to a doctor and got diagnosed " + "q " * 40 + "bd-i",
        "not formally diagnosed " + "w" * 80 + " bipolar",
        "cyclothymia " + "e " * 70 + "my recent bipolar diagnosis",
        "bd-ii " + "r" * 199 + " as someone with a diagnosis",
    ]
    return texts


def test_criterion_3_proximity_boundary_and_monotonicity(example_set):
    with verdict(3, "54/55 gap flips at threshold 55; monotone over thresholds 1..200") as note:
        matcher = compile_matcher(example_set, "BD")
        flips = []
        for condition_first in (False, True):
            near = classify_text(_gap_text(54, condition_first), matcher, 55)
            far = classify_text(_gap_text(55, condition_first), matcher, 55)
            flips.append((near.distance_chars, near.decision, far.distance_chars, far.decision))
        assert flips == [(54, MATCHED, 55, PROXIMITY_FAILED)] * 2

        texts = _proximity_fixture()
        assert len(texts) == 50
        previous: set[int] = set()
        lost = 0
        for threshold in range(1, 201):
            matched = {i for i, t in enumerate(texts) if classify_text(t, matcher, threshold).decision == MATCHED}
            lost += len(previous - matched)
            previous = matched
        note["detail"] = f"boundary ok, {lost} matches lost across thresholds, {len(previous)}/50 matched at 200"
        assert lost == 0


# ------------------------------------------------------------------ 4


def test_criterion_4_planted_cohort_recovery(tmp_path):
    with verdict(4, "500-user planted corpus recovered end to end") as note:
        corpus = generate(500, seed=7)
        cfg = load_config(write_corpus(corpus, tmp_path))
        start = time.perf_counter()
        pipeline.cmd_ingest(cfg)
        pipeline.cmd_detect(cfg, workers=1)
        pipeline.cmd_profile(cfg, workers=1)
        elapsed = time.perf_counter() - start
        truth = corpus.truth

        cohort = {r["user_id"]: set(r["diagnoses"]) for r in map(json.loads, open(cfg.output_dir / "cohort.jsonl"))}
        profiles = {p.user_id: p for p in pipeline.load_profiles(cfg)}
        labels = {label for found in cohort.values() for label in found}
        problems = []
        if sorted(cohort) != sorted(truth.cohort):
            problems.append("cohort")
        if cohort != {u: set(d) for u, d in truth.diagnoses.items()}:
            problems.append("comorbidities")
        if any("MDD_conservative" in d and "MDD" not in d for d in cohort.values()):
            problems.append("conservative MDD subset")
        for name, expected in (("age_group_first_post", truth.age_group_first_post),
                               ("age_group_mean", truth.age_group_mean),
                               ("gender", truth.gender),
                               ("country", truth.country)):
            got = {u: getattr(profiles[u], name) for u in truth.cohort}
            if got != {u: expected.get(u) for u in truth.cohort}:
                problems.append(name)
        note["detail"] = (f"{len(cohort)} users, {len(labels)} labels seen, {elapsed:.1f}s"
                          + (f", mismatched: {', '.join(problems)}" if problems else ""))
        assert problems == []
        assert len(labels - {"BD"}) >= 9
        assert elapsed < 30


# ------------------------------------------------------------------ 5


def _scored(n_gold, n_pred, n_correct):
    gold = {f"u{i}": "f" for i in range(n_gold)}
    preds = {f"u{i}": ("f" if i < n_correct else "m") for i in range(n_pred)}
    return score_method(preds, gold, 10_000, variable="gender")


def test_criterion_5_metric_arithmetic():
    with verdict(5, "accuracy/coverage fixtures print the expected pairs") as note:
        got = [(format_pct(r.accuracy), format_pct(r.coverage_test))
               for r in (_scored(100, 12, 12), _scored(100, 94, 92), _scored(105, 105, 104))]
        note["detail"] = ", ".join(f"({a}, {c})" for a, c in got)
        assert got == [("100.0", "12.0"), ("97.9", "94.0"), ("99.0", "100.0")]


# ------------------------------------------------------------------ 6


def _two_annotators(variable, n, disagree, a, b):
    anns = []
    for i in range(n):
        anns.append(GoldAnnotation(f"u{i}", variable, a, "a1"))
        anns.append(GoldAnnotation(f"u{i}", variable, b if i < disagree else a, "a2"))
    return anns


def test_criterion_6_agreement_arithmetic():
    with verdict(6, "raw agreement for 3/100 and 1/116 disagreements") as note:
        first = raw_agreement(_two_annotators("bd_diagnosis", 100, 3, "yes", "no"), "bd_diagnosis")
        second = raw_agreement(_two_annotators("dob", 116, 1, "1990-01-01", "1992-01-01"), "dob")
        note["detail"] = f"{first:.1f} and {second:.1f}"
        assert (f"{first:.1f}", f"{second:.1f}") == ("97.0", "99.1")


# ------------------------------------------------------------------ 7

USERNAME_SCORES = (None, 0.05, 0.1, 0.1000001, 0.5, 0.8999999, 0.9, 0.95)
SELF_GENDERS = (None, "m", "f")
LANGUAGE_SCORES = (None, 0.2, 0.8)


def _expected_gender(username, self_reported, language):
    if username is not None and username <= 0.1:
        return "m", profiler.USERNAME
    if username is not None and username >= 0.9:
        return "f", profiler.USERNAME
    if self_reported is not None:
        return self_reported, profiler.SELF_REPORTED
    if language is not None:
        return ("f" if language >= 0.5 else "m"), profiler.LANGUAGE_USE
    return None, profiler.NONE


def _expected_age(self_dob, language_dob, discarded):
    if self_dob is not None:
        return self_dob, profiler.SELF_REPORTED
    if language_dob is not None and not discarded:
        return language_dob, profiler.LANGUAGE_USE
    return None, profiler.NONE


def test_criterion_7_hybrid_precedence():
    with verdict(7, "hybrid precedence over every availability combination") as note:
        gender_cases = [(u, s, l) for u in USERNAME_SCORES for s in SELF_GENDERS for l in LANGUAGE_SCORES]
        gender_bad = []
        for u, s, l in gender_cases:
            profile = UserProfile("x", gender=s, gender_source=profiler.SELF_REPORTED if s else profiler.NONE)
            if hybrid_gender(profile, u, l) != _expected_gender(u, s, l):
                gender_bad.append((u, s, l))

        dobs = (None, date(1990, 5, 5), date(2001, 2, 3))
        age_cases = [(s, l, d) for s in dobs for l in dobs for d in (False, True)]
        age_bad = []
        for s, l, d in age_cases:
            profile = UserProfile("x", dob_estimate=s, age_source=profiler.SELF_REPORTED if s else profiler.NONE,
                                  flags=frozenset({profiler.AGE_DISCARDED_UNDER13}) if d else frozenset())
            if hybrid_age(profile, l) != _expected_age(s, l, d):
                age_bad.append((s, l, d))
        note["detail"] = (f"gender {len(gender_cases) - len(gender_bad)}/{len(gender_cases)}, "
                          f"age {len(age_cases) - len(age_bad)}/{len(age_cases)}")
        assert len(gender_cases) <= 81 and len(age_cases) <= 81
        assert gender_bad == [] and age_bad == []


# ------------------------------------------------------------------ 8

DETECT_OUTPUTS = ("cohort.jsonl", "evidence.jsonl", "removals.tsv", "bot_candidates.tsv", "detect_summary.json")
PROFILE_OUTPUTS = ("profiles.jsonl", "age_review.csv")


def test_criterion_8_parallel_determinism(tmp_path):
    with verdict(8, "detect and profile outputs identical at 1, 4 and 8 workers") as note:
        cfg = load_config(write_corpus(generate(500, seed=7), tmp_path))
        pipeline.cmd_ingest(cfg)
        runs = {}
        for workers in (1, 4, 8):
            pipeline.cmd_detect(cfg, workers=workers)
            pipeline.cmd_profile(cfg, workers=workers)
            runs[workers] = {n: (cfg.output_dir / n).read_bytes() for n in DETECT_OUTPUTS + PROFILE_OUTPUTS}
        differing = sorted({n for w in (4, 8) for n in runs[1] if runs[w][n] != runs[1][n]})
        note["detail"] = f"{len(runs[1])} files compared" + (f", differing: {differing}" if differing else "")
        assert differing == []


# ------------------------------------------------------------------ 9

BENCH_POSTS = 1_000_000


def _classify_all(workers: int) -> tuple[float, int]:
    start = time.perf_counter()
    matched = 0
    chunks = pipeline.chunked(benchmark_posts(BENCH_POSTS, seed=9), pipeline.CHUNK_SIZE)
    initargs = (benchmark_pattern_set(), ("BD",), 55, None)
    for result in pipeline.map_chunks(pipeline._bd_chunk, chunks, workers, initargs):
        matched += len(result)
    return time.perf_counter() - start, matched


def test_criterion_9_throughput():
    with verdict(9, "1M posts vs 300 alternatives: <=120s single, >=3x at 4 workers") as note:
        assert len(compile_matcher(benchmark_pattern_set(), "BD")) == 300
        single, matched_single = _classify_all(1)
        parallel, matched_parallel = _classify_all(4)
        speedup = single / parallel
        cores = os.cpu_count() or 1
        note["detail"] = (f"single {single:.1f}s, 4 workers {parallel:.1f}s, speedup {speedup:.2f}x "
                          f"on {cores} core(s), {matched_single} matches")
        assert matched_single == matched_parallel
        assert single <= 120
        if speedup < 3 and cores < 4:
            pytest.xfail(f"speedup {speedup:.2f}x: only {cores} core(s) available")
        assert speedup >= 3


# ------------------------------------------------------------------ 10


def _substrings_hit(text: str, needles: set[str]) -> set[str]:
    hits = set()
    for length in {len(n) for n in needles}:
        window = {text[i:i + length] for i in range(len(text) - length + 1)}
        hits |= window & needles
    return hits


def test_criterion_10_pseudonymization_audit(tmp_path, monkeypatch):
    with verdict(10, "export leaks no original id or username; tokens injective on 10,000 ids") as note:
        corpus = generate(500, seed=7)
        cfg = load_config(write_corpus(corpus, tmp_path))
        pipeline.cmd_ingest(cfg)
        monkeypatch.setenv("DIAGCOHORT_SECRET", "acceptance-secret")
        pipeline.cmd_export(cfg)
        export_dir = cfg.output_dir / "export"
        text = "".join(p.read_text() for p in sorted(export_dir.iterdir()))
        originals = {a["user_id"] for a in corpus.accounts} | {a["username"] for a in corpus.accounts}
        originals |= {p["post_id"] for p in corpus.posts} | {p["user_id"] for p in corpus.posts}
        leaks = _substrings_hit(text, originals)

        rng = random.Random(10)
        ids = {f"t3_{rng.getrandbits(40):x}" for _ in range(10_000)}
        while len(ids) < 10_000:
            ids.add(f"t3_{rng.getrandbits(40):x}")
        pseudo = Pseudonymizer(b"acceptance-secret")
        tokens = {pseudo(i) for i in sorted(ids)}
        id_map_outside = not Path(cfg.output_dir / "private" / "id_map.csv").resolve().is_relative_to(export_dir)
        note["detail"] = f"{len(leaks)} leaks over {len(originals)} originals, {len(tokens)} distinct tokens"
        assert leaks == set()
        assert len(tokens) == 10_000
        assert id_map_outside
