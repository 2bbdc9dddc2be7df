"""Pipeline stages behind the CLI subcommands.

Every stage reads its inputs and computes all results before it writes
anything; files are written through a temp file and renamed into place.
Parallel stages fan chunks out to worker processes and merge the results
in submission order, so outputs do not depend on the worker count.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import shutil
import statistics
import tempfile
from collections import Counter, deque
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from itertools import islice
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence

from . import detector, evaluation, profiler
from .config import ConfigError, PipelineConfig
from .corpus import (
    POST_FIELDS,
    Post,
    SchemaError,
    UserAccount,
    build_user_stats,
    parse_accounts,
    parse_posts_stream,
    pseudonymize_export,
)
from .patterns import PatternError, PatternSet, compile_matcher

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_EMPTY = 3

CHUNK_SIZE = 2000
REPORT_LABELS = ("MDD", "MDD_conservative", "Anxiety", "ADHD", "BPD", "PTSD", "OCD", "ASD", "ED")


class DataError(ValueError):
    """Input data that cannot be processed (exit code 2)."""


# ---------------------------------------------------------------- file helpers


@contextmanager
def atomic_open(path: Path):
    """Text handle whose content replaces ``path`` only on clean exit."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_text(path: Path, text: str) -> None:
    with atomic_open(path) as fh:
        fh.write(text)


def jsonl_text(records: Iterable[dict]) -> str:
    return "".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in records)


def tsv_text(header: Sequence[str], rows: Iterable[Sequence], delimiter: str = "\t") -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def read_jsonl(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def pct(n: int, total: int) -> str:
    return f"{n / total * 100:.2f}" if total else "n/a"


# ---------------------------------------------------------------- corpus store


def write_store(store_dir: Path, posts: Iterable[Post], accounts: dict[str, UserAccount], manifest: dict) -> dict:
    """Write posts column by column plus accounts and a manifest.

    The store is assembled in a sibling temp directory and renamed into
    place, so readers never see a half-written store.
    """
    store_dir.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(dir=store_dir.parent, prefix=".store."))
    try:
        (tmp / "posts").mkdir()
        handles = {f: open(tmp / "posts" / f"{f}.jsonl", "w", encoding="utf-8") for f in POST_FIELDS}
        n = 0
        try:
            for post in posts:
                rec = post.to_record()
                for f, fh in handles.items():
                    fh.write(json.dumps(rec[f], ensure_ascii=False))
                    fh.write("\n")
                n += 1
        finally:
            for fh in handles.values():
                fh.close()
        (tmp / "accounts.jsonl").write_text(
            jsonl_text(accounts[u].to_record() for u in sorted(accounts)), encoding="utf-8"
        )
        manifest = dict(manifest, n_posts=n, n_accounts=len(accounts), fields=list(POST_FIELDS))
        (tmp / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        if store_dir.exists():
            old = store_dir.with_name(store_dir.name + ".old")
            if old.exists():
                shutil.rmtree(old)
            os.replace(store_dir, old)
            os.replace(tmp, store_dir)
            shutil.rmtree(old)
        else:
            os.replace(tmp, store_dir)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return manifest


def read_store_posts(store_dir: Path) -> Iterator[Post]:
    files = [open(store_dir / "posts" / f"{f}.jsonl", encoding="utf-8") for f in POST_FIELDS]
    try:
        for values in zip(*files):
            yield Post(**{f: json.loads(v) for f, v in zip(POST_FIELDS, values)})
    finally:
        for fh in files:
            fh.close()


def read_store_accounts(store_dir: Path) -> dict[str, UserAccount]:
    with open(store_dir / "accounts.jsonl", encoding="utf-8") as fh:
        return parse_accounts(fh)


def require_store(cfg: PipelineConfig) -> None:
    if not (cfg.store_dir / "manifest.json").exists():
        raise ConfigError(f"no corpus store in {cfg.store_dir}; run ingest first")


# ---------------------------------------------------------------- worker pool

_STATE: dict = {}


def _init_worker(pattern_set: PatternSet | None, labels: Sequence[str], threshold: int, grid_path: str | None) -> None:
    _STATE.clear()
    if pattern_set is not None:
        _STATE["matchers"] = {label: compile_matcher(pattern_set, label) for label in labels}
    _STATE["threshold"] = threshold
    _STATE["grid"] = profiler.CountryGrid.load(grid_path) if grid_path else None


def chunked(items: Iterable, size: int) -> Iterator[list]:
    it = iter(items)
    while True:
        chunk = list(islice(it, size))
        if not chunk:
            return
        yield chunk


def map_chunks(
    fn: Callable[[list], object],
    chunks: Iterable[list],
    workers: int,
    initargs: tuple,
) -> Iterator[object]:
    """Apply ``fn`` to each chunk, yielding results in input order.

    ``workers <= 1`` runs in-process. Otherwise at most ``2 * workers``
    chunks are in flight, which bounds memory on large corpora.
    """
    if workers <= 1:
        _init_worker(*initargs)
        for chunk in chunks:
            yield fn(chunk)
        return
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=initargs) as pool:
        pending: deque = deque()
        for chunk in chunks:
            pending.append(pool.submit(fn, chunk))
            if len(pending) >= 2 * workers:
                yield pending.popleft().result()
        while pending:
            yield pending.popleft().result()


def _bd_chunk(posts: list[Post]) -> list[tuple[Post, detector.DiagnosisEvidence]]:
    matcher = _STATE["matchers"][detector.TARGET_LABEL]
    threshold = _STATE["threshold"]
    out = []
    for post in posts:
        ev = detector.classify_post(post, matcher, threshold)
        if ev.matched:
            out.append((post, ev))
    return out


def _labels_chunk(posts: list[Post]) -> list[tuple[str, frozenset[str]]]:
    matchers = _STATE["matchers"]
    threshold = _STATE["threshold"]
    out = []
    for post in posts:
        labels = detector.labels_with_conservative(detector.post_labels(post, matchers, threshold))
        if labels:
            out.append((post.user_id, frozenset(labels)))
    return out


def _profile_chunk(items: list[tuple]) -> list[profiler.UserProfile]:
    grid = _STATE["grid"]
    return [profiler.build_profile(uid, posts, account, preds, grid) for uid, posts, account, preds in items]


# ---------------------------------------------------------------- stages


def load_patterns(cfg: PipelineConfig) -> PatternSet:
    try:
        ps = PatternSet.from_directory(cfg.patterns)
    except (OSError, PatternError) as exc:
        raise DataError(f"patterns: {exc}") from None
    if detector.TARGET_LABEL not in ps.condition_terms:
        raise DataError(f"patterns: no conditions/{detector.TARGET_LABEL}.txt in {cfg.patterns}")
    if not ps.inclusion_patterns:
        raise DataError("patterns: inclusion list is empty")
    try:
        for label in ps.labels:
            compile_matcher(ps, label)
    except PatternError as exc:
        raise DataError(f"patterns: {exc}") from None
    return ps


def cmd_ingest(cfg: PipelineConfig) -> dict:
    cfg.require("posts", "accounts")
    try:
        with open(cfg.accounts, encoding="utf-8") as fh:
            accounts = parse_accounts(fh)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    with open(cfg.posts, encoding="utf-8") as fh:
        try:
            stream = parse_posts_stream(fh, cfg.schema_map)
        except SchemaError as exc:
            raise ConfigError(str(exc)) from None
        manifest = write_store(
            cfg.store_dir,
            stream,
            accounts,
            {"inputs": {"posts": sha256_file(cfg.posts), "accounts": sha256_file(cfg.accounts)}},
        )
        manifest["n_skipped"] = stream.skipped
    write_text(cfg.store_dir / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    logger.info("ingested %d posts (%d skipped)", manifest["n_posts"], stream.skipped)
    if stream.skipped:
        logger.warning("%d malformed or duplicate post lines were skipped", stream.skipped)
    return manifest


def cmd_detect(cfg: PipelineConfig, workers: int = 1) -> dict:
    require_store(cfg)
    pattern_set = load_patterns(cfg)
    review = detector.load_review(cfg.review) if cfg.review else {}
    accounts = read_store_accounts(cfg.store_dir)
    labels = pattern_set.labels
    initargs = (pattern_set, labels, cfg.threshold_chars, None)

    stats = build_user_stats(read_store_posts(cfg.store_dir))
    pairs = []
    for part in map_chunks(_bd_chunk, chunked(read_store_posts(cfg.store_dir), CHUNK_SIZE), workers, initargs):
        pairs.extend(part)
    candidates = detector.cohort_from_evidence(pairs)

    cohort_stats = {u: stats[u] for u in candidates}
    cohort_accounts = {u: accounts[u] for u in candidates if u in accounts}
    for uid, flag in detector.flag_bot_candidates(cohort_stats, cohort_accounts):
        candidates[uid].flags.add(flag)

    found = {uid: {detector.TARGET_LABEL} for uid in candidates}
    member_posts = (p for p in read_store_posts(cfg.store_dir) if p.user_id in candidates)
    for part in map_chunks(_labels_chunk, chunked(member_posts, CHUNK_SIZE), workers, initargs):
        for uid, post_labels in part:
            found[uid] |= post_labels
    profiles = {u: detector.ComorbidityProfile(u, frozenset(found[u])) for u in sorted(found)}

    cohort, removals = detector.apply_exclusions(candidates, profiles, review)
    n_cohort_posts = sum(stats[u].n_posts for u in cohort)

    out = cfg.output_dir
    cohort_rows = [
        {
            "user_id": uid,
            "flags": sorted(entry.flags),
            "evidence_post_ids": [ev.post_id for ev in entry.evidence],
            "diagnoses": sorted(profiles[uid].diagnoses),
        }
        for uid, entry in cohort.items()
    ]
    evidence_rows = [
        dict(ev.to_record(), user_id=uid) for uid, entry in candidates.items() for ev in entry.evidence
    ]
    removal_rows = []
    for uid, entry in candidates.items():
        if uid in cohort:
            continue
        if detector.PSYCHOTIC_EXCLUDED in entry.flags:
            cls = "psychotic"
        elif detector.MANUAL_REMOVED in entry.flags:
            cls = "manual"
        else:
            cls = "bot"
        removal_rows.append((uid, cls, ",".join(sorted(entry.flags))))
    bot_rows = []
    for uid, entry in candidates.items():
        bot_flags = entry.flags & {detector.BOT_NAME, detector.HIGH_VOLUME}
        if bot_flags:
            acc = accounts.get(uid)
            decision = review.get(uid)
            bot_rows.append((
                uid, acc.username if acc else "", ",".join(sorted(bot_flags)),
                stats[uid].n_submissions, stats[uid].n_comments, decision.action if decision else "",
            ))
    summary = {
        "n_posts_scanned": sum(s.n_posts for s in stats.values()),
        "n_users_scanned": len(stats),
        "n_candidates": len(candidates),
        "n_cohort": len(cohort),
        "n_cohort_posts": n_cohort_posts,
        "removals": removals,
        "threshold_chars": cfg.threshold_chars,
    }
    write_text(out / "cohort.jsonl", jsonl_text(cohort_rows))
    write_text(out / "evidence.jsonl", jsonl_text(evidence_rows))
    write_text(out / "removals.tsv", tsv_text(("user_id", "removal_class", "flags"), removal_rows))
    write_text(out / "bot_candidates.tsv", tsv_text(
        ("user_id", "username", "flags", "n_submissions", "n_comments", "review_action"), bot_rows))
    write_text(out / "detect_summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def load_cohort(cfg: PipelineConfig) -> list[dict]:
    path = cfg.output_dir / "cohort.jsonl"
    if not path.exists():
        raise ConfigError(f"{path} missing; run detect first")
    return read_jsonl(path)


def cmd_profile(cfg: PipelineConfig, workers: int = 1) -> dict:
    require_store(cfg)
    cohort = load_cohort(cfg)
    if not Path(cfg.country_grid).exists():
        raise ConfigError(f"country_grid: {cfg.country_grid} does not exist")
    predictions = {}
    if cfg.predictions:
        try:
            with open(cfg.predictions, encoding="utf-8") as fh:
                predictions = profiler.load_predictions(fh)
        except ValueError as exc:
            raise DataError(str(exc)) from None
    try:
        profiler.CountryGrid.load(cfg.country_grid)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    accounts = read_store_accounts(cfg.store_dir)
    members = sorted(row["user_id"] for row in cohort)
    member_set = set(members)
    posts_by_user: dict[str, list[Post]] = {u: [] for u in members}
    for post in read_store_posts(cfg.store_dir):
        if post.user_id in member_set:
            posts_by_user[post.user_id].append(post)
    items = ((u, posts_by_user[u], accounts.get(u), predictions.get(u)) for u in members)
    initargs = (None, (), cfg.threshold_chars, str(cfg.country_grid))
    profiles: list[profiler.UserProfile] = []
    for part in map_chunks(_profile_chunk, chunked(items, 200), workers, initargs):
        profiles.extend(part)

    review_rows = []
    for p in profiles:
        for flag in sorted(p.flags & {profiler.AGE_REVIEW_LOW, profiler.AGE_REVIEW_HIGH}):
            mean = "" if p.mean_posting_age is None else f"{p.mean_posting_age:.2f}"
            review_rows.append((p.user_id, flag, mean))
    write_text(cfg.output_dir / "profiles.jsonl", jsonl_text(p.to_record() for p in profiles))
    write_text(cfg.output_dir / "age_review.csv",
               tsv_text(("user_id", "flag", "mean_posting_age"), review_rows, ","))
    return {
        "n_profiles": len(profiles),
        "n_age": sum(p.age_source != profiler.NONE for p in profiles),
        "n_gender": sum(p.gender is not None for p in profiles),
        "n_country": sum(p.country is not None for p in profiles),
    }


def load_profiles(cfg: PipelineConfig) -> list[profiler.UserProfile]:
    path = cfg.output_dir / "profiles.jsonl"
    if not path.exists():
        raise ConfigError(f"{path} missing; run profile first")
    return [profiler.UserProfile.from_record(r) for r in read_jsonl(path)]


_SAMPLING_NOTE = "gold users sampled among self-report matches; coverage_test biased upward"

EVAL_METHODS = (
    ("dob", "age", ("self_reported", "language_use", "hybrid")),
    ("country", "country", ("location",)),
    ("gender", "gender", ("username", "self_reported", "language_use", "hybrid")),
)


def cmd_evaluate(cfg: PipelineConfig) -> list[evaluation.EvaluationResult]:
    cfg.require("gold")
    cohort = load_cohort(cfg)
    profiles = load_profiles(cfg)
    try:
        annotations = evaluation.load_gold(cfg.gold)
        resolutions = evaluation.load_resolutions(cfg.resolutions)
    except (evaluation.GoldError, OSError) as exc:
        raise DataError(str(exc)) from None
    resolved = evaluation.resolve_gold(annotations, resolutions)
    population = len(profiles) or len(cohort)
    results = []
    if population:
        gold_bd = evaluation.gold_for(resolved, "bd_diagnosis")
        bd_predictions = {row["user_id"]: "yes" for row in cohort}
        results.append(evaluation.score_method(
            bd_predictions, gold_bd, population, variable="bd_diagnosis", method_name="pattern_matching"))
        for variable, attr, methods in EVAL_METHODS:
            gold = evaluation.gold_for(resolved, variable)
            for method in methods:
                preds = {}
                for p in profiles:
                    value = p.methods.get(attr, {}).get(method)
                    preds[p.user_id] = None if value is None else (
                        value.isoformat() if hasattr(value, "isoformat") else str(value))
                note = _SAMPLING_NOTE if (method == "self_reported" and variable in cfg.gold_selfreport_sampled) else ""
                results.append(evaluation.score_method(
                    preds, gold, population, variable=variable, method_name=method, notes=note))

    rows = [
        (r.variable, r.method_name, evaluation.format_pct(r.accuracy), evaluation.format_pct(r.coverage_test),
         evaluation.format_pct(r.coverage_all), r.n_gold, r.n_predicted_on_gold, r.n_correct, r.notes)
        for r in results
    ]
    agreement_rows = []
    for variable in evaluation.VARIABLES:
        users = len({a.user_id for a in annotations if a.variable == variable})
        if not users:
            continue
        agree = evaluation.raw_agreement(annotations, variable)
        unresolved = sum(1 for _, v in resolved.unresolved if v == variable)
        agreement_rows.append((variable, users, "n/a" if agree is None else f"{agree:.1f}", unresolved))
    write_text(cfg.output_dir / "evaluation.tsv", tsv_text(
        ("variable", "method", "accuracy_test", "coverage_test", "coverage_all",
         "n_gold", "n_predicted_on_gold", "n_correct", "notes"), rows))
    write_text(cfg.output_dir / "agreement.tsv", tsv_text(
        ("variable", "users", "agreement", "unresolved"), agreement_rows))
    return results


def load_baselines(path: Path | None) -> tuple[list[str], dict[str, list[str]]]:
    """Reference columns keyed by the first-column label."""
    if path is None:
        return [], {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader, None)
        if not header or len(header) < 2:
            raise DataError(f"{path}: baseline TSV needs a label column and at least one value column")
        values = {row[0]: row[1:] for row in reader if row}
    return header[1:], values


def with_baselines(header: list[str], rows: list[list], path: Path | None) -> tuple[list[str], list[list]]:
    columns, values = load_baselines(path)
    if not columns:
        return header, rows
    blank = [""] * len(columns)
    return header + columns, [row + (values.get(str(row[0]), blank) + blank)[: len(columns)] for row in rows]


@dataclass
class ReportBundle:
    summary: list[tuple[str, object]]
    comorbidity: tuple[list[str], list[list]]
    age_groups: tuple[list[str], list[list]]
    gender: tuple[list[str], list[list]]
    countries: tuple[list[str], list[list]]


def build_report(cfg: PipelineConfig, cohort: list[dict], profiles: list[profiler.UserProfile], detect_summary: dict) -> ReportBundle:
    n = len(cohort)
    comorbidity_rows: list[list] = []
    any_pct = None
    if n:
        cprofiles = {r["user_id"]: detector.ComorbidityProfile(r["user_id"], frozenset(r["diagnoses"])) for r in cohort}
        rates = detector.comorbidity_rates(cprofiles, n, cfg.mdd_policy)
        counts = Counter(label for p in cprofiles.values() for label in p.diagnoses)
        comorbidity_rows = [[label, counts[label], f"{rates[label]:.2f}"] for label in REPORT_LABELS]
        any_pct = rates["any_additional"]

    by_first = Counter(p.age_group_first_post for p in profiles if p.age_group_first_post)
    by_mean = Counter(p.age_group_mean for p in profiles if p.age_group_mean)
    n_first, n_mean = sum(by_first.values()), sum(by_mean.values())
    age_rows = [
        [g, by_first[g], pct(by_first[g], n_first), by_mean[g], pct(by_mean[g], n_mean)]
        for g in profiler.REPORT_AGE_GROUPS
    ] if profiles else []

    genders = Counter(p.gender for p in profiles if p.gender)
    n_gender = sum(genders.values())
    gender_rows = [[g, genders[g], pct(genders[g], n_gender)] for g in ("f", "m")] if profiles else []

    countries = Counter(p.country for p in profiles if p.country)
    n_country = sum(countries.values())
    top = sorted(countries.items(), key=lambda kv: (-kv[1], kv[0]))[: cfg.top_n_countries]
    country_rows = [[iso, c, pct(c, n_country)] for iso, c in top]

    first_ages = [p.first_post_age for p in profiles if p.first_post_age is not None]
    removals = detect_summary.get("removals", {})
    summary = [
        ("n_users", n),
        ("n_posts", detect_summary.get("n_cohort_posts", "")),
        ("n_candidates", detect_summary.get("n_candidates", "")),
        ("removed_psychotic", removals.get("psychotic", 0)),
        ("removed_bot", removals.get("bot", 0)),
        ("removed_manual", removals.get("manual", 0)),
        ("mdd_policy", cfg.mdd_policy),
        ("pct_any_additional_diagnosis", "n/a" if any_pct is None else f"{any_pct:.2f}"),
        ("mean_first_post_age", f"{statistics.fmean(first_ages):.2f}" if first_ages else "n/a"),
        ("n_age_first_post", n_first),
        ("n_age_mean_posting", n_mean),
        ("n_gender", n_gender),
        ("n_country", n_country),
    ]
    return ReportBundle(
        summary=summary,
        comorbidity=with_baselines(["diagnosis", "n", "pct_of_users"], comorbidity_rows, cfg.baselines_comorbidity),
        age_groups=with_baselines(
            ["age_group", "n_first_post", "pct_first_post", "n_mean_posting", "pct_mean_posting"],
            age_rows, cfg.baselines_age_groups),
        gender=with_baselines(["gender", "n", "pct_of_assigned"], gender_rows, cfg.baselines_gender),
        countries=with_baselines(["country", "n", "pct_of_assigned"], country_rows, cfg.baselines_countries),
    )


def cmd_report(cfg: PipelineConfig) -> ReportBundle:
    cohort = load_cohort(cfg)
    profiles_path = cfg.output_dir / "profiles.jsonl"
    profiles = load_profiles(cfg) if profiles_path.exists() else []
    summary_path = cfg.output_dir / "detect_summary.json"
    detect_summary = json.loads(summary_path.read_text()) if summary_path.exists() else {}
    bundle = build_report(cfg, cohort, profiles, detect_summary)
    out = cfg.output_dir / "report"
    write_text(out / "summary.tsv", tsv_text(("key", "value"), bundle.summary))
    for name in ("comorbidity", "age_groups", "gender", "countries"):
        header, rows = getattr(bundle, name)
        write_text(out / f"{name}.tsv", tsv_text(header, rows))
    return bundle


def read_secret(cfg: PipelineConfig) -> bytes:
    if cfg.secret_file is not None:
        secret = Path(cfg.secret_file).read_bytes().strip()
    else:
        secret = os.environ.get("DIAGCOHORT_SECRET", "").encode("utf-8")
    if not secret:
        raise ConfigError("export needs a secret: set secret_file or DIAGCOHORT_SECRET")
    return secret


def cmd_export(cfg: PipelineConfig) -> dict:
    require_store(cfg)
    secret = read_secret(cfg)
    id_map_path = cfg.id_map or (cfg.output_dir / "private" / "id_map.csv")
    export_dir = cfg.output_dir / "export"
    if Path(id_map_path).resolve().is_relative_to(export_dir.resolve()):
        raise ConfigError("id_map must not be written inside the export directory")
    accounts = read_store_accounts(cfg.store_dir)
    posts, new_accounts, id_map = pseudonymize_export(
        read_store_posts(cfg.store_dir), (accounts[u] for u in sorted(accounts)), secret)
    write_text(export_dir / "posts.jsonl", jsonl_text(p.to_record() for p in posts))
    write_text(export_dir / "accounts.jsonl", jsonl_text(a.to_record() for a in new_accounts))
    write_text(Path(id_map_path), tsv_text(("original_id", "token"), sorted(id_map.items()), ","))
    return {"n_posts": len(posts), "n_accounts": len(new_accounts), "n_ids": len(id_map)}
