import csv
import json
from collections import Counter
from pathlib import Path

import pytest

from diagcohort import pipeline
from diagcohort.cli import main
from diagcohort.config import ConfigError, load_config
from diagcohort.synthetic import write_corpus, generate

T0 = 1_500_000_000


def _jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))


def _tsv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh, delimiter="\t"))


def _tiny(tmp_path, bodies, extra_config=""):
    posts = [{"post_id": f"p{i}", "user_id": f"u{i}", "body": b, "subreddit": "s", "created_utc": T0 + i}
             for i, b in enumerate(bodies)]
    accounts = [{"user_id": f"u{i}", "username": f"name{i}", "created_utc": T0 - 10**6} for i in range(len(bodies))]
    _jsonl(tmp_path / "posts.jsonl", posts)
    _jsonl(tmp_path / "accounts.jsonl", accounts)
    config = tmp_path / "config.yaml"
    config.write_text("posts: posts.jsonl\naccounts: accounts.jsonl\noutput_dir: out\n" + extra_config)
    return config


def _run(config, *commands, threads=1):
    return [main(["--config", str(config), "--threads", str(threads), c]) for c in commands]


def test_five_planted_self_reports(tmp_path):
    bodies = [f"I was diagnosed with bipolar {k} years ago" for k in range(5)]
    bodies += ["I think I have bipolar", "my mom was diagnosed with bipolar", "nice weather", "> I was diagnosed with bipolar"]
    config = _tiny(tmp_path, bodies)
    assert _run(config, "ingest", "detect") == [0, 0]
    cohort = [json.loads(l) for l in (tmp_path / "out" / "cohort.jsonl").read_text().splitlines()]
    assert [r["user_id"] for r in cohort] == [f"u{i}" for i in range(5)]
    evidence = (tmp_path / "out" / "evidence.jsonl").read_text().splitlines()
    assert len(evidence) == 5


def test_zero_matches_empty_cohort_then_report_warns(tmp_path):
    config = _tiny(tmp_path, ["nothing relevant", "still nothing"])
    assert _run(config, "ingest", "detect") == [0, 0]
    assert (tmp_path / "out" / "cohort.jsonl").read_text() == ""
    assert _run(config, "profile") == [0]
    assert _run(config, "report") == [pipeline.EXIT_EMPTY]
    assert len(_tsv(tmp_path / "out" / "report" / "comorbidity.tsv")) == 0


def test_rerun_is_byte_identical(tmp_path):
    config = write_corpus(generate(60, seed=2), tmp_path)
    names = ["cohort.jsonl", "evidence.jsonl", "removals.tsv", "bot_candidates.tsv", "profiles.jsonl",
             "detect_summary.json", "evaluation.tsv", "report/summary.tsv"]
    assert _run(config, "ingest", "detect", "profile", "evaluate", "report") == [0] * 5
    first = {n: (tmp_path / "out" / n).read_bytes() for n in names}
    assert _run(config, "ingest", "detect", "profile", "evaluate", "report") == [0] * 5
    assert first == {n: (tmp_path / "out" / n).read_bytes() for n in names}


@pytest.mark.parametrize("text", [
    "posts: posts.jsonl\n",                           # no output_dir
    "output_dir: out\nbogus: 1\n",                    # unknown key
    "output_dir: out\nposts: missing.jsonl\n",        # missing path
    "output_dir: out\nthreshold_chars: 0\n",
    "output_dir: out\nmdd_policy: loose\n",
    "- just\n- a list\n",
])
def test_config_errors_exit_1(tmp_path, text):
    config = tmp_path / "c.yaml"
    config.write_text(text)
    assert main(["--config", str(config), "detect"]) == pipeline.EXIT_CONFIG
    assert not (tmp_path / "out").exists()


def test_detect_before_ingest_is_config_error(tmp_path):
    config = _tiny(tmp_path, ["x"])
    assert _run(config, "detect") == [pipeline.EXIT_CONFIG]


def test_bad_accounts_is_data_error(tmp_path):
    config = _tiny(tmp_path, ["x"])
    (tmp_path / "accounts.jsonl").write_text('{"user_id": "u0"}\n')
    assert _run(config, "ingest") == [pipeline.EXIT_DATA]
    assert not (tmp_path / "out" / "store").exists()


def test_bad_pattern_dir_is_data_error(tmp_path):
    patterns = tmp_path / "pat"
    (patterns / "conditions").mkdir(parents=True)
    (patterns / "inclusion.txt").write_text("my MYSTERY diagnos*\n")
    (patterns / "doctor.txt").write_text("doctor\n")
    (patterns / "conditions" / "BD.txt").write_text("bipolar\n")
    config = _tiny(tmp_path, ["x"], "patterns: pat\n")
    assert _run(config, "ingest", "detect") == [0, pipeline.EXIT_DATA]
    assert not (tmp_path / "out" / "cohort.jsonl").exists()


def test_report_planted_adhd_half(tmp_path):
    out = tmp_path / "out"
    out.mkdir()
    rows = [{"user_id": f"u{i}", "flags": [], "evidence_post_ids": [], "diagnoses": ["BD", "ADHD"] if i < 2 else ["BD"]}
            for i in range(4)]
    _jsonl(out / "cohort.jsonl", rows)
    (tmp_path / "c.yaml").write_text("output_dir: out\n")
    assert main(["--config", str(tmp_path / "c.yaml"), "report"]) == 0
    adhd = [r for r in _tsv(out / "report" / "comorbidity.tsv") if r["diagnosis"] == "ADHD"]
    assert float(adhd[0]["pct_of_users"]) == 50.0 and adhd[0]["n"] == "2"


def test_report_distributions_equal_ground_truth(synthetic_run):
    cfg, corpus = synthetic_run
    truth = corpus.truth
    bundle = pipeline.cmd_report(cfg)
    summary = dict(bundle.summary)
    assert summary["n_users"] == len(truth.cohort)
    assert summary["n_posts"] == truth.n_cohort_posts
    assert (summary["removed_psychotic"], summary["removed_bot"], summary["removed_manual"]) == tuple(
        len(truth.removals[k]) for k in ("psychotic", "bot", "manual"))

    out = cfg.output_dir / "report"
    first = Counter(g for g in truth.age_group_first_post.values() if g)
    mean = Counter(g for g in truth.age_group_mean.values() if g)
    for row in _tsv(out / "age_groups.tsv"):
        assert int(row["n_first_post"]) == first[row["age_group"]]
        assert int(row["n_mean_posting"]) == mean[row["age_group"]]
    genders = Counter(g for g in truth.gender.values() if g)
    assert {r["gender"]: int(r["n"]) for r in _tsv(out / "gender.tsv")} == {"f": genders["f"], "m": genders["m"]}
    countries = Counter(c for c in truth.country.values() if c)
    top = sorted(countries.items(), key=lambda kv: (-kv[1], kv[0]))[:5]
    assert [(r["country"], int(r["n"])) for r in _tsv(out / "countries.tsv")] == top
    diag = Counter(label for labels in truth.diagnoses.values() for label in labels)
    for row in _tsv(out / "comorbidity.tsv"):
        assert int(row["n"]) == diag[row["diagnosis"]]

    for name, col in (("age_groups.tsv", "pct_first_post"), ("age_groups.tsv", "pct_mean_posting"),
                      ("gender.tsv", "pct_of_assigned")):
        assert abs(sum(float(r[col]) for r in _tsv(out / name)) - 100) <= 0.1


def test_baseline_columns_are_appended(synthetic_run, tmp_path):
    cfg, _ = synthetic_run
    base = tmp_path / "survey.tsv"
    base.write_text("gender\treddit_survey_pct\nf\t33.0\nm\t67.0\n")
    pipeline.cmd_report(cfg)
    plain = _tsv(cfg.output_dir / "report" / "gender.tsv")
    cfg.baselines_gender = base
    try:
        pipeline.cmd_report(cfg)
        with_base = _tsv(cfg.output_dir / "report" / "gender.tsv")
    finally:
        cfg.baselines_gender = None
        pipeline.cmd_report(cfg)
    assert [r["reddit_survey_pct"] for r in with_base] == ["33.0", "67.0"]
    assert [{k: v for k, v in r.items() if k != "reddit_survey_pct"} for r in with_base] == plain


def test_evaluate_rows_and_sampling_note(synthetic_run):
    cfg, _ = synthetic_run
    pipeline.cmd_evaluate(cfg)
    rows = _tsv(cfg.output_dir / "evaluation.tsv")
    keys = {(r["variable"], r["method"]) for r in rows}
    assert {("gender", "hybrid"), ("dob", "hybrid"), ("bd_diagnosis", "pattern_matching"),
            ("country", "location")} <= keys
    hybrid_gender = next(r for r in rows if (r["variable"], r["method"]) == ("gender", "hybrid"))
    assert hybrid_gender["accuracy_test"] == "100.0"
    assert all(r["notes"] == "" for r in rows)
    cfg.gold_selfreport_sampled = ("gender",)
    try:
        pipeline.cmd_evaluate(cfg)
    finally:
        cfg.gold_selfreport_sampled = ()
    rows = _tsv(cfg.output_dir / "evaluation.tsv")
    noted = [(r["variable"], r["method"]) for r in rows if r["notes"]]
    assert noted == [("gender", "self_reported")]
    agreement = {r["variable"]: r for r in _tsv(cfg.output_dir / "agreement.tsv")}
    assert agreement["gender"]["unresolved"] == "1"


def test_export_needs_secret(tmp_path, monkeypatch):
    monkeypatch.delenv("DIAGCOHORT_SECRET", raising=False)
    config = _tiny(tmp_path, ["x"])
    assert _run(config, "ingest", "export") == [0, pipeline.EXIT_CONFIG]
    monkeypatch.setenv("DIAGCOHORT_SECRET", "s3cret")
    assert _run(config, "export") == [0]
    assert (tmp_path / "out" / "private" / "id_map.csv").exists()
    assert sorted(p.name for p in (tmp_path / "out" / "export").iterdir()) == ["accounts.jsonl", "posts.jsonl"]


def test_id_map_inside_export_rejected(tmp_path, monkeypatch):
    monkeypatch.setenv("DIAGCOHORT_SECRET", "s3cret")
    config = _tiny(tmp_path, ["x"], "id_map: out/export/id_map.csv\n")
    assert _run(config, "ingest", "export") == [0, pipeline.EXIT_CONFIG]


def test_synth_command_writes_runnable_demo(tmp_path, capsys):
    assert main(["--seed", "3", "synth", str(tmp_path / "demo"), "--users", "40"]) == 0
    config = Path(capsys.readouterr().out.strip())
    assert load_config(config).posts.exists()


def test_load_config_resolves_relative_to_file(tmp_path):
    sub = tmp_path / "cfg"
    sub.mkdir()
    (tmp_path / "posts.jsonl").write_text("")
    (sub / "c.yaml").write_text("posts: ../posts.jsonl\noutput_dir: ../out\n")
    cfg = load_config(sub / "c.yaml")
    assert cfg.posts == (tmp_path / "posts.jsonl").resolve()
    assert cfg.store_dir == (tmp_path / "out" / "store").resolve()
    with pytest.raises(ConfigError):
        cfg.require("gold")
