"""Post/account ingestion, text cleanup, per-user stats and pseudonymized export."""

from __future__ import annotations

import hashlib
import hmac
import json
import logging
from dataclasses import asdict, dataclass
from typing import IO, Iterable, Iterator, Mapping

logger = logging.getLogger(__name__)

SUBMISSION = "submission"
COMMENT = "comment"

# 2005-06-23; anything earlier is a corrupt timestamp
MIN_CREATED_UTC = 1119398400

POST_FIELDS = ("post_id", "user_id", "kind", "title", "body", "subreddit", "created_utc")
REQUIRED_POST_FIELDS = ("post_id", "user_id", "body", "subreddit", "created_utc")

# canonical field -> source keys tried in order; covers canonical records
# and Pushshift-style dumps (id/selftext/author_fullname)
DEFAULT_SCHEMA_MAP: dict[str, tuple[str, ...]] = {
    "post_id": ("post_id", "id"),
    "user_id": ("user_id", "author_id", "author_fullname"),
    "kind": ("kind",),
    "title": ("title",),
    "body": ("body", "selftext"),
    "subreddit": ("subreddit",),
    "created_utc": ("created_utc",),
}


class SchemaError(ValueError):
    """Raised when a schema map cannot produce the required Post fields."""


@dataclass(frozen=True)
class Post:
    post_id: str
    user_id: str
    kind: str
    title: str | None
    body: str
    subreddit: str
    created_utc: int

    def __post_init__(self) -> None:
        if not self.post_id:
            raise ValueError("empty post_id")
        if not self.user_id:
            raise ValueError("empty user_id")
        if self.kind not in (SUBMISSION, COMMENT):
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.kind == COMMENT and self.title is not None:
            raise ValueError("comments have no title")
        if self.created_utc < MIN_CREATED_UTC:
            raise ValueError(f"created_utc {self.created_utc} predates Reddit")

    @property
    def text(self) -> str:
        """Title and body joined by one space: the unit that gets matched."""
        if self.title:
            return f"{self.title} {self.body}"
        return self.body

    def to_record(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class UserAccount:
    user_id: str
    username: str
    created_utc: int

    def __post_init__(self) -> None:
        if not self.user_id or not self.username:
            raise ValueError("user_id and username must be non-empty")

    def to_record(self) -> dict:
        return asdict(self)


@dataclass
class UserStats:
    user_id: str
    n_submissions: int = 0
    n_comments: int = 0
    first_post_utc: int | None = None
    last_post_utc: int | None = None

    @property
    def n_posts(self) -> int:
        return self.n_submissions + self.n_comments


def _resolve_schema(schema_map: Mapping[str, Iterable[str] | str] | None) -> dict[str, tuple[str, ...]]:
    if schema_map is None:
        return dict(DEFAULT_SCHEMA_MAP)
    resolved = {}
    for field, keys in schema_map.items():
        if field not in POST_FIELDS:
            raise SchemaError(f"schema map names unknown field {field!r}")
        resolved[field] = (keys,) if isinstance(keys, str) else tuple(keys)
    missing = [f for f in REQUIRED_POST_FIELDS if not resolved.get(f)]
    if missing:
        raise SchemaError(f"schema map lacks required fields: {', '.join(missing)}")
    return resolved


def _pick(record: dict, keys: tuple[str, ...]):
    for key in keys:
        if key in record:
            return record[key]
    raise KeyError(keys[0])


def post_from_record(record: dict, schema: Mapping[str, tuple[str, ...]]) -> Post:
    """Build a Post from one decoded record; raises on anything invalid."""
    if not isinstance(record, dict):
        raise TypeError("record is not an object")
    title = None
    if schema.get("title"):
        try:
            title = _pick(record, schema["title"])
        except KeyError:
            pass
    kind = None
    if schema.get("kind"):
        try:
            kind = _pick(record, schema["kind"])
        except KeyError:
            pass
    if kind is None:
        kind = SUBMISSION if title is not None else COMMENT
    if kind == COMMENT and title == "":
        # some dumps carry an empty title on comments
        title = None
    if title is not None and not isinstance(title, str):
        raise TypeError("title must be a string")
    body = _pick(record, schema["body"])
    if body is None:
        body = ""
    created = _pick(record, schema["created_utc"])
    if isinstance(created, bool) or not isinstance(created, (int, float, str)):
        raise TypeError("created_utc must be numeric")
    created_f = float(created)
    if created_f != int(created_f):
        raise ValueError("created_utc must be whole seconds")
    fields = {
        "post_id": _pick(record, schema["post_id"]),
        "user_id": _pick(record, schema["user_id"]),
        "subreddit": _pick(record, schema["subreddit"]),
        "body": body,
    }
    for name, value in fields.items():
        if not isinstance(value, str):
            raise TypeError(f"{name} must be a string")
    return Post(
        post_id=fields["post_id"],
        user_id=fields["user_id"],
        kind=kind,
        title=title,
        body=body,
        subreddit=fields["subreddit"],
        created_utc=int(created_f),
    )


class PostStream:
    """Lazy iterator of Posts over a line-delimited JSON source.

    Malformed lines (bad JSON, missing fields, broken invariants, repeated
    post ids) are skipped and counted in ``skipped``.
    """

    def __init__(self, source: Iterable[str], schema_map=None) -> None:
        self._schema = _resolve_schema(schema_map)
        self._source = source
        self.skipped = 0
        self.parsed = 0

    def __iter__(self) -> Iterator[Post]:
        seen: set[str] = set()
        for lineno, line in enumerate(self._source, 1):
            if not line.strip():
                continue
            try:
                post = post_from_record(json.loads(line), self._schema)
            except (ValueError, TypeError, KeyError) as exc:
                self.skipped += 1
                logger.debug("skipping line %d: %s", lineno, exc)
                continue
            if post.post_id in seen:
                self.skipped += 1
                logger.debug("skipping line %d: duplicate post_id %s", lineno, post.post_id)
                continue
            seen.add(post.post_id)
            self.parsed += 1
            yield post


def parse_posts_stream(source: Iterable[str], schema_map=None) -> PostStream:
    """Parse line-delimited post records; see :class:`PostStream`."""
    return PostStream(source, schema_map)


def parse_accounts(source: Iterable[str]) -> dict[str, UserAccount]:
    """Read accounts.jsonl. Unlike posts, broken account rows are fatal."""
    accounts: dict[str, UserAccount] = {}
    for lineno, line in enumerate(source, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            account = UserAccount(str(rec["user_id"]), str(rec["username"]), int(rec["created_utc"]))
        except (ValueError, TypeError, KeyError) as exc:
            raise ValueError(f"accounts line {lineno}: {exc}") from exc
        if account.user_id in accounts:
            raise ValueError(f"accounts line {lineno}: duplicate user_id {account.user_id}")
        accounts[account.user_id] = account
    return accounts


def dump_jsonl(records: Iterable[dict], fh: IO[str]) -> int:
    n = 0
    for rec in records:
        fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True))
        fh.write("\n")
        n += 1
    return n


def serialize_posts(posts: Iterable[Post]) -> Iterator[str]:
    for post in posts:
        yield json.dumps(post.to_record(), ensure_ascii=False, sort_keys=True)


def strip_quotes(text: str) -> str:
    """Drop Markdown block-quote lines (first non-blank char is ``>``)."""
    if ">" not in text:
        return text
    lines = text.split("\n")
    kept = [ln for ln in lines if not ln.lstrip().startswith(">")]
    return "\n".join(kept)


APOSTROPHE_FOLD = str.maketrans({"’": "'", "‘": "'", "ʼ": "'"})


def normalize_text(text: str) -> str:
    """Lowercase, fold typographic apostrophes, collapse whitespace."""
    return " ".join(text.lower().translate(APOSTROPHE_FOLD).split())


def build_user_stats(posts: Iterable[Post]) -> dict[str, UserStats]:
    stats: dict[str, UserStats] = {}
    for post in posts:
        st = stats.get(post.user_id)
        if st is None:
            st = stats[post.user_id] = UserStats(post.user_id)
        if post.kind == SUBMISSION:
            st.n_submissions += 1
        else:
            st.n_comments += 1
        ts = post.created_utc
        if st.first_post_utc is None or ts < st.first_post_utc:
            st.first_post_utc = ts
        if st.last_post_utc is None or ts > st.last_post_utc:
            st.last_post_utc = ts
    return stats


def _token(value: str, secret: bytes, salt: int) -> str:
    msg = value.encode("utf-8") if salt == 0 else f"{salt}\x00{value}".encode("utf-8")
    return hmac.new(secret, msg, hashlib.sha256).hexdigest()[:16]


class Pseudonymizer:
    """Deterministic keyed-hash tokens, re-salted on the rare collision.

    ``originals`` lists every string being replaced; a token that happens to
    contain one of them as a substring is re-salted as well.
    """

    def __init__(self, secret: bytes, originals: Iterable[str] = ()) -> None:
        if not secret:
            raise ValueError("pseudonymization needs a non-empty secret")
        self._secret = secret
        self._originals = set(originals)
        self.id_map: dict[str, str] = {}
        self._taken: set[str] = set()

    def _leaks(self, token: str) -> bool:
        if not self._originals:
            return False
        n = len(token)
        return any(token[i:j] in self._originals for i in range(n) for j in range(i + 1, n + 1))

    def __call__(self, value: str) -> str:
        token = self.id_map.get(value)
        if token is not None:
            return token
        salt = 0
        token = _token(value, self._secret, salt)
        while token in self._taken or self._leaks(token):
            salt += 1
            token = _token(value, self._secret, salt)
        self.id_map[value] = token
        self._taken.add(token)
        return token


def pseudonymize_export(
    posts: Iterable[Post],
    accounts: Iterable[UserAccount],
    secret: bytes,
) -> tuple[list[Post], list[UserAccount], dict[str, str]]:
    """Replace post ids, user ids and usernames by opaque tokens.

    Returns the rewritten posts and accounts plus the original -> token map,
    which must be stored apart from the export.
    """
    if not secret:
        raise ValueError("pseudonymization needs a non-empty secret")
    accounts = list(accounts)
    posts = list(posts)
    originals = {a.user_id for a in accounts} | {a.username for a in accounts}
    originals |= {p.user_id for p in posts} | {p.post_id for p in posts}
    pseudo = Pseudonymizer(secret, originals)
    # fixed visiting order keeps the (rare) collision re-salting deterministic
    for acc in accounts:
        pseudo(acc.user_id)
        pseudo(acc.username)
    for post in posts:
        pseudo(post.user_id)
        pseudo(post.post_id)
    new_accounts = [
        UserAccount(pseudo(a.user_id), pseudo(a.username), a.created_utc) for a in accounts
    ]
    new_posts = [
        Post(
            post_id=pseudo(p.post_id),
            user_id=pseudo(p.user_id),
            kind=p.kind,
            title=p.title,
            body=p.body,
            subreddit=p.subreddit,
            created_utc=p.created_utc,
        )
        for p in posts
    ]
    return new_posts, new_accounts, dict(pseudo.id_map)
