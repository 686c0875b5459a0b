from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

EPOCH = datetime(2024, 1, 1, tzinfo=timezone.utc)


def format_tick(tick):
    """Logical clock ticks are milliseconds after EPOCH."""
    moment = EPOCH + timedelta(milliseconds=tick)
    return moment.strftime("%Y-%m-%dT%H:%M:%S.") + f"{moment.microsecond // 1000:03d}Z"


@dataclass
class User:
    id: int
    username: str
    email: str
    password: str
    bio: str = None
    image: str = None


@dataclass
class Article:
    id: int
    slug: str
    title: str
    description: str
    body: str
    author_id: int
    created_at: int
    updated_at: int
    tags: list = field(default_factory=list)


@dataclass
class Comment:
    id: int
    article_id: int
    author_id: int
    body: str
    created_at: int
    updated_at: int
