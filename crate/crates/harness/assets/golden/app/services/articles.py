import re

from app.models.records import format_tick
from app.repositories.articles import (
    delete_article_row,
    distinct_tags,
    favorite_count,
    find_article_by_id,
    find_article_by_slug,
    insert_article,
    is_favorited,
    query_article_ids,
    save_article,
    set_favorite,
    slug_taken,
)
from app.repositories.clock import next_tick
from app.repositories.users import find_user_by_id, find_user_by_username
from app.services.errors import ServiceError, not_found, require_object, unprocessable
from app.services.profiles import profile_json
from app.services.users import require_user


def slugify(title):
    slug = re.sub(r"[^a-z0-9]+", "-", title.lower()).strip("-")
    return slug or "article"


def unique_slug(db, title, exclude_id=None):
    base = slugify(title)
    slug, n = base, 2
    while slug_taken(db, slug, exclude_id):
        slug, n = f"{base}-{n}", n + 1
    return slug


def article_json(db, article, viewer):
    author = find_user_by_id(db, article.author_id)
    return {
        "slug": article.slug,
        "title": article.title,
        "description": article.description,
        "body": article.body,
        "tagList": article.tags,
        "createdAt": format_tick(article.created_at),
        "updatedAt": format_tick(article.updated_at),
        "favorited": viewer is not None and is_favorited(db, viewer.id, article.id),
        "favoritesCount": favorite_count(db, article.id),
        "author": profile_json(db, author, viewer),
    }


def _int_param(query, key, default):
    try:
        return max(0, int(query.get(key, default)))
    except (TypeError, ValueError):
        return default


def _page(db, ids, query, viewer):
    offset = _int_param(query, "offset", 0)
    limit = _int_param(query, "limit", 20)
    page = [find_article_by_id(db, i) for i in ids[offset:offset + limit]]
    return {"articles": [article_json(db, a, viewer) for a in page], "articlesCount": len(ids)}


def list_articles(db, query, viewer):
    filters = {"tag": query.get("tag")}
    for param, key in (("author", "author_id"), ("favorited", "favorited_by")):
        if param in query:
            user = find_user_by_username(db, query[param])
            if user is None:
                return {"articles": [], "articlesCount": 0}
            filters[key] = user.id
    return _page(db, query_article_ids(db, **filters), query, viewer)


def feed_articles(db, query, viewer):
    me = require_user(viewer)
    return _page(db, query_article_ids(db, followed_by=me.id), query, viewer)


def create_article(db, viewer, payload):
    me = require_user(viewer)
    data = require_object(payload, "article")
    missing = [
        k for k in ("title", "description", "body")
        if not isinstance(data.get(k), str) or not data[k].strip()
    ]
    if missing:
        raise unprocessable(", ".join(missing) + " can't be blank")
    raw_tags = data.get("tagList") or []
    if not isinstance(raw_tags, list) or not all(isinstance(t, str) for t in raw_tags):
        raise unprocessable("tagList must be an array of strings")
    tags = []
    for tag in raw_tags:
        if tag not in tags:
            tags.append(tag)
    article = insert_article(
        db,
        unique_slug(db, data["title"]),
        data["title"],
        data["description"],
        data["body"],
        me.id,
        tags,
        next_tick(db),
    )
    return {"article": article_json(db, article, me)}


def find_article_or_404(db, slug):
    article = find_article_by_slug(db, slug)
    if article is None:
        raise not_found()
    return article


def get_article(db, slug, viewer):
    return {"article": article_json(db, find_article_or_404(db, slug), viewer)}


def _owned_article(db, slug, viewer):
    me = require_user(viewer)
    article = find_article_or_404(db, slug)
    if article.author_id != me.id:
        raise ServiceError(403, "only the author may change this article")
    return me, article


def update_article(db, slug, viewer, payload):
    me, article = _owned_article(db, slug, viewer)
    changes = require_object(payload, "article")
    if isinstance(changes.get("title"), str):
        article.title = changes["title"]
        article.slug = unique_slug(db, article.title, article.id)
    for key in ("description", "body"):
        if isinstance(changes.get(key), str):
            setattr(article, key, changes[key])
    article.updated_at = next_tick(db)
    save_article(db, article)
    return {"article": article_json(db, article, me)}


def delete_article(db, slug, viewer):
    _, article = _owned_article(db, slug, viewer)
    delete_article_row(db, article.id)
    return {}


def change_favorite(db, slug, viewer, favorite):
    me = require_user(viewer)
    article = find_article_or_404(db, slug)
    set_favorite(db, me.id, article.id, favorite)
    return {"article": article_json(db, article, me)}


def list_tags(db):
    return {"tags": distinct_tags(db)}
