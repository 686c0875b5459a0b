from app.models.records import format_tick
from app.repositories.clock import next_tick
from app.repositories.comments import (
    comments_for_article,
    delete_comment_row,
    find_comment,
    insert_comment,
)
from app.repositories.users import find_user_by_id
from app.services.articles import find_article_or_404
from app.services.errors import ServiceError, not_found, require_object, unprocessable
from app.services.profiles import profile_json
from app.services.users import require_user


def comment_json(db, comment, viewer):
    return {
        "id": comment.id,
        "createdAt": format_tick(comment.created_at),
        "updatedAt": format_tick(comment.updated_at),
        "body": comment.body,
        "author": profile_json(db, find_user_by_id(db, comment.author_id), viewer),
    }


def list_comments(db, slug, viewer):
    article = find_article_or_404(db, slug)
    return {"comments": [comment_json(db, c, viewer) for c in comments_for_article(db, article.id)]}


def add_comment(db, slug, viewer, payload):
    me = require_user(viewer)
    article = find_article_or_404(db, slug)
    body = require_object(payload, "comment").get("body")
    if not isinstance(body, str) or not body.strip():
        raise unprocessable("body can't be blank")
    comment = insert_comment(db, article.id, me.id, body, next_tick(db))
    return {"comment": comment_json(db, comment, me)}


def delete_comment(db, slug, comment_id, viewer):
    me = require_user(viewer)
    article = find_article_or_404(db, slug)
    comment = find_comment(db, article.id, comment_id)
    if comment is None:
        raise not_found()
    if comment.author_id != me.id:
        raise ServiceError(403, "only the author may delete this comment")
    delete_comment_row(db, comment.id)
    return {}
