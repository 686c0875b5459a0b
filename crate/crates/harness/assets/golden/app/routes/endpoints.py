import re

from app.services.articles import (
    change_favorite,
    create_article,
    delete_article,
    feed_articles,
    get_article,
    list_articles,
    list_tags,
    update_article,
)
from app.services.comments import add_comment, delete_comment, list_comments
from app.services.profiles import change_follow, get_profile
from app.services.users import current_user, login_user, register_user, update_user

# (method, path pattern, status on success, handler(db, request, *params))
ROUTES = [
    ("GET", r"/api/health-check", 200, lambda db, rq: {"status": "ok"}),
    ("POST", r"/api/users", 201, lambda db, rq: register_user(db, rq.body)),
    ("POST", r"/api/users/login", 200, lambda db, rq: login_user(db, rq.body)),
    ("GET", r"/api/user", 200, lambda db, rq: current_user(db, rq.viewer)),
    ("PUT", r"/api/user", 200, lambda db, rq: update_user(db, rq.viewer, rq.body)),
    ("GET", r"/api/profiles/([^/]+)", 200, lambda db, rq, name: get_profile(db, name, rq.viewer)),
    ("POST", r"/api/profiles/([^/]+)/follow", 200,
     lambda db, rq, name: change_follow(db, name, rq.viewer, True)),
    ("DELETE", r"/api/profiles/([^/]+)/follow", 200,
     lambda db, rq, name: change_follow(db, name, rq.viewer, False)),
    ("GET", r"/api/articles", 200, lambda db, rq: list_articles(db, rq.query, rq.viewer)),
    ("GET", r"/api/articles/feed", 200, lambda db, rq: feed_articles(db, rq.query, rq.viewer)),
    ("POST", r"/api/articles", 201, lambda db, rq: create_article(db, rq.viewer, rq.body)),
    ("GET", r"/api/articles/([^/]+)", 200, lambda db, rq, slug: get_article(db, slug, rq.viewer)),
    ("PUT", r"/api/articles/([^/]+)", 200,
     lambda db, rq, slug: update_article(db, slug, rq.viewer, rq.body)),
    ("DELETE", r"/api/articles/([^/]+)", 200,
     lambda db, rq, slug: delete_article(db, slug, rq.viewer)),
    ("POST", r"/api/articles/([^/]+)/favorite", 200,
     lambda db, rq, slug: change_favorite(db, slug, rq.viewer, True)),
    ("DELETE", r"/api/articles/([^/]+)/favorite", 200,
     lambda db, rq, slug: change_favorite(db, slug, rq.viewer, False)),
    ("GET", r"/api/articles/([^/]+)/comments", 200,
     lambda db, rq, slug: list_comments(db, slug, rq.viewer)),
    ("POST", r"/api/articles/([^/]+)/comments", 201,
     lambda db, rq, slug: add_comment(db, slug, rq.viewer, rq.body)),
    ("DELETE", r"/api/articles/([^/]+)/comments/(\d+)", 200,
     lambda db, rq, slug, cid: delete_comment(db, slug, int(cid), rq.viewer)),
    ("GET", r"/api/tags", 200, lambda db, rq: list_tags(db)),
]

COMPILED_ROUTES = [(m, re.compile(p + r"/?"), s, h) for m, p, s, h in ROUTES]


def match_route(method, path):
    for route_method, pattern, status, handler in COMPILED_ROUTES:
        found = pattern.fullmatch(path)
        if found and route_method == method:
            return status, handler, found.groups()
    return None
