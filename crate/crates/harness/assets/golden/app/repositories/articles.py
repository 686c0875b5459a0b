from app.models.records import Article


def _article_from_row(db, row):
    if row is None:
        return None
    tags = [
        r["tag"]
        for r in db.execute(
            "SELECT tag FROM article_tags WHERE article_id = ? ORDER BY position", (row["id"],)
        )
    ]
    return Article(
        id=row["id"],
        slug=row["slug"],
        title=row["title"],
        description=row["description"],
        body=row["body"],
        author_id=row["author_id"],
        created_at=row["created_at"],
        updated_at=row["updated_at"],
        tags=tags,
    )


def insert_article(db, slug, title, description, body, author_id, tags, tick):
    cursor = db.execute(
        "INSERT INTO articles (slug, title, description, body, author_id, created_at, updated_at)"
        " VALUES (?, ?, ?, ?, ?, ?, ?)",
        (slug, title, description, body, author_id, tick, tick),
    )
    for position, tag in enumerate(tags):
        db.execute(
            "INSERT INTO article_tags (article_id, position, tag) VALUES (?, ?, ?)",
            (cursor.lastrowid, position, tag),
        )
    return find_article_by_id(db, cursor.lastrowid)


def find_article_by_id(db, article_id):
    row = db.execute("SELECT * FROM articles WHERE id = ?", (article_id,)).fetchone()
    return _article_from_row(db, row)


def find_article_by_slug(db, slug):
    row = db.execute("SELECT * FROM articles WHERE slug = ?", (slug,)).fetchone()
    return _article_from_row(db, row)


def slug_taken(db, slug, exclude_id=None):
    row = db.execute(
        "SELECT 1 FROM articles WHERE slug = ? AND id IS NOT ?", (slug, exclude_id)
    ).fetchone()
    return row is not None


def save_article(db, article):
    db.execute(
        "UPDATE articles SET slug = ?, title = ?, description = ?, body = ?, updated_at = ?"
        " WHERE id = ?",
        (article.slug, article.title, article.description, article.body, article.updated_at,
         article.id),
    )


def delete_article_row(db, article_id):
    db.execute("DELETE FROM articles WHERE id = ?", (article_id,))


def query_article_ids(db, tag=None, author_id=None, favorited_by=None, followed_by=None):
    """Matching ids, most recent first."""
    clauses, params = [], []
    if tag is not None:
        clauses.append("id IN (SELECT article_id FROM article_tags WHERE tag = ?)")
        params.append(tag)
    if author_id is not None:
        clauses.append("author_id = ?")
        params.append(author_id)
    if favorited_by is not None:
        clauses.append("id IN (SELECT article_id FROM favorites WHERE user_id = ?)")
        params.append(favorited_by)
    if followed_by is not None:
        clauses.append("author_id IN (SELECT followee_id FROM follows WHERE follower_id = ?)")
        params.append(followed_by)
    where = " WHERE " + " AND ".join(clauses) if clauses else ""
    rows = db.execute(
        f"SELECT id FROM articles{where} ORDER BY created_at DESC, id DESC", params
    )
    return [r["id"] for r in rows]


def set_favorite(db, user_id, article_id, favorite):
    if favorite:
        db.execute(
            "INSERT OR IGNORE INTO favorites (user_id, article_id) VALUES (?, ?)",
            (user_id, article_id),
        )
    else:
        db.execute(
            "DELETE FROM favorites WHERE user_id = ? AND article_id = ?", (user_id, article_id)
        )


def is_favorited(db, user_id, article_id):
    row = db.execute(
        "SELECT 1 FROM favorites WHERE user_id = ? AND article_id = ?", (user_id, article_id)
    ).fetchone()
    return row is not None


def favorite_count(db, article_id):
    row = db.execute(
        "SELECT COUNT(*) AS n FROM favorites WHERE article_id = ?", (article_id,)
    ).fetchone()
    return row["n"]


def distinct_tags(db):
    rows = db.execute(
        "SELECT tag FROM article_tags JOIN articles ON articles.id = article_tags.article_id"
        " ORDER BY articles.created_at, articles.id, article_tags.position"
    )
    seen = []
    for r in rows:
        if r["tag"] not in seen:
            seen.append(r["tag"])
    return seen
