from app.models.records import Comment


def _comment_from_row(row):
    if row is None:
        return None
    return Comment(
        id=row["id"],
        article_id=row["article_id"],
        author_id=row["author_id"],
        body=row["body"],
        created_at=row["created_at"],
        updated_at=row["updated_at"],
    )


def insert_comment(db, article_id, author_id, body, tick):
    cursor = db.execute(
        "INSERT INTO comments (article_id, author_id, body, created_at, updated_at)"
        " VALUES (?, ?, ?, ?, ?)",
        (article_id, author_id, body, tick, tick),
    )
    return find_comment(db, article_id, cursor.lastrowid)


def find_comment(db, article_id, comment_id):
    row = db.execute(
        "SELECT * FROM comments WHERE id = ? AND article_id = ?", (comment_id, article_id)
    ).fetchone()
    return _comment_from_row(row)


def comments_for_article(db, article_id):
    rows = db.execute("SELECT * FROM comments WHERE article_id = ? ORDER BY id", (article_id,))
    return [_comment_from_row(r) for r in rows]


def delete_comment_row(db, comment_id):
    db.execute("DELETE FROM comments WHERE id = ?", (comment_id,))
