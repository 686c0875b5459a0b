from app.models.records import User


def _user_from_row(row):
    if row is None:
        return None
    return User(
        id=row["id"],
        username=row["username"],
        email=row["email"],
        password=row["password"],
        bio=row["bio"],
        image=row["image"],
    )


def insert_user(db, username, email, password):
    cursor = db.execute(
        "INSERT INTO users (username, email, password) VALUES (?, ?, ?)",
        (username, email, password),
    )
    return find_user_by_id(db, cursor.lastrowid)


def find_user_by_id(db, user_id):
    return _user_from_row(db.execute("SELECT * FROM users WHERE id = ?", (user_id,)).fetchone())


def find_user_by_username(db, username):
    row = db.execute("SELECT * FROM users WHERE username = ?", (username,)).fetchone()
    return _user_from_row(row)


def find_user_by_email(db, email):
    return _user_from_row(db.execute("SELECT * FROM users WHERE email = ?", (email,)).fetchone())


def save_user(db, user):
    db.execute(
        "UPDATE users SET username = ?, email = ?, password = ?, bio = ?, image = ? WHERE id = ?",
        (user.username, user.email, user.password, user.bio, user.image, user.id),
    )


def insert_token(db, user_id):
    count = db.execute("SELECT COUNT(*) AS n FROM tokens").fetchone()["n"]
    token = f"cdt.{user_id:04x}.{count + 1:08x}"
    db.execute("INSERT INTO tokens (token, user_id) VALUES (?, ?)", (token, user_id))
    return token


def find_user_by_token(db, token):
    row = db.execute(
        "SELECT users.* FROM tokens JOIN users ON users.id = tokens.user_id WHERE token = ?",
        (token,),
    ).fetchone()
    return _user_from_row(row)


def latest_token(db, user_id):
    row = db.execute(
        "SELECT token FROM tokens WHERE user_id = ? ORDER BY rowid DESC LIMIT 1", (user_id,)
    ).fetchone()
    return row["token"] if row else ""


def set_following(db, follower_id, followee_id, following):
    if following:
        db.execute(
            "INSERT OR IGNORE INTO follows (follower_id, followee_id) VALUES (?, ?)",
            (follower_id, followee_id),
        )
    else:
        db.execute(
            "DELETE FROM follows WHERE follower_id = ? AND followee_id = ?",
            (follower_id, followee_id),
        )


def is_following(db, follower_id, followee_id):
    row = db.execute(
        "SELECT 1 FROM follows WHERE follower_id = ? AND followee_id = ?",
        (follower_id, followee_id),
    ).fetchone()
    return row is not None
