from app.repositories.users import (
    find_user_by_email,
    find_user_by_token,
    find_user_by_username,
    insert_token,
    insert_user,
    latest_token,
    save_user,
)
from app.services.errors import ServiceError, require_object, unauthorized, unprocessable


def user_json(user, token):
    return {
        "user": {
            "email": user.email,
            "token": token,
            "username": user.username,
            "bio": user.bio,
            "image": user.image,
        }
    }


def authenticate(db, token):
    if not token:
        return None
    return find_user_by_token(db, token)


def require_user(viewer):
    if viewer is None:
        raise unauthorized()
    return viewer


def register_user(db, payload):
    data = require_object(payload, "user")
    fields = {}
    missing = []
    for key in ("username", "email", "password"):
        value = data.get(key)
        if not isinstance(value, str) or not value.strip():
            missing.append(key)
        else:
            fields[key] = value.strip()
    if missing:
        raise unprocessable(", ".join(missing) + " can't be blank")
    if find_user_by_username(db, fields["username"]):
        raise unprocessable("username has already been taken")
    if find_user_by_email(db, fields["email"]):
        raise unprocessable("email has already been taken")
    user = insert_user(db, fields["username"], fields["email"], fields["password"])
    return user_json(user, insert_token(db, user.id))


def login_user(db, payload):
    data = require_object(payload, "user")
    email, password = data.get("email"), data.get("password")
    if not isinstance(email, str) or not isinstance(password, str):
        raise unprocessable("email and password are required")
    user = find_user_by_email(db, email)
    if user is None or user.password != password:
        raise ServiceError(401, "email or password is invalid")
    return user_json(user, insert_token(db, user.id))


def current_user(db, viewer):
    user = require_user(viewer)
    return user_json(user, latest_token(db, user.id))


def update_user(db, viewer, payload):
    user = require_user(viewer)
    changes = require_object(payload, "user")
    username = changes.get("username")
    if isinstance(username, str):
        other = find_user_by_username(db, username)
        if other and other.id != user.id:
            raise unprocessable("username has already been taken")
        user.username = username
    email = changes.get("email")
    if isinstance(email, str):
        other = find_user_by_email(db, email)
        if other and other.id != user.id:
            raise unprocessable("email has already been taken")
        user.email = email
    if isinstance(changes.get("password"), str):
        user.password = changes["password"]
    for key in ("bio", "image"):
        if key in changes:
            value = changes[key]
            setattr(user, key, value if isinstance(value, str) else None)
    save_user(db, user)
    return user_json(user, latest_token(db, user.id))
