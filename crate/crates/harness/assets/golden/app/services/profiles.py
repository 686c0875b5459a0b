from app.repositories.users import find_user_by_username, is_following, set_following
from app.services.errors import not_found
from app.services.users import require_user


def profile_json(db, user, viewer):
    return {
        "username": user.username,
        "bio": user.bio,
        "image": user.image,
        "following": viewer is not None and is_following(db, viewer.id, user.id),
    }


def get_profile(db, username, viewer):
    user = find_user_by_username(db, username)
    if user is None:
        raise not_found()
    return {"profile": profile_json(db, user, viewer)}


def change_follow(db, username, viewer, follow):
    me = require_user(viewer)
    user = find_user_by_username(db, username)
    if user is None:
        raise not_found()
    set_following(db, me.id, user.id, follow)
    return {"profile": profile_json(db, user, me)}
