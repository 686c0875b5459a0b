class ServiceError(Exception):
    def __init__(self, status, message):
        super().__init__(message)
        self.status = status
        self.message = message


def not_found():
    return ServiceError(404, "not found")


def unauthorized():
    return ServiceError(401, "missing or invalid authorization token")


def unprocessable(message):
    return ServiceError(422, message)


def require_object(payload, key):
    value = payload.get(key) if isinstance(payload, dict) else None
    if not isinstance(value, dict):
        raise unprocessable(f"request body must contain a `{key}` object")
    return value
