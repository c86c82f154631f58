"""HTTP control service: authentication, API schemas, and routes."""

__all__ = ["create_app"]


def __getattr__(name):
    # Imported lazily so core users do not pay for the web stack.
    if name == "create_app":
        from .app import create_app
        return create_app
    raise AttributeError(name)
