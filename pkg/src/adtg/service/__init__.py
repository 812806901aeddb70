"""FastAPI guidance service wrapping the core package.

``uvicorn adtg.service:app`` serves the run configured by ADTG_CORPUS,
ADTG_OUT, and optionally ADTG_CONFIG; use ``create_app`` to embed.
"""

from .app import app_from_env, create_app

__all__ = ["app_from_env", "create_app"]


def __getattr__(name):
    if name == "app":
        return app_from_env()
    raise AttributeError(name)
