"""HTTP service layer: pydantic schemas, FastAPI app and in-process handlers."""

from .app import app, create_app, handle_gen, handle_solve, handle_sweep

__all__ = ["app", "create_app", "handle_solve", "handle_gen", "handle_sweep"]
