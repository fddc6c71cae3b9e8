from contextlib import contextmanager
from typing import Iterator
import uuid
from core.context import run_id_ctx


@contextmanager
def run_id_scope(run_id: str | None = None) -> Iterator[str]:
    # Use the given ID (if any), otherwise generate a new one
    corr_id = run_id or str(uuid.uuid4())

    # Set the context variable
    token = run_id_ctx.set(corr_id)
    try:
        yield corr_id
    finally:
        run_id_ctx.reset(token)
