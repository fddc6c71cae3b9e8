from contextvars import ContextVar

# This holds the ID for the duration of one CLI invocation
run_id_ctx: ContextVar[str] = ContextVar("run_id", default="n/a")
