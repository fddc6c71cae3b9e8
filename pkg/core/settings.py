from dotenv import load_dotenv
import os

# ------------------------------------------------------------------------------------

load_dotenv()

MWQ_THREADS_RAW: str = os.getenv("MWQ_THREADS", "1")
MWQ_LOG_DIR: str = os.getenv("MWQ_LOG_DIR", "exc/logs")
MWQ_LOG_LEVEL: str = os.getenv("MWQ_LOG_LEVEL", "INFO").upper()

try:
    MWQ_THREADS: int = int(MWQ_THREADS_RAW)
except ValueError:
    raise ValueError(
        f"CRITICAL: MWQ_THREADS must be a positive integer, got {MWQ_THREADS_RAW!r}."
    )

if MWQ_THREADS < 1:
    raise ValueError(
        f"CRITICAL: MWQ_THREADS must be a positive integer, got {MWQ_THREADS}."
    )

if MWQ_LOG_LEVEL not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
    raise ValueError(f"CRITICAL: MWQ_LOG_LEVEL {MWQ_LOG_LEVEL!r} is not a logging level.")

# ------------------------------------------------------------------------------------

# Thread-count variables honoured by the BLAS builds numpy links against.
THREAD_ENV_VARS: tuple[str, ...] = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
)


def apply_thread_cap() -> None:
    """Exports MWQ_THREADS to the BLAS thread variables.

    Must run before numpy is imported for the cap to take effect.
    """
    for name in THREAD_ENV_VARS:
        os.environ[name] = str(MWQ_THREADS)
