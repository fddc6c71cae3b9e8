from core import settings

settings.apply_thread_cap()

# -----------------------------------------------------------------------------------------------

from pathlib import Path
from typing import Any, Sequence
import json
import sys
import click

from cli.analyze import analyze_states_command
from cli.codec import compress_command, decompress_command
from cli.train import train_command
from cli.transform import dwt_command, enhance_command
from exc.exceptions import EXIT_OK, ConfigError, ErrorRegistry, add_exception_handlers
from exc.logging_config import setup_logging
from middleware.correlation import run_id_scope
from schemas.schemas_run import RunConfig

registry = ErrorRegistry()
add_exception_handlers(registry)

# -----------------------------------------------------------------------------------------------


class MwqGroup(click.Group):
    """Click group whose failures are turned into exit codes by the error registry."""

    def main(self, *args: Any, **extra: Any) -> Any:  # type: ignore[override]
        extra.pop("standalone_mode", None)
        try:
            code = super().main(*args, standalone_mode=False, **extra)
        except Exception as exc:
            code = registry.handle(exc)
        sys.exit(code if isinstance(code, int) else EXIT_OK)


def _option_aliases(command: click.Command) -> dict[str, str]:
    # "--data" is stored under the parameter name "data_dir"
    aliases: dict[str, str] = {}
    for param in command.params:
        if param.name is None:
            continue
        aliases[param.name] = param.name
        for opt in [*param.opts, *param.secondary_opts]:
            aliases[opt.lstrip("-").replace("-", "_")] = param.name
    return aliases


def _load_config(path: Path, ctx: click.Context) -> None:
    subcommand = ctx.invoked_subcommand
    if subcommand is None:
        return
    command = ctx.command.get_command(ctx, subcommand) if isinstance(ctx.command, click.Group) else None
    if command is None:
        return
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}", hint="Check the config file syntax.")
    if not isinstance(raw, dict):
        raise ConfigError(f"{path} must hold a JSON object", hint='Use {"option": value, ...}.')
    aliases = _option_aliases(command)
    run = RunConfig.model_validate(
        {"subcommand": subcommand, "options": raw},
        context={"allowed": set(aliases)},
    )
    ctx.default_map = {subcommand: {aliases[key]: value for key, value in run.options.items()}}


# -----------------------------------------------------------------------------------------------


@click.group(cls=MwqGroup, name="mwq")
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="JSON file of option defaults for the subcommand; explicit flags win.",
)
@click.option("--verbose", is_flag=True, default=False, help="DEBUG logging on the console.")
@click.pass_context
def app(ctx: click.Context, config_path: Path | None, verbose: bool) -> None:
    """Multiscale wavelet quantization toolkit."""
    setup_logging(verbose)
    ctx.with_resource(run_id_scope())
    if config_path is not None:
        _load_config(config_path, ctx)


app.add_command(dwt_command)
app.add_command(enhance_command)
app.add_command(analyze_states_command)
app.add_command(compress_command)
app.add_command(decompress_command)
app.add_command(train_command)

# -----------------------------------------------------------------------------------------------


def dispatch(argv: Sequence[str] | None = None) -> int:
    """Runs the CLI on `argv` and returns the exit code instead of exiting."""
    setup_logging()
    try:
        app.main(args=list(argv) if argv is not None else None, prog_name="mwq")
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_OK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(dispatch())
