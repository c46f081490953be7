"""
Exception hierarchy for the simulator.

The CLI maps these onto process exit codes (see ``EXIT_CODES``).
"""


class BeamSimError(Exception):
    """Base class for simulator errors"""


class ConfigError(BeamSimError, ValueError):
    """Invalid or inconsistent configuration"""


class SchemaMismatchError(ConfigError):
    """Dataset or weights schema does not match the active configuration"""


class NumericalError(BeamSimError, ArithmeticError):
    """Non-finite loss or weights during training"""


class ArtifactIOError(BeamSimError, OSError):
    """Artifact could not be read or written"""


EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

EXIT_CODES = (
    (ConfigError, EXIT_CONFIG),
    (NumericalError, EXIT_NUMERIC),
    (OSError, EXIT_IO),
)


def exit_code_for(error: BaseException) -> int:
    """Exit code for an exception raised out of a CLI subcommand."""
    for error_type, code in EXIT_CODES:
        if isinstance(error, error_type):
            return code
    return EXIT_UNEXPECTED
