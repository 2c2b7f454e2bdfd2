"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, ProtocolError -> 3,
StageError -> 4.
"""


class FormatError(ValueError):
    """Malformed binary or text input (bad magic, truncated payload, bad header)."""


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class ProtocolError(RuntimeError):
    """The evaluation protocol cannot proceed (e.g. no usable triplets)."""


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage, message):
        super().__init__(f"stage '{stage}': {message}")
        self.stage = stage


class ContractError(RuntimeError):
    """An adapter (attack or restorer) violated its interface contract."""
