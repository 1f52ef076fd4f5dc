"""Exception types shared across the package."""


class CorruptPayloadError(ValueError):
    """A received payload is internally inconsistent (bad index, wrong size)."""


class ProtocolError(RuntimeError):
    """A node received or was asked to produce a message outside the topology."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite parameter."""

    def __init__(self, round_index, node=None):
        self.round_index = round_index
        self.node = node
        where = f"round {round_index}" if node is None else f"round {round_index}, node {node}"
        super().__init__(f"non-finite model parameter at {where}")


class IdxFormatError(ValueError):
    """An IDX file failed header or consistency checks."""


class ConfigError(ValueError):
    """An experiment config failed schema validation."""
