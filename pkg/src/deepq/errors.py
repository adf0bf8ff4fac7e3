"""Exception types shared across the toolkit."""


class DeepQError(Exception):
    """Base class for all toolkit errors."""


class GeometryError(DeepQError):
    """Layer geometry is infeasible (e.g. stride does not divide the input)."""


class PhaseOrderError(DeepQError):
    """forward/backward/calculate_gradient called out of order."""


class NonFiniteError(DeepQError):
    """A NaN or Inf was produced where only finite values are allowed."""


class ConfigError(DeepQError):
    """A configuration value is unknown, unparsable, or out of range."""


class CheckpointError(DeepQError):
    """Base class for checkpoint load failures."""


class CheckpointMagicError(CheckpointError):
    """File does not start with the checkpoint magic bytes."""


class CheckpointCRCError(CheckpointError):
    """Checksum mismatch; the file is corrupt."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint format version is not supported."""


class ArchitectureMismatchError(CheckpointError):
    """Checkpoint parameters do not match the target network's registry."""
