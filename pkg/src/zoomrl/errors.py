"""Exception types shared across the package.

Exit-code policy for the CLI: data problems map to 1, usage problems to 2
(argparse default), transport problems to 3.
"""


class ZoomRLError(Exception):
    """Base class for all package errors."""


class ConfigError(ZoomRLError):
    """A stage config or override file is malformed. Message names the key."""


class DatasetError(ZoomRLError):
    """A dataset record failed validation."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ImageError(ZoomRLError):
    """An image file could not be read or decoded."""


class TransportError(ZoomRLError):
    """A wire call (backend, judge, or SR service) failed after retries."""


class RewardJudgeError(ZoomRLError):
    """The answer judge failed while scoring a specific sample.

    Carries the sample id so the caller can decide between retry and a
    logged zero-fill.
    """

    def __init__(self, sample_id: str, cause: Exception):
        super().__init__(f"answer judge failed for sample {sample_id!r}: {cause}")
        self.sample_id = sample_id
        self.cause = cause


class RolloutError(ZoomRLError):
    """A rollout stage failed for a specific sample."""

    def __init__(self, sample_id: str, message: str):
        super().__init__(f"sample {sample_id!r}: {message}")
        self.sample_id = sample_id


class StratificationError(ZoomRLError):
    """The difficulty judge returned an unusable verdict for one sample."""

    def __init__(self, sample_id: str, message: str):
        super().__init__(f"sample {sample_id!r}: {message}")
        self.sample_id = sample_id
