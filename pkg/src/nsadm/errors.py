"""Package exception types, shared so the CLI can map them to exit codes."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class GenerationError(RuntimeError):
    """Scene or dataset generation could not satisfy its constraints."""


class ValidationFailure(RuntimeError):
    """A statistical self-check ran to completion and failed."""


class UndefinedMetric(ValueError):
    """A metric was requested on inputs where it is undefined."""


class SamplerDivergence(RuntimeError):
    """The reverse sampler produced non-finite values."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite sampler state at step {step}")


class TrainingDiverged(RuntimeError):
    """Training loss became non-finite."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite training loss at step {step}")
