"""Exception types shared across the package."""


class SlateLabError(Exception):
    """Base class for all errors raised by slatelab."""


class ConfigError(SlateLabError, ValueError):
    """Invalid configuration value or structure."""


class InputError(SlateLabError, ValueError):
    """Invalid argument passed to a numerical operation."""


class ContractError(SlateLabError, RuntimeError):
    """A callback or collaborator violated its declared contract."""


class DegenerateLabelsError(SlateLabError, ValueError):
    """A label set lacks positives or negatives where both are required."""

    def __init__(self, message: str, objective: str | None = None):
        super().__init__(message)
        self.objective = objective


class MissingHeadError(SlateLabError, KeyError):
    """A model was asked for an objective it was not trained on."""

    def __init__(self, objective: str):
        super().__init__(objective)
        self.objective = objective

    def __str__(self) -> str:
        return f"model has no head for objective {self.objective!r}"


class CapExceededError(SlateLabError, RuntimeError):
    """Brute-force enumeration would exceed the configured permutation cap."""


class DependencyError(SlateLabError, FileNotFoundError):
    """A pipeline stage is missing an upstream artifact."""

    def __init__(self, step: str, path: str):
        super().__init__(f"missing artifact {path}; run the '{step}' step first")
        self.step = step
        self.path = path
