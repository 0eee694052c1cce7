"""Exception hierarchy.

Two branches matter for the CLI exit-code contract: ``ValidationError``
subclasses map to exit code 2 (bad inputs, domain violations), and
``RunnerError`` subclasses map to exit code 3 (external runner trouble).
"""

from __future__ import annotations


class GcvEvalError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(GcvEvalError):
    """Bad input data, configuration, or a domain precondition violation."""


class RunnerError(GcvEvalError):
    """An external train/eval runner misbehaved."""


# --- annotation parsing / harmonization ---------------------------------

class MalformedLine(ValidationError):
    def __init__(self, file: str, line_number: int | None, reason: str):
        self.file = file
        self.line_number = line_number
        self.reason = reason
        where = f"{file}:{line_number}" if line_number is not None else file
        super().__init__(f"{where}: {reason}")


class UnknownImageDimension(ValidationError):
    def __init__(self, image_id: str, source: str):
        self.image_id = image_id
        self.source = source
        super().__init__(
            f"no width/height entry for image {image_id!r} while converting "
            f"normalized coordinates from {source}"
        )


class EmptyIntersection(ValidationError):
    """The datasets share no labels; they cannot be compared."""


class InsufficientSamples(ValidationError):
    def __init__(self, dataset_id: str, needed: int, available: int):
        self.dataset_id = dataset_id
        self.needed = needed
        self.available = available
        super().__init__(
            f"dataset {dataset_id!r} has {available} retained images, "
            f"but the split needs {needed}"
        )


# --- matrices -------------------------------------------------------------

class MissingCell(ValidationError):
    def __init__(self, train_id: str, test_id: str):
        self.train_id = train_id
        self.test_id = test_id
        super().__init__(f"no result for cell (train={train_id!r}, test={test_id!r})")


class DuplicateCell(ValidationError):
    def __init__(self, train_id: str, test_id: str):
        self.train_id = train_id
        self.test_id = test_id
        super().__init__(f"duplicate result for cell (train={train_id!r}, test={test_id!r})")


class MixedMetrics(ValidationError):
    def __init__(self, names: set[str]):
        self.names = names
        super().__init__(f"cells mix metric names: {sorted(names)}")


class ZeroDiagonal(ValidationError):
    def __init__(self, dataset_id: str):
        self.dataset_id = dataset_id
        super().__init__(
            f"model trained on {dataset_id!r} scored 0 on its own test set; "
            f"diagonal normalization is undefined"
        )


class SchemaError(ValidationError):
    """A serialized document (matrix, split manifest, report) is malformed."""


# --- quality metrics -------------------------------------------------------

class DegenerateWeights(ValidationError):
    """Every reverse transfer ratio is zero; simulation weights are undefined."""


class TooFewReferences(ValidationError):
    def __init__(self, n: int):
        self.n = n
        super().__init__(
            f"transfer weights need at least 2 reference datasets, got {n}"
        )


class UndefinedDominance(ValidationError):
    def __init__(self, id_i: str, id_j: str):
        self.id_i = id_i
        self.id_j = id_j
        super().__init__(
            f"both transfer ratios between {id_i!r} and {id_j!r} are zero; "
            f"dominance is undefined"
        )


# --- orchestration ---------------------------------------------------------

class ConfigError(ValidationError):
    def __init__(self, field_path: str, message: str):
        self.field_path = field_path
        super().__init__(f"{field_path}: {message}")


class MissingSplit(ValidationError):
    def __init__(self, dataset_id: str, path: str):
        self.dataset_id = dataset_id
        self.path = path
        super().__init__(
            f"split manifest for dataset {dataset_id!r} not found at {path} "
            f"(run `gcveval prep` first)"
        )


class RunnerFailure(RunnerError):
    def __init__(self, cell: tuple[str, str], exit_code: int, stderr_tail: str,
                 detail: str = ""):
        self.cell = cell
        self.exit_code = exit_code
        self.stderr_tail = stderr_tail
        msg = f"runner failed for cell (train={cell[0]!r}, test={cell[1]!r}) with exit code {exit_code}"
        if detail:
            msg += f"; {detail}"
        if stderr_tail:
            msg += f"\nstderr tail:\n{stderr_tail}"
        super().__init__(msg)


class RunnerTimeout(RunnerError):
    def __init__(self, cell: tuple[str, str], timeout_seconds: float):
        self.cell = cell
        self.timeout_seconds = timeout_seconds
        super().__init__(
            f"runner for cell (train={cell[0]!r}, test={cell[1]!r}) exceeded "
            f"{timeout_seconds}s"
        )


class ProtocolError(RunnerError):
    def __init__(self, cell: tuple[str, str], reason: str):
        self.cell = cell
        self.reason = reason
        super().__init__(
            f"runner output for cell (train={cell[0]!r}, test={cell[1]!r}) "
            f"violates the result contract: {reason}"
        )
