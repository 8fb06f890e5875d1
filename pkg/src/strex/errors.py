"""Exception hierarchy shared across the package."""


class StrexError(Exception):
    """Base class for all package-specific errors."""


# --- schema dialect ---------------------------------------------------------

class SchemaDialectError(StrexError):
    """A document is not a valid schema in the restricted dialect."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path or '/'}: {message}")


class MalformedDocument(SchemaDialectError):
    """Input text is not well-formed JSON, or a node is not an object."""


class ForbiddenKey(SchemaDialectError):
    def __init__(self, path: str, key: str):
        self.key = key
        super().__init__(path, f"forbidden key {key!r}")


class UnknownKey(SchemaDialectError):
    def __init__(self, path: str, key: str):
        self.key = key
        super().__init__(path, f"unknown key {key!r}")


class InvalidPattern(SchemaDialectError):
    def __init__(self, path: str, detail: str):
        super().__init__(path, f"invalid pattern: {detail}")


class InvalidBounds(SchemaDialectError):
    def __init__(self, path: str, detail: str = "minLength/maxLength out of order or negative"):
        super().__init__(path, detail)


class InvalidAttribute(SchemaDialectError):
    """Semantic violation of an attribute invariant (bad type, enum dupes, ...)."""


# --- candidates and validation ----------------------------------------------

class ShapeViolation(StrexError):
    """A candidate tree contains a path absent from the schema."""

    def __init__(self, path: str, detail: str = "path not in schema"):
        self.path = path
        super().__init__(f"{path or '/'}: {detail}")


class NothingToReflect(StrexError):
    """build_reflection called on a passing report."""


# --- extraction loop ----------------------------------------------------------

class MissingTags(StrexError):
    """Model response carries no <attribute_values> block."""


class MalformedPayload(StrexError):
    """The <attribute_values> block is not valid JSON."""


# --- backends -----------------------------------------------------------------

class BackendUnavailable(StrexError):
    """Transport failure after configured retries."""


class CassetteMiss(StrexError):
    def __init__(self, fingerprint: str):
        self.fingerprint = fingerprint
        super().__init__(f"no recorded response left for fingerprint {fingerprint}")


class NoRuleMatched(StrexError):
    """Scripted policy has no matching rule and no default."""


class SinkWriteFailure(StrexError):
    pass


# --- refinement loop ------------------------------------------------------------

class GenerationFailed(StrexError):
    """Initial schema generation did not yield a dialect-valid schema."""


class RefinementFailed(StrexError):
    """Schema refinement did not yield a dialect-valid schema after repairs."""


class InsufficientGeneration(StrexError):
    def __init__(self, got: int, wanted: int):
        self.got = got
        self.wanted = wanted
        super().__init__(f"collected {got} synthetic cases, wanted {wanted}")


class OptimizationFailed(StrexError):
    """Wraps a failure inside the optimization loop; carries state so far."""

    def __init__(self, message: str, state=None):
        self.state = state
        super().__init__(message)


# --- transform programs -----------------------------------------------------------

class ProposalInvalid(StrexError):
    """Backend-proposed transform program is unparseable or references unknown paths."""


class InsufficientPairs(StrexError):
    def __init__(self, got: int, wanted: int):
        self.got = got
        self.wanted = wanted
        super().__init__(f"collected {got} valid sample pairs, wanted {wanted}")


class StepFailure(StrexError):
    def __init__(self, index: int, reason: str):
        self.index = index
        self.reason = reason
        super().__init__(f"step {index}: {reason}")


class VerificationFailed(StrexError):
    def __init__(self, failing_pairs):
        self.failing_pairs = failing_pairs
        super().__init__(f"{len(failing_pairs)} sample pair(s) still failing")


# --- harness -------------------------------------------------------------------

class LineParseError(StrexError):
    def __init__(self, line_no: int, detail: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {detail}")


class DatasetShapeError(StrexError):
    def __init__(self, line_no: int, path: str):
        self.line_no = line_no
        self.path = path
        super().__init__(f"line {line_no}: expected tree has path {path} outside the schema")
