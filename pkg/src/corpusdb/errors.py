"""Exception hierarchy shared by all corpusdb modules."""


class CorpusError(Exception):
    """Base class for data-related failures (CLI exit status 2)."""


class SchemaError(CorpusError):
    """A schema definition or a file header does not fit the schema."""


class ResolutionError(SchemaError):
    """A selector, expression, or query names something outside the schema."""


class CycleError(SchemaError):
    """A dependency graph contains a cycle."""

    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("cycle detected: " + " -> ".join(self.cycle))


class DomainError(CorpusError, ValueError):
    """An argument lies outside the operation's domain."""


class EmptyContainerSetError(CorpusError):
    """A container directory holds no containers."""


class ContainerParseError(CorpusError):
    """A container's gzip or JSON framing is corrupt."""

    def __init__(self, path, offset, reason):
        self.path = str(path)
        self.offset = offset
        super().__init__(f"{self.path}: byte offset {offset}: {reason}")


class PreconditionError(CorpusError):
    """The database lacks tables an operation depends on."""


class PopulationError(CorpusError):
    """Population aborted; ``report`` describes what was committed."""

    def __init__(self, message, report):
        self.report = report
        super().__init__(message)


class ScriptError(CorpusError):
    """A statement in a script set failed."""

    def __init__(self, path, statement_index, statement, reason, log):
        self.path = str(path)
        self.statement_index = statement_index
        self.statement = statement
        self.log = log
        super().__init__(
            f"{self.path}: statement {statement_index}: {reason}"
        )


class UsageError(Exception):
    """The caller asked for an unsupported mode of operation (CLI exit status 1)."""
