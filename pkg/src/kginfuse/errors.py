"""Exception hierarchy shared across the toolkit.

ValidationError and its subclasses map to CLI exit code 1 (bad input or
config); every other KginfuseError maps to exit code 2 (runtime/numeric).
"""


class KginfuseError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(KginfuseError):
    """Invalid input, configuration, or precondition violation."""


class ConfigError(ValidationError):
    """Malformed or inconsistent pipeline configuration."""


class GraphFormatError(ValidationError):
    """Unparseable triple file; carries the offending line number."""

    def __init__(self, path, line_number, message):
        self.path = path
        self.line_number = line_number
        super().__init__(f"{path}:{line_number}: {message}")


class TaxonomyCycleError(ValidationError):
    """Taxonomy edges form a cycle; names the concepts involved."""

    def __init__(self, members):
        self.members = tuple(sorted(members))
        super().__init__(
            "taxonomy cycle through {%s}" % ", ".join(self.members)
        )


class UnknownConceptError(ValidationError):
    """A concept id was requested that the graph does not contain."""

    def __init__(self, concept_ids):
        if isinstance(concept_ids, str):
            concept_ids = [concept_ids]
        self.concept_ids = tuple(sorted(concept_ids))
        super().__init__("unknown concept(s): %s" % ", ".join(self.concept_ids))


class InfusionError(KginfuseError):
    """Knowledge infusion cannot proceed (zero knowledge embedding,
    non-finite intermediate, or width mismatch)."""


class SolverError(KginfuseError):
    """The mapping solver hit a singular system; raising the ridge
    regularizer usually fixes it."""


class StorageError(KginfuseError):
    """Corrupt or incompatible binary artifact file."""
