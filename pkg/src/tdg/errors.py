"""Exception types shared across the library.

The CLI maps these onto exit codes: anything that means "the inputs or
flags are wrong" exits 1, anything that means "the data is inconsistent"
exits 2.
"""


class ParameterError(ValueError):
    """A scalar argument is outside its legal domain."""


class ShapeMismatchError(ValueError):
    """Array operands have incompatible shapes."""


class EmptyConditionError(ValueError):
    """A condition mask leaves no mixture component with positive weight."""


class IntegrityError(RuntimeError):
    """Serialized data violates a structural invariant (duplicates, counts, hashes)."""


class CoverageError(LookupError):
    """A prediction set does not cover every queried sample/attribute."""


class ScorerError(ValueError):
    """A scorer returned a non-finite value."""


class AnnotationValidationError(ValueError):
    """An annotation answer is outside the legal set for its question."""
