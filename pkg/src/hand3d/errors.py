"""Exception taxonomy shared across the toolkit.

Every failure raised by this package derives from Hand3DError so callers can
catch one base class.  I/O failures are deliberately left to the builtin
OSError family; the CLI maps Hand3DError to exit code 1 and OSError to 2.
"""

from __future__ import annotations


class Hand3DError(Exception):
    """Base class for all validation and domain errors in this package."""


# --- geometry ---------------------------------------------------------------

class NonPositiveDepth(Hand3DError):
    """A point sits at or behind the camera plane (z <= depth epsilon)."""


class NotARotation(Hand3DError):
    """A 3x3 matrix failed the orthonormality / determinant check."""


# --- trajectories and sequences --------------------------------------------

class EmptyInput(Hand3DError):
    """An operation that needs at least one element received none."""


class NonMonotonicTime(Hand3DError):
    """Timestamps are not strictly increasing."""


# --- scale calibration ------------------------------------------------------

class EmptyOmega(Hand3DError):
    """No usable joint/depth pairs survived filtering; scale is undefined."""


class NoValidPoints(Hand3DError):
    """A raster region contains no valid (finite) points."""


# --- motion tokens ----------------------------------------------------------

class TokenOutOfRange(Hand3DError):
    """A token id falls outside its axis sub-vocabulary."""


class MalformedSequence(Hand3DError):
    """A token sequence has a bad length or violates the slot layout."""


# --- model math -------------------------------------------------------------

class ShapeMismatch(Hand3DError):
    """Operand shapes are incompatible."""


class TauOutOfRange(Hand3DError):
    """Interpolation time is outside [0, 1]."""


# --- evaluation -------------------------------------------------------------

class ParseIncomplete(Hand3DError):
    """Free-text answer lacks a parsable distance."""


class IdMismatch(Hand3DError):
    """Prediction and ground-truth files do not cover the same record ids."""


# --- dataset I/O ------------------------------------------------------------

class ParseError(Hand3DError):
    """A file is not syntactically valid (bad JSON, bad structure)."""


class SchemaError(Hand3DError):
    """A parsed document violates the manifest/record schema."""


class MissingRaster(Hand3DError):
    """A manifest references a raster file that does not exist."""


class BadMagic(Hand3DError):
    """A raster file does not start with the expected magic bytes."""


class TruncatedFile(Hand3DError):
    """A raster file ends before the payload promised by its header."""


class DimensionMismatch(Hand3DError):
    """Raster header dimensions disagree with the payload size."""
