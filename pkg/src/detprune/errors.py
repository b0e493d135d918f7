"""Error hierarchy shared by every module.

Each error carries a stable machine-readable ``code`` (the class name) so the
CLI can emit ``ERROR <code>: <detail>`` lines and tests can assert on codes
instead of message text.  ``InputError`` covers malformed or inconsistent data
handed to the tool (exit status 2); ``ConfigError`` covers bad invocations and
settings (exit status 3).
"""

from __future__ import annotations


class DetpruneError(Exception):
    """Base class for all tool-raised errors."""

    exit_status = 2

    @property
    def code(self) -> str:
        return type(self).__name__


class InputError(DetpruneError):
    """Problem with the data supplied to the tool."""

    exit_status = 2


class ConfigError(DetpruneError):
    """Problem with how the tool was configured or invoked."""

    exit_status = 3


# --- annotation documents -------------------------------------------------

class MalformedDocument(InputError):
    """Annotation document is not valid JSON or misses required structure."""


class DanglingReference(InputError):
    """Annotation points at an image id or category id that does not exist."""


class NegativeExtent(InputError):
    """Annotation box has negative width or height."""


# --- prediction logs ------------------------------------------------------

class MalformedLine(InputError):
    """Log line is not valid JSON or violates the record schema."""


class DuplicateRecord(InputError):
    """Same (epoch, image_id) pair appears more than once in a log."""


class OutOfRange(InputError):
    """Confidence or probability value outside [0, 1]."""


class ProbLengthMismatch(InputError):
    """Probability vector length disagrees with the log or the category set."""


# --- manifests and CSV ----------------------------------------------------

class UnsupportedVersion(InputError):
    """Manifest format_version is not one this build understands."""


class UnsortedOrDuplicateIds(InputError):
    """Manifest kept_image_ids are not strictly ascending."""


class NonFiniteScore(InputError):
    """A score value is NaN or infinite."""


# --- series construction --------------------------------------------------

class MissingEpochRecord(InputError):
    """An image lacks a log record for an epoch inside the build window."""


class UnknownImageId(InputError):
    """An image id is not part of the dataset."""


class WindowExceedsLog(ConfigError):
    """Requested epoch window extends past the last logged epoch."""


# --- scoring --------------------------------------------------------------

class EmptySeries(InputError):
    """A per-epoch series with no entries was given to a score function."""


class MissingProbs(InputError):
    """A score needing probability vectors hit an epoch without one."""


class SingleCategory(InputError):
    """A margin-style score needs at least two categories."""


class MissingLoss(InputError):
    """The record supplying an image-level loss has no loss field."""


class UnknownMethod(ConfigError):
    """Score method name is not one of the supported set."""


class MalformedConfig(ConfigError):
    """Settings file is not valid JSON or has the wrong shape."""


class MissingInput(ConfigError):
    """An input path required by the chosen mode was not given."""


class UnknownProfile(ConfigError):
    """Named profile is not built in and not defined by the settings file."""


# --- ranking and selection ------------------------------------------------

class EmptyObjectList(InputError):
    """Aggregation over an image with no object scores."""


class UnknownAggregation(ConfigError):
    """Aggregation name is not mean, sum, or max."""


class AggregationMismatch(ConfigError):
    """Aggregation given for an image-level method, or missing for object-level."""


class RatioOutOfRange(ConfigError):
    """Prune ratio outside [0, 1)."""


# --- analysis -------------------------------------------------------------

class EmptyDistribution(InputError):
    """Class distribution requested over a subset with zero annotations."""


class SupportMismatch(InputError):
    """Two distributions do not share the same category support."""


class EmptySet(InputError):
    """Set overlap requested against an empty id set."""


class LengthMismatch(InputError):
    """Paired vectors differ in length or are too short to correlate."""


class ZeroVariance(InputError):
    """Correlation requested on a constant vector."""


class DegenerateSchedule(ConfigError):
    """Schedule milestones are not positive, increasing, and inside max_iter."""


# --- synthesis ------------------------------------------------------------

class InfeasibleProfile(ConfigError):
    """Requested series mean/std pair cannot be realized by values in [0, 1]."""
