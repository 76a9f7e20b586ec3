"""Exception hierarchy shared by every module.

Each error carries a machine ``code`` drawn from a closed set so the HTTP
layer and the CLI can map failures without string matching.
"""


class SpeclintError(Exception):
    """Base class. ``code`` is a stable machine string."""

    code = "error"

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.message = message
        self.details = details


# corpus
class MalformedHeadings(SpeclintError):
    code = "malformed_headings"


class EmptyAfterCleaning(SpeclintError):
    code = "empty_after_cleaning"


# vectorspace
class EmptyCorpus(SpeclintError):
    code = "empty_corpus"


# pairing
class UnknownCorpus(SpeclintError):
    code = "unknown_corpus"


class BadThresholds(SpeclintError):
    code = "bad_thresholds"


# taxonomy / annotation workflow
class UnknownPair(SpeclintError):
    code = "unknown_pair"


class WrongPhase(SpeclintError):
    code = "wrong_phase"


class PairNotSampled(SpeclintError):
    code = "pair_not_sampled"


# classifier
class EmptyClass(SpeclintError):
    code = "empty_class"


class NonFiniteLoss(SpeclintError):
    code = "non_finite_loss"


class BackendUnavailable(SpeclintError):
    code = "backend_unavailable"


class MalformedBackendResponse(SpeclintError):
    code = "malformed_backend_response"


# ensemble
class MixedPairIds(SpeclintError):
    code = "mixed_pair_ids"


class EmptyPredictionSet(SpeclintError):
    code = "empty_prediction_set"


# augment
class EmptyText(SpeclintError):
    code = "empty_text"


# learner
class InsufficientCandidates(SpeclintError):
    code = "insufficient_candidates"


class AnnotationIncomplete(SpeclintError):
    code = "annotation_incomplete"


class MissingGold(SpeclintError):
    code = "missing_gold"


# interface
class PortInUse(SpeclintError):
    code = "port_in_use"


# store
class PathNotEmpty(SpeclintError):
    code = "path_not_empty"


class CorruptLayout(SpeclintError):
    code = "corrupt_layout"


class DanglingReference(SpeclintError):
    code = "dangling_reference"


class VersionMismatch(SpeclintError):
    code = "version_mismatch"


class LockHeldElsewhere(SpeclintError):
    code = "lock_held_elsewhere"


class IoFailure(SpeclintError):
    code = "io_failure"
