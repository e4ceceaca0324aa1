class TrackerError(Exception):
    """Base class for every error raised by the tracker."""

    code = "TrackerError"
    default_message = "Tracking failed."

    def __init__(self, message=None, data=None):
        super().__init__(message or self.default_message)
        self.data = data  # offending record / shapes, when there is one


class EmptyMask(TrackerError):
    code = "EmptyMask"
    default_message = "Mask has no foreground pixels."


class ShapeMismatch(TrackerError):
    code = "ShapeMismatch"
    default_message = "Operand shapes do not match."


class NonFiniteSimilarity(TrackerError):
    code = "NonFiniteSimilarity"
    default_message = "Similarity matrix contains NaN or +inf."


class NonFiniteInput(TrackerError):
    code = "NonFiniteInput"
    default_message = "Input tensor contains non-finite values."


class NoOverlap(TrackerError):
    code = "NoOverlap"
    default_message = "Clips share no frames."


class NoObservation(TrackerError):
    code = "NoObservation"
    default_message = "Neither a stored nor a current observation is available."


class DegenerateEmbedding(TrackerError):
    code = "DegenerateEmbedding"
    default_message = "Appearance vector has zero norm."


class DuplicateMatch(TrackerError):
    code = "DuplicateMatch"
    default_message = "Track matched more than once in a single update."


class ClipSequenceError(TrackerError):
    code = "ClipSequenceError"
    default_message = "Clips are not a contiguous sequence for this configuration."


class SpecError(TrackerError):
    code = "SpecError"
    default_message = "Invalid scenario spec."


class RangeMismatch(TrackerError):
    code = "RangeMismatch"
    default_message = "Tracks cover frames outside the ground-truth range."


class InvalidRLE(TrackerError):
    code = "InvalidRLE"
    default_message = "Run lengths do not describe the mask dimensions."


class ParseError(TrackerError):
    code = "ParseError"
    default_message = "Could not parse input file."

    def __init__(self, message=None, data=None, line=None):
        super().__init__(message, data)
        self.line = line


class ConfigError(TrackerError):
    """Bad configuration; the CLI treats this as a usage error."""

    code = "ConfigError"
    default_message = "Invalid configuration."
