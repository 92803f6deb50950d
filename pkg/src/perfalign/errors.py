"""Exception hierarchy shared by every module.

Each class carries the process exit code the CLI maps it to.
"""


class PerfAlignError(Exception):
    exit_code = 4

    def to_dict(self):
        out = {"error": type(self).__name__, "message": str(self), "exit_code": self.exit_code}
        for key in ("line", "location", "offset", "step_index", "step", "checkpoint"):
            if getattr(self, key, None) is not None:
                out[key] = getattr(self, key)
        return out


class ParseError(PerfAlignError):
    """Input bytes/text could not be read as the declared format."""

    exit_code = 2


class ScoreParseError(ParseError):
    def __init__(self, message, line=None, location=None):
        self.line = line
        self.location = location
        where = []
        if line is not None:
            where.append(f"line {line}")
        if location:
            where.append(location)
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class SMFParseError(ParseError):
    def __init__(self, message, offset=None):
        self.offset = offset
        super().__init__(f"{message} at byte {offset}" if offset is not None else message)


class ValidationError(PerfAlignError):
    """Input was readable but violates a documented contract."""

    exit_code = 3


class NoteRecordError(ValidationError):
    def __init__(self, message, line):
        self.line = line
        super().__init__(f"line {line}: {message}")


class RepeatStructureError(ValidationError):
    pass


class UnsupportedStructureError(RepeatStructureError):
    pass


class PositionOverflowError(ValidationError):
    pass


class EncodeError(ValidationError):
    pass


class DecodeError(ValidationError):
    def __init__(self, message, step_index):
        self.step_index = step_index
        super().__init__(f"step {step_index}: {message}")


class AlignmentSizeError(ValidationError):
    pass


class MetricInputError(ValidationError):
    pass


class AugmentError(ValidationError):
    pass


class ModelInputError(ValidationError):
    pass


class TrainingDiverged(PerfAlignError):
    def __init__(self, step, checkpoint=None):
        self.step = step
        self.checkpoint = checkpoint
        super().__init__(f"loss became non-finite at step {step}")
