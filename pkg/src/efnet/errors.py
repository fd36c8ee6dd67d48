"""Exception types raised by efnet."""


class EfnetError(Exception):
    pass


class ShapeError(EfnetError, ValueError):
    """Operand shapes are incompatible."""


class ParameterError(EfnetError, ValueError):
    """An argument is outside its documented range."""


class FormatError(EfnetError, ValueError):
    """A data or checkpoint file is malformed.

    ``offset`` is the byte offset of the problem when it is known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class VersionError(FormatError):
    pass


class DivergenceError(EfnetError, ArithmeticError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, batch, loss):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
