"""Exception hierarchy shared by all lesionroi modules."""


class LesionRoiError(Exception):
    """Base class for every error raised by this package."""

    code = "error"


class InvalidBox(LesionRoiError, ValueError):
    code = "invalid_box"


class NoForeground(LesionRoiError, ValueError):
    """A mask has no foreground pixel, so no box can circumscribe it."""

    code = "no_foreground"


class NoDetections(LesionRoiError, ValueError):
    code = "no_detections"


class DatasetError(LesionRoiError):
    code = "dataset_error"


class ManifestNotFound(DatasetError, FileNotFoundError):
    code = "manifest_not_found"


class DuplicateId(DatasetError, ValueError):
    code = "duplicate_id"

    def __init__(self, image_id: str, where: str = ""):
        self.image_id = image_id
        msg = f"duplicate image_id {image_id!r}"
        super().__init__(f"{msg} in {where}" if where else msg)


class DanglingPath(DatasetError, FileNotFoundError):
    code = "dangling_path"


class ParseError(DatasetError, ValueError):
    """A line of an input file could not be parsed."""

    code = "parse_error"

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ValidationError(DatasetError, ValueError):
    code = "validation_error"

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)
