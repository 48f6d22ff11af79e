class SelectNetLabError(Exception):
    pass


class ConfigError(SelectNetLabError, ValueError):
    """Inconsistent configuration, detected before any training starts."""


class InputError(SelectNetLabError, ValueError):
    pass


class UsageError(SelectNetLabError, RuntimeError):
    pass


class ParseError(InputError):
    def __init__(self, message, line=None, offset=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line = line
        self.offset = offset
