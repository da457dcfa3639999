"""Exceptions shared by more than one module."""


class DimensionMismatchError(ValueError):
    def __init__(self, expected: int, got: int):
        self.expected = expected
        self.got = got
        super().__init__(f"expected dimension {expected}, got {got}")
