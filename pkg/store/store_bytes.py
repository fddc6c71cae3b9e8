import struct

from exc.exceptions import FormatError


class ByteReader:
    """Sequential reader over an encoded container; raises FormatError on truncation."""

    def __init__(self, data: bytes, what: str = "data") -> None:
        self._data = memoryview(data)
        self._pos = 0
        self._what = what

    def take(self, n: int) -> bytes:
        if self._pos + n > len(self._data):
            raise FormatError(f"truncated {self._what}: wanted {n} bytes at offset {self._pos}")
        chunk = bytes(self._data[self._pos : self._pos + n])
        self._pos += n
        return chunk

    def unpack(self, fmt: str | struct.Struct) -> tuple:
        layout = fmt if isinstance(fmt, struct.Struct) else struct.Struct(fmt)
        return layout.unpack(self.take(layout.size))

    def text(self, n: int, encoding: str = "utf-8") -> str:
        raw = self.take(n)
        try:
            return raw.decode(encoding)
        except UnicodeDecodeError as exc:
            raise FormatError(f"{self._what} holds a name that is not valid {encoding}: {raw!r}") from exc

    @property
    def exhausted(self) -> bool:
        return self._pos == len(self._data)
