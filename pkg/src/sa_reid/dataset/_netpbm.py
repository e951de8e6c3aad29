"""Minimal reader/writer for the binary netpbm formats used on disk (P5 gray maps, P6 color images)."""
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from sa_reid.exceptions import ParseError

NETPBM_CHANNELS = {b"P5": 1, b"P6": 3}
WHITESPACE = b" \t\n\r\v\f"


def _header_tokens(content: bytes, file_path: Path) -> Tuple[list, int]:
    """Return the four header tokens and the offset of the first payload byte."""
    tokens, position = [], 0
    while len(tokens) < 4:
        if position >= len(content):
            raise ParseError(f"The netpbm header of '{file_path}' is truncated.")
        byte = content[position : position + 1]
        if byte in WHITESPACE:
            position += 1
        elif byte == b"#":
            end = content.find(b"\n", position)
            position = len(content) if end == -1 else end + 1
        else:
            start = position
            while position < len(content) and content[position : position + 1] not in WHITESPACE + b"#":
                position += 1
            tokens.append(content[start:position])
    # exactly one whitespace byte separates the header from the payload
    if position >= len(content) or content[position : position + 1] not in WHITESPACE:
        raise ParseError(f"The netpbm header of '{file_path}' is not terminated by whitespace.")
    return tokens, position + 1


def read_netpbm(file_path: Union[str, Path], magic: bytes) -> np.ndarray:
    """
    Parse a binary netpbm file with maximum value 255.

    Parameters
    ----------
    file_path : str or Path
    magic : {b"P5", b"P6"}
        The expected format.

    Returns
    -------
    np.ndarray
        uint8 pixels of shape (height, width) for P5 and (height, width, 3) for P6.
    """
    file_path = Path(file_path)
    content = file_path.read_bytes()
    tokens, offset = _header_tokens(content, file_path)
    if tokens[0] != magic:
        raise ParseError(f"Expected a '{magic.decode()}' file, '{file_path}' starts with {tokens[0][:8]!r}.")
    try:
        width, height, max_value = (int(token) for token in tokens[1:])
    except ValueError:
        raise ParseError(f"Malformed size or maximum value in the header of '{file_path}'.")
    if width < 1 or height < 1:
        raise ParseError(f"Invalid image size {width}x{height} in '{file_path}'.")
    if max_value != 255:
        raise ParseError(f"Unsupported maximum value {max_value} in '{file_path}', expected 255.")

    channels = NETPBM_CHANNELS[magic]
    payload = content[offset:]
    expected = width * height * channels
    if len(payload) != expected:
        raise ParseError(f"Expected {expected} pixel bytes in '{file_path}', found {len(payload)}.")
    pixels = np.frombuffer(payload, dtype=np.uint8)
    shape = (height, width) if channels == 1 else (height, width, channels)
    return pixels.reshape(shape)


def write_netpbm(pixels: np.ndarray, file_path: Union[str, Path]) -> Path:
    """Write (height, width) uint8 pixels as P5 or (height, width, 3) pixels as P6."""
    file_path = Path(file_path)
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    magic = "P5" if pixels.ndim == 2 else "P6"
    height, width = pixels.shape[:2]
    with open(file_path, "wb") as file:
        file.write(f"{magic}\n{width} {height}\n255\n".encode("ascii") + pixels.tobytes())
    return file_path
