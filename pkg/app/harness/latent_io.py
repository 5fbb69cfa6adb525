"""潜变量二进制文件读写。

布局（全部小端）：
    4 字节魔数 "DLT1" | 1 字节版本 = 1 | 1 字节 dtype = 1 (float64) | 1 字节 ndim
    | ndim × uint32 维度 | 行优先 float64 数据
"""
import logging
import struct
from pathlib import Path

import numpy as np

from app.core.errors import (
    BadMagicError,
    LatentFileError,
    TruncatedPayloadError,
    UnsupportedDtypeError,
    UnsupportedVersionError,
)

logger = logging.getLogger(__name__)

MAGIC = b"DLT1"
VERSION = 1
DTYPE_FLOAT64 = 1
_HEADER = struct.Struct("<4sBBB")
_PAYLOAD_DTYPE = np.dtype("<f8")


def encode_latent(latent: np.ndarray) -> bytes:
    array = np.ascontiguousarray(latent, dtype=_PAYLOAD_DTYPE)
    if array.ndim < 1 or array.ndim > 255:
        raise LatentFileError(f"维数 {array.ndim} 超出文件格式支持范围 [1, 255]")
    if 0 in array.shape:
        raise LatentFileError(f"不支持空潜变量: {array.shape}")
    if any(dim > 0xFFFFFFFF for dim in array.shape):
        raise LatentFileError(f"维度超出 uint32 范围: {array.shape}")
    header = _HEADER.pack(MAGIC, VERSION, DTYPE_FLOAT64, array.ndim)
    dims = struct.pack(f"<{array.ndim}I", *array.shape)
    return header + dims + array.tobytes(order="C")


def decode_latent(data: bytes) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise TruncatedPayloadError(_HEADER.size, len(data))
    magic, version, dtype, ndim = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise BadMagicError(f"魔数错误: {magic!r}，期望 {MAGIC!r}")
    if version != VERSION:
        raise UnsupportedVersionError(f"不支持的版本: {version}")
    if dtype != DTYPE_FLOAT64:
        raise UnsupportedDtypeError(f"不支持的数据类型编码: {dtype}")

    if ndim < 1:
        raise LatentFileError(f"维数 {ndim} 超出文件格式支持范围 [1, 255]")

    offset = _HEADER.size
    dims_size = 4 * ndim
    if len(data) < offset + dims_size:
        raise TruncatedPayloadError(offset + dims_size, len(data))
    shape = struct.unpack_from(f"<{ndim}I", data, offset)
    offset += dims_size
    if 0 in shape:
        raise LatentFileError(f"不支持空潜变量: {shape}")

    expected = _PAYLOAD_DTYPE.itemsize * int(np.prod(shape, dtype=np.int64))
    actual = len(data) - offset
    if actual < expected:
        raise TruncatedPayloadError(expected, actual)
    if actual > expected:
        raise LatentFileError(f"数据区多出 {actual - expected} 字节")
    return np.frombuffer(data, dtype=_PAYLOAD_DTYPE, offset=offset).reshape(shape).astype(np.float64)


def write_latent(path: str | Path, latent: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_latent(latent))
    logger.debug("写入潜变量: %s, shape=%s", path, np.shape(latent))
    return path


def read_latent(path: str | Path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"潜变量文件不存在: {path}")
    return decode_latent(path.read_bytes())
