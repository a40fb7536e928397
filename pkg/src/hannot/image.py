"""Image loading and edge-point feature extraction.

The pipeline that turns a raster image into the point set used for
similarity: load -> bound the size -> Sobel gradient magnitude ->
threshold (Otsu by default) -> edge pixels become points. Every stage is
integer arithmetic and fully deterministic, so identical bytes always
yield identical descriptors.

PGM (P2 ascii and P5 binary, maxval <= 255) is the native format; PNG is
accepted via Pillow with RGB reduced by integer luma.
"""

from __future__ import annotations

import hashlib
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateImageError, FormatError, ImageIOError, NoFeaturesError
from .geometry import PointSet

__all__ = [
    "GrayscaleImage",
    "ExtractionParams",
    "FeatureDescriptor",
    "decode_image",
    "load_image",
    "encode_pgm",
    "sniff_media_type",
    "resize_max",
    "otsu_threshold",
    "sobel_magnitude",
    "extract_edge_points",
    "describe",
    "describe_bytes",
]

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


class GrayscaleImage:
    """Row-major 8-bit grayscale raster; immutable after construction."""

    __slots__ = ("pixels",)

    def __init__(self, pixels: np.ndarray):
        arr = np.asarray(pixels)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("pixels must be a non-empty 2-D array")
        if arr.dtype != np.uint8:
            if not np.issubdtype(arr.dtype, np.integer):
                raise ValueError("pixels must be integers")
            if arr.min() < 0 or arr.max() > 255:
                raise ValueError("intensities must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        else:
            arr = arr.copy()
        arr.flags.writeable = False
        self.pixels = arr

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, GrayscaleImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)

    def __hash__(self):
        return hash(self.pixels.tobytes())

    def __repr__(self) -> str:
        return f"GrayscaleImage({self.width}x{self.height})"


@dataclass(frozen=True)
class ExtractionParams:
    """Knobs of the feature pipeline.

    ``gradient_threshold`` of None means Otsu's method on the gradient
    magnitude map; an integer in [0, 255] fixes the threshold instead.
    """

    max_dimension: int = 256
    gradient_threshold: int | None = None
    max_points: int = 4096

    def __post_init__(self):
        if self.max_dimension < 16:
            raise ValueError("max_dimension must be at least 16")
        if self.max_points < 1:
            raise ValueError("max_points must be at least 1")
        if self.gradient_threshold is not None and not 0 <= self.gradient_threshold <= 255:
            raise ValueError("fixed gradient_threshold must lie in [0, 255]")

    @property
    def fingerprint(self) -> str:
        """Stable hash identifying this configuration across runs and platforms."""
        thr = "otsu" if self.gradient_threshold is None else str(self.gradient_threshold)
        text = (
            f"hannot-extract/1|max_dimension={self.max_dimension}"
            f"|gradient_threshold={thr}|max_points={self.max_points}"
        )
        return hashlib.sha256(text.encode("ascii")).hexdigest()[:16]


@dataclass(frozen=True)
class FeatureDescriptor:
    """The per-image representation fed to similarity: edge points plus provenance."""

    points: PointSet
    source_width: int
    source_height: int
    params_fingerprint: str

    def __post_init__(self):
        if int(self.points.xs.max()) >= self.source_width or int(self.points.ys.max()) >= self.source_height:
            raise ValueError("points exceed the descriptor's source dimensions")


class _TokenReader:
    """Pulls whitespace-separated tokens from PNM data, skipping '#' comments."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def next_token(self) -> bytes:
        data, n = self.data, len(self.data)
        pos = self.pos
        while pos < n:
            c = data[pos]
            if c in b" \t\r\n":
                pos += 1
            elif c == ord("#"):
                while pos < n and data[pos] not in b"\r\n":
                    pos += 1
            else:
                break
        if pos >= n:
            raise FormatError("truncated PNM header or data")
        start = pos
        while pos < n and data[pos] not in b" \t\r\n":
            pos += 1
        self.pos = pos
        return data[start:pos]

    def next_int(self, what: str) -> int:
        token = self.next_token()
        try:
            return int(token)
        except ValueError:
            raise FormatError(f"expected integer for {what}, got {token!r}") from None


def _decode_pgm(data: bytes) -> GrayscaleImage:
    reader = _TokenReader(data)
    magic = reader.next_token()
    width = reader.next_int("width")
    height = reader.next_int("height")
    maxval = reader.next_int("maxval")
    if width < 1 or height < 1:
        raise FormatError(f"invalid PGM dimensions {width}x{height}")
    if not 1 <= maxval <= 255:
        raise FormatError(f"unsupported PGM maxval {maxval} (must be 1..255)")

    count = width * height
    if magic == b"P5":
        # exactly one whitespace byte separates the maxval from the raster
        if reader.pos >= len(data) or data[reader.pos] not in b" \t\r\n":
            raise FormatError("missing whitespace before P5 raster")
        start = reader.pos + 1
        raster = data[start : start + count]
        if len(raster) < count:
            raise FormatError("truncated P5 raster")
        pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    else:
        values = [reader.next_int("pixel") for _ in range(count)]
        pixels = np.asarray(values, dtype=np.int64).reshape(height, width)
        if pixels.min() < 0:
            raise FormatError("negative pixel value in P2 raster")
    if pixels.max() > maxval:
        raise FormatError(f"pixel value exceeds maxval {maxval}")
    return GrayscaleImage(pixels)


def _decode_png(data: bytes) -> GrayscaleImage:
    from PIL import Image, UnidentifiedImageError

    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except UnidentifiedImageError as exc:
        raise FormatError(f"malformed PNG: {exc}") from exc
    if img.mode == "P":
        img = img.convert("RGB")
    if img.mode == "L":
        return GrayscaleImage(np.asarray(img, dtype=np.uint8))
    if img.mode in ("RGB", "RGBA"):
        rgb = np.asarray(img, dtype=np.int64)[:, :, :3]
        luma = (299 * rgb[:, :, 0] + 587 * rgb[:, :, 1] + 114 * rgb[:, :, 2]) // 1000
        return GrayscaleImage(luma)
    raise FormatError(f"unsupported PNG mode {img.mode!r} (expect grayscale or RGB)")


def decode_image(data: bytes) -> GrayscaleImage:
    """Decode raster bytes, dispatching on the magic number."""
    if data[:2] in (b"P2", b"P5"):
        return _decode_pgm(data)
    if data[:8] == _PNG_SIGNATURE:
        return _decode_png(data)
    raise FormatError("unsupported image format (expect PGM P2/P5 or PNG)")


def sniff_media_type(data: bytes) -> str:
    if data[:2] in (b"P2", b"P5"):
        return "image/x-portable-graymap"
    if data[:8] == _PNG_SIGNATURE:
        return "image/png"
    return "application/octet-stream"


def load_image(path) -> GrayscaleImage:
    """Read and decode an image file."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ImageIOError(f"cannot read {path}: {exc}") from exc
    return decode_image(data)


def encode_pgm(image: GrayscaleImage, binary: bool = True) -> bytes:
    """Serialize to P5 (binary) or P2 (ascii) with maxval 255."""
    header = f"{'P5' if binary else 'P2'}\n{image.width} {image.height}\n255\n"
    if binary:
        return header.encode("ascii") + image.pixels.tobytes()
    rows = "\n".join(" ".join(str(v) for v in row) for row in image.pixels.tolist())
    return (header + rows + "\n").encode("ascii")


def resize_max(image: GrayscaleImage, max_dimension: int) -> GrayscaleImage:
    """Shrink so the longest side is at most ``max_dimension``.

    Center-aligned nearest-neighbour sampling; aspect ratio preserved to
    within one pixel. Images already within bounds come back unchanged.
    """
    if max_dimension < 16:
        raise ValueError("max_dimension must be at least 16")
    w, h = image.width, image.height
    if max(w, h) <= max_dimension:
        return image
    if w >= h:
        nw = max_dimension
        nh = max(1, (2 * h * max_dimension + w) // (2 * w))
    else:
        nh = max_dimension
        nw = max(1, (2 * w * max_dimension + h) // (2 * h))
    col_idx = ((2 * np.arange(nw, dtype=np.int64) + 1) * w) // (2 * nw)
    row_idx = ((2 * np.arange(nh, dtype=np.int64) + 1) * h) // (2 * nh)
    return GrayscaleImage(image.pixels[np.ix_(row_idx, col_idx)])


def _otsu_from_histogram(hist: np.ndarray) -> int:
    """Threshold maximizing inter-class variance, compared in exact integers.

    Classes are {v <= t} and {v > t}. The variance ratio
    (S0*w1 - S1*w0)^2 / (w0*w1) is compared by cross-multiplication, so ties
    resolve deterministically toward the smaller threshold. A single-bin
    histogram returns that bin's intensity.
    """
    counts = [int(c) for c in hist]
    nonzero = [i for i, c in enumerate(counts) if c]
    if len(nonzero) == 1:
        return nonzero[0]
    total = sum(counts)
    total_sum = sum(i * c for i, c in enumerate(counts))
    best_t = 0
    best_num, best_den = -1, 1
    w0 = s0 = 0
    for t in range(256):
        w0 += counts[t]
        s0 += t * counts[t]
        w1 = total - w0
        if w0 == 0 or w1 == 0:
            continue
        diff = s0 * w1 - (total_sum - s0) * w0
        num = diff * diff
        den = w0 * w1
        if num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    return best_t


def otsu_threshold(image: GrayscaleImage) -> int:
    return _otsu_from_histogram(np.bincount(image.pixels.ravel(), minlength=256))


def sobel_magnitude(image: GrayscaleImage) -> np.ndarray:
    """|gx| + |gy| of the 3x3 Sobel operator, clamped to 255.

    Border pixels, where the window does not fit, are zero.
    """
    p = image.pixels.astype(np.int64)
    gx = (p[:-2, 2:] + 2 * p[1:-1, 2:] + p[2:, 2:]) - (
        p[:-2, :-2] + 2 * p[1:-1, :-2] + p[2:, :-2]
    )
    gy = (p[2:, :-2] + 2 * p[2:, 1:-1] + p[2:, 2:]) - (
        p[:-2, :-2] + 2 * p[:-2, 1:-1] + p[:-2, 2:]
    )
    mag = np.zeros(image.pixels.shape, dtype=np.int64)
    mag[1:-1, 1:-1] = np.minimum(np.abs(gx) + np.abs(gy), 255)
    return mag.astype(np.uint8)


def extract_edge_points(image: GrayscaleImage, params: ExtractionParams) -> FeatureDescriptor:
    """Run the resize -> Sobel -> threshold -> subsample pipeline."""
    resized = resize_max(image, params.max_dimension)
    if resized.width < 3 or resized.height < 3:
        raise DegenerateImageError(
            f"image is {resized.width}x{resized.height} after resize; need at least 3x3"
        )
    mag = sobel_magnitude(resized)
    if params.gradient_threshold is None:
        threshold = _otsu_from_histogram(np.bincount(mag.ravel(), minlength=256))
    else:
        threshold = params.gradient_threshold
    ys, xs = np.nonzero(mag > threshold)
    if xs.size == 0:
        raise NoFeaturesError(f"no gradient magnitude above threshold {threshold}")
    if xs.size > params.max_points:
        stride = math.ceil(xs.size / params.max_points)
        xs, ys = xs[::stride], ys[::stride]
    points = PointSet._from_sorted(xs.astype(np.int64), ys.astype(np.int64))
    return FeatureDescriptor(points, resized.width, resized.height, params.fingerprint)


def describe(path, params: ExtractionParams = ExtractionParams()) -> FeatureDescriptor:
    """Load an image file and extract its feature point set."""
    return extract_edge_points(load_image(path), params)


def describe_bytes(data: bytes, params: ExtractionParams = ExtractionParams()) -> FeatureDescriptor:
    return extract_edge_points(decode_image(data), params)
