import random

import numpy as np
import pytest

import oracles
from hannot.errors import (
    DegenerateImageError,
    FormatError,
    ImageIOError,
    NoFeaturesError,
)
from hannot.geometry import modified_hausdorff
from hannot.image import (
    ExtractionParams,
    GrayscaleImage,
    decode_image,
    describe,
    encode_pgm,
    extract_edge_points,
    load_image,
    otsu_threshold,
    resize_max,
    sniff_media_type,
    sobel_magnitude,
)


def img(arr):
    return GrayscaleImage(np.asarray(arr, dtype=np.uint8))


def filled_circle(size, cx, cy, r, fg=200, bg=30):
    yy, xx = np.indices((size, size))
    inside = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
    return img(np.where(inside, fg, bg))


class TestPgmDecoding:
    def test_p2_example(self):
        image = decode_image(b"P2\n2 2\n255\n0 255 255 0\n")
        assert image.width == 2 and image.height == 2
        assert image.pixels.tolist() == [[0, 255], [255, 0]]

    def test_p5_equals_p2(self):
        p2 = decode_image(b"P2\n2 2\n255\n0 255 255 0\n")
        p5 = decode_image(b"P5\n2 2\n255\n" + bytes([0, 255, 255, 0]))
        assert p2 == p5

    def test_header_comments_skipped(self):
        image = decode_image(b"P2\n# a comment\n2 1 # trailing\n255\n7 9\n")
        assert image.pixels.tolist() == [[7, 9]]

    def test_truncated_header(self):
        with pytest.raises(FormatError):
            decode_image(b"P2\n2 2\n")

    def test_truncated_p5_raster(self):
        with pytest.raises(FormatError):
            decode_image(b"P5\n2 2\n255\n\x00\x01")

    def test_value_above_maxval(self):
        with pytest.raises(FormatError):
            decode_image(b"P2\n1 1\n100\n101\n")

    def test_bad_maxval(self):
        with pytest.raises(FormatError):
            decode_image(b"P2\n1 1\n70000\n0\n")

    def test_unsupported_magic(self):
        with pytest.raises(FormatError):
            decode_image(b"BM_not_an_image")

    def test_encode_roundtrip_both_ways(self):
        image = img([[0, 17, 255], [3, 128, 64]])
        assert decode_image(encode_pgm(image, binary=True)) == image
        assert decode_image(encode_pgm(image, binary=False)) == image

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(ImageIOError):
            load_image(tmp_path / "nope.pgm")

    def test_load_from_disk(self, tmp_path):
        path = tmp_path / "t.pgm"
        path.write_bytes(b"P2\n2 2\n255\n0 255 255 0\n")
        assert load_image(path).pixels.tolist() == [[0, 255], [255, 0]]


class TestPngDecoding:
    def test_grayscale_png(self, tmp_path):
        from PIL import Image

        arr = np.arange(12, dtype=np.uint8).reshape(3, 4) * 20
        path = tmp_path / "g.png"
        Image.fromarray(arr, mode="L").save(path)
        assert load_image(path).pixels.tolist() == arr.tolist()

    def test_rgb_png_integer_luma(self, tmp_path):
        from PIL import Image

        rgb = np.zeros((1, 2, 3), dtype=np.uint8)
        rgb[0, 0] = (255, 0, 0)
        rgb[0, 1] = (10, 20, 30)
        path = tmp_path / "c.png"
        Image.fromarray(rgb, mode="RGB").save(path)
        image = load_image(path)
        assert image.pixels[0, 0] == (299 * 255) // 1000
        assert image.pixels[0, 1] == (299 * 10 + 587 * 20 + 114 * 30) // 1000

    def test_sniff(self):
        assert sniff_media_type(b"P5\n...") == "image/x-portable-graymap"
        assert sniff_media_type(b"\x89PNG\r\n\x1a\nxx") == "image/png"


class TestResize:
    def test_within_bounds_unchanged(self):
        image = img(np.zeros((50, 100)))
        assert resize_max(image, 256) is image

    def test_halving(self):
        image = img(np.zeros((256, 512)))
        out = resize_max(image, 256)
        assert (out.width, out.height) == (256, 128)

    def test_scale_half(self):
        image = img(np.zeros((100, 300)))
        out = resize_max(image, 150)
        assert (out.width, out.height) == (150, 50)

    def test_tall_image(self):
        image = img(np.zeros((300, 100)))
        out = resize_max(image, 150)
        assert (out.width, out.height) == (50, 150)

    def test_nearest_neighbour_preserves_values(self):
        base = np.zeros((2, 512), dtype=np.uint8)
        base[:, 256:] = 255
        out = resize_max(img(base), 256)
        assert set(np.unique(out.pixels)) == {0, 255}

    def test_min_dimension_guard(self):
        with pytest.raises(ValueError):
            resize_max(img(np.zeros((4, 4))), 8)


class TestOtsu:
    def test_constant_image(self):
        assert otsu_threshold(img(np.full((5, 5), 77))) == 77

    def test_two_level_split(self):
        arr = np.full((4, 8), 10)
        arr[:, 4:] = 200
        t = otsu_threshold(img(arr))
        assert 10 <= t <= 199
        hist = [0] * 256
        hist[10] = 16
        hist[200] = 16
        assert t == oracles.otsu_exhaustive(hist)

    def test_matches_exhaustive_oracle_on_random_histograms(self):
        rng = random.Random(42)
        for _ in range(20):
            values = [rng.randrange(256) for _ in range(rng.randint(2, 64))]
            arr = np.asarray(values, dtype=np.uint8).reshape(1, -1)
            hist = [0] * 256
            for v in values:
                hist[v] += 1
            assert otsu_threshold(img(arr)) == oracles.otsu_exhaustive(hist)

    def test_deterministic(self):
        image = filled_circle(32, 16, 16, 9)
        assert otsu_threshold(image) == otsu_threshold(image)


class TestExtraction:
    def test_constant_image_has_no_features(self):
        with pytest.raises(NoFeaturesError):
            extract_edge_points(img(np.full((16, 16), 128)), ExtractionParams())

    def test_degenerate_image(self):
        with pytest.raises(DegenerateImageError):
            extract_edge_points(img(np.zeros((2, 10))), ExtractionParams())

    def test_vertical_step_edge(self):
        c = 7
        arr = np.zeros((16, 16), dtype=np.uint8)
        arr[:, c:] = 255
        desc = extract_edge_points(img(arr), ExtractionParams())
        xs = set(desc.points.xs.tolist())
        assert xs <= {c - 1, c, c + 1}
        assert len(desc.points) > 0

    def test_sobel_zero_on_borders(self):
        mag = sobel_magnitude(filled_circle(16, 8, 8, 5))
        assert mag[0].max() == 0 and mag[-1].max() == 0
        assert mag[:, 0].max() == 0 and mag[:, -1].max() == 0

    def test_deterministic_descriptor(self):
        image = filled_circle(48, 24, 24, 14)
        params = ExtractionParams()
        d1 = extract_edge_points(image, params)
        d2 = extract_edge_points(image, params)
        assert d1.points == d2.points
        assert d1 == d2

    def test_max_points_bound(self):
        image = filled_circle(64, 32, 32, 20)
        full = extract_edge_points(image, ExtractionParams())
        capped = extract_edge_points(image, ExtractionParams(max_points=10))
        assert len(capped.points) <= 10
        assert len(full.points) > 10
        assert set(zip(capped.points.xs.tolist(), capped.points.ys.tolist())) <= set(
            zip(full.points.xs.tolist(), full.points.ys.tolist())
        )

    def test_points_within_source_dims(self):
        image = filled_circle(40, 20, 20, 12)
        desc = extract_edge_points(image, ExtractionParams())
        assert desc.points.xs.max() < desc.source_width
        assert desc.points.ys.max() < desc.source_height

    def test_fixed_threshold(self):
        image = filled_circle(32, 16, 16, 9)
        fixed = extract_edge_points(image, ExtractionParams(gradient_threshold=100))
        mag = sobel_magnitude(image)
        expected = int((mag > 100).sum())
        assert len(fixed.points) == expected

    def test_fingerprint_distinguishes_params(self):
        a = ExtractionParams()
        b = ExtractionParams(max_points=100)
        c = ExtractionParams(gradient_threshold=50)
        assert len({a.fingerprint, b.fingerprint, c.fingerprint}) == 3


class TestDescribe:
    def test_circle_points_hug_boundary(self, tmp_path):
        size, cx, cy, r = 64, 32, 32, 18
        image = filled_circle(size, cx, cy, r)
        path = tmp_path / "circle.pgm"
        path.write_bytes(encode_pgm(image))
        desc = describe(path)

        # independent rasterization: boundary = inside pixel with an outside 4-neighbour
        inside = {
            (x, y)
            for y in range(size)
            for x in range(size)
            if (x - cx) ** 2 + (y - cy) ** 2 <= r * r
        }
        boundary = {
            (x, y)
            for (x, y) in inside
            if any(n not in inside for n in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)))
        }
        for p in desc.points:
            assert any(abs(p.x - bx) <= 1 and abs(p.y - by) <= 1 for bx, by in boundary)

    def test_missing_file_propagates(self, tmp_path):
        with pytest.raises(ImageIOError):
            describe(tmp_path / "absent.pgm")

    def test_identical_bytes_identical_descriptors(self, tmp_path):
        image = filled_circle(32, 16, 16, 10)
        p1, p2 = tmp_path / "a.pgm", tmp_path / "b.pgm"
        p1.write_bytes(encode_pgm(image))
        p2.write_bytes(encode_pgm(image))
        assert describe(p1) == describe(p2)

    def test_self_similarity_is_zero(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_bytes(encode_pgm(filled_circle(48, 24, 24, 13)))
        d = describe(path)
        assert modified_hausdorff(d.points, d.points) == 0.0

    def test_shift_robustness(self):
        base = filled_circle(64, 30, 32, 15)
        shifted = filled_circle(64, 31, 32, 15)
        da = extract_edge_points(base, ExtractionParams())
        db = extract_edge_points(shifted, ExtractionParams())
        assert modified_hausdorff(da.points, db.points) <= 2.0
