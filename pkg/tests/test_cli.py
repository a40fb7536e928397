import json
import signal
import socket
import subprocess
import sys
import time

import httpx
import pytest
from click.testing import CliRunner
from fastapi.testclient import TestClient

from hannot.api import create_app
from hannot.cli import main
from hannot.image import encode_pgm
from hannot.synth import SPECIALTY, generate_dataset, render_shape


@pytest.fixture
def runner():
    return CliRunner()


def make_corpus(runner, tmp_path, per_class=3, seed=7):
    shapes = tmp_path / "shapes"
    generate_dataset(shapes, per_class=per_class, seed=seed)
    corpus = tmp_path / "corpus"
    result = runner.invoke(
        main, ["ingest", str(shapes), "--corpus", str(corpus), "--specialty", SPECIALTY]
    )
    assert result.exit_code == 0, result.output
    return corpus, shapes


class TestIngest:
    def test_all_added(self, runner, tmp_path):
        corpus, shapes = make_corpus(runner, tmp_path)
        result = runner.invoke(
            main, ["ingest", str(shapes), "--corpus", str(tmp_path / "c2"), "--specialty", SPECIALTY]
        )
        assert result.exit_code == 0
        assert result.output.count("ADDED") == 9
        assert "0 error" in result.output

    def test_corrupt_file_reported_not_fatal(self, runner, tmp_path):
        shapes = tmp_path / "shapes"
        generate_dataset(shapes, per_class=1, seed=7)
        (shapes / "broken.pgm").write_bytes(b"P5\n10 10\n255\nshort")
        corpus = tmp_path / "corpus"
        result = runner.invoke(
            main, ["ingest", str(shapes), "--corpus", str(corpus), "--specialty", SPECIALTY]
        )
        assert result.exit_code == 1
        assert result.output.count("ADDED") == 3
        assert "ERROR broken.pgm: FORMAT_ERROR" in result.output

    def test_reingest_is_idempotent(self, runner, tmp_path):
        corpus, shapes = make_corpus(runner, tmp_path)
        before = corpus.read_bytes()
        result = runner.invoke(
            main, ["ingest", str(shapes), "--corpus", str(corpus), "--specialty", SPECIALTY]
        )
        assert result.exit_code == 0
        assert result.output.count("DUPLICATE") == 9
        assert "ADDED" not in result.output
        assert corpus.read_bytes() == before

    def test_sidecar_metadata_overrides_flags(self, runner, tmp_path):
        corpus, _ = make_corpus(runner, tmp_path)
        text = corpus.read_text()
        assert '"class_name": "CIRCLE"' in text
        assert '"sub_class": "DISC"' in text

    def test_keywords_flag_split_on_commas(self, runner, tmp_path):
        shapes = tmp_path / "img"
        shapes.mkdir()
        (shapes / "one.pgm").write_bytes(encode_pgm(render_shape("CIRCLE")))
        corpus = tmp_path / "corpus"
        result = runner.invoke(
            main,
            ["ingest", str(shapes), "--corpus", str(corpus), "--specialty", "Digestion",
             "--class", "ABDOMINAL", "--sub-class", "ABSCESS",
             "--keywords", "Diarrhea for three days, Abdominal pain "],
        )
        assert result.exit_code == 0
        obj = [json.loads(l) for l in corpus.read_text().splitlines()[1:]
               if '"annotation"' in l][0]
        assert obj["keywords"] == ["Diarrhea for three days", "Abdominal pain"]


class TestQuery:
    def test_identity_query(self, runner, tmp_path):
        corpus, shapes = make_corpus(runner, tmp_path)
        member = sorted(shapes.glob("CIRCLE*.pgm"))[0]
        result = runner.invoke(
            main, ["query", str(member), "--corpus", str(corpus), "--specialty", SPECIALTY]
        )
        assert result.exit_code == 0
        first = result.output.splitlines()[0]
        assert "CIRCLE00.pgm" in first and "0.0000" in first and "accepted" in first

    def test_top_k_one(self, runner, tmp_path):
        corpus, shapes = make_corpus(runner, tmp_path)
        member = sorted(shapes.glob("*.pgm"))[0]
        result = runner.invoke(
            main,
            ["query", str(member), "--corpus", str(corpus), "--specialty", SPECIALTY, "--top-k", "1"],
        )
        ranked = [l for l in result.output.splitlines() if l.lstrip().startswith("1.")]
        assert result.exit_code == 0
        assert len([l for l in result.output.splitlines() if "distance=" in l]) == 1

    def test_empty_corpus_exit_code_and_message(self, runner, tmp_path):
        corpus, shapes = make_corpus(runner, tmp_path)
        member = sorted(shapes.glob("*.pgm"))[0]
        result = runner.invoke(
            main, ["query", str(member), "--corpus", str(corpus), "--specialty", "Cardiology"]
        )
        assert result.exit_code == 1
        assert "EMPTY_CORPUS" in result.output

    def test_json_matches_api_byte_for_byte(self, runner, tmp_path):
        corpus, shapes = make_corpus(runner, tmp_path)
        member = sorted(shapes.glob("CROSS*.pgm"))[0]
        result = runner.invoke(
            main,
            ["query", str(member), "--corpus", str(corpus), "--specialty", SPECIALTY, "--json"],
        )
        assert result.exit_code == 0
        cli_body = result.output.rstrip("\n")

        app = create_app(corpus)
        with TestClient(app) as client:
            upload = client.post(
                "/api/images",
                files={"image": (member.name, member.read_bytes(), "application/octet-stream")},
            )
            image_id = upload.json()["image_id"]
            api = client.post("/api/query", json={"image_id": image_id, "specialty": SPECIALTY})
        assert api.status_code == 200
        assert cli_body == api.text

    def test_usage_error_exit_code(self, runner, tmp_path):
        result = runner.invoke(main, ["query", "--corpus", str(tmp_path / "c")])
        assert result.exit_code == 2

    def test_env_var_default_corpus(self, runner, tmp_path):
        corpus, shapes = make_corpus(runner, tmp_path)
        member = sorted(shapes.glob("*.pgm"))[0]
        result = runner.invoke(
            main, ["query", str(member), "--specialty", SPECIALTY],
            env={"HANNOT_CORPUS": str(corpus)},
        )
        assert result.exit_code == 0


class TestEvaluate:
    def test_duplicate_pair_corpus_is_perfect(self, runner, tmp_path):
        shapes = tmp_path / "shapes"
        shapes.mkdir()
        for kind in ("CIRCLE", "RECTANGLE", "CROSS"):
            image = render_shape(kind)
            meta = json.dumps(
                {"specialty": SPECIALTY, "class_name": kind, "sub_class": kind,
                 "keywords": ["k"], "physician_id": "p"}
            )
            for suffix, binary in (("-1", True), ("-2", False)):
                name = f"{kind}{suffix}.pgm"
                (shapes / name).write_bytes(encode_pgm(image, binary=binary))
                (shapes / (name + ".meta")).write_text(meta)
        corpus = tmp_path / "corpus"
        assert runner.invoke(
            main, ["ingest", str(shapes), "--corpus", str(corpus), "--specialty", SPECIALTY]
        ).exit_code == 0
        result = runner.invoke(main, ["evaluate", "--corpus", str(corpus), "--json"])
        assert result.exit_code == 0
        report = json.loads(result.output)
        assert report["percent"] == 100.0
        assert report["total"] == 6

    def test_runs_are_byte_identical(self, runner, tmp_path):
        corpus, _ = make_corpus(runner, tmp_path)
        first = runner.invoke(main, ["evaluate", "--corpus", str(corpus)])
        second = runner.invoke(main, ["evaluate", "--corpus", str(corpus)])
        assert first.exit_code == second.exit_code == 0
        assert first.output == second.output

    def test_insufficient_data(self, runner, tmp_path):
        shapes = tmp_path / "img"
        shapes.mkdir()
        (shapes / "only.pgm").write_bytes(encode_pgm(render_shape("CIRCLE")))
        corpus = tmp_path / "corpus"
        runner.invoke(
            main, ["ingest", str(shapes), "--corpus", str(corpus), "--specialty", SPECIALTY,
                   "--class", "CIRCLE", "--keywords", "k"],
        )
        result = runner.invoke(main, ["evaluate", "--corpus", str(corpus)])
        assert result.exit_code == 1
        assert "INSUFFICIENT_DATA" in result.output

    def test_threshold_sweep_gating_monotonicity(self, runner, tmp_path):
        corpus, shapes = make_corpus(runner, tmp_path)
        member = sorted(shapes.glob("CIRCLE*.pgm"))[0]
        accepted_counts = []
        for threshold in (2, 4, 8, 16):
            result = runner.invoke(
                main,
                ["query", str(member), "--corpus", str(corpus), "--specialty", SPECIALTY,
                 "--top-k", "9", "--threshold", str(threshold), "--json"],
            )
            body = json.loads(result.output)
            accepted_counts.append(sum(r["accepted"] for r in body["results"]))
        assert accepted_counts == sorted(accepted_counts)


class TestSynth:
    def test_deterministic_for_seed(self, runner, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert runner.invoke(main, ["synth", str(a), "--per-class", "2", "--seed", "5"]).exit_code == 0
        assert runner.invoke(main, ["synth", str(b), "--per-class", "2", "--seed", "5"]).exit_code == 0
        files_a = sorted(p.name for p in a.iterdir())
        assert files_a == sorted(p.name for p in b.iterdir())
        for name in files_a:
            assert (a / name).read_bytes() == (b / name).read_bytes()


def free_port():
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    return port


def wait_for(url, timeout=15.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        try:
            return httpx.get(url, timeout=1.0)
        except httpx.TransportError:
            time.sleep(0.1)
    raise TimeoutError(f"service at {url} never came up")


class TestServe:
    def test_serve_and_shutdown_leaves_store_untouched(self, tmp_path):
        corpus = tmp_path / "corpus"
        port = free_port()
        proc = subprocess.Popen(
            [sys.executable, "-m", "hannot.cli", "serve", "--corpus", str(corpus),
             "--listen", f"127.0.0.1:{port}"],
            stdout=subprocess.PIPE, stderr=subprocess.STDOUT,
        )
        try:
            r = wait_for(f"http://127.0.0.1:{port}/api/specialties")
            assert r.status_code == 200
            assert r.json() == {"specialties": []}
            before = corpus.read_bytes()
            proc.send_signal(signal.SIGINT)
            proc.wait(timeout=10)
            assert corpus.read_bytes() == before
        finally:
            if proc.poll() is None:
                proc.kill()
                proc.wait()

    def test_occupied_port_exits_nonzero(self, tmp_path):
        blocker = socket.socket()
        blocker.bind(("127.0.0.1", 0))
        blocker.listen(1)
        port = blocker.getsockname()[1]
        try:
            proc = subprocess.run(
                [sys.executable, "-m", "hannot.cli", "serve", "--corpus",
                 str(tmp_path / "corpus"), "--listen", f"127.0.0.1:{port}"],
                capture_output=True, text=True, timeout=30,
            )
            assert proc.returncode != 0
            assert "cannot bind" in proc.stderr
        finally:
            blocker.close()
