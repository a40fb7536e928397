"""Batch driver: build corpora, run queries, evaluate, serve.

Exit codes: 0 success, 1 operational error (the code is printed), 2 usage
error. TEXT output is for humans and not stable; --json emits the same
structures as the HTTP API.
"""

from __future__ import annotations

import json
import socket
import sys
from pathlib import Path

import click

from . import wire
from .errors import HannotError
from .geometry import NormKind
from .image import ExtractionParams, describe_bytes
from .retrieval import (
    DistanceVariant,
    RetrievalConfig,
    evaluate_leave_one_out,
    query_similar,
    vote_keywords,
)
from .store import (
    AnnotationRecord,
    CorpusFilter,
    ImageEntry,
    Store,
    content_hash,
    load_corpus,
    save_corpus,
    utc_now,
)

_corpus_option = click.option(
    "--corpus",
    "corpus_path",
    envvar="HANNOT_CORPUS",
    required=True,
    type=click.Path(path_type=Path),
    help="Corpus file (HANNOT_CORPUS is the default).",
)


def _fail(exc: HannotError) -> None:
    click.echo(f"{exc.code}: {exc}", err=True)
    sys.exit(1)


def _norm_from_token(token: str) -> NormKind:
    try:
        return NormKind(token)
    except ValueError:
        raise click.BadParameter(f"norm must be one of euclidean|manhattan|chebyshev, got {token!r}")


def _variant_from_token(token: str) -> DistanceVariant:
    try:
        return DistanceVariant.from_token(token)
    except ValueError as exc:
        raise click.BadParameter(str(exc))


def _build_config(variant, top_k, threshold, norm) -> RetrievalConfig:
    defaults = RetrievalConfig()
    return RetrievalConfig(
        variant=_variant_from_token(variant) if variant else defaults.variant,
        norm=_norm_from_token(norm) if norm else defaults.norm,
        top_k=top_k if top_k is not None else defaults.top_k,
        acceptance_threshold=threshold if threshold is not None else defaults.acceptance_threshold,
    )


def _split_keywords(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _load_or_create_store(corpus_path: Path, params: ExtractionParams | None) -> Store:
    if corpus_path.exists():
        store = load_corpus(corpus_path)
        if params is not None and params != store.params:
            click.echo(
                "error: extraction flags disagree with the existing corpus parameters", err=True
            )
            sys.exit(1)
        return store
    return Store(params or ExtractionParams())


@click.group()
def main():
    """Point-set image retrieval and semi-automatic annotation."""


@main.command()
@click.argument("directory", type=click.Path(exists=True, file_okay=False, path_type=Path))
@_corpus_option
@click.option("--specialty", required=True, help="Specialty for every ingested image.")
@click.option("--class", "class_name", default="", help="Disease class.")
@click.option("--sub-class", default="", help="Disease sub-class.")
@click.option("--physician", default="ingest", help="Physician id stamped on records.")
@click.option("--keywords", default="", help="Comma-separated keywords.")
@click.option("--max-dimension", type=int, default=None, help="Extraction: resize bound (new corpus only).")
@click.option("--gradient-threshold", type=int, default=None, help="Extraction: fixed threshold instead of Otsu.")
@click.option("--max-points", type=int, default=None, help="Extraction: point budget (new corpus only).")
def ingest(directory, corpus_path, specialty, class_name, sub_class, physician, keywords,
           max_dimension, gradient_threshold, max_points):
    """Register and annotate every image in DIRECTORY.

    A sidecar file <image>.meta (JSON) overrides the flags per image.
    Images whose bytes are already in the corpus are reported DUPLICATE and
    skipped; per-file failures are reported and do not stop the batch.
    """
    params = None
    if max_dimension is not None or gradient_threshold is not None or max_points is not None:
        defaults = ExtractionParams()
        params = ExtractionParams(
            max_dimension=max_dimension if max_dimension is not None else defaults.max_dimension,
            gradient_threshold=gradient_threshold,
            max_points=max_points if max_points is not None else defaults.max_points,
        )
    store = _load_or_create_store(corpus_path, params)

    added = duplicates = errors = 0
    files = sorted(p for p in directory.iterdir() if p.is_file() and p.suffix != ".meta")
    for path in files:
        try:
            data = path.read_bytes()
            descriptor = describe_bytes(data, store.params)
            entry = ImageEntry(
                image_id=path.name,
                descriptor=descriptor,
                source_path=str(path),
                content_hash=content_hash(data),
            )
            result = store.register_image(entry)
            if not result.added:
                duplicates += 1
                click.echo(f"DUPLICATE {path.name} (same bytes as {result.image_id})")
                continue

            meta = {}
            meta_path = path.with_name(path.name + ".meta")
            if meta_path.exists():
                meta = json.loads(meta_path.read_text(encoding="utf-8"))
            kw = meta.get("keywords", keywords)
            kw = _split_keywords(kw) if isinstance(kw, str) else [str(k) for k in kw]
            if kw:
                store.add_annotation(
                    AnnotationRecord(
                        image_id=result.image_id,
                        specialty=meta.get("specialty", specialty),
                        class_name=meta.get("class_name", class_name),
                        sub_class=meta.get("sub_class", sub_class),
                        keywords=tuple(kw),
                        physician_id=meta.get("physician_id", physician),
                        created_at=utc_now(),
                    )
                )
            added += 1
            click.echo(f"ADDED {result.image_id}")
        except (HannotError, json.JSONDecodeError, OSError) as exc:
            errors += 1
            code = exc.code if isinstance(exc, HannotError) else "IO_ERROR"
            click.echo(f"ERROR {path.name}: {code}: {exc}")

    save_corpus(store, corpus_path)
    click.echo(f"ingested {added} added, {duplicates} duplicate, {errors} error")
    if errors:
        sys.exit(1)


@main.command()
@click.argument("image", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@_corpus_option
@click.option("--specialty", required=True)
@click.option("--class", "class_name", default=None)
@click.option("--sub-class", default=None)
@click.option("--variant", default=None, help="mh (modified Hausdorff, default) or h.")
@click.option("--top-k", type=int, default=None)
@click.option("--threshold", type=float, default=None)
@click.option("--norm", default=None, help="euclidean (default), manhattan or chebyshev.")
@click.option("--json", "as_json", is_flag=True, help="Emit the API's JSON response body.")
def query(image, corpus_path, specialty, class_name, sub_class, variant, top_k, threshold,
          norm, as_json):
    """Rank corpus images similar to IMAGE and aggregate keyword votes."""
    config = _build_config(variant, top_k, threshold, norm)
    try:
        store = load_corpus(corpus_path)
        descriptor = describe_bytes(image.read_bytes(), store.params)
        filt = CorpusFilter(specialty=specialty, class_name=class_name, sub_class=sub_class)
        results = query_similar(descriptor, filt, store, config)
        votes = vote_keywords(results, config)
    except HannotError as exc:
        _fail(exc)
    except OSError as exc:
        click.echo(f"IO_ERROR: {exc}", err=True)
        sys.exit(1)

    if as_json:
        click.echo(wire.dumps({
            "results": [r.to_wire() for r in results],
            "votes": [v.to_wire() for v in votes],
        }))
        return
    for rank, r in enumerate(results, start=1):
        mark = "accepted" if r.accepted else "rejected"
        click.echo(f"{rank:>2}. {r.image_id}  distance={r.distance:.4f}  [{mark}]")
        for record in r.annotations:
            click.echo(
                f"      {record.specialty} / {record.class_name} / {record.sub_class}"
                f"  ({record.physician_id}): {'; '.join(record.keywords)}"
            )
    if votes:
        click.echo("suggested keywords:")
        for vote in votes:
            click.echo(f"  {vote.score:.4f}  {vote.keyword}  ({', '.join(vote.supporters)})")
    else:
        click.echo("no accepted results; no keyword suggestions")


@main.command()
@_corpus_option
@click.option("--variant", default=None)
@click.option("--top-k", type=int, default=None)
@click.option("--threshold", type=float, default=None)
@click.option("--norm", default=None)
@click.option("--json", "as_json", is_flag=True)
def evaluate(corpus_path, variant, top_k, threshold, norm, as_json):
    """Leave-one-out evaluation: per-class correct-annotation rates."""
    config = _build_config(variant, top_k, threshold, norm)
    try:
        store = load_corpus(corpus_path)
        report = evaluate_leave_one_out(store, config)
    except HannotError as exc:
        _fail(exc)

    if as_json:
        click.echo(wire.dumps(report.to_wire()))
        return
    click.echo(f"{'specialty':<16} {'class':<16} {'correct':>8} {'total':>6} {'percent':>8}")
    for cls in report.classes:
        click.echo(
            f"{cls.specialty:<16} {cls.class_name:<16} {cls.correct:>8} {cls.total:>6}"
            f" {cls.percent:>7.1f}%"
        )
    click.echo(f"{'overall':<33} {report.correct:>8} {report.total:>6} {report.percent:>7.1f}%")


@main.command()
@_corpus_option
@click.option("--listen", default="127.0.0.1:8701", help="host:port to bind.")
@click.option("--ui-dir", type=click.Path(exists=True, file_okay=False, path_type=Path),
              default=None, help="Directory with the built review UI (served under /ui).")
def serve(corpus_path, listen, ui_dir):
    """Run the HTTP service until interrupted."""
    import uvicorn

    from .api import create_app

    host, _, port_text = listen.rpartition(":")
    if not host or not port_text.isdigit():
        raise click.BadParameter(f"--listen must be host:port, got {listen!r}")
    port = int(port_text)

    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        probe.bind((host, port))
    except OSError as exc:
        click.echo(f"cannot bind {listen}: {exc}", err=True)
        sys.exit(1)
    finally:
        probe.close()

    try:
        app = create_app(corpus_path, ui_dir=ui_dir)
    except HannotError as exc:
        _fail(exc)
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command(hidden=True)
@click.argument("directory", type=click.Path(file_okay=False, path_type=Path))
@click.option("--per-class", type=int, default=12)
@click.option("--seed", type=int, default=7)
@click.option("--size", type=int, default=96)
def synth(directory, per_class, seed, size):
    """Generate the synthetic shape dataset (images + .meta sidecars)."""
    from .synth import generate_dataset

    paths = generate_dataset(directory, per_class=per_class, seed=seed, size=size)
    click.echo(f"wrote {len(paths)} images to {directory}")


if __name__ == "__main__":
    main()
