"""Canonical JSON encoding shared by the HTTP API and the CLI's JSON mode.

One serializer means the CLI's --json output and the API's response bodies
are byte-identical for equivalent operations.
"""

import json

__all__ = ["dumps"]


def dumps(payload) -> str:
    return json.dumps(payload, ensure_ascii=False, allow_nan=False, separators=(",", ":"))
