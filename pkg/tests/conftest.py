from __future__ import annotations

import struct
from pathlib import Path
from types import SimpleNamespace

import pytest

from mhaudit.domains.apps.service import load_manifest
from mhaudit.domains.capture.schemas import FlowRecord
from mhaudit.domains.common.enums import CrawlKind, HostLabel
from mhaudit.domains.common.jsonio import read_json
from mhaudit.domains.detect.service import compile_persona, load_default_persona
from mhaudit.domains.fixtures.plans import preset
from mhaudit.domains.fixtures.service import generate_corpus
from mhaudit.domains.stats.schemas import CorpusStats
from mhaudit.domains.taxonomy.service import load_default_taxonomy
from mhaudit.pipeline.runner import run_pipeline
from mhaudit.pipeline.state import AuditContext
from mhaudit.settings import Settings


# --- Resources ---

@pytest.fixture(scope="session")
def taxonomy():
    return load_default_taxonomy()


@pytest.fixture(scope="session")
def persona():
    return load_default_persona()


@pytest.fixture(scope="session")
def matchers(persona, taxonomy):
    return compile_persona(persona, taxonomy)


# --- Builders ---

@pytest.fixture
def make_flow():
    def _flow(
        *,
        body: bytes = b"",
        path: str = "/",
        query: str = "",
        headers: tuple[tuple[str, str], ...] = (),
        host: str = "api.clinic-portal.example",
        label: HostLabel = HostLabel.NON_TRACKER,
        crawl_kind: CrawlKind = CrawlKind.MANUAL,
        flow_id: str = "org.example.app/manual.jsonl#0",
        app_id: str = "org.example.app",
        method: str = "POST",
    ) -> FlowRecord:
        return FlowRecord(
            flow_id=flow_id,
            app_id=app_id,
            crawl_kind=crawl_kind,
            method=method,
            host=host,
            path=path,
            query=query,
            request_headers=headers,
            request_body=body,
            body_length=len(body),
            original_length=len(body),
            host_label=label,
        )

    return _flow


def _uleb128(value: int) -> bytes:
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


@pytest.fixture
def build_dex():
    """Hand-assembled DEX image: header, string_ids, type_ids and string_data only."""

    def _dex(descriptors: list[str], extra_strings: tuple[str, ...] = ()) -> bytes:
        descriptors = list(dict.fromkeys(descriptors))
        strings = sorted(set(descriptors) | set(extra_strings))
        string_ids_off = 0x70
        type_ids_off = string_ids_off + 4 * len(strings)
        data_off = type_ids_off + 4 * len(descriptors)

        data = bytearray()
        offsets = []
        for text in strings:
            offsets.append(data_off + len(data))
            data += _uleb128(len(text)) + text.encode("ascii") + b"\x00"

        header = bytearray(0x70)
        header[0:8] = b"dex\n035\x00"
        struct.pack_into("<I", header, 0x20, data_off + len(data))
        struct.pack_into("<I", header, 0x24, 0x70)
        struct.pack_into("<I", header, 0x28, 0x12345678)
        struct.pack_into("<II", header, 0x38, len(strings), string_ids_off)
        struct.pack_into("<II", header, 0x40, len(descriptors), type_ids_off)

        string_ids = b"".join(struct.pack("<I", offset) for offset in offsets)
        type_ids = b"".join(struct.pack("<I", strings.index(d)) for d in descriptors)
        return bytes(header) + string_ids + type_ids + bytes(data)

    return _dex


# --- Audits over generated corpora ---

def audit_corpus(manifest_path: Path, output_dir: Path, jobs: int | None = None) -> int:
    ctx = AuditContext(load_manifest(manifest_path), Settings(_env_file=None), output_dir=output_dir, jobs=jobs)
    return run_pipeline(ctx)


@pytest.fixture(scope="session")
def audited(tmp_path_factory):
    """Generate a preset corpus once per session, audit it and load the summary."""
    cache: dict[str, SimpleNamespace] = {}

    def _audited(name: str) -> SimpleNamespace:
        if name not in cache:
            root = tmp_path_factory.mktemp(name)
            corpus = generate_corpus(preset(name), root / "corpus")
            output_dir = root / "out"
            code = audit_corpus(corpus.manifest_path, output_dir)
            cache[name] = SimpleNamespace(
                corpus=corpus,
                output_dir=output_dir,
                exit_code=code,
                stats=CorpusStats.model_validate(read_json(output_dir / "summary.json")),
            )
        return cache[name]

    return _audited


@pytest.fixture
def run_audit():
    return audit_corpus
