"""Append-only capture store with a variant-aware CDXJ-style index.

On disk an archive is a directory of three files:

``records.dat``
    One frame per capture: a UTF-8 JSON header line carrying everything but
    the payload (including ``body_length``), then exactly that many raw body
    bytes, then a newline. Frames are append-only and never rewritten.

``index.cdxj``
    One line per capture: ``<canonical-uri> <14-digit-timestamp> <JSON>``
    where the JSON object holds ``id``, ``status``, and the variant key as a
    ``[[dimension, value], ...]`` list. Lines sort bytewise into
    (URI, datetime) order because canonical URIs contain no spaces.

``meta.json``
    Format version plus the VariantConfig the captures were keyed with, so
    replay never needs to guess how variant keys were derived.

Variant keys are computed at ingest time from the request/response header
pair and stored; lookups never recompute them.
"""

from __future__ import annotations

import json
import os
from bisect import insort
from dataclasses import dataclass, replace
from datetime import datetime
from pathlib import Path
from typing import Iterator, NamedTuple

from .http_core import (
    CanonicalUri,
    Headers,
    canonicalize,
    ensure_utc,
    format_timestamp14,
    parse_cookie_header,
    parse_timestamp14,
    vary_spec,
)

__all__ = [
    "VariantKey",
    "VariantConfig",
    "derive_variant_key",
    "variant_value",
    "variant_matches",
    "ArchiveRecord",
    "IndexEntry",
    "ArchiveStore",
    "StoreError",
]

FORMAT_VERSION = 1
RECORDS_NAME = "records.dat"
INDEX_NAME = "index.cdxj"
META_NAME = "meta.json"


class StoreError(Exception):
    """Archive directory is unreadable, corrupt, or failed to accept a write."""


@dataclass(frozen=True)
class VariantKey:
    """Ordered (dimension, value) pairs a capture varied on; empty = no variance."""

    pairs: tuple[tuple[str, str], ...] = ()

    @property
    def is_empty(self) -> bool:
        return not self.pairs

    def to_json(self) -> list[list[str]]:
        return [[d, v] for d, v in self.pairs]

    @classmethod
    def from_json(cls, data: list) -> "VariantKey":
        return cls(tuple((str(d), str(v)) for d, v in data))

    def encode(self) -> str:
        return json.dumps(self.to_json(), separators=(",", ":"))


@dataclass(frozen=True)
class VariantConfig:
    """How variant keys are derived.

    content_cookie_names are the cookies treated as content-affecting; all
    other cookies are ignored to avoid false negatives at replay.
    implied_vary supplies dimensions for responses that carry no Vary header
    at all, which is how sites that negotiate silently get keyed.
    """

    content_cookie_names: frozenset[str] = frozenset({"lang"})
    honor_vary: bool = True
    implied_vary: tuple[str, ...] = ("cookie",)

    def __post_init__(self) -> None:
        object.__setattr__(
            self,
            "content_cookie_names",
            frozenset(n.lower() for n in self.content_cookie_names),
        )
        object.__setattr__(
            self, "implied_vary", tuple(d.lower() for d in self.implied_vary)
        )

    def to_json(self) -> dict:
        return {
            "content_cookie_names": sorted(self.content_cookie_names),
            "honor_vary": self.honor_vary,
            "implied_vary": list(self.implied_vary),
        }

    @classmethod
    def from_json(cls, data: dict) -> "VariantConfig":
        return cls(
            content_cookie_names=frozenset(data["content_cookie_names"]),
            honor_vary=bool(data["honor_vary"]),
            implied_vary=tuple(data["implied_vary"]),
        )


def variant_value(request_headers: Headers, dimension: str, cfg: VariantConfig) -> str:
    """Normalized request-side value for one variant dimension.

    The cookie dimension reduces to the configured content cookies only,
    sorted by name and joined as ``name=value;name=value``. Any other
    dimension is the raw header value ("" when absent, comma-joined when
    repeated).
    """
    dimension = dimension.lower()
    if dimension == "cookie":
        pairs: list[tuple[str, str]] = []
        for header in request_headers.get_all("cookie"):
            pairs.extend(parse_cookie_header(header))
        kept = sorted(
            (name, value)
            for name, value in pairs
            if name.lower() in cfg.content_cookie_names
        )
        return ";".join(f"{name}={value}" for name, value in kept)
    values = request_headers.get_all(dimension)
    return ", ".join(values)


def derive_variant_key(
    request_headers: Headers, response_headers: Headers, cfg: VariantConfig
) -> VariantKey:
    """Derive the capture's variant key from its header pair.

    Dimensions come from the response's Vary header when honor_vary is set
    and one is present, otherwise from cfg.implied_vary. ``Vary: *`` yields
    the full sorted request-header fingerprint, raw values included (such
    captures effectively never match a replay request, matching cache
    semantics for ``*``).
    """
    spec = vary_spec(response_headers)
    if cfg.honor_vary and not spec.is_empty:
        if spec.is_all:
            pairs = tuple(
                (name, ", ".join(request_headers.get_all(name)))
                for name in sorted(set(request_headers.names()))
            )
            return VariantKey(pairs)
        dimensions = spec.fields
    else:
        dimensions = cfg.implied_vary
    ordered = sorted(set(d.lower() for d in dimensions))
    return VariantKey(
        tuple((d, variant_value(request_headers, d, cfg)) for d in ordered)
    )


def variant_matches(
    key: VariantKey, request_headers: Headers, cfg: VariantConfig
) -> bool:
    """True when a request reproduces every dimension value of `key`."""
    return all(
        variant_value(request_headers, dimension, cfg) == value
        for dimension, value in key.pairs
    )


@dataclass(frozen=True)
class ArchiveRecord:
    """One capture. `id` is assigned by the store on append (None before)."""

    id: int | None
    uri: CanonicalUri
    datetime: datetime
    request_headers: Headers
    response_status: int
    response_headers: Headers
    body: bytes
    variant_key: VariantKey

    def __post_init__(self) -> None:
        normalized = ensure_utc(self.datetime).replace(microsecond=0)
        object.__setattr__(self, "datetime", normalized)
        if not 0 <= self.response_status <= 599:
            raise ValueError(f"response status out of range: {self.response_status}")

    @property
    def timestamp14(self) -> str:
        return format_timestamp14(self.datetime)


class IndexEntry(NamedTuple):
    datetime: datetime
    variant_key: VariantKey
    id: int


def _frame_header(record: ArchiveRecord) -> bytes:
    header = {
        "id": record.id,
        "uri": str(record.uri),
        "datetime": record.timestamp14,
        "request_headers": [[k, v] for k, v in record.request_headers],
        "status": record.response_status,
        "response_headers": [[k, v] for k, v in record.response_headers],
        "variant": record.variant_key.to_json(),
        "body_length": len(record.body),
    }
    return json.dumps(header, separators=(",", ":"), sort_keys=True).encode("utf-8")


def _record_from_frame(header: dict, body: bytes) -> ArchiveRecord:
    return ArchiveRecord(
        id=int(header["id"]),
        uri=canonicalize(header["uri"]),
        datetime=parse_timestamp14(header["datetime"]),
        request_headers=Headers([(k, v) for k, v in header["request_headers"]]),
        response_status=int(header["status"]),
        response_headers=Headers([(k, v) for k, v in header["response_headers"]]),
        body=body,
        variant_key=VariantKey.from_json(header["variant"]),
    )


def _index_line(uri: str, record: ArchiveRecord) -> str:
    blob = json.dumps(
        {
            "id": record.id,
            "status": record.response_status,
            "variant": record.variant_key.to_json(),
        },
        separators=(",", ":"),
        sort_keys=True,
    )
    return f"{uri} {record.timestamp14} {blob}"


class ArchiveStore:
    """Capture store: single writer, any number of readers.

    Disk-backed stores flush and fsync every append, so a record is durable
    before `append` returns. At desk scale all records are also kept in
    memory; `open` reloads everything from disk.
    """

    def __init__(self, directory: Path | None, variant_config: VariantConfig):
        self._directory = directory
        self.variant_config = variant_config
        self._records: dict[int, ArchiveRecord] = {}
        self._by_uri: dict[str, list[IndexEntry]] = {}
        self._next_id = 1
        self._records_file = None
        self._index_file = None

    # -- construction --------------------------------------------------------

    @classmethod
    def in_memory(cls, variant_config: VariantConfig | None = None) -> "ArchiveStore":
        return cls(None, variant_config or VariantConfig())

    @classmethod
    def create(
        cls, directory: str | Path, variant_config: VariantConfig | None = None
    ) -> "ArchiveStore":
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        records_path = directory / RECORDS_NAME
        if records_path.exists():
            raise StoreError(f"archive already exists at {directory}")
        store = cls(directory, variant_config or VariantConfig())
        meta = {
            "format": "archivelab-store",
            "version": FORMAT_VERSION,
            "variant_config": store.variant_config.to_json(),
        }
        (directory / META_NAME).write_text(
            json.dumps(meta, indent=2) + "\n", encoding="utf-8"
        )
        store._open_files()
        return store

    @classmethod
    def open(cls, directory: str | Path) -> "ArchiveStore":
        directory = Path(directory)
        try:
            meta = json.loads((directory / META_NAME).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise StoreError(f"cannot read archive metadata: {exc}") from exc
        if meta.get("version") != FORMAT_VERSION:
            raise StoreError(f"unsupported archive version: {meta.get('version')}")
        store = cls(directory, VariantConfig.from_json(meta["variant_config"]))
        store._load_records()
        store._load_index()
        store._open_files()
        return store

    def _open_files(self) -> None:
        assert self._directory is not None
        self._records_file = open(self._directory / RECORDS_NAME, "ab")
        self._index_file = open(self._directory / INDEX_NAME, "a", encoding="utf-8")

    def _load_records(self) -> None:
        assert self._directory is not None
        path = self._directory / RECORDS_NAME
        if not path.exists():
            raise StoreError(f"missing {RECORDS_NAME} in {self._directory}")
        with open(path, "rb") as fh:
            while True:
                line = fh.readline()
                if not line:
                    break
                try:
                    header = json.loads(line)
                    body = fh.read(header["body_length"])
                    if len(body) != header["body_length"] or fh.read(1) != b"\n":
                        raise StoreError(f"truncated frame for record {header.get('id')}")
                    record = _record_from_frame(header, body)
                except (KeyError, ValueError) as exc:
                    raise StoreError(f"corrupt record frame: {exc}") from exc
                self._records[record.id] = record
        if self._records:
            self._next_id = max(self._records) + 1

    def _load_index(self) -> None:
        assert self._directory is not None
        path = self._directory / INDEX_NAME
        if not path.exists():
            raise StoreError(f"missing {INDEX_NAME} in {self._directory}")
        rows: list[tuple[str, str, dict]] = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split(" ", 2)
                if len(parts) != 3:
                    raise StoreError(f"index line {lineno} malformed: {line!r}")
                try:
                    rows.append((parts[0], parts[1], json.loads(parts[2])))
                except json.JSONDecodeError as exc:
                    raise StoreError(f"index line {lineno} malformed: {exc}") from exc
        rows.sort(key=lambda r: (r[0], r[1], r[2]["id"]))
        for uri, ts, blob in rows:
            entry = IndexEntry(
                parse_timestamp14(ts),
                VariantKey.from_json(blob["variant"]),
                int(blob["id"]),
            )
            self._by_uri.setdefault(uri, []).append(entry)

    # -- write path -----------------------------------------------------------

    def append(self, record: ArchiveRecord) -> int:
        """Append one capture; returns its assigned id.

        The record's variant key must already be derived. Duplicate
        (uri, datetime, variant) captures are allowed: append-only means
        append-only.
        """
        assigned = record.id if record.id is not None else self._next_id
        if record.id is None:
            record = replace(record, id=assigned)
        if assigned in self._records:
            raise StoreError(f"record id {assigned} already present")
        uri = str(record.uri)
        if self._records_file is not None:
            try:
                frame = _frame_header(record) + b"\n" + record.body + b"\n"
                self._records_file.write(frame)
                self._records_file.flush()
                os.fsync(self._records_file.fileno())
                self._index_file.write(_index_line(uri, record) + "\n")
                self._index_file.flush()
                os.fsync(self._index_file.fileno())
            except OSError as exc:
                raise StoreError(f"append of record {assigned} failed: {exc}") from exc
        self._records[assigned] = record
        entry = IndexEntry(record.datetime, record.variant_key, assigned)
        insort(
            self._by_uri.setdefault(uri, []), entry, key=lambda e: (e.datetime, e.id)
        )
        self._next_id = max(self._next_id, assigned + 1)
        return assigned

    # -- read path ------------------------------------------------------------

    def lookup(self, uri: CanonicalUri | str) -> list[IndexEntry]:
        """All captures of a canonical URI, ascending (datetime, id) order."""
        return list(self._by_uri.get(str(uri), ()))

    def get_record(self, record_id: int) -> ArchiveRecord:
        try:
            return self._records[record_id]
        except KeyError:
            raise StoreError(f"no record with id {record_id}") from None

    def iter_records(self) -> Iterator[ArchiveRecord]:
        for record_id in sorted(self._records):
            yield self._records[record_id]

    def uris(self) -> list[str]:
        return sorted(self._by_uri)

    def __len__(self) -> int:
        return len(self._records)

    def verify(self) -> list[str]:
        """Cross-check index rows against record frames; returns problems."""
        problems: list[str] = []
        seen_ids: set[int] = set()
        for uri, entries in self._by_uri.items():
            for entry in entries:
                seen_ids.add(entry.id)
                record = self._records.get(entry.id)
                if record is None:
                    problems.append(f"index names missing record {entry.id}")
                    continue
                if str(record.uri) != uri or record.datetime != entry.datetime:
                    problems.append(f"index row for record {entry.id} disagrees")
                rederived = derive_variant_key(
                    record.request_headers, record.response_headers, self.variant_config
                )
                if rederived != entry.variant_key:
                    problems.append(
                        f"variant key of record {entry.id} not reproducible"
                    )
        for record_id in self._records:
            if record_id not in seen_ids:
                problems.append(f"record {record_id} missing from index")
        return problems

    def close(self) -> None:
        if self._records_file is not None:
            self._records_file.close()
            self._records_file = None
        if self._index_file is not None:
            self._index_file.close()
            self._index_file = None

    def __enter__(self) -> "ArchiveStore":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
