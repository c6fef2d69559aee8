"""store: variant keys, the append-only record file, and the CDXJ index."""

from __future__ import annotations

import random
from datetime import timedelta

import pytest

from archivelab.http_core import Headers
from archivelab.store import (
    ArchiveStore,
    StoreError,
    VariantConfig,
    VariantKey,
    derive_variant_key,
    variant_matches,
    variant_value,
)
from conftest import START, make_record

CFG = VariantConfig()  # {lang} cookies, honor Vary, implied [cookie]


class TestDeriveVariantKey:
    def test_cookie_dimension_reduces_to_content_cookies(self):
        request = Headers([("cookie", "lang=kn; _sess=abc")])
        response = Headers([("vary", "Cookie")])
        key = derive_variant_key(request, response, CFG)
        assert key.pairs == (("cookie", "lang=kn"),)

    def test_no_vary_no_implied_is_empty(self):
        cfg = VariantConfig(implied_vary=())
        key = derive_variant_key(Headers([("cookie", "lang=kn")]), Headers(), cfg)
        assert key.is_empty

    def test_implied_cookie_dimension_with_absent_header(self):
        key = derive_variant_key(Headers(), Headers(), CFG)
        assert key.pairs == (("cookie", ""),)

    def test_vary_star_fingerprints_whole_request(self):
        request = Headers([("host", "x"), ("cookie", "lang=kn"), ("accept", "a"), ("accept", "b")])
        key = derive_variant_key(request, Headers([("vary", "*")]), CFG)
        assert key.pairs == (
            ("accept", "a, b"),
            ("cookie", "lang=kn"),
            ("host", "x"),
        )

    def test_honor_vary_false_uses_implied(self):
        request = Headers([("cookie", "lang=kn"), ("accept-language", "ur")])
        response = Headers([("vary", "Accept-Language")])
        cfg = VariantConfig(honor_vary=False, implied_vary=("cookie",))
        assert derive_variant_key(request, response, cfg).pairs == (("cookie", "lang=kn"),)

    def test_dimensions_sorted_and_values_normalized(self):
        request = Headers([("accept-language", "ur"), ("cookie", "b=2; lang=kn; a=1")])
        response = Headers([("vary", "Cookie, Accept-Language")])
        cfg = VariantConfig(content_cookie_names=frozenset({"lang", "a"}))
        key = derive_variant_key(request, response, cfg)
        assert key.pairs == (
            ("accept-language", "ur"),
            ("cookie", "a=1;lang=kn"),  # names sorted inside the value
        )

    def test_variant_value_multiple_cookie_headers(self):
        request = Headers([("cookie", "lang=kn"), ("cookie", "other=1; a=2")])
        cfg = VariantConfig(content_cookie_names=frozenset({"lang", "a"}))
        assert variant_value(request, "cookie", cfg) == "a=2;lang=kn"

    def test_variant_matches(self):
        key = VariantKey((("cookie", "lang=kn"),))
        assert variant_matches(key, Headers([("cookie", "lang=kn; _sess=zz")]), CFG)
        assert not variant_matches(key, Headers([("cookie", "lang=en")]), CFG)
        assert variant_matches(VariantKey(), Headers(), CFG)  # empty key matches all


class TestAppendAndLookup:
    def test_ids_increase_from_one(self):
        store = ArchiveStore.in_memory()
        ids = [store.append(make_record("https://a.example/", START)) for _ in range(3)]
        assert ids == [1, 2, 3]

    def test_duplicate_captures_both_kept(self):
        store = ArchiveStore.in_memory()
        record = make_record("https://a.example/", START)
        store.append(record)
        store.append(record)
        assert len(store.lookup("https://a.example/")) == 2

    def test_unknown_uri_empty(self):
        assert ArchiveStore.in_memory().lookup("https://nowhere.example/") == []

    def test_same_second_ties_ordered_by_id(self):
        store = ArchiveStore.in_memory()
        first = store.append(
            make_record("https://a.example/", START, request_cookie="lang=kn")
        )
        second = store.append(
            make_record("https://a.example/", START, request_cookie="lang=en")
        )
        entries = store.lookup("https://a.example/")
        assert [e.id for e in entries] == [first, second]
        assert {e.variant_key.pairs[0][1] for e in entries} == {"lang=kn", "lang=en"}

    def test_lookup_equals_linear_scan_oracle(self):
        rng = random.Random(1000)
        uris = [f"https://site{k}.example/p" for k in range(3)]
        for _ in range(1000):
            store = ArchiveStore.in_memory()
            for _ in range(rng.randrange(0, 9)):
                record = make_record(
                    rng.choice(uris),
                    START + timedelta(seconds=rng.randrange(-50, 50)),
                    lang=rng.choice(["en", "kn", None]),
                )
                store.append(record)
            probe = rng.choice(uris)
            expected = sorted(
                (
                    (r.datetime, r.id)
                    for r in store.iter_records()
                    if str(r.uri) == probe
                ),
            )
            got = [(e.datetime, e.id) for e in store.lookup(probe)]
            assert got == expected


class TestDiskFormat:
    def _populate(self, store):
        ids = []
        ids.append(store.append(make_record("https://a.example/", START, lang="kn")))
        ids.append(
            store.append(
                make_record(
                    "https://a.example/",
                    START + timedelta(seconds=40),
                    lang="en",
                    request_cookie="lang=en",
                )
            )
        )
        # binary body with embedded newlines must survive framing
        ids.append(
            store.append(
                make_record(
                    "https://b.example/x",
                    START,
                    lang=None,
                    body=b"\x00\n\xff{\"not\":\"json\"}\n\n",
                )
            )
        )
        return ids

    def test_round_trip_reopen_identical(self, tmp_path):
        with ArchiveStore.create(tmp_path / "arch", CFG) as store:
            self._populate(store)
            original = list(store.iter_records())
            original_lookup = {u: store.lookup(u) for u in store.uris()}
        with ArchiveStore.open(tmp_path / "arch") as reopened:
            assert list(reopened.iter_records()) == original
            assert {u: reopened.lookup(u) for u in reopened.uris()} == original_lookup
            assert reopened.variant_config == CFG
            assert reopened.verify() == []

    def test_append_after_reopen_continues_ids(self, tmp_path):
        with ArchiveStore.create(tmp_path / "arch") as store:
            self._populate(store)
        with ArchiveStore.open(tmp_path / "arch") as reopened:
            new_id = reopened.append(make_record("https://c.example/", START))
            assert new_id == 4
        with ArchiveStore.open(tmp_path / "arch") as again:
            assert len(again) == 4

    def test_index_lines_byte_sortable(self, tmp_path):
        with ArchiveStore.create(tmp_path / "arch") as store:
            self._populate(store)
        lines = (tmp_path / "arch" / "index.cdxj").read_text().splitlines()
        parsed = [(l.split(" ", 2)[0], l.split(" ", 2)[1]) for l in sorted(lines)]
        assert parsed == sorted(parsed)

    def test_create_refuses_existing_archive(self, tmp_path):
        ArchiveStore.create(tmp_path / "arch").close()
        with pytest.raises(StoreError):
            ArchiveStore.create(tmp_path / "arch")

    def test_open_missing_directory(self, tmp_path):
        with pytest.raises(StoreError):
            ArchiveStore.open(tmp_path / "missing")

    def test_verify_detects_index_tampering(self, tmp_path):
        with ArchiveStore.create(tmp_path / "arch", CFG) as store:
            store.append(
                make_record("https://a.example/", START, request_cookie="lang=kn")
            )
        index = tmp_path / "arch" / "index.cdxj"
        index.write_text(index.read_text().replace("lang=kn", "lang=XX"))
        with ArchiveStore.open(tmp_path / "arch") as tampered:
            problems = tampered.verify()
        assert problems and "not reproducible" in problems[0]

    def test_random_archives_round_trip(self, tmp_path):
        rng = random.Random(6006)
        for case in range(200):
            directory = tmp_path / f"arch{case}"
            with ArchiveStore.create(directory, CFG) as store:
                for _ in range(rng.randrange(1, 6)):
                    store.append(
                        make_record(
                            f"https://s{rng.randrange(3)}.example/p{rng.randrange(2)}",
                            START + timedelta(seconds=rng.randrange(0, 1000)),
                            lang=rng.choice(["en", "kn", "ur", None]),
                            body=bytes(rng.randrange(256) for _ in range(rng.randrange(0, 64))),
                            request_cookie=rng.choice([None, "lang=kn", "lang=en; _s=1"]),
                        )
                    )
                original = list(store.iter_records())
            with ArchiveStore.open(directory) as reopened:
                assert list(reopened.iter_records()) == original
