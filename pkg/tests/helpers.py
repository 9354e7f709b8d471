"""Shared fixture builders for the test suite."""

from __future__ import annotations

import json
from pathlib import Path

from geobench import Corpus, Document, GazetteerEntry, Gazetteer, GeoPoint, GoldToponym, save_corpus


def small_gazetteer() -> Gazetteer:
    """Five entries with one ambiguous name ("Paris") and one nested name pair."""
    entries = [
        GazetteerEntry(1, "Paris", ("Paname",), GeoPoint(48.8566, 2.3522), "P", "PPLC", 2140000, "FR"),
        GazetteerEntry(2, "Paris", (), GeoPoint(33.6609, -95.5555), "P", "PPL", 25000, "US"),
        GazetteerEntry(3, "Berlin", (), GeoPoint(52.52, 13.405), "P", "PPLC", 3645000, "DE"),
        GazetteerEntry(4, "New York City", ("New York",), GeoPoint(40.7128, -74.006), "P", "PPL", 8400000, "US"),
        GazetteerEntry(5, "York", (), GeoPoint(53.96, -1.08), "P", "PPL", 153717, "GB"),
    ]
    return Gazetteer.from_entries(entries)


def planted_names(n: int) -> list[str]:
    """Invented, unambiguous, capitalized single-token place names."""
    return [f"Zq{chr(ord('a') + i % 26)}{chr(ord('a') + i // 26)}ton".capitalize() for i in range(n)]


def smoke_corpus_and_gazetteer(n: int = 20, name: str = "smoke"):
    """A corpus of n documents, each containing exactly one planted toponym.

    The gazetteer holds exactly the planted names, so the dictionary
    recognizer finds each gold span and nothing else, and the gold points
    equal the gazetteer points.
    """
    names = planted_names(n)
    entries = []
    documents = []
    for i, place in enumerate(names):
        point = GeoPoint(-60.0 + i * 5.7 % 120, -170.0 + i * 16.3 % 340)
        entries.append(GazetteerEntry(100 + i, place, (), point, "P", "PPL", 1000 + i, "XX"))
        text = f"Flood warnings were issued near {place} on Tuesday."
        start = text.index(place)
        gold = (GoldToponym(start, start + len(place), place, point=point),)
        documents.append(Document(f"doc-{i:03d}", text, gold, source=name))
    corpus = Corpus(name=name, documents=tuple(documents), completeness="complete")
    return corpus, Gazetteer.from_entries(entries)


def write_corpus_files(corpus: Corpus, directory: Path) -> tuple[Path, Path]:
    """Write corpus + manifest under directory; returns (corpus_path, manifest_path)."""
    corpus_path = directory / f"{corpus.name}.jsonl"
    manifest_path = directory / f"{corpus.name}.manifest.json"
    save_corpus(corpus, corpus_path)
    manifest_path.write_text(
        json.dumps({"name": corpus.name, "completeness": corpus.completeness}), encoding="utf-8"
    )
    return corpus_path, manifest_path


def gold_replay_fixture(corpus: Corpus) -> dict:
    """Wire-format predictions replaying the gold annotations exactly."""
    fixture = {}
    for doc in corpus.documents:
        items = []
        for top in doc.gold:
            item = {"start": top.start, "end": top.end, "name": top.name}
            if top.point is not None:
                item["lat"] = top.point.lat
                item["lon"] = top.point.lon
            items.append(item)
        fixture[doc.id] = items
    return fixture


REPLAY_CHILD = """\
import json, sys

fixture = json.load(open(sys.argv[1], encoding="utf-8"))
for line in sys.stdin:
    request = json.loads(line)
    print(json.dumps({"id": request["id"], "toponyms": fixture.get(request["id"], [])}), flush=True)
"""


def write_replay_child(directory: Path, fixture: dict) -> list[str]:
    """Materialize a child process speaking the line protocol from a fixture map."""
    script = directory / "replay_child.py"
    data = directory / "replay_fixture.json"
    script.write_text(REPLAY_CHILD, encoding="utf-8")
    data.write_text(json.dumps(fixture), encoding="utf-8")
    import sys

    return [sys.executable, str(script), str(data)]


def geonames_row(
    entry_id: int,
    name: str,
    lat: float,
    lon: float,
    population: int = 0,
    alternates: str = "",
    feature_class: str = "P",
    feature_code: str = "PPL",
    country: str = "XX",
) -> str:
    """One 19-column GeoNames-layout TSV line."""
    cols = [""] * 19
    cols[0] = str(entry_id)
    cols[1] = name
    cols[2] = name  # asciiname, unused
    cols[3] = alternates
    cols[4] = str(lat)
    cols[5] = str(lon)
    cols[6] = feature_class
    cols[7] = feature_code
    cols[8] = country
    cols[14] = str(population)
    return "\t".join(cols)
