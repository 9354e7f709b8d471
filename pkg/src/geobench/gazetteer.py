"""Gazetteer ingestion and candidate lookup by normalized name.

Reads tab-separated place tables, either in the standard 19-column GeoNames
layout or with a user-supplied column map, and builds an in-memory index
from normalized names (primary and alternate) to entries. The built
gazetteer is immutable and safe for unlimited concurrent readers.
"""

from __future__ import annotations

import hashlib
import json
import math
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import GeoPoint

# Zero-based column indices of the GeoNames allCountries.txt layout.
GEONAMES_COLUMNS = {
    "id": 0,
    "name": 1,
    "alternates": 3,
    "lat": 4,
    "lon": 5,
    "feature_class": 6,
    "feature_code": 7,
    "country": 8,
    "population": 14,
}
_REQUIRED_COLUMNS = ("id", "name", "lat", "lon")


class GazetteerError(Exception):
    """A gazetteer could not be built or loaded."""


@dataclass(frozen=True, slots=True)
class GazetteerEntry:
    id: int
    primary_name: str
    alternate_names: tuple[str, ...]
    point: GeoPoint
    feature_class: str = ""
    feature_code: str = ""
    population: int = 0
    country: str = ""

    def names(self):
        yield self.primary_name
        yield from self.alternate_names


@dataclass(slots=True)
class IngestStats:
    """Tally of rows seen and skipped while ingesting a place table."""

    rows_read: int = 0
    rows_ingested: int = 0
    rows_skipped: int = 0
    skip_reasons: dict[str, int] = field(default_factory=dict)

    def skip(self, reason: str) -> None:
        self.rows_skipped += 1
        self.skip_reasons[reason] = self.skip_reasons.get(reason, 0) + 1


def normalize_name(name: str, fold_diacritics: bool = False) -> str:
    """Trim, collapse internal whitespace, and case-fold a place name.

    With `fold_diacritics`, combining marks are stripped after canonical
    decomposition ("São Paulo" -> "sao paulo"). Idempotent under both flags.
    """
    out = " ".join(name.split()).casefold()
    if fold_diacritics:
        out = "".join(c for c in unicodedata.normalize("NFD", out) if not unicodedata.combining(c))
    return out


class Gazetteer:
    """Immutable place table with a normalized-name candidate index.

    The index maps every normalized primary and alternate name to the ids
    of the entries carrying it; posting lists are kept in ascending id
    order so that downstream tie-breaking is reproducible.
    """

    def __init__(self, entries: dict[int, GazetteerEntry], index: dict[str, list[int]], fold_diacritics: bool):
        self.entries = entries
        self.index = index
        self.fold_diacritics = fold_diacritics
        self._digest: str | None = None

    @classmethod
    def from_entries(cls, entries, fold_diacritics: bool = False) -> "Gazetteer":
        """Build a gazetteer from GazetteerEntry values, validating each."""
        by_id: dict[int, GazetteerEntry] = {}
        index: dict[str, list[int]] = {}
        for entry in entries:
            if entry.id in by_id:
                raise GazetteerError(f"duplicate entry id {entry.id}")
            if not entry.primary_name:
                raise GazetteerError(f"entry {entry.id}: empty primary name")
            if entry.population < 0:
                raise GazetteerError(f"entry {entry.id}: negative population")
            if not entry.point.is_valid():
                raise GazetteerError(f"entry {entry.id}: coordinate out of range: {entry.point}")
            by_id[entry.id] = entry
            for raw_name in entry.names():
                key = normalize_name(raw_name, fold_diacritics)
                if not key:
                    continue
                postings = index.setdefault(key, [])
                if not postings or postings[-1] != entry.id:
                    postings.append(entry.id)
        for postings in index.values():
            postings.sort()
        return cls(by_id, index, fold_diacritics)

    def lookup(self, name: str) -> list[GazetteerEntry]:
        """Entries whose primary or alternate normalized name equals the query, ascending id."""
        ids = self.index.get(normalize_name(name, self.fold_diacritics), ())
        return [self.entries[i] for i in ids]

    def __len__(self) -> int:
        return len(self.entries)

    def digest(self) -> str:
        """Content digest over all entries and the fold flag (memoized)."""
        if self._digest is None:
            h = hashlib.sha256()
            h.update(f"fold={self.fold_diacritics}\n".encode())
            for entry_id in sorted(self.entries):
                e = self.entries[entry_id]
                h.update(
                    (
                        f"{e.id}\t{e.primary_name}\t{','.join(e.alternate_names)}\t"
                        f"{e.point.lat!r}\t{e.point.lon!r}\t{e.feature_class}\t"
                        f"{e.feature_code}\t{e.population}\t{e.country}\n"
                    ).encode("utf-8")
                )
            self._digest = h.hexdigest()
        return self._digest


def lookup(gazetteer: Gazetteer, name: str) -> list[GazetteerEntry]:
    return gazetteer.lookup(name)


def _check_schema(schema) -> dict:
    if schema == "geonames":
        return GEONAMES_COLUMNS
    if not isinstance(schema, dict):
        raise GazetteerError(f"schema must be 'geonames' or a column map, got {schema!r}")
    for key in _REQUIRED_COLUMNS:
        if key not in schema:
            raise GazetteerError(f"column map missing required key {key!r}")
    for key, col in schema.items():
        if not isinstance(col, int) or col < 0:
            raise GazetteerError(f"column map entry {key!r} must be a non-negative integer, got {col!r}")
    return schema


def ingest_gazetteer(
    path: str | Path, schema="geonames", fold_diacritics: bool = False
) -> tuple[Gazetteer, IngestStats]:
    """Ingest a tab-separated place table.

    `schema` is "geonames" for the 19-column GeoNames layout or a dict of
    zero-based column indices with at least id/name/lat/lon (optional:
    alternates, population, feature_class, feature_code, country). Rows
    violating field constraints are skipped and tallied in the returned
    IngestStats, not fatal; an unreadable file or zero valid rows is.
    """
    cols = _check_schema(schema)
    id_c, name_c = cols["id"], cols["name"]
    lat_c, lon_c = cols["lat"], cols["lon"]
    alt_c = cols.get("alternates")
    pop_c = cols.get("population")
    fcl_c = cols.get("feature_class")
    fco_c = cols.get("feature_code")
    cty_c = cols.get("country")
    max_col = max(c for c in cols.values())

    stats = IngestStats()
    entries: list[GazetteerEntry] = []
    seen_ids: set[int] = set()
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise GazetteerError(f"cannot read gazetteer file {path}: {exc}") from exc
    with fh:
        for line in fh:
            stats.rows_read += 1
            parts = line.rstrip("\n").split("\t")
            if len(parts) <= max_col:
                stats.skip("short row")
                continue
            try:
                entry_id = int(parts[id_c])
            except ValueError:
                stats.skip("bad id")
                continue
            if entry_id in seen_ids:
                stats.skip("duplicate id")
                continue
            name = parts[name_c].strip()
            if not name:
                stats.skip("empty name")
                continue
            try:
                lat = float(parts[lat_c])
                lon = float(parts[lon_c])
            except ValueError:
                stats.skip("bad coordinate")
                continue
            if not (math.isfinite(lat) and math.isfinite(lon) and -90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
                stats.skip("coordinate out of range")
                continue
            population = 0
            if pop_c is not None and parts[pop_c]:
                try:
                    population = int(parts[pop_c])
                except ValueError:
                    stats.skip("bad population")
                    continue
                if population < 0:
                    stats.skip("bad population")
                    continue
            alternates = ()
            if alt_c is not None and parts[alt_c]:
                alternates = tuple(a.strip() for a in parts[alt_c].split(",") if a.strip())
            seen_ids.add(entry_id)
            entries.append(
                GazetteerEntry(
                    id=entry_id,
                    primary_name=name,
                    alternate_names=alternates,
                    point=GeoPoint(lat, lon),
                    feature_class=parts[fcl_c].strip() if fcl_c is not None else "",
                    feature_code=parts[fco_c].strip() if fco_c is not None else "",
                    population=population,
                    country=parts[cty_c].strip() if cty_c is not None else "",
                )
            )
            stats.rows_ingested += 1
    if not entries:
        raise GazetteerError(f"no valid rows in gazetteer file {path}")
    return Gazetteer.from_entries(entries, fold_diacritics), stats


def save_index(gazetteer: Gazetteer, path: str | Path) -> None:
    """Write a built gazetteer to a JSON-lines file reloadable by load_index."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"format": "geobench-index", "fold_diacritics": gazetteer.fold_diacritics}) + "\n")
        for entry_id in sorted(gazetteer.entries):
            e = gazetteer.entries[entry_id]
            fh.write(
                json.dumps(
                    {
                        "id": e.id,
                        "name": e.primary_name,
                        "alternates": list(e.alternate_names),
                        "lat": e.point.lat,
                        "lon": e.point.lon,
                        "feature_class": e.feature_class,
                        "feature_code": e.feature_code,
                        "population": e.population,
                        "country": e.country,
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )


def load_index(path: str | Path) -> Gazetteer:
    """Reload a gazetteer written by save_index."""
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise GazetteerError(f"cannot read index file {path}: {exc}") from exc
    with fh:
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise GazetteerError(f"malformed index header in {path}: {exc}") from None
        if not isinstance(header, dict) or header.get("format") != "geobench-index":
            raise GazetteerError(f"{path} is not a saved gazetteer index")
        entries = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                entries.append(
                    GazetteerEntry(
                        id=int(raw["id"]),
                        primary_name=raw["name"],
                        alternate_names=tuple(raw.get("alternates", ())),
                        point=GeoPoint(float(raw["lat"]), float(raw["lon"])),
                        feature_class=raw.get("feature_class", ""),
                        feature_code=raw.get("feature_code", ""),
                        population=int(raw.get("population", 0)),
                        country=raw.get("country", ""),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise GazetteerError(f"{path}:{lineno}: malformed index entry: {exc}") from None
    if not entries:
        raise GazetteerError(f"no entries in index file {path}")
    return Gazetteer.from_entries(entries, header.get("fold_diacritics", False))
