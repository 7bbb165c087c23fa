"""Streaming readers for the physical data formats.

* container sets: a directory of ``<n>.json.gz`` files, each a gzip of
  ``{"items": [work, ...]}`` using Crossref field names;
* person archives: a ``.tar.gz`` holding one ORCID-style XML file per person;
* organization registries: a ``.zip`` holding one ROR-style JSON array;
* flat CSV reference tables.

Record-level problems are skipped and counted on the returned stream's
``warnings`` attribute; framing problems raise.
"""

from __future__ import annotations

import csv
import gzip
import json
import logging
import os
import re
import tarfile
import zipfile
import zlib
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Generic, Iterator, TypeVar
from xml.etree import ElementTree

from .errors import ContainerParseError, DomainError, EmptyContainerSetError, SchemaError
from .schema import TableSchema

log = logging.getLogger(__name__)

T = TypeVar("T")

CONTAINER_SUFFIX = ".json.gz"
ISSN_TYPES = ("electronic", "print", "alternative")
_CHUNK = 1 << 20
_MASK64 = (1 << 64) - 1


@dataclass
class AuthorRecord:
    given: str | None = None
    family: str | None = None
    orcid: str | None = None
    affiliations: list[str] = field(default_factory=list)


@dataclass
class ReferenceRecord:
    doi: str | None = None
    unstructured: str | None = None
    year: int | None = None


@dataclass
class FunderRecord:
    name: str
    doi: str | None = None
    awards: list[str] = field(default_factory=list)


@dataclass
class WorkRecord:
    doi: str
    title: str | None = None
    published_year: int | None = None
    published_month: int | None = None
    published_day: int | None = None
    container_title: str | None = None
    issns: list[tuple[str, str]] = field(default_factory=list)
    pages: str | None = None
    abstract: str | None = None
    authors: list[AuthorRecord] = field(default_factory=list)
    references: list[ReferenceRecord] = field(default_factory=list)
    funders: list[FunderRecord] = field(default_factory=list)
    subjects: list[str] = field(default_factory=list)
    links: list[str] = field(default_factory=list)

    def issn(self, kind: str) -> str | None:
        for value, issn_type in self.issns:
            if issn_type == kind:
                return value
        return None


@dataclass
class Affiliation:
    """An ORCID employment or education entry."""
    organization_name: str | None = None
    ror: str | None = None
    start_year: int | None = None
    end_year: int | None = None


@dataclass
class PersonRecord:
    orcid: str
    given_names: str | None = None
    family_name: str | None = None
    employments: list[Affiliation] = field(default_factory=list)
    educations: list[Affiliation] = field(default_factory=list)
    works: list[str] = field(default_factory=list)
    keywords: list[str] = field(default_factory=list)


@dataclass
class OrgRecord:
    ror: str
    name: str
    acronyms: list[str] = field(default_factory=list)
    aliases: list[str] = field(default_factory=list)
    parent: str | None = None
    country: str | None = None


class RecordStream(Generic[T]):
    """Single-consumer iterator that counts skipped or repaired records."""

    def __init__(self, factory: Callable[["RecordStream[T]"], Iterator[T]]):
        self.warnings = 0
        self._iterator = factory(self)

    def __iter__(self):
        return self

    def __next__(self) -> T:
        return next(self._iterator)

    def warn(self, message: str, *args) -> None:
        self.warnings += 1
        log.debug(message, *args)


# Identifiers ----------------------------------------------------------------

_ORCID = re.compile(r"(\d{4})-(\d{4})-(\d{4})-(\d{3}[\dX])\Z")


def orcid_checksum(base_digits: str) -> str:
    """ISO 7064 MOD 11-2 check character for the first 15 ORCID digits."""
    total = 0
    for digit in base_digits:
        total = (total + int(digit)) * 2
    result = (12 - total % 11) % 11
    return "X" if result == 10 else str(result)


def normalize_orcid(value: str | None) -> str | None:
    """Return the bare ``dddd-dddd-dddd-dddX`` form, or None if invalid."""
    if not value:
        return None
    value = value.strip().rsplit("/", 1)[-1].upper()
    if not _ORCID.match(value):
        return None
    digits = value.replace("-", "")
    if orcid_checksum(digits[:15]) != digits[15]:
        return None
    return value


# Container sets ---------------------------------------------------------------


@dataclass(frozen=True)
class ContainerSet:
    """Containers of a directory as (index, path) pairs.

    Indices of an enumerated set are dense and follow file-name order;
    sampled subsets keep the original indices.
    """

    root: Path
    containers: tuple[tuple[int, Path], ...]

    def __len__(self) -> int:
        return len(self.containers)

    def __iter__(self):
        return iter(self.containers)

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.containers)

    def path(self, index: int) -> Path:
        for i, p in self.containers:
            if i == index:
                return p
        raise DomainError(f"container index {index} not in set")


def enumerate_containers(root) -> ContainerSet:
    root = Path(root)
    names = sorted(
        entry.name for entry in os.scandir(root)
        if entry.name.endswith(CONTAINER_SUFFIX) and entry.is_file()
    )
    if not names:
        raise EmptyContainerSetError(f"{root}: no *{CONTAINER_SUFFIX} containers")
    return ContainerSet(root, tuple((i, root / n) for i, n in enumerate(names)))


def _decompress(path: Path) -> bytes:
    chunks = []
    offset = 0
    try:
        with gzip.open(path, "rb") as f:
            while chunk := f.read(_CHUNK):
                chunks.append(chunk)
                offset += len(chunk)
    except (OSError, EOFError, zlib.error) as e:
        raise ContainerParseError(path, offset, f"gzip: {e}") from e
    return b"".join(chunks)


def load_container_items(path) -> list:
    """Decompress and decode a container, returning its raw ``items`` list."""
    data = _decompress(Path(path))
    try:
        document = json.loads(data)
    except json.JSONDecodeError as e:
        raise ContainerParseError(path, e.pos, f"JSON: {e.msg}") from e
    except UnicodeDecodeError as e:
        raise ContainerParseError(path, e.start, "invalid UTF-8") from e
    if not isinstance(document, dict) or not isinstance(document.get("items"), list):
        raise ContainerParseError(path, 0, 'expected an object with an "items" array')
    return document["items"]


def _first(value):
    if isinstance(value, list):
        return value[0] if value and isinstance(value[0], str) else None
    return value if isinstance(value, str) else None


def _int_or_none(value):
    if isinstance(value, int) and not isinstance(value, bool):
        return value
    if isinstance(value, str) and value.strip().isdigit():
        return int(value)
    return None


def _date_parts(item):
    for key in ("published", "issued"):
        parts = (item.get(key) or {}).get("date-parts")
        if parts and isinstance(parts[0], list):
            values = [_int_or_none(v) for v in parts[0][:3]]
            values += [None] * (3 - len(values))
            # A later part is only meaningful if every earlier part is present
            for i in (1, 2):
                if values[i - 1] is None:
                    values[i] = None
            if values[0] is not None:
                return tuple(values)
    return None, None, None


def parse_work(item, stream: RecordStream | None = None) -> WorkRecord | None:
    """Convert one Crossref JSON work; None when it lacks a DOI."""

    def warn(message):
        if stream is not None:
            stream.warn(message)

    if not isinstance(item, dict):
        warn("work is not an object")
        return None
    doi = item.get("DOI")
    if not isinstance(doi, str) or not doi.strip():
        warn("work without DOI")
        return None
    year, month, day = _date_parts(item)
    issns = []
    for entry in item.get("issn-type") or []:
        if entry.get("type") in ISSN_TYPES and entry.get("value"):
            issns.append((entry["value"], entry["type"]))
    authors = []
    for a in item.get("author") or []:
        orcid = normalize_orcid(a.get("ORCID"))
        if a.get("ORCID") and orcid is None:
            warn("invalid ORCID dropped")
        affiliations = [
            aff["name"] for aff in a.get("affiliation") or []
            if isinstance(aff, dict) and aff.get("name")
        ]
        authors.append(AuthorRecord(a.get("given"), a.get("family"), orcid, affiliations))
    references = []
    for r in item.get("reference") or []:
        ref = ReferenceRecord(r.get("DOI"), r.get("unstructured"), _int_or_none(r.get("year")))
        if ref.doi is None and ref.unstructured is None:
            warn("reference without DOI or text")
            continue
        references.append(ref)
    funders = []
    for f in item.get("funder") or []:
        if not f.get("name"):
            warn("funder without name")
            continue
        funders.append(FunderRecord(f["name"], f.get("DOI"), list(f.get("award") or [])))
    return WorkRecord(
        doi=doi,
        title=_first(item.get("title")),
        published_year=year,
        published_month=month,
        published_day=day,
        container_title=_first(item.get("container-title")),
        issns=issns,
        pages=item.get("page"),
        abstract=item.get("abstract"),
        authors=authors,
        references=references,
        funders=funders,
        subjects=[s for s in item.get("subject") or [] if isinstance(s, str)],
        links=[link["URL"] for link in item.get("link") or [] if link.get("URL")],
    )


def read_container(source: ContainerSet, index: int) -> RecordStream[WorkRecord]:
    """Stream the works of one container in file order.

    The container is decoded when the stream is created, so framing errors
    surface immediately as :class:`ContainerParseError`.
    """
    items = load_container_items(source.path(index))

    def generate(stream):
        for item in items:
            work = parse_work(item, stream)
            if work is not None:
                yield work

    return RecordStream(generate)


def splitmix64(value: int) -> int:
    z = (value + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def container_selected(index: int, probability: float, seed: int) -> bool:
    uniform = (splitmix64((seed ^ index) & _MASK64) >> 11) / float(1 << 53)
    return uniform < probability


def sample_containers(source: ContainerSet, probability: float, seed: int) -> ContainerSet:
    """Keep each container independently with the given probability.

    The decision for a container depends only on (seed, index), so it is
    identical across runs and platforms.
    """
    if not 0.0 <= probability <= 1.0:
        raise DomainError(f"sampling probability {probability} not in [0, 1]")
    kept = tuple(
        (i, p) for i, p in source.containers if container_selected(i, probability, seed)
    )
    return ContainerSet(source.root, kept)


class ContainerCache:
    """Most-recently-used cache of converted containers, keyed by index.

    The capacity defaults to the ``CORPUSDB_CACHE`` environment variable,
    else 1.
    """

    def __init__(self, loader: Callable[[int], T], capacity: int | None = None):
        if capacity is None:
            capacity = int(os.environ.get("CORPUSDB_CACHE", "1"))
        self.capacity = max(1, capacity)
        self._loader = loader
        self._entries: OrderedDict[int, T] = OrderedDict()
        self.loads = 0

    def get(self, index: int) -> T:
        if index in self._entries:
            self._entries.move_to_end(index)
            return self._entries[index]
        value = self._loader(index)
        self.loads += 1
        self._entries[index] = value
        while len(self._entries) > self.capacity:
            self._entries.popitem(last=False)
        return value

    def clear(self) -> None:
        self._entries.clear()


# ORCID-style person archives ----------------------------------------------------


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _find(element, *path):
    """Descend through direct children matching local names."""
    for name in path:
        if element is None:
            return None
        element = next((c for c in element if _local(c.tag) == name), None)
    return element


def _text_of(element, *path):
    found = _find(element, *path)
    if found is None or found.text is None:
        return None
    return found.text.strip() or None


def _descendants(element, name):
    return [e for e in element.iter() if _local(e.tag) == name]


def _affiliation(summary) -> Affiliation:
    organization = _find(summary, "organization")
    ror = None
    disambiguated = _find(organization, "disambiguated-organization")
    if disambiguated is not None and (
        (_text_of(disambiguated, "disambiguation-source") or "").upper() == "ROR"
    ):
        ror = _text_of(disambiguated, "disambiguated-organization-identifier")
    return Affiliation(
        organization_name=_text_of(organization, "name"),
        ror=ror,
        start_year=_int_or_none(_text_of(summary, "start-date", "year")),
        end_year=_int_or_none(_text_of(summary, "end-date", "year")),
    )


def parse_person(xml: bytes) -> PersonRecord | None:
    root = ElementTree.fromstring(xml)
    orcid = normalize_orcid(_text_of(root, "orcid-identifier", "path"))
    if orcid is None:
        return None
    person = _find(root, "person")
    works = []
    for external in _descendants(root, "external-id"):
        if (_text_of(external, "external-id-type") or "").lower() == "doi":
            value = _text_of(external, "external-id-value")
            if value and value not in works:
                works.append(value)
    return PersonRecord(
        orcid=orcid,
        given_names=_text_of(person, "name", "given-names"),
        family_name=_text_of(person, "name", "family-name"),
        employments=[_affiliation(s) for s in _descendants(root, "employment-summary")],
        educations=[_affiliation(s) for s in _descendants(root, "education-summary")],
        works=works,
        keywords=[
            text for k in _descendants(root, "keyword")
            if (text := _text_of(k, "content"))
        ],
    )


def read_person_archive(path) -> RecordStream[PersonRecord]:
    """Stream persons from a tar.gz of XML files, skipping malformed entries."""

    def generate(stream):
        seen = set()
        with tarfile.open(path, "r|gz") as archive:
            for member in archive:
                if not member.isfile() or not member.name.endswith(".xml"):
                    continue
                data = archive.extractfile(member).read()
                try:
                    person = parse_person(data)
                except ElementTree.ParseError:
                    stream.warn("malformed XML in %s", member.name)
                    continue
                if person is None:
                    stream.warn("no valid ORCID in %s", member.name)
                    continue
                if person.orcid in seen:
                    stream.warn("duplicate ORCID %s", person.orcid)
                    continue
                seen.add(person.orcid)
                yield person

    return RecordStream(generate)


# ROR-style organization registries ----------------------------------------------


def _org_from_json(entry) -> OrgRecord | None:
    if not isinstance(entry, dict) or not entry.get("id") or not entry.get("name"):
        return None
    parent = next(
        (r.get("id") for r in entry.get("relationships") or []
         if r.get("type") == "Parent" and r.get("id")),
        None,
    )
    country = entry.get("country")
    if isinstance(country, dict):
        country = country.get("country_code")
    return OrgRecord(
        ror=entry["id"],
        name=entry["name"],
        acronyms=[a for a in entry.get("acronyms") or [] if a],
        aliases=[a for a in entry.get("aliases") or [] if a],
        parent=parent,
        country=country,
    )


def read_org_registry(path) -> RecordStream[OrgRecord]:
    """Stream organizations from the JSON array inside a zip file."""

    def generate(stream):
        with zipfile.ZipFile(path) as archive:
            name = next((n for n in archive.namelist() if n.endswith(".json")), None)
            if name is None:
                raise SchemaError(f"{path}: no JSON member")
            with archive.open(name) as f:
                entries = json.load(f)
        if not isinstance(entries, list):
            raise SchemaError(f"{path}: expected a JSON array")
        orgs = []
        for entry in entries:
            org = _org_from_json(entry)
            if org is None:
                stream.warn("organization without id or name")
            else:
                orgs.append(org)
        known = {o.ror for o in orgs}
        for org in orgs:
            if org.parent is not None and org.parent not in known:
                stream.warn("dangling parent %s of %s", org.parent, org.ror)
                org.parent = None
            yield org

    return RecordStream(generate)


# CSV tables ----------------------------------------------------------------------


def csv_columns(table: TableSchema) -> list[str]:
    """Columns expected in a table's CSV file: all but a synthetic ``id``."""
    return [c for c in table.column_names if c != "id"]


def read_csv_table(path, table: TableSchema) -> RecordStream[tuple]:
    """Stream rows of a headed RFC 4180 CSV file matching ``table``.

    Empty fields become None; integer-like columns are converted.
    """
    expected = csv_columns(table)
    converters = [
        int if table.column(c).semantic_kind in ("key", "integer", "date-part") else str
        for c in expected
    ]

    def generate(stream):
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header != expected:
                raise SchemaError(
                    f"{path}: expected columns {expected}, found {header}"
                )
            for line, row in enumerate(reader, start=2):
                if len(row) != len(expected):
                    stream.warn("%s:%d: wrong field count", path, line)
                    continue
                try:
                    yield tuple(
                        convert(v) if v != "" else None
                        for convert, v in zip(converters, row)
                    )
                except ValueError:
                    stream.warn("%s:%d: bad value", path, line)

    return RecordStream(generate)


def journal_issn_rows(journal_id: int, issn_print, issn_electronic, issn_additional):
    """Disaggregate a journal's ISSNs into (journal_id, issn, type) rows."""
    rows = []
    if issn_print:
        rows.append((journal_id, issn_print, "print"))
    if issn_electronic:
        rows.append((journal_id, issn_electronic, "electronic"))
    for issn in re.split(r"[;,]", issn_additional or ""):
        if issn.strip():
            rows.append((journal_id, issn.strip(), "alternative"))
    return rows
