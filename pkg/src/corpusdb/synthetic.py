"""Deterministic synthetic data sets in the supported physical formats.

Used by the test-suite and by ``corpusdb synth`` for demonstrations.  All
generators are driven by an explicit seed.
"""

from __future__ import annotations

import csv
import gzip
import io
import json
import random
import tarfile
import zipfile
from pathlib import Path
from xml.sax.saxutils import escape

from .sources import (
    AuthorRecord,
    FunderRecord,
    OrgRecord,
    PersonRecord,
    Affiliation,
    ReferenceRecord,
    WorkRecord,
    orcid_checksum,
)

GIVEN = ["Ann", "Bo", "Chen", "Dimitris", "Eva", "Fatima", "Georg", "Hiro", "Ines", "Jun", "Y."]
FAMILY = ["Wang", "Smith", "Li", "Papadopoulos", "Garcia", "Kim", "Zhu", "Okafor", "Novak",
          "Rossi", "Nakamura", "Silva"]
WORDS = ["graph", "protein", "catalyst", "network", "software", "cancer", "quantum", "model",
         "learning", "soil", "climate", "memory", "enzyme", "query", "ocean"]
PHRASES = ["systematic review", "meta-analysis", "literature review", "bibliometric",
           "scientometric", "umbrella review", "mapping review", "COVID"]
ASJC = [
    (1000, "Multidisciplinary"),
    (1500, "General Chemical Engineering"),
    (1503, "Catalysis"),
    (1700, "General Computer Science"),
    (1712, "Software"),
    (2700, "General Medicine"),
    (2730, "Oncology"),
    (3100, "General Physics and Astronomy"),
]
JOURNALS = [
    ("Journal of Graphs", "1111-1111", "1111-2222", ""),
    ("Catalysis Letters", "2222-1111", None, "2222-9999"),
    ("Software Practice", "3333-1111", "3333-2222", ""),
    ("Oncology Reports", None, "4444-2222", ""),
    ("Physics Notes", "5555-1111", "5555-2222", "5555-3333; 5555-4444"),
    ("General Medicine Today", "6666-1111", "6666-2222", ""),
]
FUNDERS = [
    ("National Science Foundation", "10.13039/100000001"),
    ("National Institutes of Health", "10.13039/100000002"),
    ("Wellcome Trust", "10.13039/100004440"),
    ("European Research Council", None),
]
# (ror suffix, name, acronyms, aliases, parent suffix, country)
ORGANIZATIONS = [
    ("0univ001", "University of Athens", ["UoA"], ["National and Kapodistrian University"], None, "GR"),
    ("0hosp002", "Athens University Hospital", [], ["Attikon Hospital"], "0univ001", "GR"),
    ("0clin003", "Attikon Cardiology Clinic", [], [], "0hosp002", "GR"),
    ("0eth0004", "ETH Zurich", ["ETHZ"], ["Swiss Federal Institute of Technology"], None, "CH"),
    ("0mit0005", "Massachusetts Institute of Technology", ["MIT"], [], None, "US"),
    ("0ucs0006", "University of California System", [], [], None, "US"),
    ("0ucb0007", "University of California, Berkeley", ["UCB"], [], "0ucs0006", "US"),
    ("0mofa008", "Ministry of Foreign Affairs", [], [], None, "GR"),
    ("0aico009", "AI Corporation", ["AI"], [], None, "US"),
]
AFFILIATION_TEXTS = [
    "Department of Informatics, University of Athens, Greece",
    "Athens University Hospital, Athens, Greece",
    "Attikon Cardiology Clinic, Haidari",
    "ETH Zurich, Switzerland",
    "CSAIL, Massachusetts Institute of Technology, Cambridge MA",
    "University of California, Berkeley, CA",
    "Ministry of Foreign Affairs, Athens",
    "Independent Researcher",
    "Department of Physics, Nowhere Institute",
]
ROR_PREFIX = "https://ror.org/"


def random_orcid(rng: random.Random) -> str:
    digits = "".join(str(rng.randrange(10)) for _ in range(15))
    digits += orcid_checksum(digits)
    return "-".join(digits[i:i + 4] for i in range(0, 16, 4))


def work_doi(container: int, ordinal: int) -> str:
    return f"10.5555/c{container:04d}.{ordinal:05d}"


def _title(rng):
    words = rng.sample(WORDS, 3)
    if rng.random() < 0.3:
        words.insert(rng.randrange(4), rng.choice(PHRASES))
    return " ".join(words).capitalize()


def _pages(rng):
    kind = rng.random()
    if kind < 0.25:
        return None
    if kind < 0.35:
        return f"e{rng.randrange(1000, 9999)}"
    if kind < 0.4:
        return "234-2366"
    start = rng.randrange(1, 500)
    return f"{start}-{start + rng.randrange(0, 20)}"


def make_works(n_containers: int, works_per_container: int, seed: int,
               orcid_pool: list[tuple[str, str, str]] | None = None) -> list[list[WorkRecord]]:
    """Build container contents in memory.

    References point to works anywhere in the set (so some cross container
    boundaries), to unknown DOIs, or carry only unstructured text.
    """
    rng = random.Random(seed)
    if orcid_pool is None:
        orcid_pool = person_pool(seed, 60)
    all_dois = [work_doi(c, i) for c in range(n_containers) for i in range(works_per_container)]
    containers = []
    for c in range(n_containers):
        works = []
        for i in range(works_per_container):
            year = rng.choice([None] + list(range(2015, 2023)) * 3)
            month = rng.randrange(1, 13) if year and rng.random() < 0.8 else None
            day = rng.randrange(1, 29) if month and rng.random() < 0.7 else None
            title, issn_print, issn_electronic, _ = rng.choice(JOURNALS)
            issns = []
            if issn_print:
                issns.append((issn_print, "print"))
            if issn_electronic and rng.random() < 0.8:
                issns.append((issn_electronic, "electronic"))
            authors = []
            for _ in range(rng.randrange(0, 5)):
                if rng.random() < 0.3:
                    orcid, given, family = rng.choice(orcid_pool)
                else:
                    orcid, given, family = None, rng.choice(GIVEN), rng.choice(FAMILY)
                affiliations = rng.sample(AFFILIATION_TEXTS, rng.randrange(0, 3))
                authors.append(AuthorRecord(given, family, orcid, affiliations))
            references = []
            for _ in range(rng.randrange(0, 9)):
                kind = rng.random()
                if kind < 0.75:
                    doi = rng.choice(all_dois)
                    references.append(ReferenceRecord(doi, None, rng.choice([None, 2010, 2018])))
                elif kind < 0.9:
                    references.append(ReferenceRecord(f"10.9999/missing.{rng.randrange(50)}"))
                else:
                    references.append(ReferenceRecord(None, f"Someone. {_title(rng)}. 1999"))
            funders = []
            for _ in range(rng.choice([0, 0, 0, 1, 2])):
                name, doi = rng.choice(FUNDERS)
                awards = [f"AW-{rng.randrange(10000)}" for _ in range(rng.randrange(0, 3))]
                funders.append(FunderRecord(name, doi, awards))
            works.append(WorkRecord(
                doi=work_doi(c, i),
                title=_title(rng),
                published_year=year,
                published_month=month,
                published_day=day,
                container_title=title,
                issns=issns,
                pages=_pages(rng),
                abstract=f"We study {rng.choice(WORDS)}." if rng.random() < 0.2 else None,
                authors=authors,
                references=references,
                funders=funders,
                subjects=[d for _, d in rng.sample(ASJC, rng.randrange(0, 3))],
                links=[f"https://example.org/{c}/{i}.pdf"] if rng.random() < 0.5 else [],
            ))
        containers.append(works)
    return containers


def work_to_json(w: WorkRecord) -> dict:
    """Serialize a work with Crossref field names."""
    item = {"DOI": w.doi}
    if w.title is not None:
        item["title"] = [w.title]
    if w.published_year is not None:
        parts = [w.published_year, w.published_month, w.published_day]
        item["published"] = {"date-parts": [[p for p in parts if p is not None]]}
    if w.container_title is not None:
        item["container-title"] = [w.container_title]
    if w.issns:
        item["issn-type"] = [{"value": v, "type": t} for v, t in w.issns]
        item["ISSN"] = [v for v, _ in w.issns]
    if w.pages is not None:
        item["page"] = w.pages
    if w.abstract is not None:
        item["abstract"] = w.abstract
    if w.authors:
        item["author"] = []
        for a in w.authors:
            author = {"given": a.given, "family": a.family, "sequence": "additional",
                      "affiliation": [{"name": n} for n in a.affiliations]}
            if a.orcid:
                author["ORCID"] = "http://orcid.org/" + a.orcid
            item["author"].append(author)
    if w.references:
        item["reference"] = []
        for k, r in enumerate(w.references):
            ref = {"key": f"ref{k}"}
            if r.doi is not None:
                ref["DOI"] = r.doi
            if r.unstructured is not None:
                ref["unstructured"] = r.unstructured
            if r.year is not None:
                ref["year"] = str(r.year)
            item["reference"].append(ref)
    if w.funders:
        item["funder"] = []
        for f in w.funders:
            funder = {"name": f.name, "award": list(f.awards)}
            if f.doi:
                funder["DOI"] = f.doi
            item["funder"].append(funder)
    if w.subjects:
        item["subject"] = list(w.subjects)
    if w.links:
        item["link"] = [{"URL": u, "content-type": "application/pdf"} for u in w.links]
    return item


def write_container(path, works: list[WorkRecord], extra_items=()) -> None:
    document = {"items": [work_to_json(w) for w in works] + list(extra_items)}
    with gzip.open(path, "wt", encoding="utf-8") as f:
        json.dump(document, f)


def write_container_set(root, n_containers: int = 10, works_per_container: int = 100,
                        seed: int = 0) -> list[list[WorkRecord]]:
    """Write ``<n>.json.gz`` containers and return their in-memory contents."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    containers = make_works(n_containers, works_per_container, seed)
    width = len(str(max(n_containers - 1, 0)))
    for c, works in enumerate(containers):
        # Zero-padded names keep file-name order equal to numeric order
        write_container(root / f"{c:0{width}d}.json.gz", works)
    return containers


def person_pool(seed: int, n: int) -> list[tuple[str, str, str]]:
    rng = random.Random(seed + 1)
    return [(random_orcid(rng), rng.choice(GIVEN), rng.choice(FAMILY)) for _ in range(n)]


def make_persons(pool, seed: int = 0) -> list[PersonRecord]:
    rng = random.Random(seed)
    persons = []
    for orcid, given, family in pool:
        org = rng.choice(ORGANIZATIONS)
        persons.append(PersonRecord(
            orcid=orcid, given_names=given, family_name=family,
            employments=[Affiliation(org[1], ROR_PREFIX + org[0], 2015, None)],
            educations=[Affiliation("Some College", None, 2005, 2010)] if rng.random() < 0.5 else [],
            works=[work_doi(0, rng.randrange(10))],
            keywords=rng.sample(WORDS, 2),
        ))
    return persons


def _affiliation_xml(tag, a: Affiliation) -> str:
    ror = ""
    if a.ror:
        ror = (
            "<common:disambiguated-organization>"
            f"<common:disambiguated-organization-identifier>{escape(a.ror)}"
            "</common:disambiguated-organization-identifier>"
            "<common:disambiguation-source>ROR</common:disambiguation-source>"
            "</common:disambiguated-organization>"
        )
    end = f"<common:end-date><common:year>{a.end_year}</common:year></common:end-date>" if a.end_year else ""
    start = f"<common:start-date><common:year>{a.start_year}</common:year></common:start-date>" if a.start_year else ""
    return (
        f"<{tag}:{tag}-summary>{start}{end}<common:organization>"
        f"<common:name>{escape(a.organization_name or '')}</common:name>{ror}"
        f"</common:organization></{tag}:{tag}-summary>"
    )


def person_to_xml(p: PersonRecord) -> str:
    """Render a person as an ORCID-style namespaced XML record."""
    keywords = "".join(
        f"<keyword:keyword><keyword:content>{escape(k)}</keyword:content></keyword:keyword>"
        for k in p.keywords
    )
    works = "".join(
        "<work:work-summary><common:external-ids><common:external-id>"
        "<common:external-id-type>doi</common:external-id-type>"
        f"<common:external-id-value>{escape(d)}</common:external-id-value>"
        "</common:external-id></common:external-ids></work:work-summary>"
        for d in p.works
    )
    return (
        '<?xml version="1.0" encoding="UTF-8"?>'
        '<record:record xmlns:record="http://www.orcid.org/ns/record" '
        'xmlns:common="http://www.orcid.org/ns/common" '
        'xmlns:person="http://www.orcid.org/ns/person" '
        'xmlns:personal-details="http://www.orcid.org/ns/personal-details" '
        'xmlns:keyword="http://www.orcid.org/ns/keyword" '
        'xmlns:activities="http://www.orcid.org/ns/activities" '
        'xmlns:employment="http://www.orcid.org/ns/employment" '
        'xmlns:education="http://www.orcid.org/ns/education" '
        'xmlns:work="http://www.orcid.org/ns/work">'
        f"<common:orcid-identifier><common:path>{p.orcid}</common:path></common:orcid-identifier>"
        "<person:person><person:name>"
        f"<personal-details:given-names>{escape(p.given_names or '')}</personal-details:given-names>"
        f"<personal-details:family-name>{escape(p.family_name or '')}</personal-details:family-name>"
        f"</person:name><keyword:keywords>{keywords}</keyword:keywords></person:person>"
        "<activities:activities-summary>"
        "<activities:employments>"
        + "".join(_affiliation_xml("employment", a) for a in p.employments)
        + "</activities:employments><activities:educations>"
        + "".join(_affiliation_xml("education", a) for a in p.educations)
        + f"</activities:educations><activities:works>{works}</activities:works>"
        "</activities:activities-summary></record:record>"
    )


def write_person_archive(path, persons: list[PersonRecord], extra_members=()) -> None:
    """Write a tar.gz with one XML file per person plus raw ``(name, bytes)`` extras."""
    with tarfile.open(path, "w:gz") as archive:
        members = [(f"orcid/{p.orcid[-3:]}/{p.orcid}.xml", person_to_xml(p).encode())
                   for p in persons]
        for name, data in members + list(extra_members):
            info = tarfile.TarInfo(name)
            info.size = len(data)
            info.mtime = 0
            archive.addfile(info, io.BytesIO(data))


def organizations() -> list[OrgRecord]:
    return [
        OrgRecord(ROR_PREFIX + suffix, name, list(acronyms), list(aliases),
                  ROR_PREFIX + parent if parent else None, country)
        for suffix, name, acronyms, aliases, parent, country in ORGANIZATIONS
    ]


def org_to_json(o: OrgRecord) -> dict:
    return {
        "id": o.ror,
        "name": o.name,
        "acronyms": o.acronyms,
        "aliases": o.aliases,
        "relationships": [{"type": "Parent", "label": "", "id": o.parent}] if o.parent else [],
        "country": {"country_code": o.country, "country_name": ""},
    }


def write_org_registry(path, orgs: list[OrgRecord]) -> None:
    with zipfile.ZipFile(path, "w") as archive:
        archive.writestr("ror-data.json", json.dumps([org_to_json(o) for o in orgs]))


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


def write_reference_files(root) -> dict[str, Path]:
    """Write journal, funder, open-access journal, and ASJC CSV files."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    paths = {
        "journals": root / "journals.csv",
        "funders": root / "funders.csv",
        "doaj": root / "doaj.csv",
        "asjc": root / "asjc.csv",
    }
    write_csv(paths["journals"], ["title", "issn_print", "issn_electronic", "issn_additional"],
              [(t, p or "", e or "", a) for t, p, e, a in JOURNALS])
    write_csv(paths["funders"], ["uri", "name"],
              [(f"http://dx.doi.org/{d}", n) for n, d in FUNDERS if d])
    write_csv(paths["doaj"], ["title", "issn_print", "issn_electronic", "publisher", "license"],
              [(JOURNALS[2][0], JOURNALS[2][1], JOURNALS[2][2], "Open Press", "CC BY")])
    write_csv(paths["asjc"], ["code", "description"], ASJC)
    return paths


def write_dataset(root, n_containers: int = 10, works_per_container: int = 100,
                  seed: int = 0) -> dict[str, Path]:
    """Write a complete synthetic data set under ``root``."""
    root = Path(root)
    write_container_set(root / "crossref", n_containers, works_per_container, seed)
    paths = write_reference_files(root)
    paths["crossref"] = root / "crossref"
    paths["orcid"] = root / "orcid.tar.gz"
    pool = person_pool(seed, 60)
    extra = person_pool(seed + 100, 20)
    write_person_archive(paths["orcid"], make_persons(pool + extra, seed))
    paths["ror"] = root / "ror.zip"
    write_org_registry(paths["ror"], organizations())
    return paths
