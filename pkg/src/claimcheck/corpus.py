"""Data model and ingestion for relations, documents, claims, and prior checks.

A corpus bundles everything one verification session needs: keyed numeric
tables, the sectioned document holding the claims, the claims themselves,
and (for training / simulation) prior check annotations.
"""
from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence


class CorpusError(ValueError):
    """Raised on malformed corpus inputs (bad cells, duplicate keys, bad claims)."""


DEFAULT_TOLERANCE = 0.05

COMPARISONS = ("<", "=", "!=", ">")

# Thousands separators seen in source tables: plain space, non-breaking
# space, comma.  "22 209" and "22,209" both mean 22209.
_SEPARATORS = re.compile(r"[\s ,]")


def parse_numeric_cell(text: str) -> float:
    """Parse a table cell as a number, stripping thousands separators."""
    cleaned = _SEPARATORS.sub("", text.strip())
    if not cleaned:
        raise CorpusError("empty cell")
    try:
        return float(cleaned)
    except ValueError:
        raise CorpusError(f"non-numeric cell {text!r}") from None


@dataclass
class Relation:
    """A keyed table: one key column plus named numeric attributes."""

    name: str
    key_attribute: str
    attributes: tuple[str, ...]
    rows: dict[str, dict[str, float]]

    def validate(self) -> None:
        attr_set = set(self.attributes)
        if any(not a for a in self.attributes):
            raise CorpusError(f"relation {self.name}: empty attribute label")
        for key, cells in self.rows.items():
            if set(cells) != attr_set:
                raise CorpusError(
                    f"relation {self.name}: row {key!r} does not match attribute set"
                )

    def cell(self, key: str, attribute: str) -> float:
        return self.rows[key][attribute]

    def has_cell(self, key: str, attribute: str) -> bool:
        row = self.rows.get(key)
        return row is not None and attribute in row

    def keys(self) -> list[str]:
        return list(self.rows)


@dataclass
class Section:
    id: str
    title: str
    sentences: list[str]


@dataclass
class Document:
    sections: list[Section]

    def validate(self) -> None:
        ids = [s.id for s in self.sections]
        if len(ids) != len(set(ids)):
            raise CorpusError("duplicate section ids")

    def section_ids(self) -> list[str]:
        return [s.id for s in self.sections]


@dataclass
class Claim:
    """A text span to verify.

    Explicit claims state their numeric parameter in the text (comparison is
    equality with a relative tolerance); general claims leave comparison and
    parameter implicit.
    """

    id: str
    sentence_text: str
    claim_span: tuple[int, int]
    section_id: str
    kind: str  # "explicit" | "general"
    parameter: Optional[float] = None
    comparison: Optional[str] = None
    tolerance: float = DEFAULT_TOLERANCE

    def validate(self) -> None:
        if self.kind not in ("explicit", "general"):
            raise CorpusError(f"claim {self.id}: unknown kind {self.kind!r}")
        if self.kind == "explicit":
            if self.parameter is None:
                raise CorpusError(f"claim {self.id}: explicit claim without parameter")
            if self.comparison != "=":
                raise CorpusError(
                    f"claim {self.id}: explicit claim requires equality comparison"
                )
        if self.comparison is not None and self.comparison not in COMPARISONS:
            raise CorpusError(f"claim {self.id}: bad comparison {self.comparison!r}")
        if not (0.0 < self.tolerance < 1.0):
            raise CorpusError(f"claim {self.id}: tolerance out of range (0,1)")
        lo, hi = self.claim_span
        if not (0 <= lo <= hi <= len(self.sentence_text)):
            raise CorpusError(f"claim {self.id}: span outside sentence")

    @property
    def claim_text(self) -> str:
        lo, hi = self.claim_span
        return self.sentence_text[lo:hi]


@dataclass
class Annotation:
    """A prior check: the context and concrete expression a checker used."""

    claim_id: str
    relations: list[str]
    key_values: list[str]
    attributes: list[str]
    check_expression: str
    verdict: str  # "correct" | "incorrect"
    intermediates: dict[str, str] = field(default_factory=dict)

    def validate(self) -> None:
        if self.verdict not in ("correct", "incorrect"):
            raise CorpusError(f"annotation {self.claim_id}: bad verdict {self.verdict!r}")
        if not self.relations or not self.key_values or not self.attributes:
            raise CorpusError(f"annotation {self.claim_id}: empty context")


@dataclass
class CorpusProfile:
    """Counts and property-frequency percentiles describing a claim corpus shape."""

    n_relations: int
    n_keys: int
    n_attributes: int
    n_formulas: int
    n_claims: int
    n_sections: int
    # kind -> {percentile (0-100) -> frequency}
    frequency_percentiles: dict[str, dict[int, float]]
    explicit_fraction: float = 0.5
    error_rate: float = 0.05
    tolerance: float = DEFAULT_TOLERANCE
    separable: bool = False

    def validate(self) -> None:
        for name, value in (
            ("n_relations", self.n_relations),
            ("n_keys", self.n_keys),
            ("n_attributes", self.n_attributes),
            ("n_formulas", self.n_formulas),
            ("n_claims", self.n_claims),
            ("n_sections", self.n_sections),
        ):
            if value < 1:
                raise CorpusError(f"profile count {name} must be >= 1")
        for kind, table in self.frequency_percentiles.items():
            points = sorted(table.items())
            values = [v for _, v in points]
            if any(b < a for a, b in zip(values, values[1:])):
                raise CorpusError(f"profile percentiles for {kind} not non-decreasing")

    @classmethod
    def from_dict(cls, raw: dict) -> "CorpusProfile":
        counts = raw.get("counts", {})
        percentiles = {
            kind: {int(p): float(v) for p, v in table.items()}
            for kind, table in raw.get("frequency_percentiles", {}).items()
        }
        profile = cls(
            n_relations=int(counts.get("relations", 1)),
            n_keys=int(counts.get("keys", 1)),
            n_attributes=int(counts.get("attributes", 2)),
            n_formulas=int(counts.get("formulas", 1)),
            n_claims=int(counts.get("claims", 1)),
            n_sections=int(counts.get("sections", 1)),
            frequency_percentiles=percentiles,
            explicit_fraction=float(raw.get("explicit_fraction", 0.5)),
            error_rate=float(raw.get("error_rate", 0.05)),
            tolerance=float(raw.get("tolerance", DEFAULT_TOLERANCE)),
            separable=bool(raw.get("separable", False)),
        )
        profile.validate()
        return profile

    def to_dict(self) -> dict:
        return {
            "counts": {
                "relations": self.n_relations,
                "keys": self.n_keys,
                "attributes": self.n_attributes,
                "formulas": self.n_formulas,
                "claims": self.n_claims,
                "sections": self.n_sections,
            },
            "frequency_percentiles": {
                kind: {str(p): v for p, v in sorted(table.items())}
                for kind, table in self.frequency_percentiles.items()
            },
            "explicit_fraction": self.explicit_fraction,
            "error_rate": self.error_rate,
            "tolerance": self.tolerance,
            "separable": self.separable,
        }


@dataclass
class Corpus:
    """Everything one verification session works on."""

    relations: dict[str, Relation]
    document: Document
    claims: list[Claim]
    annotations: dict[str, Annotation]

    def validate(self) -> None:
        self.document.validate()
        for relation in self.relations.values():
            relation.validate()
        section_ids = set(self.document.section_ids())
        claim_ids = set()
        for claim in self.claims:
            claim.validate()
            if claim.id in claim_ids:
                raise CorpusError(f"duplicate claim id {claim.id}")
            claim_ids.add(claim.id)
            if claim.section_id not in section_ids:
                raise CorpusError(
                    f"claim {claim.id}: unknown section {claim.section_id!r}"
                )
        for ann in self.annotations.values():
            ann.validate()
            for name in ann.relations:
                if name not in self.relations:
                    raise CorpusError(
                        f"annotation {ann.claim_id}: unknown relation {name!r}"
                    )

    def claim_by_id(self, claim_id: str) -> Claim:
        for claim in self.claims:
            if claim.id == claim_id:
                return claim
        raise KeyError(claim_id)


# ---------------------------------------------------------------------------
# Loading and saving


def load_relation_file(path: Path, delimiter: Optional[str] = None) -> Relation:
    """Load one delimiter-separated table; first column is the key."""
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        raise CorpusError(f"{path.name}: no rows")
    if delimiter is None:
        delimiter = _sniff_delimiter(text)
    reader = csv.reader(text.splitlines(), delimiter=delimiter)
    header = next(reader, None)
    if not header or len(header) < 2:
        raise CorpusError(f"{path.name}: header must name a key column and attributes")
    key_attribute = header[0].strip()
    attributes = tuple(h.strip() for h in header[1:])
    rows: dict[str, dict[str, float]] = {}
    any_row = False
    for lineno, record in enumerate(reader, start=2):
        if not record or all(not cell.strip() for cell in record):
            continue
        any_row = True
        if len(record) != len(header):
            raise CorpusError(f"{path.name}: row {lineno} has {len(record)} fields")
        key = record[0].strip()
        if key in rows:
            raise CorpusError(f"{path.name}: duplicate key {key!r} at row {lineno}")
        try:
            rows[key] = {
                attr: parse_numeric_cell(cell)
                for attr, cell in zip(attributes, record[1:])
            }
        except CorpusError as exc:
            raise CorpusError(f"{path.name}: row {lineno}: {exc}") from None
    if not any_row:
        raise CorpusError(f"{path.name}: no rows")
    relation = Relation(path.stem, key_attribute, attributes, rows)
    relation.validate()
    return relation


def _sniff_delimiter(text: str) -> str:
    first_line = text.splitlines()[0]
    best, best_count = ",", 0
    for cand in (",", ";", "\t", "|"):
        count = first_line.count(cand)
        if count > best_count:
            best, best_count = cand, count
    return best


def load_relations(path: Path | str) -> list[Relation]:
    path = Path(path)
    relations = []
    for file in sorted(path.glob("*.csv")) + sorted(path.glob("*.tsv")):
        relations.append(load_relation_file(file))
    return relations


def load_claims(path: Path | str) -> list[Claim]:
    """Load line-delimited claim records, applying defaults and invariants."""
    claims = []
    for lineno, raw in _iter_jsonl(Path(path)):
        claim = claim_from_dict(raw, lineno=lineno)
        claims.append(claim)
    return claims


def claim_from_dict(raw: dict, lineno: Optional[int] = None) -> Claim:
    where = f"line {lineno}: " if lineno else ""
    try:
        kind = raw["kind"]
        claim = Claim(
            id=str(raw["id"]),
            sentence_text=raw["sentence_text"],
            claim_span=tuple(raw["claim_span"]),
            section_id=str(raw["section_id"]),
            kind=kind,
            parameter=raw.get("parameter"),
            comparison=raw.get("comparison") or ("=" if kind == "explicit" else None),
            tolerance=float(raw.get("tolerance", DEFAULT_TOLERANCE)),
        )
    except KeyError as exc:
        raise CorpusError(f"{where}missing claim field {exc}") from None
    claim.validate()
    return claim


def claim_to_dict(claim: Claim) -> dict:
    out = {
        "id": claim.id,
        "sentence_text": claim.sentence_text,
        "claim_span": list(claim.claim_span),
        "section_id": claim.section_id,
        "kind": claim.kind,
        "tolerance": claim.tolerance,
    }
    if claim.parameter is not None:
        out["parameter"] = claim.parameter
    if claim.comparison is not None:
        out["comparison"] = claim.comparison
    return out


def load_annotations(path: Path | str) -> dict[str, Annotation]:
    annotations: dict[str, Annotation] = {}
    for lineno, raw in _iter_jsonl(Path(path)):
        ann = Annotation(
            claim_id=str(raw["claim_id"]),
            relations=list(raw["relations"]),
            key_values=[str(k) for k in raw["key_values"]],
            attributes=[str(a) for a in raw["attributes"]],
            check_expression=raw["check_expression"],
            verdict=raw["verdict"],
            intermediates=dict(raw.get("intermediates", {})),
        )
        ann.validate()
        annotations[ann.claim_id] = ann
    return annotations


def annotation_to_dict(ann: Annotation) -> dict:
    out = {
        "claim_id": ann.claim_id,
        "relations": ann.relations,
        "key_values": ann.key_values,
        "attributes": ann.attributes,
        "check_expression": ann.check_expression,
        "verdict": ann.verdict,
    }
    if ann.intermediates:
        out["intermediates"] = ann.intermediates
    return out


def _iter_jsonl(path: Path):
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path.name}:{lineno}: bad record ({exc.msg})") from None


def load_corpus(root: Path | str) -> Corpus:
    """Load a corpus bundle directory (relations/, document.json, *.jsonl)."""
    root = Path(root)
    relations = {r.name: r for r in load_relations(root / "relations")}
    doc_raw = json.loads((root / "document.json").read_text(encoding="utf-8"))
    document = Document(
        sections=[
            Section(id=str(s["id"]), title=s.get("title", ""), sentences=list(s["sentences"]))
            for s in doc_raw["sections"]
        ]
    )
    claims = load_claims(root / "claims.jsonl")
    annotations_path = root / "annotations.jsonl"
    annotations = load_annotations(annotations_path) if annotations_path.exists() else {}
    corpus = Corpus(relations, document, claims, annotations)
    corpus.validate()
    return corpus


def save_corpus(corpus: Corpus, root: Path | str) -> None:
    root = Path(root)
    (root / "relations").mkdir(parents=True, exist_ok=True)
    for relation in corpus.relations.values():
        _write_relation_csv(relation, root / "relations" / f"{relation.name}.csv")
    doc = {
        "sections": [
            {"id": s.id, "title": s.title, "sentences": s.sentences}
            for s in corpus.document.sections
        ]
    }
    (root / "document.json").write_text(
        json.dumps(doc, indent=1, sort_keys=True), encoding="utf-8"
    )
    with (root / "claims.jsonl").open("w", encoding="utf-8") as handle:
        for claim in corpus.claims:
            handle.write(json.dumps(claim_to_dict(claim), sort_keys=True) + "\n")
    with (root / "annotations.jsonl").open("w", encoding="utf-8") as handle:
        for claim in corpus.claims:
            ann = corpus.annotations.get(claim.id)
            if ann is not None:
                handle.write(json.dumps(annotation_to_dict(ann), sort_keys=True) + "\n")


def _write_relation_csv(relation: Relation, path: Path) -> None:
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow([relation.key_attribute, *relation.attributes])
        for key, cells in relation.rows.items():
            writer.writerow([key, *(_format_cell(cells[a]) for a in relation.attributes)])


def _format_cell(value: float) -> str:
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def load_profile(path: Path | str) -> CorpusProfile:
    return CorpusProfile.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# Parameter extraction

#: Multiplier words that state an explicit parameter ("nine-fold" -> 9).
DEFAULT_MULTIPLIER_WORDS: dict[str, float] = {
    "two": 2, "three": 3, "four": 4, "five": 5, "six": 6, "seven": 7,
    "eight": 8, "nine": 9, "ten": 10, "eleven": 11, "twelve": 12,
}

_PERCENT = re.compile(r"(-?\d+(?:\.\d+)?)\s*(?:%|percent\b)")
_FOLD = re.compile(r"\b([a-z]+|\d+(?:\.\d+)?)[\s-]?fold\b")
_NUMBER = re.compile(r"-?\d{1,3}(?:[   ]\d{3})+(?:\.\d+)?|-?\d+(?:\.\d+)?")


def extract_parameter(
    sentence_text: str,
    claim_span: tuple[int, int],
    lexicon: Optional[Mapping[str, tuple[float, str]]] = None,
) -> Optional[tuple[float, str]]:
    """Pull an explicit parameter out of the claim text, if one is stated.

    Percentages are scaled to fractions, multiplier words resolved through the
    lexicon, plain numbers taken as-is (thousands separators stripped).
    Returns None for general claims with no stated parameter.
    """
    lo, hi = claim_span
    text = sentence_text[lo:hi].lower()

    match = _PERCENT.search(text)
    if match:
        return float(match.group(1)) / 100.0, "="

    match = _FOLD.search(text)
    if match:
        word = match.group(1)
        if word in DEFAULT_MULTIPLIER_WORDS:
            return float(DEFAULT_MULTIPLIER_WORDS[word]), "="
        try:
            return float(word), "="
        except ValueError:
            pass

    if lexicon:
        for phrase, (value, op) in lexicon.items():
            if phrase.lower() in text:
                return float(value), op

    for match in _NUMBER.finditer(text):
        lexeme = match.group(0)
        if _looks_like_year(lexeme):
            continue
        return parse_numeric_cell(lexeme), "="

    return None


def _looks_like_year(lexeme: str) -> bool:
    # bare 4-digit integers in the plausible-year range are labels, not parameters
    if len(lexeme) != 4 or not lexeme.isdigit():
        return False
    return 1900 <= int(lexeme) <= 2100


# Re-exported here because profiles and generation belong to the same data
# layer; synth imports the types defined above, so this import stays last.
from .synth import generate_synthetic_corpus  # noqa: E402
