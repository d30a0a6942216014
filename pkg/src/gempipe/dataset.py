"""Dataset creation: negative sampling, the append-only label store, stratified
splits, and a synthetic-corpus generator for desk-scale verification.

The generator builds job postings (and resumes) out of templated topic
sentences.  A pair matches exactly when its qualification facts agree: the
degree level and the years of experience.  The decisive qualification
sentence sits at the end of the posting, after verbose filler, so naive
truncation drops it while knowledge injection preserves it.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .blocking import CandidatePair, PairMap
from .entities import EntityCollection, EntityEntry, classify_structure, get_path
from .errors import ConfigError, DataError
from .processing import normalize_text

VALID_LABELS = ("match", "nomatch")


def load_stopwords() -> frozenset[str]:
    text = resources.files("gempipe").joinpath("data/stopwords.txt").read_text(encoding="utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


@dataclass(frozen=True)
class LabeledPair:
    pair_id: str
    label: str  # "match" | "nomatch" (the store may also hold "skip" events)
    annotator: str
    timestamp: float  # UTC seconds
    source: str  # "human" | "sampler"

    def to_json(self) -> dict:
        return {
            "pair_id": self.pair_id,
            "label": self.label,
            "annotator": self.annotator,
            "timestamp": self.timestamp,
            "source": self.source,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LabeledPair":
        return cls(
            pair_id=obj["pair_id"],
            label=obj["label"],
            annotator=obj.get("annotator", ""),
            timestamp=float(obj["timestamp"]),
            source=obj.get("source", "human"),
        )


class LabelStore:
    """Append-only JSONL label history with a derived current view.

    The current label per pair is the write with the latest timestamp (ties
    go to the later arrival); "skip" events are recorded but never change
    the current label.  Replay tolerates a torn final line, so a crash
    mid-append loses at most the incomplete record.
    """

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self._lock = threading.Lock()
        self._history: list[LabeledPair] = []
        self._current: dict[str, LabeledPair] = {}
        if self.path.exists():
            self._replay()

    def _replay(self) -> None:
        raw = self.path.read_text(encoding="utf-8")
        lines = raw.split("\n")
        ends_with_newline = raw.endswith("\n")
        for index, line in enumerate(lines):
            if not line.strip():
                continue
            is_last = index == len(lines) - 1
            try:
                record = LabeledPair.from_json(json.loads(line))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                if is_last and not ends_with_newline:
                    break  # torn final write from a crash; drop it
                raise DataError(f"{self.path}: corrupt label record at line {index + 1}") from exc
            self._ingest(record)

    def _ingest(self, record: LabeledPair) -> None:
        self._history.append(record)
        if record.label == "skip":
            return
        existing = self._current.get(record.pair_id)
        if existing is None or record.timestamp >= existing.timestamp:
            self._current[record.pair_id] = record

    def append(self, record: LabeledPair) -> LabeledPair:
        if record.label not in VALID_LABELS and record.label != "skip":
            raise DataError(f"invalid label {record.label!r}")
        with self._lock:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record.to_json()) + "\n")
                fh.flush()
            self._ingest(record)
        return record

    def current(self) -> dict[str, LabeledPair]:
        with self._lock:
            return dict(self._current)

    def history(self) -> list[LabeledPair]:
        with self._lock:
            return list(self._history)


def write_labels(records: list[LabeledPair], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json()) + "\n")


def sample_negatives(
    a: EntityCollection,
    b: EntityCollection,
    title_path: str,
    k: int,
    seed: int = 0,
    stopwords: frozenset[str] | None = None,
) -> list[LabeledPair]:
    """Uniformly sample k pairs whose title token sets share nothing.

    Rejection sampling capped at 100*k attempts; already-drawn pairs and
    overlapping titles both count as rejections.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    if stopwords is None:
        stopwords = load_stopwords()
    rng = np.random.default_rng(seed)

    def title_tokens(entry: EntityEntry) -> frozenset[str]:
        value = get_path(entry, title_path)
        text = normalize_text(value) if isinstance(value, str) else ""
        return frozenset(text.split()) - stopwords

    tokens_a = [title_tokens(e) for e in a.entries]
    tokens_b = [title_tokens(e) for e in b.entries]
    chosen: dict[tuple[int, int], None] = {}
    out: list[LabeledPair] = []
    base_ts = time.time()
    for attempt in range(100 * k):
        if len(out) >= k:
            break
        i = int(rng.integers(len(a.entries)))
        j = int(rng.integers(len(b.entries)))
        if (i, j) in chosen or (tokens_a[i] & tokens_b[j]):
            continue
        chosen[(i, j)] = None
        out.append(
            LabeledPair(
                pair_id=f"{a.entries[i].id}::{b.entries[j].id}",
                label="nomatch",
                annotator="negative-sampler",
                timestamp=base_ts + len(out) * 1e-6,
                source="sampler",
            )
        )
    if len(out) < k:
        raise DataError(
            f"negative sampling found only {len(out)} of {k} disjoint-title pairs "
            f"within {100 * k} attempts"
        )
    return out


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple[float, float, float] = (0.6, 0.2, 0.2)
    seed: int = 0
    balance: bool = True

    def __post_init__(self) -> None:
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ConfigError(f"split ratios must sum to 1, got {self.ratios}")


def _allocate(n: int, ratios: tuple[float, float, float]) -> list[int]:
    """Largest-remainder allocation of n items across the ratios."""
    raw = [r * n for r in ratios]
    counts = [int(x) for x in raw]
    remainder = n - sum(counts)
    order = sorted(range(len(ratios)), key=lambda i: -(raw[i] - counts[i]))
    for i in order[:remainder]:
        counts[i] += 1
    return counts


def split_dataset(
    pairs: list[LabeledPair], spec: SplitSpec
) -> tuple[list[LabeledPair], list[LabeledPair], list[LabeledPair]]:
    """Stratified shuffle split: an exact partition whose per-split class
    ratios stay within one pair of the global ratio."""
    rng = np.random.default_rng(spec.seed)
    splits: tuple[list[LabeledPair], ...] = ([], [], [])
    if spec.balance:
        groups: dict[str, list[LabeledPair]] = {}
        for pair in pairs:
            if pair.label not in VALID_LABELS:
                raise DataError(f"cannot split on label {pair.label!r}")
            groups.setdefault(pair.label, []).append(pair)
        for label in VALID_LABELS:
            if label not in groups:
                raise DataError(f"balance=true but no {label!r} pairs present")
            if len(groups[label]) < 5:
                raise DataError(f"need at least 5 {label!r} pairs to stratify")
        for label in VALID_LABELS:
            members = groups[label]
            order = rng.permutation(len(members))
            counts = _allocate(len(members), spec.ratios)
            cursor = 0
            for split, count in zip(splits, counts):
                split.extend(members[i] for i in order[cursor : cursor + count])
                cursor += count
    else:
        order = rng.permutation(len(pairs))
        counts = _allocate(len(pairs), spec.ratios)
        cursor = 0
        for split, count in zip(splits, counts):
            split.extend(pairs[i] for i in order[cursor : cursor + count])
            cursor += count
    for split in splits:
        rng.shuffle(split)  # type: ignore[arg-type]
    return splits


# --- synthetic corpus -------------------------------------------------------

DEGREES = ("associate", "bachelor", "master", "doctorate")
YEARS = (1, 2, 3, 4)

TITLES = (
    "registered nurse", "software engineer", "data analyst", "project manager",
    "financial analyst", "hr coordinator", "marketing specialist", "sales representative",
    "customer support agent", "operations manager", "graphic designer", "staff accountant",
    "executive assistant", "warehouse supervisor", "machine operator", "delivery driver",
    "security officer", "line chef", "licensed electrician", "plumbing technician",
    "elementary teacher", "retail pharmacist", "lab technician", "front desk receptionist",
)

INDUSTRIES = ("healthcare", "retail", "finance", "logistics", "education", "technology")
CITIES = ("austin", "denver", "chicago", "boston", "seattle", "atlanta")
DUTY_ITEMS = (
    "preparing weekly reports", "supporting client accounts", "maintaining equipment",
    "coordinating schedules", "handling customer inquiries", "monitoring inventory levels",
)
SCHOOLS = ("lakeside state university", "riverton city college", "north technical institute")
SKILL_ITEMS = (
    "record keeping", "customer communication", "scheduling tools",
    "inventory software", "quality checks", "team coordination",
)
# Rare employer names keep some low-frequency grams in matched contents, so
# q-gram blocking with its document-frequency filter still links duplicates.
# The syllables use letter patterns absent from the sentence templates.
_NAME_SYLLABLES = (
    "zab", "vok", "jex", "wuz", "kyv", "qof", "xib", "zuv", "jok", "wex",
    "vyn", "quz", "kaz", "jiv", "zet", "wob", "xul", "vep", "juk", "zyx",
)
_NAME_SUFFIXES = ("group", "labs", "partners", "holdings", "works")

# Index 0 is the plain wording; index 1 is the noise variant (same facts).
# The named variants carry rare employer-name grams; the plain ones keep the
# job-resume vocabulary free of per-pair memorization keys.
COMPANY_TEMPLATES_NAMED = (
    "Our company {company_name} is an established leader in the {industry} industry.",
    "We are {company_name}, a growing firm proudly serving the {industry} industry.",
)
COMPANY_TEMPLATES = (
    "Our company is an established leader in the {industry} industry.",
    "We are a growing firm proudly serving the {industry} industry.",
)
DUTY_TEMPLATES = (
    "Responsibilities include {duty_a} and {duty_b}.",
    "You will be responsible for {duty_a} and {duty_b}.",
)
BENEFIT_TEMPLATES = (
    "We offer health insurance and a competitive salary.",
    "Benefits include dental coverage and a generous 401k plan.",
)
TIME_TEMPLATES = (
    "This is a full-time position with a flexible schedule.",
    "The role is full-time with weekend shifts available.",
)
LOCATION_TEMPLATES = (
    "The office is located in downtown {city}.",
    "This role is based in our {city} campus.",
)
NONE_TEMPLATES = (
    "Please send a copy of your availability to the address below.",
    "Applications are reviewed on a rolling basis.",
)
QUALIFICATION_TEMPLATES = (
    "Candidates must have a {degree} degree and {years} years of experience.",
    "A {degree} degree plus {years} years of experience is required.",
)


@dataclass(frozen=True)
class _JobFacts:
    title: str
    degree: str
    years: int
    industry: str
    city: str
    duty_a: str
    duty_b: str
    company_name: str


def _pick(rng: np.random.Generator, options: tuple) -> object:
    return options[int(rng.integers(len(options)))]


def _variant(rng: np.random.Generator, noise: float) -> int:
    return 1 if rng.random() < noise else 0


def _job_content(
    facts: _JobFacts, rng: np.random.Generator, noise: float, named_company: bool
) -> str:
    """Filler topics first, the decisive qualification sentence last."""
    if named_company:
        company = COMPANY_TEMPLATES_NAMED[_variant(rng, noise)].format(
            company_name=facts.company_name, industry=facts.industry
        )
    else:
        company = COMPANY_TEMPLATES[_variant(rng, noise)].format(industry=facts.industry)
    sentences = [
        company,
        DUTY_TEMPLATES[_variant(rng, noise)].format(duty_a=facts.duty_a, duty_b=facts.duty_b),
        BENEFIT_TEMPLATES[_variant(rng, noise)],
        TIME_TEMPLATES[_variant(rng, noise)],
        LOCATION_TEMPLATES[_variant(rng, noise)].format(city=facts.city),
        NONE_TEMPLATES[_variant(rng, noise)],
        QUALIFICATION_TEMPLATES[_variant(rng, noise)].format(
            degree=facts.degree, years=facts.years
        ),
    ]
    return " ".join(sentences)


def _job_entry(
    entry_id: str,
    facts: _JobFacts,
    rng: np.random.Generator,
    noise: float,
    named_company: bool = True,
) -> EntityEntry:
    return EntityEntry(
        id=entry_id,
        attributes={
            "title": facts.title,
            "content": _job_content(facts, rng, noise, named_company),
        },
    )


def _resume_entry(
    entry_id: str, facts: _JobFacts, rng: np.random.Generator, noise: float
) -> EntityEntry:
    school = _pick(rng, SCHOOLS)
    skills = [str(s) for s in rng.choice(SKILL_ITEMS, size=3, replace=False)]
    summary_templates = (
        "Dependable {title} focused on steady teamwork.",
        "Motivated {title} with a record of reliable work.",
    )
    summary = summary_templates[_variant(rng, noise)].format(title=facts.title)
    # Decisive fields lead their blocks so they survive tight budgets.
    return EntityEntry(
        id=entry_id,
        attributes={
            "education": [{"degree": facts.degree, "school": school}],
            "experience": [
                {"duration": f"{facts.years} years", "role": facts.title},
            ],
            "summary": summary,
            "skills": skills,
        },
    )


def _random_facts(rng: np.random.Generator) -> _JobFacts:
    duty_a, duty_b = rng.choice(len(DUTY_ITEMS), size=2, replace=False)
    # Three syllables give each name several low-frequency character grams.
    name = (
        "".join(str(_pick(rng, _NAME_SYLLABLES)) for _ in range(3))
        + " "
        + str(_pick(rng, _NAME_SUFFIXES))
    )
    return _JobFacts(
        title=str(_pick(rng, TITLES)),
        degree=str(_pick(rng, DEGREES)),
        years=int(_pick(rng, YEARS)),
        industry=str(_pick(rng, INDUSTRIES)),
        city=str(_pick(rng, CITIES)),
        duty_a=DUTY_ITEMS[duty_a],
        duty_b=DUTY_ITEMS[duty_b],
        company_name=name,
    )


def _perturb_facts(facts: _JobFacts, rng: np.random.Generator, change_title: bool) -> _JobFacts:
    """A non-matching counterpart: different title, or same title with at
    least one differing qualification fact (half the negatives differ in
    exactly one fact, the rest in both)."""
    if change_title:
        other_titles = tuple(t for t in TITLES if t != facts.title)
        return replace(facts, title=str(_pick(rng, other_titles)))
    new_degree = str(_pick(rng, tuple(d for d in DEGREES if d != facts.degree)))
    new_years = int(_pick(rng, tuple(y for y in YEARS if y != facts.years)))
    roll = rng.random()
    if roll < 0.25:
        return replace(facts, degree=new_degree)
    if roll < 0.5:
        return replace(facts, years=new_years)
    return replace(facts, degree=new_degree, years=new_years)


def generate_synthetic(
    task: str, n_pairs: int, noise: float = 0.1, seed: int = 0
) -> tuple[EntityCollection, EntityCollection, list[LabeledPair], PairMap]:
    """Seeded synthetic corpus for the jobjob or jobresume task.

    Returns the two collections, balanced gold labels, and the gold pairs as
    candidate pairs (provenance "synthetic").  Matching pairs agree on the
    qualification facts; for jobjob they also share the title exactly.
    """
    if task not in ("jobjob", "jobresume"):
        raise ConfigError(f"unknown synthetic task {task!r}")
    if n_pairs < 10:
        raise ConfigError(f"n_pairs must be >= 10, got {n_pairs}")
    if not 0.0 <= noise <= 1.0:
        raise ConfigError(f"noise must be in [0, 1], got {noise}")

    rng = np.random.default_rng(seed)
    left_entries: list[EntityEntry] = []
    right_entries: list[EntityEntry] = []
    labels: list[LabeledPair] = []
    pairs: PairMap = {}
    n_match = n_pairs // 2
    base_ts = 1_700_000_000.0

    for i in range(n_pairs):
        is_match = i < n_match
        facts = _random_facts(rng)
        if is_match:
            right_facts = facts
        else:
            # jobjob negatives keep the title half the time (hard negatives);
            # jobresume negatives always keep it, so titles carry no signal.
            change_title = task == "jobjob" and bool(rng.random() < 0.5)
            right_facts = _perturb_facts(facts, rng, change_title)

        left_id, right_id = f"a{i:04d}", f"b{i:04d}"
        named = task == "jobjob"
        left_entries.append(_job_entry(left_id, facts, rng, noise, named_company=named))
        if task == "jobjob":
            right_entries.append(_job_entry(right_id, right_facts, rng, noise))
        else:
            right_entries.append(_resume_entry(right_id, right_facts, rng, noise))

        pair_id = f"{left_id}::{right_id}"
        labels.append(
            LabeledPair(
                pair_id=pair_id,
                label="match" if is_match else "nomatch",
                annotator="synthetic-gold",
                timestamp=base_ts + i,
                source="human",
            )
        )
        pairs[(left_id, right_id)] = CandidatePair.make(left_id, right_id, ("synthetic",))

    order = rng.permutation(n_pairs)
    labels = [labels[i] for i in order]

    left = EntityCollection(
        name=f"{task}_left", entries=left_entries, structure_kind=classify_structure(left_entries)
    )
    right = EntityCollection(
        name=f"{task}_right",
        entries=right_entries,
        structure_kind=classify_structure(right_entries),
    )
    return left, right, labels, pairs


__all__ = [
    "DEGREES",
    "LabelStore",
    "LabeledPair",
    "SplitSpec",
    "TITLES",
    "YEARS",
    "generate_synthetic",
    "load_stopwords",
    "sample_negatives",
    "split_dataset",
    "write_labels",
]
