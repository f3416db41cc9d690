"""SKILL.md document model.

A skill file is a ``---``-delimited block of flat ``key: value`` lines followed
by a Markdown body split into ``# section_name`` sections. Only that flat
subset is supported; there is no general YAML engine here.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .metrics import ComplianceLimits, ContractError, compliance_score

DELIMITER = "---"
KNOWN_KEYS = ("name", "description", "compatibility", "metadata", "allowed-tools")
_HEADER_RE = re.compile(r"^# (\S.*?)\s*$")
_FENCE_RE = re.compile(r"^\s*(```|~~~)")


class SkillParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class SkillDoc:
    name: str
    description: str = ""
    compatibility: str = ""
    metadata: dict[str, str] = field(default_factory=dict)
    allowed_tools: tuple[str, ...] = ()
    body: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if not self.name:
            raise ContractError("skill name must be non-empty")
        object.__setattr__(self, "allowed_tools", tuple(self.allowed_tools))
        object.__setattr__(self, "body", tuple((n, t) for n, t in self.body))
        object.__setattr__(self, "metadata", dict(self.metadata))
        names = [n for n, _ in self.body]
        if len(set(names)) != len(names):
            raise ContractError(f"duplicate body section names: {names}")
        if "" in names[1:]:
            raise ContractError("only the first body section may be unnamed")

    def __hash__(self):
        return hash(serialize(self))

    @property
    def section_names(self) -> list[str]:
        return [n for n, _ in self.body if n]

    def section(self, name: str) -> str:
        for n, text in self.body:
            if n == name:
                return text
        raise KeyError(name)

    def body_length(self) -> int:
        return sum(len(text) for _, text in self.body)

    def replace(self, **changes) -> "SkillDoc":
        fields = dict(
            name=self.name,
            description=self.description,
            compatibility=self.compatibility,
            metadata=self.metadata,
            allowed_tools=self.allowed_tools,
            body=self.body,
        )
        fields.update(changes)
        return SkillDoc(**fields)


def _unquote(value: str) -> str:
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
        return value[1:-1]
    return value


def _quote(value: str) -> str:
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
        return f'"{value}"'
    return value


def _parse_metadata(value: str, lineno: int) -> dict[str, str]:
    out: dict[str, str] = {}
    if not value:
        return out
    for item in value.split(","):
        item = item.strip()
        if not item:
            continue
        key, sep, val = item.partition(":")
        if not sep:
            raise SkillParseError(f"metadata entry {item!r} is not 'key: value'", lineno)
        out[key.strip()] = val.strip()
    return out


def _parse_tools(value: str) -> tuple[str, ...]:
    value = value.strip()
    if value.startswith("[") and value.endswith("]"):
        value = value[1:-1]
    return tuple(t.strip() for t in value.split(",") if t.strip())


def _split_sections(lines: Sequence[str], first_lineno: int) -> list[tuple[str, str]]:
    sections: list[tuple[str, list[str]]] = []
    current: tuple[str, list[str]] | None = None
    in_fence = False
    for offset, line in enumerate(lines):
        if _FENCE_RE.match(line):
            in_fence = not in_fence
        m = None if in_fence else _HEADER_RE.match(line)
        if m:
            name = m.group(1)
            if any(name == n for n, _ in sections):
                raise SkillParseError(f"duplicate section {name!r}", first_lineno + offset)
            current = (name, [])
            sections.append(current)
        else:
            if current is None:
                if not line.strip():
                    continue
                current = ("", [])
                sections.append(current)
            current[1].append(line)
    return [(name, _normalize_text(body)) for name, body in sections]


def _normalize_text(lines: Sequence[str]) -> str:
    return "\n".join(lines).strip("\n").rstrip()


def parse(text: str) -> SkillDoc:
    lines = text.lstrip("﻿").splitlines()
    start = 0
    while start < len(lines) and not lines[start].strip():
        start += 1
    if start >= len(lines) or lines[start].strip() != DELIMITER:
        raise SkillParseError("missing opening '---' frontmatter delimiter", start + 1)
    end = next(
        (i for i in range(start + 1, len(lines)) if lines[i].strip() == DELIMITER), None
    )
    if end is None:
        raise SkillParseError("missing closing '---' frontmatter delimiter", start + 1)

    fields: dict[str, str] = {}
    extra: dict[str, str] = {}
    metadata: dict[str, str] = {}
    for i in range(start + 1, end):
        line = lines[i]
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise SkillParseError(f"frontmatter line is not 'key: value': {line!r}", i + 1)
        key = key.strip()
        if key == "allowed_tools":
            key = "allowed-tools"
        value = _unquote(value.strip())
        if key == "metadata":
            metadata.update(_parse_metadata(value, i + 1))
        elif key in KNOWN_KEYS:
            fields[key] = value
        else:
            extra[key] = value
    if not fields.get("name"):
        raise SkillParseError("frontmatter has no 'name'", start + 1)

    body = _split_sections(lines[end + 1 :], end + 2)
    return SkillDoc(
        name=fields["name"],
        description=fields.get("description", ""),
        compatibility=fields.get("compatibility", ""),
        metadata={**metadata, **extra},
        allowed_tools=_parse_tools(fields.get("allowed-tools", "")),
        body=tuple(body),
    )


def _check_flat(label: str, value: str, forbidden: str = "") -> None:
    bad = "\n\r" + forbidden
    if any(c in value for c in bad):
        raise ContractError(f"{label} {value!r} cannot be written as a flat frontmatter value")


def serialize(doc: SkillDoc) -> str:
    for label in ("name", "description", "compatibility"):
        _check_flat(label, getattr(doc, label))
    for k, v in doc.metadata.items():
        _check_flat("metadata key", k, ":,")
        _check_flat("metadata value", v, ",")
    for t in doc.allowed_tools:
        _check_flat("tool name", t, ",[]")

    meta = ", ".join(f"{k}: {v}" for k, v in doc.metadata.items())
    head = [
        DELIMITER,
        f"name: {_quote(doc.name)}",
        f"description: {_quote(doc.description)}",
        f"compatibility: {_quote(doc.compatibility)}",
        f"metadata: {meta}",
        f"allowed-tools: [{', '.join(doc.allowed_tools)}]",
        DELIMITER,
    ]
    chunks = []
    for name, text in doc.body:
        chunk = f"# {name}\n{text}" if name else text
        chunks.append(chunk.rstrip())
    out = "\n".join(line.rstrip() for line in head) + "\n"
    if chunks:
        out += "\n\n".join(chunks) + "\n"
    return out


def load(path) -> SkillDoc:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


def dump(doc: SkillDoc, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize(doc))


def measure(doc: SkillDoc, limits: ComplianceLimits = ComplianceLimits()) -> tuple[float, float]:
    """(description_compliance, body_compliance) of a document."""
    return (
        compliance_score(len(doc.description), limits.description_limit),
        compliance_score(doc.body_length(), limits.body_limit),
    )


@dataclass(frozen=True)
class ComplianceEntry:
    field_name: str
    length: int
    limit: int

    @property
    def status(self) -> str:
        return "FAIL" if self.length > self.limit else "PASS"

    def render(self) -> str:
        return f"{self.field_name}: {self.status} ({self.length:,}/{self.limit:,} chars)"


@dataclass(frozen=True)
class ComplianceReport:
    entries: tuple[ComplianceEntry, ...]

    def render(self) -> str:
        return "\n".join(e.render() for e in self.entries)

    def __str__(self) -> str:
        return self.render()

    @property
    def passed(self) -> bool:
        return all(e.status == "PASS" for e in self.entries)


def compliance_report(
    doc: SkillDoc, limits: ComplianceLimits = ComplianceLimits()
) -> ComplianceReport:
    return ComplianceReport(
        (
            ComplianceEntry("description", len(doc.description), limits.description_limit),
            ComplianceEntry("body", doc.body_length(), limits.body_limit),
        )
    )


# Shared by every selection strategy so that only selection differs between them.
MUTATION_PROMPT_TEMPLATE = """\
You are optimizing a SKILL.md specification for a language model skill.

## SKILL.md Format Constraints
(all fields are optimization targets)
- description: ≤{description_limit} characters
- body: ≤{body_limit} characters
- All YAML frontmatter fields must remain valid YAML

## Current SKILL.md
```
{current_skill_md}
```

## Compliance Status
{compliance_report}

## Task Examples with Feedback
{feedback_text}

## Sections to Improve: {components_to_update}

Rewrite the SKILL.md: TOP priority is to improve task accuracy by adding as many \
steps or instructions as necessary while still respecting all field constraints. \
You may modify ANY field (description, body sections). Maintain valid YAML \
frontmatter and `# section_name` headers in the body.

Return the complete SKILL.md within ``` blocks.
"""


def render_mutation_prompt(
    doc: SkillDoc,
    report: ComplianceReport,
    feedback: str,
    components: Iterable[str],
) -> str:
    limits = {e.field_name: e.limit for e in report.entries}
    return MUTATION_PROMPT_TEMPLATE.format(
        description_limit=f"{limits.get('description', ComplianceLimits.description_limit):,}",
        body_limit=f"{limits.get('body', ComplianceLimits.body_limit):,}",
        current_skill_md=serialize(doc).rstrip("\n"),
        compliance_report=report.render(),
        feedback_text=feedback,
        components_to_update=", ".join(components),
    )
