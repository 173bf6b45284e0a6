"""Line-oriented sectioned text format shared by .desc, .eval and .cfg files.

A document starts with a mandatory ``format: <n>`` header line, followed by
sections. A section header is an unindented word with an optional argument
(``group g1``); its entries are two-space indented ``key: value`` lines.
Blank lines and full-line ``#`` comments are ignored. Values run verbatim to
the end of the line, so they may contain spaces but never newlines.

Quoting is only needed inside composite values (command parameter maps and
metric attributes), where tokens are separated by spaces: a value token is
either bare or double-quoted with backslash escapes.
"""

from dataclasses import dataclass, field
import re

SECTION_RE = re.compile(r"^([a-z][a-z_-]*)(?: +(\S+))?$")
ENTRY_RE = re.compile(r"^  ([^\s:][^:]*):(.*)$")
TOKEN_RE = re.compile(r"^[A-Za-z0-9_.\-]+$")
KEY_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\-]*$")


class FormatError(ValueError):
    """Malformed document; carries 1-based line and column."""

    def __init__(self, message: str, line: int, col: int = 1):
        super().__init__(f"line {line}, col {col}: {message}")
        self.message = message
        self.line = line
        self.col = col


@dataclass
class Entry:
    key: str
    value: str
    line: int


@dataclass
class Section:
    name: str
    arg: str | None
    line: int
    entries: list[Entry] = field(default_factory=list)

    def get(self, key: str, default: str | None = None) -> str | None:
        for e in self.entries:
            if e.key == key:
                return e.value
        return default

    def keys(self) -> list[str]:
        return [e.key for e in self.entries]


def read_document(text: str) -> tuple[int, list[Section]]:
    """Parse a document into (format version, sections).

    Raises FormatError with position information on any structural problem.
    Section-name validity is the caller's concern; this layer only enforces
    the line grammar.
    """
    version: int | None = None
    sections: list[Section] = []
    current: Section | None = None
    for lineno, raw in enumerate(text.split("\n"), start=1):
        if not raw.strip():
            continue
        if raw.lstrip().startswith("#"):
            continue
        if raw.startswith("  "):
            if current is None:
                raise FormatError("entry before any section header", lineno, 1)
            m = ENTRY_RE.match(raw)
            if m is None:
                raise FormatError("expected 'key: value'", lineno, 3)
            key = m.group(1)
            rest = m.group(2)
            # value is verbatim after one separating space; bare "key:" is empty
            if rest == "":
                value = ""
            elif rest.startswith(" "):
                value = rest[1:]
            else:
                raise FormatError("expected a space after ':'", lineno,
                                  3 + len(key) + 1)
            current.entries.append(Entry(key, value, lineno))
            continue
        if raw.startswith(" "):
            raise FormatError("bad indentation (use exactly two spaces)", lineno, 1)
        if version is None:
            m = re.match(r"^format: (\d+)$", raw)
            if m is None:
                raise FormatError("missing 'format: <n>' header line", lineno, 1)
            version = int(m.group(1))
            continue
        m = SECTION_RE.match(raw)
        if m is None:
            raise FormatError("malformed section header", lineno, 1)
        current = Section(m.group(1), m.group(2), lineno)
        sections.append(current)
    if version is None:
        raise FormatError("empty document (missing 'format:' header)", 1, 1)
    return version, sections


def write_document(version: int, sections: list[Section]) -> str:
    """Render sections back to text. Callers order sections and entries."""
    out = [f"format: {version}", ""]
    for sec in sections:
        header = sec.name if sec.arg is None else f"{sec.name} {sec.arg}"
        out.append(header)
        for e in sec.entries:
            out.append(f"  {e.key}: {e.value}" if e.value else f"  {e.key}:")
        out.append("")
    while out and out[-1] == "":
        out.pop()
    return "\n".join(out) + "\n"


_NEEDS_QUOTES = re.compile(r'[\s"\\]')


def quote_token(value: str) -> str:
    """Quote a value token for use inside a space-separated composite value."""
    if value and not _NEEDS_QUOTES.search(value):
        return value
    return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _scan_quoted(text: str, i: int, line: int, col_base: int) -> tuple[str, int]:
    # caller has seen the opening quote at i
    buf: list[str] = []
    i += 1
    n = len(text)
    while True:
        if i >= n:
            raise FormatError("unterminated quoted value", line, col_base + i)
        c = text[i]
        if c == "\\":
            if i + 1 >= n or text[i + 1] not in '\\"':
                raise FormatError("bad escape in quoted value", line, col_base + i)
            buf.append(text[i + 1])
            i += 2
        elif c == '"':
            i += 1
            break
        else:
            buf.append(c)
            i += 1
    if i < len(text) and text[i] != " ":
        raise FormatError("missing space after quoted value", line, col_base + i)
    return "".join(buf), i


def split_items(text: str, line: int, col_base: int = 1) -> list[tuple[str, str | None]]:
    """Split a composite value into (name, value|None) items.

    An item is a bare word, ``key=bare``, or ``key="quoted"``; quotes are only
    legal immediately after '='. Returns value None for bare words.
    """
    items: list[tuple[str, str | None]] = []
    i = 0
    n = len(text)
    while i < n:
        if text[i] == " ":
            i += 1
            continue
        if text[i] == '"':
            raise FormatError("quoted value without key=", line, col_base + i)
        j = i
        while j < n and text[j] not in ' "=':
            j += 1
        word = text[i:j]
        if j >= n or text[j] == " ":
            items.append((word, None))
            i = j
        elif text[j] == '"':
            raise FormatError("quote inside bare word", line, col_base + j)
        else:  # '='
            if not KEY_RE.match(word):
                raise FormatError(f"bad parameter name {word!r}", line, col_base + i)
            j += 1
            if j < n and text[j] == '"':
                value, j = _scan_quoted(text, j, line, col_base)
            else:
                k = j
                while k < n and text[k] not in ' "':
                    k += 1
                if k < n and text[k] == '"':
                    raise FormatError("quote inside bare value", line, col_base + k)
                value = text[j:k]
                j = k
            items.append((word, value))
            i = j
    return items


def parse_params(text: str, line: int) -> dict[str, str]:
    """Parse a pure ``key=value`` composite value into a parameter map."""
    params: dict[str, str] = {}
    for name, value in split_items(text, line):
        if value is None:
            raise FormatError(f"expected key=value, got {name!r}", line)
        if name in params:
            raise FormatError(f"duplicate parameter {name!r}", line)
        params[name] = value
    return params


def parse_command(text: str, line: int) -> tuple[str, dict[str, str]]:
    """Parse ``name key=value ...`` (a command with its parameter map)."""
    items = split_items(text, line)
    if not items or items[0][1] is not None or not TOKEN_RE.match(items[0][0]):
        raise FormatError("expected a command name", line)
    params: dict[str, str] = {}
    for name, value in items[1:]:
        if value is None:
            raise FormatError(f"expected key=value after command name, got {name!r}",
                              line)
        if name in params:
            raise FormatError(f"duplicate parameter {name!r}", line)
        params[name] = value
    return items[0][0], params


def format_params(params: dict[str, str]) -> str:
    """Canonical key=value rendering, keys sorted."""
    return " ".join(f"{k}={quote_token(params[k])}" for k in sorted(params))
