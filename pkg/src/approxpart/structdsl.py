"""C-subset struct declarations: parsing, byte-exact layout and classification.

The accepted language is deliberately small::

    // line comment
    typedef struct arc arc_t;
    typedef long cost_t;
    struct arc {
        cost_t cost;
        struct node *tail, *head;
        int ident;
        double weights[4];
        int compare();          // member function: counted, never laid out
    };
    class cChannel { public: int id; };

Types are the nine scalars (``char short int long long-long int64_t float
double`` plus pointers), ``struct NAME`` / ``class NAME`` by value, ``enum
NAME`` (laid out as ``int``), typedef aliases, and fixed-size arrays of any
of those.  Any number of ``*`` collapses to a pointer.  Unions, bit-fields,
anonymous and nested struct definitions are rejected.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

__all__ = [
    "ABIProfile",
    "CriteriaResult",
    "DeclError",
    "DeclSyntaxError",
    "DuplicateMemberError",
    "FlattenedLayout",
    "LP64",
    "LP64_PACKED",
    "ILP32",
    "LayoutEntry",
    "LayoutError",
    "MemberDecl",
    "ScalarKind",
    "StructDecl",
    "TypeRef",
    "UnresolvedTypeError",
    "classify",
    "find_decl",
    "layout",
    "parse_decls",
    "scalar_layout",
    "SCALAR_NAMES",
]


class DeclError(ValueError):
    """Base class for declaration-language errors."""


class DeclSyntaxError(DeclError):
    def __init__(self, message, line, col):
        super().__init__(f"line {line}, column {col}: {message}")
        self.line = line
        self.col = col


class UnresolvedTypeError(DeclSyntaxError):
    pass


class DuplicateMemberError(DeclSyntaxError):
    pass


class LayoutError(DeclError):
    pass


# --------------------------------------------------------------------------
# scalar kinds and ABI

SCALAR_NAMES = ("char", "short", "int", "long", "longlong", "int64", "float", "double", "pointer")

_CATEGORY = {"float": "floating", "double": "floating", "pointer": "pointer"}


@dataclass(frozen=True)
class ScalarKind:
    name: str
    size: int
    align: int
    category: str  # "integer" | "floating" | "pointer"


@dataclass(frozen=True)
class ABIProfile:
    """Scalar sizes for a data model.

    ``long`` and pointers are ``pointer_size`` wide (LP64 or ILP32); all
    other scalars keep their usual sizes.  ``packed`` removes every byte of
    padding, including tail padding.
    """

    pointer_size: int = 8
    packed: bool = False

    def __post_init__(self):
        if self.pointer_size not in (4, 8):
            raise ValueError("pointer_size must be 4 or 8")

    def scalar(self, name: str) -> ScalarKind:
        sizes = {
            "char": 1,
            "short": 2,
            "int": 4,
            "long": self.pointer_size,
            "longlong": 8,
            "int64": 8,
            "float": 4,
            "double": 8,
            "pointer": self.pointer_size,
        }
        try:
            size = sizes[name]
        except KeyError:
            raise LayoutError(f"unknown scalar kind {name!r}") from None
        return ScalarKind(name, size, size, _CATEGORY.get(name, "integer"))


LP64 = ABIProfile()
LP64_PACKED = ABIProfile(packed=True)
ILP32 = ABIProfile(pointer_size=4)


# --------------------------------------------------------------------------
# declarations

@dataclass(frozen=True)
class TypeRef:
    """Type of a member.

    ``kind`` is ``"scalar"`` (``name`` is a ScalarKind name, including
    ``"pointer"``) or ``"struct"`` (``struct`` holds the referenced decl).
    ``count`` is the array length, ``None`` for non-arrays.
    """

    kind: str
    name: str
    struct: StructDecl | None = field(default=None, compare=False, repr=False)
    count: int | None = None
    pointee: str | None = None

    def __str__(self):
        if self.kind == "struct":
            base = f"struct {self.name}"
        elif self.name == "pointer":
            base = f"{self.pointee or 'void'}*"
        else:
            base = self.name
        return base if self.count is None else f"{base}[{self.count}]"


@dataclass(frozen=True)
class MemberDecl:
    name: str
    type: TypeRef


@dataclass
class StructDecl:
    name: str
    members: tuple[MemberDecl, ...] = ()
    typedef_alias: str | None = None
    member_function_count: int = 0
    is_class: bool = False

    @property
    def keyword(self):
        return "class" if self.is_class else "struct"

    def display_name(self):
        """``"arc_t (struct arc)"`` when aliased, else ``"struct arc"``."""
        full = f"{self.keyword} {self.name}"
        return f"{self.typedef_alias} ({full})" if self.typedef_alias else full


def find_decl(decls, name):
    """Look a declaration up by struct name or typedef alias."""
    for d in decls:
        if d.name == name or d.typedef_alias == name:
            return d
    return None


# --------------------------------------------------------------------------
# tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\f\v]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*|/\*.*?\*/)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<number>0[xX][0-9a-fA-F]+|[0-9]+)
  | (?P<punct>::|[{}();,*\[\]:~&=<>])
    """,
    re.VERBOSE | re.DOTALL,
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text):
    toks = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise DeclSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "comment":
            nls = m.group().count("\n")
            if nls:
                line += nls
                line_start = m.start() + m.group().rfind("\n") + 1
        elif kind != "ws":
            toks.append(_Tok(kind, m.group(), line, m.start() - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


# --------------------------------------------------------------------------
# parser

_QUALIFIERS = {"const", "volatile", "unsigned", "signed", "static", "mutable", "register"}
_FIXED_WIDTH = {
    "int8_t": "char", "uint8_t": "char",
    "int16_t": "short", "uint16_t": "short",
    "int32_t": "int", "uint32_t": "int",
    "int64_t": "int64", "uint64_t": "int64", "int64": "int64",
    "bool": "char", "_Bool": "char",
    "size_t": "long", "ssize_t": "long", "intptr_t": "long", "uintptr_t": "long",
}
_BASE_WORDS = {"char", "short", "int", "long", "float", "double", "void"}


class _Parser:
    def __init__(self, text):
        self.toks = _tokenize(text)
        self.i = 0
        self.decls: list[StructDecl] = []
        self.by_name: dict[str, StructDecl] = {}
        # alias -> ("struct", name) | ("scalar", kind)
        self.aliases: dict[str, tuple[str, str]] = {}
        self.alias_sites: dict[str, _Tok] = {}

    # token helpers
    @property
    def tok(self):
        return self.toks[self.i]

    def peek(self, k=1):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def advance(self):
        t = self.tok
        self.i += 1
        return t

    def error(self, msg, tok=None, cls=DeclSyntaxError):
        tok = tok or self.tok
        return cls(msg, tok.line, tok.col)

    def expect(self, text):
        if self.tok.text != text:
            shown = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {shown!r}")
        return self.advance()

    def ident(self, what="identifier"):
        if self.tok.kind != "ident":
            shown = self.tok.text or "end of input"
            raise self.error(f"expected {what}, found {shown!r}")
        return self.advance()

    # top level
    def parse(self):
        while self.tok.kind != "eof":
            t = self.tok
            if t.text == ";":
                self.advance()
            elif t.text == "typedef":
                self.typedef()
            elif t.text in ("struct", "class") and self.peek(2).text == ";":
                # forward declaration
                self.i += 3
            elif t.text in ("struct", "class"):
                decl = self.struct_definition()
                if self.tok.kind == "ident":
                    raise self.error("variable declarations are not supported")
                self.expect(";")
                self.add_decl(decl, t)
            elif t.text == "enum":
                self.enum_definition()
            elif t.text == "union":
                raise self.error("unions are not supported")
            else:
                raise self.error(f"unexpected {t.text!r} at top level")
        for alias, (kind, target) in self.aliases.items():
            if kind != "struct":
                continue
            decl = self.by_name.get(target)
            if decl is not None and decl.typedef_alias is None:
                decl.typedef_alias = alias
        return self.decls

    def add_decl(self, decl, tok):
        if decl.name in self.by_name:
            raise self.error(f"redefinition of struct {decl.name!r}", tok)
        self.by_name[decl.name] = decl
        self.decls.append(decl)

    def typedef(self):
        start = self.expect("typedef")
        if self.tok.text in ("struct", "class"):
            kw = self.tok
            if self.peek(2).text == "{" or self.peek().text == "{":
                decl = self.struct_definition()
                self.add_decl(decl, kw)
                name = decl.name
            else:
                self.advance()
                name = self.ident("struct name").text
            ptr = self.stars()
            alias = self.ident("typedef name")
            self.expect(";")
            self.set_alias(alias, ("scalar", "pointer") if ptr else ("struct", name))
            return
        if self.tok.text == "union":
            raise self.error("unions are not supported")
        if self.tok.text == "enum":
            self.enum_definition(allow_alias=True)
            return
        ref, _ = self.base_type()
        ptr = self.stars()
        alias = self.ident("typedef name")
        self.expect(";")
        if ptr:
            kind = ("scalar", "pointer")
        elif ref.kind == "struct":
            kind = ("struct", ref.name)
        elif ref.name == "void":
            raise self.error("typedef of void is not supported", start)
        else:
            kind = ("scalar", ref.name)
        self.set_alias(alias, kind)

    def set_alias(self, alias_tok, target):
        name = alias_tok.text
        if name in self.aliases and self.aliases[name] != target:
            raise self.error(f"conflicting typedef {name!r}", alias_tok)
        self.aliases[name] = target
        self.alias_sites[name] = alias_tok

    def enum_definition(self, allow_alias=False):
        self.expect("enum")
        if self.tok.kind == "ident":
            self.advance()
        if self.tok.text == "{":
            depth = 0
            while True:
                t = self.advance()
                if t.kind == "eof":
                    raise self.error("unterminated enum body", t)
                depth += t.text == "{"
                depth -= t.text == "}"
                if depth == 0:
                    break
        if allow_alias:
            alias = self.ident("typedef name")
            self.set_alias(alias, ("scalar", "int"))
        self.expect(";")

    def struct_definition(self):
        kw = self.advance()
        if self.tok.text == "{":
            raise self.error("anonymous structs are not supported")
        name = self.ident("struct name").text
        if self.tok.text == ":":
            raise self.error("base classes are not supported")
        self.expect("{")
        decl = StructDecl(name=name, is_class=kw.text == "class")
        members: list[MemberDecl] = []
        seen: set[str] = set()
        while self.tok.text != "}":
            if self.tok.kind == "eof":
                raise self.error(f"unterminated body of {kw.text} {name}")
            self.member(decl, members, seen)
        self.expect("}")
        decl.members = tuple(members)
        return decl

    def statement_span(self):
        """Indices [i, j) of the member statement starting at the cursor."""
        j = self.i
        while True:
            t = self.toks[j]
            if t.kind == "eof" or t.text in (";", "}"):
                return j
            if t.text == "{":
                return j
            j += 1

    def member(self, decl, members, seen):
        t = self.tok
        if t.text in ("public", "private", "protected") and self.peek().text == ":":
            self.advance()
            self.advance()
            return
        if t.text == ";":
            self.advance()
            return
        end = self.statement_span()
        texts = [x.text for x in self.toks[self.i:end]]
        if "(" in texts:
            k = texts.index("(")
            if not (k + 1 < len(texts) and texts[k + 1] == "*"):
                self.skip_member_function(end)
                decl.member_function_count += 1
                return
        if t.text == "union":
            raise self.error("unions are not supported")
        if t.text in ("struct", "class") and self.peek().text == "{":
            raise self.error("anonymous structs are not supported")
        if t.text in ("struct", "class") and self.peek(2).text == "{":
            raise self.error("nested struct definitions are not supported; declare it separately")
        if self.toks[end].text == "{":
            raise self.error("unexpected '{' in member declaration", self.toks[end])
        base = self.base_type(owner=decl.name)
        while True:
            mtok, mref = self.declarator(base, owner=decl.name)
            if mtok.text in seen:
                raise self.error(f"duplicate member {mtok.text!r} in {decl.name}", mtok, DuplicateMemberError)
            seen.add(mtok.text)
            members.append(MemberDecl(mtok.text, mref))
            if self.tok.text == ",":
                self.advance()
                continue
            if self.tok.text == ":":
                raise self.error("bit-fields are not supported")
            self.expect(";")
            return

    def skip_member_function(self, end):
        self.i = end
        if self.tok.text == "{":
            depth = 0
            while True:
                t = self.advance()
                if t.kind == "eof":
                    raise self.error("unterminated member function body", t)
                depth += t.text == "{"
                depth -= t.text == "}"
                if depth == 0:
                    break
            if self.tok.text == ";":
                self.advance()
        else:
            self.expect(";")

    def stars(self):
        n = 0
        while self.tok.text in ("*", "const", "volatile"):
            n += self.advance().text == "*"
        return n

    def base_type(self, owner=None):
        """Parse a type specifier; pointer-ness is decided by the declarator."""
        start = self.tok
        words = []
        while self.tok.text in _QUALIFIERS:
            words.append(self.advance().text)
        t = self.tok
        if t.text in ("struct", "class"):
            self.advance()
            name = self.ident("struct name")
            return TypeRef("struct", name.text, pointee=name.text), name
        if t.text == "enum":
            self.advance()
            name = self.ident("enum name")
            return TypeRef("scalar", "int", pointee=f"enum {name.text}"), name
        if t.text == "union":
            raise self.error("unions are not supported")
        base = []
        while self.tok.kind == "ident" and self.tok.text in _BASE_WORDS:
            base.append(self.advance().text)
            while self.tok.text in _QUALIFIERS:
                words.append(self.advance().text)
        if base:
            return self.scalar_from_words(base, start), start
        if self.tok.kind == "ident" and (self.tok.text in _FIXED_WIDTH or self.tok.text in self.aliases):
            name = self.advance()
            if name.text in self.aliases:
                kind, target = self.aliases[name.text]
                if kind == "struct":
                    return TypeRef("struct", target, pointee=name.text), name
                return TypeRef("scalar", target, pointee=name.text), name
            return TypeRef("scalar", _FIXED_WIDTH[name.text], pointee=name.text), name
        if words and any(w in ("unsigned", "signed") for w in words):
            return TypeRef("scalar", "int"), start
        if self.tok.kind == "ident":
            # may still be a pointer to an undeclared type; the declarator decides
            name = self.advance()
            return TypeRef("unknown", name.text, pointee=name.text), name
        shown = self.tok.text or "end of input"
        raise self.error(f"expected a type, found {shown!r}")

    def scalar_from_words(self, words, tok):
        key = " ".join(w for w in words if w != "int" or len(words) == 1)
        table = {
            "char": "char", "short": "short", "int": "int", "long": "long",
            "long long": "longlong", "float": "float", "double": "double",
            "long double": "double", "void": "void",
        }
        if key not in table:
            raise self.error(f"unsupported type {' '.join(words)!r}", tok)
        if key == "long double":
            raise self.error("long double is not supported", tok)
        return TypeRef("scalar", table[key])

    def declarator(self, base_and_tok, owner):
        base, btok = base_and_tok
        if self.tok.text == "(":
            # function pointer: (*name)(...)
            self.advance()
            self.expect("*")
            name = self.ident("member name")
            self.expect(")")
            self.expect("(")
            depth = 1
            while depth:
                t = self.advance()
                if t.kind == "eof":
                    raise self.error("unterminated parameter list", t)
                depth += t.text == "("
                depth -= t.text == ")"
            return name, self.array_suffix(TypeRef("scalar", "pointer", pointee="function"))
        ptr = self.stars()
        name = self.ident("member name")
        if ptr:
            ref = TypeRef("scalar", "pointer", pointee=base.pointee or base.name)
        elif base.kind == "unknown":
            raise self.error(f"unknown type {base.name!r}", btok, UnresolvedTypeError)
        elif base.name == "void":
            raise self.error("member of type void", btok)
        elif base.kind == "struct":
            target = self.by_name.get(base.name)
            if target is None:
                if base.name == owner:
                    raise self.error(f"struct {owner} contains itself by value", btok, UnresolvedTypeError)
                raise self.error(f"unresolved struct {base.name!r}", btok, UnresolvedTypeError)
            ref = TypeRef("struct", base.name, struct=target)
        else:
            ref = TypeRef("scalar", base.name, pointee=base.pointee)
        return name, self.array_suffix(ref)

    def array_suffix(self, ref):
        if self.tok.text != "[":
            return ref
        dims = []
        while self.tok.text == "[":
            self.advance()
            if self.tok.kind != "number":
                raise self.error("array size must be an integer literal")
            dims.append(int(self.advance().text, 0))
            self.expect("]")
        count = 1
        for d in dims:
            count *= d
        return TypeRef(ref.kind, ref.name, struct=ref.struct, count=count, pointee=ref.pointee)


def parse_decls(source_text: str) -> list[StructDecl]:
    """Parse declarations in source order.

    Raises :class:`DeclSyntaxError` (with ``line``/``col``) on malformed
    input, :class:`UnresolvedTypeError` for by-value references to
    undeclared structs, and :class:`DuplicateMemberError`.
    """
    return _Parser(source_text).parse()


# --------------------------------------------------------------------------
# layout

@dataclass(frozen=True)
class LayoutEntry:
    """One scalar leaf.  ``count > 1`` marks a run of array elements."""

    path: str
    kind: ScalarKind
    offset: int
    count: int = 1

    @property
    def size(self):
        return self.kind.size * self.count

    @property
    def end(self):
        return self.offset + self.size


@dataclass(frozen=True)
class FlattenedLayout:
    type_name: str
    entries: tuple[LayoutEntry, ...]
    total_size: int
    align: int
    abi: ABIProfile = LP64

    def entry(self, path):
        for e in self.entries:
            if e.path == path:
                return e
        raise KeyError(path)

    def offset_of(self, path):
        return self.entry(path).offset

    @property
    def paths(self):
        return [e.path for e in self.entries]

    def scalar_count(self):
        return sum(e.count for e in self.entries)


# hard limit on entries produced by expanding arrays of structs
MAX_ENTRIES = 1 << 16


def _align_up(value, align):
    return -(-value // align) * align


def _place(decl, abi, base, prefix, out, stack, array_cap):
    if decl.name in stack:
        raise LayoutError(f"struct {decl.name} contains itself by value")
    stack = stack | {decl.name}
    off = 0
    max_align = 1
    for m in decl.members:
        ref = m.type
        if ref.count is not None and ref.count <= 0:
            raise LayoutError(f"{decl.name}.{m.name}: array size must be positive")
        if ref.kind == "struct":
            inner = ref.struct
            if inner is None:
                raise LayoutError(f"{decl.name}.{m.name}: unresolved struct {ref.name}")
            probe: list[LayoutEntry] = []
            size, align = _place(inner, abi, 0, "", probe, stack, array_cap)
        else:
            kind = abi.scalar(ref.name)
            size, align = kind.size, kind.align
        if not abi.packed:
            off = _align_up(off, align)
        max_align = max(max_align, align)
        count = ref.count or 1
        path = prefix + m.name
        if ref.kind == "struct":
            for k in range(count):
                sub = f"{path}[{k}]." if ref.count is not None else path + "."
                _place(inner, abi, base + off + k * size, sub, out, stack, array_cap)
                if len(out) > MAX_ENTRIES:
                    raise LayoutError(f"{decl.name}: flattened layout exceeds {MAX_ENTRIES} entries")
        elif ref.count is None:
            out.append(LayoutEntry(path, kind, base + off))
        elif count <= array_cap:
            for k in range(count):
                out.append(LayoutEntry(f"{path}[{k}]", kind, base + off + k * size))
        else:
            out.append(LayoutEntry(path, kind, base + off, count))
        off += size * count
    total = off if abi.packed else _align_up(off, max_align)
    return total, (1 if abi.packed else max_align)


def layout(decl: StructDecl, abi: ABIProfile = LP64, *, array_cap: int = 16) -> FlattenedLayout:
    """Place members sequentially and flatten nested structs into dotted paths.

    Scalar arrays of at most ``array_cap`` elements become one entry per
    element (``mat[0]``, ``mat[1]``, ...); longer ones stay a single entry
    with ``count`` set.  Arrays of structs are always expanded.
    """
    entries: list[LayoutEntry] = []
    total, align = _place(decl, abi, 0, "", entries, frozenset(), array_cap)
    return FlattenedLayout(decl.name, tuple(entries), total, align, abi)


def scalar_layout(name: str, abi: ABIProfile = LP64) -> FlattenedLayout:
    """Layout of a bare scalar target type such as ``double`` or ``int64_t``."""
    key = _FIXED_WIDTH.get(name, name)
    key = {"long long": "longlong"}.get(key, key)
    if key.endswith("*"):
        key = "pointer"
    kind = abi.scalar(key)
    return FlattenedLayout(name, (LayoutEntry("", kind, 0),), kind.size, kind.align, abi)


# --------------------------------------------------------------------------
# classification

@dataclass(frozen=True)
class CriteriaResult:
    c1: str
    c2: str
    c3: str

    def __post_init__(self):
        if (self.c1 == "N") != (self.c2 == "NA" and self.c3 == "NA"):
            raise ValueError("c2/c3 are NA exactly when c1 is N")

    def as_tuple(self):
        return (self.c1, self.c2, self.c3)


def classify(layout: FlattenedLayout, is_composite: bool) -> CriteriaResult:
    """Apply the three interleaving criteria to a flattened target type.

    C2 needs a pointer plus some non-pointer member; C3 needs a floating
    member plus any other member, which may itself be floating.
    """
    if not is_composite:
        return CriteriaResult("N", "NA", "NA")
    cats = [e.kind.category for e in layout.entries]
    has_ptr = "pointer" in cats
    has_other = any(c != "pointer" for c in cats)
    has_float = "floating" in cats
    c2 = has_ptr and has_other
    c3 = has_float and layout.scalar_count() >= 2
    return CriteriaResult("Y", "Y" if c2 else "N", "Y" if c3 else "N")
