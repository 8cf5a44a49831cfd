"""Symbol extraction from preprocessed C translation units.

A restricted declaration grammar is parsed natively: records, unions, enums,
typedefs, function declarators (pointers, arrays, function pointers), and
globals. Expression parsing is limited to identifier harvesting, which is all
reference collection needs. Declarations originating outside the project root
(system headers pulled in by the real build) are not emitted; only their type
names are harvested so project declarations referring to them still parse.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .buildctx import PreprocessedUnit

logger = logging.getLogger(__name__)

C_KEYWORDS = {
    "auto", "break", "case", "char", "const", "continue", "default", "do",
    "double", "else", "enum", "extern", "float", "for", "goto", "if", "inline",
    "int", "long", "register", "restrict", "return", "short", "signed",
    "sizeof", "static", "struct", "switch", "typedef", "union", "unsigned",
    "void", "volatile", "while", "_Bool", "_Noreturn", "_Static_assert",
    "_Alignof", "_Alignas", "_Atomic", "_Thread_local",
}

PRIMITIVE_WORDS = {
    "void", "char", "short", "int", "long", "float", "double", "signed",
    "unsigned", "_Bool",
}

TYPE_QUALIFIERS = {"const", "volatile", "restrict", "_Atomic", "__restrict", "__restrict__"}
STORAGE_WORDS = {"static", "extern", "typedef", "register", "auto", "_Thread_local"}
SKIP_WORDS = {"inline", "_Noreturn", "__inline", "__inline__", "__extension__", "__signed__"}

# well-known aliases that may come from skipped system headers
KNOWN_ENV_TYPEDEFS = {
    "size_t", "ssize_t", "ptrdiff_t", "intptr_t", "uintptr_t", "wchar_t",
    "int8_t", "int16_t", "int32_t", "int64_t",
    "uint8_t", "uint16_t", "uint32_t", "uint64_t",
}


@dataclass
class CTypeDef:
    """One C type definition in declaration order.

    For records/unions, members are (name, c_type_text, bit_width). For
    enumerations, members are (constant name, resolved value text, None).
    For aliases, a single ("", target type text, None) entry.
    """

    name: str
    kind: str  # record | union | enumeration | alias
    members: list[tuple[str, str, Optional[int]]]
    source_loc: str
    layout_sensitive: bool = False
    opaque: bool = False


@dataclass
class CFunctionDecl:
    name: str
    return_type: str
    params: list[tuple[Optional[str], str]]
    variadic: bool
    storage: str  # external | internal
    defined_here: bool
    source_loc: str
    # reference harvest from the body (definitions only)
    calls: set[str] = field(default_factory=set)
    value_refs: set[str] = field(default_factory=set)
    source_text: str = ""


@dataclass
class CGlobalDecl:
    name: str
    c_type_text: str
    initializer_text: Optional[str]
    storage: str  # external | internal
    mutable: bool
    source_loc: str
    is_definition: bool = True


@dataclass
class SymbolTable:
    unit: Optional[PreprocessedUnit]
    types: list[CTypeDef] = field(default_factory=list)
    functions: list[CFunctionDecl] = field(default_factory=list)
    globals: list[CGlobalDecl] = field(default_factory=list)
    external_refs: set[str] = field(default_factory=set)
    partial: bool = False
    issues: list[str] = field(default_factory=list)
    env_types: set[str] = field(default_factory=set)


@dataclass
class _Tok:
    text: str
    kind: str  # ident | num | str | char | punct
    file: str
    line: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<num>(?:0[xX][0-9a-fA-F]+|\d+\.?\d*(?:[eE][+-]?\d+)?)[uUlLfF]*)
  | (?P<str>"(?:\\.|[^"\\])*")
  | (?P<char>'(?:\\.|[^'\\])+')
  | (?P<punct>\.\.\.|->|<<=|>>=|<<|>>|<=|>=|==|!=|&&|\|\||\+\+|--|[-+*/%&|^~!<>=?:;,.(){}\[\]])
    """,
    re.VERBOSE,
)

_LINE_MARKER = re.compile(r'^#\s+(\d+)\s+"([^"]*)"')


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    cur_file = "<unit>"
    cur_line = 1
    for raw in text.splitlines():
        m = _LINE_MARKER.match(raw)
        if m:
            cur_line = int(m.group(1))
            cur_file = m.group(2)
            continue
        if raw.lstrip().startswith("#"):
            cur_line += 1
            continue
        for tm in _TOKEN_RE.finditer(raw):
            kind = tm.lastgroup or "punct"
            toks.append(_Tok(tm.group(0), kind, cur_file, cur_line))
        cur_line += 1
    return toks


def _is_project_file(file: str, project_root: Path, base_dir: Path) -> bool:
    if file.startswith("<"):
        return False
    try:
        p = Path(file)
        if not p.is_absolute():
            # line markers are relative to the compiler's working directory
            p = base_dir / p
        return p.resolve().is_relative_to(project_root)
    except (OSError, ValueError):
        return False


_ENV_TYPEDEF_RE = re.compile(r"\btypedef\b[^;{]*?(\w+)\s*;")
_ENV_TAG_RE = re.compile(r"\b(?:struct|union|enum)\s+(\w+)")
_ENV_FNPTR_TYPEDEF_RE = re.compile(r"\btypedef\b[^;]*\(\s*\*\s*(\w+)\s*\)")


def _harvest_env_names(text_chunk: str, env_types: set[str]) -> None:
    for m in _ENV_TYPEDEF_RE.finditer(text_chunk):
        env_types.add(m.group(1))
    for m in _ENV_FNPTR_TYPEDEF_RE.finditer(text_chunk):
        env_types.add(m.group(1))
    for m in _ENV_TAG_RE.finditer(text_chunk):
        env_types.add(m.group(1))


class _Parser:
    def __init__(self, toks: list[_Tok], table: SymbolTable):
        self.toks = toks
        self.pos = 0
        self.table = table
        self.typedefs: set[str] = set(KNOWN_ENV_TYPEDEFS) | set(table.env_types)
        self.record_tags: set[str] = set()
        self.enum_constants: set[str] = set()
        self.anon_counter = 0
        self._decl_start: Optional[_Tok] = None

    # --- token helpers -------------------------------------------------

    def peek(self, off: int = 0) -> Optional[_Tok]:
        i = self.pos + off
        return self.toks[i] if i < len(self.toks) else None

    def next(self) -> Optional[_Tok]:
        t = self.peek()
        if t is not None:
            self.pos += 1
        return t

    def at(self, text: str, off: int = 0) -> bool:
        t = self.peek(off)
        return t is not None and t.text == text

    def expect(self, text: str) -> None:
        t = self.next()
        if t is None or t.text != text:
            got = t.text if t else "<eof>"
            raise _Unsupported(f"expected '{text}', got '{got}'", t)

    def loc(self, tok: Optional[_Tok]) -> str:
        if tok is None:
            return "<eof>"
        return f"{tok.file}:{tok.line}"

    def skip_balanced(self, open_t: str, close_t: str) -> list[_Tok]:
        """Consume from the current open token through its match; return span."""
        span: list[_Tok] = []
        depth = 0
        while True:
            t = self.next()
            if t is None:
                raise _Unsupported(f"unbalanced '{open_t}'", None)
            span.append(t)
            if t.text == open_t:
                depth += 1
            elif t.text == close_t:
                depth -= 1
                if depth == 0:
                    return span

    def skip_attributes(self) -> None:
        while True:
            t = self.peek()
            if t is None:
                return
            if t.text in ("__attribute__", "__attribute", "__declspec", "_Alignas"):
                self.next()
                if self.at("("):
                    self.skip_balanced("(", ")")
                continue
            if t.text in ("__asm__", "__asm", "asm") and self.at("(", 1):
                self.next()
                self.skip_balanced("(", ")")
                continue
            return

    def recover_to_semicolon(self) -> None:
        depth = 0
        while True:
            t = self.next()
            if t is None:
                return
            if t.text in "({[":
                depth += 1
            elif t.text in ")}]":
                depth -= 1
            elif t.text == ";" and depth <= 0:
                return

    # --- top level ------------------------------------------------------

    def parse(self) -> None:
        while self.peek() is not None:
            start = self.pos
            try:
                self.parse_external_decl()
            except _Unsupported as exc:
                tok = exc.tok or self.peek(-1)
                self.table.partial = True
                self.table.issues.append(f"{exc.construct} at {self.loc(tok)}")
                logger.warning("unsupported construct: %s at %s", exc.construct, self.loc(tok))
                if self.pos == start:
                    self.next()
                self.recover_to_semicolon()

    def parse_external_decl(self) -> None:
        self.skip_attributes()
        t = self.peek()
        self._decl_start = t
        if t is None:
            return
        if t.text == ";":
            self.next()
            return
        if t.text == "_Static_assert":
            self.next()
            if self.at("("):
                self.skip_balanced("(", ")")
            if self.at(";"):
                self.next()
            return

        storage = "external"
        is_typedef = False
        is_extern = False
        while True:
            self.skip_attributes()
            t = self.peek()
            if t is None:
                return
            if t.text in STORAGE_WORDS:
                if t.text == "static":
                    storage = "internal"
                elif t.text == "extern":
                    is_extern = True
                elif t.text == "typedef":
                    is_typedef = True
                self.next()
                continue
            if t.text in SKIP_WORDS or t.text in TYPE_QUALIFIERS and t.text != "const":
                self.next()
                continue
            break

        is_const, base = self.parse_base_type()
        self.skip_attributes()

        if self.at(";"):
            self.next()
            return  # bare type definition or forward declaration

        first = True
        while True:
            decl = self.parse_declarator(base, is_const)
            self.skip_attributes()
            if decl.is_function and self.at("{") and first:
                body = self.skip_balanced("{", "}")
                self.make_function(decl, storage, defined=True, body=body)
                return
            if decl.is_function:
                self.make_function(decl, storage, defined=False, body=None)
            else:
                init = None
                if self.at("="):
                    self.next()
                    init = self.capture_initializer()
                self.make_global(decl, storage, is_extern, is_typedef, init)
            first = False
            if self.at(","):
                self.next()
                continue
            self.expect(";")
            return

    # --- specifiers -----------------------------------------------------

    def parse_base_type(self) -> tuple[bool, str]:
        """Return (const, canonical base type text)."""
        is_const = False
        words: list[str] = []
        while True:
            self.skip_attributes()
            t = self.peek()
            if t is None:
                raise _Unsupported("truncated declaration", None)
            if t.text == "const":
                is_const = True
                self.next()
                continue
            if t.text in TYPE_QUALIFIERS or t.text in SKIP_WORDS:
                self.next()
                continue
            if t.text in ("struct", "union"):
                return is_const, self.parse_record(t.text)
            if t.text == "enum":
                return is_const, self.parse_enum()
            if t.text in PRIMITIVE_WORDS:
                words.append(t.text)
                self.next()
                while True:
                    nxt = self.peek()
                    if nxt is not None and nxt.text in PRIMITIVE_WORDS:
                        words.append(nxt.text)
                        self.next()
                    elif nxt is not None and nxt.text == "const":
                        is_const = True
                        self.next()
                    else:
                        break
                return is_const, _canon_primitive(words)
            if t.kind == "ident" and t.text not in C_KEYWORDS:
                # typedef name (possibly harvested from the environment)
                self.next()
                return is_const, t.text
            raise _Unsupported(f"unrecognized type specifier '{t.text}'", t)

    def parse_record(self, keyword: str) -> str:
        kw_tok = self.next()  # struct | union
        assert kw_tok is not None
        self.skip_attributes()
        tag = None
        t = self.peek()
        if t is not None and t.kind == "ident" and t.text not in C_KEYWORDS:
            tag = t.text
            self.next()
        self.skip_attributes()
        if self.at("{"):
            name = tag or self.synth_anon_name(kw_tok)
            members, has_bits = self.parse_member_list()
            self.record_tags.add(name)
            self.table.types.append(
                CTypeDef(
                    name=name,
                    kind="record" if keyword == "struct" else "union",
                    members=members,
                    source_loc=self.loc(kw_tok),
                    layout_sensitive=has_bits,
                )
            )
            return f"{keyword} {name}"
        if tag is None:
            raise _Unsupported(f"anonymous {keyword} without body", kw_tok)
        return f"{keyword} {tag}"

    def parse_member_list(self) -> tuple[list[tuple[str, str, Optional[int]]], bool]:
        self.expect("{")
        members: list[tuple[str, str, Optional[int]]] = []
        has_bits = False
        while not self.at("}"):
            self.skip_attributes()
            if self.at(";"):
                self.next()
                continue
            is_const, base = self.parse_base_type()
            if self.at(";"):
                # anonymous member (C11 anonymous struct/union)
                members.append((f"anon{len(members)}", base, None))
                self.next()
                continue
            while True:
                decl = self.parse_declarator(base, is_const)
                width: Optional[int] = None
                if self.at(":"):
                    self.next()
                    wt = self.next()
                    if wt is None or wt.kind != "num":
                        raise _Unsupported("non-literal bit-field width", wt)
                    width = int(wt.text.rstrip("uUlL"), 0)
                    has_bits = True
                if decl.is_function:
                    raise _Unsupported("function member", None)
                members.append((decl.name or f"anon{len(members)}", decl.type_text, width))
                self.skip_attributes()
                if self.at(","):
                    self.next()
                    continue
                self.expect(";")
                break
        self.expect("}")
        self.skip_attributes()
        return members, has_bits

    def parse_enum(self) -> str:
        kw_tok = self.next()
        assert kw_tok is not None
        self.skip_attributes()
        tag = None
        t = self.peek()
        if t is not None and t.kind == "ident" and t.text not in C_KEYWORDS:
            tag = t.text
            self.next()
        if self.at("{"):
            name = tag or self.synth_anon_name(kw_tok)
            self.expect("{")
            members: list[tuple[str, str, Optional[int]]] = []
            next_value = 0
            while not self.at("}"):
                et = self.next()
                if et is None or et.kind != "ident":
                    raise _Unsupported("bad enumerator", et)
                value = next_value
                if self.at("="):
                    self.next()
                    value = self.parse_enum_value()
                members.append((et.text, str(value), None))
                self.enum_constants.add(et.text)
                next_value = value + 1
                if self.at(","):
                    self.next()
            self.expect("}")
            self.table.types.append(
                CTypeDef(
                    name=name, kind="enumeration", members=members, source_loc=self.loc(kw_tok)
                )
            )
            return f"enum {name}"
        if tag is None:
            raise _Unsupported("anonymous enum without body", kw_tok)
        return f"enum {tag}"

    def parse_enum_value(self) -> int:
        sign = 1
        if self.at("-"):
            self.next()
            sign = -1
        elif self.at("+"):
            self.next()
        t = self.next()
        if t is None:
            raise _Unsupported("truncated enumerator value", None)
        if t.kind == "num":
            return sign * int(t.text.rstrip("uUlL"), 0)
        if t.kind == "char":
            return sign * _char_value(t.text)
        raise _Unsupported("non-literal enumerator value", t)

    def synth_anon_name(self, tok: _Tok) -> str:
        self.anon_counter += 1
        stem = re.sub(r"\W", "_", Path(tok.file).stem) or "unit"
        name = f"Anon_{stem}_{self.anon_counter}"
        logger.info("synthesized name %s for anonymous type at %s", name, self.loc(tok))
        return name

    # --- declarators ----------------------------------------------------

    def parse_declarator(self, base: str, base_const: bool) -> "_Declarator":
        ptr = 0
        while self.at("*"):
            self.next()
            ptr += 1
            while True:
                t = self.peek()
                if t is not None and (t.text in TYPE_QUALIFIERS or t.text == "const"):
                    self.next()
                else:
                    break
        self.skip_attributes()

        name: Optional[str] = None
        inner_ptr = 0
        t = self.peek()
        if t is not None and t.text == "(" and self._looks_like_fnptr():
            self.next()  # (
            while self.at("*"):
                self.next()
                inner_ptr += 1
            nt = self.peek()
            if nt is not None and nt.kind == "ident" and nt.text not in C_KEYWORDS:
                name = nt.text
                self.next()
            self.expect(")")
            params, variadic = self.parse_params()
            ret = _render_type(base, base_const, ptr, [])
            if inner_ptr != 1:
                raise _Unsupported("multi-level function pointer", t)
            param_text = ", ".join(p[1] for p in params) if params else "void"
            type_text = f"{ret} (*)({param_text})"
            dims = self.parse_array_dims()
            for d in reversed(dims):
                type_text = f"{type_text} [{d}]"
            return _Declarator(name=name, type_text=type_text, is_function=False)
        if t is not None and t.kind == "ident" and t.text not in C_KEYWORDS:
            name = t.text
            self.next()
        self.skip_attributes()

        if self.at("("):
            params, variadic = self.parse_params()
            return _Declarator(
                name=name,
                type_text=_render_type(base, base_const, ptr, []),
                is_function=True,
                params=params,
                variadic=variadic,
            )
        dims = self.parse_array_dims()
        return _Declarator(name=name, type_text=_render_type(base, base_const, ptr, dims))

    def _looks_like_fnptr(self) -> bool:
        return self.at("(") and (self.at("*", 1) or self.at("*", 2))

    def parse_array_dims(self) -> list[int]:
        dims: list[int] = []
        while self.at("["):
            self.next()
            if self.at("]"):
                self.next()
                dims.append(0)  # incomplete array
                continue
            t = self.next()
            if t is None or t.kind != "num":
                raise _Unsupported("non-literal array dimension", t)
            dims.append(int(t.text.rstrip("uUlL"), 0))
            self.expect("]")
        return dims

    def parse_params(self) -> tuple[list[tuple[Optional[str], str]], bool]:
        self.expect("(")
        params: list[tuple[Optional[str], str]] = []
        variadic = False
        if self.at(")"):
            self.next()
            return params, variadic
        while True:
            if self.at("..."):
                self.next()
                variadic = True
                break
            is_const, base = self.parse_base_type()
            decl = self.parse_declarator(base, is_const)
            if decl.is_function:
                # function-typed parameter decays to a function pointer
                ptext = ", ".join(p[1] for p in decl.params) if decl.params else "void"
                decl = _Declarator(
                    name=decl.name, type_text=f"{decl.type_text} (*)({ptext})", is_function=False
                )
            if decl.type_text != "void" or decl.name is not None:
                params.append((decl.name, decl.type_text))
            if self.at(","):
                self.next()
                continue
            break
        self.expect(")")
        return params, variadic

    def capture_initializer(self) -> str:
        parts: list[str] = []
        depth = 0
        while True:
            t = self.peek()
            if t is None:
                break
            if depth == 0 and t.text in (",", ";"):
                break
            if t.text in "({[":
                depth += 1
            elif t.text in ")}]":
                depth -= 1
            parts.append(t.text)
            self.next()
        return " ".join(parts)

    # --- result construction ---------------------------------------------

    def make_function(
        self,
        decl: "_Declarator",
        storage: str,
        defined: bool,
        body: Optional[list[_Tok]],
    ) -> None:
        if decl.name is None:
            raise _Unsupported("unnamed function declarator", None)
        tok = self._decl_start or self.peek(-1)
        fn = CFunctionDecl(
            name=decl.name,
            return_type=decl.type_text,
            params=decl.params,
            variadic=decl.variadic,
            storage=storage,
            defined_here=defined,
            source_loc=self.loc(tok),
        )
        if body is not None:
            calls, values = _harvest_body_refs(body, self.typedefs, self.record_tags)
            param_names = {p[0] for p in decl.params if p[0]}
            # calls through function-pointer parameters are indirect call sites
            fn.calls = calls - {decl.name} - param_names
            fn.value_refs = values - param_names - {decl.name}
        # a definition supersedes any earlier prototype of the same name
        if defined:
            self.table.functions = [f for f in self.table.functions if f.name != fn.name]
            self.table.functions.append(fn)
        elif not any(f.name == fn.name for f in self.table.functions):
            self.table.functions.append(fn)

    def make_global(
        self,
        decl: "_Declarator",
        storage: str,
        is_extern: bool,
        is_typedef: bool,
        init: Optional[str],
    ) -> None:
        if decl.name is None:
            raise _Unsupported("unnamed declarator", None)
        tok = self._decl_start or self.peek(-1)
        if is_typedef:
            self.typedefs.add(decl.name)
            self.table.types.append(
                CTypeDef(
                    name=decl.name,
                    kind="alias",
                    members=[("", decl.type_text, None)],
                    source_loc=self.loc(tok),
                )
            )
            return
        # only a top-level const (no pointer declarator) makes the object itself
        # immutable; `const char *` is a mutable pointer to const data
        mutable = not (decl.type_text.startswith("const ") and "*" not in decl.type_text)
        self.table.globals.append(
            CGlobalDecl(
                name=decl.name,
                c_type_text=decl.type_text,
                initializer_text=init,
                storage="internal" if storage == "internal" else "external",
                mutable=mutable,
                source_loc=self.loc(tok),
                is_definition=not (is_extern and init is None),
            )
        )


@dataclass
class _Declarator:
    name: Optional[str]
    type_text: str
    is_function: bool = False
    params: list[tuple[Optional[str], str]] = field(default_factory=list)
    variadic: bool = False


class _Unsupported(Exception):
    def __init__(self, construct: str, tok: Optional[_Tok]):
        self.construct = construct
        self.tok = tok
        super().__init__(construct)


def _canon_primitive(words: list[str]) -> str:
    order = {"signed": 0, "unsigned": 0, "long": 2, "short": 1}
    words = sorted(words, key=lambda w: (order.get(w, 3), w == "int"))
    text = " ".join(words)
    aliases = {
        "signed": "int",
        "signed int": "int",
        "unsigned": "unsigned int",
        "short int": "short",
        "short short": "short",
        "signed short int": "short",
        "signed short": "short",
        "unsigned short int": "unsigned short",
        "long int": "long",
        "signed long int": "long",
        "signed long": "long",
        "unsigned long int": "unsigned long",
        "long long int": "long long",
        "signed long long int": "long long",
        "signed long long": "long long",
        "unsigned long long int": "unsigned long long",
        "signed char": "signed char",
    }
    return aliases.get(text, text)


def _char_value(text: str) -> int:
    inner = text[1:-1]
    table = {"\\n": 10, "\\t": 9, "\\r": 13, "\\0": 0, "\\\\": 92, "\\'": 39}
    if inner in table:
        return table[inner]
    if inner.startswith("\\x"):
        return int(inner[2:], 16)
    return ord(inner[0])


def _render_type(base: str, is_const: bool, ptr: int, dims: list[int]) -> str:
    text = base
    if is_const:
        text = f"const {text}"
    if ptr:
        text = f"{text} " + "*" * ptr
    for d in dims:
        text = f"{text} [{d}]"
    return text


_STATEMENT_TERMINATORS = {";", "{", "}"}


def _harvest_body_refs(
    body: list[_Tok], typedefs: set[str], record_tags: set[str]
) -> tuple[set[str], set[str]]:
    """Collect call-position identifiers and other value identifiers.

    Local declarations are tracked with a statement-start heuristic so locals
    are not reported as external references.
    """
    calls: set[str] = set()
    values: set[str] = set()
    locals_: set[str] = set()
    n = len(body)
    i = 0
    stmt_start = True
    while i < n:
        t = body[i]
        if t.text in _STATEMENT_TERMINATORS:
            stmt_start = True
            i += 1
            continue
        if t.text == "(" and i > 0 and body[i - 1].text == "for":
            stmt_start = True
            i += 1
            continue
        if stmt_start and _starts_declaration(body, i, typedefs):
            i = _consume_local_declaration(body, i, typedefs, locals_, calls, values)
            stmt_start = False
            continue
        stmt_start = False
        if t.kind == "ident" and t.text not in C_KEYWORDS:
            prev = body[i - 1].text if i > 0 else ""
            nxt = body[i + 1].text if i + 1 < n else ""
            if prev in (".", "->"):
                i += 1
                continue  # member access, not a symbol reference
            if nxt == "(":
                calls.add(t.text)
            else:
                values.add(t.text)
        i += 1
    values -= locals_
    calls -= locals_
    return calls, values


def _starts_declaration(body: list[_Tok], i: int, typedefs: set[str]) -> bool:
    t = body[i]
    if t.text in PRIMITIVE_WORDS or t.text in ("struct", "union", "enum"):
        return True
    if t.text in ("const", "static", "register", "volatile", "unsigned", "signed"):
        return True
    if t.kind == "ident" and t.text in typedefs:
        nxt = body[i + 1] if i + 1 < len(body) else None
        if nxt is not None and (nxt.text == "*" or nxt.kind == "ident"):
            return True
    return False


def _consume_local_declaration(
    body: list[_Tok],
    i: int,
    typedefs: set[str],
    locals_: set[str],
    calls: set[str],
    values: set[str],
) -> int:
    n = len(body)
    # skip specifier tokens
    while i < n and (
        body[i].text in PRIMITIVE_WORDS
        or body[i].text in ("struct", "union", "enum", "const", "static", "register", "volatile")
        or (body[i].kind == "ident" and body[i].text in typedefs)
    ):
        if body[i].text in ("struct", "union", "enum") and i + 1 < n and body[i + 1].kind == "ident":
            i += 1  # the tag
        i += 1
    # declarator list until ';' at depth 0; identifiers before '=' are locals
    depth = 0
    expecting_name = True
    while i < n:
        t = body[i]
        if t.text in "([{":
            depth += 1
        elif t.text in ")]}":
            depth -= 1
            if depth < 0:
                return i
        elif depth == 0 and t.text == ";":
            return i
        elif depth == 0 and t.text == ",":
            expecting_name = True
        elif depth == 0 and t.text == "=":
            expecting_name = False
        elif t.kind == "ident" and t.text not in C_KEYWORDS:
            if depth == 0 and expecting_name:
                locals_.add(t.text)
                expecting_name = False
            else:
                nxt = body[i + 1].text if i + 1 < n else ""
                prev = body[i - 1].text if i > 0 else ""
                if prev not in (".", "->"):
                    if nxt == "(":
                        calls.add(t.text)
                    else:
                        values.add(t.text)
        elif t.text == "*":
            pass  # pointer declarator, keep expecting a name
        i += 1
    return i


def extract_symbols(unit: PreprocessedUnit, project_root=None) -> SymbolTable:
    """Categorize every project-owned top-level declaration in the unit.

    Declarations whose origin file lies outside ``project_root`` (system
    headers) only contribute type names, never emitted symbols. External
    references are computed as referenced-minus-defined.
    """
    if project_root is None:
        project_root = Path(unit.origin.command.directory)
    project_root = Path(project_root).resolve()

    table = SymbolTable(unit=unit)

    # split the preprocessed text into project vs environment regions
    base_dir = Path(unit.origin.command.directory)
    project_lines: list[str] = []
    env_chunks: list[str] = []
    cur_file = str(unit.origin.command.source_path())
    cur_project = True
    for raw in unit.text.splitlines():
        m = _LINE_MARKER.match(raw)
        if m:
            cur_file = m.group(2)
            cur_project = _is_project_file(cur_file, project_root, base_dir)
            project_lines.append(raw)  # markers keep line attribution
            continue
        if cur_project:
            project_lines.append(raw)
        else:
            project_lines.append("")
            env_chunks.append(raw)
    _harvest_env_names("\n".join(env_chunks), table.env_types)

    toks = _tokenize("\n".join(project_lines))
    parser = _Parser(toks, table)
    parser.parse()

    _attach_source_text(table, unit)
    _compute_external_refs(table, parser)
    return table


def _attach_source_text(table: SymbolTable, unit: PreprocessedUnit) -> None:
    """Slice each defined function's original source via the line map."""
    main_file = str(unit.origin.command.source_path())
    try:
        original = Path(main_file).read_text(encoding="utf-8").splitlines()
    except OSError:
        original = []
    pre_lines = unit.text.splitlines()

    for fn in table.functions:
        if not fn.defined_here:
            continue
        file, line = _split_loc(fn.source_loc)
        if file != main_file or not original:
            fn.source_text = _slice_preprocessed(pre_lines, unit, fn)
            continue
        start = line - 1
        end = _find_function_end(original, start)
        if end is None:
            fn.source_text = _slice_preprocessed(pre_lines, unit, fn)
        else:
            fn.source_text = "\n".join(original[start : end + 1])


def _split_loc(loc: str) -> tuple[str, int]:
    file, _, line = loc.rpartition(":")
    try:
        return file, int(line)
    except ValueError:
        return loc, 0


def _find_function_end(lines: list[str], start: int) -> Optional[int]:
    depth = 0
    opened = False
    for i in range(start, len(lines)):
        for ch in lines[i]:
            if ch == "{":
                depth += 1
                opened = True
            elif ch == "}":
                depth -= 1
        if opened and depth <= 0:
            return i
    return None


def _slice_preprocessed(pre_lines: list[str], unit: PreprocessedUnit, fn: CFunctionDecl) -> str:
    file, line = _split_loc(fn.source_loc)
    start = None
    for out_no, origin in sorted(unit.line_map.items()):
        if origin == (file, line):
            start = out_no - 1
            break
    if start is None:
        return ""
    end = _find_function_end(pre_lines, start)
    return "\n".join(pre_lines[start : (end if end is not None else start) + 1])


def _compute_external_refs(table: SymbolTable, parser: _Parser) -> None:
    defined: set[str] = set()
    defined.update(t.name for t in table.types)
    defined.update(f.name for f in table.functions)
    defined.update(g.name for g in table.globals)
    defined.update(parser.enum_constants)

    referenced: set[str] = set()
    for fn in table.functions:
        referenced |= fn.calls | fn.value_refs
        for _, ptype in fn.params:
            referenced.update(_type_base_idents(ptype))
        referenced.update(_type_base_idents(fn.return_type))
    for t in table.types:
        if t.kind in ("record", "union"):
            for _, mtype, _ in t.members:
                referenced.update(_type_base_idents(mtype))
        elif t.kind == "alias":
            referenced.update(_type_base_idents(t.members[0][1]))
    for g in table.globals:
        referenced.update(_type_base_idents(g.c_type_text))

    table.external_refs = {
        r for r in referenced - defined - C_KEYWORDS - KNOWN_ENV_TYPEDEFS if r
    }


_PRIMITIVE_TEXTS = {
    "void", "char", "signed char", "unsigned char", "short", "unsigned short",
    "int", "unsigned int", "long", "unsigned long", "long long",
    "unsigned long long", "float", "double", "_Bool",
}


def _type_base_idents(type_text: str) -> set[str]:
    """Identifiers named by a canonical type text (tags, typedef names)."""
    out: set[str] = set()
    for m in re.finditer(r"[A-Za-z_][A-Za-z0-9_]*", type_text):
        w = m.group(0)
        if w in ("const", "struct", "union", "enum", "volatile"):
            continue
        if w in PRIMITIVE_WORDS or w in _PRIMITIVE_TEXTS:
            continue
        out.add(w)
    return out


def load_ast_dump(path, unit: Optional[PreprocessedUnit] = None) -> SymbolTable:
    """Adapter for projects beyond the native subset: one JSON declaration
    record per line, produced by an external compiler front-end.

    Record shapes:
      {"kind": "record"|"union"|"enumeration"|"alias", "name", "members", "loc"}
      {"kind": "function", "name", "return_type", "params", "variadic",
       "storage", "defined", "calls", "value_refs", "source_text", "loc"}
      {"kind": "global", "name", "type", "init", "storage", "mutable", "loc"}
    """
    import json as _json

    table = SymbolTable(unit=unit)
    enum_constants: set[str] = set()
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        rec = _json.loads(line)
        kind = rec.get("kind")
        loc = rec.get("loc", f"{path}:{line_no}")
        if kind in ("record", "union", "enumeration", "alias"):
            members = [
                (m[0], m[1], m[2] if len(m) > 2 else None) for m in rec.get("members", [])
            ]
            table.types.append(
                CTypeDef(
                    name=rec["name"],
                    kind=kind,
                    members=members,
                    source_loc=loc,
                    layout_sensitive=any(m[2] is not None for m in members),
                    opaque=bool(rec.get("opaque", False)),
                )
            )
            if kind == "enumeration":
                enum_constants.update(m[0] for m in members)
        elif kind == "function":
            table.functions.append(
                CFunctionDecl(
                    name=rec["name"],
                    return_type=rec.get("return_type", "int"),
                    params=[tuple(p) for p in rec.get("params", [])],
                    variadic=bool(rec.get("variadic", False)),
                    storage=rec.get("storage", "external"),
                    defined_here=bool(rec.get("defined", True)),
                    source_loc=loc,
                    calls=set(rec.get("calls", [])),
                    value_refs=set(rec.get("value_refs", [])),
                    source_text=rec.get("source_text", ""),
                )
            )
        elif kind == "global":
            table.globals.append(
                CGlobalDecl(
                    name=rec["name"],
                    c_type_text=rec.get("type", "int"),
                    initializer_text=rec.get("init"),
                    storage=rec.get("storage", "external"),
                    mutable=bool(rec.get("mutable", True)),
                    source_loc=loc,
                    is_definition=bool(rec.get("defined", True)),
                )
            )
        else:
            table.partial = True
            table.issues.append(f"unknown record kind {kind!r} at {loc}")

    defined: set[str] = {t.name for t in table.types}
    defined.update(f.name for f in table.functions)
    defined.update(g.name for g in table.globals)
    defined.update(enum_constants)
    referenced: set[str] = set()
    for fn in table.functions:
        referenced |= fn.calls | fn.value_refs
        referenced.update(_type_base_idents(fn.return_type))
        for _, ptype in fn.params:
            referenced.update(_type_base_idents(ptype))
    for t in table.types:
        if t.kind in ("record", "union"):
            for _, mtype, _ in t.members:
                referenced.update(_type_base_idents(mtype))
        elif t.kind == "alias" and t.members:
            referenced.update(_type_base_idents(t.members[0][1]))
    for g in table.globals:
        referenced.update(_type_base_idents(g.c_type_text))
    table.external_refs = {
        r for r in referenced - defined - C_KEYWORDS - KNOWN_ENV_TYPEDEFS if r
    }
    return table


_DEFINE_RE = re.compile(r"^[ \t]*#[ \t]*define[ \t]+(\w+)([ \t(].*)?$")
_INT_LITERAL_RE = re.compile(r"^[+-]?(?:0[xX][0-9a-fA-F]+|\d+)[uUlL]*$")
_STR_LITERAL_RE = re.compile(r'^"((?:\\.|[^"\\])*)"$')
_CHAR_LITERAL_RE = re.compile(r"^'(?:\\.|[^'\\])+'$")


def collect_macro_constants(unit: PreprocessedUnit, original_source: str) -> list[tuple[str, object]]:
    """Recover object-like macros with single-literal replacements.

    Preprocessing erases these names; recording them lets the skeleton emit
    named constants instead of bare literals. Function-like macros and
    non-literal replacements are skipped and logged.
    """
    # join backslash continuations before scanning
    source = re.sub(r"\\\r?\n", " ", original_source)
    out: list[tuple[str, object]] = []
    for line in source.splitlines():
        m = _DEFINE_RE.match(line)
        if not m:
            continue
        name, rest = m.group(1), (m.group(2) or "").strip()
        if (m.group(2) or "").startswith("("):
            logger.info("macro %s skipped: function-like", name)
            continue
        if not rest:
            continue
        body = rest.strip()
        while body.startswith("(") and body.endswith(")"):
            body = body[1:-1].strip()
        if _INT_LITERAL_RE.match(body):
            sign = -1 if body.startswith("-") else 1
            out.append((name, sign * int(body.lstrip("+-").rstrip("uUlL"), 0)))
        elif _STR_LITERAL_RE.match(body):
            out.append((name, _STR_LITERAL_RE.match(body).group(1)))
        elif _CHAR_LITERAL_RE.match(body):
            out.append((name, _char_value(body)))
        else:
            logger.info("macro %s skipped: non-literal replacement %r", name, body)
    return out
