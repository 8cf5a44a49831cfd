"""Rust skeleton synthesis.

Mirrors the C directory hierarchy into a module tree, lowers types in a
layout-preserving form, emits placeholder-bodied function stubs, lifts globals
into module-local or shared storage, and assembles a workspace that must
compile before any function logic exists.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import clayout
from .buildctx import PreprocessedUnit
from .cargo import BuildRunner, render_diagnostics
from .clayout import TypeResolver, parse_c_type
from .csyms import (
    CFunctionDecl,
    CGlobalDecl,
    CTypeDef,
    SymbolTable,
    collect_macro_constants,
    extract_symbols,
)
from .errors import SkeletonBuildError, SkeletonError

logger = logging.getLogger(__name__)

SHARED_MODULE = "crate::shared"

RUST_KEYWORDS = {
    "as", "async", "await", "break", "const", "continue", "dyn", "else",
    "enum", "extern", "false", "fn", "for", "if", "impl", "in", "let", "loop",
    "match", "mod", "move", "mut", "pub", "ref", "return", "static", "struct",
    "trait", "true", "type", "unsafe", "use", "where", "while", "union",
}
# these cannot be raw identifiers
RUST_RESERVED_RAW = {"crate", "self", "super", "Self"}

CRATE_ALLOWS = "#![allow(dead_code, non_camel_case_types, non_snake_case, non_upper_case_globals)]"

BODY_BEGIN = "// >>> rustport:body "
BODY_END = "// <<< rustport:body "
FALLBACK_MARK = "// rustport:fallback"


def sanitize_ident(name: str) -> str:
    """Make a C identifier valid in Rust, preferring raw-ident over renaming."""
    ident = re.sub(r"\W", "_", name)
    if not ident or ident[0].isdigit():
        ident = "_" + ident
    if ident in RUST_RESERVED_RAW:
        return ident + "_"
    if ident in RUST_KEYWORDS:
        return "r#" + ident
    return ident


@dataclass
class SkeletonConfig:
    crate_name: str = "translated"
    flatten_root: bool = False
    strict_holes: bool = True
    placeholder_style: str = "unimplemented"  # or "todo"
    edition: str = "2021"


@dataclass
class ModuleTree:
    crate_name: str
    # C path (project-relative, posix) <-> Rust module path ("crate::a::b")
    mapping: dict[str, str]
    reverse: dict[str, str]
    collisions: list[str] = field(default_factory=list)


@dataclass
class RustTypeDecl:
    name: str
    emitted_text: str
    repr_c: bool
    origin: CTypeDef
    module: str = SHARED_MODULE


@dataclass
class FunctionStub:
    qualified_name: str
    signature_text: str
    placeholder_body: str
    visibility: str  # public | crate | private
    origin: CFunctionDecl
    abi_sensitive: bool
    module: str
    param_names: list[str] = field(default_factory=list)
    rust_return: str = "()"


@dataclass
class LiftedStatic:
    name: str
    emitted_text: str
    module: str
    mutable: bool
    origin: CGlobalDecl
    accessor_text: str = ""


@dataclass
class NamedConstant:
    name: str
    emitted_text: str
    module: str
    value: object


@dataclass
class SkeletonProject:
    tree: ModuleTree
    types: list[RustTypeDecl]
    stubs: list[FunctionStub]
    statics: list[LiftedStatic]
    constants: list[NamedConstant]
    shared_layer: str = SHARED_MODULE
    module_symbols: dict[str, SymbolTable] = field(default_factory=dict)
    workspace_dir: Optional[Path] = None
    holes: list[str] = field(default_factory=list)
    config: SkeletonConfig = field(default_factory=SkeletonConfig)

    def stub_by_name(self, qualified: str) -> Optional[FunctionStub]:
        for s in self.stubs:
            if s.qualified_name == qualified:
                return s
        return None


def _relative_keys(project_root, source_files, config: SkeletonConfig) -> dict[str, str]:
    """Absolute source path -> the project-relative key used in the mapping."""
    root = Path(project_root).resolve()
    out: dict[str, str] = {}
    for f in source_files:
        p = Path(f).resolve()
        out[str(p)] = p.relative_to(root).as_posix()
    if config.flatten_root:
        rels = list(out.values())
        tops = {r.split("/", 1)[0] for r in rels if "/" in r}
        if len(tops) == 1 and all("/" in r for r in rels):
            prefix = next(iter(tops)) + "/"
            out = {k: v[len(prefix):] for k, v in out.items()}
    return out


def mirror_module_tree(project_root, source_files, config: Optional[SkeletonConfig] = None) -> ModuleTree:
    """Map every C source file one-to-one onto a Rust module path."""
    config = config or SkeletonConfig()
    rels = sorted(_relative_keys(project_root, source_files, config).values())
    if not rels:
        raise SkeletonError("empty project: no C source files")

    mapping: dict[str, str] = {}
    reverse: dict[str, str] = {}
    collisions: list[str] = []
    for rel in rels:
        parts = [sanitize_ident(p) for p in Path(rel).parts[:-1]]
        stem = sanitize_ident(Path(rel).stem)
        candidate = "::".join(["crate", *parts, stem])
        final = candidate
        n = 0
        while final in reverse:
            n += 1
            final = f"{candidate}_{n}"
        if final != candidate:
            collisions.append(f"{rel}: module name collision, using {final}")
            logger.warning("module name collision for %s -> %s", rel, final)
        mapping[rel] = final
        reverse[final] = rel
    return ModuleTree(
        crate_name=config.crate_name, mapping=mapping, reverse=reverse, collisions=collisions
    )


@dataclass
class TypePolicy:
    resolver: TypeResolver
    strict: bool = True
    force_repr_c: bool = True
    abi_types: set[str] = field(default_factory=set)


def lower_type(t: CTypeDef, policy: TypePolicy, module: str = SHARED_MODULE) -> RustTypeDecl:
    """Lower one C type definition to layout-preserving Rust source."""
    name = sanitize_ident(t.name)
    if t.kind == "alias":
        target = clayout.lower_type_text(t.members[0][1], policy.resolver)
        text = f"pub type {name} = {target};"
        return RustTypeDecl(name=name, emitted_text=text, repr_c=False, origin=t, module=module)

    if t.kind == "enumeration":
        values = [(sanitize_ident(m[0]), int(m[1])) for m in t.members]
        if len({v for _, v in values}) != len(values):
            # duplicate discriminants cannot become a Rust enum
            lines = [f"pub type {name} = i32;"]
            for vn, vv in values:
                lines.append(f"pub const {vn}: {name} = {vv};")
            logger.info("enum %s has duplicate discriminants; emitted as alias+consts", t.name)
            return RustTypeDecl(
                name=name, emitted_text="\n".join(lines), repr_c=False, origin=t, module=module
            )
        lines = ["#[repr(C)]", "#[derive(Clone, Copy, PartialEq)]", f"pub enum {name} {{"]
        for vn, vv in values:
            lines.append(f"    {vn} = {vv},")
        lines.append("}")
        lines.append(f"const _: () = assert!(core::mem::size_of::<{name}>() == 4);")
        return RustTypeDecl(
            name=name, emitted_text="\n".join(lines), repr_c=True, origin=t, module=module
        )

    keyword = "struct" if t.kind == "record" else "union"
    repr_c = bool(policy.force_repr_c or t.layout_sensitive or t.name in policy.abi_types)

    if t.opaque or not t.members:
        text = f"#[repr(C)]\npub struct {name} {{\n    _opaque: [u8; 0],\n}}"
        return RustTypeDecl(name=name, emitted_text=text, repr_c=True, origin=t, module=module)

    if t.layout_sensitive:
        # bit-field records become opaque byte blobs of the computed C size,
        # with accessor stubs flagged for manual follow-up
        try:
            size, align = clayout.record_size_align(t, policy.resolver)
        except SkeletonError as exc:
            if policy.strict:
                raise
            size, align = 0, 1
            logger.warning("bit-field record %s: %s", t.name, exc)
        lines = [
            f"#[repr(C, align({align}))]",
            "#[derive(Clone, Copy)]",
            f"pub struct {name} {{",
            f"    _bits: [u8; {size}],",
            "}",
            f"impl {name} {{",
        ]
        for mname, mtype, width in t.members:
            if width is None:
                continue
            acc = sanitize_ident(mname)
            mt = clayout.lower_type_text(mtype, policy.resolver)
            lines.append(f"    pub fn {acc}(&self) -> {mt} {{ unimplemented!() }}")
            lines.append(
                f"    pub fn set_{acc}(&mut self, value: {mt}) {{ let _ = value; unimplemented!() }}"
            )
        lines.append("}")
        logger.warning(
            "record %s has bit-fields; emitted as opaque %d-byte blob with accessor stubs",
            t.name,
            size,
        )
        return RustTypeDecl(
            name=name, emitted_text="\n".join(lines), repr_c=True, origin=t, module=module
        )

    lines = []
    if repr_c:
        lines.append("#[repr(C)]")
    lines.append("#[derive(Clone, Copy)]")
    lines.append(f"pub {keyword} {name} {{")
    for mname, mtype, _width in t.members:
        lowered = clayout.lower_type_text(mtype, policy.resolver)
        lines.append(f"    pub {sanitize_ident(mname)}: {lowered},")
    lines.append("}")
    if repr_c:
        try:
            size, align = clayout.record_size_align(t, policy.resolver)
            lines.append(f"const _: () = assert!(core::mem::size_of::<{name}>() == {size});")
            lines.append(f"const _: () = assert!(core::mem::align_of::<{name}>() == {align});")
        except SkeletonError:
            logger.info("no layout assertion for %s (member outside layout subset)", t.name)
    return RustTypeDecl(
        name=name, emitted_text="\n".join(lines), repr_c=repr_c, origin=t, module=module
    )


def placeholder_body(param_names: list[str], style: str = "unimplemented") -> str:
    sentinel = "todo!()" if style == "todo" else "unimplemented!()"
    if len(param_names) == 1:
        return f"let _ = {param_names[0]};\n{sentinel}"
    if param_names:
        return f"let _ = ({', '.join(param_names)});\n{sentinel}"
    return sentinel


def emit_stub(
    f: CFunctionDecl,
    module: str,
    policy: TypePolicy,
    visibility: str = "public",
    style: str = "unimplemented",
) -> FunctionStub:
    """Emit a placeholder-bodied stub with lowered signature types."""
    name = sanitize_ident(f.name)
    params: list[str] = []
    param_names: list[str] = []
    for i, (pname, ptype) in enumerate(f.params):
        rust_name = sanitize_ident(pname) if pname else f"p{i}"
        param_names.append(rust_name)
        params.append(f"{rust_name}: {clayout.lower_type_text(ptype, policy.resolver)}")
    ret = clayout.lower_type_text(f.return_type, policy.resolver, position="return")

    vis_prefix = {"public": "pub ", "crate": "pub(crate) ", "private": ""}[visibility]
    abi = 'extern "C" ' if f.storage == "external" else ""
    sig = f"{vis_prefix}{abi}fn {name}({', '.join(params)})"
    if ret != "()":
        sig += f" -> {ret}"
    abi_sensitive = f.variadic
    if f.variadic:
        # stable Rust cannot define C-variadic bodies; the fixed prefix is
        # kept and the stub flagged ABI-sensitive
        logger.warning("variadic %s: emitted with fixed parameters only", f.name)
    return FunctionStub(
        qualified_name=f"{module}::{name}",
        signature_text=sig,
        placeholder_body=placeholder_body(param_names, style),
        visibility=visibility,
        origin=f,
        abi_sensitive=abi_sensitive,
        module=module,
        param_names=param_names,
        rust_return=ret,
    )


@dataclass
class GlobalUsage:
    using_modules: set[str] = field(default_factory=set)
    defining_module: str = SHARED_MODULE


_INT_INIT_RE = re.compile(r"^[+-]?(?:0[xX][0-9a-fA-F]+|\d+)[uUlL]*$")
_FLOAT_INIT_RE = re.compile(r"^[+-]?\d+\.\d*(?:[eE][+-]?\d+)?[fF]?$")
_STR_INIT_RE = re.compile(r'^"(?:\\.|[^"\\])*"$')


def _zero_value(rust_type: str) -> str:
    if rust_type in ("f32", "f64"):
        return "0.0"
    if rust_type == "bool":
        return "false"
    if rust_type.startswith("*const"):
        return "core::ptr::null()"
    if rust_type.startswith("*mut"):
        return "core::ptr::null_mut()"
    if rust_type.startswith("Option<"):
        return "None"
    if re.fullmatch(r"[iu](8|16|32|64|size)", rust_type):
        return "0"
    return "unsafe { core::mem::zeroed() }"


def lift_global(
    g: CGlobalDecl,
    usage: GlobalUsage,
    policy: TypePolicy,
) -> LiftedStatic:
    """Lift one C global into a module-local or shared static.

    Literal and zero initializers translate directly; anything else gets a
    zeroed default plus a logged TODO marker in the emitted text.
    """
    name = sanitize_ident(g.name)
    ct = parse_c_type(g.c_type_text)
    rust_type = clayout.lower_type_text(g.c_type_text, policy.resolver)
    cross_module = len(usage.using_modules - {usage.defining_module}) >= 1
    module = SHARED_MODULE if cross_module else usage.defining_module

    todo_comment = ""
    init = (g.initializer_text or "").strip()
    str_ptr = ct.pointer_depth == 1 and clayout._strip_tag(ct.base) == "char"
    if init and _STR_INIT_RE.match(init) and str_ptr:
        literal = init[1:-1]
        rust_init = f'b"{literal}\\0".as_ptr() as {rust_type}'
    elif init and _INT_INIT_RE.match(init):
        rust_init = init.rstrip("uUlL")
    elif init and _FLOAT_INIT_RE.match(init):
        rust_init = init.rstrip("fF")
        if "." not in rust_init:
            rust_init += ".0"
    elif init in ("", "0", "{ 0 }", "{0}"):
        rust_init = _zero_value(rust_type)
    else:
        rust_init = _zero_value(rust_type)
        todo_comment = f"// TODO: translate non-literal initializer: {init}\n"
        logger.warning("global %s: initializer %r needs manual translation", g.name, init)

    mutable = g.mutable
    if not mutable and "*" in rust_type:
        # raw pointers are not Sync; a pointer-typed static must stay `mut`
        mutable = True
    vis = "pub " if g.storage == "external" or cross_module else ""
    mut = "mut " if mutable else ""
    text = f"{todo_comment}{vis}static {mut}{name}: {rust_type} = {rust_init};"

    accessor = ""
    if mutable and module == SHARED_MODULE:
        accessor = (
            f"pub fn {name}_ptr() -> *mut {rust_type} {{\n"
            f"    core::ptr::addr_of_mut!({name})\n"
            f"}}"
        )
    return LiftedStatic(
        name=name,
        emitted_text=text,
        module=module,
        mutable=mutable,
        origin=g,
        accessor_text=accessor,
    )


def _const_text(name: str, value: object) -> str:
    ident = sanitize_ident(name)
    if isinstance(value, bool):
        return f"pub const {ident}: bool = {str(value).lower()};"
    if isinstance(value, int):
        if -(2**31) <= value < 2**31:
            ty = "i32"
        elif value >= 0 and value < 2**64:
            ty = "u64" if value >= 2**63 else "i64"
        else:
            ty = "i64"
        return f"pub const {ident}: {ty} = {value};"
    escaped = str(value).replace("\\", "\\\\").replace('"', '\\"')
    return f'pub const {ident}: &str = "{escaped}";'


# --- whole-project planning --------------------------------------------------


@dataclass
class SkeletonPlan:
    config: SkeletonConfig
    tree: ModuleTree
    types: list[RustTypeDecl]
    stubs: list[FunctionStub]
    statics: list[LiftedStatic]
    constants: list[NamedConstant]
    module_symbols: dict[str, SymbolTable]
    holes: list[str]


def plan_skeleton(
    project_root,
    units: list[PreprocessedUnit],
    config: Optional[SkeletonConfig] = None,
) -> SkeletonPlan:
    """Turn preprocessed units into a complete emission plan.

    Decides type/global placement (module-local vs shared layer), stub
    visibility, and name resolution before anything is written to disk.
    """
    config = config or SkeletonConfig()
    project_root = Path(project_root).resolve()

    unit_paths = [u.origin.command.source_path() for u in units]
    tree = mirror_module_tree(project_root, unit_paths, config)

    rel_keys = _relative_keys(project_root, unit_paths, config)
    symtabs: dict[str, SymbolTable] = {}
    macro_consts: dict[str, list[tuple[str, object]]] = {}
    for unit in units:
        rel_key = rel_keys[str(unit.origin.command.source_path().resolve())]
        module = tree.mapping[rel_key]
        table = extract_symbols(unit, project_root=project_root)
        symtabs[module] = table
        try:
            source = unit.origin.command.source_path().read_text(encoding="utf-8")
        except OSError:
            source = ""
        macro_consts[module] = collect_macro_constants(unit, source)

    # macros defined in project headers land in the shared layer
    header_consts: list[tuple[str, object]] = []
    seen_headers: set[str] = set()
    for header in sorted(project_root.rglob("*.h")):
        try:
            text = header.read_text(encoding="utf-8")
        except OSError:
            continue
        for name, value in collect_macro_constants(units[0], text) if units else []:
            if name not in seen_headers:
                seen_headers.add(name)
                header_consts.append((name, value))

    # usage analysis: which modules reference which names
    uses: dict[str, set[str]] = {}
    def_modules: dict[str, list[str]] = {}
    for module, table in symtabs.items():
        names: set[str] = set(table.external_refs)
        for fn in table.functions:
            names |= fn.calls | fn.value_refs
        for name in names:
            uses.setdefault(name, set()).add(module)
        for t in table.types:
            def_modules.setdefault(t.name, []).append(module)
        for fn in table.functions:
            if fn.defined_here:
                def_modules.setdefault(fn.name, []).append(module)
        for g in table.globals:
            if g.is_definition:
                def_modules.setdefault(g.name, []).append(module)

    # type placement: structurally identical same-name definitions unify;
    # shared when seen or referenced from more than one module
    placed_types: dict[str, str] = {}
    type_defs: dict[str, CTypeDef] = {}
    type_conflicts: list[str] = []
    for module in sorted(symtabs):
        for t in symtabs[module].types:
            prior = type_defs.get(t.name)
            if prior is None:
                type_defs[t.name] = t
                placed_types[t.name] = module
                continue
            if (prior.kind, prior.members) == (t.kind, t.members):
                placed_types[t.name] = SHARED_MODULE
            else:
                type_conflicts.append(t.name)
                logger.warning("type %s defined differently in multiple units", t.name)
    for name, module in list(placed_types.items()):
        using = uses.get(name, set())
        if module != SHARED_MODULE and len(using - {module}) >= 1:
            placed_types[name] = SHARED_MODULE

    holes: list[str] = []

    def resolve_lookup(name: str) -> Optional[CTypeDef]:
        return type_defs.get(name)

    def resolve_path(name: str) -> Optional[str]:
        rust_name = sanitize_ident(name)
        if name in placed_types:
            home = placed_types[name]
            return f"{home}::{rust_name}"
        return None

    resolver = TypeResolver(lookup=resolve_lookup, rust_path=resolve_path)
    policy = TypePolicy(resolver=resolver, strict=config.strict_holes)

    # synthesize opaque types for referenced-but-undefined type names
    referenced_types: set[str] = set()
    for table in symtabs.values():
        for t in table.types:
            for _, mtype, _ in t.members:
                if t.kind in ("record", "union"):
                    referenced_types.update(_base_name(mtype))
            if t.kind == "alias":
                referenced_types.update(_base_name(t.members[0][1]))
        for fn in table.functions:
            referenced_types.update(_base_name(fn.return_type))
            for _, ptype in fn.params:
                referenced_types.update(_base_name(ptype))
        for g in table.globals:
            referenced_types.update(_base_name(g.c_type_text))
    synthesized: list[RustTypeDecl] = []
    for name in sorted(referenced_types):
        if name in type_defs or name in clayout.PRIMITIVES:
            continue
        hole = f"unresolvable type '{name}'"
        if config.strict_holes:
            raise SkeletonError(f"{hole} (strict hole policy)")
        holes.append(hole)
        logger.warning("%s: emitted as opaque in shared layer", hole)
        opaque = CTypeDef(name=name, kind="record", members=[], source_loc="<hole>", opaque=True)
        type_defs[name] = opaque
        placed_types[name] = SHARED_MODULE
        synthesized.append(lower_type(opaque, policy, module=SHARED_MODULE))

    types: list[RustTypeDecl] = list(synthesized)
    emitted_type_names: set[str] = {t.origin.name for t in synthesized}
    for module in sorted(symtabs):
        for t in symtabs[module].types:
            if t.name in emitted_type_names:
                continue
            emitted_type_names.add(t.name)
            types.append(lower_type(t, policy, module=placed_types[t.name]))

    # globals: external tentative definitions unify by name
    statics: list[LiftedStatic] = []
    emitted_globals: set[str] = set()
    for module in sorted(symtabs):
        for g in symtabs[module].globals:
            if not g.is_definition:
                continue
            key = g.name if g.storage == "external" else f"{module}::{g.name}"
            if key in emitted_globals:
                continue
            emitted_globals.add(key)
            usage = GlobalUsage(
                using_modules=set(uses.get(g.name, set())) | {module},
                defining_module=module,
            )
            statics.append(lift_global(g, usage, policy))

    # named constants from object-like macros
    constants: list[NamedConstant] = []
    emitted_consts: set[str] = set()
    for name, value in header_consts:
        if name in emitted_consts or name in emitted_type_names:
            continue
        emitted_consts.add(name)
        constants.append(
            NamedConstant(
                name=sanitize_ident(name),
                emitted_text=_const_text(name, value),
                module=SHARED_MODULE,
                value=value,
            )
        )
    for module in sorted(symtabs):
        for name, value in macro_consts[module]:
            if name in emitted_consts or name in emitted_type_names:
                continue
            if any(s.name == sanitize_ident(name) for s in statics):
                continue
            emitted_consts.add(name)
            constants.append(
                NamedConstant(
                    name=sanitize_ident(name),
                    emitted_text=_const_text(name, value),
                    module=module,
                    value=value,
                )
            )

    # stubs with storage- and usage-derived visibility
    stubs: list[FunctionStub] = []
    for module in sorted(symtabs):
        for fn in symtabs[module].functions:
            if not fn.defined_here:
                continue
            if fn.storage == "internal":
                visibility = "private"
            elif len(uses.get(fn.name, set()) - {module}) >= 1:
                visibility = "crate"
            else:
                visibility = "public"
            stubs.append(
                emit_stub(fn, module, policy, visibility=visibility, style=config.placeholder_style)
            )

    return SkeletonPlan(
        config=config,
        tree=tree,
        types=types,
        stubs=stubs,
        statics=statics,
        constants=constants,
        module_symbols=symtabs,
        holes=holes + [f"type conflict: {n}" for n in type_conflicts],
    )


def _base_name(type_text: str) -> set[str]:
    ct = parse_c_type(type_text)
    out: set[str] = set()
    if ct.func is not None:
        out |= _base_name_ct(ct.func.ret)
        for p in ct.func.params:
            out |= _base_name_ct(p)
        return out
    return _base_name_ct(ct)


def _base_name_ct(ct) -> set[str]:
    if ct.func is not None:
        out = _base_name_ct(ct.func.ret)
        for p in ct.func.params:
            out |= _base_name_ct(p)
        return out
    base = clayout._strip_tag(ct.base)
    if base in clayout.PRIMITIVES or base == "void":
        return set()
    return {base}


# --- emission ----------------------------------------------------------------


def module_rel_file(module: str) -> Path:
    """Module path -> source file path; raw-ident prefixes never reach disk."""
    parts = [p[2:] if p.startswith("r#") else p for p in module.split("::")[1:]]
    return Path("src", *parts[:-1], parts[-1] + ".rs")


def render_module(plan: SkeletonPlan, module: str) -> str:
    """Render one module file: constants, types, statics, then stubs."""
    sections: list[str] = []
    for const in plan.constants:
        if const.module == module:
            sections.append(const.emitted_text)
    for t in plan.types:
        if t.module == module:
            sections.append(t.emitted_text)
    for s in plan.statics:
        if s.module == module:
            sections.append(s.emitted_text)
            if s.accessor_text:
                sections.append(s.accessor_text)
    for stub in plan.stubs:
        if stub.module == module:
            body = "\n".join(
                "    " + line if line else "" for line in stub.placeholder_body.splitlines()
            )
            sections.append(
                f"{stub.signature_text} {{\n"
                f"    {BODY_BEGIN}{stub.qualified_name}\n"
                f"{body}\n"
                f"    {BODY_END}{stub.qualified_name}\n"
                f"}}"
            )
    return "\n\n".join(sections) + ("\n" if sections else "")


def assemble_and_verify(
    plan: SkeletonPlan,
    out_dir,
    runner: Optional[BuildRunner] = None,
) -> SkeletonProject:
    """Write the workspace and require a clean build before any bodies exist."""
    out_dir = Path(out_dir)
    runner = runner or BuildRunner()
    src = out_dir / "src"
    src.mkdir(parents=True, exist_ok=True)

    modules = sorted(set(plan.tree.mapping.values()) | {SHARED_MODULE})
    # parent module files declare their children
    children: dict[str, set[str]] = {}
    for module in modules:
        parts = module.split("::")
        for i in range(1, len(parts)):
            parent = "::".join(parts[:i])
            children.setdefault(parent, set()).add(parts[i])

    lib_lines = [CRATE_ALLOWS, ""]
    for child in sorted(children.get("crate", set())):
        lib_lines.append(f"pub mod {child};")
    (src / "lib.rs").write_text("\n".join(lib_lines) + "\n", encoding="utf-8")

    for parent, kids in sorted(children.items()):
        if parent == "crate":
            continue
        pfile = module_rel_file(parent)
        content = "\n".join(f"pub mod {k};" for k in sorted(kids)) + "\n"
        if parent in modules:
            content += "\n" + render_module(plan, parent)
        path = out_dir / pfile
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(content, encoding="utf-8")

    for module in modules:
        if module in children:
            continue  # already written with child declarations
        path = out_dir / module_rel_file(module)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(render_module(plan, module), encoding="utf-8")

    manifest = (
        "[package]\n"
        f'name = "{plan.config.crate_name}"\n'
        'version = "0.1.0"\n'
        f'edition = "{plan.config.edition}"\n'
    )
    (out_dir / "Cargo.toml").write_text(manifest, encoding="utf-8")

    mapping_doc = {
        "crate": plan.config.crate_name,
        "modules": dict(sorted(plan.tree.mapping.items())),
        "symbols": {
            stub.qualified_name: {
                "c_file": plan.tree.reverse.get(stub.module, ""),
                "c_name": stub.origin.name,
                "kind": "function",
            }
            for stub in plan.stubs
        },
    }
    for t in plan.types:
        mapping_doc["symbols"][f"{t.module}::{t.name}"] = {
            "c_name": t.origin.name,
            "kind": "type",
        }
    for s in plan.statics:
        mapping_doc["symbols"][f"{s.module}::{s.name}"] = {
            "c_name": s.origin.name,
            "kind": "static",
        }
    (out_dir / "mapping.json").write_text(
        json.dumps(mapping_doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    outcome = runner.build(out_dir)
    if not outcome.ok:
        raise SkeletonBuildError(
            "skeleton failed to compile (compile-before-bodies violated):\n"
            + render_diagnostics(outcome.errors, limit=10),
            diagnostics=outcome.errors,
        )

    project = SkeletonProject(
        tree=plan.tree,
        types=plan.types,
        stubs=plan.stubs,
        statics=plan.statics,
        constants=plan.constants,
        module_symbols=plan.module_symbols,
        workspace_dir=out_dir,
        holes=plan.holes,
        config=plan.config,
    )
    save_project(project, out_dir)
    return project


# --- persistence across CLI invocations --------------------------------------


def save_project(project: SkeletonProject, out_dir) -> None:
    doc = {
        "config": {
            "crate_name": project.config.crate_name,
            "flatten_root": project.config.flatten_root,
            "strict_holes": project.config.strict_holes,
            "placeholder_style": project.config.placeholder_style,
            "edition": project.config.edition,
        },
        "mapping": project.tree.mapping,
        "types": [
            {
                "name": t.name,
                "module": t.module,
                "emitted_text": t.emitted_text,
                "repr_c": t.repr_c,
                "origin_name": t.origin.name,
                "origin_kind": t.origin.kind,
            }
            for t in project.types
        ],
        "stubs": [
            {
                "qualified_name": s.qualified_name,
                "signature_text": s.signature_text,
                "placeholder_body": s.placeholder_body,
                "visibility": s.visibility,
                "abi_sensitive": s.abi_sensitive,
                "module": s.module,
                "param_names": s.param_names,
                "rust_return": s.rust_return,
                "origin": {
                    "name": s.origin.name,
                    "return_type": s.origin.return_type,
                    "params": s.origin.params,
                    "variadic": s.origin.variadic,
                    "storage": s.origin.storage,
                    "source_loc": s.origin.source_loc,
                    "calls": sorted(s.origin.calls),
                    "value_refs": sorted(s.origin.value_refs),
                    "source_text": s.origin.source_text,
                },
            }
            for s in project.stubs
        ],
        "statics": [
            {
                "name": s.name,
                "module": s.module,
                "emitted_text": s.emitted_text,
                "mutable": s.mutable,
                "origin_name": s.origin.name,
            }
            for s in project.statics
        ],
        "constants": [
            {"name": c.name, "module": c.module, "emitted_text": c.emitted_text}
            for c in project.constants
        ],
        "external_refs": {
            module: sorted(table.external_refs)
            for module, table in project.module_symbols.items()
        },
        "holes": project.holes,
    }
    meta = Path(out_dir) / ".rustport"
    meta.mkdir(parents=True, exist_ok=True)
    (meta / "skeleton.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_project(out_dir) -> SkeletonProject:
    path = Path(out_dir) / ".rustport" / "skeleton.json"
    if not path.is_file():
        raise SkeletonError(f"no skeleton metadata at {path}; run the skeleton step first")
    doc = json.loads(path.read_text(encoding="utf-8"))
    config = SkeletonConfig(**doc["config"])
    mapping = doc["mapping"]
    tree = ModuleTree(
        crate_name=config.crate_name,
        mapping=mapping,
        reverse={v: k for k, v in mapping.items()},
    )
    types = [
        RustTypeDecl(
            name=t["name"],
            emitted_text=t["emitted_text"],
            repr_c=t["repr_c"],
            origin=CTypeDef(
                name=t["origin_name"], kind=t["origin_kind"], members=[], source_loc=""
            ),
            module=t["module"],
        )
        for t in doc["types"]
    ]
    stubs = []
    for s in doc["stubs"]:
        o = s["origin"]
        origin = CFunctionDecl(
            name=o["name"],
            return_type=o["return_type"],
            params=[tuple(p) for p in o["params"]],
            variadic=o["variadic"],
            storage=o["storage"],
            defined_here=True,
            source_loc=o["source_loc"],
            calls=set(o["calls"]),
            value_refs=set(o["value_refs"]),
            source_text=o["source_text"],
        )
        stubs.append(
            FunctionStub(
                qualified_name=s["qualified_name"],
                signature_text=s["signature_text"],
                placeholder_body=s["placeholder_body"],
                visibility=s["visibility"],
                origin=origin,
                abi_sensitive=s["abi_sensitive"],
                module=s["module"],
                param_names=s["param_names"],
                rust_return=s["rust_return"],
            )
        )
    statics = [
        LiftedStatic(
            name=s["name"],
            emitted_text=s["emitted_text"],
            module=s["module"],
            mutable=s["mutable"],
            origin=CGlobalDecl(
                name=s["origin_name"],
                c_type_text="",
                initializer_text=None,
                storage="external",
                mutable=s["mutable"],
                source_loc="",
            ),
        )
        for s in doc["statics"]
    ]
    constants = [
        NamedConstant(name=c["name"], emitted_text=c["emitted_text"], module=c["module"], value=None)
        for c in doc["constants"]
    ]
    module_symbols = {
        module: SymbolTable(unit=None, external_refs=set(refs))
        for module, refs in doc["external_refs"].items()
    }
    return SkeletonProject(
        tree=tree,
        types=types,
        stubs=stubs,
        statics=statics,
        constants=constants,
        module_symbols=module_symbols,
        workspace_dir=Path(out_dir),
        holes=doc.get("holes", []),
        config=config,
    )
