"""Render a syntax tree back to source text.

The output is token-equivalent to the parsed input (whitespace and comments
aside), which the round-trip tests rely on.
"""

from __future__ import annotations

from crusted.frontend import ast


def _ann(a: ast.Annotation) -> str:
    return " ".join(a.tokens)


def type_text(t: ast.TypeExpr, name: str | None = None) -> str:
    parts = []
    if t.const and not t.const_after:
        parts.append("const")
    if isinstance(t.base, ast.StructDecl):
        parts.append(_struct(t.base))
    else:
        parts.append(t.base)
    if t.const and t.const_after:
        parts.append("const")
    parts.extend(_ann(a) for a in t.annotations)
    for p in t.pointers:
        parts.append("*")
        if p.const:
            parts.append("const")
        if p.restrict:
            parts.append("restrict")
        parts.extend(_ann(a) for a in p.annotations)
    if name is not None:
        parts.append(name)
    if t.array is not None:
        parts.append("[")
        if not isinstance(t.array, ast.Empty):
            parts.append(expr_text(t.array))
        parts.append("]")
    return " ".join(parts)


def _struct(s: ast.StructDecl) -> str:
    head = "struct" if s.tag is None else f"struct {s.tag}"
    if s.members is None:
        return head
    body = " ".join(type_text(m.type, m.name) + " ;" for m in s.members)
    return f"{head} {{ {body} }}" if body else f"{head} {{ }}"


def expr_text(e) -> str:
    if isinstance(e, ast.Name):
        return e.ident
    if isinstance(e, (ast.IntLit, ast.FloatLit, ast.CharLit)):
        return e.text
    if isinstance(e, ast.StrLit):
        return e.text
    if isinstance(e, ast.Paren):
        return f"( {expr_text(e.expr)} )"
    if isinstance(e, ast.Unary):
        return f"{e.op} {expr_text(e.operand)}"
    if isinstance(e, ast.Postfix):
        return f"{expr_text(e.operand)} {e.op}"
    if isinstance(e, ast.Binary):
        return f"{expr_text(e.lhs)} {e.op} {expr_text(e.rhs)}"
    if isinstance(e, ast.Assign):
        return f"{expr_text(e.target)} = {expr_text(e.value)}"
    if isinstance(e, ast.Call):
        return f"{e.func} ( {' , '.join(expr_text(a) for a in e.args)} )"
    if isinstance(e, ast.Index):
        return f"{expr_text(e.base)} [ {expr_text(e.index)} ]"
    if isinstance(e, ast.Member):
        return f"{expr_text(e.base)} {'->' if e.arrow else '.'} {e.name}"
    if isinstance(e, ast.Cast):
        return f"( {type_text(e.type)} ) {expr_text(e.operand)}"
    raise TypeError(f"not an expression: {e!r}")


def stmt_lines(s, indent: int = 1) -> list[str]:
    pad = "  " * indent
    if isinstance(s, ast.Block):
        head = " ".join(_ann(a) for a in s.annotations)
        if not s.braced:
            inner = []
            for item in s.items:
                inner.extend(stmt_lines(item, indent))
            if inner:
                inner[0] = pad + head + " " + inner[0].lstrip()
            return inner
        lines = [pad + (head + " {" if head else "{")]
        for item in s.items:
            lines.extend(stmt_lines(item, indent + 1))
        lines.append(pad + "}")
        return lines
    if isinstance(s, ast.VarDecl):
        init = f" = {expr_text(s.init)}" if s.init is not None else ""
        return [pad + type_text(s.type, s.name) + init + " ;"]
    if isinstance(s, ast.ExprStmt):
        return [pad + expr_text(s.expr) + " ;"]
    if isinstance(s, ast.Return):
        if s.value is None:
            return [pad + "return ;"]
        return [pad + f"return {expr_text(s.value)} ;"]
    if isinstance(s, ast.Empty):
        return [pad + ";"]
    if isinstance(s, ast.If):
        lines = [pad + f"if ( {expr_text(s.cond)} )"]
        lines.extend(stmt_lines(s.then, indent + 1))
        if s.orelse is not None:
            lines.append(pad + "else")
            lines.extend(stmt_lines(s.orelse, indent + 1))
        return lines
    if isinstance(s, ast.While):
        lines = [pad + f"while ( {expr_text(s.cond)} )"]
        lines.extend(stmt_lines(s.body, indent + 1))
        return lines
    raise TypeError(f"not a statement: {s!r}")


def _decl_head(d: ast.FunctionDecl) -> str:
    if d.void_params:
        params = "void"
    else:
        params = " , ".join(type_text(p.type, p.name) for p in d.params)
    storage = " ".join(d.storage)
    head = f"{type_text(d.ret, d.name)} ( {params} )"
    return f"{storage} {head}" if storage else head


def print_unit(unit: ast.TranslationUnit) -> str:
    lines: list[str] = []
    for item in unit.items:
        if isinstance(item, ast.Include):
            lines.append(f"#include <{item.header}>" if item.angled else f'#include "{item.header}"')
        elif isinstance(item, ast.Define):
            lines.append(" ".join(["#define", item.name] + [t.lexeme for t in item.body]))
        elif isinstance(item, ast.Typedef):
            lines.append(f"typedef {type_text(item.type, item.name)} ;")
        elif isinstance(item, ast.StructDef):
            lines.append(_struct(item.struct) + " ;")
        elif isinstance(item, ast.EnumDef):
            consts = " , ".join(n if e is None else f"{n} = {expr_text(e)}" for n, e in item.constants)
            tag = f" {item.tag}" if item.tag else ""
            lines.append(f"enum{tag} {{ {consts} }} ;")
        elif isinstance(item, ast.GlobalAnnotation):
            lines.append(_ann(item.annotation) + " ;")
        elif isinstance(item, ast.FunctionDecl):
            lines.append(_decl_head(item) + " ;")
        elif isinstance(item, ast.FunctionDef):
            lines.append(_decl_head(item.decl))
            lines.extend(stmt_lines(item.body, 0))
        elif isinstance(item, ast.VarDecl):
            storage = " ".join(item.storage)
            init = f" = {expr_text(item.init)}" if item.init is not None else ""
            text = type_text(item.type, item.name) + init + " ;"
            lines.append(f"{storage} {text}" if storage else text)
        else:
            raise TypeError(f"not a top-level item: {item!r}")
    return "".join(line + "\n" for line in lines)
