"""Check-formula language: parsing, rendering, templates, SQL, evaluation.

A concrete formula references table cells as ``alias.attribute`` and plain
numbers.  Abstracting it yields a template whose aliases are canonicalized to
``a, b, ...`` and whose attribute labels become variables ``A1, A2, ...``;
numeric literals that repeat an attribute label are lifted to the same
variable, so ``POWER(a.2017 / b.2016, 1 / (2017 - 2016)) - 1`` and its 2018
counterpart share one template.  The canonical template string serves as the
classifier label for formula prediction.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Iterable, Iterator, Mapping, Optional, Sequence, Union

if TYPE_CHECKING:
    from .corpus import Relation


class FormulaParseError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class FormulaEvalError(ValueError):
    """Raised when a formula cannot be evaluated (missing cell, bad math)."""


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Number:
    lexeme: str
    value: float

    @classmethod
    def from_value(cls, value: float) -> "Expr":
        if value < 0:
            return Unary("-", cls.from_value(-value))
        if value == int(value) and abs(value) < 1e15:
            return cls(str(int(value)), float(value))
        return cls(repr(value), value)


@dataclass(frozen=True)
class ValueRef:
    alias: str
    attribute: str


@dataclass(frozen=True)
class AttrRef:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # "-"
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str  # + - * / ^
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple["Expr", ...]


@dataclass(frozen=True)
class Compare:
    op: str  # < = != >
    left: "Expr"
    right: "Expr"


Expr = Union[Number, ValueRef, AttrRef, Unary, Binary, Call, Compare]


def walk(expr: Expr) -> Iterator[Expr]:
    """Depth-first, left-to-right traversal."""
    yield expr
    if isinstance(expr, Unary):
        yield from walk(expr.operand)
    elif isinstance(expr, (Binary, Compare)):
        yield from walk(expr.left)
        yield from walk(expr.right)
    elif isinstance(expr, Call):
        for arg in expr.args:
            yield from walk(arg)


# ---------------------------------------------------------------------------
# Function registry

def _power(x: float, y: float) -> float:
    if x < 0 and y != int(y):
        raise FormulaEvalError(f"POWER({x!r}, {y!r}) has no real value")
    if x == 0 and y < 0:
        raise FormulaEvalError("POWER(0, negative)")
    try:
        return x ** y
    except OverflowError:
        raise FormulaEvalError("POWER overflow") from None


FUNCTIONS: dict[str, tuple[int, Optional[int], Callable[..., float]]] = {
    # name -> (min arity, max arity or None, implementation)
    "POWER": (2, 2, _power),
    "ABS": (1, 1, abs),
    "SUM": (1, None, lambda *xs: math.fsum(xs)),
    "AVG": (1, None, lambda *xs: math.fsum(xs) / len(xs)),
    "MIN": (1, None, lambda *xs: min(xs)),
    "MAX": (1, None, lambda *xs: max(xs)),
}


# ---------------------------------------------------------------------------
# Tokenizer

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<quoted>"[^"]+")
  | (?P<op>!=|<>|≠|\^|[+\-*/(),.<>=])
    """,
    re.VERBOSE,
)

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z|\d+(?:\.\d+)?\Z")


@dataclass
class _Token:
    kind: str  # number | ident | quoted | op | end
    text: str
    pos: int


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(source):
        match = _TOKEN.match(source, pos)
        if not match:
            raise FormulaParseError(f"unexpected character {source[pos]!r}", pos)
        kind = match.lastgroup
        if kind != "ws":
            text = match.group()
            if kind == "op" and text in ("<>", "≠"):
                text = "!="
            tokens.append(_Token(kind, text, pos))
        pos = match.end()
    tokens.append(_Token("end", "", len(source)))
    return tokens


# ---------------------------------------------------------------------------
# Parser (precedence: compare < add < mul < unary minus < power)


class _Parser:
    def __init__(self, source: str):
        self.tokens = _tokenize(source)
        self.index = 0

    def peek(self) -> _Token:
        return self.tokens[self.index]

    def advance(self) -> _Token:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def accept(self, text: str) -> Optional[_Token]:
        token = self.peek()
        if token.kind == "op" and token.text == text:
            return self.advance()
        return None

    def expect(self, text: str) -> _Token:
        token = self.accept(text)
        if token is None:
            actual = self.peek()
            raise FormulaParseError(f"expected {text!r}, found {actual.text!r}", actual.pos)
        return token

    def parse(self) -> Expr:
        expr = self.comparison()
        tail = self.peek()
        if tail.kind != "end":
            raise FormulaParseError(f"unexpected trailing {tail.text!r}", tail.pos)
        return expr

    def comparison(self) -> Expr:
        left = self.additive()
        token = self.peek()
        if token.kind == "op" and token.text in ("<", ">", "=", "!="):
            self.advance()
            right = self.additive()
            return Compare(token.text, left, right)
        return left

    def additive(self) -> Expr:
        expr = self.multiplicative()
        while True:
            token = self.peek()
            if token.kind == "op" and token.text in ("+", "-"):
                self.advance()
                expr = Binary(token.text, expr, self.multiplicative())
            else:
                return expr

    def multiplicative(self) -> Expr:
        expr = self.unary()
        while True:
            token = self.peek()
            if token.kind == "op" and token.text in ("*", "/"):
                self.advance()
                expr = Binary(token.text, expr, self.unary())
            else:
                return expr

    def unary(self) -> Expr:
        token = self.peek()
        if token.kind == "op" and token.text == "-":
            self.advance()
            return Unary("-", self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        if self.accept("^"):
            return Binary("^", base, self.unary())
        return base

    def primary(self) -> Expr:
        token = self.advance()
        if token.kind == "number":
            return Number(token.text, float(token.text))
        if token.kind == "op" and token.text == "(":
            expr = self.comparison()
            self.expect(")")
            return expr
        if token.kind == "ident":
            if self.accept("."):
                return ValueRef(token.text, self.attribute_token())
            if self.peek().kind == "op" and self.peek().text == "(":
                return self.call(token)
            return AttrRef(token.text)
        raise FormulaParseError(f"unexpected {token.text or 'end of input'!r}", token.pos)

    def attribute_token(self) -> str:
        token = self.advance()
        if token.kind in ("ident", "number"):
            return token.text
        if token.kind == "quoted":
            return token.text[1:-1]
        raise FormulaParseError("expected attribute after '.'", token.pos)

    def call(self, name_token: _Token) -> Expr:
        name = name_token.text.upper()
        if name not in FUNCTIONS:
            raise FormulaParseError(f"unknown function {name_token.text!r}", name_token.pos)
        self.expect("(")
        args = [self.comparison()]
        while self.accept(","):
            args.append(self.comparison())
        self.expect(")")
        min_arity, max_arity, _ = FUNCTIONS[name]
        if len(args) < min_arity or (max_arity is not None and len(args) > max_arity):
            raise FormulaParseError(f"{name} takes {min_arity}"
                                    + (f"..{max_arity}" if max_arity != min_arity else "")
                                    + f" arguments, got {len(args)}", name_token.pos)
        return Call(name, tuple(args))


def parse(source: str,
          intermediates: Optional[Mapping[str, Union[str, Expr]]] = None) -> Expr:
    expr = _Parser(source).parse()
    if intermediates:
        expr = resolve_intermediates(expr, intermediates)
    return expr


# ---------------------------------------------------------------------------
# Intermediate definitions


def resolve_intermediates(expr: Expr, defs: Mapping[str, Union[str, Expr]]) -> Expr:
    """Inline named sub-expressions referenced by bare identifiers.

    Definitions may reference each other; cycles are rejected.
    """
    parsed: dict[str, Expr] = {}

    def lookup(name: str, active: frozenset) -> Expr:
        if name in active:
            raise FormulaEvalError(f"cyclic definition of {name!r}")
        if name not in parsed:
            raw = defs[name]
            parsed[name] = _Parser(raw).parse() if isinstance(raw, str) else raw
        return substitute(parsed[name], active | {name})

    def substitute(node: Expr, active: frozenset) -> Expr:
        if isinstance(node, AttrRef) and node.name in defs:
            return lookup(node.name, active)
        if isinstance(node, Unary):
            return Unary(node.op, substitute(node.operand, active))
        if isinstance(node, Binary):
            return Binary(node.op, substitute(node.left, active), substitute(node.right, active))
        if isinstance(node, Compare):
            return Compare(node.op, substitute(node.left, active), substitute(node.right, active))
        if isinstance(node, Call):
            return Call(node.name, tuple(substitute(a, active) for a in node.args))
        return node

    return substitute(expr, frozenset())


# ---------------------------------------------------------------------------
# Rendering

_PREC_COMPARE, _PREC_ADD, _PREC_MUL, _PREC_UNARY, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5, 6


def _precedence(expr: Expr) -> int:
    if isinstance(expr, Compare):
        return _PREC_COMPARE
    if isinstance(expr, Binary):
        if expr.op in ("+", "-"):
            return _PREC_ADD
        if expr.op in ("*", "/"):
            return _PREC_MUL
        return _PREC_POW
    if isinstance(expr, Unary):
        return _PREC_UNARY
    return _PREC_ATOM


def render(expr: Expr) -> str:
    """Canonical text form; ``parse(render(e))`` reproduces ``e`` exactly."""
    if isinstance(expr, Number):
        return expr.lexeme
    if isinstance(expr, ValueRef):
        return f"{expr.alias}.{_render_attribute(expr.attribute)}"
    if isinstance(expr, AttrRef):
        return expr.name
    if isinstance(expr, Unary):
        # Parenthesize nested negation so "--x" never appears.
        inner = _wrap(expr.operand, _precedence(expr.operand) < _PREC_UNARY
                      or isinstance(expr.operand, Unary))
        return f"-{inner}"
    if isinstance(expr, Binary):
        prec = _precedence(expr)
        if expr.op == "^":
            left = _wrap(expr.left, _precedence(expr.left) <= prec)
            right = _wrap(expr.right, _precedence(expr.right) < prec)
        else:
            left = _wrap(expr.left, _precedence(expr.left) < prec)
            right = _wrap(expr.right, _precedence(expr.right) <= prec)
        return f"{left} {expr.op} {right}"
    if isinstance(expr, Call):
        return f"{expr.name}({', '.join(render(a) for a in expr.args)})"
    if isinstance(expr, Compare):
        left = _wrap(expr.left, _precedence(expr.left) <= _PREC_COMPARE)
        right = _wrap(expr.right, _precedence(expr.right) <= _PREC_COMPARE)
        return f"{left} {expr.op} {right}"
    raise TypeError(f"not an expression node: {expr!r}")


def _wrap(expr: Expr, parens: bool) -> str:
    text = render(expr)
    return f"({text})" if parens else text


def _render_attribute(label: str) -> str:
    if _IDENT_RE.match(label):
        return label
    return f'"{label}"'


# ---------------------------------------------------------------------------
# Templates


@dataclass(frozen=True)
class Template:
    """A formula with canonical aliases and attribute variables.

    ``value_vars`` lists the distinct (alias, attribute variable) pairs in
    first-occurrence order; each one names a table cell the formula reads.
    Compare-rooted templates expose their operator and constant side as
    ``embedded_comparison`` so general claims carry op and parameter inside
    the formula itself.
    """

    expr: Expr
    aliases: tuple[str, ...]
    attr_vars: tuple[str, ...]
    value_vars: tuple[tuple[str, str], ...]
    embedded_comparison: Optional[tuple[str, Optional[float]]] = None

    @property
    def key(self) -> str:
        return render(self.expr)


_ATTR_VAR = re.compile(r"A\d+\Z")


def abstract(expr: Expr, context_attributes: Optional[Iterable[str]] = None) -> Template:
    """Canonicalize aliases to a, b, ... and attribute labels to A1, A2, ...

    Numeric literals are lifted to attribute variables only when they repeat
    a label from ``context_attributes`` (default: the labels referenced by
    the expression itself), which links year arithmetic to the cells it spans
    without capturing unrelated constants.
    """
    if context_attributes is None:
        liftable = {n.attribute for n in walk(expr) if isinstance(n, ValueRef)}
    else:
        liftable = set(context_attributes)

    alias_map: dict[str, str] = {}
    attr_map: dict[str, str] = {}
    value_vars: list[tuple[str, str]] = []

    def register_label(label: str) -> str:
        if label not in attr_map:
            attr_map[label] = f"A{len(attr_map) + 1}"
        return attr_map[label]

    for node in walk(expr):
        if isinstance(node, ValueRef):
            if node.alias not in alias_map:
                alias_map[node.alias] = _alias_name(len(alias_map))
            var = register_label(node.attribute)
            pair = (alias_map[node.alias], var)
            if pair not in value_vars:
                value_vars.append(pair)
        elif isinstance(node, Number) and node.lexeme in liftable:
            register_label(node.lexeme)
        elif isinstance(node, AttrRef) and node.name in liftable:
            register_label(node.name)

    def rewrite(node: Expr) -> Expr:
        if isinstance(node, ValueRef):
            return ValueRef(alias_map[node.alias], attr_map[node.attribute])
        if isinstance(node, Number) and node.lexeme in attr_map:
            return AttrRef(attr_map[node.lexeme])
        if isinstance(node, AttrRef) and node.name in attr_map:
            return AttrRef(attr_map[node.name])
        if isinstance(node, Unary):
            return Unary(node.op, rewrite(node.operand))
        if isinstance(node, Binary):
            return Binary(node.op, rewrite(node.left), rewrite(node.right))
        if isinstance(node, Compare):
            return Compare(node.op, rewrite(node.left), rewrite(node.right))
        if isinstance(node, Call):
            return Call(node.name, tuple(rewrite(a) for a in node.args))
        return node

    rewritten = rewrite(expr)
    return Template(
        expr=rewritten,
        aliases=tuple(alias_map.values()),
        attr_vars=tuple(attr_map.values()),
        value_vars=tuple(value_vars),
        embedded_comparison=_embedded_comparison(rewritten),
    )


def _embedded_comparison(expr: Expr) -> Optional[tuple[str, Optional[float]]]:
    if not isinstance(expr, Compare):
        return None
    rhs = expr.right
    if isinstance(rhs, Number):
        return (expr.op, rhs.value)
    if isinstance(rhs, Unary) and rhs.op == "-" and isinstance(rhs.operand, Number):
        return (expr.op, -rhs.operand.value)
    return (expr.op, None)


def _alias_name(index: int) -> str:
    # a..z, then a1, b1, ... for pathological widths
    if index < 26:
        return chr(ord("a") + index)
    return chr(ord("a") + index % 26) + str(index // 26)


def instantiate(template: Template, attributes: Mapping[str, str]) -> Expr:
    """Substitute concrete attribute labels for a template's variables.

    Standalone attribute variables (label arithmetic) require numeric labels.
    """

    def rewrite(node: Expr) -> Expr:
        if isinstance(node, ValueRef):
            label = attributes.get(node.attribute)
            if label is None:
                raise FormulaEvalError(f"unbound attribute variable {node.attribute}")
            return ValueRef(node.alias, label)
        if isinstance(node, AttrRef):
            if _ATTR_VAR.match(node.name):
                label = attributes.get(node.name)
                if label is None:
                    raise FormulaEvalError(f"unbound attribute variable {node.name}")
                try:
                    value = float(label)
                except ValueError:
                    raise FormulaEvalError(
                        f"label {label!r} used in arithmetic is not numeric"
                    ) from None
                return Number(label, value)
            return node
        if isinstance(node, Unary):
            return Unary(node.op, rewrite(node.operand))
        if isinstance(node, Binary):
            return Binary(node.op, rewrite(node.left), rewrite(node.right))
        if isinstance(node, Compare):
            return Compare(node.op, rewrite(node.left), rewrite(node.right))
        if isinstance(node, Call):
            return Call(node.name, tuple(rewrite(a) for a in node.args))
        return node

    return rewrite(template.expr)


# ---------------------------------------------------------------------------
# Bindings and evaluation


@dataclass(frozen=True)
class AliasTarget:
    relation: str
    key_value: Union[str, tuple[str, ...]]

    def key_values(self) -> tuple[str, ...]:
        if isinstance(self.key_value, str):
            return (self.key_value,)
        return tuple(self.key_value)


@dataclass
class Binding:
    """Concrete targets for a formula's aliases and attribute variables.

    ``key_attributes`` names each alias's key column for SQL rendering; it
    defaults from relation metadata via sql_with_key_attrs.
    """

    aliases: dict[str, AliasTarget]
    attributes: dict[str, str] = field(default_factory=dict)
    key_attributes: dict[str, str] = field(default_factory=dict)


def aliases_in_order(expr: Expr) -> list[str]:
    seen: list[str] = []
    for node in walk(expr):
        if isinstance(node, ValueRef) and node.alias not in seen:
            seen.append(node.alias)
    return seen


def bind_value_vars(template: Template,
                    targets: Sequence[tuple[str, str, str]]) -> Binding:
    """Bind each value variable to a (relation, key value, attribute label) cell.

    Targets align positionally with ``template.value_vars``.  Aliases shared
    between value variables must agree on relation and key; shared attribute
    variables must agree on label.  Conflicts raise.
    """
    if len(targets) != len(template.value_vars):
        raise FormulaEvalError(
            f"need {len(template.value_vars)} cell targets, got {len(targets)}")
    aliases: dict[str, AliasTarget] = {}
    attributes: dict[str, str] = {}
    for (alias, attr_var), (relation, key_value, label) in zip(
            template.value_vars, targets):
        want = AliasTarget(relation, key_value)
        if alias in aliases and aliases[alias] != want:
            raise FormulaEvalError(f"alias {alias!r} bound to two different rows")
        if attr_var in attributes and attributes[attr_var] != label:
            raise FormulaEvalError(
                f"attribute variable {attr_var} bound to two different labels")
        aliases[alias] = want
        attributes[attr_var] = label
    return Binding(aliases, attributes)


def evaluate_template(template: Template, binding: Binding,
                      relations: Mapping[str, "Relation"],
                      tolerance: float = 0.0) -> Union[float, bool]:
    concrete = instantiate(template, binding.attributes)
    return evaluate_bound(concrete, binding, relations, tolerance)


TOLERANCE_FLOOR = 1e-9


def relative_error(value: float, target: float) -> float:
    return abs(value - target) / max(abs(target), TOLERANCE_FLOOR)


def evaluate(expr: Expr, cells: Mapping[tuple[str, str], float],
             tolerance: float = 0.0) -> Union[float, bool]:
    """Evaluate against a (alias, attribute) -> value mapping.

    Comparisons yield booleans; equality is relative within ``tolerance``
    (exact when the tolerance is zero).  Non-finite results raise.
    """
    if isinstance(expr, Number):
        return expr.value
    if isinstance(expr, ValueRef):
        try:
            return cells[(expr.alias, expr.attribute)]
        except KeyError:
            raise FormulaEvalError(
                f"no cell bound for {expr.alias}.{expr.attribute}") from None
    if isinstance(expr, AttrRef):
        raise FormulaEvalError(f"unresolved name {expr.name!r}")
    if isinstance(expr, Unary):
        return -_number(evaluate(expr.operand, cells, tolerance))
    if isinstance(expr, Binary):
        left = _number(evaluate(expr.left, cells, tolerance))
        right = _number(evaluate(expr.right, cells, tolerance))
        return _apply_binary(expr.op, left, right)
    if isinstance(expr, Call):
        args = [_number(evaluate(a, cells, tolerance)) for a in expr.args]
        result = FUNCTIONS[expr.name][2](*args)
        return _check_finite(result)
    if isinstance(expr, Compare):
        left = _number(evaluate(expr.left, cells, tolerance))
        right = _number(evaluate(expr.right, cells, tolerance))
        if expr.op == "<":
            return left < right
        if expr.op == ">":
            return left > right
        equal = left == right if tolerance == 0 else relative_error(left, right) < tolerance
        return equal if expr.op == "=" else not equal
    raise TypeError(f"not an expression node: {expr!r}")


def _number(value: Union[float, bool]) -> float:
    if isinstance(value, bool):
        raise FormulaEvalError("comparison used as a number")
    return value


def _apply_binary(op: str, left: float, right: float) -> float:
    if op == "+":
        result = left + right
    elif op == "-":
        result = left - right
    elif op == "*":
        result = left * right
    elif op == "/":
        if right == 0:
            raise FormulaEvalError("division by zero")
        result = left / right
    elif op == "^":
        result = _power(left, right)
    else:
        raise FormulaEvalError(f"unknown operator {op!r}")
    return _check_finite(result)


def _check_finite(value: float) -> float:
    if not math.isfinite(value):
        raise FormulaEvalError("non-finite result")
    return value


def bound_cells(expr: Expr, binding: Binding,
                relations: Mapping[str, "Relation"]) -> dict[tuple[str, str], float]:
    """Resolve every alias.attribute reference to its table value."""
    cells: dict[tuple[str, str], float] = {}
    for node in walk(expr):
        if not isinstance(node, ValueRef):
            continue
        target = binding.aliases.get(node.alias)
        if target is None:
            raise FormulaEvalError(f"unbound alias {node.alias!r}")
        relation = relations.get(target.relation)
        if relation is None:
            raise FormulaEvalError(f"unknown relation {target.relation!r}")
        keys = target.key_values()
        if len(keys) != 1:
            raise FormulaEvalError(
                f"alias {node.alias!r} binds {len(keys)} rows; need exactly one to evaluate")
        if not relation.has_cell(keys[0], node.attribute):
            raise FormulaEvalError(
                f"no cell {target.relation}[{keys[0]!r}][{node.attribute!r}]")
        cells[(node.alias, node.attribute)] = relation.cell(keys[0], node.attribute)
    return cells


def evaluate_bound(expr: Expr, binding: Binding,
                   relations: Mapping[str, "Relation"],
                   tolerance: float = 0.0) -> Union[float, bool]:
    return evaluate(expr, bound_cells(expr, binding, relations), tolerance)


# ---------------------------------------------------------------------------
# SQL rendering


def render_sql(expr: Expr, binding: Binding) -> str:
    """Render as a SELECT over the bound relations.

    Aliases appear in first-use order; multi-row alias targets render as an
    OR group over their key values.
    """
    select = render(expr)
    aliases = aliases_in_order(expr)
    if not aliases:
        return f"SELECT {select}"
    froms = []
    wheres = []
    for alias in aliases:
        target = binding.aliases.get(alias)
        if target is None:
            raise FormulaEvalError(f"unbound alias {alias!r}")
        froms.append(f"{target.relation} {alias}")
        key_attr = binding.key_attributes.get(alias, "Key")
        terms = [f"{alias}.{_render_attribute(key_attr)} = '{_escape(k)}'"
                 for k in target.key_values()]
        wheres.append(terms[0] if len(terms) == 1 else "(" + " OR ".join(terms) + ")")
    return (f"SELECT {select} FROM " + ", ".join(froms)
            + " WHERE " + " AND ".join(wheres))


def sql_with_key_attrs(expr: Expr, binding: Binding,
                       relations: Mapping[str, "Relation"]) -> str:
    """render_sql with key column names taken from the relation metadata."""
    enriched = Binding(dict(binding.aliases), dict(binding.attributes),
                       dict(binding.key_attributes))
    for alias, target in binding.aliases.items():
        relation = relations.get(target.relation)
        if relation is not None:
            enriched.key_attributes[alias] = relation.key_attribute
    return render_sql(expr, enriched)


def _escape(value: str) -> str:
    return value.replace("'", "''")
