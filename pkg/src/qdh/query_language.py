"""The federated pattern-query language (v1).

One composition rule covers the three cross-store query shapes:

    FROM <entity> { col = "lit", col ~ "regex" }     -- catalog filter
    MATCH (v:kind {attr ~ ".*x.*"}) -[*]-> (w:kind)  -- graph pattern
    OBJECTS characterization = "XRD"                 -- object lookup
    RETURN v.attr, w.attr                            -- projection, last

``-[*]->`` hops one-or-more flows_to edges, ``->`` exactly one;
``<-[*]-`` and ``<-`` walk the same edges in reverse (one direction per
pattern). ``$<entity>`` inside a MATCH filter scopes node sample_ids to
the FROM clause's result set. The FROM clause binds its entity name as a
row variable; OBJECTS binds ``object`` with path / sample_id / version /
size_bytes / checksum. At most one clause of each kind, RETURN variables
must be bound by an earlier clause, and results are deduplicated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from qdh.errors import QuerySyntaxError
from qdh.graph_store import NodeFilter, NodePredicate, PathPattern
from qdh.tabular_store import Filter

OBJECT_VAR = "object"
OBJECT_ATTRS = ("path", "sample_id", "version", "size_bytes", "checksum")

_KEYWORDS = ("FROM", "MATCH", "OBJECTS", "RETURN")


@dataclass(frozen=True)
class TabularClause:
    entity: str
    filters: tuple[Filter, ...] = ()


@dataclass(frozen=True)
class GraphClause:
    pattern: PathPattern
    scoped_vars: tuple[str, ...] = ()  # variables carrying a sample_id = $entity filter


@dataclass(frozen=True)
class ObjectClause:
    characterization: str


@dataclass(frozen=True)
class ReturnClause:
    projections: tuple[tuple[str, str], ...]  # (variable, attribute)


@dataclass(frozen=True)
class QueryAst:
    tabular: Optional[TabularClause]
    graph: Optional[GraphClause]
    objects: Optional[ObjectClause]
    returns: ReturnClause

    def bound_variables(self) -> set[str]:
        bound: set[str] = set()
        if self.tabular:
            bound.add(self.tabular.entity)
        if self.graph:
            bound.update(self.graph.pattern.variables)
        if self.objects:
            bound.add(OBJECT_VAR)
        return bound


# --- lexer ---------------------------------------------------------------

@dataclass(frozen=True)
class _Token:
    kind: str  # IDENT STRING VAR ARROW PUNCT EOF
    text: str
    line: int
    col: int


_ARROWS = ("-[*]->", "<-[*]-", "->", "<-")
_PUNCT = "(){},.:=~"


def _lex(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col = 1, 1
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if c.isspace():
            i += 1
            col += 1
            continue
        matched_arrow = next((a for a in _ARROWS if text.startswith(a, i)), None)
        if matched_arrow:
            tokens.append(_Token("ARROW", matched_arrow, line, col))
            i += len(matched_arrow)
            col += len(matched_arrow)
            continue
        if c == '"':
            j = i + 1
            out = []
            while j < n and text[j] != '"':
                if text[j] == "\\" and j + 1 < n:
                    out.append(text[j + 1])
                    j += 2
                else:
                    out.append(text[j])
                    j += 1
            if j >= n:
                raise QuerySyntaxError("unterminated string literal", line, col, expected='"')
            tokens.append(_Token("STRING", "".join(out), line, col))
            col += j + 1 - i
            i = j + 1
            continue
        if c == "$":
            j = i + 1
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            if j == i + 1:
                raise QuerySyntaxError("expected a name after '$'", line, col, expected="identifier")
            tokens.append(_Token("VAR", text[i + 1:j], line, col))
            col += j - i
            i = j
            continue
        if c.isalnum() or c == "_":
            # onboarded entity names like 2d_device may start with a digit;
            # the grammar has no numeric literals, so digits lex as idents
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(_Token("IDENT", text[i:j], line, col))
            col += j - i
            i = j
            continue
        if c in _PUNCT:
            tokens.append(_Token("PUNCT", c, line, col))
            i += 1
            col += 1
            continue
        raise QuerySyntaxError(f"unexpected character {c!r}", line, col, expected="token")
    tokens.append(_Token("EOF", "", line, col))
    return tokens


# --- parser ------------------------------------------------------------------

class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, message: str, expected: str = "") -> QuerySyntaxError:
        tok = self.peek()
        return QuerySyntaxError(message, tok.line, tok.col, expected=expected)

    def expect_punct(self, char: str) -> _Token:
        tok = self.peek()
        if tok.kind != "PUNCT" or tok.text != char:
            raise self.error(f"expected {char!r}, found {tok.text or 'end of query'!r}",
                             expected=char)
        return self.next()

    def expect_ident(self, what: str) -> _Token:
        tok = self.peek()
        if tok.kind != "IDENT":
            raise self.error(f"expected {what}, found {tok.text or 'end of query'!r}",
                             expected="identifier")
        return self.next()

    def at_keyword(self, word: str) -> bool:
        tok = self.peek()
        return tok.kind == "IDENT" and tok.text == word

    # filters shared by FROM and node predicates; $-operands only where allowed
    def parse_filters(self, allow_binding: bool) -> tuple[list[Filter], list[str]]:
        filters: list[Filter] = []
        bindings: list[str] = []
        self.expect_punct("{")
        if self.peek().kind == "PUNCT" and self.peek().text == "}":
            self.next()
            return filters, bindings
        while True:
            column = self.expect_ident("a column name").text
            op_tok = self.peek()
            if op_tok.kind == "PUNCT" and op_tok.text == "=":
                self.next()
                val = self.peek()
                if val.kind == "VAR":
                    if not allow_binding:
                        raise self.error("'$' bindings are only allowed inside MATCH filters",
                                         expected="string literal")
                    if column != "sample_id":
                        raise self.error("only sample_id can bind to the FROM result set",
                                         expected="sample_id")
                    self.next()
                    bindings.append(val.text)
                elif val.kind == "STRING":
                    self.next()
                    filters.append(Filter(column, "equals", val.text))
                else:
                    raise self.error("expected a string literal or $binding",
                                     expected="string literal")
            elif op_tok.kind == "PUNCT" and op_tok.text == "~":
                self.next()
                val = self.peek()
                if val.kind != "STRING":
                    raise self.error("expected a regex string after '~'", expected="string literal")
                self.next()
                filters.append(Filter(column, "regex", val.text))
            else:
                raise self.error(f"expected '=' or '~', found {op_tok.text!r}", expected="= or ~")
            tok = self.peek()
            if tok.kind == "PUNCT" and tok.text == ",":
                self.next()
                continue
            self.expect_punct("}")
            return filters, bindings

    def parse_node_pred(self) -> tuple[NodePredicate, list[str]]:
        self.expect_punct("(")
        variable = self.expect_ident("a pattern variable").text
        kind = None
        tok = self.peek()
        if tok.kind == "PUNCT" and tok.text == ":":
            self.next()
            kind = self.expect_ident("a node kind").text
        filters: list[Filter] = []
        bindings: list[str] = []
        tok = self.peek()
        if tok.kind == "PUNCT" and tok.text == "{":
            filters, bindings = self.parse_filters(allow_binding=True)
        self.expect_punct(")")
        node_filters = tuple(NodeFilter(f.column, f.op, f.operand) for f in filters)
        return NodePredicate(variable, kind, node_filters), bindings


def parse_query(text: str) -> QueryAst:
    parser = _Parser(_lex(text))

    tabular: Optional[TabularClause] = None
    graph: Optional[GraphClause] = None
    objects: Optional[ObjectClause] = None

    if parser.at_keyword("FROM"):
        parser.next()
        entity = parser.expect_ident("an entity name").text
        filters: list[Filter] = []
        tok = parser.peek()
        if tok.kind == "PUNCT" and tok.text == "{":
            filters, bindings = parser.parse_filters(allow_binding=False)
            assert not bindings
        tabular = TabularClause(entity, tuple(filters))

    if parser.at_keyword("MATCH"):
        parser.next()
        preds: list[NodePredicate] = []
        hops: list[str] = []
        direction: Optional[str] = None
        scoped: list[str] = []
        binding_names: list[str] = []
        pred, bindings = parser.parse_node_pred()
        preds.append(pred)
        if bindings:
            scoped.append(pred.variable)
            binding_names.extend(bindings)
        while parser.peek().kind == "ARROW":
            arrow = parser.next()
            hop = "reachable" if "[*]" in arrow.text else "direct"
            arrow_dir = "forward" if arrow.text.endswith(">") else "reverse"
            if direction is None:
                direction = arrow_dir
            elif direction != arrow_dir:
                raise QuerySyntaxError("cannot mix arrow directions in one pattern",
                                       arrow.line, arrow.col, expected=f"{direction} arrow")
            hops.append(hop)
            pred, bindings = parser.parse_node_pred()
            preds.append(pred)
            if bindings:
                scoped.append(pred.variable)
                binding_names.extend(bindings)
        pattern = PathPattern(tuple(preds), tuple(hops), direction or "forward")
        tok = parser.peek()
        if scoped and tabular is None:
            raise QuerySyntaxError("'$' binding needs a FROM clause to bind to",
                                   tok.line, tok.col, expected="FROM clause")
        for name in binding_names:
            if tabular is not None and name != tabular.entity:
                raise QuerySyntaxError(
                    f"'${name}' does not name the FROM entity {tabular.entity!r}",
                    tok.line, tok.col, expected=f"${tabular.entity}")
        graph = GraphClause(pattern, tuple(scoped))

    if parser.at_keyword("OBJECTS"):
        parser.next()
        key = parser.expect_ident("'characterization'")
        if key.text != "characterization":
            raise QuerySyntaxError(f"expected 'characterization', found {key.text!r}",
                                   key.line, key.col, expected="characterization")
        parser.expect_punct("=")
        val = parser.peek()
        if val.kind != "STRING":
            raise parser.error("expected a characterization name string",
                               expected="string literal")
        parser.next()
        objects = ObjectClause(val.text)

    if not parser.at_keyword("RETURN"):
        raise parser.error("every query ends with a RETURN clause", expected="RETURN")
    parser.next()
    projections: list[tuple[str, str]] = []
    while True:
        var = parser.expect_ident("a bound variable").text
        parser.expect_punct(".")
        attr = parser.expect_ident("an attribute name").text
        projections.append((var, attr))
        tok = parser.peek()
        if tok.kind == "PUNCT" and tok.text == ",":
            parser.next()
            continue
        break
    tok = parser.peek()
    if tok.kind != "EOF":
        raise parser.error(f"unexpected trailing input {tok.text!r}", expected="end of query")

    ast = QueryAst(tabular, graph, objects, ReturnClause(tuple(projections)))
    bound = ast.bound_variables()
    for var, _ in projections:
        if var not in bound:
            raise QuerySyntaxError(f"RETURN references unbound variable {var!r}",
                                   tok.line, tok.col, expected="bound variable")
    try:
        if graph:
            graph.pattern.validate()
    except Exception as exc:
        raise QuerySyntaxError(str(exc), 1, 1, expected="valid pattern") from None
    return ast
