"""Conjunctive-query and positive-FO syntax: AST, parser, split, classifiers.

The concrete grammar is Datalog-style, one query per file::

    H(x,y) :- R(x,z), S(z,y).       # comments start with '#'
    I(x,x) :- x <= alpha.

Variables bound in the body but absent from the head are implicitly
existentially quantified.  ``;`` between body blocks denotes disjunction and
is accepted only by :func:`parse_fo_query` (the oracle path);
:func:`parse_query` rejects it with :class:`NotConjunctiveError`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

from .errors import NotConjunctiveError, QuerySyntaxError, UnsafeFormulaError


# ---------------------------------------------------------------------------
# Atoms and conjunctive queries
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RelAtom:
    symbol: str
    args: Tuple[str, ...]

    @property
    def vars(self) -> FrozenSet[str]:
        return frozenset(self.args)

    def __str__(self) -> str:
        return f"{self.symbol}({', '.join(self.args)})"


@dataclass(frozen=True)
class IneqAtom:
    var: str
    bound: str  # constant symbol

    @property
    def vars(self) -> FrozenSet[str]:
        return frozenset((self.var,))

    def __str__(self) -> str:
        return f"{self.var} <= {self.bound}"


Atom = Union[RelAtom, IneqAtom]


@dataclass(frozen=True)
class ConjunctiveQuery:
    """Head + prenex conjunctive body over relational and inequality atoms."""

    head_symbol: str
    head_vars: Tuple[str, ...]
    atoms: Tuple[Atom, ...]

    @property
    def free_vars(self) -> FrozenSet[str]:
        return frozenset(self.head_vars)

    @property
    def body_vars(self) -> FrozenSet[str]:
        out: set = set()
        for a in self.atoms:
            out |= a.vars
        return frozenset(out)

    @property
    def bound_vars(self) -> Tuple[str, ...]:
        """Quantified variables in first-occurrence order."""
        head = set(self.head_vars)
        seen: List[str] = []
        for a in self.atoms:
            args = a.args if isinstance(a, RelAtom) else (a.var,)
            for v in args:
                if v not in head and v not in seen:
                    seen.append(v)
        return tuple(seen)

    @property
    def relational_atoms(self) -> Tuple[RelAtom, ...]:
        return tuple(a for a in self.atoms if isinstance(a, RelAtom))

    @property
    def inequality_atoms(self) -> Tuple[IneqAtom, ...]:
        return tuple(a for a in self.atoms if isinstance(a, IneqAtom))

    def relation_arities(self) -> Dict[str, int]:
        return {a.symbol: len(a.args) for a in self.relational_atoms}

    def to_text(self) -> str:
        body = ", ".join(str(a) for a in self.atoms)
        return f"{self.head_symbol}({', '.join(self.head_vars)}) :- {body}."

    def __str__(self) -> str:
        return self.to_text()


# ---------------------------------------------------------------------------
# Positive FO formulas (oracle-side ASTs)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FoRel:
    symbol: str
    args: Tuple[str, ...]


@dataclass(frozen=True)
class FoCmp:
    var: str
    bound: str


@dataclass(frozen=True)
class FoAnd:
    left: "FoFormula"
    right: "FoFormula"


@dataclass(frozen=True)
class FoOr:
    left: "FoFormula"
    right: "FoFormula"


@dataclass(frozen=True)
class FoExists:
    vars: Tuple[str, ...]
    sub: "FoFormula"


FoFormula = Union[FoRel, FoCmp, FoAnd, FoOr, FoExists]


def fo_free_vars(phi: FoFormula) -> FrozenSet[str]:
    if isinstance(phi, FoRel):
        return frozenset(phi.args)
    if isinstance(phi, FoCmp):
        return frozenset((phi.var,))
    if isinstance(phi, (FoAnd, FoOr)):
        return fo_free_vars(phi.left) | fo_free_vars(phi.right)
    return fo_free_vars(phi.sub) - frozenset(phi.vars)


def check_safety(phi: FoFormula) -> None:
    """Safe formulas: both operands of a disjunction share their free variables."""
    if isinstance(phi, (FoAnd, FoOr)):
        check_safety(phi.left)
        check_safety(phi.right)
        if isinstance(phi, FoOr) and fo_free_vars(phi.left) != fo_free_vars(phi.right):
            raise UnsafeFormulaError(
                "disjunction operands have different free variables: "
                f"{sorted(fo_free_vars(phi.left))} vs {sorted(fo_free_vars(phi.right))}"
            )
    elif isinstance(phi, FoExists):
        check_safety(phi.sub)


@dataclass(frozen=True)
class FoQuery:
    head_symbol: str
    head_vars: Tuple[str, ...]
    body: FoFormula


def cq_to_fo(q: ConjunctiveQuery) -> FoQuery:
    """View a CQ as a positive-FO query (prenex conjunction)."""
    body: FoFormula
    conj: Optional[FoFormula] = None
    for a in q.atoms:
        lit: FoFormula = (
            FoRel(a.symbol, a.args) if isinstance(a, RelAtom) else FoCmp(a.var, a.bound)
        )
        conj = lit if conj is None else FoAnd(conj, lit)
    if conj is None:
        raise QuerySyntaxError("a query body needs at least one atom")
    body = FoExists(q.bound_vars, conj) if q.bound_vars else conj
    return FoQuery(q.head_symbol, q.head_vars, body)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<ident>[A-Za-z_][A-Za-z0-9_]*|1)"
    r"|(?P<op>:-|<=|[(),.;])"
    r"|(?P<bad>\S))"
)


def _tokenize(text: str):
    tokens = []
    line = 1
    col = 1
    for raw_line in text.splitlines():
        stripped = raw_line.split("#", 1)[0]
        pos = 0
        while pos < len(stripped):
            m = _TOKEN_RE.match(stripped, pos)
            if m is None:
                break
            if m.group("bad"):
                raise QuerySyntaxError(f"unexpected character {m.group('bad')!r}", line, m.start("bad") + 1)
            kind = "ident" if m.group("ident") else "op"
            value = m.group(kind)
            tokens.append((kind, value, line, m.start(kind) + 1))
            pos = m.end()
        line += 1
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def next(self, expect: Optional[str] = None, kind: Optional[str] = None):
        tok = self.peek()
        if tok is None:
            raise QuerySyntaxError("unexpected end of input")
        if kind is not None and tok[0] != kind:
            raise QuerySyntaxError(f"expected {kind}, found {tok[1]!r}", tok[2], tok[3])
        if expect is not None and tok[1] != expect:
            raise QuerySyntaxError(f"expected {expect!r}, found {tok[1]!r}", tok[2], tok[3])
        self.i += 1
        return tok

    def parse_var_list(self) -> Tuple[str, ...]:
        self.next("(")
        out: List[str] = []
        if self.peek() and self.peek()[1] == ")":
            self.next(")")
            return tuple(out)
        while True:
            tok = self.next(kind="ident")
            if tok[1] == "1":
                raise QuerySyntaxError("'1' is a reserved constant symbol, not a variable", tok[2], tok[3])
            out.append(tok[1])
            tok = self.peek()
            if tok and tok[1] == ",":
                self.next(",")
            else:
                break
        self.next(")")
        return tuple(out)

    def parse_atom(self) -> Atom:
        name = self.next(kind="ident")
        tok = self.peek()
        if tok is not None and tok[1] == "(":
            return RelAtom(name[1], self.parse_var_list())
        if tok is not None and tok[1] == "<=":
            if name[1] == "1":
                raise QuerySyntaxError("'1' is a constant symbol, not a variable", name[2], name[3])
            self.next("<=")
            bound = self.next(kind="ident")
            return IneqAtom(name[1], bound[1])
        where = tok if tok is not None else name
        raise QuerySyntaxError("expected '(' or '<=' after identifier", where[2], where[3])

    def parse_conjunction(self) -> List[Atom]:
        atoms = [self.parse_atom()]
        while self.peek() and self.peek()[1] == ",":
            self.next(",")
            atoms.append(self.parse_atom())
        return atoms

    def parse_rule(self):
        head_name = self.next(kind="ident")
        head_vars = self.parse_var_list()
        self.next(":-")
        blocks = [self.parse_conjunction()]
        while self.peek() and self.peek()[1] == ";":
            self.next(";")
            blocks.append(self.parse_conjunction())
        self.next(".")
        tok = self.peek()
        if tok is not None:
            raise QuerySyntaxError(f"trailing input after query: {tok[1]!r}", tok[2], tok[3])
        return head_name[1], head_vars, blocks


def _validate_cq(head_symbol: str, head_vars: Tuple[str, ...], atoms: Sequence[Atom]) -> ConjunctiveQuery:
    arities: Dict[str, int] = {}
    body_vars: set = set()
    for a in atoms:
        if isinstance(a, RelAtom):
            if a.symbol == head_symbol:
                raise QuerySyntaxError(f"head symbol {head_symbol!r} occurs in the body")
            if arities.setdefault(a.symbol, len(a.args)) != len(a.args):
                raise QuerySyntaxError(
                    f"relation {a.symbol!r} used with arities {arities[a.symbol]} and {len(a.args)}"
                )
        body_vars |= a.vars
    for v in head_vars:
        if v not in body_vars:
            raise QuerySyntaxError(f"head variable {v!r} is not free in the body")
    return ConjunctiveQuery(head_symbol, head_vars, tuple(atoms))


def parse_query(text: str) -> ConjunctiveQuery:
    """Parse a conjunctive query; disjunction is rejected with a distinct error."""
    head_symbol, head_vars, blocks = _Parser(text).parse_rule()
    if len(blocks) > 1:
        raise NotConjunctiveError("disjunction (';') makes this an FO+ query, not a CQ")
    return _validate_cq(head_symbol, head_vars, blocks[0])


def parse_fo_query(text: str) -> FoQuery:
    """Parse a positive-FO query: one or more conjunctive blocks joined by ';'."""
    head_symbol, head_vars, blocks = _Parser(text).parse_rule()
    head = set(head_vars)
    _validate_cq(head_symbol, (), [a for block in blocks for a in block])
    disjuncts: List[FoFormula] = []
    for atoms in blocks:
        block_vars = set()
        for a in atoms:
            block_vars |= a.vars
        missing = head - block_vars
        if missing:
            raise UnsafeFormulaError(
                f"head variables {sorted(missing)} missing from a disjunct (unsafe)"
            )
        conj: Optional[FoFormula] = None
        for a in atoms:
            lit: FoFormula = (
                FoRel(a.symbol, a.args) if isinstance(a, RelAtom) else FoCmp(a.var, a.bound)
            )
            conj = lit if conj is None else FoAnd(conj, lit)
        bound = tuple(v for v in sorted(block_vars - head))
        disjuncts.append(FoExists(bound, conj) if bound else conj)
    body = disjuncts[0]
    for d in disjuncts[1:]:
        body = FoOr(body, d)
    check_safety(body)
    return FoQuery(head_symbol, head_vars, body)


# ---------------------------------------------------------------------------
# Split into relational and inequality parts
# ---------------------------------------------------------------------------

REL_HEAD = "__rel"
INEQ_HEAD = "__ineq"


@dataclass(frozen=True)
class QuerySplit:
    """Relational part, uncovered-inequality part, and per-atom covered inequalities.

    ``covered`` maps the index of each relational atom (position within
    ``query.relational_atoms``) to the inequalities it covers.  An inequality
    is covered iff its variable occurs in some relational atom; otherwise it
    belongs to ``ineq_part``.  When no uncovered inequality exists,
    ``ineq_part`` is the canonical true query ``__ineq() :- x <= 1``.
    """

    query: ConjunctiveQuery
    rel_part: ConjunctiveQuery
    ineq_part: ConjunctiveQuery
    covered: Dict[int, Tuple[IneqAtom, ...]]

    @property
    def rel_free_vars(self) -> Tuple[str, ...]:
        return self.rel_part.head_vars

    @property
    def ineq_free_vars(self) -> Tuple[str, ...]:
        return self.ineq_part.head_vars


def split(q: ConjunctiveQuery) -> QuerySplit:
    rel_atoms = q.relational_atoms
    rel_vars: set = set()
    for a in rel_atoms:
        rel_vars |= a.vars

    covered: Dict[int, List[IneqAtom]] = {i: [] for i in range(len(rel_atoms))}
    uncovered: List[IneqAtom] = []
    for ineq in q.inequality_atoms:
        if ineq.var in rel_vars:
            for i, a in enumerate(rel_atoms):
                if ineq.var in a.vars:
                    covered[i].append(ineq)
        else:
            uncovered.append(ineq)

    # rel head: head order with duplicates removed, restricted to relational vars
    seen: List[str] = []
    for v in q.head_vars:
        if v in rel_vars and v not in seen:
            seen.append(v)
    rel_part = ConjunctiveQuery(REL_HEAD, tuple(seen), rel_atoms)

    if uncovered:
        uncovered_vars = {i.var for i in uncovered}
        useen: List[str] = []
        for v in q.head_vars:
            if v in uncovered_vars and v not in useen:
                useen.append(v)
        ineq_part = ConjunctiveQuery(INEQ_HEAD, tuple(useen), tuple(uncovered))
    else:
        ineq_part = ConjunctiveQuery(INEQ_HEAD, (), (IneqAtom("x", "1"),))

    return QuerySplit(q, rel_part, ineq_part, {i: tuple(v) for i, v in covered.items()})


def is_constant_disjoint(q: ConjunctiveQuery) -> Tuple[bool, Optional[Tuple[IneqAtom, Optional[IneqAtom]]]]:
    """Check constant-disjointness; on failure return the violating inequality pair.

    Violations: a covered inequality over the constant symbol ``1``, or a
    constant symbol shared between a covered inequality and an uncovered one
    whose variable is free.
    """
    rel_vars: set = set()
    for a in q.relational_atoms:
        rel_vars |= a.vars
    free = set(q.head_vars)
    covered = [i for i in q.inequality_atoms if i.var in rel_vars]
    uncovered = [i for i in q.inequality_atoms if i.var not in rel_vars]
    for c in covered:
        if c.bound == "1":
            return False, (c, None)
    for c in covered:
        for u in uncovered:
            if c.bound == u.bound and u.var in free:
                return False, (c, u)
    return True, None


def has_self_join(q: ConjunctiveQuery) -> bool:
    """True iff some relation symbol occurs in two relational atoms."""
    seen: set = set()
    for a in q.relational_atoms:
        if a.symbol in seen:
            return True
        seen.add(a.symbol)
    return False
