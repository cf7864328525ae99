"""Matrix expression language: typed AST, fragments, encodings, translation.

Expressions are built from matrix symbols, transpose, matrix product,
addition, scalar and pointwise products, sum-iteration over canonical
vectors, and the derived ones-vector/identity forms (kept as primitive
tokens).  A query ``H := e`` evaluates by translating the addition-free
fragment to a conjunctive query, encoding the matrix instance as a database,
and running the relational engine on the translation; expressions with
addition fall back to the dense reference evaluator.

Concrete syntax (one query per ``.ml`` file)::

    H := A .* (U * V^T)          # .* pointwise, * matrix/scalar product
    H := sum(v:alpha, A * v)     # sum-iteration, v : (alpha, 1)
    H := ones(alpha) * eye(beta)'

Schema files declare size symbols with values and matrix symbols with types
and encoding shapes; matrix data comes as one ``i j value`` COO file per
symbol.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Set, Tuple

from .errors import (
    ConsistencyError,
    FragmentError,
    IngestionError,
    QuerySyntaxError,
    SchemaError,
    TypeCheckError,
)
from .kdata import AnnotatedRelation, Database, DataTuple, SingleTupleUpdate
from .query import ConjunctiveQuery, IneqAtom, RelAtom
from .semiring import SemiringDescriptor, Value

MatType = Tuple[str, str]  # (row size symbol, column size symbol)


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

@dataclass
class MatrixSymbol:
    name: str
    typ: Optional[MatType] = None


@dataclass
class VectorVariable:
    name: str
    size: str  # declared (size, 1) type
    typ: Optional[MatType] = None


@dataclass
class OnesVector:
    size: str
    typ: Optional[MatType] = None


@dataclass
class IdentityMatrix:
    size: str
    typ: Optional[MatType] = None


@dataclass
class Transpose:
    sub: "MatLangExpr"
    typ: Optional[MatType] = None


@dataclass
class MatMul:
    left: "MatLangExpr"
    right: "MatLangExpr"
    typ: Optional[MatType] = None


@dataclass
class Add:
    left: "MatLangExpr"
    right: "MatLangExpr"
    typ: Optional[MatType] = None


@dataclass
class ScalarMul:
    left: "MatLangExpr"  # type (1,1)
    right: "MatLangExpr"
    typ: Optional[MatType] = None


@dataclass
class Hadamard:
    left: "MatLangExpr"
    right: "MatLangExpr"
    typ: Optional[MatType] = None


@dataclass
class SumIteration:
    var: str
    var_size: str
    sub: "MatLangExpr"
    typ: Optional[MatType] = None


MatLangExpr = (
    MatrixSymbol
    | VectorVariable
    | OnesVector
    | IdentityMatrix
    | Transpose
    | MatMul
    | Add
    | ScalarMul
    | Hadamard
    | SumIteration
)


def children(e: MatLangExpr) -> Tuple[MatLangExpr, ...]:
    if isinstance(e, (Transpose, SumIteration)):
        return (e.sub,)
    if isinstance(e, (MatMul, Add, ScalarMul, Hadamard)):
        return (e.left, e.right)
    return ()


# ---------------------------------------------------------------------------
# Schemas, instances
# ---------------------------------------------------------------------------

VALID_ENCODINGS = ("binary", "unary", "nullary")


@dataclass
class MatrixSchema:
    """Size symbols with instance values, plus typed matrix symbols."""

    sizes: Dict[str, int]
    matrices: Dict[str, MatType]
    encodings: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.sizes.setdefault("1", 1)
        if self.sizes["1"] != 1:
            raise SchemaError("the size symbol '1' always denotes 1")
        for name, value in self.sizes.items():
            if value < 1:
                raise SchemaError(f"size symbol {name!r} must be positive, got {value}")
        for name, (rows, cols) in self.matrices.items():
            for sym in (rows, cols):
                if sym not in self.sizes:
                    raise SchemaError(f"matrix {name!r} uses undeclared size symbol {sym!r}")
            enc = self.encodings.setdefault(name, "binary")
            if enc not in VALID_ENCODINGS:
                raise SchemaError(f"matrix {name!r} has unknown encoding {enc!r}")
            if enc == "unary" and rows != "1" and cols != "1":
                raise SchemaError(f"unary encoding needs a vector type, {name!r} is {rows}x{cols}")
            if enc == "nullary" and (rows, cols) != ("1", "1"):
                raise SchemaError(f"nullary encoding needs a scalar type, {name!r} is {rows}x{cols}")

    def size_of(self, sym: str) -> int:
        try:
            return self.sizes[sym]
        except KeyError:
            raise SchemaError(f"unknown size symbol {sym!r}") from None

    def dims(self, name: str) -> Tuple[int, int]:
        rows, cols = self.matrices[name]
        return self.size_of(rows), self.size_of(cols)


@dataclass
class MatrixInstance:
    """Sparse K-matrices (COO entries) under a size-symbol valuation."""

    schema: MatrixSchema
    semiring: SemiringDescriptor
    entries: Dict[str, Dict[Tuple[int, int], Value]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in self.schema.matrices:
            self.entries.setdefault(name, {})
        self.validate()

    def validate(self) -> None:
        for name, cells in self.entries.items():
            if name not in self.schema.matrices:
                raise SchemaError(f"instance has data for undeclared matrix {name!r}")
            m, n = self.schema.dims(name)
            for (i, j), v in cells.items():
                if not (1 <= i <= m and 1 <= j <= n):
                    raise ConsistencyError(
                        f"entry ({i},{j}) of {name!r} outside its {m}x{n} dimension"
                    )
                if self.semiring.is_zero(v):
                    raise ConsistencyError(f"zero entry stored at ({i},{j}) of {name!r}")

    def size_of(self, sym: str) -> int:
        return self.schema.size_of(sym)

    def dense(self, name: str) -> List[List[Value]]:
        m, n = self.schema.dims(name)
        s = self.semiring
        out = [[s.zero for _ in range(n)] for _ in range(m)]
        for (i, j), v in self.entries[name].items():
            out[i - 1][j - 1] = v
        return out


def dense_to_entries(dense: List[List[Value]], s: SemiringDescriptor) -> Dict[Tuple[int, int], Value]:
    out = {}
    for i, row in enumerate(dense, start=1):
        for j, v in enumerate(row, start=1):
            if not s.is_zero(v):
                out[(i, j)] = v
    return out


def load_matrix_schema(path: str | Path) -> MatrixSchema:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise IngestionError(f"invalid JSON: {exc}", str(path)) from None
    sizes = dict(doc.get("sizes", {}))
    matrices = {}
    encodings = {}
    for name, decl in doc.get("matrices", {}).items():
        typ = decl.get("type")
        if not (isinstance(typ, list) and len(typ) == 2):
            raise IngestionError(f"matrix {name!r} needs a [rows, cols] type", str(path))
        matrices[name] = (str(typ[0]), str(typ[1]))
        encodings[name] = decl.get("encoding", "binary")
    return MatrixSchema(sizes, matrices, encodings)


def load_matrix_instance(
    schema: MatrixSchema, data_dir: str | Path, semiring: SemiringDescriptor
) -> MatrixInstance:
    """COO text per matrix symbol: one ``i j value`` triple per line."""
    data_dir = Path(data_dir)
    entries: Dict[str, Dict[Tuple[int, int], Value]] = {}
    for name in schema.matrices:
        cells: Dict[Tuple[int, int], Value] = {}
        path = data_dir / f"{name}.coo"
        if path.exists():
            for lineno, line in enumerate(path.read_text().splitlines(), start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                fields = line.split()
                if len(fields) != 3:
                    raise IngestionError("expected 'i j value'", str(path), lineno)
                try:
                    i, j = int(fields[0]), int(fields[1])
                    v = semiring.parse(fields[2])
                except ValueError as exc:
                    raise IngestionError(str(exc), str(path), lineno)
                if semiring.is_zero(v):
                    continue
                if (i, j) in cells:
                    raise IngestionError(f"duplicate entry ({i},{j})", str(path), lineno)
                cells[(i, j)] = v
        entries[name] = cells
    return MatrixInstance(schema, semiring, entries)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_ML_TOKEN = re.compile(
    r"\s*(?:(?P<ident>[A-Za-z_][A-Za-z0-9_]*|1)"
    r"|(?P<op>\^T|'|:=|\.\*|[+*():,])"
    r"|(?P<bad>\S))"
)


@dataclass
class MatQuery:
    head: str
    expr: MatLangExpr


def _ml_tokens(text: str):
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        pos = 0
        while pos < len(line):
            m = _ML_TOKEN.match(line, pos)
            if m is None:
                break
            if m.group("bad"):
                raise QuerySyntaxError(f"unexpected character {m.group('bad')!r}", lineno, m.start("bad") + 1)
            kind = "ident" if m.group("ident") else "op"
            out.append((kind, m.group(kind), lineno, m.start(kind) + 1))
            pos = m.end()
    return out


class _MlParser:
    """Recursive-descent parser; '+' binds loosest, then '*' / '.*', then postfix."""

    def __init__(self, text: str, schema: MatrixSchema):
        self.tokens = _ml_tokens(text)
        self.schema = schema
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def next(self, expect: Optional[str] = None):
        tok = self.peek()
        if tok is None:
            raise QuerySyntaxError("unexpected end of expression")
        if expect is not None and tok[1] != expect:
            raise QuerySyntaxError(f"expected {expect!r}, found {tok[1]!r}", tok[2], tok[3])
        self.i += 1
        return tok

    def parse_query(self) -> MatQuery:
        head = "H"
        if (
            len(self.tokens) >= 2
            and self.tokens[0][0] == "ident"
            and self.tokens[1][1] == ":="
        ):
            head = self.next()[1]
            self.next(":=")
        expr = self.parse_expr({})
        tok = self.peek()
        if tok is not None:
            raise QuerySyntaxError(f"trailing input {tok[1]!r}", tok[2], tok[3])
        return MatQuery(head, expr)

    def parse_expr(self, env: Dict[str, str]) -> MatLangExpr:
        node = self.parse_product(env)
        while self.peek() and self.peek()[1] == "+":
            self.next("+")
            node = Add(node, self.parse_product(env))
        return node

    def parse_product(self, env: Dict[str, str]) -> MatLangExpr:
        node = self.parse_postfix(env)
        while self.peek() and self.peek()[1] in ("*", ".*"):
            op = self.next()[1]
            rhs = self.parse_postfix(env)
            node = Hadamard(node, rhs) if op == ".*" else MatMul(node, rhs)
        return node

    def parse_postfix(self, env: Dict[str, str]) -> MatLangExpr:
        node = self.parse_primary(env)
        while self.peek() and self.peek()[1] in ("^T", "'"):
            self.next()
            node = Transpose(node)
        return node

    def parse_primary(self, env: Dict[str, str]) -> MatLangExpr:
        tok = self.next()
        kind, value = tok[0], tok[1]
        if value == "(":
            node = self.parse_expr(env)
            self.next(")")
            return node
        if kind != "ident":
            raise QuerySyntaxError(f"unexpected token {value!r}", tok[2], tok[3])
        if value in ("ones", "eye") and self.peek() and self.peek()[1] == "(":
            self.next("(")
            size = self.next()[1]
            self.next(")")
            return OnesVector(size) if value == "ones" else IdentityMatrix(size)
        if value == "sum" and self.peek() and self.peek()[1] == "(":
            self.next("(")
            var = self.next()[1]
            self.next(":")
            size = self.next()[1]
            self.next(",")
            sub = self.parse_expr({**env, var: size})
            self.next(")")
            return SumIteration(var, size, sub)
        if value in env:
            return VectorVariable(value, env[value])
        return MatrixSymbol(value)


def parse_matlang(text: str, schema: MatrixSchema) -> MatQuery:
    q = _MlParser(text, schema).parse_query()
    typecheck(q.expr, schema)
    return q


# ---------------------------------------------------------------------------
# Type checking
# ---------------------------------------------------------------------------

def typecheck(e: MatLangExpr, schema: MatrixSchema, path: Tuple = ()) -> MatType:
    """Infer and annotate the type of every node; rewrites ``MatMul`` with a
    scalar left operand into ``ScalarMul`` (the semantics coincide)."""
    if isinstance(e, MatrixSymbol):
        if e.name not in schema.matrices:
            raise TypeCheckError(f"unknown matrix symbol {e.name!r}", path)
        e.typ = schema.matrices[e.name]
    elif isinstance(e, VectorVariable):
        if e.size not in schema.sizes:
            raise TypeCheckError(f"vector variable {e.name!r} uses unknown size {e.size!r}", path)
        e.typ = (e.size, "1")
    elif isinstance(e, OnesVector):
        if e.size not in schema.sizes:
            raise TypeCheckError(f"ones({e.size}) uses an unknown size symbol", path)
        e.typ = (e.size, "1")
    elif isinstance(e, IdentityMatrix):
        if e.size not in schema.sizes:
            raise TypeCheckError(f"eye({e.size}) uses an unknown size symbol", path)
        e.typ = (e.size, e.size)
    elif isinstance(e, Transpose):
        rows, cols = typecheck(e.sub, schema, path + ("T",))
        e.typ = (cols, rows)
    elif isinstance(e, MatMul):
        lt = typecheck(e.left, schema, path + ("mul.l",))
        rt = typecheck(e.right, schema, path + ("mul.r",))
        if lt == ("1", "1"):
            # scalar product written with '*'; coincides with the matrix
            # product whenever both are well-typed
            e.__class__ = ScalarMul
            e.typ = rt
        elif lt[1] == rt[0]:
            e.typ = (lt[0], rt[1])
        else:
            raise TypeCheckError(
                f"matrix product needs matching inner sizes, got {lt} x {rt}", path
            )
    elif isinstance(e, ScalarMul):
        lt = typecheck(e.left, schema, path + ("scalar.l",))
        rt = typecheck(e.right, schema, path + ("scalar.r",))
        if lt != ("1", "1"):
            raise TypeCheckError(f"scalar product needs a (1,1) left operand, got {lt}", path)
        e.typ = rt
    elif isinstance(e, (Add, Hadamard)):
        op = "addition" if isinstance(e, Add) else "pointwise product"
        lt = typecheck(e.left, schema, path + (op + ".l",))
        rt = typecheck(e.right, schema, path + (op + ".r",))
        if lt != rt:
            raise TypeCheckError(f"{op} needs equal types, got {lt} and {rt}", path)
        e.typ = lt
    elif isinstance(e, SumIteration):
        if e.var_size not in schema.sizes:
            raise TypeCheckError(f"sum variable {e.var!r} uses unknown size {e.var_size!r}", path)
        e.typ = typecheck(e.sub, schema, path + (f"sum {e.var}",))
    else:
        raise TypeCheckError(f"unknown expression node {e!r}", path)
    return e.typ


def free_vector_variables(e: MatLangExpr) -> Set[str]:
    if isinstance(e, VectorVariable):
        return {e.name}
    if isinstance(e, SumIteration):
        return free_vector_variables(e.sub) - {e.var}
    out: Set[str] = set()
    for c in children(e):
        out |= free_vector_variables(c)
    return out


# ---------------------------------------------------------------------------
# Fragment classification
# ---------------------------------------------------------------------------

def _is_vector_type(t: MatType) -> bool:
    return t[0] == "1" or t[1] == "1"


def _in_matlang(e: MatLangExpr) -> bool:
    if isinstance(e, (VectorVariable, SumIteration)):
        return False
    return all(_in_matlang(c) for c in children(e))


def _in_conj(e: MatLangExpr) -> bool:
    if isinstance(e, Add):
        return False
    return all(_in_conj(c) for c in children(e))


def _in_fc(e: MatLangExpr) -> bool:
    if isinstance(e, (VectorVariable, SumIteration, Add)):
        return False
    if isinstance(e, MatMul):
        if not (_is_vector_type(e.left.typ) or _is_vector_type(e.right.typ)):
            return False
    return all(_in_fc(c) for c in children(e))


def _in_simple(e: MatLangExpr) -> bool:
    if isinstance(e, (VectorVariable, SumIteration, Add)):
        return False
    if isinstance(e, MatMul):
        # only matrix-vector multiplication with the ones vector
        if not isinstance(e.right, OnesVector):
            return False
        return _in_simple(e.left)
    return all(_in_simple(c) for c in children(e))


def _in_qh(e: MatLangExpr) -> bool:
    if _in_simple(e):
        return True
    if not isinstance(e, Hadamard):
        return False
    left, right = e.left, e.right

    def is_row_expansion(x) -> bool:
        # e2 . (ones(a))^T with e2 simple
        return (
            isinstance(x, MatMul)
            and isinstance(x.right, Transpose)
            and isinstance(x.right.sub, OnesVector)
            and _in_simple(x.left)
        )

    def is_col_expansion(x) -> bool:
        # ones(a) . e1 with e1 simple
        return isinstance(x, MatMul) and isinstance(x.left, OnesVector) and _in_simple(x.right)

    if _in_simple(left) and is_row_expansion(right):
        return True
    if is_col_expansion(left) and _in_simple(right):
        return True
    if is_col_expansion(left) and is_row_expansion(right):
        return True
    return False


def classify_fragment(e: MatLangExpr) -> Dict[str, bool]:
    """Syntactic membership in each language fragment (expression pre-typed)."""
    if e.typ is None:
        raise TypeCheckError("classify_fragment needs a typechecked expression")
    return {
        "matlang": _in_matlang(e),
        "conj_matlang": _in_conj(e),
        "fc_matlang": _in_fc(e),
        "simple_matlang": _in_simple(e),
        "qh_matlang": _in_qh(e),
    }


# ---------------------------------------------------------------------------
# Schema encodings
# ---------------------------------------------------------------------------

@dataclass
class SchemaEncoding:
    """Bijection between matrix/size symbols and relation/constant symbols."""

    schema: MatrixSchema
    rel_of: Dict[str, str]
    const_of: Dict[str, str]

    def __post_init__(self) -> None:
        if len(set(self.rel_of.values())) != len(self.rel_of):
            raise SchemaError("matrix-to-relation mapping is not injective")
        if len(set(self.const_of.values())) != len(self.const_of):
            raise SchemaError("size-to-constant mapping is not injective")
        if self.const_of.get("1", "1") != "1":
            raise SchemaError("the size symbol 1 must map to the constant symbol 1")
        self.const_of.setdefault("1", "1")
        self.mat_of = {v: k for k, v in self.rel_of.items()}
        self.size_of = {v: k for k, v in self.const_of.items()}

    @classmethod
    def default(cls, schema: MatrixSchema) -> "SchemaEncoding":
        return cls(
            schema,
            {name: name for name in schema.matrices},
            {size: size for size in schema.sizes},
        )

    def arity(self, matrix: str) -> int:
        return {"binary": 2, "unary": 1, "nullary": 0}[self.schema.encodings[matrix]]

    def relation_tuple(self, matrix: str, i: int, j: int) -> DataTuple:
        enc = self.schema.encodings[matrix]
        if enc == "binary":
            return (i, j)
        if enc == "nullary":
            return ()
        rows, cols = self.schema.matrices[matrix]
        return (i,) if cols == "1" else (j,)

    def matrix_entry(self, matrix: str, t: DataTuple) -> Tuple[int, int]:
        enc = self.schema.encodings[matrix]
        if enc == "binary":
            return (t[0], t[1])
        if enc == "nullary":
            return (1, 1)
        rows, cols = self.schema.matrices[matrix]
        return (t[0], 1) if cols == "1" else (1, t[0])


def encode_instance(instance: MatrixInstance, enc: SchemaEncoding) -> Database:
    """Relational encoding of a matrix instance; linear in its size."""
    db = Database(instance.semiring)
    for size, value in instance.schema.sizes.items():
        db.constants[enc.const_of[size]] = value
    for matrix in instance.schema.matrices:
        rel = AnnotatedRelation(enc.arity(matrix))
        for (i, j), v in instance.entries[matrix].items():
            rel.entries[enc.relation_tuple(matrix, i, j)] = v
        db.relations[enc.rel_of[matrix]] = rel
    return db


def decode_instance(db: Database, enc: SchemaEncoding) -> MatrixInstance:
    """Unique matrix instance encoded by a consistent database."""
    schema = enc.schema
    sizes = {}
    for size, const in enc.const_of.items():
        sizes[size] = db.constant(const)
    decoded_schema = MatrixSchema(sizes, dict(schema.matrices), dict(schema.encodings))
    entries: Dict[str, Dict[Tuple[int, int], Value]] = {}
    for matrix in schema.matrices:
        rel = db.relation(enc.rel_of[matrix])
        m, n = decoded_schema.dims(matrix)
        cells = {}
        for t, v in rel.entries.items():
            i, j = enc.matrix_entry(matrix, t)
            if not (1 <= i <= m and 1 <= j <= n):
                raise ConsistencyError(
                    f"tuple {t} of relation {enc.rel_of[matrix]!r} falls outside "
                    f"the {m}x{n} dimension of {matrix!r}"
                )
            cells[(i, j)] = v
        entries[matrix] = cells
    return MatrixInstance(decoded_schema, db.semiring, entries)


# ---------------------------------------------------------------------------
# Translation to conjunctive queries
# ---------------------------------------------------------------------------

class _UnionFind:
    def __init__(self) -> None:
        self.parent: Dict[str, str] = {}

    def find(self, x: str) -> str:
        self.parent.setdefault(x, x)
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: str, b: str) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


@dataclass
class _Translation:
    atoms: List[RelAtom | IneqAtom] = field(default_factory=list)
    equalities: List[Tuple[str, str]] = field(default_factory=list)
    counter: int = 0

    def fresh(self, stem: str) -> str:
        self.counter += 1
        return f"{stem}{self.counter}"


def _translate(e: MatLangExpr, x: str, y: str, wmap: Dict[str, str], out: _Translation, enc: SchemaEncoding) -> None:
    if isinstance(e, MatrixSymbol):
        rel = enc.rel_of[e.name]
        shape = enc.schema.encodings[e.name]
        rows, cols = enc.schema.matrices[e.name]
        if shape == "binary":
            out.atoms.append(RelAtom(rel, (x, y)))
        elif shape == "unary":
            if cols == "1":
                out.atoms.append(RelAtom(rel, (x,)))
                out.atoms.append(IneqAtom(y, "1"))
            else:
                out.atoms.append(IneqAtom(x, "1"))
                out.atoms.append(RelAtom(rel, (y,)))
        else:
            out.atoms.append(RelAtom(rel, ()))
            out.atoms.append(IneqAtom(x, "1"))
            out.atoms.append(IneqAtom(y, "1"))
    elif isinstance(e, VectorVariable):
        out.atoms.append(IneqAtom(x, enc.const_of[e.size]))
        out.atoms.append(IneqAtom(y, "1"))
        out.equalities.append((x, wmap[e.name]))
    elif isinstance(e, OnesVector):
        out.atoms.append(IneqAtom(x, enc.const_of[e.size]))
        out.atoms.append(IneqAtom(y, "1"))
    elif isinstance(e, IdentityMatrix):
        out.atoms.append(IneqAtom(x, enc.const_of[e.size]))
        out.atoms.append(IneqAtom(y, enc.const_of[e.size]))
        out.equalities.append((x, y))
    elif isinstance(e, Transpose):
        _translate(e.sub, y, x, wmap, out, enc)
    elif isinstance(e, Hadamard):
        _translate(e.left, x, y, wmap, out, enc)
        _translate(e.right, x, y, wmap, out, enc)
    elif isinstance(e, ScalarMul):
        # the scalar factor lives at entry (1,1); sum it out on fresh variables
        sx, sy = out.fresh("s"), out.fresh("s")
        _translate(e.left, sx, sy, wmap, out, enc)
        _translate(e.right, x, y, wmap, out, enc)
    elif isinstance(e, MatMul):
        inner = e.left.typ[1]
        if inner == "1":
            # the shared index is pinned to 1 on consistent databases; keeping
            # the two sides on separate bound variables preserves acyclicity
            z1, z2 = out.fresh("z"), out.fresh("z")
            _translate(e.left, x, z1, wmap, out, enc)
            _translate(e.right, z2, y, wmap, out, enc)
        else:
            z = out.fresh("z")
            _translate(e.left, x, z, wmap, out, enc)
            _translate(e.right, z, y, wmap, out, enc)
    elif isinstance(e, SumIteration):
        w = out.fresh("w")
        # the explicit range keeps the iteration's multiplicity even when the
        # vector variable does not occur in the body (beta copies of the sum)
        out.atoms.append(IneqAtom(w, enc.const_of[e.var_size]))
        _translate(e.sub, x, y, {**wmap, e.var: w}, out, enc)
    elif isinstance(e, Add):
        raise FragmentError("matrix addition has no conjunctive translation")
    else:
        raise TypeCheckError(f"cannot translate node {e!r}")


def infer_cq_types(q: ConjunctiveQuery, enc: SchemaEncoding) -> Tuple[bool, Dict[str, str]]:
    """Well-typedness of a CQ under the relational-to-matrix reading of ``enc``.

    Returns (well_typed, variable -> size symbol); on conflict the partial
    assignment is still returned.
    """
    tau: Dict[str, str] = {}
    ok = True

    def assign(v: str, size: str) -> None:
        nonlocal ok
        if tau.setdefault(v, size) != size:
            ok = False

    for atom in q.atoms:
        if isinstance(atom, IneqAtom):
            assign(atom.var, enc.size_of.get(atom.bound, atom.bound))
            continue
        matrix = enc.mat_of.get(atom.symbol)
        if matrix is None:
            ok = False
            continue
        rows, cols = enc.schema.matrices[matrix]
        shape = enc.schema.encodings[matrix]
        if shape == "binary":
            assign(atom.args[0], rows)
            assign(atom.args[1], cols)
        elif shape == "unary":
            assign(atom.args[0], rows if cols == "1" else cols)
    return ok, tau


def _split_one_typed_bound_vars(q: ConjunctiveQuery, enc: SchemaEncoding) -> ConjunctiveQuery:
    """Split bound variables of size type 1 across their atom occurrences.

    Sound on databases consistent with the encoding: such variables only take
    the value 1, so per-occurrence existentials sum over the same singleton.
    The split removes spurious cycles introduced by shared inner indices of
    vector-typed subexpressions.
    """
    ok, tau = infer_cq_types(q, enc)
    if not ok:
        # conflicting size assignments: a variable may not be pinned after all
        return q
    head = set(q.head_vars)
    occurrences: Dict[str, int] = {}
    for atom in q.atoms:
        args = atom.args if isinstance(atom, RelAtom) else (atom.var,)
        for v in set(args):
            occurrences[v] = occurrences.get(v, 0) + 1
    targets = {
        v
        for v, size in tau.items()
        if size == "1" and v not in head and occurrences.get(v, 0) > 1
    }
    if not targets:
        return q
    counter = 0
    new_atoms: List[RelAtom | IneqAtom] = []
    for atom in q.atoms:
        if isinstance(atom, RelAtom):
            args = []
            renamed: Dict[str, str] = {}
            for v in atom.args:
                if v in targets:
                    if v not in renamed:
                        counter += 1
                        renamed[v] = f"u{counter}"
                    args.append(renamed[v])
                else:
                    args.append(v)
            new_atoms.append(RelAtom(atom.symbol, tuple(args)))
        else:
            if atom.var in targets:
                counter += 1
                new_atoms.append(IneqAtom(f"u{counter}", atom.bound))
            else:
                new_atoms.append(atom)
    return ConjunctiveQuery(q.head_symbol, q.head_vars, tuple(new_atoms))


def translate_to_cq(query: MatQuery, enc: SchemaEncoding, head_relation: Optional[str] = None) -> ConjunctiveQuery:
    """Translate an addition-free matrix query into a conjunctive query.

    The result simulates the matrix query: evaluating it over the relational
    encoding of any instance yields the relational encoding of the matrix
    result.
    """
    e = query.expr
    if e.typ is None:
        raise TypeCheckError("translate_to_cq needs a typechecked query")
    if free_vector_variables(e):
        raise TypeCheckError("query expressions cannot have free vector variables")
    out = _Translation()
    x, y = "x", "y"
    _translate(e, x, y, {}, out, enc)

    uf = _UnionFind()
    for a, b in out.equalities:
        uf.union(a, b)
    # representative: prefer variables that occur in an atom, then lexicographic
    in_atoms: Set[str] = set()
    for atom in out.atoms:
        in_atoms |= set(atom.args if isinstance(atom, RelAtom) else (atom.var,))
    classes: Dict[str, List[str]] = {}
    for v in set(list(uf.parent) + [x, y]) | in_atoms:
        classes.setdefault(uf.find(v), []).append(v)
    rep: Dict[str, str] = {}
    for members in classes.values():
        candidates = sorted(m for m in members if m in in_atoms) or sorted(members)
        chosen = candidates[0]
        for m in members:
            rep[m] = chosen

    def r(v: str) -> str:
        return rep.get(v, v)

    atoms: List[RelAtom | IneqAtom] = []
    for atom in out.atoms:
        if isinstance(atom, RelAtom):
            atoms.append(RelAtom(atom.symbol, tuple(r(v) for v in atom.args)))
        else:
            atoms.append(IneqAtom(r(atom.var), atom.bound))

    head_symbol = head_relation or enc.rel_of.get(query.head, query.head)
    rows, cols = e.typ
    shape = enc.schema.encodings.get(query.head, "binary")
    if shape == "binary":
        head_vars: Tuple[str, ...] = (r(x), r(y))
    elif shape == "unary":
        head_vars = (r(x),) if cols == "1" else (r(y),)
    else:
        head_vars = ()
    cq = ConjunctiveQuery(head_symbol, head_vars, tuple(atoms))
    return _split_one_typed_bound_vars(cq, enc)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass
class MatlangResult:
    instance: MatrixInstance  # extended with the head matrix
    head: str
    translation: Optional[ConjunctiveQuery]
    classification: Dict[str, bool]
    used_engine: bool
    warning: Optional[str] = None


def eval_matlang(query: MatQuery, instance: MatrixInstance) -> MatlangResult:
    """Evaluate a matrix query, via the relational engine when possible.

    Addition-free queries translate to a CQ, run through the static engine
    (or the oracle, with a warning, if the translation is not free-connex),
    and decode back.  Queries with addition use the dense reference evaluator.
    """
    from .oracle import oracle_eval_cq, oracle_eval_matlang
    from .planner import classify
    from .static_engine import eval_materialized

    schema = instance.schema
    typecheck(query.expr, schema)
    rows, cols = query.expr.typ
    fragments = classify_fragment(query.expr)
    head = query.head
    if head in schema.matrices and schema.matrices[head] != (rows, cols):
        raise TypeCheckError(
            f"head {head!r} is declared {schema.matrices[head]}, expression has {query.expr.typ}"
        )

    extended_schema = MatrixSchema(
        dict(schema.sizes),
        {**schema.matrices, head: (rows, cols)},
        {**schema.encodings, head: schema.encodings.get(head, "binary")},
    )

    if not fragments["conj_matlang"]:
        dense = oracle_eval_matlang(query.expr, instance)
        result = MatrixInstance(
            extended_schema,
            instance.semiring,
            {**{k: dict(v) for k, v in instance.entries.items()},
             head: dense_to_entries(dense, instance.semiring)},
        )
        return MatlangResult(
            result,
            head,
            None,
            {},
            used_engine=False,
            warning="expression uses addition; evaluated by the dense reference evaluator",
        )

    enc = SchemaEncoding.default(extended_schema)
    cq = translate_to_cq(query, enc)
    db = encode_instance(instance_with_schema(instance, extended_schema), enc)
    flags = classify(cq)
    warning = None
    if flags.free_connex:
        answer = eval_materialized(cq, db)
        used_engine = True
    else:
        answer = oracle_eval_cq(cq, db)
        used_engine = False
        warning = "translated query is not free-connex; evaluated by the oracle"

    m, n = extended_schema.dims(head)
    cells: Dict[Tuple[int, int], Value] = {}
    for t, v in answer.entries.items():
        i, j = enc.matrix_entry(head, t)
        if not (1 <= i <= m and 1 <= j <= n):
            raise ConsistencyError(
                f"engine produced entry ({i},{j}) outside the {m}x{n} head dimension"
            )
        cells[(i, j)] = v
    result = MatrixInstance(
        extended_schema,
        instance.semiring,
        {**{k: dict(v) for k, v in instance.entries.items()}, head: cells},
    )
    return MatlangResult(result, head, cq, flags.as_dict(), used_engine, warning)


def instance_with_schema(instance: MatrixInstance, schema: MatrixSchema) -> MatrixInstance:
    entries = {name: dict(instance.entries.get(name, {})) for name in schema.matrices}
    return MatrixInstance(schema, instance.semiring, entries)


# ---------------------------------------------------------------------------
# Matrix entry updates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MatrixEntryUpdate:
    """``add``: combine k with the entry; ``zero``: erase the entry."""

    kind: str  # "add" | "zero"
    matrix: str
    i: int
    j: int
    value: Optional[Value] = None


def matrix_update_to_relational(
    u: MatrixEntryUpdate, schema: MatrixSchema, enc: SchemaEncoding
) -> List[SingleTupleUpdate]:
    m, n = schema.dims(u.matrix)
    if not (1 <= u.i <= m and 1 <= u.j <= n):
        raise ConsistencyError(
            f"entry ({u.i},{u.j}) outside the {m}x{n} dimension of {u.matrix!r}"
        )
    t = enc.relation_tuple(u.matrix, u.i, u.j)
    rel = enc.rel_of[u.matrix]
    if u.kind == "add":
        return [SingleTupleUpdate("insert", rel, t, u.value)]
    if u.kind == "zero":
        return [SingleTupleUpdate("delete", rel, t)]
    raise SchemaError(f"unknown matrix update kind {u.kind!r}")
