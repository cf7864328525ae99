import random

import pytest

from deltaenum.errors import ConsistencyError, TypeCheckError
from deltaenum.matlang import (
    Add,
    Hadamard,
    IdentityMatrix,
    MatMul,
    MatQuery,
    MatrixEntryUpdate,
    MatrixInstance,
    MatrixSchema,
    MatrixSymbol,
    OnesVector,
    ScalarMul,
    SchemaEncoding,
    SumIteration,
    Transpose,
    VectorVariable,
    classify_fragment,
    decode_instance,
    encode_instance,
    eval_matlang,
    matrix_update_to_relational,
    parse_matlang,
    translate_to_cq,
    typecheck,
)
from deltaenum.oracle import oracle_eval_matlang
from deltaenum.query import IneqAtom
from deltaenum.semiring import builtin_semiring

NAT = builtin_semiring("natural")
BOOL = builtin_semiring("boolean")


def schema_abc():
    return MatrixSchema(
        {"alpha": 3, "beta": 2, "gamma": 4},
        {
            "A": ("alpha", "beta"),
            "B": ("beta", "gamma"),
            "C": ("alpha", "beta"),
            "U": ("alpha", "1"),
            "V": ("beta", "1"),
        },
    )


# ---------------------------------------------------------------------------
# Typing
# ---------------------------------------------------------------------------

def test_typecheck_product():
    s = schema_abc()
    e = MatMul(MatrixSymbol("A"), MatrixSymbol("B"))
    assert typecheck(e, s) == ("alpha", "gamma")


def test_typecheck_shape_mismatch():
    s = schema_abc()
    with pytest.raises(TypeCheckError):
        typecheck(Hadamard(MatrixSymbol("A"), MatrixSymbol("B")), s)


def test_typecheck_sum_iteration():
    s = schema_abc()
    e = SumIteration("v", "beta", MatMul(MatrixSymbol("A"), VectorVariable("v", "beta")))
    assert typecheck(e, s) == ("alpha", "1")


def test_typecheck_scalar_rewrite():
    s = MatrixSchema({"alpha": 3}, {"S": ("1", "1"), "A": ("alpha", "alpha")})
    e = MatMul(MatrixSymbol("S"), MatrixSymbol("A"))
    assert typecheck(e, s) == ("alpha", "alpha")
    assert isinstance(e, ScalarMul)


def test_parse_and_print_query():
    s = schema_abc()
    q = parse_matlang("H := A .* (U * V^T)", s)
    assert q.head == "H"
    assert isinstance(q.expr, Hadamard)
    assert isinstance(q.expr.right, MatMul)
    assert isinstance(q.expr.right.right, Transpose)


def test_parse_sum_and_ones():
    s = schema_abc()
    q = parse_matlang("H := sum(v:beta, A * v)", s)
    assert isinstance(q.expr, SumIteration)
    q2 = parse_matlang("H := ones(alpha)' * ones(alpha)", s)
    assert typecheck(q2.expr, s) == ("1", "1")


# ---------------------------------------------------------------------------
# Fragments
# ---------------------------------------------------------------------------

def test_fragment_fc_masked_outer_product():
    s = schema_abc()
    e = Hadamard(
        MatrixSymbol("A"),
        MatMul(MatrixSymbol("U"), Transpose(MatrixSymbol("V"))),
    )
    # wrong shapes for Hadamard unless U.V^T is alpha x beta: U:(alpha,1), V:(beta,1)
    typecheck(e, s)
    flags = classify_fragment(e)
    assert flags["fc_matlang"] and flags["conj_matlang"] and flags["matlang"]


def test_fragment_matrix_matrix_product_is_not_fc():
    s = schema_abc()
    e = MatMul(MatrixSymbol("A"), MatrixSymbol("B"))
    typecheck(e, s)
    flags = classify_fragment(e)
    assert flags["conj_matlang"] and not flags["fc_matlang"]


def test_fragment_qh_two_layer():
    s = MatrixSchema({"alpha": 3, "beta": 2}, {"A": ("alpha", "beta"), "U": ("alpha", "1")})
    inner = MatMul(MatrixSymbol("U"), Transpose(OnesVector("beta")))
    e = Hadamard(MatrixSymbol("A"), inner)
    typecheck(e, s)
    flags = classify_fragment(e)
    assert flags["qh_matlang"] and flags["fc_matlang"]
    assert not flags["simple_matlang"]


def test_fragment_simple():
    s = schema_abc()
    e = MatMul(MatrixSymbol("A"), OnesVector("beta"))
    typecheck(e, s)
    flags = classify_fragment(e)
    assert flags["simple_matlang"] and flags["qh_matlang"]


def test_fragment_addition_not_conj():
    s = schema_abc()
    e = Add(MatrixSymbol("A"), MatrixSymbol("C"))
    typecheck(e, s)
    flags = classify_fragment(e)
    assert flags["matlang"] and not flags["conj_matlang"]


# ---------------------------------------------------------------------------
# Encodings
# ---------------------------------------------------------------------------

def test_encode_binary_matrix():
    schema = MatrixSchema({"alpha": 3, "beta": 2}, {"A": ("alpha", "beta")})
    inst = MatrixInstance(schema, BOOL, {"A": {(1, 1): True, (3, 2): True}})
    enc = SchemaEncoding.default(schema)
    db = encode_instance(inst, enc)
    assert db.relations["A"].entries == {(1, 1): True, (3, 2): True}
    assert db.constants == {"alpha": 3, "beta": 2, "1": 1}


def test_encode_unary_vector():
    schema = MatrixSchema({"alpha": 3}, {"U": ("alpha", "1")}, {"U": "unary"})
    inst = MatrixInstance(schema, NAT, {"U": {(2, 1): 5}})
    db = encode_instance(inst, SchemaEncoding.default(schema))
    assert db.relations["U"].entries == {(2,): 5}


def test_roundtrip_encode_decode_identity():
    rng = random.Random(5)
    schema = MatrixSchema(
        {"alpha": 3, "beta": 2},
        {"A": ("alpha", "beta"), "U": ("beta", "1"), "S": ("1", "1")},
        {"U": "unary", "S": "nullary"},
    )
    enc = SchemaEncoding.default(schema)
    for _ in range(50):
        entries = {}
        for name in schema.matrices:
            m, n = schema.dims(name)
            cells = {}
            for i in range(1, m + 1):
                for j in range(1, n + 1):
                    if rng.random() < 0.4:
                        v = NAT.sample(rng)
                        if not NAT.is_zero(v):
                            cells[(i, j)] = v
            entries[name] = cells
        inst = MatrixInstance(schema, NAT, entries)
        back = decode_instance(encode_instance(inst, enc), enc)
        assert back.entries == inst.entries
        assert back.schema.sizes == inst.schema.sizes


def test_decode_rejects_out_of_range():
    schema = MatrixSchema({"alpha": 3, "beta": 2}, {"A": ("alpha", "beta")})
    enc = SchemaEncoding.default(schema)
    from deltaenum.kdata import AnnotatedRelation, Database

    db = Database(NAT, constants={"alpha": 3, "beta": 2})
    db.relations["A"] = AnnotatedRelation(2, {(4, 1): 2})
    with pytest.raises(ConsistencyError):
        decode_instance(db, enc)


def test_decode_empty_relations_are_zero_matrices():
    schema = MatrixSchema({"alpha": 2}, {"A": ("alpha", "alpha")})
    enc = SchemaEncoding.default(schema)
    from deltaenum.kdata import AnnotatedRelation, Database

    db = Database(NAT, constants={"alpha": 2})
    db.relations["A"] = AnnotatedRelation(2)
    inst = decode_instance(db, enc)
    assert inst.entries["A"] == {}
    assert inst.dense("A") == [[0, 0], [0, 0]]


# ---------------------------------------------------------------------------
# Translation
# ---------------------------------------------------------------------------

def head_schema(expr_schema, head, typ, encoding="binary"):
    return MatrixSchema(
        dict(expr_schema.sizes),
        {**expr_schema.matrices, head: typ},
        {**expr_schema.encodings, head: encoding},
    )


def test_translate_identity_is_diagonal_comparison():
    schema = MatrixSchema({"alpha": 3}, {})
    q = MatQuery("H", IdentityMatrix("alpha"))
    full = head_schema(schema, "H", ("alpha", "alpha"))
    typecheck(q.expr, full)
    cq = translate_to_cq(q, SchemaEncoding.default(full))
    assert cq.head_vars[0] == cq.head_vars[1]
    v = cq.head_vars[0]
    assert set(cq.atoms) == {IneqAtom(v, "alpha")}


def test_translate_matrix_product():
    s = schema_abc()
    q = MatQuery("H", MatMul(MatrixSymbol("A"), MatrixSymbol("B")))
    full = head_schema(s, "H", ("alpha", "gamma"))
    typecheck(q.expr, full)
    cq = translate_to_cq(q, SchemaEncoding.default(full))
    assert len(cq.head_vars) == 2
    hx, hy = cq.head_vars
    rel = cq.relational_atoms
    assert len(rel) == 2
    (a,) = [at for at in rel if at.symbol == "A"]
    (b,) = [at for at in rel if at.symbol == "B"]
    assert a.args[0] == hx and b.args[1] == hy
    assert a.args[1] == b.args[0]  # shared bound variable


def test_translate_transpose():
    s = schema_abc()
    q = MatQuery("H", Transpose(MatrixSymbol("A")))
    full = head_schema(s, "H", ("beta", "alpha"))
    typecheck(q.expr, full)
    cq = translate_to_cq(q, SchemaEncoding.default(full))
    hx, hy = cq.head_vars
    (a,) = cq.relational_atoms
    assert a.args == (hy, hx)


def test_translate_fc_outer_product_is_free_connex():
    from deltaenum.planner import classify

    s = schema_abc()
    e = Hadamard(MatrixSymbol("A"), MatMul(MatrixSymbol("U"), Transpose(MatrixSymbol("V"))))
    full = head_schema(s, "H", ("alpha", "beta"))
    typecheck(e, full)
    cq = translate_to_cq(MatQuery("H", e), SchemaEncoding.default(full))
    assert classify(cq).free_connex


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def test_eval_hadamard_outer_product():
    schema = MatrixSchema(
        {"alpha": 2, "beta": 2},
        {"A": ("alpha", "beta"), "U": ("alpha", "1"), "V": ("beta", "1")},
    )
    inst = MatrixInstance(
        schema, NAT, {"A": {(1, 1): 2}, "U": {(1, 1): 3}, "V": {(1, 1): 5}}
    )
    e = Hadamard(MatrixSymbol("A"), MatMul(MatrixSymbol("U"), Transpose(MatrixSymbol("V"))))
    result = eval_matlang(MatQuery("H", e), inst)
    assert result.used_engine
    assert result.instance.entries["H"] == {(1, 1): 30}


def test_eval_ones_vector():
    schema = MatrixSchema({"alpha": 3}, {})
    result = eval_matlang(MatQuery("H", OnesVector("alpha")), MatrixInstance(schema, NAT))
    assert result.instance.entries["H"] == {(1, 1): 1, (2, 1): 1, (3, 1): 1}


def test_eval_double_transpose_is_identity():
    schema = MatrixSchema({"alpha": 2, "beta": 3}, {"A": ("alpha", "beta")})
    inst = MatrixInstance(schema, NAT, {"A": {(1, 2): 4, (2, 3): 1}})
    result = eval_matlang(MatQuery("H", Transpose(Transpose(MatrixSymbol("A")))), inst)
    assert result.instance.entries["H"] == inst.entries["A"]


def test_eval_addition_falls_back_to_reference():
    schema = MatrixSchema({"alpha": 2}, {"A": ("alpha", "alpha"), "B": ("alpha", "alpha")})
    inst = MatrixInstance(schema, NAT, {"A": {(1, 1): 1}, "B": {(1, 1): 2, (2, 2): 3}})
    result = eval_matlang(MatQuery("H", Add(MatrixSymbol("A"), MatrixSymbol("B"))), inst)
    assert not result.used_engine and result.warning
    assert result.instance.entries["H"] == {(1, 1): 3, (2, 2): 3}


def test_oracle_identity_and_schoolbook_product():
    schema = MatrixSchema({"alpha": 2, "beta": 2, "gamma": 2}, {"A": ("alpha", "beta"), "B": ("beta", "gamma")})
    inst = MatrixInstance(
        schema, NAT, {"A": {(1, 1): 1, (1, 2): 2, (2, 2): 3}, "B": {(1, 1): 4, (2, 1): 5}}
    )
    assert oracle_eval_matlang(IdentityMatrix_typed(schema), inst) == [[1, 0], [0, 1]]
    e = MatMul(MatrixSymbol("A"), MatrixSymbol("B"))
    typecheck(e, schema)
    assert oracle_eval_matlang(e, inst) == [[14, 0], [15, 0]]


def IdentityMatrix_typed(schema):
    e = IdentityMatrix("alpha")
    typecheck(e, schema)
    return e


def test_oracle_sum_identity_derivation():
    schema = MatrixSchema({"gamma": 3}, {})
    e = SumIteration("v", "gamma", MatMul(VectorVariable("v", "gamma"), Transpose(VectorVariable("v", "gamma"))))
    typecheck(e, schema)
    inst = MatrixInstance(schema, NAT)
    assert oracle_eval_matlang(e, inst) == [
        [1, 0, 0],
        [0, 1, 0],
        [0, 0, 1],
    ]


# ---------------------------------------------------------------------------
# Matrix updates
# ---------------------------------------------------------------------------

def test_matrix_update_translations():
    schema = MatrixSchema({"alpha": 3, "beta": 3}, {"A": ("alpha", "beta")})
    enc = SchemaEncoding.default(schema)
    ups = matrix_update_to_relational(MatrixEntryUpdate("add", "A", 2, 3, 5), schema, enc)
    assert ups == [
        __import__("deltaenum.kdata", fromlist=["SingleTupleUpdate"]).SingleTupleUpdate(
            "insert", "A", (2, 3), 5
        )
    ]
    ups = matrix_update_to_relational(MatrixEntryUpdate("zero", "A", 2, 3), schema, enc)
    assert ups[0].kind == "delete" and ups[0].tuple == (2, 3)
    with pytest.raises(ConsistencyError):
        matrix_update_to_relational(MatrixEntryUpdate("add", "A", 4, 1, 1), schema, enc)


# ---------------------------------------------------------------------------
# Random simulation properties
# ---------------------------------------------------------------------------

def test_simulation_commutes_on_random_corpus():
    from deltaenum.generators import (
        random_conj_expression,
        random_matrix_instance,
        random_matrix_schema,
    )

    rng = random.Random(20240813)
    semirings = [BOOL, NAT]
    found = 0
    while found < 200:
        schema = random_matrix_schema(rng)
        expr = random_conj_expression(rng, schema)
        if expr is None:
            continue
        found += 1
        semiring = semirings[found % 2]
        inst = random_matrix_instance(rng, schema, semiring)
        result = eval_matlang(MatQuery("HOUT", expr), inst)
        got = result.instance.dense("HOUT")
        want = oracle_eval_matlang(expr, inst)
        assert got == want, (found, expr)


def test_fc_and_qh_fragments_translate_to_matching_cq_classes():
    from deltaenum.generators import random_conj_expression, random_matrix_schema
    from deltaenum.planner import classify

    rng = random.Random(20240814)
    fc_seen = qh_seen = 0
    trials = 0
    while (fc_seen < 60 or qh_seen < 25) and trials < 20000:
        trials += 1
        schema = random_matrix_schema(rng)
        expr = random_conj_expression(rng, schema)
        if expr is None:
            continue
        flags = classify_fragment(expr)
        if not flags["fc_matlang"] and not flags["qh_matlang"]:
            continue
        full = head_schema(schema, "HOUT", expr.typ)
        typecheck(expr, full)
        cq = translate_to_cq(MatQuery("HOUT", expr), SchemaEncoding.default(full))
        qflags = classify(cq)
        if flags["fc_matlang"]:
            fc_seen += 1
            assert qflags.free_connex, (expr, cq.to_text())
        if flags["qh_matlang"]:
            qh_seen += 1
            assert qflags.q_hierarchical, (expr, cq.to_text())
    assert fc_seen >= 60 and qh_seen >= 25, (fc_seen, qh_seen)


def test_eval_with_unary_encoded_head():
    schema = MatrixSchema(
        {"alpha": 3, "beta": 2},
        {"A": ("alpha", "beta"), "H": ("alpha", "1")},
        {"H": "unary"},
    )
    inst = MatrixInstance(schema, NAT, {"A": {(1, 1): 2, (1, 2): 3, (3, 1): 4}, "H": {}})
    e = MatMul(MatrixSymbol("A"), OnesVector("beta"))  # row sums
    result = eval_matlang(MatQuery("H", e), inst)
    assert result.instance.entries["H"] == {(1, 1): 5, (3, 1): 4}
    assert result.instance.dense("H") == oracle_eval_matlang(e, inst)
