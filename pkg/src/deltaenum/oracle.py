"""Brute-force reference evaluators: FO+ semiring semantics and dense matrices.

These are the ground truth the engines are tested against.  They favour
obviousness over speed: formulas are evaluated by structural recursion with
explicit sums over the bounded domain, matrices by entrywise recursion with
canonical-vector substitution.  Intended for small instances only.
"""

from __future__ import annotations

from typing import Dict, Optional, Tuple

from .errors import VocabularyError
from .kdata import AnnotatedRelation, Database, DataTuple
from .query import (
    ConjunctiveQuery,
    FoAnd,
    FoCmp,
    FoExists,
    FoFormula,
    FoOr,
    FoQuery,
    FoRel,
    cq_to_fo,
    fo_free_vars,
)

Valuations = Dict[Tuple[int, ...], object]  # keyed by values of sorted free vars


def active_domain_bound(db: Database) -> int:
    """Largest data value occurring in relations or constant bindings."""
    bound = 1
    for rel in db.relations.values():
        for t in rel.entries:
            if t:
                bound = max(bound, max(t))
    if db.constants:
        bound = max(bound, max(db.constants.values()))
    return bound


def oracle_eval_fo(
    phi: FoFormula, db: Database, domain_bound: Optional[int] = None
) -> Tuple[Tuple[str, ...], Valuations]:
    """Evaluate a positive-FO formula; returns (sorted free vars, nonzero map)."""
    if domain_bound is None:
        domain_bound = active_domain_bound(db)
    s = db.semiring

    def rec(f: FoFormula) -> Tuple[Tuple[str, ...], Valuations]:
        if isinstance(f, FoRel):
            rel = db.relation(f.symbol)
            if len(f.args) != rel.arity:
                raise VocabularyError(
                    f"atom {f.symbol} has arity {len(f.args)}, relation expects {rel.arity}"
                )
            order = tuple(sorted(set(f.args)))
            out: Valuations = {}
            for t, k in rel.entries.items():
                binding: Dict[str, int] = {}
                for arg, value in zip(f.args, t):
                    if binding.setdefault(arg, value) != value:
                        binding = None  # repeated variable, unequal components
                        break
                if binding is None:
                    continue
                out[tuple(binding[v] for v in order)] = k  # bindings are unique per t
            return order, out
        if isinstance(f, FoCmp):
            c = db.constant(f.bound)
            hi = min(c, domain_bound)
            return (f.var,), {(v,): s.one for v in range(1, hi + 1)}
        if isinstance(f, FoAnd):
            lorder, lvals = rec(f.left)
            rorder, rvals = rec(f.right)
            order = tuple(sorted(set(lorder) | set(rorder)))
            shared = [v for v in lorder if v in rorder]
            lpos = {v: i for i, v in enumerate(lorder)}
            rpos = {v: i for i, v in enumerate(rorder)}
            index: Dict[Tuple[int, ...], list] = {}
            for rk, rv in rvals.items():
                index.setdefault(tuple(rk[rpos[v]] for v in shared), []).append((rk, rv))
            out = {}
            for lk, lv in lvals.items():
                for rk, rv in index.get(tuple(lk[lpos[v]] for v in shared), []):
                    merged = dict(zip(lorder, lk))
                    merged.update(zip(rorder, rk))
                    key = tuple(merged[v] for v in order)
                    val = s.mul(lv, rv)
                    if not s.is_zero(val):
                        out[key] = val  # unique (lk, rk) per key
            return order, out
        if isinstance(f, FoOr):
            lorder, lvals = rec(f.left)
            rorder, rvals = rec(f.right)
            assert set(lorder) == set(rorder), "unsafe disjunction"
            rpos = {v: i for i, v in enumerate(rorder)}
            out = dict(lvals)
            for rk, rv in rvals.items():
                key = tuple(rk[rpos[v]] for v in lorder)
                out[key] = s.add(out[key], rv) if key in out else rv
            return lorder, {k: v for k, v in out.items() if not s.is_zero(v)}
        if isinstance(f, FoExists):
            sorder, svals = rec(f.sub)
            drop = set(f.vars)
            order = tuple(v for v in sorder if v not in drop)
            keep = [i for i, v in enumerate(sorder) if v not in drop]
            out = {}
            for k, v in svals.items():
                key = tuple(k[i] for i in keep)
                out[key] = s.add(out[key], v) if key in out else v
            return order, {k: v for k, v in out.items() if not s.is_zero(v)}
        raise TypeError(f"unknown formula node {f!r}")

    order, vals = rec(phi)
    free = tuple(sorted(fo_free_vars(phi)))
    assert order == free or not vals, (order, free)
    return free, vals


def oracle_eval_fo_query(
    q: FoQuery, db: Database, domain_bound: Optional[int] = None
) -> Dict[DataTuple, object]:
    """Evaluate a positive-FO query into head tuples (repeats honoured)."""
    order, vals = oracle_eval_fo(q.body, db, domain_bound)
    pos = {v: i for i, v in enumerate(order)}
    out: Dict[DataTuple, object] = {}
    for key, val in vals.items():
        out[tuple(key[pos[v]] for v in q.head_vars)] = val
    return out


def oracle_eval_cq(
    q: ConjunctiveQuery, db: Database, domain_bound: Optional[int] = None
) -> AnnotatedRelation:
    """AnsEnum of a CQ as an annotated relation over its head tuples."""
    entries = oracle_eval_fo_query(cq_to_fo(q), db, domain_bound)
    return AnnotatedRelation(len(q.head_vars), entries)


# ---------------------------------------------------------------------------
# Dense matrix evaluation
# ---------------------------------------------------------------------------

def oracle_eval_matlang(expr, instance, valuation=None):
    """Entrywise evaluation of a matrix expression into a dense row-major list.

    ``instance`` is a matlang.MatrixInstance; sum-iteration substitutes the
    canonical vectors for the bound vector variable.  Dimensions beyond a few
    dozen will be slow by design.
    """
    from . import matlang  # local import; the oracle stays dependency-light

    s = instance.semiring
    if valuation is None:
        valuation = {}

    def dims(e) -> Tuple[int, int]:
        rows, cols = e.typ
        return instance.size_of(rows), instance.size_of(cols)

    def rec(e, mu):
        m, n = dims(e)
        if isinstance(e, matlang.MatrixSymbol):
            return instance.dense(e.name)
        if isinstance(e, matlang.VectorVariable):
            return mu[e.name]
        if isinstance(e, matlang.OnesVector):
            return [[s.one] for _ in range(m)]
        if isinstance(e, matlang.IdentityMatrix):
            return [
                [s.one if i == j else s.zero for j in range(n)] for i in range(m)
            ]
        if isinstance(e, matlang.Transpose):
            sub = rec(e.sub, mu)
            return [[sub[j][i] for j in range(len(sub))] for i in range(len(sub[0]))]
        if isinstance(e, matlang.Add):
            a, b = rec(e.left, mu), rec(e.right, mu)
            return [
                [s.add(a[i][j], b[i][j]) for j in range(n)] for i in range(m)
            ]
        if isinstance(e, matlang.Hadamard):
            a, b = rec(e.left, mu), rec(e.right, mu)
            return [
                [s.mul(a[i][j], b[i][j]) for j in range(n)] for i in range(m)
            ]
        if isinstance(e, matlang.ScalarMul):
            a, b = rec(e.left, mu), rec(e.right, mu)
            return [[s.mul(a[0][0], b[i][j]) for j in range(n)] for i in range(m)]
        if isinstance(e, matlang.MatMul):
            a, b = rec(e.left, mu), rec(e.right, mu)
            inner = len(b)
            out = []
            for i in range(m):
                row = []
                for j in range(n):
                    acc = s.zero
                    for k in range(inner):
                        acc = s.add(acc, s.mul(a[i][k], b[k][j]))
                    row.append(acc)
                out.append(row)
            return out
        if isinstance(e, matlang.SumIteration):
            size = instance.size_of(e.var_size)
            acc = [[s.zero for _ in range(n)] for _ in range(m)]
            for k in range(size):
                canonical = [[s.one if i == k else s.zero] for i in range(size)]
                sub = rec(e.sub, {**mu, e.var: canonical})
                acc = [
                    [s.add(acc[i][j], sub[i][j]) for j in range(n)] for i in range(m)
                ]
            return acc
        raise TypeError(f"unknown expression node {e!r}")

    return rec(expr, valuation)
