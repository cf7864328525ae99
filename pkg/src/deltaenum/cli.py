"""Command-line entry point.

Subcommands: classify, plan, eval, enumerate, dyn, matlang {eval, compile,
classify}, bench.  All take --semiring; most support --json for
machine-readable reports (timing isolated under a "timing" key) and --verify
for an oracle cross-check.  Exit codes: 0 success, 1 user error,
2 verification mismatch.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional

from .errors import EngineError, NotConjunctiveError
from .kdata import db_size, load_database, parse_update_script
from .semiring import BUILTIN_SEMIRING_NAMES, builtin_semiring


def _read_query(path: str):
    from .query import parse_query

    return parse_query(Path(path).read_text())


def _emit(report: Dict, as_json: bool) -> None:
    if as_json:
        print(json.dumps(report, indent=2, sort_keys=True, default=str))
    else:
        for key, value in report.items():
            if key == "timing":
                continue
            print(f"{key}: {value}")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_classify(args) -> int:
    from .planner import classify
    from .query import is_constant_disjoint

    q = _read_query(args.query)
    flags = classify(q).as_dict()
    report = {"query": q.to_text(), **flags}
    if not flags["constant_disjoint"]:
        _, witness = is_constant_disjoint(q)
        report["constant_disjoint_witness"] = str(witness)
    _emit(report, args.json)
    return 0


def cmd_plan(args) -> int:
    from .planner import build_fc_plan, build_guarded_plan, classify
    from .query import split

    q = _read_query(args.query)
    flags = classify(q)
    plan = None
    if args.guarded:
        plan = build_guarded_plan(q)
    elif flags.free_connex and split(q).rel_part.relational_atoms:
        plan = build_fc_plan(q)
    if plan is None:
        print(
            "no plan: query is "
            + ("not q-hierarchical" if args.guarded else "not free-connex or has no relational atoms"),
            file=sys.stderr,
        )
        return 1
    nodes = []
    for nid in sorted(plan.nodes):
        node = plan.nodes[nid]
        nodes.append(
            {
                "id": nid,
                "label": str(plan.atoms[node.atom_index]) if node.is_leaf else sorted(plan.vars(nid)),
                "kind": "leaf" if node.is_leaf else "interior",
                "children": node.children,
                "connex": nid in plan.connex,
            }
        )
    report = {"query": q.to_text(), "guarded": plan.guarded, "root": plan.root, "nodes": nodes}
    if args.json:
        print(json.dumps(report, indent=2))
    else:
        print(_plan_dot(plan))
    return 0


def _plan_dot(plan) -> str:
    lines = ["digraph plan {"]
    for nid in sorted(plan.nodes):
        node = plan.nodes[nid]
        label = str(plan.atoms[node.atom_index]) if node.is_leaf else "{" + ",".join(sorted(plan.vars(nid))) + "}"
        shape = "box" if node.is_leaf else "ellipse"
        style = ' style=filled fillcolor="lightblue"' if nid in plan.connex else ""
        lines.append(f'  n{nid} [label="{label}" shape={shape}{style}];')
        for c in node.children:
            lines.append(f"  n{nid} -> n{c};")
    lines.append("}")
    return "\n".join(lines)


def _load_db(args):
    semiring = builtin_semiring(args.semiring)
    vocab = Path(args.db) / "vocab.json"
    return load_database(vocab, args.db, semiring), semiring


def cmd_eval(args) -> int:
    from .oracle import oracle_eval_cq, oracle_eval_fo_query
    from .planner import classify
    from .query import parse_fo_query
    from .static_engine import enumerate_state, preprocess

    db, semiring = _load_db(args)
    text = Path(args.query).read_text()
    try:
        q = _read_query(args.query)
    except NotConjunctiveError:
        fo = parse_fo_query(text)
        print("warning: FO+ query with disjunction; using the oracle evaluator", file=sys.stderr)
        answers = oracle_eval_fo_query(fo, db)
        return _print_answers(args, semiring, answers.items(), None)

    flags = classify(q)
    timing: Dict[str, float] = {}
    if flags.free_connex:
        start = time.perf_counter()
        state = preprocess(q, db)
        timing["preprocess_s"] = time.perf_counter() - start
        stream = enumerate_state(state, limit=args.limit)
    else:
        print("warning: query is not free-connex; using the oracle evaluator", file=sys.stderr)
        stream = iter(oracle_eval_cq(q, db).entries.items())
        if args.limit is not None:
            import itertools

            stream = itertools.islice(stream, args.limit)

    if args.verify:
        got = dict(stream)
        want = oracle_eval_cq(q, db).entries
        if args.limit is None and not _answers_match(got, want, semiring):
            print("verification mismatch against the oracle", file=sys.stderr)
            return 2
        return _print_answers(args, semiring, got.items(), timing)
    return _print_answers(args, semiring, stream, timing)


def _answers_match(got, want, semiring) -> bool:
    if semiring.name == "real":
        return set(got) == set(want) and all(abs(got[t] - want[t]) <= 1e-9 for t in got)
    return got == want


def _print_answers(args, semiring, answers, timing) -> int:
    out_format = getattr(args, "out", "csv")
    count = 0
    if out_format == "jsonl":
        for t, v in answers:
            print(json.dumps({"tuple": list(t), "annotation": semiring.format(v)}))
            count += 1
    else:
        for t, v in answers:
            print(",".join(map(str, t)) + "," + semiring.format(v))
            count += 1
    if getattr(args, "json", False) and timing is not None:
        print(json.dumps({"count": count, "timing": timing}), file=sys.stderr)
    return 0


def cmd_dyn(args) -> int:
    from .dynamic_engine import dyn_enumerate, dyn_preprocess, dyn_update
    from .oracle import oracle_eval_cq

    db, semiring = _load_db(args)
    q = _read_query(args.query)
    updates = parse_update_script(args.updates, semiring)
    state = dyn_preprocess(q, db)
    for i, update in enumerate(updates):
        dyn_update(state, update)
        if args.enumerate_after_each:
            answers = list(dyn_enumerate(state))
            print(f"# after update {i + 1}: {len(answers)} answers")
            for t, v in answers:
                print(",".join(map(str, t)) + "," + semiring.format(v))
        if args.verify:
            got = dict(dyn_enumerate(state))
            want = oracle_eval_cq(q, state.db).entries
            if not _answers_match(got, want, semiring):
                print(f"verification mismatch after update {i + 1}", file=sys.stderr)
                return 2
    if not args.enumerate_after_each:
        for t, v in dyn_enumerate(state):
            print(",".join(map(str, t)) + "," + semiring.format(v))
    return 0


def cmd_matlang(args) -> int:
    from .matlang import (
        SchemaEncoding,
        classify_fragment,
        eval_matlang,
        load_matrix_instance,
        load_matrix_schema,
        parse_matlang,
        translate_to_cq,
        typecheck,
        MatrixSchema,
    )

    schema = load_matrix_schema(args.schema)
    query = parse_matlang(Path(args.expr).read_text(), schema)

    if args.action == "classify":
        _emit({"head": query.head, **classify_fragment(query.expr)}, args.json)
        return 0

    if args.action == "compile":
        rows, cols = query.expr.typ
        full = MatrixSchema(
            dict(schema.sizes),
            {**schema.matrices, query.head: (rows, cols)},
            {**schema.encodings, query.head: schema.encodings.get(query.head, "binary")},
        )
        typecheck(query.expr, full)
        from .matlang import infer_cq_types
        from .planner import classify as classify_cq

        enc = SchemaEncoding.default(full)
        cq = translate_to_cq(query, enc)
        flags = classify_cq(cq)
        report = {
            "head": query.head,
            "cq": cq.to_text(),
            **classify_fragment(query.expr),
            "translation_free_connex": flags.free_connex,
            "translation_q_hierarchical": flags.q_hierarchical,
            "translation_well_typed": infer_cq_types(cq, enc)[0],
        }
        _emit(report, args.json)
        return 0

    if not args.data:
        print("error: matlang eval needs --data", file=sys.stderr)
        return 1
    semiring = builtin_semiring(args.semiring)
    instance = load_matrix_instance(schema, args.data, semiring)
    result = eval_matlang(query, instance)
    if result.warning:
        print(f"warning: {result.warning}", file=sys.stderr)
    if args.verify:
        from .oracle import oracle_eval_matlang

        want = oracle_eval_matlang(query.expr, instance)
        if result.instance.dense(result.head) != want:
            print("verification mismatch against the dense evaluator", file=sys.stderr)
            return 2
    entries = result.instance.entries[result.head]
    if args.json:
        report = {
            "head": result.head,
            "entries": [
                {"i": i, "j": j, "value": semiring.format(v)} for (i, j), v in sorted(entries.items())
            ],
            "classification": result.classification,
            "used_engine": result.used_engine,
        }
        print(json.dumps(report, indent=2))
    else:
        for (i, j), v in sorted(entries.items()):
            print(f"{i} {j} {semiring.format(v)}")
    return 0


def _gap_histogram(gaps) -> Dict[str, int]:
    """Log-scale histogram of inter-output gaps, bucketed by powers of ten."""
    buckets: Dict[str, int] = {}
    for g in gaps:
        us = g * 1e6
        if us < 1:
            key = "<1us"
        elif us >= 10_000:
            key = ">=10ms"
        else:
            power = 1
            while us >= power * 10:
                power *= 10
            key = f"{power}-{power * 10}us"
        buckets[key] = buckets.get(key, 0) + 1
    return dict(sorted(buckets.items()))


def cmd_bench(args) -> int:
    import random

    from .generators import scaling_db, scaling_dynamic_query, scaling_static_query
    from .static_engine import delay_gaps, timed_preprocess

    semiring = builtin_semiring(args.semiring)
    sizes = [int(float(s)) for s in args.sizes.split(",")]
    rng = random.Random(args.seed)
    report: Dict[str, List] = {"sizes": sizes, "runs": []}
    if args.mode == "static":
        q = scaling_static_query()
        for size in sizes:
            db = scaling_db(rng, semiring, size)
            state, seconds = timed_preprocess(q, db)
            gaps = delay_gaps(state, limit=args.delay_outputs)
            run = {
                "size": db_size(db),
                "timing": {
                    "preprocess_s": seconds,
                    "max_gap_s": max(gaps) if gaps else 0.0,
                    "mean_gap_s": sum(gaps) / len(gaps) if gaps else 0.0,
                },
                "delay_histogram": _gap_histogram(gaps),
                "outputs_measured": len(gaps) + 1 if gaps else 0,
            }
            report["runs"].append(run)
    else:
        from .dynamic_engine import dyn_preprocess, dyn_update
        from .generators import scaling_db
        from .kdata import SingleTupleUpdate

        q = scaling_dynamic_query()
        for size in sizes:
            db = scaling_db(rng, semiring, size, dynamic=True)
            domain = max(4, size // 4)
            state = dyn_preprocess(q, db)
            updates = []
            for _ in range(args.updates):
                t = (rng.randrange(1, domain + 1), rng.randrange(1, domain + 1))
                if rng.random() < 0.5:
                    updates.append(SingleTupleUpdate("insert", "A", t, semiring.one))
                else:
                    updates.append(SingleTupleUpdate("delete", "A", t))
            start = time.perf_counter()
            for u in updates:
                dyn_update(state, u)
            elapsed = time.perf_counter() - start
            report["runs"].append(
                {
                    "size": db_size(state.db),
                    "timing": {"mean_update_s": elapsed / max(1, len(updates))},
                    "updates": len(updates),
                }
            )
    print(json.dumps(report, indent=2))
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deltaenum",
        description="Semiring-generic conjunctive query engine with constant-delay enumeration",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, db=False):
        p.add_argument("--semiring", choices=BUILTIN_SEMIRING_NAMES, default="natural")
        p.add_argument("--json", action="store_true", help="machine-readable output")
        p.add_argument("--verify", action="store_true", help="cross-check against the oracle")
        if db:
            p.add_argument("--db", required=True, help="directory with vocab.json and <R>.csv files")

    p = sub.add_parser("classify", help="structural classification of a query")
    p.add_argument("query")
    add_common(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("plan", help="emit the query plan as JSON or Graphviz")
    p.add_argument("query")
    p.add_argument("--guarded", action="store_true", help="build the guarded (dynamic) plan")
    add_common(p)
    p.set_defaults(func=cmd_plan)

    for name, help_text in (("eval", "evaluate a query"), ("enumerate", "stream answers")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--query", required=True)
        p.add_argument("--limit", type=int, default=None)
        p.add_argument("--out", choices=("csv", "jsonl"), default="csv")
        add_common(p, db=True)
        p.set_defaults(func=cmd_eval)

    p = sub.add_parser("dyn", help="apply single-tuple updates with maintenance")
    p.add_argument("--query", required=True)
    p.add_argument("--updates", required=True, help="update script, one '+ R 1 2 7' or '- R 1 2' per line")
    p.add_argument("--enumerate-after-each", action="store_true")
    add_common(p, db=True)
    p.set_defaults(func=cmd_dyn)

    p = sub.add_parser("matlang", help="matrix expression frontend")
    p.add_argument("action", choices=("eval", "compile", "classify"))
    p.add_argument("--expr", required=True, help=".ml file with 'H := expression'")
    p.add_argument("--schema", required=True, help="schema JSON")
    p.add_argument("--data", help="directory with <A>.coo files (eval only)")
    p.add_argument("--dump-cq", action="store_true")
    add_common(p)
    p.set_defaults(func=cmd_matlang)

    p = sub.add_parser("bench", help="scaling benchmarks; JSON report on stdout")
    p.add_argument("--sizes", default="1e3,1e4,1e5")
    p.add_argument("--mode", choices=("static", "dyn"), default="static")
    p.add_argument("--updates", type=int, default=10000)
    p.add_argument("--delay-outputs", type=int, default=None)
    p.add_argument("--seed", type=int, default=13)
    add_common(p)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
