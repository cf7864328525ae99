"""Semiring-generic conjunctive-query engine with constant-delay enumeration,
constant-time maintenance for q-hierarchical queries, and a sparse matrix
expression frontend compiled onto the relational core."""

__version__ = "0.1.0"
