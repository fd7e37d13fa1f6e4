"""Turn binary evidence into an extended model plus unary evidence.

A factorized relation p = Q R^T becomes the hard equivalence

    p(X, Y) <=> (q1(X) ^ r1(Y)) v ... v (qn(X) ^ rn(Y))

plus full evidence on the fresh unary predicates q_i, r_i.  Conditioning
on that unary evidence reproduces conditioning on the binary relation, so
the original distribution is preserved whenever the factorization is
exact.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Collection, Iterable, Sequence

import numpy as np

from .boolmat import BoolMatrix
from .errors import InputError
from .factorize import Factorization
from .mln import (
    And,
    Atom,
    EvidenceSet,
    Formula,
    Iff,
    Implies,
    Model,
    Not,
    Or,
    format_atom,
)

__all__ = [
    "ReductionResult",
    "PartialEvidenceEncoding",
    "encode_evidence",
    "encode_partial_evidence",
    "symmetry_signature_classes",
    "implied_relation",
    "extend_model",
    "matrix_to_evidence",
    "evidence_to_matrix",
    "constant_symmetry_classes",
]

_VAR_X = "X"
_VAR_Y = "Y"


def fresh_predicate_names(pred: str, rank: int) -> tuple[tuple[str, ...], tuple[str, ...]]:
    q_names = tuple(f"{pred}__q{i}" for i in range(1, rank + 1))
    r_names = tuple(f"{pred}__r{i}" for i in range(1, rank + 1))
    return q_names, r_names


@dataclass(frozen=True)
class ReductionResult:
    """Extension fragment produced from one factorized binary relation."""

    predicate: str
    added_formulas: tuple[Formula, ...]
    unary_evidence: EvidenceSet
    fresh_predicates: tuple[tuple[str, int], ...]
    rank_used: int
    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]


def encode_evidence(
    pred: str,
    f: Factorization,
    existing_predicates: Collection[str] = (),
) -> ReductionResult:
    """Encode a labeled factorization of relation `pred` as unary evidence.

    Emits the hard equivalence tying p(X, Y) to the fresh q_i/r_i
    predicates and assigns every grounding of those predicates.  Rank 0
    degenerates to the hard formula !p(X, Y).
    """
    if f.row_labels is None or f.col_labels is None:
        raise InputError("factorization must carry row and column labels")
    n = f.rank()
    q_names, r_names = fresh_predicate_names(pred, n)
    for name in q_names + r_names:
        if name == pred or name in existing_predicates:
            raise InputError(f"fresh predicate {name!r} collides with an existing one")

    p_atom = Atom(pred, (_VAR_X, _VAR_Y))
    if n == 0:
        formula: Formula = Not(p_atom)
    else:
        disjuncts = tuple(
            And((Atom(q_names[i], (_VAR_X,)), Atom(r_names[i], (_VAR_Y,))))
            for i in range(n)
        )
        formula = Iff(p_atom, disjuncts[0] if n == 1 else Or(disjuncts))

    evidence = EvidenceSet()
    for i, (q, r) in enumerate(f.pairs):
        for c, label in enumerate(f.row_labels):
            evidence.assign(Atom(q_names[i], (label,)), bool(q[c]))
        for c, label in enumerate(f.col_labels):
            evidence.assign(Atom(r_names[i], (label,)), bool(r[c]))

    fresh = tuple((name, 1) for name in q_names + r_names)
    return ReductionResult(
        pred, (formula,), evidence, fresh, n, f.row_labels, f.col_labels
    )


@dataclass(frozen=True)
class PartialEvidenceEncoding:
    """Partial binary evidence rewritten as two full-evidence relations."""

    formulas: tuple[Formula, ...]
    true_predicate: str
    false_predicate: str
    true_matrix: BoolMatrix
    false_matrix: BoolMatrix


def encode_partial_evidence(
    pred: str,
    known_true: Iterable[Atom],
    known_false: Iterable[Atom],
    domain: Sequence[str],
) -> PartialEvidenceEncoding:
    """Encode partial evidence on `pred` via indicator relations p1 and p0.

    Adds p(X,Y) <= p1(X,Y) and !p(X,Y) <= p0(X,Y); the returned matrices
    have a 1 exactly at the known-true / known-false entries and are ready
    for independent factorization.
    """
    domain = tuple(domain)
    pos = {c: i for i, c in enumerate(domain)}
    true_set = set(known_true)
    false_set = set(known_false)
    overlap = true_set & false_set
    if overlap:
        names = ", ".join(sorted(format_atom(a) for a in overlap))
        raise InputError(f"atoms assigned both true and false: {names}")

    def fill(atoms: set[Atom]) -> np.ndarray:
        bits = np.zeros((len(domain), len(domain)), dtype=np.uint8)
        for atom in atoms:
            if atom.pred != pred or len(atom.args) != 2:
                raise InputError(f"expected a ground {pred}/2 atom, got {format_atom(atom)}")
            x, y = atom.args
            if x not in pos or y not in pos:
                raise InputError(f"atom {format_atom(atom)} uses constants outside the domain")
            bits[pos[x], pos[y]] = 1
        return bits

    true_name, false_name = f"{pred}__p1", f"{pred}__p0"
    p = Atom(pred, (_VAR_X, _VAR_Y))
    formulas = (
        Implies(Atom(true_name, (_VAR_X, _VAR_Y)), p),
        Implies(Atom(false_name, (_VAR_X, _VAR_Y)), Not(p)),
    )
    return PartialEvidenceEncoding(
        formulas,
        true_name,
        false_name,
        BoolMatrix(fill(true_set), domain, domain),
        BoolMatrix(fill(false_set), domain, domain),
    )


def symmetry_signature_classes(result: ReductionResult) -> tuple[int, int]:
    """Distinct q-signatures over rows and r-signatures over columns.

    Constants sharing a signature are exchangeable given the unary
    evidence, which is why bounded rank preserves symmetry: there are at
    most 2^rank signatures per axis.
    """
    q_names, r_names = fresh_predicate_names(result.predicate, result.rank_used)
    ev = result.unary_evidence

    def count(labels: tuple[str, ...], names: tuple[str, ...]) -> int:
        return len({tuple(ev[Atom(p, (c,))] for p in names) for c in labels})

    return count(result.row_labels, q_names), count(result.col_labels, r_names)


def implied_relation(result: ReductionResult) -> BoolMatrix:
    """Decode the unary evidence back into the binary relation it encodes."""
    q_names, r_names = fresh_predicate_names(result.predicate, result.rank_used)
    ev = result.unary_evidence
    k, l = len(result.row_labels), len(result.col_labels)
    bits = np.zeros((k, l), dtype=np.uint8)
    for i in range(result.rank_used):
        q = np.array([ev[Atom(q_names[i], (c,))] for c in result.row_labels], dtype=np.uint8)
        r = np.array([ev[Atom(r_names[i], (c,))] for c in result.col_labels], dtype=np.uint8)
        bits |= np.outer(q, r)
    return BoolMatrix(bits, result.row_labels, result.col_labels)


def extend_model(model: Model, result: ReductionResult) -> Model:
    """Append the reduction fragment to a model, checking the signature."""
    arity = model.predicates.get(result.predicate)
    if arity != 2:
        raise InputError(
            f"model must declare {result.predicate}/2, found arity {arity}"
        )
    for label in set(result.row_labels) | set(result.col_labels):
        if label not in model.domain:
            raise InputError(f"label {label!r} is not a domain constant")
    return model.extended(
        predicates=dict(result.fresh_predicates), hard=result.added_formulas
    )


def matrix_to_evidence(pred: str, matrix: BoolMatrix) -> EvidenceSet:
    """Full binary evidence on `pred` read off a labeled matrix."""
    if matrix.row_labels is None or matrix.col_labels is None:
        raise InputError("matrix must carry row and column labels")
    evidence = EvidenceSet()
    for i, x in enumerate(matrix.row_labels):
        for j, y in enumerate(matrix.col_labels):
            evidence.assign(Atom(pred, (x, y)), bool(matrix.bits[i, j]))
    return evidence


def evidence_to_matrix(
    pred: str,
    evidence: EvidenceSet,
    row_labels: Sequence[str],
    col_labels: Sequence[str],
) -> BoolMatrix:
    """Inverse of matrix_to_evidence; every entry must be assigned."""
    row_labels, col_labels = tuple(row_labels), tuple(col_labels)
    bits = np.zeros((len(row_labels), len(col_labels)), dtype=np.uint8)
    for i, x in enumerate(row_labels):
        for j, y in enumerate(col_labels):
            value = evidence.get(Atom(pred, (x, y)))
            if value is None:
                raise InputError(f"evidence does not assign {pred}({x}, {y})")
            bits[i, j] = value
    return BoolMatrix(bits, row_labels, col_labels)


def _swap_constants(atom: Atom, a: str, b: str) -> Atom:
    return Atom(atom.pred, tuple(b if c == a else a if c == b else c for c in atom.args))


def _swap_preserves_evidence(evidence: EvidenceSet, a: str, b: str) -> bool:
    for atom, value in evidence.items():
        if a in atom.args or b in atom.args:
            if evidence.get(_swap_constants(atom, a, b)) != value:
                return False
    return True


def constant_symmetry_classes(model: Model, evidence: EvidenceSet) -> tuple[tuple[str, ...], ...]:
    """Constants exchangeable under the evidence and the model's formulas.

    Two constants share a class when swapping them maps the evidence onto
    itself; constants mentioned explicitly in any formula stay in singleton
    classes so class permutations never change world weights.
    """
    from .mln import atoms_of

    mentioned: set[str] = set()
    for _, f in model.weighted_formulas:
        for atom in atoms_of(f):
            mentioned.update(arg for arg in atom.args if arg in model.domain)
    for f in model.hard_formulas:
        for atom in atoms_of(f):
            mentioned.update(arg for arg in atom.args if arg in model.domain)

    classes: list[list[str]] = []
    for c in model.domain:
        if c in mentioned:
            classes.append([c])
            continue
        placed = False
        for cls in classes:
            if cls[0] in mentioned:
                continue
            if all(_swap_preserves_evidence(evidence, c, d) for d in cls):
                cls.append(c)
                placed = True
                break
        if not placed:
            classes.append([c])
    return tuple(tuple(cls) for cls in classes)
