"""Minimal Markov Logic engine: parsing, grounding, exact inference.

Worlds assign a truth value to every non-evidence ground atom; each
satisfied grounding of a weighted formula multiplies the world weight by
e^w, and hard formulas filter worlds outright (they never down-weight).
Exact queries enumerate worlds in log space and serve as the correctness
oracle for everything built on top.
"""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import CapacityError, InconsistencyError, InputError

__all__ = [
    "Atom", "Not", "And", "Or", "Implies", "Iff", "Formula",
    "Model", "EvidenceSet", "World",
    "parse_model", "parse_evidence", "parse_formula", "parse_literal",
    "format_formula", "format_atom", "format_literal",
    "ground", "Grounding", "Conditioned",
    "exact_query", "exact_marginals", "enumerate_world_distribution",
    "DEFAULT_ATOM_CAP", "DEFAULT_GROUND_CAP",
]

DEFAULT_ATOM_CAP = 24
DEFAULT_GROUND_CAP = 1_000_000

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


# --- formulas ------------------------------------------------------------


@dataclass(frozen=True)
class Atom:
    pred: str
    args: tuple[str, ...]

    def __str__(self):
        return format_atom(self)


@dataclass(frozen=True)
class Not:
    sub: "Formula"


@dataclass(frozen=True)
class And:
    parts: tuple["Formula", ...]


@dataclass(frozen=True)
class Or:
    parts: tuple["Formula", ...]


@dataclass(frozen=True)
class Implies:
    premise: "Formula"
    conclusion: "Formula"


@dataclass(frozen=True)
class Iff:
    left: "Formula"
    right: "Formula"


Formula = Atom | Not | And | Or | Implies | Iff


def is_variable(token: str) -> bool:
    return token[0].isupper()


def atoms_of(f: Formula) -> Iterator[Atom]:
    if isinstance(f, Atom):
        yield f
    elif isinstance(f, Not):
        yield from atoms_of(f.sub)
    elif isinstance(f, (And, Or)):
        for part in f.parts:
            yield from atoms_of(part)
    elif isinstance(f, Implies):
        yield from atoms_of(f.premise)
        yield from atoms_of(f.conclusion)
    elif isinstance(f, Iff):
        yield from atoms_of(f.left)
        yield from atoms_of(f.right)
    else:
        raise TypeError(f"not a formula: {f!r}")


def free_variables(f: Formula) -> tuple[str, ...]:
    """Variables in order of first occurrence."""
    seen: list[str] = []
    for atom in atoms_of(f):
        for arg in atom.args:
            if is_variable(arg) and arg not in seen:
                seen.append(arg)
    return tuple(seen)


def substitute(f: Formula, env: Mapping[str, str]) -> Formula:
    if isinstance(f, Atom):
        return Atom(f.pred, tuple(env.get(a, a) for a in f.args))
    if isinstance(f, Not):
        return Not(substitute(f.sub, env))
    if isinstance(f, And):
        return And(tuple(substitute(p, env) for p in f.parts))
    if isinstance(f, Or):
        return Or(tuple(substitute(p, env) for p in f.parts))
    if isinstance(f, Implies):
        return Implies(substitute(f.premise, env), substitute(f.conclusion, env))
    return Iff(substitute(f.left, env), substitute(f.right, env))


def evaluate(f: Formula, lookup: Mapping[Atom, bool]) -> bool:
    if isinstance(f, Atom):
        return lookup[f]
    if isinstance(f, Not):
        return not evaluate(f.sub, lookup)
    if isinstance(f, And):
        return all(evaluate(p, lookup) for p in f.parts)
    if isinstance(f, Or):
        return any(evaluate(p, lookup) for p in f.parts)
    if isinstance(f, Implies):
        return (not evaluate(f.premise, lookup)) or evaluate(f.conclusion, lookup)
    return evaluate(f.left, lookup) == evaluate(f.right, lookup)


def partial_evaluate(f: Formula, known: Mapping[Atom, bool]) -> Formula | bool:
    """Fold in known atom values; returns a bool when fully determined."""
    if isinstance(f, Atom):
        return known.get(f, f)
    if isinstance(f, Not):
        sub = partial_evaluate(f.sub, known)
        return (not sub) if isinstance(sub, bool) else Not(sub)
    if isinstance(f, (And, Or)):
        short = isinstance(f, Or)
        parts = []
        for p in f.parts:
            v = partial_evaluate(p, known)
            if isinstance(v, bool):
                if v == short:
                    return short
                continue
            parts.append(v)
        if not parts:
            return not short
        if len(parts) == 1:
            return parts[0]
        return Or(tuple(parts)) if short else And(tuple(parts))
    if isinstance(f, Implies):
        prem = partial_evaluate(f.premise, known)
        conc = partial_evaluate(f.conclusion, known)
        if prem is False or conc is True:
            return True
        if prem is True:
            return conc
        if conc is False:
            return Not(prem) if not isinstance(prem, bool) else not prem
        return Implies(prem, conc)
    left = partial_evaluate(f.left, known)
    right = partial_evaluate(f.right, known)
    if isinstance(left, bool) and isinstance(right, bool):
        return left == right
    if left is True:
        return right
    if right is True:
        return left
    if left is False:
        return Not(right)
    if right is False:
        return Not(left)
    return Iff(left, right)


_PREC = {"iff": 1, "implies": 2, "or": 3, "and": 4, "not": 5}


def format_atom(atom: Atom) -> str:
    return f"{atom.pred}({', '.join(atom.args)})" if atom.args else f"{atom.pred}()"


def format_literal(atom: Atom, value: bool) -> str:
    return format_atom(atom) if value else "!" + format_atom(atom)


def format_formula(f: Formula) -> str:
    def wrap(sub: Formula, parent_prec: int) -> str:
        text, prec = emit(sub)
        return f"({text})" if prec < parent_prec else text

    def emit(g: Formula) -> tuple[str, int]:
        if isinstance(g, Atom):
            return format_atom(g), 6
        if isinstance(g, Not):
            return "!" + wrap(g.sub, _PREC["not"]), _PREC["not"]
        if isinstance(g, And):
            return " ^ ".join(wrap(p, _PREC["and"]) for p in g.parts), _PREC["and"]
        if isinstance(g, Or):
            return " v ".join(wrap(p, _PREC["or"]) for p in g.parts), _PREC["or"]
        if isinstance(g, Implies):
            left = wrap(g.premise, _PREC["implies"] + 1)
            right = wrap(g.conclusion, _PREC["implies"])  # right-associative
            return f"{left} => {right}", _PREC["implies"]
        left = wrap(g.left, _PREC["iff"] + 1)
        right = wrap(g.right, _PREC["iff"] + 1)
        return f"{left} <=> {right}", _PREC["iff"]

    return emit(f)[0]


# --- parsing -------------------------------------------------------------

_TOKEN_RE = re.compile(r"=>|<=>|[()!,^]|[A-Za-z_][A-Za-z0-9_]*")


class _Parser:
    def __init__(self, text: str, where: str):
        self.where = where
        self.tokens: list[str] = []
        pos = 0
        while pos < len(text):
            if text[pos].isspace():
                pos += 1
                continue
            m = _TOKEN_RE.match(text, pos)
            if not m:
                raise InputError(f"{where}: unexpected character {text[pos]!r}")
            self.tokens.append(m.group())
            pos = m.end()
        self.pos = 0

    def peek(self) -> str | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self) -> str:
        tok = self.peek()
        if tok is None:
            raise InputError(f"{self.where}: unexpected end of formula")
        self.pos += 1
        return tok

    def expect(self, tok: str) -> None:
        got = self.take()
        if got != tok:
            raise InputError(f"{self.where}: expected {tok!r}, got {got!r}")

    def formula(self) -> Formula:
        f = self.iff()
        if self.peek() is not None:
            raise InputError(f"{self.where}: unexpected trailing {self.peek()!r}")
        return f

    def iff(self) -> Formula:
        f = self.implies()
        while self.peek() == "<=>":
            self.take()
            f = Iff(f, self.implies())
        return f

    def implies(self) -> Formula:
        f = self.disjunction()
        if self.peek() == "=>":
            self.take()
            return Implies(f, self.implies())
        return f

    def disjunction(self) -> Formula:
        parts = [self.conjunction()]
        while self.peek() == "v":
            self.take()
            parts.append(self.conjunction())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def conjunction(self) -> Formula:
        parts = [self.unary()]
        while self.peek() == "^":
            self.take()
            parts.append(self.unary())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def unary(self) -> Formula:
        tok = self.peek()
        if tok == "!":
            self.take()
            return Not(self.unary())
        if tok == "(":
            self.take()
            f = self.iff()
            self.expect(")")
            return f
        return self.atom()

    def atom(self) -> Atom:
        name = self.take()
        if not _NAME_RE.fullmatch(name):
            raise InputError(f"{self.where}: expected an atom, got {name!r}")
        args: list[str] = []
        if self.peek() == "(":
            self.take()
            if self.peek() != ")":
                while True:
                    arg = self.take()
                    if not _NAME_RE.fullmatch(arg):
                        raise InputError(f"{self.where}: bad argument {arg!r}")
                    args.append(arg)
                    if self.peek() == ",":
                        self.take()
                        continue
                    break
            self.expect(")")
        return Atom(name, tuple(args))


def parse_formula(text: str, model: "Model | None" = None, where: str = "formula") -> Formula:
    f = _Parser(text, where).formula()
    if model is not None:
        model.check_formula(f, where)
    return f


def parse_literal(text: str, model: "Model | None" = None, where: str = "literal") -> tuple[Atom, bool]:
    stripped = text.strip()
    value = True
    if stripped.startswith("!"):
        value = False
        stripped = stripped[1:]
    parser = _Parser(stripped, where)
    atom = parser.atom()
    if parser.peek() is not None:
        raise InputError(f"{where}: unexpected trailing {parser.peek()!r}")
    for arg in atom.args:
        if is_variable(arg):
            raise InputError(f"{where}: literal must be ground, found variable {arg}")
    if model is not None:
        model.check_formula(atom, where)
    return atom, value


# --- model and evidence --------------------------------------------------


@dataclass(frozen=True)
class Model:
    """Weighted first-order formulas plus hard formulas over a finite domain.

    Free variables are implicitly universally quantified over the domain.
    """

    domain: tuple[str, ...]
    predicates: Mapping[str, int]
    weighted_formulas: tuple[tuple[float, Formula], ...] = ()
    hard_formulas: tuple[Formula, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "domain", tuple(self.domain))
        object.__setattr__(self, "predicates", dict(self.predicates))
        object.__setattr__(
            self,
            "weighted_formulas",
            tuple((float(w), f) for w, f in self.weighted_formulas),
        )
        object.__setattr__(self, "hard_formulas", tuple(self.hard_formulas))
        if len(set(self.domain)) != len(self.domain):
            raise InputError("domain constants are not unique")
        for c in self.domain:
            if not _NAME_RE.fullmatch(c) or is_variable(c):
                raise InputError(f"invalid constant name {c!r}")
        for name, arity in self.predicates.items():
            if not _NAME_RE.fullmatch(name) or is_variable(name):
                raise InputError(f"invalid predicate name {name!r}")
            if name == "v":
                raise InputError("'v' is reserved for disjunction")
            if arity < 0:
                raise InputError(f"negative arity for {name}")
        for _, f in self.weighted_formulas:
            self.check_formula(f, "weighted formula")
        for f in self.hard_formulas:
            self.check_formula(f, "hard formula")

    def check_formula(self, f: Formula, where: str) -> None:
        for atom in atoms_of(f):
            arity = self.predicates.get(atom.pred)
            if arity is None:
                raise InputError(f"{where}: unknown predicate {atom.pred!r}")
            if arity != len(atom.args):
                raise InputError(
                    f"{where}: {atom.pred} expects {arity} arguments, got {len(atom.args)}"
                )
            for arg in atom.args:
                if not is_variable(arg) and arg not in self.domain:
                    raise InputError(f"{where}: unknown constant {arg!r}")

    def all_atoms(self) -> tuple[Atom, ...]:
        """Every ground atom of the signature, in deterministic order."""
        out = []
        for name in sorted(self.predicates):
            for args in itertools.product(self.domain, repeat=self.predicates[name]):
                out.append(Atom(name, args))
        return tuple(out)

    def extended(
        self,
        predicates: Mapping[str, int] = (),
        weighted: Iterable[tuple[float, Formula]] = (),
        hard: Iterable[Formula] = (),
    ) -> "Model":
        """A new model with extra predicates and formulas appended."""
        preds = dict(self.predicates)
        for name, arity in dict(predicates).items():
            if name in preds:
                raise InputError(f"predicate {name!r} already declared")
            preds[name] = arity
        return Model(
            self.domain,
            preds,
            self.weighted_formulas + tuple(weighted),
            self.hard_formulas + tuple(hard),
        )

    def to_text(self) -> str:
        out = ["domain = " + ", ".join(self.domain)]
        for name in sorted(self.predicates):
            out.append(f"pred {name}/{self.predicates[name]}")
        for w, f in self.weighted_formulas:
            out.append(f"{w:g} {format_formula(f)}")
        for f in self.hard_formulas:
            out.append(f"hard {format_formula(f)}")
        return "\n".join(out) + "\n"


class EvidenceSet:
    """Truth assignments to ground atoms; at most one per atom."""

    def __init__(self, assignments: Mapping[Atom, bool] | Iterable[tuple[Atom, bool]] = ()):
        self._assignments: dict[Atom, bool] = {}
        items = assignments.items() if isinstance(assignments, Mapping) else assignments
        for atom, value in items:
            self.assign(atom, value)

    def assign(self, atom: Atom, value: bool) -> None:
        if atom in self._assignments:
            raise InputError(f"atom {format_atom(atom)} assigned twice")
        for arg in atom.args:
            if is_variable(arg):
                raise InputError(f"evidence atom {format_atom(atom)} is not ground")
        self._assignments[atom] = bool(value)

    def get(self, atom: Atom, default=None):
        return self._assignments.get(atom, default)

    def items(self):
        return self._assignments.items()

    def atoms(self):
        return self._assignments.keys()

    def __contains__(self, atom: Atom) -> bool:
        return atom in self._assignments

    def __getitem__(self, atom: Atom) -> bool:
        return self._assignments[atom]

    def __len__(self) -> int:
        return len(self._assignments)

    def __iter__(self):
        return iter(self._assignments)

    def __eq__(self, other):
        if not isinstance(other, EvidenceSet):
            return NotImplemented
        return self._assignments == other._assignments

    def merged(self, other: "EvidenceSet") -> "EvidenceSet":
        out = EvidenceSet(self._assignments)
        for atom, value in other.items():
            out.assign(atom, value)
        return out

    def to_text(self) -> str:
        lines = [format_literal(a, v) for a, v in self._assignments.items()]
        return "\n".join(lines) + ("\n" if lines else "")


@dataclass(frozen=True)
class World:
    """One truth assignment to the non-evidence ground atoms."""

    atoms: tuple[Atom, ...]
    values: np.ndarray
    log_weight: float

    @property
    def assignment(self) -> dict[Atom, bool]:
        return {a: bool(v) for a, v in zip(self.atoms, self.values)}


# --- model/evidence text formats ------------------------------------------


def _split_sections(text: str):
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield lineno, line


def parse_model(text: str) -> Model:
    domain: tuple[str, ...] | None = None
    predicates: dict[str, int] = {}
    pending: list[tuple[int, str, float | None]] = []  # lineno, formula text, weight
    for lineno, line in _split_sections(text):
        if line.startswith("domain"):
            rest = line[len("domain"):].strip()
            if not rest.startswith("="):
                raise InputError(f"line {lineno}: expected 'domain = a, b, ...'")
            if domain is not None:
                raise InputError(f"line {lineno}: duplicate domain declaration")
            domain = tuple(p.strip() for p in rest[1:].split(",") if p.strip())
            continue
        if line.startswith("pred "):
            rest = line[len("pred "):].strip()
            if "/" not in rest:
                raise InputError(f"line {lineno}: expected 'pred name/arity'")
            name, _, arity_text = rest.partition("/")
            name = name.strip()
            try:
                arity = int(arity_text.strip())
            except ValueError:
                raise InputError(f"line {lineno}: bad arity {arity_text!r}") from None
            if name in predicates:
                raise InputError(f"line {lineno}: predicate {name!r} already declared")
            predicates[name] = arity
            continue
        if line.startswith("hard ") or line == "hard":
            pending.append((lineno, line[len("hard"):].strip(), None))
            continue
        head, _, rest = line.partition(" ")
        try:
            weight = float(head)
        except ValueError:
            raise InputError(
                f"line {lineno}: expected 'domain', 'pred', 'hard' or a weight, got {head!r}"
            ) from None
        if not rest.strip():
            raise InputError(f"line {lineno}: weight {head} without a formula")
        pending.append((lineno, rest.strip(), weight))

    if domain is None:
        raise InputError("model has no domain declaration")
    weighted = []
    hard = []
    # validation happens in the Model constructor; parse against a bare model
    shell = Model(domain, predicates)
    for lineno, ftext, weight in pending:
        f = parse_formula(ftext, shell, where=f"line {lineno}")
        if weight is None:
            hard.append(f)
        else:
            weighted.append((weight, f))
    return Model(domain, predicates, tuple(weighted), tuple(hard))


def parse_evidence(text: str, model: Model) -> EvidenceSet:
    evidence = EvidenceSet()
    for lineno, line in _split_sections(text):
        atom, value = parse_literal(line, model, where=f"line {lineno}")
        try:
            evidence.assign(atom, value)
        except InputError as exc:
            raise InputError(f"line {lineno}: {exc}") from None
    return evidence


# --- grounding and conditioning -------------------------------------------


@dataclass(frozen=True)
class Grounding:
    """All groundings of the model's formulas, before evidence."""

    model: Model
    weighted: tuple[tuple[float, Formula], ...]
    hard: tuple[Formula, ...]

    def condition(self, evidence: EvidenceSet) -> "Conditioned":
        return _condition(self, evidence)


def _ground_formula(f: Formula, domain: Sequence[str]) -> Iterator[Formula]:
    variables = free_variables(f)
    if not variables:
        yield f
        return
    for combo in itertools.product(domain, repeat=len(variables)):
        yield substitute(f, dict(zip(variables, combo)))


def ground(model: Model, ground_cap: int = DEFAULT_GROUND_CAP) -> Grounding:
    """Expand every formula over the domain; one grounding per variable binding."""
    m = len(model.domain)
    if m == 0:
        raise InputError("cannot ground a model with an empty domain")
    total = 0
    for _, f in model.weighted_formulas:
        total += m ** len(free_variables(f))
    for f in model.hard_formulas:
        total += m ** len(free_variables(f))
    if total > ground_cap:
        raise CapacityError(f"{total} groundings exceed the cap of {ground_cap}")
    weighted = tuple(
        (w, g) for w, f in model.weighted_formulas for g in _ground_formula(f, model.domain)
    )
    hard = tuple(g for f in model.hard_formulas for g in _ground_formula(f, model.domain))
    return Grounding(model, weighted, hard)


@dataclass(frozen=True)
class _CompiledFormula:
    weight: float | None  # None marks a hard formula
    formula: Formula
    atom_ids: tuple[int, ...]
    table: np.ndarray  # satisfaction over 2^len(atom_ids) assignments

    def packed_index(self, values: np.ndarray) -> int:
        idx = 0
        for pos, atom_id in enumerate(self.atom_ids):
            idx |= int(values[atom_id]) << pos
        return idx


def _compile_formula(f: Formula, weight, index: Mapping[Atom, int]) -> _CompiledFormula:
    atoms = sorted(set(atoms_of(f)), key=lambda a: index[a])
    ids = tuple(index[a] for a in atoms)
    if len(ids) > 20:
        raise CapacityError(f"ground formula touches {len(ids)} atoms; table too large")
    table = np.zeros(1 << len(ids), dtype=bool)
    for packed in range(1 << len(ids)):
        lookup = {a: bool(packed >> pos & 1) for pos, a in enumerate(atoms)}
        table[packed] = evaluate(f, lookup)
    table.setflags(write=False)
    return _CompiledFormula(weight, f, ids, table)


@dataclass(frozen=True)
class Conditioned:
    """A grounding with evidence substituted out.

    `atoms` is every non-evidence ground atom of the signature, in a fixed
    order; compiled formulas index into it.
    """

    model: Model
    evidence: EvidenceSet
    atoms: tuple[Atom, ...]
    index: Mapping[Atom, int]
    weighted: tuple[_CompiledFormula, ...]
    hard: tuple[_CompiledFormula, ...]
    const_log_weight: float

    def log_weight(self, values: np.ndarray) -> float:
        """Log weight of a world; -inf when a hard grounding is violated."""
        for comp in self.hard:
            if not comp.table[comp.packed_index(values)]:
                return float("-inf")
        total = self.const_log_weight
        for comp in self.weighted:
            if comp.table[comp.packed_index(values)]:
                total += comp.weight
        return total

    def world(self, values) -> World:
        values = np.asarray(values, dtype=np.uint8)
        if values.shape != (len(self.atoms),):
            raise InputError(
                f"world must assign {len(self.atoms)} atoms, got shape {values.shape}"
            )
        snapshot = values.copy()
        snapshot.setflags(write=False)
        return World(self.atoms, snapshot, self.log_weight(values))


def _condition(grounding: Grounding, evidence: EvidenceSet) -> Conditioned:
    model = grounding.model
    known: dict[Atom, bool] = {}
    for atom, value in evidence.items():
        model.check_formula(atom, "evidence")
        known[atom] = value
    atoms = tuple(a for a in model.all_atoms() if a not in known)
    index = {a: i for i, a in enumerate(atoms)}
    const_log_weight = 0.0
    weighted = []
    hard = []
    for w, g in grounding.weighted:
        simp = partial_evaluate(g, known)
        if simp is True:
            const_log_weight += w
        elif simp is not False:
            weighted.append(_compile_formula(simp, w, index))
    for g in grounding.hard:
        simp = partial_evaluate(g, known)
        if simp is False:
            raise InconsistencyError(
                f"evidence violates hard formula {format_formula(g)}"
            )
        if simp is not True:
            hard.append(_compile_formula(simp, None, index))
    return Conditioned(
        model, evidence, atoms, index, tuple(weighted), tuple(hard), const_log_weight
    )


# --- exact inference by enumeration ---------------------------------------

_CHUNK_BITS = 18


def _vector_packed(comp: _CompiledFormula, columns: dict[int, np.ndarray]) -> np.ndarray:
    packed = np.zeros_like(columns[comp.atom_ids[0]], dtype=np.int64)
    for pos, atom_id in enumerate(comp.atom_ids):
        packed |= columns[atom_id].astype(np.int64) << pos
    return packed


def _enumerate(cond: Conditioned, query_ids: Sequence[int], atom_cap: int):
    """Streaming world sum; returns (logZ, per-query log numerators)."""
    active = sorted(
        {i for comp in cond.weighted for i in comp.atom_ids}
        | {i for comp in cond.hard for i in comp.atom_ids}
        | set(query_ids)
    )
    if len(active) > atom_cap:
        raise CapacityError(
            f"{len(active)} enumerated atoms exceed the cap of {atom_cap}"
        )
    pos_of = {atom_id: pos for pos, atom_id in enumerate(active)}
    n = len(active)
    total = 1 << n
    pieces: list[tuple[float, float, np.ndarray]] = []  # (shift, sum, query sums)
    for start in range(0, total, 1 << _CHUNK_BITS):
        stop = min(start + (1 << _CHUNK_BITS), total)
        idx = np.arange(start, stop, dtype=np.int64)
        columns = {atom_id: (idx >> pos) & 1 for atom_id, pos in pos_of.items()}
        mask = np.ones(idx.shape, dtype=bool)
        for comp in cond.hard:
            mask &= comp.table[_vector_packed(comp, columns)]
        logw = np.full(idx.shape, cond.const_log_weight)
        for comp in cond.weighted:
            logw += np.where(comp.table[_vector_packed(comp, columns)], comp.weight, 0.0)
        if not mask.any():
            continue
        logw = logw[mask]
        shift = float(logw.max())
        weights = np.exp(logw - shift)
        qsums = np.array(
            [weights[(columns[q][mask]).astype(bool)].sum() for q in query_ids]
        )
        pieces.append((shift, float(weights.sum()), qsums))
    if not pieces:
        raise InconsistencyError("evidence and hard formulas admit no world")
    top = max(shift for shift, _, _ in pieces)
    z = sum(s * np.exp(shift - top) for shift, s, _ in pieces)
    qtotals = sum(
        (qs * np.exp(shift - top) for shift, _, qs in pieces),
        np.zeros(len(query_ids)),
    )
    if z <= 0.0:
        raise InconsistencyError("zero partition mass")
    return float(np.log(z) + top), qtotals / z


def exact_marginals(
    model: Model,
    evidence: EvidenceSet,
    queries: Sequence[Atom],
    atom_cap: int = DEFAULT_ATOM_CAP,
    ground_cap: int = DEFAULT_GROUND_CAP,
) -> dict[Atom, float]:
    """P(atom = true | evidence) for each query atom, by enumeration."""
    cond = ground(model, ground_cap).condition(evidence)
    fixed: dict[Atom, float] = {}
    open_queries: list[Atom] = []
    for atom in queries:
        model.check_formula(atom, "query")
        if atom in evidence:
            fixed[atom] = 1.0 if evidence[atom] else 0.0
        else:
            open_queries.append(atom)
    result = dict(fixed)
    if open_queries or cond.hard:
        ids = [cond.index[a] for a in open_queries]
        _, probs = _enumerate(cond, ids, atom_cap)
        result.update({a: float(p) for a, p in zip(open_queries, probs)})
    return result


def exact_query(
    model: Model,
    evidence: EvidenceSet,
    query: tuple[Atom, bool] | Atom,
    atom_cap: int = DEFAULT_ATOM_CAP,
    ground_cap: int = DEFAULT_GROUND_CAP,
) -> float:
    """Probability that the query literal holds given the evidence."""
    atom, value = query if isinstance(query, tuple) else (query, True)
    p = exact_marginals(model, evidence, [atom], atom_cap, ground_cap)[atom]
    return p if value else 1.0 - p


def enumerate_world_distribution(
    model: Model,
    evidence: EvidenceSet,
    atom_cap: int = 16,
    ground_cap: int = DEFAULT_GROUND_CAP,
) -> tuple[tuple[Atom, ...], np.ndarray]:
    """Exact distribution over full worlds, indexed by packed atom bits.

    World w has bit i equal to the value of atoms[i].  Only sensible for
    small models; guarded by `atom_cap`.
    """
    cond = ground(model, ground_cap).condition(evidence)
    n = len(cond.atoms)
    if n > atom_cap:
        raise CapacityError(f"{n} atoms exceed the world-distribution cap of {atom_cap}")
    idx = np.arange(1 << n, dtype=np.int64)
    columns = {i: (idx >> i) & 1 for i in range(n)}
    mask = np.ones(idx.shape, dtype=bool)
    for comp in cond.hard:
        mask &= comp.table[_vector_packed(comp, columns)]
    logw = np.full(idx.shape, cond.const_log_weight)
    for comp in cond.weighted:
        logw += np.where(comp.table[_vector_packed(comp, columns)], comp.weight, 0.0)
    if not mask.any():
        raise InconsistencyError("evidence and hard formulas admit no world")
    logw[~mask] = -np.inf
    shift = logw[mask].max()
    probs = np.exp(logw - shift)
    probs /= probs.sum()
    return cond.atoms, probs
