import numpy as np
import pytest

from liftbmf.boolmat import BoolMatrix, boolean_product
from liftbmf.errors import InputError
from liftbmf.factorize import Factorization, exact_boolean_rank, truncate
from liftbmf.mln import (
    Atom,
    EvidenceSet,
    Not,
    format_formula,
    exact_query,
    parse_evidence,
    parse_model,
)
from liftbmf.reduction import (
    constant_symmetry_classes,
    encode_evidence,
    encode_partial_evidence,
    evidence_to_matrix,
    extend_model,
    implied_relation,
    matrix_to_evidence,
    symmetry_signature_classes,
)

from conftest import LABELS


def make_factorization(q_cols, r_cols, labels=LABELS):
    if not q_cols:
        return Factorization((), (len(labels), len(labels)), labels, labels)
    pairs = tuple(
        (np.array(q, dtype=np.uint8), np.array(r, dtype=np.uint8))
        for q, r in zip(q_cols, r_cols)
    )
    return Factorization(pairs, (len(q_cols[0]), len(r_cols[0])), labels, labels)


class TestEncodeEvidence:
    def test_rank_one_gives_eight_unary_literals(self):
        f = make_factorization([[0, 1, 0, 1]], [[1, 0, 0, 1]])
        result = encode_evidence("p", f)
        ev = result.unary_evidence
        assert len(ev) == 8
        expected = {
            ("p__q1", "a"): False,
            ("p__q1", "b"): True,
            ("p__q1", "c"): False,
            ("p__q1", "d"): True,
            ("p__r1", "a"): True,
            ("p__r1", "b"): False,
            ("p__r1", "c"): False,
            ("p__r1", "d"): True,
        }
        assert {(a.pred, a.args[0]): v for a, v in ev.items()} == expected
        # with one pair the hard formula is the plain conjunction form
        assert format_formula(result.added_formulas[0]) == (
            "p(X, Y) <=> p__q1(X) ^ p__r1(Y)"
        )

    def test_rank_three_gives_twenty_four_literals(self, example_factorization):
        result = encode_evidence("p", example_factorization)
        ev = result.unary_evidence
        assert len(ev) == 24
        # the display block of the worked example, transcribed
        q_signs = {
            "p__q1": {"a": False, "b": True, "c": False, "d": True},
            "p__q2": {"a": True, "b": True, "c": False, "d": False},
            "p__q3": {"a": False, "b": False, "c": True, "d": False},
            "p__r1": {"a": True, "b": False, "c": False, "d": True},
            "p__r2": {"a": True, "b": True, "c": False, "d": False},
            "p__r3": {"a": False, "b": False, "c": True, "d": False},
        }
        for pred, per_constant in q_signs.items():
            for constant, value in per_constant.items():
                assert ev[Atom(pred, (constant,))] is value
        assert result.rank_used == 3
        assert len(result.fresh_predicates) == 6

    def test_rank_zero_is_hard_negation(self):
        f = make_factorization([], [])
        result = encode_evidence("p", f)
        assert result.fresh_predicates == ()
        assert len(result.unary_evidence) == 0
        assert result.added_formulas == (Not(Atom("p", ("X", "Y"))),)

    def test_requires_labels(self):
        f = Factorization(
            ((np.ones(2, dtype=np.uint8), np.ones(2, dtype=np.uint8)),), (2, 2)
        )
        with pytest.raises(InputError, match="labels"):
            encode_evidence("p", f)

    def test_name_collision_is_an_error(self, example_factorization):
        with pytest.raises(InputError, match="collides"):
            encode_evidence("p", example_factorization, existing_predicates={"p__q2"})

    def test_round_trip_reproduces_boolean_product(self):
        rng = np.random.default_rng(19)
        for _ in range(20):
            m = int(rng.integers(1, 6))
            n = int(rng.integers(0, min(m, 3) + 1))
            labels = tuple(f"e{i}" for i in range(m))
            q = BoolMatrix(rng.integers(0, 2, (m, n)).astype(np.uint8), labels, None)
            r = BoolMatrix(rng.integers(0, 2, (m, n)).astype(np.uint8), labels, None)
            pairs = tuple((q.bits[:, i].copy(), r.bits[:, i].copy()) for i in range(n))
            f = Factorization(pairs, (m, m), labels, labels)
            result = encode_evidence("p", f)
            assert implied_relation(result) == boolean_product(q, r)


class TestPartialEvidence:
    def test_single_known_atom(self):
        enc = encode_partial_evidence(
            "p", {Atom("p", ("a", "b"))}, set(), domain=("a", "b")
        )
        assert np.array_equal(enc.true_matrix.bits, np.array([[0, 1], [0, 0]]))
        assert enc.false_matrix.bits.sum() == 0
        assert enc.true_predicate == "p__p1"
        assert enc.false_predicate == "p__p0"
        texts = [format_formula(f) for f in enc.formulas]
        assert texts == ["p__p1(X, Y) => p(X, Y)", "p__p0(X, Y) => !p(X, Y)"]

    def test_full_split_recovers_matrix_and_complement(self, example_matrix):
        true_atoms = set()
        false_atoms = set()
        for i, x in enumerate(LABELS):
            for j, y in enumerate(LABELS):
                (true_atoms if example_matrix.bits[i, j] else false_atoms).add(
                    Atom("p", (x, y))
                )
        enc = encode_partial_evidence("p", true_atoms, false_atoms, LABELS)
        assert np.array_equal(enc.true_matrix.bits, example_matrix.bits)
        assert np.array_equal(enc.false_matrix.bits, 1 - example_matrix.bits)

    def test_withholding_one_entry(self, example_matrix):
        true_atoms = set()
        false_atoms = set()
        for i, x in enumerate(LABELS):
            for j, y in enumerate(LABELS):
                if (x, y) == ("c", "c"):
                    continue
                (true_atoms if example_matrix.bits[i, j] else false_atoms).add(
                    Atom("p", (x, y))
                )
        enc = encode_partial_evidence("p", true_atoms, false_atoms, LABELS)
        assert enc.true_matrix.ones() == 7
        assert enc.false_matrix.ones() == 8

    def test_overlap_rejected(self):
        atom = Atom("p", ("a", "a"))
        with pytest.raises(InputError, match="both true and false"):
            encode_partial_evidence("p", {atom}, {atom}, ("a",))

    def test_requires_matching_signature(self):
        with pytest.raises(InputError, match="expected a ground"):
            encode_partial_evidence("p", {Atom("q", ("a", "a"))}, set(), ("a",))
        with pytest.raises(InputError, match="outside the domain"):
            encode_partial_evidence("p", {Atom("p", ("z", "a"))}, set(), ("a",))


class TestSignatureClasses:
    def test_rank_three_example(self, example_factorization):
        result = encode_evidence("p", example_factorization)
        assert symmetry_signature_classes(result) == (4, 4)

    def test_rank_two_truncation(self, example_factorization):
        result = encode_evidence("p", truncate(example_factorization, 2))
        rows, cols = symmetry_signature_classes(result)
        assert rows == 4  # signatures 01, 11, 00, 10
        assert cols <= min(4, 2 ** 2)

    def test_rank_zero_single_class(self):
        f = make_factorization([], [])
        result = encode_evidence("p", f)
        assert symmetry_signature_classes(result) == (1, 1)

    def test_bounded_by_two_to_the_rank(self):
        rng = np.random.default_rng(37)
        for _ in range(25):
            m = int(rng.integers(1, 8))
            n = int(rng.integers(0, min(m, 3) + 1))
            labels = tuple(f"e{i}" for i in range(m))
            pairs = tuple(
                (
                    rng.integers(0, 2, m).astype(np.uint8),
                    rng.integers(0, 2, m).astype(np.uint8),
                )
                for _ in range(n)
            )
            f = Factorization(pairs, (m, m), labels, labels)
            rows, cols = symmetry_signature_classes(encode_evidence("p", f))
            assert rows <= min(m, 2 ** n)
            assert cols <= min(m, 2 ** n)


class TestExtendModel:
    def test_distribution_preserved_on_worked_example(self, example_matrix):
        model = parse_model(
            "domain = a, b, c, d\npred s/1\npred p/2\n1.5 s(X) ^ p(X,Y) => s(Y)\n"
        )
        _, witness = exact_boolean_rank(example_matrix)
        result = encode_evidence("p", witness, model.predicates)
        extended = extend_model(model, result)
        binary = matrix_to_evidence("p", example_matrix)
        for c in model.domain:
            q = Atom("s", (c,))
            assert exact_query(model, binary, q) == pytest.approx(
                exact_query(extended, result.unary_evidence, q), abs=1e-9
            )

    def test_requires_binary_predicate(self, example_factorization):
        model = parse_model("domain = a, b, c, d\npred p/1\n")
        result = encode_evidence("p", example_factorization)
        with pytest.raises(InputError, match="p/2"):
            extend_model(model, result)

    def test_rejects_foreign_labels(self, example_factorization):
        model = parse_model("domain = a, b\npred p/2\n")
        result = encode_evidence("p", example_factorization)
        with pytest.raises(InputError, match="domain"):
            extend_model(model, result)

    def test_collision_detected_on_extension(self, example_factorization):
        model = parse_model("domain = a, b, c, d\npred p/2\npred p__q1/1\n")
        result = encode_evidence("p", example_factorization)
        with pytest.raises(InputError, match="already declared"):
            extend_model(model, result)


class TestMatrixEvidenceConversion:
    def test_round_trip(self, example_matrix):
        ev = matrix_to_evidence("p", example_matrix)
        assert len(ev) == 16
        back = evidence_to_matrix("p", ev, LABELS, LABELS)
        assert back == example_matrix

    def test_missing_assignment(self):
        ev = EvidenceSet({Atom("p", ("a", "a")): True})
        with pytest.raises(InputError, match="does not assign"):
            evidence_to_matrix("p", ev, ("a", "b"), ("a", "b"))

    def test_requires_labels(self):
        with pytest.raises(InputError, match="labels"):
            matrix_to_evidence("p", BoolMatrix(np.zeros((2, 2), dtype=np.uint8)))


class TestConstantSymmetryClasses:
    def test_unary_signatures_group_constants(self):
        model = parse_model("domain = a, b, c, d\npred q/1\npred s/1\n0.5 s(X)\n")
        ev = parse_evidence("q(a)\nq(b)\n!q(c)\n!q(d)\n", model)
        classes = constant_symmetry_classes(model, ev)
        assert set(map(frozenset, classes)) == {
            frozenset({"a", "b"}),
            frozenset({"c", "d"}),
        }

    def test_binary_evidence_must_be_swap_invariant(self):
        model = parse_model("domain = a, b\npred p/2\npred s/1\n0.5 s(X)\n")
        # identical rows/columns except the cross entries break the swap
        ev = parse_evidence("p(a,b)\n!p(b,a)\n!p(a,a)\n!p(b,b)\n", model)
        classes = constant_symmetry_classes(model, ev)
        assert all(len(c) == 1 for c in classes)
        ev2 = parse_evidence("p(a,b)\np(b,a)\n!p(a,a)\n!p(b,b)\n", model)
        classes2 = constant_symmetry_classes(model, ev2)
        assert any(len(c) == 2 for c in classes2)

    def test_constants_mentioned_in_formulas_stay_singletons(self):
        model = parse_model("domain = a, b, c\npred s/1\n0.5 s(a)\n")
        classes = constant_symmetry_classes(model, EvidenceSet())
        assert ("a",) in classes
        assert set(map(frozenset, classes)) == {
            frozenset({"a"}),
            frozenset({"b", "c"}),
        }
