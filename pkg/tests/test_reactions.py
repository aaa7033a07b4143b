import json
from fractions import Fraction

import numpy as np
import pytest

from reaction_learn.helpers import DimensionError, InputError
from reaction_learn.reactions import (
    Complex,
    PolynomialODE,
    RateVector,
    Reaction,
    ReactionLibrary,
    assemble_polynomial,
    default_species,
    enumerate_library,
    library_size,
    monomial_basis,
    propensity_eval,
    render_reaction,
)

TWO_SPECIES_LABELS = [
    "X -> 0",
    "Z -> 0",
    "X -> Z",
    "Z -> X",
    "X -> X + X",
    "X -> X + Z",
    "Z -> Z + Z",
    "Z -> Z + X",
    "X + X -> 0",
    "Z + Z -> 0",
    "X + X -> X",
    "X + X -> Z",
    "Z + Z -> Z",
    "Z + Z -> X",
    "X + Z -> 0",
    "X + Z -> X",
    "X + Z -> Z",
]


def closed_form(k: np.ndarray, x: float, z: float) -> tuple[float, float]:
    """Two-species right-hand side collected by hand (0-based rates)"""
    dx = (
        (k[4] - k[0] - k[2]) * x
        + (k[3] + k[7]) * z
        - (k[8] + k[10] / 2 + k[11]) * x * x
        + k[13] / 2 * z * z
        - (k[14] + k[16]) * x * z
    )
    dz = (
        (k[6] - k[1] - k[3]) * z
        + (k[2] + k[5]) * x
        + k[11] / 2 * x * x
        - (k[9] + k[12] / 2 + k[13]) * z * z
        - (k[14] + k[15]) * x * z
    )
    return dx, dz


class TestEnumerateLibrary:
    """Test library enumeration order and counts"""

    def test_two_species_order(self, lib2):
        """Test the 17 reactions appear in the fixed order"""
        assert len(lib2) == 17
        assert lib2.labels() == TWO_SPECIES_LABELS

    def test_homodimer_conversion(self, lib2):
        """Test reaction 12 (1-based) is X + X -> Z with halved propensity"""
        reaction = lib2[11]
        assert render_reaction(reaction) == "X + X -> Z"
        assert reaction.stoich == (-2, 1)
        assert reaction.propensity.coefficient == Fraction(1, 2)
        assert reaction.propensity.exponents == (2, 0)

    def test_single_species(self):
        """Test heterodimer reactions vanish for one species"""
        lib = enumerate_library(1)
        assert lib.labels() == ["X -> 0", "X -> X + X", "X + X -> 0", "X + X -> X"]

    @pytest.mark.parametrize("d,size", [(1, 4), (2, 17), (3, 39), (4, 70), (5, 110), (6, 159)])
    def test_sizes_match_closed_form(self, d, size):
        """Test enumeration counts 2d^2 + d(d+1) + 3d(d-1)/2"""
        assert len(enumerate_library(d)) == size
        assert library_size(d) == size

    def test_three_species_breakdown(self):
        """Test 18 unimolecular, 12 homodimer and 9 heterodimer reactions"""
        lib = enumerate_library(3)
        unimolecular = [r for r in lib if r.order == 1]
        homodimer = [r for r in lib if r.reactants.is_homodimer]
        assert len(unimolecular) == 18
        assert len(homodimer) == 12
        assert len(lib) - 18 - 12 == 9
        assert lib.labels()[0] == "X1 -> 0"

    def test_no_duplicates_and_contiguous_ids(self):
        """Test ids are positions and (reactants, products) pairs are unique"""
        lib = enumerate_library(3)
        assert [r.id for r in lib] == list(range(len(lib)))
        assert len({r.key() for r in lib}) == len(lib)

    def test_invalid_dimension(self):
        """Test zero species is rejected"""
        with pytest.raises(DimensionError):
            enumerate_library(0)
        with pytest.raises(DimensionError):
            default_species(-1)

    def test_stoichiometry_matrix(self, lib2):
        """Test the stacked stoichiometric vectors"""
        assert lib2.stoichiometry.shape == (17, 2)
        assert lib2.stoichiometry[14].tolist() == [-1, -1]
        assert lib2.stoichiometry[13].tolist() == [1, -2]

    def test_find_by_label(self, lib2):
        """Test every rendered label parses back to its reaction"""
        for reaction, label in zip(lib2, TWO_SPECIES_LABELS, strict=True):
            assert lib2.find(label) is reaction
        assert lib2.find("x1 + x2 -> x2").id == 16

    def test_find_unknown(self, lib2):
        """Test reactions outside the library are reported"""
        with pytest.raises(InputError, match="not in library"):
            lib2.find("X + Z -> X + X")
        with pytest.raises(InputError):
            lib2.find("X + Q -> 0")


class TestReactionValidation:
    """Test Reaction and Complex invariants"""

    def test_complex_order_limit(self):
        """Test complexes hold at most two molecules"""
        with pytest.raises(InputError):
            Complex((2, 1))

    def test_reaction_needs_reactants(self):
        """Test 0 -> X is not a reaction"""
        with pytest.raises(InputError):
            Reaction.build(0, Complex.of(2), Complex.of(2, 0))

    def test_inconsistent_stoich_rejected(self):
        """Test a hand-built reaction with the wrong stoichiometry is rejected"""
        good = Reaction.build(0, Complex.of(2, 0), Complex.of(2))
        with pytest.raises(InputError, match="stoichiometry"):
            Reaction(0, good.reactants, good.products, (1, 0), good.propensity)

    def test_duplicate_reaction_in_library(self):
        """Test a library with the same reaction twice is rejected"""
        species = default_species(1)
        r0 = Reaction.build(0, Complex.of(1, 0), Complex.of(1))
        r1 = Reaction.build(1, Complex.of(1, 0), Complex.of(1))
        with pytest.raises(InputError, match="Duplicate"):
            ReactionLibrary(species, (r0, r1))


class TestPropensities:
    """Test mass-action propensities"""

    def test_heterodimer(self, lib2):
        """Test X + Z -> Z at (2, 3) is xz = 6"""
        assert propensity_eval(lib2.find("X + Z -> Z"), [2.0, 3.0]) == 6.0

    def test_homodimer(self, lib2):
        """Test X + X -> 0 at x = 2 is x^2 / 2 = 2"""
        assert propensity_eval(lib2.find("X + X -> 0"), [2.0, 0.0]) == 2.0

    def test_zero_state(self, lib2):
        """Test X -> 0 at x = 0 is 0"""
        assert propensity_eval(lib2[0], [0.0, 1.0]) == 0.0

    def test_dimension_mismatch(self, lib2):
        """Test a state of the wrong length is rejected"""
        with pytest.raises(DimensionError):
            propensity_eval(lib2[0], [1.0, 2.0, 3.0])

    def test_batch_matches_single(self, lib2, rng):
        """Test vectorised propensities agree with per-reaction evaluation"""
        states = rng.random((20, 2))
        batch = lib2.propensities(states)
        assert batch.shape == (20, 17)
        for n, state in enumerate(states):
            expected = [propensity_eval(r, state) for r in lib2]
            np.testing.assert_allclose(batch[n], expected, rtol=1e-14)


class TestAssemblePolynomial:
    """Test assembly of rate vectors into polynomial ODEs"""

    def test_self_replication_unit_vector(self, lib2):
        """Test k5 alone gives x' = x, z' = 0"""
        K = np.zeros(17)
        K[4] = 1.0
        model = assemble_polynomial(lib2, K)
        assert model.terms(0) == {(1, 0): 1.0}
        assert model.terms(1) == {}

    def test_homodimer_conversion_unit_vector(self, lib2):
        """Test k12 alone gives x' = -x^2, z' = x^2 / 2"""
        K = np.zeros(17)
        K[11] = 1.0
        model = assemble_polynomial(lib2, K)
        assert model.terms(0) == {(2, 0): -1.0}
        assert model.terms(1) == {(2, 0): 0.5}

    def test_zero_rates(self, lib2):
        """Test K = 0 assembles the zero polynomial"""
        assert assemble_polynomial(lib2, np.zeros(17)).allclose(PolynomialODE.zero(2), atol=0)

    def test_matches_closed_form(self, lib2, rng):
        """Test assembly against the hand-collected equations on random rates and states"""
        for _ in range(100):
            K = rng.random(17) * 5
            model = assemble_polynomial(lib2, K)
            states = rng.random((100, 2)) * 2
            expected = np.array([closed_form(K, x, z) for x, z in states])
            np.testing.assert_allclose(model.evaluate(states), expected, rtol=1e-12, atol=1e-12)

    def test_linear_in_rates(self, lib2, rng):
        """Test assembly is linear in K"""
        K1, K2 = rng.random(17), rng.random(17)
        combined = assemble_polynomial(lib2, K1 + 2 * K2)
        separate = assemble_polynomial(lib2, K1) + assemble_polynomial(lib2, 2 * K2)
        assert combined.allclose(separate, atol=1e-14)

    def test_negative_rate_rejected(self, lib2):
        """Test negative rate constants are rejected"""
        K = np.zeros(17)
        K[3] = -0.1
        with pytest.raises(InputError, match="Negative rate"):
            assemble_polynomial(lib2, K)

    def test_length_mismatch_rejected(self, lib2):
        """Test a rate vector of the wrong length is rejected"""
        with pytest.raises(DimensionError):
            assemble_polynomial(lib2, np.ones(16))


class TestRateVector:
    """Test rate vector validation"""

    def test_active_set(self):
        """Test active() lists the strictly positive entries"""
        assert RateVector([0.0, 1.0, 0.0, 2.0]).active() == frozenset({1, 3})

    def test_read_only(self):
        """Test stored values cannot be modified in place"""
        K = RateVector([1.0, 2.0])
        with pytest.raises(ValueError):
            K.values[0] = 5.0

    def test_non_finite_rejected(self):
        """Test NaN rates are rejected"""
        with pytest.raises(InputError):
            RateVector([np.nan])

    def test_dict_round_trip(self):
        """Test to_dict/from_dict keeps the values"""
        K = RateVector([0.0, 1.5])
        np.testing.assert_array_equal(RateVector.from_dict(K.to_dict()).values, K.values)


class TestPolynomialODE:
    """Test the polynomial ODE type"""

    def test_monomial_basis_order(self):
        """Test x_i first, then x_i x_j for i <= j"""
        assert monomial_basis(2) == ((1, 0), (0, 1), (2, 0), (1, 1), (0, 2))
        assert len(monomial_basis(3)) == 9

    def test_render(self):
        """Test human-readable equations"""
        model = PolynomialODE.from_terms(2, [{(1, 0): 2.0, (2, 0): -1.0}, {(0, 1): -1.0}])
        assert model.render() == ["x' = 2.0000*x - 1.0000*x^2", "z' = -1.0000*z"]

    def test_render_zero(self):
        """Test a zero component renders as 0"""
        assert PolynomialODE.zero(1).render() == ["x' = 0"]

    def test_evaluate(self):
        """Test evaluation on a single state"""
        model = PolynomialODE.from_terms(2, [{(1, 1): 2.0}, {(0, 2): 1.0, (1, 0): -1.0}])
        np.testing.assert_allclose(model.evaluate([2.0, 3.0]), [12.0, 7.0])

    def test_constant_terms_rejected(self):
        """Test the basis has no constant monomial"""
        with pytest.raises(InputError):
            PolynomialODE.from_terms(1, [{(0,): 1.0}])

    def test_cubic_terms_rejected(self):
        """Test the basis stops at degree 2"""
        with pytest.raises(InputError):
            PolynomialODE.from_terms(1, [{(3,): 1.0}])

    def test_shape_checked(self):
        """Test the coefficient matrix shape must match the basis"""
        with pytest.raises(DimensionError):
            PolynomialODE(2, np.zeros((2, 4)))

    def test_dict_round_trip_through_json(self, rng):
        """Test the JSON form reproduces the coefficients exactly"""
        model = PolynomialODE(2, rng.normal(size=(2, 5)))
        back = PolynomialODE.from_dict(json.loads(json.dumps(model.to_dict())))
        assert back.allclose(model, atol=0)


class TestLibrarySerialisation:
    """Test the library JSON interface"""

    def test_round_trip(self, lib2):
        """Test the library survives a JSON round trip with exact rationals"""
        data = json.loads(json.dumps(lib2.to_dict()))
        assert ReactionLibrary.from_dict(data) == lib2
        assert data["reactions"][11]["propensity"] == {
            "coeff_num": 1,
            "coeff_den": 2,
            "exponents": [2, 0],
        }

    def test_tampered_stoich_rejected(self, lib2):
        """Test a stoichiometry that disagrees with the complexes is rejected"""
        data = lib2.to_dict()
        data["reactions"][0]["stoich"] = [1, 0]
        with pytest.raises(InputError):
            ReactionLibrary.from_dict(data)

    def test_malformed_rejected(self):
        """Test missing keys are input errors"""
        with pytest.raises(InputError):
            ReactionLibrary.from_dict({"species": []})
