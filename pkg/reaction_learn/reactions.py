"""Complete uni/bimolecular reaction libraries and the polynomial ODEs they induce.

A library over ``d`` species enumerates every reaction with one or two reactant
molecules and at most two product molecules, following the two-species pattern:

- unimolecular: decay ``X_i -> 0``, conversion ``X_i -> X_j``, production
  ``X_i -> X_i + X_j`` (self-replication first);
- bimolecular: homodimer sinks ``X_i + X_i -> 0``, homodimer conversions
  ``X_i + X_i -> X_j``, heterodimer sinks and absorptions
  ``X_i + X_j -> 0 | X_i | X_j``.

Mass-action propensities are the products of the reactant densities, halved for
homodimers. Assembling ``sum_j k_j * nu_j * a_j(X)`` gives a degree-2 polynomial
right-hand side without constant term.
"""

import dataclasses
import functools
import re
import typing as tp
from fractions import Fraction

import numpy as np

from reaction_learn.helpers import DimensionError, InputError, check_dimension

Exponents = tuple[int, ...]

_ALIASES = {1: ("x",), 2: ("x", "z")}


@dataclasses.dataclass(frozen=True)
class Species:
    index: int
    name: str
    alias: str | None = None

    @property
    def label(self) -> str:
        """Upper-case symbol used in reaction strings (X, Z, X1, ...)"""
        return (self.alias or self.name).upper()

    @property
    def symbol(self) -> str:
        """Lower-case symbol used in polynomial strings (x, z, x1, ...)"""
        return (self.alias or self.name).lower()


def default_species(d: int) -> tuple[Species, ...]:
    if d < 1:
        raise DimensionError(f"Invalid dimension: {d} (need at least one species)")
    aliases = _ALIASES.get(d, (None,) * d)
    return tuple(Species(i, f"x{i + 1}", aliases[i]) for i in range(d))


@dataclasses.dataclass(frozen=True)
class Complex:
    """One side of a reaction: multiplicity per species, total 0, 1 or 2."""

    counts: tuple[int, ...]

    def __post_init__(self) -> None:
        if any(c < 0 for c in self.counts):
            raise InputError(f"Negative multiplicity in complex {self.counts}")
        if self.order > 2:
            raise InputError(f"Complex {self.counts} has order {self.order} > 2")

    @classmethod
    def of(cls, d: int, *indices: int) -> "Complex":
        counts = [0] * d
        for i in indices:
            counts[i] += 1
        return cls(tuple(counts))

    @property
    def dimension(self) -> int:
        return len(self.counts)

    @property
    def order(self) -> int:
        return sum(self.counts)

    @property
    def is_homodimer(self) -> bool:
        return self.order == 2 and max(self.counts) == 2

    def indices(self) -> list[int]:
        """Species indices repeated by multiplicity, ascending"""
        return [i for i, c in enumerate(self.counts) for _ in range(c)]


@dataclasses.dataclass(frozen=True)
class PropensityMonomial:
    coefficient: Fraction
    exponents: Exponents

    def __call__(self, state: np.ndarray) -> float:
        return float(self.coefficient) * float(np.prod(state ** np.asarray(self.exponents)))


@dataclasses.dataclass(frozen=True)
class Reaction:
    id: int
    reactants: Complex
    products: Complex
    stoich: tuple[int, ...]
    propensity: PropensityMonomial

    def __post_init__(self) -> None:
        if self.reactants.order < 1:
            raise InputError(f"Reaction {self.id} has no reactants")
        if self.products.dimension != self.reactants.dimension:
            raise DimensionError(f"Reaction {self.id}: reactant/product dimension mismatch")
        if self.stoich != stoich_of(self.reactants, self.products):
            raise InputError(f"Reaction {self.id}: stoichiometry does not match complexes")
        expected = propensity_of(self.reactants)
        if self.propensity != expected:
            raise InputError(f"Reaction {self.id}: propensity does not match reactants")

    @classmethod
    def build(cls, id_: int, reactants: Complex, products: Complex) -> "Reaction":
        return cls(
            id=id_,
            reactants=reactants,
            products=products,
            stoich=stoich_of(reactants, products),
            propensity=propensity_of(reactants),
        )

    @property
    def dimension(self) -> int:
        return self.reactants.dimension

    @property
    def order(self) -> int:
        return self.reactants.order

    def key(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        return self.reactants.counts, self.products.counts

    def to_dict(self) -> dict[str, tp.Any]:
        return {
            "id": self.id,
            "reactants": self.reactants.indices(),
            "products": self.products.indices(),
            "stoich": list(self.stoich),
            "propensity": {
                "coeff_num": self.propensity.coefficient.numerator,
                "coeff_den": self.propensity.coefficient.denominator,
                "exponents": list(self.propensity.exponents),
            },
        }

    @classmethod
    def from_dict(cls, data: dict[str, tp.Any], d: int) -> "Reaction":
        try:
            reaction = cls(
                id=int(data["id"]),
                reactants=Complex.of(d, *data["reactants"]),
                products=Complex.of(d, *data["products"]),
                stoich=tuple(int(v) for v in data["stoich"]),
                propensity=PropensityMonomial(
                    Fraction(data["propensity"]["coeff_num"], data["propensity"]["coeff_den"]),
                    tuple(int(v) for v in data["propensity"]["exponents"]),
                ),
            )
        except (KeyError, TypeError, IndexError, ValueError) as e:
            raise InputError(f"Malformed reaction entry {data!r}: {e}") from e
        return reaction


def stoich_of(reactants: Complex, products: Complex) -> tuple[int, ...]:
    return tuple(p - r for r, p in zip(reactants.counts, products.counts, strict=True))


def propensity_of(reactants: Complex) -> PropensityMonomial:
    coefficient = Fraction(1, 2) if reactants.is_homodimer else Fraction(1)
    return PropensityMonomial(coefficient, reactants.counts)


@dataclasses.dataclass(frozen=True)
class ReactionLibrary:
    species: tuple[Species, ...]
    reactions: tuple[Reaction, ...]

    def __post_init__(self) -> None:
        d = len(self.species)
        if [s.index for s in self.species] != list(range(d)):
            raise InputError("Species indices must be contiguous from 0")
        seen: set[tuple[tuple[int, ...], tuple[int, ...]]] = set()
        for position, reaction in enumerate(self.reactions):
            check_dimension(reaction.dimension, d, f"reaction {reaction.id}")
            if reaction.id != position:
                raise InputError(f"Reaction at position {position} has id {reaction.id}")
            if reaction.key() in seen:
                raise InputError(f"Duplicate reaction {render_reaction(reaction, self.species)}")
            seen.add(reaction.key())

    def __len__(self) -> int:
        return len(self.reactions)

    def __iter__(self) -> tp.Iterator[Reaction]:
        return iter(self.reactions)

    def __getitem__(self, id_: int) -> Reaction:
        return self.reactions[id_]

    @property
    def dimension(self) -> int:
        return len(self.species)

    @functools.cached_property
    def stoichiometry(self) -> np.ndarray:
        """(reactions, species) integer matrix of stoichiometric vectors"""
        matrix = np.array([r.stoich for r in self.reactions], dtype=np.int64)
        matrix.setflags(write=False)
        return matrix

    @functools.cached_property
    def exponents(self) -> np.ndarray:
        """(reactions, species) propensity exponents (reactant counts)"""
        matrix = np.array([r.propensity.exponents for r in self.reactions], dtype=np.int64)
        matrix.setflags(write=False)
        return matrix

    @functools.cached_property
    def propensity_coefficients(self) -> np.ndarray:
        coefficients = np.array([float(r.propensity.coefficient) for r in self.reactions])
        coefficients.setflags(write=False)
        return coefficients

    def propensities(self, states: np.ndarray) -> np.ndarray:
        """Propensities without rate constants for one state (d,) or many (N, d)."""
        states = np.asarray(states, dtype=float)
        check_dimension(states.shape[-1], self.dimension, "state")
        powers = np.prod(states[..., None, :] ** self.exponents, axis=-1)
        return self.propensity_coefficients * powers

    def labels(self) -> list[str]:
        return [render_reaction(r, self.species) for r in self.reactions]

    def find(self, text: str) -> Reaction:
        """Look up a reaction by its rendered form, e.g. ``"X + X -> Z"``."""
        reactants, products = parse_reaction(text, self.species)
        for reaction in self.reactions:
            if reaction.key() == (reactants.counts, products.counts):
                return reaction
        raise InputError(f"Reaction not in library: {text}")

    def to_dict(self) -> dict[str, tp.Any]:
        return {
            "species": [dataclasses.asdict(s) for s in self.species],
            "reactions": [r.to_dict() for r in self.reactions],
        }

    @classmethod
    def from_dict(cls, data: dict[str, tp.Any]) -> "ReactionLibrary":
        try:
            species = tuple(
                Species(int(s["index"]), str(s["name"]), s.get("alias")) for s in data["species"]
            )
            reactions = tuple(Reaction.from_dict(r, len(species)) for r in data["reactions"])
        except (KeyError, TypeError) as e:
            raise InputError(f"Malformed reaction library: {e}") from e
        return cls(species, reactions)


def _others_after(i: int, d: int) -> list[int]:
    """Partner order used for productions and homodimer conversions: i first, then the rest."""
    return [i] + [j for j in range(d) if j != i]


def enumerate_library(d: int) -> ReactionLibrary:
    """Every uni/bimolecular reaction over ``d`` species in a fixed order.

    Counts: ``2 d^2`` unimolecular, ``d (d + 1)`` homodimeric and ``3 d (d - 1) / 2``
    heterodimeric reactions (17 for ``d = 2``). Heterodimer products are limited
    to ``0``, ``X_i`` and ``X_j``.
    """
    species = default_species(d)

    def c(*indices: int) -> Complex:
        return Complex.of(d, *indices)

    pairs: list[tuple[Complex, Complex]] = []
    pairs += [(c(i), c()) for i in range(d)]
    pairs += [(c(i), c(j)) for i in range(d) for j in range(d) if j != i]
    pairs += [(c(i), c(i, j)) for i in range(d) for j in _others_after(i, d)]
    pairs += [(c(i, i), c()) for i in range(d)]
    pairs += [(c(i, i), c(j)) for i in range(d) for j in _others_after(i, d)]
    for i in range(d):
        for j in range(i + 1, d):
            pairs += [(c(i, j), c()), (c(i, j), c(i)), (c(i, j), c(j))]

    reactions = tuple(Reaction.build(n, r, p) for n, (r, p) in enumerate(pairs))
    return ReactionLibrary(species, reactions)


def library_size(d: int) -> int:
    return 2 * d * d + d * (d + 1) + 3 * d * (d - 1) // 2


def propensity_eval(r: Reaction, state: tp.Sequence[float] | np.ndarray) -> float:
    """Mass-action propensity of ``r`` at ``state``, rate constant excluded."""
    state = np.asarray(state, dtype=float)
    check_dimension(state.shape[0] if state.ndim == 1 else -1, r.dimension, "state")
    return r.propensity(state)


def _side_text(side: Complex, species: tp.Sequence[Species], first: tp.Sequence[int]) -> str:
    indices = side.indices()
    if not indices:
        return "0"
    leading = [i for i in first if i in indices]
    for i in leading:
        indices.remove(i)
    return " + ".join(species[i].label for i in leading + indices)


def render_reaction(r: Reaction, species: tp.Sequence[Species] | None = None) -> str:
    """Human-readable reaction, e.g. ``"X + X -> Z"``; reactant species lead the products."""
    species = species or default_species(r.dimension)
    reactant_species = sorted(set(r.reactants.indices()))
    lhs = _side_text(r.reactants, species, [])
    rhs = _side_text(r.products, species, reactant_species)
    return f"{lhs} -> {rhs}"


def parse_reaction(text: str, species: tp.Sequence[Species]) -> tuple[Complex, Complex]:
    by_label = {s.label: s.index for s in species}
    by_label.update({s.name.upper(): s.index for s in species})
    parts = text.split("->")
    if len(parts) != 2:
        raise InputError(f"Cannot parse reaction: {text!r}")

    def side(part: str) -> Complex:
        tokens = [t.strip().upper() for t in re.split(r"\+", part)]
        if tokens == ["0"]:
            return Complex.of(len(species))
        try:
            return Complex.of(len(species), *(by_label[t] for t in tokens))
        except KeyError as e:
            raise InputError(f"Unknown species {e} in {text!r}") from e

    return side(parts[0]), side(parts[1])


@dataclasses.dataclass(frozen=True, eq=False)
class RateVector:
    """Non-negative rate constants, one per library reaction."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.ndim != 1:
            raise DimensionError(f"Rate vector must be 1-d, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InputError("Rate constants must be finite")
        negative = np.flatnonzero(values < 0)
        if negative.size:
            raise InputError(f"Negative rate constant for reaction(s) {negative.tolist()}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.shape[0]

    def active(self) -> frozenset[int]:
        return frozenset(int(j) for j in np.flatnonzero(self.values > 0))

    def to_dict(self) -> dict[str, tp.Any]:
        return {"values": self.values.tolist()}

    @classmethod
    def from_dict(cls, data: dict[str, tp.Any]) -> "RateVector":
        try:
            return cls(np.asarray(data["values"], dtype=float))
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"Malformed rate vector: {e}") from e


@functools.cache
def monomial_basis(d: int) -> tuple[Exponents, ...]:
    """Constant-free monomials of degree 1 and 2: x_i, then x_i x_j for i <= j."""
    if d < 1:
        raise DimensionError(f"Invalid dimension: {d}")
    basis: list[Exponents] = []
    for i in range(d):
        e = [0] * d
        e[i] = 1
        basis.append(tuple(e))
    for i in range(d):
        for j in range(i, d):
            e = [0] * d
            e[i] += 1
            e[j] += 1
            basis.append(tuple(e))
    return tuple(basis)


@functools.cache
def _basis_index(d: int) -> dict[Exponents, int]:
    return {e: n for n, e in enumerate(monomial_basis(d))}


def check_monomial(exponents: tp.Sequence[int], d: int) -> Exponents:
    exponents = tuple(int(e) for e in exponents)
    check_dimension(len(exponents), d, "monomial")
    if any(e < 0 for e in exponents) or sum(exponents) not in (1, 2):
        raise InputError(f"Monomial {exponents} must have total degree 1 or 2")
    return exponents


def render_monomial(exponents: Exponents, species: tp.Sequence[Species]) -> str:
    factors = []
    for i, e in enumerate(exponents):
        if e == 1:
            factors.append(species[i].symbol)
        elif e > 1:
            factors.append(f"{species[i].symbol}^{e}")
    return "*".join(factors)


@dataclasses.dataclass(frozen=True, eq=False)
class PolynomialODE:
    """``y' = C m(y)`` with ``m`` the constant-free degree-2 monomial basis.

    ``coefficients`` has shape ``(d, len(monomial_basis(d)))``; row ``i`` holds
    component ``i``.
    """

    dimension: int
    coefficients: np.ndarray

    def __post_init__(self) -> None:
        basis = monomial_basis(self.dimension)
        coefficients = np.array(self.coefficients, dtype=float)
        if coefficients.shape != (self.dimension, len(basis)):
            raise DimensionError(
                f"Coefficient matrix must have shape {(self.dimension, len(basis))}, "
                f"got {coefficients.shape}"
            )
        coefficients.setflags(write=False)
        object.__setattr__(self, "coefficients", coefficients)

    @classmethod
    def zero(cls, d: int) -> "PolynomialODE":
        return cls(d, np.zeros((d, len(monomial_basis(d)))))

    @classmethod
    def from_terms(
        cls, d: int, terms: tp.Sequence[tp.Mapping[tp.Sequence[int], float]]
    ) -> "PolynomialODE":
        """Build from one ``{exponents: coefficient}`` mapping per component."""
        check_dimension(len(terms), d, "component terms")
        index = _basis_index(d)
        coefficients = np.zeros((d, len(index)))
        for i, component in enumerate(terms):
            for exponents, value in component.items():
                coefficients[i, index[check_monomial(exponents, d)]] += value
        return cls(d, coefficients)

    @functools.cached_property
    def _exponent_matrix(self) -> np.ndarray:
        return np.array(monomial_basis(self.dimension), dtype=np.int64)

    def terms(self, i: int) -> dict[Exponents, float]:
        """Nonzero monomial coefficients of component ``i``"""
        return {
            e: float(c)
            for e, c in zip(monomial_basis(self.dimension), self.coefficients[i], strict=True)
            if c != 0
        }

    def coefficient(self, i: int, exponents: tp.Sequence[int]) -> float:
        return float(self.coefficients[i, _basis_index(self.dimension)[tuple(exponents)]])

    def monomials(self, y: np.ndarray) -> np.ndarray:
        return np.prod(np.asarray(y, dtype=float)[..., None, :] ** self._exponent_matrix, axis=-1)

    def evaluate(self, y: tp.Sequence[float] | np.ndarray) -> np.ndarray:
        """Right-hand side at one state (d,) or a batch of states (N, d)."""
        y = np.asarray(y, dtype=float)
        check_dimension(y.shape[-1], self.dimension, "state")
        return self.monomials(y) @ self.coefficients.T

    def allclose(self, other: "PolynomialODE", rtol: float = 0.0, atol: float = 1e-12) -> bool:
        return self.dimension == other.dimension and bool(
            np.allclose(self.coefficients, other.coefficients, rtol=rtol, atol=atol)
        )

    def __add__(self, other: "PolynomialODE") -> "PolynomialODE":
        check_dimension(other.dimension, self.dimension, "polynomial")
        return PolynomialODE(self.dimension, self.coefficients + other.coefficients)

    def render(
        self, species: tp.Sequence[Species] | None = None, precision: int = 4
    ) -> list[str]:
        species = species or default_species(self.dimension)
        lines = []
        for i in range(self.dimension):
            parts = []
            for exponents, value in self.terms(i).items():
                sign = "-" if value < 0 else "+"
                parts.append(f"{sign} {abs(value):.{precision}f}*{render_monomial(exponents, species)}")
            rhs = " ".join(parts).lstrip("+ ") if parts else "0"
            if rhs.startswith("- "):
                rhs = "-" + rhs[2:]
            lines.append(f"{species[i].symbol}' = {rhs}")
        return lines

    def to_dict(self) -> dict[str, tp.Any]:
        return {
            "dimension": self.dimension,
            "components": [
                [
                    {"exponents": list(e), "coefficient": float(c)}
                    for e, c in zip(monomial_basis(self.dimension), row, strict=True)
                ]
                for row in self.coefficients
            ],
        }

    @classmethod
    def from_dict(cls, data: dict[str, tp.Any]) -> "PolynomialODE":
        try:
            d = int(data["dimension"])
            terms = [
                {tuple(t["exponents"]): float(t["coefficient"]) for t in component}
                for component in data["components"]
            ]
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"Malformed polynomial: {e}") from e
        return cls.from_terms(d, terms)


def as_rates(lib: ReactionLibrary, K: "RateVector | tp.Sequence[float] | np.ndarray") -> RateVector:
    rates = K if isinstance(K, RateVector) else RateVector(np.asarray(K, dtype=float))
    if len(rates) != len(lib):
        raise DimensionError(f"Rate vector has {len(rates)} entries, library has {len(lib)}")
    return rates


def assemble_polynomial(
    lib: ReactionLibrary, K: RateVector | tp.Sequence[float] | np.ndarray
) -> PolynomialODE:
    """``X' = sum_j k_j nu_j a_j(X)`` collected per monomial."""
    rates = as_rates(lib, K)
    d = lib.dimension
    index = _basis_index(d)
    coefficients = np.zeros((d, len(index)))
    for reaction, k in zip(lib, rates.values, strict=True):
        if k == 0:
            continue
        column = index[reaction.propensity.exponents]
        weight = k * float(reaction.propensity.coefficient)
        coefficients[:, column] += weight * np.asarray(reaction.stoich, dtype=float)
    return PolynomialODE(d, coefficients)
