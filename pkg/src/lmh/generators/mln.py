"""
Markov logic networks: parsing and grounding.

Program text::

    domain = {A, B}                      // default domain of logical variables
    label = {Faculty, Course}            // optional typed domain
    Page(domain, label)                  // optional predicate declaration
    1.3 Page(x, Faculty) => HasWord(x, Hours)
    1.5 Page(x, Faculty) ^ Link(x, y) => Page(y, Course)
    -0.4 !Page(x, Course) v HasWord(x, Hours)

Logical variables are lowercase, constants and predicates capitalized. `v` is
reserved as the disjunction keyword everywhere: it cannot name a logical
variable or a domain (`vx` or `w` can). Positions of undeclared predicates are
typed by usage: a position that ever holds a logical variable ranges over the
default domain, a constants-only position ranges over the constants written
there.

Evidence text (one literal per line)::

    Link(A, B)          // hard, true
    !Link(B, A)         // hard, false
    0.7 HasWord(A, Hours)   // soft unary weight on the atom being true
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from lark import Lark, Transformer
from lark.exceptions import LarkError, UnexpectedInput

from ..errors import MLNSyntaxError, UnboundVariableError, UnknownPredicateError
from ..model import Model, Potential, Variable

logger = logging.getLogger(__name__)

DEFAULT_DOMAIN = "domain"
RESERVED = "v"

GroundAtom = Tuple[str, Tuple[str, ...]]

GRAMMAR = r"""
    program: statement*
    ?statement: domain_decl | predicate_decl | formula

    domain_decl: LOWER "=" "{" [UPPER ("," UPPER)*] "}"
    predicate_decl: UPPER "(" LOWER ("," LOWER)* ")"
    formula: SIGNED_NUMBER (implication | disjunction)
    implication: conjunction "=>" disjunction
    conjunction: literal ("^" literal)*
    disjunction: literal ("v" literal)*
    literal: NEG? atom
    atom: UPPER "(" term ("," term)* ")"
    term: LOWER -> variable
        | UPPER -> constant

    evidence: evidence_item*
    evidence_item: [SIGNED_NUMBER] NEG? ground_atom
    ground_atom: UPPER "(" UPPER ("," UPPER)* ")"

    NEG: "!"
    LOWER: /(?!v(?![A-Za-z0-9_]))[a-z][A-Za-z0-9_]*/
    UPPER: /[A-Z][A-Za-z0-9_]*/
    COMMENT: /(\/\/|#)[^\n]*/

    %import common.SIGNED_NUMBER
    %import common.WS
    %ignore WS
    %ignore COMMENT
"""


@dataclass(frozen=True)
class Term:
    name: str
    is_variable: bool


@dataclass(frozen=True)
class Atom:
    predicate: str
    terms: Tuple[Term, ...]

    def ground(self, binding: Mapping[str, str]) -> GroundAtom:
        return self.predicate, tuple(binding[t.name] if t.is_variable else t.name for t in self.terms)


@dataclass(frozen=True)
class Literal:
    atom: Atom
    positive: bool = True


@dataclass(frozen=True)
class Formula:
    """`weight` attached to body => head; an empty body is a plain disjunction."""

    weight: float
    body: Tuple[Literal, ...]
    head: Tuple[Literal, ...]

    def clause(self) -> List[Tuple[Atom, bool]]:
        """(atom, truth value that satisfies the clause) for each literal of the clausal form."""
        return [(lit.atom, not lit.positive) for lit in self.body] + [(lit.atom, lit.positive) for lit in self.head]

    def variables(self) -> List[str]:
        seen: Dict[str, None] = {}
        for atom, _ in self.clause():
            for t in atom.terms:
                if t.is_variable:
                    seen.setdefault(t.name, None)
        return list(seen)


@dataclass(frozen=True)
class MLNProgram:
    domains: Mapping[str, Tuple[str, ...]]
    predicates: Mapping[str, Tuple[str, ...]]  # predicate -> domain name per position
    formulas: Tuple[Formula, ...]

    def arity(self, predicate: str) -> int:
        return len(self.predicates[predicate])

    def ground_atoms(self, predicate: str) -> List[GroundAtom]:
        pools = [self.domains[t] for t in self.predicates[predicate]]
        return [(predicate, combo) for combo in itertools.product(*pools)]

    def variable_types(self, formula: Formula) -> Dict[str, str]:
        types: Dict[str, str] = {}
        for atom, _ in formula.clause():
            for position, t in enumerate(atom.terms):
                if t.is_variable:
                    types.setdefault(t.name, self.predicates[atom.predicate][position])
        return types


@dataclass(frozen=True)
class Evidence:
    hard: Mapping[GroundAtom, bool] = field(default_factory=dict)
    soft: Mapping[GroundAtom, float] = field(default_factory=dict)

    def with_hard(self, updates: Mapping[GroundAtom, bool]) -> "Evidence":
        return Evidence(hard={**self.hard, **updates}, soft=dict(self.soft))


@dataclass(frozen=True)
class GroundModel:
    model: Model
    atoms: Tuple[GroundAtom, ...]

    def index_of(self, atom: GroundAtom) -> int:
        return self.atoms.index(atom)

    def atom_names(self) -> List[str]:
        return [format_atom(a) for a in self.atoms]


def format_atom(atom: GroundAtom) -> str:
    predicate, constants = atom
    return f"{predicate}({','.join(constants)})"


class _MLNTransformer(Transformer):
    def variable(self, args):
        return Term(str(args[0]), True)

    def constant(self, args):
        return Term(str(args[0]), False)

    def atom(self, args):
        return Atom(str(args[0]), tuple(args[1:]))

    def literal(self, args):
        return Literal(args[-1], positive=len(args) == 1)

    def conjunction(self, args):
        return tuple(args)

    def disjunction(self, args):
        return tuple(args)

    def implication(self, args):
        return args[0], args[1]

    def formula(self, args):
        weight, clause = float(args[0]), args[1]
        if isinstance(clause[0], Literal):
            return Formula(weight=weight, body=(), head=clause)
        return Formula(weight=weight, body=clause[0], head=clause[1])

    def domain_decl(self, args):
        return "domain", str(args[0]), tuple(str(a) for a in args[1:] if a is not None)

    def predicate_decl(self, args):
        return "predicate", str(args[0]), tuple(str(a) for a in args[1:])

    def program(self, args):
        return list(args)

    def ground_atom(self, args):
        return str(args[0]), tuple(str(a) for a in args[1:])

    def evidence_item(self, args):
        weight, rest = args[0], args[1:]
        return (None if weight is None else float(weight)), len(rest) == 1, rest[-1]

    def evidence(self, args):
        return list(args)


@lru_cache
def _parser() -> Lark:
    return Lark(GRAMMAR, start=["program", "evidence"], parser="lalr", maybe_placeholders=True)


def _parse(text: str, start: str):
    try:
        tree = _parser().parse(text, start=start)
    except UnexpectedInput as e:
        if getattr(e, "token", None) == RESERVED or getattr(e, "char", None) == RESERVED:
            raise MLNSyntaxError(
                f"'{RESERVED}' is reserved for disjunction between literals and cannot name a variable or domain "
                f"(line {e.line}, column {e.column})"
            ) from e
        raise MLNSyntaxError(f"Cannot parse MLN {start}: {e}") from e
    except LarkError as e:
        raise MLNSyntaxError(f"Cannot parse MLN {start}: {e}") from e
    return _MLNTransformer().transform(tree)


def parse_program(text: str) -> MLNProgram:
    """Parse and type-check an MLN program.

    Raises:
        MLNSyntaxError: On malformed text, inconsistent arities or variable types.
        UnknownPredicateError: When predicates are declared and a formula uses an undeclared one.
        UnboundVariableError: When a logical variable's position has no domain.
    """
    domains: Dict[str, Tuple[str, ...]] = {}
    declared: Dict[str, Tuple[str, ...]] = {}
    formulas: List[Formula] = []
    for item in _parse(text, "program"):
        if isinstance(item, Formula):
            formulas.append(item)
        elif item[0] == "domain":
            domains[item[1]] = tuple(sorted(set(item[2])))
        else:
            declared[item[1]] = item[2]

    arity: Dict[str, int] = {name: len(types) for name, types in declared.items()}
    variable_positions: Dict[str, set] = {}
    constants_at: Dict[Tuple[str, int], set] = {}
    for formula in formulas:
        for atom, _ in formula.clause():
            if declared and atom.predicate not in declared:
                raise UnknownPredicateError(f"Predicate {atom.predicate} is used but not declared")
            if arity.setdefault(atom.predicate, len(atom.terms)) != len(atom.terms):
                raise MLNSyntaxError(
                    f"Predicate {atom.predicate} used with arity {len(atom.terms)}, expected {arity[atom.predicate]}"
                )
            for position, t in enumerate(atom.terms):
                if t.is_variable:
                    variable_positions.setdefault(atom.predicate, set()).add(position)
                else:
                    constants_at.setdefault((atom.predicate, position), set()).add(t.name)

    predicates: Dict[str, Tuple[str, ...]] = {}
    for name in sorted(arity):
        if name in declared:
            for domain in declared[name]:
                if domain not in domains:
                    raise MLNSyntaxError(f"Predicate {name} refers to undeclared domain '{domain}'")
            predicates[name] = declared[name]
            continue
        types = []
        for position in range(arity[name]):
            if position in variable_positions.get(name, set()):
                types.append(DEFAULT_DOMAIN)
            else:
                private = f"{name}.{position}"
                domains[private] = tuple(sorted(constants_at[(name, position)]))
                types.append(private)
        predicates[name] = tuple(types)

    program = MLNProgram(domains=domains, predicates=predicates, formulas=tuple(formulas))
    for formula in formulas:
        _check_formula(program, formula)
    logger.debug("Parsed MLN with %d predicate(s) and %d formula(s)", len(predicates), len(formulas))
    return program


def _check_formula(program: MLNProgram, formula: Formula) -> None:
    types: Dict[str, str] = {}
    for atom, _ in formula.clause():
        for position, t in enumerate(atom.terms):
            domain = program.predicates[atom.predicate][position]
            if t.is_variable:
                if types.setdefault(t.name, domain) != domain:
                    raise MLNSyntaxError(
                        f"Variable {t.name} is used with domains '{types[t.name]}' and '{domain}'"
                    )
                if domain not in program.domains:
                    raise UnboundVariableError(f"Variable {t.name} ranges over undeclared domain '{domain}'")
            elif domain in program.domains and t.name not in program.domains[domain]:
                raise MLNSyntaxError(f"Constant {t.name} is not in domain '{domain}' of {atom.predicate}")


def parse_evidence(text: str, program: MLNProgram) -> Evidence:
    hard: Dict[GroundAtom, bool] = {}
    soft: Dict[GroundAtom, float] = {}
    for weight, positive, atom in _parse(text, "evidence"):
        _check_ground_atom(program, atom)
        if weight is None:
            hard[atom] = positive
        else:
            # a soft weight on the negated atom equals minus that weight on the atom, up to a constant
            soft[atom] = soft.get(atom, 0.0) + (weight if positive else -weight)
    clash = set(hard) & set(soft)
    if clash:
        raise MLNSyntaxError(f"Atoms with both hard and soft evidence: {sorted(format_atom(a) for a in clash)}")
    return Evidence(hard=hard, soft=soft)


def _check_ground_atom(program: MLNProgram, atom: GroundAtom) -> None:
    predicate, constants = atom
    if predicate not in program.predicates:
        raise UnknownPredicateError(f"Evidence mentions unknown predicate {predicate}")
    if len(constants) != program.arity(predicate):
        raise MLNSyntaxError(f"Evidence atom {format_atom(atom)} has the wrong arity")
    for constant, domain in zip(constants, program.predicates[predicate]):
        if constant not in program.domains.get(domain, ()):
            raise MLNSyntaxError(f"Evidence constant {constant} is not in domain '{domain}'")


def load_program(path: Path) -> MLNProgram:
    return parse_program(Path(path).read_text())


def load_evidence(path: Path, program: MLNProgram) -> Evidence:
    return parse_evidence(Path(path).read_text(), program)


def _ground_clause(
    literals: Sequence[Tuple[GroundAtom, bool]],
    index: Mapping[GroundAtom, int],
    hard: Mapping[GroundAtom, bool],
    weight: float,
) -> Optional[Tuple[Tuple[int, ...], Tuple[float, ...]]]:
    """Scope and log-table of one ground clause conditioned on hard evidence."""
    scope: Dict[GroundAtom, int] = {}
    for atom, _ in literals:
        if atom not in hard:
            scope.setdefault(atom, len(scope))
    if not scope:
        return None
    satisfied_by_evidence = any(hard[atom] == value for atom, value in literals if atom in hard)
    free = [(scope[atom], int(value)) for atom, value in literals if atom not in hard]
    table = []
    for assignment in itertools.product((0, 1), repeat=len(scope)):
        satisfied = satisfied_by_evidence or any(assignment[pos] == value for pos, value in free)
        table.append(weight if satisfied else 0.0)
    return tuple(index[atom] for atom in scope), tuple(table)


def mln_ground(program: MLNProgram, evidence: Optional[Evidence] = None) -> GroundModel:
    """One binary variable per non-evidence ground atom, one potential per ground clause.

    Hard evidence conditions the clauses; clauses left without free atoms are
    dropped. Soft evidence adds a unary potential (0, w) per atom.
    """
    evidence = evidence or Evidence()
    for atom in itertools.chain(evidence.hard, evidence.soft):
        _check_ground_atom(program, atom)
    if set(evidence.hard) & set(evidence.soft):
        raise MLNSyntaxError("An atom cannot carry both hard and soft evidence")
    atoms = [
        atom
        for predicate in sorted(program.predicates)
        for atom in program.ground_atoms(predicate)
        if atom not in evidence.hard
    ]
    index = {atom: i for i, atom in enumerate(atoms)}

    potentials: List[Potential] = []
    for formula in program.formulas:
        clause = formula.clause()
        names = formula.variables()
        types = program.variable_types(formula)
        for values in itertools.product(*(program.domains[types[name]] for name in names)):
            binding = dict(zip(names, values))
            ground = [(atom.ground(binding), value) for atom, value in clause]
            grounded = _ground_clause(ground, index, evidence.hard, formula.weight)
            if grounded is not None:
                potentials.append(Potential(id=len(potentials), scope=grounded[0], log_table=grounded[1]))
    for atom, weight in sorted(evidence.soft.items()):
        potentials.append(Potential(id=len(potentials), scope=(index[atom],), log_table=(0.0, float(weight))))

    variables = [Variable(id=i, cardinality=2, name=format_atom(atom)) for i, atom in enumerate(atoms)]
    logger.info("Grounded MLN: %d atom(s), %d potential(s)", len(atoms), len(potentials))
    return GroundModel(model=Model(variables=variables, potentials=potentials), atoms=tuple(atoms))
