import pytest

from conftest import DATA_DIR
from lmh.errors import MLNSyntaxError, UnboundVariableError, UnknownPredicateError
from lmh.generators.chimera import ChimeraSpec, chimera, chimera_edges, chimera_variable
from lmh.generators.ising import IsingSpec, coupling_table, field_table, ising_grid, lattice_edges
from lmh.generators.mln import format_atom, load_program, mln_ground, parse_evidence, parse_program
from lmh.model import Model


def test_ising_2x2_counts():
    model = ising_grid(IsingSpec(rows=2, cols=2, J=0.5, field=0.1))
    assert model.num_variables == 4
    assert sum(len(p.scope) == 2 for p in model.potentials) == 4
    assert sum(len(p.scope) == 1 for p in model.potentials) == 4
    assert model.template.kind == "grid"
    assert model.variables[3].name == "s_1_1"


def test_large_lattice_edge_count():
    assert len(lattice_edges(100, 100)) == 19800


def test_ising_tables():
    assert coupling_table(0.5) == (0.5, -0.5, -0.5, 0.5)
    assert field_table(0.3) == (-0.3, 0.3)
    assert str(field_table(0.0)) == "(0.0, 0.0)"
    model = ising_grid(IsingSpec(rows=1, cols=2, J=0.2, field=[0.1, -0.4]))
    assert [p.log_table for p in model.potentials] == [(0.2, -0.2, -0.2, 0.2), (-0.1, 0.1), (0.4, -0.4)]


def test_ising_field_noise_is_seeded():
    spec = IsingSpec(rows=3, cols=3, field=0.1, field_noise=0.2, seed=4)
    assert ising_grid(spec) == ising_grid(spec)
    assert ising_grid(spec) != ising_grid(spec.model_copy(update={"seed": 5}))


def test_ising_field_vector_length_is_checked():
    with pytest.raises(ValueError):
        IsingSpec(rows=2, cols=2, field=[0.1, 0.2])
    with pytest.raises(ValueError):
        IsingSpec(rows=0, cols=2)


def test_chimera_single_cell():
    model = chimera(ChimeraSpec(rows=1, cols=1))
    assert model.num_variables == 8
    pairwise = [p.scope for p in model.potentials if len(p.scope) == 2]
    assert len(pairwise) == 16
    # complete bipartite between lanes of the two sides
    assert {frozenset(s) for s in pairwise} == {frozenset({a, b}) for a in range(4) for b in range(4, 8)}


@pytest.mark.parametrize("rows,cols", [(1, 2), (2, 3), (3, 3)])
def test_chimera_counts(rows, cols):
    model = chimera(ChimeraSpec(rows=rows, cols=cols))
    intra, inter = chimera_edges(rows, cols)
    assert model.num_variables == 8 * rows * cols
    assert len(intra) == 16 * rows * cols
    assert len(inter) == 4 * (rows - 1) * cols + 4 * rows * (cols - 1)
    assert model.template.kind == "chimera"


def test_chimera_wiring():
    intra, inter = chimera_edges(2, 2)
    # left lanes couple vertically, right lanes horizontally
    assert (chimera_variable(0, 1, 0, 2, 2), chimera_variable(1, 1, 0, 2, 2)) in inter
    assert (chimera_variable(1, 0, 1, 3, 2), chimera_variable(1, 1, 1, 3, 2)) in inter
    assert (chimera_variable(0, 0, 0, 0, 2), chimera_variable(0, 1, 0, 0, 2)) not in inter
    assert chimera_variable(1, 1, 1, 3, 2) == 31


def test_chimera_noise_draws_are_reproducible():
    spec = ChimeraSpec(rows=2, cols=2, coupling_noise=0.1, field_noise=0.1, seed=9)
    a, b = chimera(spec), chimera(spec)
    assert a.model_dump_json() == b.model_dump_json()
    assert len({p.log_table for p in a.potentials if len(p.scope) == 2}) > 1


def test_generated_models_round_trip_through_json():
    for model in (
        ising_grid(IsingSpec(rows=3, cols=4, J=0.7, field=0.2, field_noise=0.1, seed=2)),
        chimera(ChimeraSpec(rows=2, cols=1, coupling_noise=0.05, seed=1)),
    ):
        text = model.model_dump_json()
        assert Model.model_validate_json(text).model_dump_json() == text


# Markov logic networks


def test_faculty_pages_grounding():
    ground = mln_ground(load_program(DATA_DIR / "mln" / "faculty_pages.mln"))
    assert ground.model.num_variables == 10
    assert len(ground.model.potentials) == 6
    assert "Page(A,Faculty)" in ground.atom_names()
    first = ground.model.potentials[0]
    names = [ground.model.variables[v].name for v in first.scope]
    assert names == ["Page(A,Faculty)", "HasWord(A,Hours)"]
    # violated only when the page is a faculty page without the word
    assert first.log_table == (1.3, 1.3, 0.0, 1.3)


def test_empty_domain_grounds_to_empty_model():
    ground = mln_ground(parse_program("domain = {}\n1.0 P(x) => Q(x)\n"))
    assert ground.model.num_variables == 0
    assert ground.model.potentials == ()


@pytest.mark.parametrize("size", [1, 2, 3, 4])
def test_ground_atom_count(size):
    constants = ", ".join(f"C{i}" for i in range(size))
    program = parse_program(f"domain = {{{constants}}}\n0.5 R(x, y) ^ S(x) => T(y, z, x)\n")
    ground = mln_ground(program)
    assert ground.model.num_variables == size ** 2 + size + size ** 3
    assert len(ground.model.potentials) == size ** 3


def test_grounding_ignores_constant_order():
    text = "1.0 Smokes(x) ^ Friends(x, y) => Smokes(y)\n"
    a = mln_ground(parse_program("domain = {Bob, Ann, Cid}\n" + text))
    b = mln_ground(parse_program("domain = {Cid, Ann, Bob}\n" + text))
    assert a.model.model_dump_json() == b.model.model_dump_json()
    assert a.atoms == b.atoms


def test_hard_evidence_conditions_clauses():
    program = load_program(DATA_DIR / "mln" / "faculty_pages.mln")
    evidence = parse_evidence("Link(A, B)\n!Link(B, A)\n", program)
    ground = mln_ground(program, evidence)
    assert ground.model.num_variables == 8
    assert len(ground.model.potentials) == 6
    by_names = {
        tuple(ground.model.variables[v].name for v in p.scope): p.log_table for p in ground.model.potentials
    }
    # Link(B, A) false satisfies the clause outright
    assert by_names[("Page(B,Faculty)", "Page(A,Course)")] == (1.5,) * 4
    # Link(A, B) true leaves an implication between the two pages
    assert by_names[("Page(A,Faculty)", "Page(B,Course)")] == (1.5, 1.5, 0.0, 1.5)


def test_soft_evidence_adds_unaries():
    program = load_program(DATA_DIR / "mln" / "faculty_pages.mln")
    evidence = parse_evidence("0.7 HasWord(A, Hours)\n0.5 !HasWord(B, Hours)\n", program)
    ground = mln_ground(program, evidence)
    assert ground.model.num_variables == 10
    unaries = {ground.model.variables[p.scope[0]].name: p.log_table for p in ground.model.potentials[6:]}
    assert unaries == {"HasWord(A,Hours)": (0.0, 0.7), "HasWord(B,Hours)": (0.0, -0.5)}


def test_typed_domains_and_comments():
    program = parse_program(
        """
        # typed program
        page = {P1, P2}
        label = {Faculty, Course}
        Page(page, label)
        Link(page, page)
        2.0 Page(x, Faculty) ^ Link(x, y) => Page(y, Course)  // propagation
        """
    )
    assert program.predicates["Page"] == ("page", "label")
    ground = mln_ground(program)
    assert ground.model.num_variables == 4 + 4
    assert len(ground.model.potentials) == 4


def test_webkb_fixture_grounds():
    program = load_program(DATA_DIR / "mln" / "webkb_mini.mln")
    evidence = parse_evidence((DATA_DIR / "mln" / "webkb_mini.db").read_text(), program)
    ground = mln_ground(program, evidence)
    assert all(not name.startswith("Link") for name in ground.atom_names())
    assert ground.model.num_variables == 20
    assert format_atom(("Link", ("P1", "P3"))) == "Link(P1,P3)"


def test_unbound_variable():
    with pytest.raises(UnboundVariableError):
        parse_program("1.0 P(x) => Q(x)\n")


def test_unknown_predicate():
    text = "domain = {A}\nlabel = {F}\nPage(domain, label)\n1.0 Page(x, F) => Other(x)\n"
    with pytest.raises(UnknownPredicateError):
        parse_program(text)


def test_unknown_evidence_predicate():
    program = load_program(DATA_DIR / "mln" / "faculty_pages.mln")
    with pytest.raises(UnknownPredicateError):
        parse_evidence("Missing(A)\n", program)


@pytest.mark.parametrize(
    "text",
    [
        "domain = {A}\n1.0 Page(x\n",
        "domain = {A}\n1.0 P(x) => P(x, y)\n",
        "domain = {A}\nlabel = {F}\nR(domain)\nS(label)\n1.0 R(x) => S(x)\n",
    ],
)
def test_malformed_programs(text):
    with pytest.raises(MLNSyntaxError):
        parse_program(text)


@pytest.mark.parametrize(
    "text",
    [
        "domain = {A}\n1.0 P(v) => Q(v)\n",
        "v = {A}\nP(v)\n1.0 P(x)\n",
        "domain = {A}\n1.0 P(x) v Q(x)\nv = {B}\n",
    ],
)
def test_disjunction_keyword_is_reserved(text):
    with pytest.raises(MLNSyntaxError, match="reserved for disjunction"):
        parse_program(text)


def test_names_starting_with_v_are_ordinary():
    program = parse_program("domain = {A, B}\nvals = {C}\n1.0 P(vx) v Q(w)\n-0.5 !P(vx) v R(vx)\n")
    assert len(program.formulas) == 2
    assert program.domains["vals"] == ("C",)
    assert program.formulas[0].variables() == ["vx", "w"]


def test_evidence_clash_and_bad_constants():
    program = load_program(DATA_DIR / "mln" / "faculty_pages.mln")
    with pytest.raises(MLNSyntaxError):
        parse_evidence("Link(A, B)\n0.3 Link(A, B)\n", program)
    with pytest.raises(MLNSyntaxError):
        parse_evidence("Link(A, Z)\n", program)
