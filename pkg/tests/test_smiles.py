"""SMILES parser and featurizer semantics.

Ring flags are checked against an exhaustive edge-removal oracle, and the
committed 50-molecule fixture pins every feature of every atom.
"""

import json
from pathlib import Path

import pytest

from molfuse.errors import SmilesError, ValenceError
from molfuse.smiles import (
    BondOrder,
    Chirality,
    Hybridization,
    MolecularGraph,
    featurize,
    implicit_hydrogens,
    parse_smiles,
    perceive_rings,
    ring_atom_flags,
)

FIXTURES = Path(__file__).parent / "fixtures"


def edge_on_cycle_oracle(num_atoms: int, edges: list[tuple[int, int]], which: int) -> bool:
    """An edge lies on a cycle iff its endpoints stay connected without it."""
    a, b = edges[which]
    adj = {i: set() for i in range(num_atoms)}
    for k, (x, y) in enumerate(edges):
        if k == which:
            continue
        adj[x].add(y)
        adj[y].add(x)
    seen, frontier = {a}, [a]
    while frontier:
        node = frontier.pop()
        for nxt in adj[node]:
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return b in seen


def ring_flags_oracle(num_atoms: int, edges: list[tuple[int, int]]) -> list[bool]:
    flags = [False] * num_atoms
    for k, (a, b) in enumerate(edges):
        if edge_on_cycle_oracle(num_atoms, edges, k):
            flags[a] = True
            flags[b] = True
    return flags


class TestParser:
    def test_single_atom(self):
        mol = parse_smiles("C")
        assert len(mol.atoms) == 1 and mol.atoms[0].symbol == "C"
        assert mol.bonds == []

    def test_triangle_ring(self):
        mol = parse_smiles("C1CC1")
        assert len(mol.atoms) == 3
        pairs = sorted((a, b) for a, b, _ in mol.bonds)
        assert pairs == [(0, 1), (0, 2), (1, 2)]
        assert all(order is BondOrder.SINGLE for _, _, order in mol.bonds)

    def test_acetic_acid_bonds(self):
        mol = parse_smiles("CC(=O)O")
        assert len(mol.atoms) == 4
        orders = {(a, b): o for a, b, o in mol.bonds}
        assert orders[(0, 1)] is BondOrder.SINGLE
        assert orders[(1, 2)] is BondOrder.DOUBLE
        assert orders[(1, 3)] is BondOrder.SINGLE

    def test_unclosed_branch_offset(self):
        with pytest.raises(SmilesError) as err:
            parse_smiles("C(")
        assert err.value.offset == 2

    def test_two_letter_elements(self):
        mol = parse_smiles("CCl")
        assert [a.symbol for a in mol.atoms] == ["C", "Cl"]

    def test_percent_ring_closure(self):
        mol = parse_smiles("C%12CCCCC%12")
        pairs = sorted((a, b) for a, b, _ in mol.bonds)
        assert (0, 5) in pairs and len(pairs) == 6

    def test_ring_closure_bond_order_from_either_side(self):
        for s in ("C=1CCCCC1", "C1CCCCC=1"):
            orders = {(a, b): o for a, b, o in parse_smiles(s).bonds}
            assert orders[(0, 5)] is BondOrder.DOUBLE

    def test_conflicting_ring_orders_rejected(self):
        with pytest.raises(SmilesError):
            parse_smiles("C=1CCCCC#1")

    def test_biphenyl_link_is_single(self):
        # A default bond between aromatic atoms is aromatic only in a ring.
        mol = parse_smiles("c1ccccc1c1ccccc1")
        orders = {(a, b): o for a, b, o in mol.bonds}
        assert orders[(5, 6)] is BondOrder.SINGLE
        ring_orders = [o for (a, b), o in orders.items() if (a, b) != (5, 6)]
        assert all(o is BondOrder.AROMATIC for o in ring_orders)

    def test_bracket_atom_fields(self):
        mol = parse_smiles("[13C@@H2+2]")
        atom = mol.atoms[0]
        assert atom.symbol == "C"
        assert atom.chirality is Chirality.CW
        assert atom.explicit_hs == 2
        assert atom.charge == 2

    def test_charge_forms(self):
        assert parse_smiles("[O-]").atoms[0].charge == -1
        assert parse_smiles("[O--]").atoms[0].charge == -2
        assert parse_smiles("[N+3]").atoms[0].charge == 3

    def test_chirality_extension_maps_to_other(self):
        assert parse_smiles("[C@TH1](N)(O)C").atoms[0].chirality is Chirality.OTHER

    def test_slash_stereo_parsed_as_single(self):
        mol = parse_smiles("F/C=C/F")
        orders = {(a, b): o for a, b, o in mol.bonds}
        assert orders[(0, 1)] is BondOrder.SINGLE
        assert orders[(1, 2)] is BondOrder.DOUBLE


class TestParserErrors:
    def test_negative_corpus_has_positioned_errors(self):
        rows = (FIXTURES / "invalid_smiles.tsv").read_text().strip().splitlines()
        assert len(rows) >= 12
        for row in rows:
            smiles, offset = row.split("\t")
            with pytest.raises(SmilesError) as err:
                featurize(smiles)
            assert err.value.offset == int(offset), f"offset mismatch for {smiles!r}"

    def test_empty_string(self):
        with pytest.raises(SmilesError) as err:
            featurize("")
        assert err.value.offset == 0

    def test_valence_error_is_smiles_error(self):
        with pytest.raises(ValenceError):
            featurize("CC(C)(C)(C)C")


class TestRingPerception:
    def test_acyclic(self):
        mol = parse_smiles("CCO")
        assert perceive_rings(mol) == [False, False, False]

    def test_benzene(self):
        mol = parse_smiles("c1ccccc1")
        assert perceive_rings(mol) == [True] * 6

    def test_ring_with_tail(self):
        mol = parse_smiles("C1CC1CC")
        assert perceive_rings(mol) == [True, True, True, False, False]

    @pytest.mark.parametrize(
        "smiles",
        [
            "C1CC1CC",
            "C1CCC2CCCCC2C1",
            "c1ccc2ccccc2c1",
            "C1CC2(CC1)CCC2",
            "CC(C)C1CCC1",
            "C1CC1C1CC1",
        ],
    )
    def test_matches_exhaustive_cycle_oracle(self, smiles):
        mol = parse_smiles(smiles)
        assert len(mol.atoms) <= 12
        edges = [(a, b) for a, b, _ in mol.bonds]
        assert perceive_rings(mol) == ring_flags_oracle(len(mol.atoms), edges)

    def test_flags_helper_on_disjoint_union(self):
        # Triangle plus a path, as one graph.
        edges = [(0, 1), (1, 2), (0, 2), (3, 4)]
        assert ring_atom_flags(5, edges) == [True, True, True, False, False]


class TestValenceModel:
    def test_methane(self):
        assert featurize("C").atoms[0].num_hs == 4

    def test_ethanol_oxygen(self):
        assert featurize("CCO").atoms[2].num_hs == 1

    def test_benzene_carbon(self):
        assert featurize("c1ccccc1").atoms[0].num_hs == 1

    def test_pyridine_nitrogen_has_no_h(self):
        graph = featurize("c1ccncc1")
        assert graph.atoms[3].num_hs == 0

    def test_thiophene_sulfur_has_no_h(self):
        # Aromatic atoms use their lowest valence: floor(3.0) > 2 clamps to 0.
        graph = featurize("c1ccsc1")
        sulfur = next(a for a in graph.atoms if a.atomic_number == 16)
        assert sulfur.num_hs == 0

    def test_pentavalent_nitrogen_admitted(self):
        graph = featurize("CN(=O)=O")  # nitro written pentavalent
        assert graph.atoms[1].num_hs == 0

    def test_bracket_hydrogens_are_explicit(self):
        assert featurize("[CH]").atoms[0].num_hs == 1
        assert featurize("[C]").atoms[0].num_hs == 0

    def test_implicit_hydrogens_helper(self):
        assert implicit_hydrogens("N", False, 2) == 2  # one single bond
        assert implicit_hydrogens("S", False, 8) == 0  # two doubles picks valence 4
        with pytest.raises(ValenceError):
            implicit_hydrogens("C", False, 10)


class TestHybridization:
    def test_methane_sp3(self):
        assert featurize("C").atoms[0].hybridization is Hybridization.SP3

    def test_benzene_sp2(self):
        assert featurize("c1ccccc1").atoms[0].hybridization is Hybridization.SP2

    def test_alkyne_sp(self):
        graph = featurize("C#C")
        assert all(a.hybridization is Hybridization.SP for a in graph.atoms)

    def test_carbonyl_sp2(self):
        graph = featurize("CC(C)=O")
        assert graph.atoms[1].hybridization is Hybridization.SP2
        assert graph.atoms[3].hybridization is Hybridization.SP2

    def test_ether_oxygen_sp3(self):
        assert featurize("COC").atoms[1].hybridization is Hybridization.SP3

    def test_allene_center_sp(self):
        assert featurize("C=C=C").atoms[1].hybridization is Hybridization.SP


class TestFeaturize:
    def test_methane_full_vector(self):
        atom = featurize("C").atoms[0]
        assert atom.to_dict() == {
            "atomic_number": 6,
            "chirality": "UNSPECIFIED",
            "degree": 0,
            "formal_charge": 0,
            "num_hs": 4,
            "radical_electrons": 0,
            "hybridization": "SP3",
            "is_aromatic": False,
            "in_ring": False,
        }

    def test_ammonium_full_vector(self):
        atom = featurize("[NH4+]").atoms[0]
        assert atom.to_dict() == {
            "atomic_number": 7,
            "chirality": "UNSPECIFIED",
            "degree": 0,
            "formal_charge": 1,
            "num_hs": 4,
            "radical_electrons": 0,
            "hybridization": "SP3",
            "is_aromatic": False,
            "in_ring": False,
        }

    def test_methyl_radical(self):
        assert featurize("[CH3]").atoms[0].radical_electrons == 1

    def test_determinism(self):
        a = featurize("CC(=O)Oc1ccccc1C(=O)O")
        b = featurize("CC(=O)Oc1ccccc1C(=O)O")
        assert a.feature_matrix().tobytes() == b.feature_matrix().tobytes()
        assert a.bonds == b.bonds

    def test_feature_matrix_shape(self):
        graph = featurize("CCO")
        assert graph.feature_matrix().shape == (3, 9)


def load_feature_fixture() -> list[tuple[str, list[dict]]]:
    rows = (FIXTURES / "atom_features_50.tsv").read_text().strip().splitlines()
    return [(line.split("\t")[0], json.loads(line.split("\t")[1])) for line in rows]


class TestFeatureFixture:
    def test_corpus_size(self):
        assert len(load_feature_fixture()) == 50

    def test_every_atom_matches_reference(self):
        for smiles, expected_atoms in load_feature_fixture():
            graph = featurize(smiles)
            assert graph.num_atoms == len(expected_atoms), smiles
            for k, (atom, expected) in enumerate(zip(graph.atoms, expected_atoms)):
                assert atom.to_dict() == expected, f"{smiles} atom {k}"

    def test_degree_consistency_over_corpus(self):
        for smiles, _ in load_feature_fixture():
            graph = featurize(smiles)
            counts = [0] * graph.num_atoms
            for a, b, _ in graph.bonds:
                counts[a] += 1
                counts[b] += 1
            assert counts == [atom.degree for atom in graph.atoms], smiles

    def test_ring_flags_match_oracle_over_corpus(self):
        for smiles, _ in load_feature_fixture():
            graph = featurize(smiles)
            if graph.num_atoms > 12:
                continue
            edges = graph.bond_pairs()
            oracle = ring_flags_oracle(graph.num_atoms, edges)
            assert [a.in_ring for a in graph.atoms] == oracle, smiles
