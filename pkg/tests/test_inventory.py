import io

import pytest
from hypothesis import given
from hypothesis import strategies as st

from treegeo.inventory import (InventoryError, SchemaMap, group_by_address, load_inventory,
                               normalize_address)


@pytest.mark.parametrize("raw, expected", [
    ("123 Main St", "123 MAIN STREET"),
    ("  45  oak   ave ", "45 OAK AVENUE"),
    ("7 Sunset Blvd.", "7 SUNSET BOULEVARD"),
    ("9 Elm Dr #4", "9 ELM DRIVE"),
    ("9 Elm Dr Apt B", "9 ELM DRIVE"),
    ("10 Pine Ln Unit 12", "10 PINE LANE"),
    ("1 Hill Rd N", "1 HILL ROAD N"),
    ("3 Long Way", "3 LONG WAY"),
    ("12 Court Ct", "12 COURT COURT"),
    ("5 Market Pl", "5 MARKET PLACE"),
    ("200 Broadway", "200 BROADWAY"),
    ("77 St James Pkwy", "77 ST JAMES PKWY"),
])
def test_normalize(raw, expected):
    assert normalize_address(raw) == expected


def test_normalize_empty():
    assert normalize_address("   ") == ""
    assert normalize_address("#4") == ""


@given(st.text(alphabet="abcSTAVEPLDR #.,0123456789 \t", max_size=40))
def test_normalize_idempotent(s):
    once = normalize_address(s)
    assert normalize_address(once) == once


@given(st.lists(st.sampled_from(["1 A ST", "2 B AVE", "3 C RD", "4 D LN"]), min_size=1, max_size=30))
def test_groups_partition(addresses):
    csv_text = "address\n" + "\n".join(addresses) + "\n"
    trees = load_inventory(io.StringIO(csv_text), SchemaMap()).trees
    groups = group_by_address(trees)
    ids = [i for g in groups for i in g.tree_ids]
    assert sorted(ids) == sorted(t.tree_id for t in trees)
    assert sum(g.capacity_K for g in groups) == len(trees)
    assert all(g.capacity_K == len(g.tree_ids) >= 1 for g in groups)


def test_ten_row_fixture_groups():
    rows = ["id,addr,species,lat,lon"]
    rows += [f"t{i},{100 + i} Oak St,Quercus,37.0,-122.0" for i in range(7)]
    rows += ["t7,500 Elm Ave,,,", "t8,500 elm ave.,,,", "t9,500 ELM AVENUE #2,,,"]
    schema = SchemaMap(address="addr", tree_id="id", species="species", lat="lat", lon="lon")
    loaded = load_inventory(io.StringIO("\n".join(rows) + "\n"), schema)
    assert len(loaded.trees) == 10
    groups = group_by_address(loaded.trees)
    shared = [g for g in groups if g.address == "500 ELM AVENUE"]
    assert len(shared) == 1 and shared[0].capacity_K == 3
    assert shared[0].tree_ids == ("t7", "t8", "t9")
    assert loaded.trees[0].ground_truth is not None and loaded.trees[7].ground_truth is None


def test_header_only():
    loaded = load_inventory(io.StringIO("address\n"), SchemaMap())
    assert loaded.trees == [] and loaded.coord_warnings == 0 and loaded.dropped_rows == 0


def test_missing_column_names_it():
    with pytest.raises(InventoryError, match="street"):
        load_inventory(io.StringIO("address\n1 A St\n"), SchemaMap(address="street"))


def test_empty_header():
    with pytest.raises(InventoryError):
        load_inventory(io.StringIO(""), SchemaMap())


def test_empty_address_dropped_and_bad_coordinate_kept():
    text = "address\tlat\tlon\n1 A St\t37.1\t-122\n\t1\t2\n2 B St\tabc\t-122\n"
    loaded = load_inventory(io.StringIO(text), SchemaMap(lat="lat", lon="lon"), delimiter="\t")
    assert [t.address for t in loaded.trees] == ["1 A STREET", "2 B STREET"]
    assert loaded.dropped_rows == 1
    assert loaded.coord_warnings == 1
    assert loaded.trees[1].ground_truth is None
    assert loaded.trees[1].tree_id == "row-3"


def test_duplicate_tree_id_rejected():
    with pytest.raises(InventoryError, match="duplicate"):
        load_inventory(io.StringIO("id,address\nx,1 A St\nx,2 B St\n"), SchemaMap(tree_id="id"))


def test_group_single_and_all_same():
    loaded = load_inventory(io.StringIO("address\n1 A St\n"), SchemaMap())
    assert [g.capacity_K for g in group_by_address(loaded.trees)] == [1]
    loaded = load_inventory(io.StringIO("address\n" + "1 A St\n" * 6), SchemaMap())
    assert [g.capacity_K for g in group_by_address(loaded.trees)] == [6]
