import io

import pytest

from caloraify.kb import (
    FoodRecord,
    KnowledgeBaseError,
    RowError,
    atwater_deviation,
    atwater_outliers,
    ingest_csv,
    load_snapshot,
    lookup,
    resolve_portion,
    serialize_snapshot,
)

HEADER = "food_id,name,category,kcal_per_100g,protein_g,fat_g,carb_g,density_g_per_ml,portion_weights\n"


def make_csv(*rows):
    return HEADER + "".join(r + "\n" for r in rows)


THREE_ROWS = make_csv(
    "flour-01,flour,grains,350,10,1,76,0.53,cup:120",
    "eggs-01,eggs,dairy,143,12.6,9.5,0.7,,piece:50;large:56",
    "milk-01,milk,dairy,61,3.2,3.3,4.8,1.03,cup:244",
)


def test_ingest_counts_rows_in_order():
    kb = ingest_csv(THREE_ROWS)
    assert kb.record_count == 3
    assert [r.food_id for r in kb.records] == ["flour-01", "eggs-01", "milk-01"]


def test_ingest_accepts_stream():
    kb = ingest_csv(io.StringIO(THREE_ROWS))
    assert kb.record_count == 3


def test_duplicate_food_id_is_named():
    text = make_csv(
        "a,flour,grains,350,10,1,76,,",
        "a,sugar,sweeteners,387,0,0,100,,",
    )
    with pytest.raises(KnowledgeBaseError, match="'a'"):
        ingest_csv(text)


def test_negative_nutrient_reports_line():
    text = make_csv(
        "ok,flour,grains,350,10,1,76,,",
        "bad,ash,other,-5,0,0,0,,",
    )
    with pytest.raises(RowError, match="line 3"):
        ingest_csv(text)


def test_malformed_portion_encoding():
    with pytest.raises(RowError):
        ingest_csv(make_csv("x,flour,grains,350,10,1,76,,cup-120"))
    with pytest.raises(RowError):
        ingest_csv(make_csv("x,flour,grains,350,10,1,76,,cup:abc"))
    with pytest.raises(RowError, match="positive"):
        ingest_csv(make_csv("x,flour,grains,350,10,1,76,,cup:0"))


def test_zero_or_negative_density_rejected():
    with pytest.raises(RowError):
        ingest_csv(make_csv("x,flour,grains,350,10,1,76,0,cup:120"))
    with pytest.raises(RowError):
        ingest_csv(make_csv("x,flour,grains,350,10,1,76,-0.5,cup:120"))


def test_bad_header_rejected():
    with pytest.raises(KnowledgeBaseError, match="header"):
        ingest_csv("id,name\n1,x\n")


def test_lookup_roundtrip_and_absence():
    kb = ingest_csv(THREE_ROWS)
    record = lookup(kb, "flour-01")
    assert record is not None
    assert record.name == "flour"
    assert record.kcal_per_100g == 350.0
    assert lookup(kb, "nope") is None
    # stable across repeated calls
    assert lookup(kb, "flour-01") == record
    assert lookup(kb, "flour-01") is lookup(kb, "flour-01")


def test_resolve_portion_case_insensitive():
    kb = ingest_csv(THREE_ROWS)
    flour = lookup(kb, "flour-01")
    assert resolve_portion(flour, "cup") == 120.0
    assert resolve_portion(flour, "Cup") == 120.0
    assert resolve_portion(flour, " CUP ") == 120.0
    assert resolve_portion(flour, "slice") is None


def test_density_optional():
    kb = ingest_csv(THREE_ROWS)
    assert lookup(kb, "eggs-01").density_g_per_ml is None
    assert lookup(kb, "milk-01").density_g_per_ml == 1.03


def test_snapshot_roundtrip_idempotent():
    kb1 = ingest_csv(THREE_ROWS)
    snapshot1 = serialize_snapshot(kb1)
    kb2 = load_snapshot(snapshot1)
    assert kb2.records == kb1.records
    assert kb2.record_count == kb1.record_count
    snapshot2 = serialize_snapshot(kb2)
    assert snapshot2 == snapshot1


def test_source_digest_tracks_input_bytes():
    kb1 = ingest_csv(THREE_ROWS)
    kb2 = ingest_csv(THREE_ROWS)
    assert kb1.source_digest == kb2.source_digest
    changed = THREE_ROWS.replace("350", "351")
    assert ingest_csv(changed).source_digest != kb1.source_digest


def test_atwater_flags_but_never_rejects():
    # macros say 4*10+9*10+4*10 = 170 kcal vs declared 100 -> 70% deviation
    text = make_csv("off,mystery,other,100,10,10,10,,")
    kb = ingest_csv(text)
    assert kb.record_count == 1
    flagged = atwater_outliers(kb)
    assert flagged and flagged[0][0] == "off"
    assert flagged[0][1] == pytest.approx(0.7)


def test_atwater_deviation_zero_kcal():
    zero = FoodRecord("z", "water", "drinks", 0, 0, 0, 0, None, {})
    assert atwater_deviation(zero) == 0.0
    weird = FoodRecord("w", "weird", "other", 0, 1, 0, 0, None, {})
    assert atwater_deviation(weird) == float("inf")


def test_fixture_kb_has_no_atwater_outliers(fixture_kb):
    assert atwater_outliers(fixture_kb) == []
