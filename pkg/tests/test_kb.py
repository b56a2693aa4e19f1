import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from threatloom.kb import (
    KBParseError,
    KBValidationError,
    check_level_consistency,
    is_hypernym_of,
    kb_to_json,
    load_kb,
    parse_bundle,
    save_kb,
    validate_kb,
)
from threatloom.model import (
    DetailLevel,
    Equivalence,
    KnowledgeBase,
    PrivacyProperty,
    Source,
    Threat,
    ThreatAgent,
    ThreatCategory,
)

from conftest import SHIPPED, read_rows, write_bundle
from oracles import ancestors_by_walk


def _threat(tid, detail="abstract", **kw):
    base = dict(
        id=tid,
        name=tid,
        source="U",
        property=PrivacyProperty.SOFT,
        agents=(ThreatAgent.DATA_CONTROLLER,),
        detail=detail,
        categories=(ThreatCategory.UNAWARENESS,),
    )
    base.update(kw)
    return Threat(**base)


def test_category_property_mapping():
    soft = {c for c in ThreatCategory if c.property is PrivacyProperty.SOFT}
    assert len(ThreatCategory) == 7
    assert soft == {ThreatCategory.UNAWARENESS, ThreatCategory.NON_COMPLIANCE}
    assert len(ThreatAgent) == 4


def test_shipped_bundle_loads_clean(shipped_kb):
    assert validate_kb(shipped_kb) == []
    assert len(shipped_kb.threats) == 17
    assert {s.id for s in shipped_kb.sources} == {"U", "N", "ENISA", "OWASP", "BELLA"}


def test_shipped_placeholders_flagged_provisional(shipped_kb):
    named = {
        "Sensors data", "Key and certificates", "Map data", "V2X information", "Device information",
        "User information",
    }
    for asset in shipped_kb.assets:
        if asset.source == "ENISA" and asset.name not in named:
            assert asset.description.startswith("[provisional]"), asset.id


def test_empty_bundle_is_valid(tmp_path):
    kb = load_kb(write_bundle(tmp_path / "empty", threats=[], assets=[]))
    assert kb.threats == () and kb.assets == ()


def test_missing_directory(tmp_path):
    with pytest.raises(Exception, match="not a knowledge-base directory"):
        load_kb(tmp_path / "nope")


def test_parse_error_carries_position(tmp_path):
    bundle = tmp_path / "bad"
    bundle.mkdir()
    (bundle / "threats.json").write_text('[\n  {"id": "x",\n  }\n]', encoding="utf-8")
    with pytest.raises(KBParseError) as info:
        load_kb(bundle)
    assert info.value.line == 3


def test_unknown_field_rejected(tmp_path):
    bundle = write_bundle(tmp_path / "kb", sources=[{"id": "U", "description": "", "colour": "red"}])
    with pytest.raises(KBParseError, match="unknown field"):
        load_kb(bundle)


def test_invalid_enum_rejected(bundle_copy):
    rows = read_rows(bundle_copy, "threats")
    rows[0]["property"] = "medium"
    write_bundle(bundle_copy, threats=rows)
    with pytest.raises(KBParseError, match="property"):
        load_kb(bundle_copy)


def test_unknown_source_names_threat(bundle_copy):
    rows = read_rows(bundle_copy, "threats")
    rows[2]["source"] = "NOWHERE"
    write_bundle(bundle_copy, threats=rows)
    with pytest.raises(KBValidationError) as info:
        load_kb(bundle_copy)
    assert any(rows[2]["id"] in v.message and "NOWHERE" in v.message for v in info.value.violations)


def test_self_parent_is_cyclic():
    kb = KnowledgeBase(levels=(DetailLevel("a", "Abstract", parent="a"),))
    codes = [v.code for v in validate_kb(kb)]
    assert "cyclic-detail-hierarchy" in codes


def test_duplicate_threat_lists_both_definitions():
    kb = KnowledgeBase(
        sources=(Source("U"),),
        levels=(DetailLevel("abstract", "Abstract"),),
        threats=(_threat("t1"), _threat("t2"), _threat("t1")),
    )
    [v] = validate_kb(kb)
    assert v.code == "duplicate-id"
    assert "threats.json[0]" in v.message and "threats.json[2]" in v.message


def test_validation_is_total():
    kb = KnowledgeBase(
        levels=(DetailLevel("a", "A", parent="b"), DetailLevel("b", "B", parent="a")),
        threats=(_threat("t", source="X", detail="zzz", agents=()),),
        equivalences=(Equivalence("p", "q"),),
    )
    codes = [v.code for v in validate_kb(kb)]
    assert codes.count("dangling-reference") >= 4
    assert "cyclic-detail-hierarchy" in codes
    assert "empty-agents" in codes


def test_soft_threat_with_hard_category():
    kb = KnowledgeBase(
        sources=(Source("U"),),
        levels=(DetailLevel("abstract", "Abstract"),),
        threats=(_threat("t", categories=(ThreatCategory.LINKABILITY,)),),
    )
    assert [v.code for v in validate_kb(kb)] == ["property-mismatch"]


def test_is_hypernym_of():
    kb = KnowledgeBase(
        levels=(
            DetailLevel("abstract", "Abstract"),
            DetailLevel("detailed", "Detailed", parent="abstract"),
            DetailLevel("measurable", "Measurable", parent="detailed"),
        )
    )
    assert is_hypernym_of(kb, "abstract", "detailed")
    assert not is_hypernym_of(kb, "detailed", "abstract")
    assert not is_hypernym_of(kb, "abstract", "abstract")
    assert is_hypernym_of(kb, "abstract", "measurable")
    with pytest.raises(KeyError):
        is_hypernym_of(kb, "abstract", "nope")


@st.composite
def level_forests(draw):
    n = draw(st.integers(1, 8))
    ids = [f"v{i}" for i in range(n)]
    # parents only point at earlier ids, so the links form a forest
    parents = {ids[i]: draw(st.sampled_from([None] + ids[:i])) for i in range(n)}
    return ids, parents


@given(level_forests())
def test_hypernym_matches_graph_walk(forest):
    ids, parents = forest
    kb = KnowledgeBase(levels=tuple(DetailLevel(i, i.upper(), parent=parents[i]) for i in ids))
    assert validate_kb(kb) == []
    plain = {k: v for k, v in parents.items() if v is not None}
    for a in ids:
        assert not is_hypernym_of(kb, a, a)
        for b in ids:
            assert is_hypernym_of(kb, a, b) == (a in ancestors_by_walk(plain, b))


@given(level_forests(), st.data())
def test_back_edge_always_reported_as_cycle(forest, data):
    ids, parents = forest
    # re-point one node at one of its own descendants (or itself)
    node = data.draw(st.sampled_from(ids))
    plain = {k: v for k, v in parents.items() if v is not None}
    descendants = [b for b in ids if node in ancestors_by_walk(plain, b)] + [node]
    parents = dict(parents, **{node: data.draw(st.sampled_from(descendants))})
    kb = KnowledgeBase(levels=tuple(DetailLevel(i, i, parent=parents[i]) for i in ids))
    assert "cyclic-detail-hierarchy" in {v.code for v in validate_kb(kb)}


def test_level_consistency():
    assert check_level_consistency([]).consistent
    same = [_threat("a"), _threat("b")]
    assert check_level_consistency(same).groups == ()
    mixed = check_level_consistency([_threat("a"), _threat("b", detail="detailed"), _threat("c")])
    assert mixed.groups == (("abstract", ("a", "c")), ("detailed", ("b",)))


def test_shipped_threats_share_one_level(shipped_kb):
    assert check_level_consistency(shipped_kb.threats).consistent


def test_property_partition(shipped_kb):
    soft = {t.id for t in shipped_kb.threats if t.property is PrivacyProperty.SOFT}
    hard = {t.id for t in shipped_kb.threats if t.property is PrivacyProperty.HARD}
    assert soft.isdisjoint(hard)
    assert soft | hard == {t.id for t in shipped_kb.threats}


def test_round_trip_shipped(tmp_path, shipped_kb):
    save_kb(shipped_kb, tmp_path / "copy")
    assert load_kb(tmp_path / "copy") == shipped_kb


def test_shipped_files_are_canonical(shipped_kb):
    # the shipped JSON is exactly what save_kb would write
    for name, rows in kb_to_json(shipped_kb).items():
        on_disk = json.loads((SHIPPED / f"{name}.json").read_text(encoding="utf-8"))
        assert _strip_defaults(on_disk) == _strip_defaults(rows), name


def _strip_defaults(rows):
    out = []
    for r in rows:
        r = dict(r)
        if r.get("cross_links") == []:
            r.pop("cross_links")
        if r.get("description") == "":
            r.pop("description")
        out.append(r)
    return out


_ids = st.text(alphabet="abcdefgh-_", min_size=1, max_size=6)
_text = st.text(min_size=0, max_size=20)


@st.composite
def small_kbs(draw):
    sources = tuple(Source(i, draw(_text)) for i in draw(st.lists(_ids, min_size=1, max_size=3, unique=True)))
    levels = (DetailLevel("abstract", "Abstract"), DetailLevel("detailed", "Detailed", parent="abstract"))
    threats = tuple(
        Threat(
            id=tid,
            name=draw(st.text(min_size=1, max_size=30)),
            source=draw(st.sampled_from(sources)).id,
            property=PrivacyProperty.SOFT,
            agents=tuple(draw(st.lists(st.sampled_from(list(ThreatAgent)), min_size=1, max_size=4, unique=True))),
            detail=draw(st.sampled_from(["abstract", "detailed"])),
            categories=tuple(
                draw(st.lists(st.sampled_from([ThreatCategory.UNAWARENESS, ThreatCategory.NON_COMPLIANCE]), unique=True))
            ),
            description=draw(_text),
            domain=draw(st.none() | st.just("automotive")),
        )
        for tid in draw(st.lists(_ids, max_size=5, unique=True))
    )
    return KnowledgeBase(sources=sources, levels=levels, threats=threats)


@settings(max_examples=40, deadline=None)
@given(small_kbs())
def test_round_trip_property(tmp_path_factory, kb):
    path = tmp_path_factory.mktemp("rt")
    save_kb(kb, path)
    assert parse_bundle(path) == kb
