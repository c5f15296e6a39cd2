import pytest

from fuseqa.kg import (
    KGError,
    TemplateTable,
    load_bundle,
    normalize_surface,
    parse_templates,
    parse_triples,
    relation_stats,
    validate_template,
    write_bundle,
)
from fuseqa.prng import uniform01


def test_basic_load():
    kg = parse_triples("a\tr1\tb\nb\tr2\tc")
    assert kg.n_entities == 3
    assert kg.n_relations == 2
    assert len(kg.triplets) == 2
    assert kg.out_adjacency[kg.lookup_entity("a")] == [0]


def test_missing_field_is_parse_error():
    with pytest.raises(KGError, match="line 1"):
        parse_triples("a\tr1")


def test_empty_field_is_parse_error():
    with pytest.raises(KGError, match="line 2"):
        parse_triples("a\tr1\tb\na\t\tb")


def test_empty_file_rejected():
    with pytest.raises(KGError, match="empty knowledge graph"):
        parse_triples("# only comments\n")


def test_comments_and_crlf_tolerated():
    kg = parse_triples("# header\r\na\tr1\tb\r\n")
    assert len(kg.triplets) == 1


def test_duplicate_lines_kept():
    kg = parse_triples("a\tr1\tb\na\tr1\tb")
    assert len(kg.triplets) == 2


def _random_lines(n, seed):
    u = uniform01(seed, 3 * n)
    lines = []
    for i in range(n):
        h = f"e{int(u[3 * i] * 10)}"
        r = f"r{int(u[3 * i + 1] * 4)}"
        t = f"e{int(u[3 * i + 2] * 10)}"
        lines.append(f"{h}\t{r}\t{t}")
    return lines


def test_adjacency_matches_brute_force():
    lines = _random_lines(50, seed=1)
    kg = parse_triples("\n".join(lines))
    # independent grouping pass over raw lines
    for eid in range(kg.n_entities):
        out = [t.id for t in kg.triplets if t.head == eid]
        inc = [t.id for t in kg.triplets if t.tail == eid]
        assert kg.out_adjacency[eid] == out
        assert kg.in_adjacency[eid] == inc
        degree = sum(
            (t.head == eid) + (t.tail == eid) for t in kg.triplets
        )
        assert len(kg.out_adjacency[eid]) + len(kg.in_adjacency[eid]) == degree


def test_relation_stats_counting():
    kg = parse_triples("a\tr1\tb\nb\tr1\tc\nc\tr2\td\nd\tr3\ta")
    stats = relation_stats(kg)
    freqs = {kg.relation_surface(r): stats.freq(r) for r in range(kg.n_relations)}
    assert freqs == {"r1": 0.5, "r2": 0.25, "r3": 0.25}


def test_relation_stats_single_triplet():
    kg = parse_triples("a\tr\tb")
    assert relation_stats(kg).freq(0) == 1.0


def test_relation_stats_recount_oracle():
    lines = _random_lines(200, seed=2)
    kg = parse_triples("\n".join(lines))
    stats = relation_stats(kg)
    counts = {}
    for line in lines:
        r = normalize_surface(line.split("\t")[1])
        counts[r] = counts.get(r, 0) + 1
    for rid in range(kg.n_relations):
        assert stats.freq(rid) == counts[kg.relation_surface(rid)] / 200
    assert abs(sum(stats.freqs()) - 1.0) <= 1e-12
    assert all(0.0 <= f <= 1.0 for f in stats.freqs())


def test_inverse_frequency_mode():
    kg = parse_triples("a\tr1\tb\nb\tr1\tc\nc\tr2\td")
    stats = relation_stats(kg)
    inv = [stats.freq(r, "inverse_frequency") for r in range(2)]
    assert abs(sum(inv) - 1.0) <= 1e-12
    assert inv[0] < inv[1]  # rarer relation weighs more


def test_lookup_entity_case_folding():
    kg = parse_triples("dog\tAtLocation\tkennel")
    assert kg.lookup_entity("Dog") == kg.lookup_entity("dog")


def test_lookup_entity_whitespace_collapse():
    kg = parse_triples("ice cream\tAtLocation\tshop")
    assert kg.lookup_entity(" ice  cream ") == kg.lookup_entity("ice cream")


def test_lookup_entity_absent():
    kg = parse_triples("a\tr\tb")
    assert kg.lookup_entity("zebra") is None


def test_round_trip_serialization():
    lines = _random_lines(50, seed=3)
    kg = parse_triples("\n".join(lines))
    kg2 = parse_triples(kg.to_triple_lines())
    assert kg2.entity_surfaces == kg.entity_surfaces
    assert kg2.relation_surfaces == kg.relation_surfaces
    assert kg2.triplets == kg.triplets
    assert kg2.out_adjacency == kg.out_adjacency
    assert kg2.in_adjacency == kg.in_adjacency


def test_template_validation():
    validate_template("{head} is located at {tail}")
    with pytest.raises(KGError):
        validate_template("{head} {head}")
    with pytest.raises(KGError):
        validate_template("{head} {tail} {other}")


def test_template_parse_and_default():
    kg = parse_triples("dog\tAtLocation\tkennel\ndog\tUsedFor\tguarding")
    table = parse_templates("AtLocation\t{head} is located at {tail}", kg)
    at_loc = kg.lookup_relation("AtLocation")
    used_for = kg.lookup_relation("UsedFor")
    assert table.template_for(at_loc, kg) == "{head} is located at {tail}"
    assert table.template_for(used_for, kg) == "{head} usedfor {tail}"


def test_bundle_round_trip(tmp_path):
    lines = _random_lines(30, seed=4)
    kg = parse_triples("\n".join(lines))
    table = parse_templates("r1\t{head} maps to {tail}", kg)
    path = tmp_path / "kg.bundle"
    write_bundle(kg, table, str(path))
    first = path.read_bytes()
    write_bundle(kg, table, str(path))
    assert path.read_bytes() == first  # deterministic rebuild
    kg2, table2 = load_bundle(str(path))
    assert kg2.triplets == kg.triplets
    assert table2.templates == table.templates
