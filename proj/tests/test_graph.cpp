#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>

#include "forge/errors.hpp"
#include "forge/graph.hpp"
#include "forge/rng.hpp"
#include "helpers.hpp"

using namespace forge;
using forge::test::TempDir;
using forge::test::make_edge;
using forge::test::make_entity;
using forge::test::ref;

namespace {

// A small fixed graph: four entities, three edges, staggered first_seen.
//   e0 --r0(t=100)--> e1 --r1(t=200)--> e2,  e0 --r2(t=300)--> e3
struct SmallGraph {
    KnowledgeGraph g{"dom", TimeWindow{0, 1000}};
    std::string e0, e1, e2, e3, r0, r1, r2;

    SmallGraph() {
        e0 = g.add_entity(make_entity("Alpha", "method", 100, "d1"));
        e1 = g.add_entity(make_entity("Beta", "dataset", 100, "d1"));
        e2 = g.add_entity(make_entity("Gamma", "metric", 200, "d2"));
        e3 = g.add_entity(make_entity("Delta", "task", 300, "d3"));
        r0 = g.add_edge(make_edge(e0, "evaluates_on", e1, 100, "d1"));
        r1 = g.add_edge(make_edge(e1, "reports", e2, 200, "d2"));
        r2 = g.add_edge(make_edge(e0, "addresses", e3, 300, "d3"));
    }
};

} // namespace

// --- mutation and lookup -----------------------------------------------------------

TEST_CASE("ids encode creation order") {
    SmallGraph s;
    CHECK(s.e0 == "e000000");
    CHECK(s.e1 == "e000001");
    CHECK(s.r0 == "r000000");
    CHECK(s.g.entity_count() == 4);
    CHECK(s.g.edge_count() == 3);
    CHECK(s.g.find_entity(s.e2)->name == "Gamma");
    CHECK(s.g.find_edge(s.r1)->predicate == "reports");
    CHECK(s.g.find_entity("e999999") == nullptr);
}

TEST_CASE("add_entity and add_edge enforce their contracts") {
    KnowledgeGraph g("dom", TimeWindow{0, 1000});
    Entity nameless = make_entity("", "method", 0, "d1");
    CHECK_THROWS_AS(g.add_entity(nameless), ContractViolation);

    Entity no_prov = make_entity("X", "method", 0, "d1");
    no_prov.provenance.clear();
    CHECK_THROWS_AS(g.add_entity(no_prov), ContractViolation);

    const std::string a = g.add_entity(make_entity("A", "method", 0, "d1"));
    RelationEdge dangling = make_edge(a, "uses", "e000077", 0, "d1");
    CHECK_THROWS_AS(g.add_edge(dangling), ContractViolation);

    RelationEdge no_evidence = make_edge(a, "uses", a, 0, "d1");
    no_evidence.evidence.clear();
    CHECK_THROWS_AS(g.add_edge(no_evidence), ContractViolation);
}

TEST_CASE("find_edge_by_key locates the reinforcement target") {
    SmallGraph s;
    RelationEdge* e = s.g.find_edge_by_key(s.e0, "evaluates_on", s.e1);
    REQUIRE(e != nullptr);
    CHECK(e->edge_id == s.r0);
    CHECK(s.g.find_edge_by_key(s.e0, "uses", s.e1) == nullptr);
    CHECK(s.g.find_edge_by_key(s.e1, "evaluates_on", s.e0) == nullptr); // direction matters
}

TEST_CASE("latest_evidence_time tracks the newest edge evidence") {
    SmallGraph s;
    CHECK(s.g.latest_evidence_time() == 300);
    KnowledgeGraph empty("dom", TimeWindow{0, 1});
    CHECK(empty.latest_evidence_time() == 0);
}

// --- snapshots ---------------------------------------------------------------------

TEST_CASE("snapshot_at slices entities and edges by first_seen") {
    SmallGraph s;

    const KGSnapshot at150 = snapshot_at(s.g, 150);
    CHECK(at150.entity_count() == 2); // Alpha, Beta
    CHECK(at150.edge_count() == 1);   // r0 only
    CHECK(at150.entity(s.e2) == nullptr);

    const KGSnapshot at250 = snapshot_at(s.g, 250);
    CHECK(at250.entity_count() == 3);
    CHECK(at250.edge_count() == 2);

    const KGSnapshot all = snapshot_at(s.g, 1000);
    CHECK(all.entity_count() == 4);
    CHECK(all.edge_count() == 3);
}

TEST_CASE("snapshots grow monotonically with time") {
    // Randomized nesting property: for any t1 <= t2 the earlier snapshot's
    // id sets are subsets of the later one's.
    Rng rng(20250816);
    KnowledgeGraph g("dom", TimeWindow{0, 10000});
    std::vector<std::string> ids;
    for (int i = 0; i < 40; ++i) {
        ids.push_back(g.add_entity(
            make_entity("E" + std::to_string(i), "t", static_cast<Timestamp>(rng.below(9000)),
                        "d" + std::to_string(i))));
    }
    for (int i = 0; i < 120; ++i) {
        const auto& a = ids[rng.below(ids.size())];
        const auto& b = ids[rng.below(ids.size())];
        if (a == b || g.find_edge_by_key(a, "uses", b)) continue;
        const Timestamp t = std::max(g.find_entity(a)->first_seen, g.find_entity(b)->first_seen) +
                            static_cast<Timestamp>(rng.below(500));
        g.add_edge(make_edge(a, "uses", b, t, "dx"));
    }

    auto id_sets = [](const KGSnapshot& s) {
        std::set<std::string> es, rs;
        for (const auto& e : s.entities()) es.insert(e.entity_id);
        for (const auto& r : s.edges()) rs.insert(r.edge_id);
        return std::make_pair(es, rs);
    };

    for (int trial = 0; trial < 25; ++trial) {
        Timestamp t1 = static_cast<Timestamp>(rng.below(10000));
        Timestamp t2 = static_cast<Timestamp>(rng.below(10000));
        if (t1 > t2) std::swap(t1, t2);
        const auto [e1, r1] = id_sets(snapshot_at(g, t1));
        const auto [e2, r2] = id_sets(snapshot_at(g, t2));
        CHECK(std::includes(e2.begin(), e2.end(), e1.begin(), e1.end()));
        CHECK(std::includes(r2.begin(), r2.end(), r1.begin(), r1.end()));
    }
}

TEST_CASE("snapshot edges never dangle") {
    // An edge whose endpoint arrives later than the edge stays out until
    // both ends exist.
    KnowledgeGraph g("dom", TimeWindow{0, 1000});
    const auto a = g.add_entity(make_entity("A", "m", 100, "d1"));
    const auto b = g.add_entity(make_entity("B", "m", 500, "d2"));
    RelationEdge e = make_edge(a, "uses", b, 200, "d1"); // evidence precedes B's entity record
    e.first_seen = 200;
    g.add_edge(e);

    const KGSnapshot mid = snapshot_at(g, 300);
    CHECK(mid.entity_count() == 1);
    CHECK(mid.edge_count() == 0);

    const KGSnapshot late = snapshot_at(g, 600);
    CHECK(late.edge_count() == 1);
}

TEST_CASE("incident edges are sorted and degree counts them") {
    SmallGraph s;
    const KGSnapshot snap = snapshot_at(s.g, 1000);
    const auto& inc = snap.incident_edges(s.e0);
    CHECK(inc == std::vector<std::string>{s.r0, s.r2});
    CHECK(snap.degree(s.e0) == 2);
    CHECK(snap.degree(s.e2) == 1);
    CHECK_THROWS_AS(snap.incident_edges("e999999"), NotFoundError);
}

TEST_CASE("degree_quantile uses the nearest-rank rule") {
    SmallGraph s;
    const KGSnapshot snap = snapshot_at(s.g, 1000);
    // Degrees: e0=2, e1=2, e2=1, e3=1 -> sorted [1, 1, 2, 2].
    CHECK(snap.degree_quantile(0.25) == 1);
    CHECK(snap.degree_quantile(0.5) == 1);
    CHECK(snap.degree_quantile(0.75) == 2);
    CHECK(snap.degree_quantile(0.9) == 2);
}

TEST_CASE("neighborhood ranks facts by confidence with edge-id tie-breaks") {
    SmallGraph s;
    s.g.mutable_edge(s.r0)->confidence = 0.9;
    s.g.mutable_edge(s.r1)->confidence = 0.4;
    s.g.mutable_edge(s.r2)->confidence = 0.9;
    const KGSnapshot snap = snapshot_at(s.g, 1000);

    const auto one_hop = snap.neighborhood(s.e0, 1);
    REQUIRE(one_hop.size() == 2);
    CHECK(one_hop[0].edge_id == s.r0); // 0.9, lower edge id
    CHECK(one_hop[1].edge_id == s.r2);
    CHECK(one_hop[0].subject_name == "Alpha");
    CHECK(one_hop[0].object_name == "Beta");

    const auto two_hop = snap.neighborhood(s.e0, 2);
    CHECK(two_hop.size() == 3);
    CHECK(snap.neighborhood(s.e0, 0).empty());
}

// --- persistence ---------------------------------------------------------------------

TEST_CASE("persist and load round-trip the whole store") {
    SmallGraph s;
    s.g.mutable_entity(s.e0)->aliases.insert("AlphaNet");
    TempDir tmp;
    persist_graph(s.g, tmp.path);

    const KnowledgeGraph back = load_graph(tmp.path);
    CHECK(back.domain_id() == "dom");
    CHECK(back.window().end == 1000);
    CHECK(back.entity_count() == 4);
    CHECK(back.edge_count() == 3);
    CHECK(back.find_entity(s.e0)->aliases.count("AlphaNet") == 1);
    CHECK(back.find_edge(s.r2)->predicate == "addresses");
    CHECK(back.find_edge(s.r2)->evidence.size() == 1);

    // Serialization is stable: persisting the loaded graph gives identical bytes.
    TempDir tmp2;
    persist_graph(back, tmp2.path);
    CHECK(read_text_file(tmp.path / "entities.jsonl") ==
          read_text_file(tmp2.path / "entities.jsonl"));
    CHECK(read_text_file(tmp.path / "relations.jsonl") ==
          read_text_file(tmp2.path / "relations.jsonl"));
}

TEST_CASE("load_graph rejects inconsistent stores") {
    SmallGraph s;
    TempDir tmp;
    persist_graph(s.g, tmp.path);

    SECTION("schema version mismatch") {
        Json manifest = read_json_file(tmp.path / "manifest.json");
        manifest["schema_version"] = 999;
        write_json_file(tmp.path / "manifest.json", manifest);
        CHECK_THROWS_AS(load_graph(tmp.path), DataError);
    }
    SECTION("dangling edge endpoint") {
        auto rows = read_jsonl(tmp.path / "entities.jsonl");
        rows.pop_back(); // drop Delta, leaving r2 dangling
        write_jsonl(tmp.path / "entities.jsonl", rows);
        CHECK_THROWS_AS(load_graph(tmp.path), DataError);
    }
    SECTION("missing files") {
        TempDir empty;
        CHECK_THROWS_AS(load_graph(empty.path), DataError);
    }
}

TEST_CASE("entity and edge json round-trips preserve provenance order") {
    Entity e = make_entity("Alpha", "method", 100, "d1");
    e.entity_id = "e000000";
    e.provenance.push_back(ref("d2", 5, 9));
    e.aliases = {"A1", "A2"};
    const Entity back = entity_from_json(entity_to_json(e));
    CHECK(back.name == "Alpha");
    CHECK(back.aliases == e.aliases);
    REQUIRE(back.provenance.size() == 2);
    CHECK(back.provenance[1].doc_id == "d2");

    RelationEdge r = make_edge("e000000", "uses", "e000001", 50, "d1");
    r.edge_id = "r000000";
    r.frequency = 3;
    r.confidence = 0.75;
    const RelationEdge rback = edge_from_json(edge_to_json(r));
    CHECK(rback.frequency == 3);
    CHECK(rback.confidence == Catch::Approx(0.75));
    CHECK(rback.first_seen == 50);
}
