#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "forge/errors.hpp"
#include "forge/path_sampler.hpp"
#include "helpers.hpp"

using namespace forge;
using forge::test::make_doc;
using forge::test::make_edge;
using forge::test::make_entity;

namespace {

// Chain A-B-C-D-E plus a spur B-F: enough shape for 1..3 hop walks.
KnowledgeGraph chain_graph() {
    KnowledgeGraph g("dom", TimeWindow{0, 1 << 30});
    const char* names[] = {"A", "B", "C", "D", "E", "F"};
    std::vector<std::string> ids;
    for (const char* n : names) {
        ids.push_back(g.add_entity(make_entity(n, "method", 100, "doc-1")));
    }
    g.add_edge(make_edge(ids[0], "uses", ids[1], 100, "doc-1"));
    g.add_edge(make_edge(ids[1], "uses", ids[2], 100, "doc-1"));
    g.add_edge(make_edge(ids[2], "uses", ids[3], 100, "doc-1"));
    g.add_edge(make_edge(ids[3], "uses", ids[4], 100, "doc-1"));
    g.add_edge(make_edge(ids[1], "extends", ids[5], 100, "doc-1"));
    return g;
}

// Star: hub H with five spokes, spokes otherwise degree 1.
KnowledgeGraph star_graph() {
    KnowledgeGraph g("dom", TimeWindow{0, 1 << 30});
    const std::string hub = g.add_entity(make_entity("Hub", "dataset", 100, "doc-1"));
    for (int i = 0; i < 5; ++i) {
        const std::string spoke =
            g.add_entity(make_entity("Spoke" + std::to_string(i), "method", 100, "doc-1"));
        g.add_edge(make_edge(spoke, "evaluates_on", hub, 100, "doc-1"));
    }
    return g;
}

SamplingPolicy uniform_policy(int k_min, int k_max) {
    SamplingPolicy p;
    p.k_min = k_min;
    p.k_max = k_max;
    p.bias = PathBias::Uniform;
    p.degree_percentile = 0.9;
    p.max_attempts = 200;
    return p;
}

void check_path_shape(const ReasoningPath& p, const KGSnapshot& snap) {
    REQUIRE(p.node_ids.size() == p.edge_ids.size() + 1);
    REQUIRE(p.directions.size() == p.edge_ids.size());

    std::set<std::string> distinct(p.node_ids.begin(), p.node_ids.end());
    CHECK(distinct.size() == p.node_ids.size()); // no revisits

    for (std::size_t i = 0; i < p.edge_ids.size(); ++i) {
        const RelationEdge* e = snap.edge(p.edge_ids[i]);
        REQUIRE(e != nullptr);
        if (p.directions[i] == HopDirection::Forward) {
            CHECK(e->subject_id == p.node_ids[i]);
            CHECK(e->object_id == p.node_ids[i + 1]);
        } else {
            CHECK(e->object_id == p.node_ids[i]);
            CHECK(e->subject_id == p.node_ids[i + 1]);
        }
    }
    CHECK_FALSE(p.evidence.empty());
    std::set<ProvenanceRef> seen(p.evidence.begin(), p.evidence.end());
    CHECK(seen.size() == p.evidence.size()); // deduplicated
    CHECK(p.as_of == snap.as_of());
}

} // namespace

TEST_CASE("hop directions round-trip and reject junk") {
    CHECK(hop_direction_name(HopDirection::Forward) == "forward");
    CHECK(hop_direction_name(HopDirection::Inverse) == "inverse");
    CHECK(hop_direction_from("forward") == HopDirection::Forward);
    CHECK(hop_direction_from("inverse") == HopDirection::Inverse);
    CHECK_THROWS_AS(hop_direction_from("sideways"), DataError);
}

TEST_CASE("sampled paths are well-formed walks") {
    const KnowledgeGraph g = chain_graph();
    const KGSnapshot snap = snapshot_at(g, 500);
    const SamplingPolicy policy = uniform_policy(1, 3);
    Rng rng(4242);

    int drawn = 0;
    for (int i = 0; i < 50; ++i) {
        const auto path = sample_path(snap, policy, rng);
        REQUIRE(path.has_value());
        check_path_shape(*path, snap);
        CHECK(path->k() >= 1);
        CHECK(path->k() <= 3);
        CHECK(path->policy_name == "uniform");
        ++drawn;
    }
    CHECK(drawn == 50);
}

TEST_CASE("k bounds are honored exactly") {
    const KnowledgeGraph g = chain_graph();
    const KGSnapshot snap = snapshot_at(g, 500);
    const SamplingPolicy policy = uniform_policy(2, 2);
    Rng rng(7);

    for (int i = 0; i < 30; ++i) {
        const auto path = sample_path(snap, policy, rng);
        REQUIRE(path.has_value());
        CHECK(path->k() == 2);
    }
}

TEST_CASE("sampling is reproducible for a fixed seed") {
    const KnowledgeGraph g = chain_graph();
    const KGSnapshot snap = snapshot_at(g, 500);
    const SamplingPolicy policy = uniform_policy(1, 3);

    auto draw_ten = [&](std::uint64_t seed) {
        Rng rng(seed);
        std::string trace;
        for (int i = 0; i < 10; ++i) {
            const auto p = sample_path(snap, policy, rng);
            REQUIRE(p.has_value());
            trace += path_to_json(*p).dump() + "\n";
        }
        return trace;
    };
    CHECK(draw_ten(99) == draw_ten(99));
    CHECK(draw_ten(99) != draw_ten(100));
}

TEST_CASE("a two-node graph cannot host a two-hop walk") {
    KnowledgeGraph g("dom", TimeWindow{0, 1 << 30});
    const std::string a = g.add_entity(make_entity("A", "method", 100, "doc-1"));
    const std::string b = g.add_entity(make_entity("B", "method", 100, "doc-1"));
    g.add_edge(make_edge(a, "uses", b, 100, "doc-1"));
    const KGSnapshot snap = snapshot_at(g, 500);

    Rng rng(1);
    CHECK_FALSE(sample_path(snap, uniform_policy(2, 2), rng).has_value());
}

TEST_CASE("isolated entities never start a walk") {
    KnowledgeGraph g("dom", TimeWindow{0, 1 << 30});
    const std::string a = g.add_entity(make_entity("A", "method", 100, "doc-1"));
    const std::string b = g.add_entity(make_entity("B", "method", 100, "doc-1"));
    const std::string lone = g.add_entity(make_entity("Lone", "method", 100, "doc-1"));
    g.add_edge(make_edge(a, "uses", b, 100, "doc-1"));
    const KGSnapshot snap = snapshot_at(g, 500);

    Rng rng(3);
    for (int i = 0; i < 20; ++i) {
        const auto p = sample_path(snap, uniform_policy(1, 1), rng);
        REQUIRE(p.has_value());
        CHECK(p->node_ids.front() != lone);
        CHECK(p->node_ids.back() != lone);
    }
}

TEST_CASE("high-degree bias requires a qualifying intermediate") {
    const KnowledgeGraph g = star_graph();
    const KGSnapshot snap = snapshot_at(g, 500);

    SamplingPolicy policy = uniform_policy(2, 2);
    policy.bias = PathBias::HighDegree;

    const std::size_t floor = snap.degree_quantile(policy.degree_percentile);
    CHECK(floor == 5); // the hub's degree sits at the 0.9 quantile

    Rng rng(11);
    for (int i = 0; i < 25; ++i) {
        const auto p = sample_path(snap, policy, rng);
        REQUIRE(p.has_value());
        REQUIRE(p->node_ids.size() == 3);
        CHECK(p->policy_name == "high_degree");
        // Spoke -> Hub -> Spoke is the only two-hop shape here.
        CHECK(snap.degree(p->node_ids[1]) >= floor);
        CHECK(snap.entity(p->node_ids[1])->name == "Hub");
    }
}

TEST_CASE("high-degree bias with k == 1 has no intermediates and exhausts") {
    const KnowledgeGraph g = star_graph();
    const KGSnapshot snap = snapshot_at(g, 500);

    SamplingPolicy policy = uniform_policy(1, 1);
    policy.bias = PathBias::HighDegree;
    policy.max_attempts = 50;

    Rng rng(5);
    CHECK_FALSE(sample_path(snap, policy, rng).has_value());
}

TEST_CASE("sample_path validates snapshot and policy") {
    const KnowledgeGraph g = chain_graph();
    const KGSnapshot snap = snapshot_at(g, 500);
    Rng rng(1);

    const KnowledgeGraph empty("dom", TimeWindow{0, 100});
    const KGSnapshot none = snapshot_at(empty, 50);
    CHECK_THROWS_AS(sample_path(none, uniform_policy(1, 1), rng), ContractViolation);

    SamplingPolicy p = uniform_policy(0, 1);
    CHECK_THROWS_AS(sample_path(snap, p, rng), ContractViolation);

    p = uniform_policy(3, 2);
    CHECK_THROWS_AS(sample_path(snap, p, rng), ContractViolation);

    p = uniform_policy(1, 1);
    p.degree_percentile = 1.0;
    CHECK_THROWS_AS(sample_path(snap, p, rng), ContractViolation);

    p = uniform_policy(1, 1);
    p.max_attempts = 0;
    CHECK_THROWS_AS(sample_path(snap, p, rng), ContractViolation);
}

// --- evidence gathering ----------------------------------------------------------------

TEST_CASE("gather_evidence dereferences spans in path order") {
    Corpus corpus;
    corpus.documents.push_back(make_doc("doc-1", "2025-01-10T00:00:00Z",
                              "AtlasRL evaluates on GridArena under standard settings."));
    corpus.documents.push_back(make_doc("doc-2", "2025-02-01T00:00:00Z",
                              "GridArena hosts long-horizon navigation tasks."));

    ReasoningPath path;
    path.path_id = "p00000";
    path.as_of = parse_rfc3339("2025-06-01T00:00:00Z");
    path.node_ids = {"e000000", "e000001"};
    path.edge_ids = {"r000000"};
    path.directions = {HopDirection::Forward};
    path.evidence = {{"doc-1", "body", 0, 7},
                     {"doc-1", "body", 0, 55},
                     {"doc-2", "body", 0, 9}};

    const auto items = gather_evidence(path, corpus);
    REQUIRE(items.size() == 3);
    CHECK(items[0].text == "AtlasRL");
    CHECK(items[1].text == "AtlasRL evaluates on GridArena under standard settings.");
    CHECK(items[2].text == "GridArena");
    CHECK(items[0].ref.doc_id == "doc-1");
}

TEST_CASE("gather_evidence drops documents newer than the snapshot") {
    Corpus corpus;
    corpus.documents.push_back(make_doc("doc-old", "2025-01-10T00:00:00Z", "old body text"));
    corpus.documents.push_back(make_doc("doc-new", "2025-05-10T00:00:00Z", "new body text"));

    ReasoningPath path;
    path.as_of = parse_rfc3339("2025-03-01T00:00:00Z");
    path.node_ids = {"e000000", "e000001"};
    path.edge_ids = {"r000000"};
    path.directions = {HopDirection::Forward};
    path.evidence = {{"doc-old", "body", 0, 3}, {"doc-new", "body", 0, 3}};

    const auto items = gather_evidence(path, corpus);
    REQUIRE(items.size() == 1);
    CHECK(items[0].ref.doc_id == "doc-old");
}

TEST_CASE("gather_evidence deduplicates repeated references") {
    Corpus corpus;
    corpus.documents.push_back(make_doc("doc-1", "2025-01-10T00:00:00Z", "some body text"));

    ReasoningPath path;
    path.as_of = parse_rfc3339("2025-03-01T00:00:00Z");
    path.evidence = {{"doc-1", "body", 0, 4}, {"doc-1", "body", 0, 4}};
    CHECK(gather_evidence(path, corpus).size() == 1);
}

TEST_CASE("gather_evidence treats broken references as store corruption") {
    Corpus corpus;
    corpus.documents.push_back(make_doc("doc-1", "2025-01-10T00:00:00Z", "short"));

    ReasoningPath path;
    path.as_of = parse_rfc3339("2025-03-01T00:00:00Z");

    SECTION("missing document") {
        path.evidence = {{"ghost", "body", 0, 3}};
        CHECK_THROWS_AS(gather_evidence(path, corpus), DataError);
    }
    SECTION("missing section") {
        path.evidence = {{"doc-1", "appendix", 0, 3}};
        CHECK_THROWS_AS(gather_evidence(path, corpus), DataError);
    }
    SECTION("span overruns the section") {
        path.evidence = {{"doc-1", "body", 0, 400}};
        CHECK_THROWS_AS(gather_evidence(path, corpus), DataError);
    }
    SECTION("inverted span") {
        path.evidence = {{"doc-1", "body", 4, 2}};
        CHECK_THROWS_AS(gather_evidence(path, corpus), DataError);
    }
}

// --- serialization -----------------------------------------------------------------------

TEST_CASE("paths round-trip through JSON") {
    ReasoningPath p;
    p.path_id = "p00042";
    p.as_of = parse_rfc3339("2025-03-14T09:26:53Z");
    p.node_ids = {"e000000", "e000003", "e000001"};
    p.edge_ids = {"r000002", "r000005"};
    p.directions = {HopDirection::Forward, HopDirection::Inverse};
    p.evidence = {{"doc-1", "body", 10, 20}, {"doc-2", "body", 0, 5}};
    p.policy_name = "high_degree";

    const Json j = path_to_json(p);
    CHECK(j.at("path_id") == "p00042");
    CHECK(j.at("as_of") == "2025-03-14T09:26:53Z");
    CHECK(j.at("policy") == "high_degree");
    CHECK(j.at("hop_directions") == Json({"forward", "inverse"}));

    const ReasoningPath back = path_from_json(j);
    CHECK(back.path_id == p.path_id);
    CHECK(back.as_of == p.as_of);
    CHECK(back.node_ids == p.node_ids);
    CHECK(back.edge_ids == p.edge_ids);
    CHECK(back.directions == p.directions);
    CHECK(back.evidence == p.evidence);
    CHECK(back.policy_name == p.policy_name);
}

TEST_CASE("path_from_json rejects inconsistent records") {
    ReasoningPath p;
    p.path_id = "p00001";
    p.as_of = 0;
    p.node_ids = {"e000000", "e000001"};
    p.edge_ids = {"r000000"};
    p.directions = {HopDirection::Forward};
    p.evidence = {{"doc-1", "body", 0, 5}};
    const Json good = path_to_json(p);

    Json bad = good;
    bad["nodes"] = Json::array({"e000000"});
    CHECK_THROWS_AS(path_from_json(bad), DataError);

    bad = good;
    bad["hop_directions"] = Json::array();
    CHECK_THROWS_AS(path_from_json(bad), DataError);

    bad = good;
    bad["relations"] = Json::array();
    bad["nodes"] = Json::array({"e000000"});
    bad["hop_directions"] = Json::array();
    CHECK_THROWS_AS(path_from_json(bad), DataError);

    bad = good;
    bad["hop_directions"] = Json::array({"sideways"});
    CHECK_THROWS_AS(path_from_json(bad), DataError);

    bad = good;
    bad.erase("path_id");
    CHECK_THROWS_AS(path_from_json(bad), DataError);
}
