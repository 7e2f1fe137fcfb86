#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdio>
#include <set>

#include "forge/errors.hpp"
#include "forge/qa_generator.hpp"
#include "forge/text.hpp"
#include "helpers.hpp"

using namespace forge;
using forge::test::make_doc;
using forge::test::make_edge;
using forge::test::make_entity;
using forge::test::MockRig;

namespace {

constexpr const char* kAsOf = "2025-06-01T00:00:00Z";

// Two documents, four entities, two edges:
//   AtlasRL -evaluates_on-> GridArena <-evaluates_on- PolicyForge, plus an
//   unconnected MazeBench that only the counterfactual checks care about.
struct QaFixture {
    KnowledgeGraph graph{"dom", TimeWindow{0, parse_rfc3339("2026-01-01T00:00:00Z")}};
    Corpus corpus;
    std::string atlas, grid, policy, maze;
    std::string r_atlas_grid, r_policy_grid;

    QaFixture() {
        corpus.documents.push_back(
            make_doc("doc-1", "2025-01-10T09:00:00Z",
                     "AtlasRL evaluates on GridArena under the standard protocol."));
        corpus.documents.push_back(
            make_doc("doc-2", "2025-03-05T12:00:00Z",
                     "PolicyForge evaluates on GridArena in follow-up studies."));

        const Timestamp t1 = parse_rfc3339("2025-01-10T09:00:00Z");
        const Timestamp t2 = parse_rfc3339("2025-03-05T12:00:00Z");
        atlas = graph.add_entity(make_entity("AtlasRL", "method", t1, "doc-1"));
        Entity g = make_entity("GridArena", "dataset", t1, "doc-1");
        g.aliases.insert("Grid Arena Suite");
        grid = graph.add_entity(std::move(g));
        policy = graph.add_entity(
            make_entity("PolicyForge", "method", parse_rfc3339("2025-04-01T00:00:00Z"), "doc-2"));
        maze = graph.add_entity(make_entity("MazeBench", "dataset", t1, "doc-1"));
        r_atlas_grid = graph.add_edge(make_edge(atlas, "evaluates_on", grid, t1, "doc-1"));
        r_policy_grid = graph.add_edge(make_edge(policy, "evaluates_on", grid, t2, "doc-2"));
    }

    KGSnapshot snap() const { return snapshot_at(graph, parse_rfc3339(kAsOf)); }

    ReasoningPath single_path() const {
        ReasoningPath p;
        p.path_id = "p00000";
        p.as_of = parse_rfc3339(kAsOf);
        p.node_ids = {atlas, grid};
        p.edge_ids = {r_atlas_grid};
        p.directions = {HopDirection::Forward};
        p.evidence = {{"doc-1", "body", 0, 20}, {"doc-1", "body", 21, 30}};
        p.policy_name = "uniform";
        return p;
    }

    ReasoningPath multi_path() const {
        ReasoningPath p;
        p.path_id = "p00001";
        p.as_of = parse_rfc3339(kAsOf);
        p.node_ids = {atlas, grid, policy};
        p.edge_ids = {r_atlas_grid, r_policy_grid};
        p.directions = {HopDirection::Forward, HopDirection::Inverse};
        p.evidence = {{"doc-1", "body", 0, 20}, {"doc-2", "body", 0, 11}};
        p.policy_name = "uniform";
        return p;
    }
};

GenerationOptions make_options() {
    GenerationOptions o;
    for (QuestionType t : all_question_types()) {
        o.templates[t] =
            "Write one QA pair.\n\nExamples:\n{{exemplars}}\nPath:\n{{path_block}}\n\n"
            "Evidence:\n{{evidence}}\n";
        o.exemplars.push_back({t, "Example question for " + question_type_name(t) + "?",
                               "Example answer."});
    }
    o.exemplars_per_type = 1;
    o.model_id = "mock";
    return o;
}

PerturbationDescriptor predicate_swap() {
    PerturbationDescriptor d;
    d.kind = "predicate";
    d.element_index = 1;
    d.original = "evaluates_on";
    d.perturbed = "uses";
    return d;
}

} // namespace

// --- type plumbing -----------------------------------------------------------------------

TEST_CASE("question type names round-trip") {
    const std::vector<std::string> expected = {"single_hop",          "single_hop_conditional",
                                               "multi_hop",           "multi_hop_difficult",
                                               "counterfactual",      "open_ended"};
    REQUIRE(all_question_types().size() == 6);
    for (std::size_t i = 0; i < expected.size(); ++i) {
        CHECK(question_type_name(all_question_types()[i]) == expected[i]);
        CHECK(question_type_from(expected[i]) == all_question_types()[i]);
    }
    CHECK_THROWS_AS(question_type_from("essay"), DataError);
}

TEST_CASE("type/k compatibility matrix") {
    CHECK(type_compatible(QuestionType::SingleHop, 1));
    CHECK_FALSE(type_compatible(QuestionType::SingleHop, 2));
    CHECK(type_compatible(QuestionType::SingleHopConditional, 1));
    CHECK_FALSE(type_compatible(QuestionType::SingleHopConditional, 3));
    CHECK_FALSE(type_compatible(QuestionType::MultiHop, 1));
    CHECK(type_compatible(QuestionType::MultiHop, 2));
    CHECK(type_compatible(QuestionType::MultiHopDifficult, 3));
    CHECK_FALSE(type_compatible(QuestionType::MultiHopDifficult, 1));
    CHECK(type_compatible(QuestionType::Counterfactual, 1));
    CHECK(type_compatible(QuestionType::Counterfactual, 3));
    CHECK(type_compatible(QuestionType::OpenEnded, 1));
    CHECK(type_compatible(QuestionType::OpenEnded, 2));
}

// --- path block --------------------------------------------------------------------------

TEST_CASE("path_block lays out nodes, hops, and trailers") {
    const QaFixture fx;
    const KGSnapshot snap = fx.snap();

    const std::string plain =
        path_block(fx.single_path(), QuestionType::SingleHop, snap, 2, "", std::nullopt);
    CHECK(plain ==
          "[PATH]\n"
          "qtype: single_hop\n"
          "k: 1\n"
          "node0: AtlasRL | method\n"
          "hop1: evaluates_on | forward\n"
          "node1: GridArena | dataset\n"
          "evidence_count: 2\n"
          "[/PATH]");

    const std::string dressed =
        path_block(fx.single_path(), QuestionType::SingleHopConditional, snap, 2,
                   "according to records dated 2025-01", predicate_swap());
    CHECK(dressed.find("condition: according to records dated 2025-01\n") != std::string::npos);
    CHECK(dressed.find("perturbation: predicate | 1 | evaluates_on | uses\n") !=
          std::string::npos);

    const std::string multi =
        path_block(fx.multi_path(), QuestionType::MultiHop, snap, 2, "", std::nullopt);
    CHECK(multi.find("k: 2\n") != std::string::npos);
    CHECK(multi.find("hop2: evaluates_on | inverse\n") != std::string::npos);
    CHECK(multi.find("node2: PolicyForge | method\n") != std::string::npos);
}

TEST_CASE("path_block escapes field separators in names") {
    KnowledgeGraph g("dom", TimeWindow{0, 1 << 30});
    const std::string a = g.add_entity(make_entity("Weird|Name", "method", 100, "doc-1"));
    const std::string b = g.add_entity(make_entity("Plain", "dataset", 100, "doc-1"));
    const std::string r = g.add_edge(make_edge(a, "uses", b, 100, "doc-1"));
    const KGSnapshot snap = snapshot_at(g, 500);

    ReasoningPath p;
    p.as_of = 500;
    p.node_ids = {a, b};
    p.edge_ids = {r};
    p.directions = {HopDirection::Forward};

    const std::string block = path_block(p, QuestionType::SingleHop, snap, 1, "", std::nullopt);
    CHECK(block.find("node0: Weird/Name | method\n") != std::string::npos);
    CHECK(block.find("Weird|Name") == std::string::npos);
}

// --- conditions --------------------------------------------------------------------------

TEST_CASE("derive_condition names the month of the latest usable document") {
    const QaFixture fx;

    SECTION("latest evidence document wins") {
        ReasoningPath p = fx.multi_path(); // doc-1 (2025-01) and doc-2 (2025-03)
        CHECK(derive_condition(p, fx.corpus) == "according to records dated 2025-03");
    }
    SECTION("documents newer than as_of are ignored") {
        ReasoningPath p = fx.multi_path();
        p.as_of = parse_rfc3339("2025-02-01T00:00:00Z"); // doc-2 not yet submitted
        CHECK(derive_condition(p, fx.corpus) == "according to records dated 2025-01");
    }
    SECTION("no usable documents falls back to the snapshot time") {
        ReasoningPath p = fx.single_path();
        p.evidence = {{"ghost", "body", 0, 5}};
        CHECK(derive_condition(p, fx.corpus) == "according to records dated 2025-06");
    }
}

// --- generation: the six types against the synthesizer ------------------------------------

TEST_CASE("single-hop generation produces a grounded pair") {
    const QaFixture fx;
    MockRig rig;
    QaGenerator gen(rig.gateway, make_options());

    const auto out = gen.generate(fx.single_path(), QuestionType::SingleHop, "qa00007",
                                  fx.snap(), fx.corpus);
    REQUIRE(std::holds_alternative<QAPair>(out));
    const QAPair& qa = std::get<QAPair>(out);
    CHECK(qa.qa_id == "qa00007");
    CHECK(qa.domain_id == "dom");
    CHECK(qa.qtype == QuestionType::SingleHop);
    CHECK(qa.question == "Which dataset does AtlasRL run evaluations on?");
    CHECK(qa.answer == "GridArena");
    CHECK(qa.path_id == "p00000");
    CHECK(qa.prompt_tag == "genqa:single_hop:qa00007");
    CHECK(qa.model_id == "mock");
    CHECK(qa.evidence_refs.size() == 2);
    CHECK(qa.issue_time == parse_rfc3339("2025-01-10T09:00:00Z"));
}

TEST_CASE("inverse single-hop phrasing flips around the start entity") {
    const QaFixture fx;
    MockRig rig;
    QaGenerator gen(rig.gateway, make_options());

    ReasoningPath p = fx.single_path();
    p.node_ids = {fx.grid, fx.atlas};
    p.directions = {HopDirection::Inverse};

    const auto out = gen.generate(p, QuestionType::SingleHop, "qa00008", fx.snap(), fx.corpus);
    REQUIRE(std::holds_alternative<QAPair>(out));
    const QAPair& qa = std::get<QAPair>(out);
    CHECK(qa.question == "Which method runs evaluations on GridArena?");
    CHECK(qa.answer == "AtlasRL");
}

TEST_CASE("conditional single-hop carries the dated condition") {
    const QaFixture fx;
    MockRig rig;
    QaGenerator gen(rig.gateway, make_options());

    const auto out = gen.generate(fx.single_path(), QuestionType::SingleHopConditional,
                                  "qa00009", fx.snap(), fx.corpus);
    REQUIRE(std::holds_alternative<QAPair>(out));
    const QAPair& qa = std::get<QAPair>(out);
    CHECK(qa.question ==
          "Which dataset does AtlasRL run evaluations on according to records dated 2025-01?");
    CHECK(qa.answer == "GridArena");
}

TEST_CASE("multi-hop generation walks both directions") {
    const QaFixture fx;
    MockRig rig;
    QaGenerator gen(rig.gateway, make_options());

    const auto out =
        gen.generate(fx.multi_path(), QuestionType::MultiHop, "qa00010", fx.snap(), fx.corpus);
    REQUIRE(std::holds_alternative<QAPair>(out));
    const QAPair& qa = std::get<QAPair>(out);
    CHECK(qa.question ==
          "Starting from AtlasRL, which method is reached after 2 steps: moving forward along "
          "'evaluates_on', then moving backward along 'evaluates_on'?");
    CHECK(qa.answer == "PolicyForge");
    // issue time tracks the freshest supporting document
    CHECK(qa.issue_time == parse_rfc3339("2025-03-05T12:00:00Z"));
}

TEST_CASE("counterfactual generation quotes the perturbation") {
    const QaFixture fx;
    MockRig rig;
    QaGenerator gen(rig.gateway, make_options());

    const auto out = gen.generate(fx.single_path(), QuestionType::Counterfactual, "qa00011",
                                  fx.snap(), fx.corpus, predicate_swap());
    REQUIRE(std::holds_alternative<QAPair>(out));
    const QAPair& qa = std::get<QAPair>(out);
    CHECK(qa.question ==
          "Suppose the record showed 'uses' instead of 'evaluates_on' on that step: would the "
          "documented connection from AtlasRL to GridArena still be supported, and why?");
    CHECK(qa.answer ==
          "No. The evidence records 'evaluates_on' on that step, not 'uses', so the documented "
          "chain from AtlasRL to GridArena no longer holds under that change.");
    CHECK(qa.issue_time == parse_rfc3339("2025-01-10T09:00:00Z")); // predicate swap: no bump
}

TEST_CASE("entity-swap counterfactuals wait for the stand-in entity") {
    const QaFixture fx;
    MockRig rig;
    QaGenerator gen(rig.gateway, make_options());

    PerturbationDescriptor d;
    d.kind = "entity";
    d.element_index = 0;
    d.original = "AtlasRL";
    d.perturbed = "PolicyForge";
    d.perturbed_entity_id = fx.policy;

    const auto out = gen.generate(fx.single_path(), QuestionType::Counterfactual, "qa00012",
                                  fx.snap(), fx.corpus, d);
    REQUIRE(std::holds_alternative<QAPair>(out));
    const QAPair& qa = std::get<QAPair>(out);
    CHECK(qa.question ==
          "Suppose PolicyForge stood in for AtlasRL on this chain: would the documented "
          "connection from AtlasRL to GridArena still be supported, and why?");
    // Evidence is from 2025-01, but PolicyForge only enters the record later;
    // the pair is not answerable before that.
    CHECK(qa.issue_time == parse_rfc3339("2025-04-01T00:00:00Z"));
}

TEST_CASE("open-ended generation describes the chain") {
    const QaFixture fx;
    MockRig rig;
    QaGenerator gen(rig.gateway, make_options());

    const auto out = gen.generate(fx.single_path(), QuestionType::OpenEnded, "qa00013",
                                  fx.snap(), fx.corpus);
    REQUIRE(std::holds_alternative<QAPair>(out));
    const QAPair& qa = std::get<QAPair>(out);
    CHECK(qa.question == "Drawing only on the published record, how does AtlasRL relate to "
                         "GridArena?");
    CHECK(qa.answer == "AtlasRL reaches GridArena through 1 documented step ('evaluates_on'); "
                       "the cited records describe each link directly.");
}

// --- abstention paths ----------------------------------------------------------------------

TEST_CASE("generation abstains when no evidence survives the time filter") {
    const QaFixture fx;
    MockRig rig;
    QaGenerator gen(rig.gateway, make_options());

    ReasoningPath p = fx.single_path();
    p.as_of = parse_rfc3339("2025-01-01T00:00:00Z"); // before doc-1 exists
    const auto out = gen.generate(p, QuestionType::SingleHop, "qa-early", fx.snap(), fx.corpus);
    REQUIRE(std::holds_alternative<Abstention>(out));
    CHECK(std::get<Abstention>(out).reason == "no-evidence");
    CHECK(rig.ledger->stages().count("genqa") == 0); // abstained before any call
}

TEST_CASE("generation abstains when the model does") {
    const QaFixture fx;
    MockRig rig(256, Json{{"genqa:single_hop:qa-a",
                           R"({"question": "", "answer": "", "abstain": true})"}});
    QaGenerator gen(rig.gateway, make_options());
    const auto out =
        gen.generate(fx.single_path(), QuestionType::SingleHop, "qa-a", fx.snap(), fx.corpus);
    REQUIRE(std::holds_alternative<Abstention>(out));
    CHECK(std::get<Abstention>(out).reason == "model-abstained");
}

TEST_CASE("generation abstains after an unparseable reply and failed repair") {
    const QaFixture fx;
    MockRig rig(256, Json{{"genqa:open_ended:qa-u", "not json at all"},
                          {"genqa:open_ended:qa-u:retry", "still not json"}});
    QaGenerator gen(rig.gateway, make_options());
    const auto out =
        gen.generate(fx.single_path(), QuestionType::OpenEnded, "qa-u", fx.snap(), fx.corpus);
    REQUIRE(std::holds_alternative<Abstention>(out));
    CHECK(std::get<Abstention>(out).reason == "unparseable-reply");
    CHECK(rig.ledger->stages().at("genqa").calls == 2);
}

TEST_CASE("generation recovers when the repair retry parses") {
    const QaFixture fx;
    // First reply is garbage; the retry falls through to the synthesizer,
    // which reads the path block restated in the repair message.
    MockRig rig(256, Json{{"genqa:open_ended:qa-r", "garbage"}});
    QaGenerator gen(rig.gateway, make_options());
    const auto out =
        gen.generate(fx.single_path(), QuestionType::OpenEnded, "qa-r", fx.snap(), fx.corpus);
    REQUIRE(std::holds_alternative<QAPair>(out));
    CHECK(std::get<QAPair>(out).question ==
          "Drawing only on the published record, how does AtlasRL relate to GridArena?");
}

TEST_CASE("generation abstains on empty output") {
    const QaFixture fx;
    MockRig rig(256, Json{{"genqa:single_hop:qa-e",
                           R"({"question": "   ", "answer": "x", "abstain": false})"}});
    QaGenerator gen(rig.gateway, make_options());
    const auto out =
        gen.generate(fx.single_path(), QuestionType::SingleHop, "qa-e", fx.snap(), fx.corpus);
    REQUIRE(std::holds_alternative<Abstention>(out));
    CHECK(std::get<Abstention>(out).reason == "empty-output");
}

TEST_CASE("entity answers must name the terminal entity") {
    const QaFixture fx;
    MockRig rig(256,
                Json{{"genqa:single_hop:qa-g",
                      R"({"question": "Which dataset?", "answer": "MazeBench", "abstain": false})"}});
    QaGenerator gen(rig.gateway, make_options());
    const auto out =
        gen.generate(fx.single_path(), QuestionType::SingleHop, "qa-g", fx.snap(), fx.corpus);
    REQUIRE(std::holds_alternative<Abstention>(out));
    CHECK(std::get<Abstention>(out).reason == "ungrounded-answer");
}

TEST_CASE("answers are pinned to the canonical surface form") {
    const QaFixture fx;

    SECTION("case and punctuation variants of the name") {
        MockRig rig(256, Json{{"genqa:single_hop:qa-p",
                               R"({"question": "Which dataset?", "answer": "gridarena.",
                                   "abstain": false})"}});
        QaGenerator gen(rig.gateway, make_options());
        const auto out = gen.generate(fx.single_path(), QuestionType::SingleHop, "qa-p",
                                      fx.snap(), fx.corpus);
        REQUIRE(std::holds_alternative<QAPair>(out));
        CHECK(std::get<QAPair>(out).answer == "GridArena");
    }
    SECTION("aliases are accepted but rewritten") {
        MockRig rig(256, Json{{"genqa:single_hop:qa-q",
                               R"({"question": "Which dataset?", "answer": "grid arena suite",
                                   "abstain": false})"}});
        QaGenerator gen(rig.gateway, make_options());
        const auto out = gen.generate(fx.single_path(), QuestionType::SingleHop, "qa-q",
                                      fx.snap(), fx.corpus);
        REQUIRE(std::holds_alternative<QAPair>(out));
        CHECK(std::get<QAPair>(out).answer == "GridArena");
    }
}

TEST_CASE("multi-hop questions must not leak intermediates") {
    const QaFixture fx;
    MockRig rig(256,
                Json{{"genqa:multi_hop:qa-l",
                      R"({"question": "Starting from AtlasRL via GridArena, which method?",
                          "answer": "PolicyForge", "abstain": false})"}});
    QaGenerator gen(rig.gateway, make_options());
    const auto out =
        gen.generate(fx.multi_path(), QuestionType::MultiHop, "qa-l", fx.snap(), fx.corpus);
    REQUIRE(std::holds_alternative<Abstention>(out));
    CHECK(std::get<Abstention>(out).reason == "intermediate-leak");
}

TEST_CASE("counterfactual answers cannot smuggle in unrelated entities") {
    const QaFixture fx;
    MockRig rig(256,
                Json{{"genqa:counterfactual:qa-s",
                      R"({"question": "Suppose uses stood in: still supported?",
                          "answer": "No, because MazeBench shows otherwise.",
                          "abstain": false})"}});
    QaGenerator gen(rig.gateway, make_options());
    const auto out = gen.generate(fx.single_path(), QuestionType::Counterfactual, "qa-s",
                                  fx.snap(), fx.corpus, predicate_swap());
    REQUIRE(std::holds_alternative<Abstention>(out));
    CHECK(std::get<Abstention>(out).reason == "unsupported-entity");
}

// --- contracts -----------------------------------------------------------------------------

TEST_CASE("generate enforces its preconditions") {
    const QaFixture fx;
    MockRig rig;
    QaGenerator gen(rig.gateway, make_options());
    const KGSnapshot snap = fx.snap();

    CHECK_THROWS_AS(gen.generate(fx.single_path(), QuestionType::MultiHop, "x", snap, fx.corpus),
                    ContractViolation);
    CHECK_THROWS_AS(
        gen.generate(fx.single_path(), QuestionType::Counterfactual, "x", snap, fx.corpus),
        ContractViolation);

    PerturbationDescriptor bad = predicate_swap();
    bad.kind = "weird";
    CHECK_THROWS_AS(gen.generate(fx.single_path(), QuestionType::Counterfactual, "x", snap,
                                 fx.corpus, bad),
                    ContractViolation);
    CHECK_THROWS_AS(gen.generate(fx.single_path(), QuestionType::SingleHop, "x", snap,
                                 fx.corpus, predicate_swap()),
                    ContractViolation);
}

TEST_CASE("the generator validates options and template inventory") {
    MockRig rig;

    GenerationOptions o = make_options();
    o.exemplars_per_type = 0;
    CHECK_THROWS_AS(QaGenerator(rig.gateway, o), ConfigError);

    o = make_options();
    o.templates[QuestionType::SingleHop] = "no hole";
    CHECK_THROWS_AS(QaGenerator(rig.gateway, o), ConfigError);

    const QaFixture fx;
    o = make_options();
    o.templates.erase(QuestionType::OpenEnded);
    QaGenerator missing_template(rig.gateway, o);
    CHECK_THROWS_AS(missing_template.generate(fx.single_path(), QuestionType::OpenEnded, "x",
                                              fx.snap(), fx.corpus),
                    ConfigError);

    o = make_options();
    std::erase_if(o.exemplars,
                  [](const Exemplar& e) { return e.qtype == QuestionType::SingleHop; });
    QaGenerator missing_exemplar(rig.gateway, o);
    CHECK_THROWS_AS(missing_exemplar.generate(fx.single_path(), QuestionType::SingleHop, "x",
                                              fx.snap(), fx.corpus),
                    ConfigError);
}

// --- perturbations ---------------------------------------------------------------------------

TEST_CASE("perturb_for_counterfactual proposes only valid alternatives") {
    const QaFixture fx;
    const KGSnapshot snap = fx.snap();
    const std::vector<std::string> schema = {"addresses", "evaluates_on", "extends",
                                             "outperforms", "reports", "uses"};
    Rng rng(77);

    bool saw_predicate = false, saw_entity = false;
    for (int i = 0; i < 60; ++i) {
        const auto d = perturb_for_counterfactual(fx.single_path(), snap, schema, rng);
        REQUIRE(d.has_value());
        if (d->kind == "predicate") {
            saw_predicate = true;
            CHECK(d->element_index == 1);
            CHECK(d->original == "evaluates_on");
            CHECK(d->perturbed != d->original);
            CHECK(std::find(schema.begin(), schema.end(), d->perturbed) != schema.end());
        } else {
            saw_entity = true;
            CHECK(d->kind == "entity");
            CHECK(d->element_index == 0); // never the terminal
            CHECK(d->original == "AtlasRL");
            CHECK(d->perturbed == "PolicyForge"); // only other method off-path
            CHECK(d->perturbed_entity_id == fx.policy);
        }
    }
    CHECK(saw_predicate);
    CHECK(saw_entity);
}

TEST_CASE("perturbation returns nothing when no alternative exists") {
    KnowledgeGraph g("dom", TimeWindow{0, 1 << 30});
    const std::string a = g.add_entity(make_entity("A", "method", 100, "doc-1"));
    const std::string b = g.add_entity(make_entity("B", "dataset", 100, "doc-1"));
    const std::string r = g.add_edge(make_edge(a, "uses", b, 100, "doc-1"));
    const KGSnapshot snap = snapshot_at(g, 500);

    ReasoningPath p;
    p.as_of = 500;
    p.node_ids = {a, b};
    p.edge_ids = {r};
    p.directions = {HopDirection::Forward};

    Rng rng(1);
    // Schema holds only the predicate in use, and no same-type substitute exists.
    CHECK_FALSE(perturb_for_counterfactual(p, snap, {"uses"}, rng).has_value());

    ReasoningPath edgeless;
    edgeless.node_ids = {a};
    CHECK_THROWS_AS(perturb_for_counterfactual(edgeless, snap, {"uses"}, rng),
                    ContractViolation);
}

// --- planning ------------------------------------------------------------------------------

namespace {

// Chain A-B-C-D-E with a spur B-F, mirroring the sampler tests.
KnowledgeGraph plan_graph() {
    KnowledgeGraph g("dom", TimeWindow{0, 1 << 30});
    std::vector<std::string> ids;
    for (const char* n : {"A", "B", "C", "D", "E", "F"}) {
        ids.push_back(g.add_entity(make_entity(n, "method", 100, "doc-1")));
    }
    g.add_edge(make_edge(ids[0], "uses", ids[1], 100, "doc-1"));
    g.add_edge(make_edge(ids[1], "uses", ids[2], 100, "doc-1"));
    g.add_edge(make_edge(ids[2], "uses", ids[3], 100, "doc-1"));
    g.add_edge(make_edge(ids[3], "uses", ids[4], 100, "doc-1"));
    g.add_edge(make_edge(ids[1], "extends", ids[5], 100, "doc-1"));
    return g;
}

const std::vector<std::string> kPlanSchema = {"addresses", "evaluates_on", "extends",
                                              "outperforms", "reports", "uses"};

SamplingPolicy plan_policy() {
    SamplingPolicy p;
    p.k_min = 1;
    p.k_max = 2;
    p.bias = PathBias::Uniform;
    p.degree_percentile = 0.9;
    p.max_attempts = 200;
    return p;
}

} // namespace

TEST_CASE("plan_generation fills targets with compatible, deduplicated paths") {
    const KnowledgeGraph g = plan_graph();
    const KGSnapshot snap = snapshot_at(g, 500);
    Rng rng(4242);

    const std::map<QuestionType, int> targets = {{QuestionType::SingleHop, 3},
                                                 {QuestionType::MultiHop, 3},
                                                 {QuestionType::Counterfactual, 2},
                                                 {QuestionType::OpenEnded, 2}};
    const GenerationPlan plan = plan_generation(snap, targets, plan_policy(), kPlanSchema, rng);

    CHECK(plan.shortfall.empty());
    REQUIRE(plan.entries.size() == 10);

    std::map<QuestionType, int> counts;
    std::map<QuestionType, std::set<std::string>> sigs;
    for (const auto& e : plan.entries) {
        ++counts[e.qtype];
        CHECK(type_compatible(e.qtype, e.path.k()));
        if (e.qtype == QuestionType::Counterfactual) {
            CHECK(e.perturbation.has_value());
        } else {
            CHECK_FALSE(e.perturbation.has_value());
        }
        const std::string sig = join(e.path.node_ids, "|");
        CHECK(sigs[e.qtype].insert(sig).second); // unique within a type
    }
    CHECK(counts == std::map<QuestionType, int>{{QuestionType::SingleHop, 3},
                                                {QuestionType::MultiHop, 3},
                                                {QuestionType::Counterfactual, 2},
                                                {QuestionType::OpenEnded, 2}});

    // Types come out in declaration order, ids sequential across the plan.
    for (std::size_t i = 0; i < plan.entries.size(); ++i) {
        char expect[16];
        std::snprintf(expect, sizeof(expect), "p%05zu", i);
        CHECK(plan.entries[i].path.path_id == expect);
    }
    CHECK(plan.entries.front().qtype == QuestionType::SingleHop);
    CHECK(plan.entries.back().qtype == QuestionType::OpenEnded);
}

TEST_CASE("plan_generation reports shortfall instead of failing") {
    KnowledgeGraph g("dom", TimeWindow{0, 1 << 30});
    const std::string a = g.add_entity(make_entity("A", "method", 100, "doc-1"));
    const std::string b = g.add_entity(make_entity("B", "method", 100, "doc-1"));
    g.add_edge(make_edge(a, "uses", b, 100, "doc-1"));
    const KGSnapshot snap = snapshot_at(g, 500);
    Rng rng(1);

    // Two hops are impossible on a single edge; singles top out at two shapes.
    const std::map<QuestionType, int> targets = {{QuestionType::SingleHop, 5},
                                                 {QuestionType::MultiHop, 4}};
    const GenerationPlan plan = plan_generation(snap, targets, plan_policy(), kPlanSchema, rng);

    std::map<QuestionType, int> counts;
    for (const auto& e : plan.entries) ++counts[e.qtype];
    CHECK(counts[QuestionType::SingleHop] == 2); // A->B and B->A
    CHECK(counts[QuestionType::MultiHop] == 0);
    REQUIRE(plan.shortfall.count(QuestionType::SingleHop) == 1);
    CHECK(plan.shortfall.at(QuestionType::SingleHop) == 3);
    REQUIRE(plan.shortfall.count(QuestionType::MultiHop) == 1);
    CHECK(plan.shortfall.at(QuestionType::MultiHop) == 4);
}

TEST_CASE("difficult multi-hop planning routes through hubs") {
    // Star with an extra rim so two-hop paths exist in volume.
    KnowledgeGraph g("dom", TimeWindow{0, 1 << 30});
    const std::string hub = g.add_entity(make_entity("Hub", "dataset", 100, "doc-1"));
    std::vector<std::string> spokes;
    for (int i = 0; i < 6; ++i) {
        spokes.push_back(
            g.add_entity(make_entity("S" + std::to_string(i), "method", 100, "doc-1")));
        g.add_edge(make_edge(spokes.back(), "evaluates_on", hub, 100, "doc-1"));
    }
    const KGSnapshot snap = snapshot_at(g, 500);
    const std::size_t floor = snap.degree_quantile(0.9);
    Rng rng(9);

    const GenerationPlan plan = plan_generation(
        snap, {{QuestionType::MultiHopDifficult, 3}}, plan_policy(), kPlanSchema, rng);
    CHECK(plan.shortfall.empty());
    REQUIRE(plan.entries.size() == 3);
    for (const auto& e : plan.entries) {
        CHECK(e.path.policy_name == "high_degree");
        REQUIRE(e.path.k() >= 2);
        bool hub_found = false;
        for (std::size_t i = 1; i + 1 < e.path.node_ids.size(); ++i) {
            hub_found = hub_found || snap.degree(e.path.node_ids[i]) >= floor;
        }
        CHECK(hub_found);
    }
}

TEST_CASE("plan_generation rejects negative targets and skips zeros") {
    const KnowledgeGraph g = plan_graph();
    const KGSnapshot snap = snapshot_at(g, 500);
    Rng rng(2);

    CHECK_THROWS_AS(
        plan_generation(snap, {{QuestionType::SingleHop, -1}}, plan_policy(), kPlanSchema, rng),
        ContractViolation);

    const GenerationPlan plan = plan_generation(
        snap, {{QuestionType::SingleHop, 0}, {QuestionType::OpenEnded, 1}}, plan_policy(),
        kPlanSchema, rng);
    REQUIRE(plan.entries.size() == 1);
    CHECK(plan.entries[0].qtype == QuestionType::OpenEnded);
}

// --- serialization ---------------------------------------------------------------------------

TEST_CASE("qa pairs round-trip through JSON") {
    QAPair qa;
    qa.qa_id = "qa00042";
    qa.domain_id = "dom";
    qa.qtype = QuestionType::Counterfactual;
    qa.question = "Suppose things were different?";
    qa.answer = "No. They are not.";
    qa.issue_time = parse_rfc3339("2025-03-14T09:26:53Z");
    qa.path_id = "p00007";
    qa.evidence_refs = {{"doc-1", "body", 0, 10}};
    qa.prompt_tag = "genqa:counterfactual:qa00042";
    qa.model_id = "mock";

    const Json j = qa_to_json(qa);
    CHECK(j.at("qtype") == "counterfactual");
    CHECK(j.at("issue_time") == "2025-03-14T09:26:53Z");
    CHECK(j.at("trace").at("prompt_tag") == "genqa:counterfactual:qa00042");

    const QAPair back = qa_from_json(j);
    CHECK(back.qa_id == qa.qa_id);
    CHECK(back.qtype == qa.qtype);
    CHECK(back.question == qa.question);
    CHECK(back.answer == qa.answer);
    CHECK(back.issue_time == qa.issue_time);
    CHECK(back.evidence_refs == qa.evidence_refs);
    CHECK(back.model_id == "mock");

    Json bad = j;
    bad.erase("answer");
    CHECK_THROWS_AS(qa_from_json(bad), DataError);
    bad = j;
    bad["qtype"] = "essay";
    CHECK_THROWS_AS(qa_from_json(bad), DataError);
}

TEST_CASE("exemplars round-trip through JSON") {
    const Exemplar e{QuestionType::MultiHop, "Which thing is two steps away?", "That thing."};
    const Json j = exemplar_to_json(e);
    CHECK(j.at("qtype") == "multi_hop");
    const Exemplar back = exemplar_from_json(j);
    CHECK(back.qtype == e.qtype);
    CHECK(back.question == e.question);
    CHECK(back.answer == e.answer);

    CHECK_THROWS_AS(exemplar_from_json(Json{{"qtype", "multi_hop"}}), DataError);
    CHECK_THROWS_AS(exemplar_from_json(Json{{"qtype", "bogus"},
                                            {"question", "q"},
                                            {"answer", "a"}}),
                    DataError);
}
