#pragma once

#include <optional>
#include <variant>

#include "forge/gateway.hpp"
#include "forge/path_sampler.hpp"

namespace forge {

// ---------------------------------------------------------------------------
// QA generation: paths + evidence -> question/answer pairs of six types,
// with explicit abstention when the model (or a post-check) balks.
// ---------------------------------------------------------------------------

enum class QuestionType {
    SingleHop,
    SingleHopConditional,
    MultiHop,
    MultiHopDifficult,
    Counterfactual,
    OpenEnded,
};

std::string question_type_name(QuestionType t); // "single_hop", ...
QuestionType question_type_from(const std::string& name);
const std::vector<QuestionType>& all_question_types();

// Multi-hop types need k >= 2; single-hop types need k == 1; the rest take
// any k >= 1.
bool type_compatible(QuestionType t, std::size_t k);

struct QAPair {
    std::string qa_id;
    std::string domain_id;
    QuestionType qtype = QuestionType::SingleHop;
    std::string question;
    std::string answer;
    Timestamp issue_time = 0; // earliest time the pair is fully answerable
    std::string path_id;
    std::vector<ProvenanceRef> evidence_refs;
    // generation trace
    std::string prompt_tag;
    std::string model_id;
};

struct Abstention {
    std::string reason; // "model-abstained", "intermediate-leak", ...
};

struct Exemplar {
    QuestionType qtype = QuestionType::SingleHop;
    std::string question;
    std::string answer;
};

// Exactly one element of the path changed on paper: either one hop's
// predicate swapped for another schema predicate, or one non-terminal
// entity swapped for a same-type entity from the snapshot.
struct PerturbationDescriptor {
    std::string kind;               // "predicate" | "entity"
    std::size_t element_index = 0;  // hop number (1-based) or node position (0-based)
    std::string original;
    std::string perturbed;
    std::string perturbed_entity_id; // set for entity swaps
};

std::optional<PerturbationDescriptor> perturb_for_counterfactual(
    const ReasoningPath& path, const KGSnapshot& snapshot,
    const std::vector<std::string>& schema, Rng& rng);

struct GenerationOptions {
    std::map<QuestionType, std::string> templates; // per-type prompt text
    std::vector<Exemplar> exemplars;               // >= 1 per generated type
    int exemplars_per_type = 2;
    std::string model_id = "mock";
    std::string prompt_version = "v1";
};

class QaGenerator {
public:
    QaGenerator(ModelGateway& gateway, GenerationOptions options);

    // One tagged chat call (plus at most one repair retry on a malformed
    // reply). Abstention is a value: the model declining, a parse failure
    // after retry, or a grounding post-check rejecting the output.
    // Counterfactual calls must carry the perturbation that was planned for
    // the path; entity-answer types get their answer pinned to the terminal
    // entity's canonical name.
    std::variant<QAPair, Abstention> generate(
        const ReasoningPath& path, QuestionType qtype, const std::string& qa_id,
        const KGSnapshot& snapshot, const Corpus& corpus,
        const std::optional<PerturbationDescriptor>& perturbation = std::nullopt);

private:
    ModelGateway& gateway_;
    GenerationOptions options_;

    std::string render_prompt(const ReasoningPath& path, QuestionType qtype,
                              const KGSnapshot& snapshot,
                              const std::vector<EvidenceItem>& evidence,
                              const std::string& condition,
                              const std::optional<PerturbationDescriptor>& perturbation) const;
};

// The machine-readable serialization of a path that generation prompts
// embed ("[PATH] ... [/PATH]"); exposed for prompt-shape tests.
std::string path_block(const ReasoningPath& path, QuestionType qtype, const KGSnapshot& snapshot,
                       std::size_t evidence_count, const std::string& condition,
                       const std::optional<PerturbationDescriptor>& perturbation);

// Deterministic condition for single_hop_conditional questions: a dated
// phrase tied to the supporting document of the path's single hop.
std::string derive_condition(const ReasoningPath& path, const Corpus& corpus);

// ---------------------------------------------------------------------------
// Planning: which sampled paths feed which question types.
// ---------------------------------------------------------------------------

struct PlanEntry {
    ReasoningPath path;
    QuestionType qtype = QuestionType::SingleHop;
    std::optional<PerturbationDescriptor> perturbation;
};

struct GenerationPlan {
    std::vector<PlanEntry> entries;
    std::map<QuestionType, int> shortfall; // only types that fell short
};

// Samples paths per type honoring k-compatibility (difficult multi-hop uses
// the high-degree policy); duplicates within a type are rejected; shortfall
// is reported, never thrown. path_ids are assigned sequentially ("p00000").
GenerationPlan plan_generation(const KGSnapshot& snapshot,
                               const std::map<QuestionType, int>& targets,
                               const SamplingPolicy& policy,
                               const std::vector<std::string>& schema, Rng& rng);

Json qa_to_json(const QAPair& qa);
QAPair qa_from_json(const Json& j);

Json exemplar_to_json(const Exemplar& e);
Exemplar exemplar_from_json(const Json& j);

} // namespace forge
