#include "forge/corpus.hpp"

#include <algorithm>
#include <cstdlib>
#include <set>

#include <spdlog/spdlog.h>

#include "forge/errors.hpp"
#include "forge/text.hpp"

namespace forge {
namespace {

void note(CollectStats& stats, const std::string& msg) {
    spdlog::warn("{}", msg);
    stats.messages.push_back(msg);
}

bool matches_criteria(const Document& doc, const SelectionCriteria& c) {
    if (!c.window.contains(doc.submitted_at)) return false;
    bool cat_ok = false;
    for (const auto& want : c.categories) {
        for (const auto& have : doc.categories) {
            if (to_lower(have) == to_lower(want)) {
                cat_ok = true;
                break;
            }
        }
        if (cat_ok) break;
    }
    if (!cat_ok) return false;
    if (c.keywords.empty()) return true;
    for (const auto& kw : c.keywords) {
        if (contains_token(doc.title, kw)) return true;
        for (const auto& s : doc.sections) {
            if (contains_token(s.text, kw)) return true;
        }
    }
    return false;
}

// Validation shared by collect() and document_from_json(): returns an error
// description, or empty if the document is well-formed.
std::string validate_document(const Document& doc) {
    if (doc.id.empty()) return "missing id";
    if (doc.title.empty()) return "missing title";
    if (doc.sections.empty()) return "no sections";
    std::set<std::string> labels;
    for (const auto& s : doc.sections) {
        if (s.label.empty()) return "section with empty label";
        if (s.text.empty()) return "section '" + s.label + "' has empty text";
        if (!labels.insert(s.label).second) return "duplicate section label '" + s.label + "'";
    }
    return {};
}

} // namespace

std::size_t Document::char_count() const {
    std::size_t n = title.size();
    for (const auto& s : sections) n += s.text.size();
    return n;
}

const Section* Document::find_section(const std::string& label) const {
    for (const auto& s : sections) {
        if (s.label == label) return &s;
    }
    return nullptr;
}

const Document* Corpus::find(const std::string& doc_id) const {
    for (const auto& d : documents) {
        if (d.id == doc_id) return &d;
    }
    return nullptr;
}

LocalDirSource::LocalDirSource(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::vector<Document> LocalDirSource::fetch(const SelectionCriteria&, CollectStats& stats) {
    if (!std::filesystem::is_directory(dir_)) {
        throw DataError("document source directory not found: " + dir_.string());
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
        if (!entry.is_regular_file()) continue;
        const auto ext = entry.path().extension();
        if (ext == ".json" || ext == ".jsonl") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    std::vector<Document> docs;
    for (const auto& file : files) {
        std::vector<Json> records;
        if (file.extension() == ".jsonl") {
            try {
                records = read_jsonl(file);
            } catch (const DataError& e) {
                note(stats, std::string("skipping unreadable source file: ") + e.what());
                continue;
            }
        } else {
            try {
                records.push_back(read_json_file(file));
            } catch (const DataError& e) {
                note(stats, std::string("skipping unreadable source file: ") + e.what());
                continue;
            }
        }
        for (std::size_t i = 0; i < records.size(); ++i) {
            ++stats.scanned;
            try {
                docs.push_back(document_from_json(records[i]));
            } catch (const DataError& e) {
                ++stats.skipped_malformed;
                note(stats, "skipping malformed record " + std::to_string(i + 1) + " in " +
                                file.filename().string() + ": " + e.what());
            }
        }
    }
    return docs;
}

Corpus collect(DocumentSource& source, const SelectionCriteria& criteria, CollectStats* stats) {
    if (criteria.domain_id.empty()) throw ContractViolation("selection criteria need a domain_id");
    if (criteria.categories.empty()) {
        throw ContractViolation("selection criteria need at least one category");
    }
    if (criteria.window.start > criteria.window.end) {
        throw ContractViolation("selection window start is after its end");
    }

    CollectStats local;
    CollectStats& st = stats ? *stats : local;
    std::vector<Document> candidates = source.fetch(criteria, st);

    Corpus corpus;
    corpus.domain_id = criteria.domain_id;
    corpus.window = criteria.window;

    std::set<std::string> seen_ids;
    for (auto& doc : candidates) {
        const std::string problem = validate_document(doc);
        if (!problem.empty()) {
            ++st.skipped_malformed;
            note(st, "skipping malformed document '" + doc.id + "': " + problem);
            continue;
        }
        if (!seen_ids.insert(doc.id).second) {
            ++st.skipped_malformed;
            note(st, "skipping duplicate document id '" + doc.id + "'");
            continue;
        }
        if (!matches_criteria(doc, criteria)) {
            ++st.filtered;
            continue;
        }
        corpus.documents.push_back(std::move(doc));
        ++st.kept;
    }

    std::sort(corpus.documents.begin(), corpus.documents.end(),
              [](const Document& a, const Document& b) {
                  return std::tie(a.submitted_at, a.id) < std::tie(b.submitted_at, b.id);
              });
    return corpus;
}

std::vector<Chunk> segment_and_chunk(const Document& doc, const ChunkPolicy& policy) {
    if (policy.limit == 0) throw ContractViolation("chunk limit must be positive");
    if (policy.overlap >= policy.limit) {
        throw ContractViolation("chunk overlap must be smaller than the limit");
    }
    const std::string problem = validate_document(doc);
    if (!problem.empty()) throw ContractViolation("cannot chunk document '" + doc.id + "': " + problem);

    std::vector<Chunk> chunks;
    const std::size_t stride = policy.limit - policy.overlap;
    for (std::size_t si = 0; si < doc.sections.size(); ++si) {
        const Section& sec = doc.sections[si];
        std::size_t start = 0;
        while (true) {
            const std::size_t end = std::min(sec.text.size(), start + policy.limit);
            Chunk c;
            c.doc_id = doc.id;
            c.section_index = si;
            c.section_label = sec.label;
            c.char_start = start;
            c.char_end = end;
            c.text = sec.text.substr(start, end - start);
            c.chunk_id = doc.id + "#s" + std::to_string(si) + ":" + std::to_string(start) + "-" +
                         std::to_string(end);
            chunks.push_back(std::move(c));
            if (end == sec.text.size()) break;
            start += stride;
        }
    }
    return chunks;
}

std::vector<Chunk> chunk_corpus(const Corpus& corpus, const ChunkPolicy& policy) {
    std::vector<Chunk> all;
    for (const auto& doc : corpus.documents) {
        auto chunks = segment_and_chunk(doc, policy);
        all.insert(all.end(), std::make_move_iterator(chunks.begin()),
                   std::make_move_iterator(chunks.end()));
    }
    return all;
}

Json document_to_json(const Document& doc) {
    Json sections = Json::array();
    for (const auto& s : doc.sections) {
        sections.push_back({{"label", s.label}, {"text", s.text}});
    }
    return {{"id", doc.id},
            {"title", doc.title},
            {"authors", doc.authors},
            {"categories", doc.categories},
            {"submitted_at", format_rfc3339(doc.submitted_at)},
            {"sections", sections}};
}

Document document_from_json(const Json& j) {
    if (!j.is_object()) throw DataError("document record is not an object");
    Document doc;
    try {
        doc.id = j.at("id").get<std::string>();
        doc.title = j.at("title").get<std::string>();
        doc.authors = j.value("authors", std::vector<std::string>{});
        doc.categories = j.value("categories", std::vector<std::string>{});
        doc.submitted_at = parse_rfc3339(j.at("submitted_at").get<std::string>());
        for (const auto& s : j.at("sections")) {
            doc.sections.push_back(
                {s.at("label").get<std::string>(), s.at("text").get<std::string>()});
        }
    } catch (const Json::exception& e) {
        throw DataError(std::string("bad document record: ") + e.what());
    }
    const std::string problem = validate_document(doc);
    if (!problem.empty()) throw DataError("bad document record: " + problem);
    return doc;
}

Json chunk_to_json(const Chunk& c) {
    return {{"chunk_id", c.chunk_id},         {"doc_id", c.doc_id},
            {"section_label", c.section_label}, {"char_start", c.char_start},
            {"char_end", c.char_end},         {"text", c.text}};
}

Chunk chunk_from_json(const Json& j) {
    Chunk c;
    try {
        c.chunk_id = j.at("chunk_id").get<std::string>();
        c.doc_id = j.at("doc_id").get<std::string>();
        c.section_label = j.at("section_label").get<std::string>();
        c.text = j.at("text").get<std::string>();
        c.char_start = j.at("char_start").get<std::size_t>();
        c.char_end = j.at("char_end").get<std::size_t>();
    } catch (const Json::exception& e) {
        throw DataError(std::string("bad chunk record: ") + e.what());
    }
    // The section index is encoded in the id: "{doc}#s{index}:{start}-{end}".
    const std::size_t hash = c.chunk_id.find("#s");
    const std::size_t colon = c.chunk_id.find(':', hash == std::string::npos ? 0 : hash);
    if (hash == std::string::npos || colon == std::string::npos) {
        throw DataError("bad chunk_id format: " + c.chunk_id);
    }
    c.section_index = static_cast<std::size_t>(
        std::strtoull(c.chunk_id.c_str() + hash + 2, nullptr, 10));
    return c;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    std::vector<Json> rows;
    rows.push_back({{"kind", "corpus_header"},
                    {"domain_id", corpus.domain_id},
                    {"window_start", format_rfc3339(corpus.window.start)},
                    {"window_end", format_rfc3339(corpus.window.end)}});
    for (const auto& d : corpus.documents) rows.push_back(document_to_json(d));
    write_jsonl(path, rows);
}

Corpus load_corpus(const std::filesystem::path& path) {
    const std::vector<Json> rows = read_jsonl(path);
    if (rows.empty() || rows[0].value("kind", "") != "corpus_header") {
        throw DataError("corpus file missing header line: " + path.string());
    }
    Corpus corpus;
    try {
        corpus.domain_id = rows[0].at("domain_id").get<std::string>();
        corpus.window.start = parse_rfc3339(rows[0].at("window_start").get<std::string>());
        corpus.window.end = parse_rfc3339(rows[0].at("window_end").get<std::string>());
    } catch (const Json::exception& e) {
        throw DataError(std::string("bad corpus header in ") + path.string() + ": " + e.what());
    }
    for (std::size_t i = 1; i < rows.size(); ++i) {
        try {
            corpus.documents.push_back(document_from_json(rows[i]));
        } catch (const DataError& e) {
            throw DataError("in " + path.string() + " line " + std::to_string(i + 1) + ": " +
                            e.what());
        }
    }
    return corpus;
}

void save_chunks(const std::vector<Chunk>& chunks, const std::filesystem::path& path) {
    std::vector<Json> rows;
    rows.reserve(chunks.size());
    for (const auto& c : chunks) rows.push_back(chunk_to_json(c));
    write_jsonl(path, rows);
}

std::vector<Chunk> load_chunks(const std::filesystem::path& path) {
    std::vector<Chunk> chunks;
    for (const auto& row : read_jsonl(path)) chunks.push_back(chunk_from_json(row));
    return chunks;
}

} // namespace forge
