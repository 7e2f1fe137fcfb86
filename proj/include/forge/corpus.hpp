#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "forge/io.hpp"
#include "forge/time.hpp"

namespace forge {

// ---------------------------------------------------------------------------
// Documents, corpora, chunking.
// ---------------------------------------------------------------------------

struct Section {
    std::string label; // "abstract", "introduction", ...
    std::string text;  // non-empty
};

struct Document {
    std::string id; // unique within a corpus
    std::string title;
    std::vector<std::string> authors;
    std::vector<std::string> categories;
    Timestamp submitted_at = 0;
    std::vector<Section> sections; // non-empty

    std::size_t char_count() const; // title + section texts
    const Section* find_section(const std::string& label) const;
};

struct SelectionCriteria {
    std::string domain_id;               // non-empty
    std::vector<std::string> categories; // non-empty; a document matches on any
    std::vector<std::string> keywords;   // optional; matched in title/section text
    TimeWindow window;                   // start <= end
};

struct Corpus {
    std::string domain_id;
    TimeWindow window;
    std::vector<Document> documents; // sorted by (submitted_at, id)

    const Document* find(const std::string& doc_id) const;
};

// Diagnostics from collect(): how many source records were scanned, kept,
// filtered out, or skipped as malformed (each skip also logs a warning).
struct CollectStats {
    std::size_t scanned = 0;
    std::size_t kept = 0;
    std::size_t filtered = 0;
    std::size_t skipped_malformed = 0;
    std::vector<std::string> messages;
};

class DocumentSource {
public:
    virtual ~DocumentSource() = default;
    // Returns candidate records; collect() re-validates and filters them.
    // Malformed records surface as messages in `stats`, not exceptions.
    virtual std::vector<Document> fetch(const SelectionCriteria& criteria,
                                        CollectStats& stats) = 0;
};

// Reads *.json (one document) and *.jsonl (one per line) files from a
// directory. The canonical offline source.
class LocalDirSource : public DocumentSource {
public:
    explicit LocalDirSource(std::filesystem::path dir);
    std::vector<Document> fetch(const SelectionCriteria& criteria, CollectStats& stats) override;

private:
    std::filesystem::path dir_;
};

Corpus collect(DocumentSource& source, const SelectionCriteria& criteria,
               CollectStats* stats = nullptr);

// ---------------------------------------------------------------------------
// Chunking: fixed-size character windows per section with overlap.
// ---------------------------------------------------------------------------

struct ChunkPolicy {
    std::size_t limit = 1000;  // max characters per chunk
    std::size_t overlap = 100; // carried between consecutive chunks; < limit
};

struct Chunk {
    std::string chunk_id; // "{doc_id}#s{section_index}:{start}-{end}"
    std::string doc_id;
    std::size_t section_index = 0;
    std::string section_label;
    std::string text;
    std::size_t char_start = 0; // offsets within the section text
    std::size_t char_end = 0;   // exclusive
};

std::vector<Chunk> segment_and_chunk(const Document& doc, const ChunkPolicy& policy);
std::vector<Chunk> chunk_corpus(const Corpus& corpus, const ChunkPolicy& policy);

// ---------------------------------------------------------------------------
// Serialization. documents.jsonl holds one document per line; a corpus file
// starts with a header line carrying domain and window.
// ---------------------------------------------------------------------------

Json document_to_json(const Document& doc);
Document document_from_json(const Json& j); // throws DataError on bad shape

Json chunk_to_json(const Chunk& c);
Chunk chunk_from_json(const Json& j);

void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus load_corpus(const std::filesystem::path& path);

void save_chunks(const std::vector<Chunk>& chunks, const std::filesystem::path& path);
std::vector<Chunk> load_chunks(const std::filesystem::path& path);

} // namespace forge
