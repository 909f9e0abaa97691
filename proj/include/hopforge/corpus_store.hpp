#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

struct sqlite3;

namespace hopforge {

struct Paragraph {
    int index = 0;
    std::string section;
    std::string text;

    friend bool operator==(const Paragraph&, const Paragraph&) = default;
};

struct Outlink {
    std::string anchor_text;
    std::string target_title;
    int paragraph_index = 0;
    // Canonical title of the target page; empty when the link is dangling.
    std::string resolved_title;

    [[nodiscard]] bool dangling() const noexcept { return resolved_title.empty(); }

    friend bool operator==(const Outlink&, const Outlink&) = default;
};

using AttributeMap = std::map<std::string, std::string>;

struct PageRecord {
    std::int64_t page_id = 0;
    std::string title;
    std::vector<std::string> aliases;
    std::vector<Paragraph> paragraphs;
    std::vector<Outlink> outlinks;
    AttributeMap attributes;

    friend bool operator==(const PageRecord&, const PageRecord&) = default;
};

struct IngestIssue {
    std::size_t line = 0;  // 1-based
    std::string message;
};

struct IngestReport {
    std::size_t count = 0;
    std::vector<IngestIssue> errors;      // malformed lines
    std::vector<IngestIssue> duplicates;  // conflicting titles, later record rejected
};

/// Parses one page document line. Throws Error(InvalidInput) on schema problems.
/// The returned record has page_id 0 and unresolved outlinks.
PageRecord parse_page_document(std::string_view line);

/// Page documents serialize back to the ingestion schema.
nlohmann::json page_document(const PageRecord& page);

/// Single-file relational page store keyed on canonical title, with an alias
/// side table. Reads are safe from several threads once ingestion is done.
class CorpusStore {
  public:
    /// Opens (or creates) the store at `path`; ":memory:" gives a private
    /// in-memory store.
    explicit CorpusStore(const std::string& path = ":memory:");
    ~CorpusStore();

    CorpusStore(const CorpusStore&) = delete;
    CorpusStore& operator=(const CorpusStore&) = delete;
    CorpusStore(CorpusStore&&) noexcept;
    CorpusStore& operator=(CorpusStore&&) noexcept;

    IngestReport ingest(std::istream& in);
    IngestReport ingest_file(const std::string& path);

    [[nodiscard]] PageRecord get_page(std::string_view title) const;
    [[nodiscard]] std::optional<PageRecord> find_page(std::string_view title) const;

    [[nodiscard]] std::string resolve_alias(std::string_view name) const;
    [[nodiscard]] std::optional<std::string> try_resolve(std::string_view name) const;

    /// Stored attributes of the page; empty map when it has none.
    [[nodiscard]] AttributeMap attributes(std::string_view title) const;

    [[nodiscard]] std::vector<std::string> titles() const;
    [[nodiscard]] std::size_t page_count() const;

  private:
    void init_schema();
    bool insert_page(const PageRecord& page, const std::string& source, std::string& conflict);

    sqlite3* db_ = nullptr;
};

}  // namespace hopforge
