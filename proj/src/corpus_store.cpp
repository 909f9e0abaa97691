#include <hopforge/corpus_store.hpp>

#include <hopforge/error.hpp>
#include <hopforge/text.hpp>

#include <nlohmann/json.hpp>
#include <sqlite3.h>

#include <fstream>
#include <istream>
#include <set>

namespace hopforge {

using nlohmann::json;

namespace {

class Statement {
  public:
    Statement(sqlite3* db, const char* sql) : db_(db) {
        if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK) {
            fail(ErrorCode::Io, std::string("sqlite prepare: ") + sqlite3_errmsg(db));
        }
    }
    ~Statement() { sqlite3_finalize(stmt_); }
    Statement(const Statement&) = delete;
    Statement& operator=(const Statement&) = delete;

    Statement& bind(int idx, std::string_view v) {
        sqlite3_bind_text(stmt_, idx, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT);
        return *this;
    }
    Statement& bind(int idx, std::int64_t v) {
        sqlite3_bind_int64(stmt_, idx, v);
        return *this;
    }

    // True while rows remain.
    bool step() {
        int rc = sqlite3_step(stmt_);
        if (rc == SQLITE_ROW) return true;
        if (rc == SQLITE_DONE) return false;
        fail(ErrorCode::Io, std::string("sqlite step: ") + sqlite3_errmsg(db_));
    }

    std::string text(int col) const {
        const auto* p = sqlite3_column_text(stmt_, col);
        return p == nullptr ? std::string() : std::string(reinterpret_cast<const char*>(p));
    }
    std::int64_t integer(int col) const { return sqlite3_column_int64(stmt_, col); }

  private:
    sqlite3* db_;
    sqlite3_stmt* stmt_ = nullptr;
};

void exec(sqlite3* db, const char* sql) {
    char* err = nullptr;
    if (sqlite3_exec(db, sql, nullptr, nullptr, &err) != SQLITE_OK) {
        std::string msg = err != nullptr ? err : "unknown";
        sqlite3_free(err);
        fail(ErrorCode::Io, "sqlite: " + msg);
    }
}

const std::string& require_string(const json& obj, const char* key, const char* what) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string()) {
        fail(ErrorCode::InvalidInput, std::string(what) + ": field '" + key + "' must be a string");
    }
    return it->get_ref<const std::string&>();
}

}  // namespace

PageRecord parse_page_document(std::string_view line) {
    json doc;
    try {
        doc = json::parse(line);
    } catch (const json::parse_error& e) {
        fail(ErrorCode::InvalidInput, std::string("not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) fail(ErrorCode::InvalidInput, "page document must be an object");

    PageRecord page;
    page.title = text::collapse_whitespace(require_string(doc, "title", "page"));
    if (page.title.empty()) fail(ErrorCode::InvalidInput, "title is empty");

    if (auto it = doc.find("aliases"); it != doc.end()) {
        if (!it->is_array()) fail(ErrorCode::InvalidInput, "'aliases' must be an array");
        std::set<std::string> seen;
        for (const auto& a : *it) {
            if (!a.is_string()) fail(ErrorCode::InvalidInput, "alias must be a string");
            std::string alias = text::collapse_whitespace(a.get<std::string>());
            if (text::canonicalize(alias).empty()) continue;
            if (seen.insert(text::canonicalize(alias)).second) page.aliases.push_back(alias);
        }
    }

    if (auto it = doc.find("sections"); it != doc.end()) {
        if (!it->is_array()) fail(ErrorCode::InvalidInput, "'sections' must be an array");
        for (const auto& sec : *it) {
            if (!sec.is_object()) fail(ErrorCode::InvalidInput, "section must be an object");
            const std::string& name = require_string(sec, "name", "section");
            auto ps = sec.find("paragraphs");
            if (ps == sec.end() || !ps->is_array()) {
                fail(ErrorCode::InvalidInput, "section '" + name + "' needs a 'paragraphs' array");
            }
            for (const auto& p : *ps) {
                if (!p.is_string()) fail(ErrorCode::InvalidInput, "paragraph must be a string");
                std::string body = text::collapse_whitespace(p.get<std::string>());
                if (body.empty()) {
                    fail(ErrorCode::InvalidInput,
                         "empty paragraph " + std::to_string(page.paragraphs.size()));
                }
                page.paragraphs.push_back(
                    {static_cast<int>(page.paragraphs.size()), name, std::move(body)});
            }
        }
    }

    if (auto it = doc.find("links"); it != doc.end()) {
        if (!it->is_array()) fail(ErrorCode::InvalidInput, "'links' must be an array");
        for (const auto& l : *it) {
            if (!l.is_object()) fail(ErrorCode::InvalidInput, "link must be an object");
            Outlink link;
            link.anchor_text = text::collapse_whitespace(require_string(l, "anchor", "link"));
            link.target_title = text::collapse_whitespace(require_string(l, "target", "link"));
            auto p = l.find("paragraph");
            if (p == l.end() || !p->is_number_integer()) {
                fail(ErrorCode::InvalidInput, "link 'paragraph' must be an integer");
            }
            link.paragraph_index = p->get<int>();
            if (link.anchor_text.empty()) fail(ErrorCode::InvalidInput, "link anchor is empty");
            if (link.target_title.empty()) fail(ErrorCode::InvalidInput, "link target is empty");
            if (link.paragraph_index < 0 ||
                link.paragraph_index >= static_cast<int>(page.paragraphs.size())) {
                fail(ErrorCode::InvalidInput,
                     "link '" + link.anchor_text + "' points at missing paragraph " +
                         std::to_string(link.paragraph_index));
            }
            page.outlinks.push_back(std::move(link));
        }
    }

    if (auto it = doc.find("attributes"); it != doc.end()) {
        if (!it->is_object()) fail(ErrorCode::InvalidInput, "'attributes' must be an object");
        for (const auto& [k, v] : it->items()) {
            if (!v.is_string()) fail(ErrorCode::InvalidInput, "attribute '" + k + "' must be a string");
            page.attributes[k] = v.get<std::string>();
        }
    }
    return page;
}

json page_document(const PageRecord& page) {
    json sections = json::array();
    for (const auto& p : page.paragraphs) {
        if (sections.empty() || sections.back()["name"] != p.section) {
            sections.push_back({{"name", p.section}, {"paragraphs", json::array()}});
        }
        sections.back()["paragraphs"].push_back(p.text);
    }
    json links = json::array();
    for (const auto& l : page.outlinks) {
        links.push_back({{"anchor", l.anchor_text}, {"target", l.target_title}, {"paragraph", l.paragraph_index}});
    }
    return {{"title", page.title},
            {"aliases", page.aliases},
            {"sections", sections},
            {"links", links},
            {"attributes", page.attributes}};
}

CorpusStore::CorpusStore(const std::string& path) {
    int flags = SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX;
    if (sqlite3_open_v2(path.c_str(), &db_, flags, nullptr) != SQLITE_OK) {
        std::string msg = db_ != nullptr ? sqlite3_errmsg(db_) : "out of memory";
        sqlite3_close(db_);
        db_ = nullptr;
        fail(ErrorCode::Io, "cannot open store '" + path + "': " + msg);
    }
    init_schema();
}

CorpusStore::~CorpusStore() { sqlite3_close(db_); }

CorpusStore::CorpusStore(CorpusStore&& other) noexcept : db_(other.db_) { other.db_ = nullptr; }

CorpusStore& CorpusStore::operator=(CorpusStore&& other) noexcept {
    if (this != &other) {
        sqlite3_close(db_);
        db_ = other.db_;
        other.db_ = nullptr;
    }
    return *this;
}

void CorpusStore::init_schema() {
    exec(db_,
         "PRAGMA foreign_keys = ON;"
         "CREATE TABLE IF NOT EXISTS pages ("
         "  page_id INTEGER PRIMARY KEY, title TEXT NOT NULL, canon TEXT NOT NULL UNIQUE,"
         "  source TEXT NOT NULL);"
         "CREATE TABLE IF NOT EXISTS aliases ("
         "  canon TEXT PRIMARY KEY, page_id INTEGER NOT NULL REFERENCES pages(page_id));"
         "CREATE TABLE IF NOT EXISTS page_aliases ("
         "  page_id INTEGER NOT NULL REFERENCES pages(page_id), ord INTEGER NOT NULL,"
         "  alias TEXT NOT NULL, PRIMARY KEY (page_id, ord));"
         "CREATE TABLE IF NOT EXISTS paragraphs ("
         "  page_id INTEGER NOT NULL REFERENCES pages(page_id), idx INTEGER NOT NULL,"
         "  section TEXT NOT NULL, body TEXT NOT NULL, PRIMARY KEY (page_id, idx));"
         "CREATE TABLE IF NOT EXISTS links ("
         "  page_id INTEGER NOT NULL REFERENCES pages(page_id), ord INTEGER NOT NULL,"
         "  anchor TEXT NOT NULL, target TEXT NOT NULL, paragraph INTEGER NOT NULL,"
         "  PRIMARY KEY (page_id, ord));"
         "CREATE TABLE IF NOT EXISTS attributes ("
         "  page_id INTEGER NOT NULL REFERENCES pages(page_id), key TEXT NOT NULL,"
         "  value TEXT NOT NULL, PRIMARY KEY (page_id, key));");
}

bool CorpusStore::insert_page(const PageRecord& page, const std::string& source, std::string& conflict) {
    const std::string canon = text::canonicalize(page.title);
    {
        Statement q(db_, "SELECT source FROM pages WHERE canon = ?1");
        q.bind(1, canon);
        if (q.step()) {
            if (q.text(0) == source) return true;  // identical re-ingest
            conflict = "duplicate title '" + page.title + "'";
            return false;
        }
    }

    exec(db_, "SAVEPOINT page_insert");
    try {
        Statement ins(db_, "INSERT INTO pages (title, canon, source) VALUES (?1, ?2, ?3)");
        ins.bind(1, page.title).bind(2, canon).bind(3, source);
        ins.step();
        const std::int64_t id = sqlite3_last_insert_rowid(db_);

        for (std::size_t i = 0; i < page.aliases.size(); ++i) {
            Statement a(db_, "INSERT INTO page_aliases (page_id, ord, alias) VALUES (?1, ?2, ?3)");
            a.bind(1, id).bind(2, static_cast<std::int64_t>(i)).bind(3, page.aliases[i]);
            a.step();
            // First registration of an alias key wins.
            Statement m(db_, "INSERT OR IGNORE INTO aliases (canon, page_id) VALUES (?1, ?2)");
            m.bind(1, text::canonicalize(page.aliases[i])).bind(2, id);
            m.step();
        }
        for (const auto& p : page.paragraphs) {
            Statement s(db_, "INSERT INTO paragraphs (page_id, idx, section, body) VALUES (?1, ?2, ?3, ?4)");
            s.bind(1, id).bind(2, static_cast<std::int64_t>(p.index)).bind(3, p.section).bind(4, p.text);
            s.step();
        }
        for (std::size_t i = 0; i < page.outlinks.size(); ++i) {
            const auto& l = page.outlinks[i];
            Statement s(db_,
                        "INSERT INTO links (page_id, ord, anchor, target, paragraph) VALUES (?1, ?2, ?3, ?4, ?5)");
            s.bind(1, id)
                .bind(2, static_cast<std::int64_t>(i))
                .bind(3, l.anchor_text)
                .bind(4, l.target_title)
                .bind(5, static_cast<std::int64_t>(l.paragraph_index));
            s.step();
        }
        for (const auto& [k, v] : page.attributes) {
            Statement s(db_, "INSERT INTO attributes (page_id, key, value) VALUES (?1, ?2, ?3)");
            s.bind(1, id).bind(2, k).bind(3, v);
            s.step();
        }
        exec(db_, "RELEASE page_insert");
    } catch (...) {
        exec(db_, "ROLLBACK TO page_insert");
        exec(db_, "RELEASE page_insert");
        throw;
    }
    return true;
}

IngestReport CorpusStore::ingest(std::istream& in) {
    IngestReport report;
    exec(db_, "BEGIN");
    try {
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (text::collapse_whitespace(line).empty()) continue;
            PageRecord page;
            try {
                page = parse_page_document(line);
            } catch (const Error& e) {
                report.errors.push_back({line_no, e.what()});
                continue;
            }
            std::string conflict;
            if (insert_page(page, page_document(page).dump(), conflict)) {
                ++report.count;
            } else {
                report.duplicates.push_back({line_no, conflict});
            }
        }
        exec(db_, "COMMIT");
    } catch (...) {
        exec(db_, "ROLLBACK");
        throw;
    }
    return report;
}

IngestReport CorpusStore::ingest_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot read corpus file '" + path + "'");
    return ingest(in);
}

std::optional<std::string> CorpusStore::try_resolve(std::string_view name) const {
    const std::string canon = text::canonicalize(name);
    if (canon.empty()) return std::nullopt;
    {
        Statement q(db_, "SELECT title FROM pages WHERE canon = ?1");
        q.bind(1, canon);
        if (q.step()) return q.text(0);
    }
    Statement q(db_, "SELECT p.title FROM aliases a JOIN pages p ON p.page_id = a.page_id WHERE a.canon = ?1");
    q.bind(1, canon);
    if (q.step()) return q.text(0);
    return std::nullopt;
}

std::string CorpusStore::resolve_alias(std::string_view name) const {
    auto title = try_resolve(name);
    if (!title) fail(ErrorCode::NotFound, "no page or alias named '" + std::string(name) + "'");
    return *title;
}

std::optional<PageRecord> CorpusStore::find_page(std::string_view name) const {
    auto title = try_resolve(name);
    if (!title) return std::nullopt;

    PageRecord page;
    {
        Statement q(db_, "SELECT page_id, title FROM pages WHERE canon = ?1");
        q.bind(1, text::canonicalize(*title));
        if (!q.step()) return std::nullopt;
        page.page_id = q.integer(0);
        page.title = q.text(1);
    }
    {
        Statement q(db_, "SELECT alias FROM page_aliases WHERE page_id = ?1 ORDER BY ord");
        q.bind(1, page.page_id);
        while (q.step()) page.aliases.push_back(q.text(0));
    }
    {
        Statement q(db_, "SELECT idx, section, body FROM paragraphs WHERE page_id = ?1 ORDER BY idx");
        q.bind(1, page.page_id);
        while (q.step()) page.paragraphs.push_back({static_cast<int>(q.integer(0)), q.text(1), q.text(2)});
    }
    {
        Statement q(db_, "SELECT anchor, target, paragraph FROM links WHERE page_id = ?1 ORDER BY ord");
        q.bind(1, page.page_id);
        while (q.step()) {
            Outlink l{q.text(0), q.text(1), static_cast<int>(q.integer(2)), {}};
            page.outlinks.push_back(std::move(l));
        }
    }
    for (auto& l : page.outlinks) l.resolved_title = try_resolve(l.target_title).value_or("");
    page.attributes = attributes(page.title);
    return page;
}

PageRecord CorpusStore::get_page(std::string_view title) const {
    auto page = find_page(title);
    if (!page) fail(ErrorCode::NotFound, "page not found: '" + std::string(title) + "'");
    return std::move(*page);
}

AttributeMap CorpusStore::attributes(std::string_view title) const {
    AttributeMap out;
    auto resolved = try_resolve(title);
    if (!resolved) return out;
    Statement q(db_,
                "SELECT a.key, a.value FROM attributes a JOIN pages p ON p.page_id = a.page_id "
                "WHERE p.canon = ?1 ORDER BY a.key");
    q.bind(1, text::canonicalize(*resolved));
    while (q.step()) out[q.text(0)] = q.text(1);
    return out;
}

std::vector<std::string> CorpusStore::titles() const {
    std::vector<std::string> out;
    Statement q(db_, "SELECT title FROM pages ORDER BY page_id");
    while (q.step()) out.push_back(q.text(0));
    return out;
}

std::size_t CorpusStore::page_count() const {
    Statement q(db_, "SELECT COUNT(*) FROM pages");
    q.step();
    return static_cast<std::size_t>(q.integer(0));
}

}  // namespace hopforge
