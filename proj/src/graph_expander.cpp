#include <hopforge/graph_expander.hpp>

#include <hopforge/error.hpp>
#include <hopforge/text.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace hopforge {

using nlohmann::json;

void ExpansionStrategy::validate() const {
    if (branching.empty()) fail(ErrorCode::Config, "expansion strategy must not be empty");
    for (int b : branching) {
        if (b < 1) fail(ErrorCode::Config, "expansion strategy entries must be >= 1, got " + std::to_string(b));
    }
}

void ScoreWeights::validate() const {
    for (double w : {conf, rel, sem, par}) {
        if (!(w >= 0.0) || !std::isfinite(w)) fail(ErrorCode::Config, "score weights must be non-negative");
    }
    if (!(conf + rel + sem + par > 0.0)) fail(ErrorCode::Config, "score weights must not all be zero");
}

// ---------------------------------------------------------------------------

const GraphNode& EvidenceGraph::node(int id) const {
    auto it = std::find_if(nodes.begin(), nodes.end(), [&](const GraphNode& n) { return n.id == id; });
    if (it == nodes.end()) fail(ErrorCode::NotFound, "graph has no node " + std::to_string(id));
    return *it;
}

const GraphEdge* EvidenceGraph::parent_edge(int child_id) const {
    auto it = std::find_if(edges.begin(), edges.end(), [&](const GraphEdge& e) { return e.child == child_id; });
    return it == edges.end() ? nullptr : &*it;
}

std::vector<int> EvidenceGraph::path_from_seed(int id) const {
    std::vector<int> path{id};
    std::size_t guard = 0;
    while (path.back() != seed_id) {
        const GraphEdge* e = parent_edge(path.back());
        if (e == nullptr || ++guard > nodes.size()) fail(ErrorCode::InvalidInput, "node not connected to seed");
        path.push_back(e->parent);
    }
    std::reverse(path.begin(), path.end());
    return path;
}

std::vector<const GraphNode*> EvidenceGraph::layer(int depth) const {
    std::vector<const GraphNode*> out;
    for (const auto& n : nodes) {
        if (n.depth == depth) out.push_back(&n);
    }
    return out;
}

int EvidenceGraph::max_depth() const {
    int d = 0;
    for (const auto& n : nodes) d = std::max(d, n.depth);
    return d;
}

bool EvidenceGraph::has_title(std::string_view title) const {
    const std::string key = text::canonicalize(title);
    return std::any_of(nodes.begin(), nodes.end(), [&](const GraphNode& n) { return text::canonicalize(n.title) == key; });
}

void EvidenceGraph::validate() const {
    std::set<int> ids;
    std::set<std::string> titles;
    int roots = 0;
    for (const auto& n : nodes) {
        if (!ids.insert(n.id).second) fail(ErrorCode::InvalidInput, "duplicate node id " + std::to_string(n.id));
        if (!titles.insert(text::canonicalize(n.title)).second) {
            fail(ErrorCode::InvalidInput, "duplicate node title '" + n.title + "'");
        }
        if (n.depth == 0) {
            ++roots;
            if (n.id != seed_id) fail(ErrorCode::InvalidInput, "depth-0 node is not the seed");
        }
        if (n.depth < 0) fail(ErrorCode::InvalidInput, "negative depth");
    }
    if (roots != 1) fail(ErrorCode::InvalidInput, "graph must have exactly one depth-0 node");
    std::map<int, int> incoming;
    for (const auto& e : edges) {
        if (!ids.count(e.parent) || !ids.count(e.child)) fail(ErrorCode::InvalidInput, "edge endpoint missing");
        if (node(e.child).depth != node(e.parent).depth + 1) {
            fail(ErrorCode::InvalidInput, "edge " + std::to_string(e.parent) + "->" + std::to_string(e.child) +
                                              " breaks depth layering");
        }
        if (!(e.confidence >= 0.0 && e.confidence <= 1.0)) fail(ErrorCode::InvalidInput, "edge confidence outside [0,1]");
        ++incoming[e.child];
    }
    for (const auto& n : nodes) {
        const int in = incoming.count(n.id) ? incoming[n.id] : 0;
        if (n.id == seed_id ? in != 0 : in != 1) {
            fail(ErrorCode::InvalidInput, "node " + std::to_string(n.id) + " must have exactly one parent");
        }
    }
}

json to_json(const EvidenceGraph& g) {
    json nodes = json::array();
    for (const auto& n : g.nodes) {
        nodes.push_back({{"id", n.id}, {"title", n.title}, {"type", n.type}, {"depth", n.depth}, {"attributes", n.attributes}});
    }
    json edges = json::array();
    for (const auto& e : g.edges) {
        edges.push_back({{"parent", e.parent},
                         {"child", e.child},
                         {"relation", to_string(e.relation)},
                         {"direction", to_string(e.direction)},
                         {"confidence", e.confidence},
                         {"evidence", e.evidence}});
    }
    return {{"seed_id", g.seed_id}, {"nodes", nodes}, {"edges", edges}};
}

EvidenceGraph graph_from_json(const json& j) {
    EvidenceGraph g;
    try {
        g.seed_id = j.at("seed_id").get<int>();
        for (const auto& n : j.at("nodes")) {
            g.nodes.push_back({n.at("id").get<int>(), n.at("title").get<std::string>(), n.at("type").get<std::string>(),
                               n.at("depth").get<int>(), n.value("attributes", AttributeMap{})});
        }
        for (const auto& e : j.at("edges")) {
            auto rel = parse_relation(e.at("relation").get<std::string>());
            auto dir = parse_direction(e.at("direction").get<std::string>());
            if (!rel || !dir) fail(ErrorCode::InvalidInput, "edge has unknown relation or direction");
            g.edges.push_back({e.at("parent").get<int>(), e.at("child").get<int>(), *rel, *dir,
                               e.at("confidence").get<double>(), e.at("evidence").get<std::string>()});
        }
    } catch (const json::exception& ex) {
        fail(ErrorCode::InvalidInput, std::string("malformed graph JSON: ") + ex.what());
    }
    return g;
}

GraphFormat parse_graph_format(std::string_view name) {
    if (name == "json") return GraphFormat::json;
    if (name == "dot") return GraphFormat::dot;
    fail(ErrorCode::Usage, "unknown graph format '" + std::string(name) + "' (expected json or dot)");
}

namespace {

std::string dot_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        if (c == '"' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    return out;
}

}  // namespace

std::string export_graph(const EvidenceGraph& g, GraphFormat format) {
    if (format == GraphFormat::json) return to_json(g).dump(2) + "\n";
    std::ostringstream out;
    out << "digraph evidence {\n";
    for (const auto& n : g.nodes) {
        out << "  n" << n.id << " [label=\"" << dot_escape(n.title) << "\", type=\"" << dot_escape(n.type)
            << "\", depth=" << n.depth << "];\n";
    }
    for (const auto& e : g.edges) {
        out << "  n" << e.parent << " -> n" << e.child << " [label=\"" << to_string(e.relation) << " ("
            << to_string(e.direction) << ", " << json(e.confidence).dump() << ")\"];\n";
    }
    out << "}\n";
    return out.str();
}

std::string export_graph(const EvidenceGraph& g, std::string_view format) {
    return export_graph(g, parse_graph_format(format));
}

// ---------------------------------------------------------------------------

double max_trigram_similarity(const std::string& title, const std::vector<std::string>& others) {
    double best = 0.0;
    for (const auto& o : others) best = std::max(best, text::trigram_jaccard(title, o));
    return best;
}

TitleSimilarity embedding_similarity(ModelGateway& gateway) {
    return [&gateway](const std::string& title, const std::vector<std::string>& others) {
        if (others.empty()) return 0.0;
        std::vector<std::string> texts{title};
        texts.insert(texts.end(), others.begin(), others.end());
        const auto vecs = gateway.embed(texts);
        double best = 0.0;
        for (std::size_t i = 1; i < vecs.size(); ++i) {
            const double cos = std::inner_product(vecs[0].begin(), vecs[0].end(), vecs[i].begin(), 0.0);
            best = std::max(best, std::clamp(cos, 0.0, 1.0));
        }
        return best;
    };
}

ScoreTerms score_terms(const RelationJudgment& judgment, const CandidateEntity& candidate, const LayerState& layer,
                       const ScoreWeights& w, const TitleSimilarity& similarity) {
    ScoreTerms t;
    t.confidence = judgment.confidence;
    const auto repeats = std::count(layer.selected_relations.begin(), layer.selected_relations.end(), judgment.relation);
    t.rel_div = 1.0 / (1.0 + static_cast<double>(repeats));
    t.sem_div = layer.selected_titles.empty()
                    ? 1.0
                    : 1.0 - std::clamp(similarity(candidate.title, layer.selected_titles), 0.0, 1.0);
    t.par_div = layer.selected_paragraph_indices.count(candidate.evidence.paragraph_index) ? 0.0 : 1.0;
    t.total = w.conf * t.confidence + w.rel * t.rel_div + w.sem * t.sem_div + w.par * t.par_div;
    return t;
}

double score_candidate(const RelationJudgment& judgment, const CandidateEntity& candidate, const LayerState& layer,
                       const ScoreWeights& weights, const TitleSimilarity& similarity) {
    return score_terms(judgment, candidate, layer, weights, similarity).total;
}

std::size_t SeededRng::below(std::size_t n) {
    if (n == 0) fail(ErrorCode::Precondition, "SeededRng::below(0)");
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return static_cast<std::size_t>(x % bound);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::vector<CandidateEntity> sample_candidates(const std::vector<CandidateEntity>& candidates,
                                               const std::set<std::string>& existing_titles, std::size_t pool_size,
                                               std::uint64_t rng_seed) {
    std::set<std::string> existing;
    for (const auto& t : existing_titles) existing.insert(text::canonicalize(t));

    std::vector<CandidateEntity> ranked;
    for (const auto& c : candidates) {
        if (!existing.count(text::canonicalize(c.title))) ranked.push_back(c);
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const CandidateEntity& a, const CandidateEntity& b) {
        if (a.mention_frequency != b.mention_frequency) return a.mention_frequency > b.mention_frequency;
        return a.title < b.title;
    });
    if (ranked.size() <= pool_size) return ranked;

    const std::size_t top = (7 * pool_size + 9) / 10;  // ceil(0.7 * pool_size)
    std::vector<CandidateEntity> out(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(top));
    std::vector<CandidateEntity> rest(ranked.begin() + static_cast<std::ptrdiff_t>(top), ranked.end());
    SeededRng rng(rng_seed);
    const std::size_t draws = std::min(pool_size - top, rest.size());
    for (std::size_t i = 0; i < draws; ++i) {
        const std::size_t j = i + rng.below(rest.size() - i);
        std::swap(rest[i], rest[j]);
        out.push_back(rest[i]);
    }
    return out;
}

json to_json(const FrontierTrace& t) {
    json sampled = json::array();
    for (const auto& c : t.sampled) sampled.push_back(c.title);
    json scored = json::array();
    for (const auto& s : t.scored) {
        scored.push_back({{"candidate", s.candidate.title},
                          {"judgment", to_json(s.judgment)},
                          {"terms",
                           {{"confidence", s.terms.confidence},
                            {"rel_div", s.terms.rel_div},
                            {"sem_div", s.terms.sem_div},
                            {"par_div", s.terms.par_div},
                            {"score", s.terms.total}}},
                          {"selected", s.selected}});
    }
    json out = {{"node_id", t.node_id}, {"title", t.title}, {"sampled", sampled}, {"judgments", scored},
                {"no_relation", t.no_relation}};
    if (!t.note.empty()) out["note"] = t.note;
    return out;
}

GraphExpander::GraphExpander(const CorpusStore& store, NodeBuilder& nodes, RelationEngine& relations,
                             ExpanderConfig config, ModelGateway* embeddings)
    : store_(store), nodes_(nodes), relations_(relations), config_(config) {
    if (config_.pool_multiplier < 1) fail(ErrorCode::Config, "pool_multiplier must be >= 1");
    if (config_.embedding_similarity) {
        if (embeddings == nullptr) fail(ErrorCode::Config, "embedding similarity needs a gateway");
        similarity_ = embedding_similarity(*embeddings);
    } else {
        similarity_ = max_trigram_similarity;
    }
}

ExpansionResult GraphExpander::expand(std::string_view seed_title, const ExpansionStrategy& strategy,
                                      const ScoreWeights& weights, std::uint64_t rng_seed) {
    strategy.validate();
    weights.validate();
    const PageRecord seed = store_.get_page(seed_title);

    ExpansionResult result;
    EvidenceGraph& g = result.graph;
    g.seed_id = 0;
    g.nodes.push_back({0, seed.title, "seed", 0, seed.attributes});

    std::vector<int> frontier{0};
    for (std::size_t d = 0; d < strategy.branching.size() && !frontier.empty(); ++d) {
        const auto k = static_cast<std::size_t>(strategy.branching[d]);
        LayerState layer;
        std::vector<int> next;
        for (int parent_id : frontier) {
            const GraphNode parent_node = g.node(parent_id);
            FrontierTrace trace{parent_id, parent_node.title, {}, {}, {}, {}};
            auto page = store_.find_page(parent_node.title);
            if (!page) {
                trace.note = "page not in store";
                result.trace.push_back(std::move(trace));
                continue;
            }
            CandidateSet candidates;
            CleanDocument doc;
            try {
                doc = nodes_.preprocess(*page);
                candidates = nodes_.build(*page);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::InvalidInput) throw;
                trace.note = e.what();
                result.trace.push_back(std::move(trace));
                continue;
            }
            if (parent_id == g.seed_id) result.seed_candidates = candidates;

            std::set<std::string> existing;
            for (const auto& n : g.nodes) existing.insert(n.title);
            trace.sampled = sample_candidates(candidates.accepted, existing, config_.pool_multiplier * k,
                                              mix_seed(rng_seed, static_cast<std::uint64_t>(parent_id)));

            const EntityRef parent_ref = EntityRef::of(*page);
            for (const auto& c : trace.sampled) {
                EntityRef child_ref = EntityRef::of(c);
                if (auto child_page = store_.find_page(c.title)) {
                    for (const auto& a : child_page->aliases) child_ref.surface_forms.push_back(a);
                }
                auto judgment = relations_.classify_relation(select_premises(doc, parent_ref, child_ref), parent_ref, child_ref);
                if (!judgment) {
                    trace.no_relation.push_back(c.title);
                    continue;
                }
                trace.scored.push_back({c, *judgment, {}, false});
            }

            // Rank once against the layer state, then take the top K.
            for (auto& s : trace.scored) s.terms = score_terms(s.judgment, s.candidate, layer, weights, similarity_);
            std::vector<std::size_t> order(trace.scored.size());
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                const auto& x = trace.scored[a];
                const auto& y = trace.scored[b];
                if (x.terms.total != y.terms.total) return x.terms.total > y.terms.total;
                return x.candidate.title < y.candidate.title;
            });
            for (std::size_t i = 0; i < order.size() && i < k; ++i) {
                auto& s = trace.scored[order[i]];
                s.selected = true;
                const int id = static_cast<int>(g.nodes.size());
                g.nodes.push_back({id, s.candidate.title, std::string(to_string(s.candidate.label)), static_cast<int>(d) + 1,
                                   s.candidate.attributes});
                g.edges.push_back({parent_id, id, s.judgment.relation, s.judgment.direction, s.judgment.confidence,
                                   s.judgment.premise});
                layer.selected_relations.push_back(s.judgment.relation);
                layer.selected_titles.push_back(s.candidate.title);
                layer.selected_paragraph_indices.insert(s.candidate.evidence.paragraph_index);
                next.push_back(id);
            }
            result.trace.push_back(std::move(trace));
        }
        frontier = std::move(next);
    }
    g.validate();
    return result;
}

}  // namespace hopforge
