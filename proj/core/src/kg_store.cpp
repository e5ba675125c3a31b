#include "canoe/kg_store.hpp"

#include <algorithm>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "canoe/errors.hpp"
#include "canoe/text_norm.hpp"
#include "canoe/util.hpp"

namespace canoe::kg {

namespace {

std::string entity_id(const std::string& label) {
    MatchPolicy policy;
    policy.strip_punct_edges = false;
    policy.article_strip = false;
    return normalize(label, policy);  // trim + case-fold + whitespace collapse
}

std::tuple<const std::string&, const std::string&, const std::string&> key_of(const Triple& t) {
    return {t.head.id, t.relation.id, t.tail.id};
}

}  // namespace

bool triple_less(const Triple& a, const Triple& b) { return key_of(a) < key_of(b); }

Path make_path(std::vector<Triple> hops) {
    if (hops.size() < 2 || hops.size() > 4) {
        throw Error("path must have 2..4 hops, got " + std::to_string(hops.size()));
    }
    std::set<std::string> seen;
    seen.insert(hops.front().head.id);
    for (std::size_t i = 0; i < hops.size(); ++i) {
        if (i + 1 < hops.size() && hops[i].tail.id != hops[i + 1].head.id) {
            throw Error("path hops do not chain at position " + std::to_string(i));
        }
        if (!seen.insert(hops[i].tail.id).second) {
            throw Error("path repeats entity '" + hops[i].tail.id + "'");
        }
    }
    Path p;
    p.answer = hops.back().tail;
    p.hops = std::move(hops);
    return p;
}

TripleStore TripleStore::from_text(const std::string& text, IngestStats* stats) {
    IngestStats local;
    TripleStore store;
    std::set<std::tuple<std::string, std::string, std::string>> seen;

    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        ++local.lines_read;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string trimmed = trim(line);
        if (trimmed.empty() || trimmed.front() == '#') continue;

        const auto fields = split(line, '\t');
        if (fields.size() != 4) {
            throw ParseError("expected 4 tab-separated fields, got " +
                                 std::to_string(fields.size()),
                             line_no);
        }
        const std::string head_label = trim(fields[0]);
        const std::string rel_id = trim(fields[1]);
        const std::string rel_desc = trim(fields[2]);
        const std::string tail_label = trim(fields[3]);
        if (head_label.empty() || rel_id.empty() || rel_desc.empty() || tail_label.empty()) {
            throw ParseError("empty field in triple record", line_no);
        }

        const std::string head_id = entity_id(head_label);
        const std::string tail_id = entity_id(tail_label);
        if (head_id == tail_id) {
            ++local.self_loops_skipped;
            continue;
        }
        if (!seen.insert({head_id, rel_id, tail_id}).second) {
            ++local.duplicates_skipped;
            continue;
        }

        const auto ent = [&](const std::string& id, const std::string& label) -> Entity {
            const auto it = store.entities_.find(id);
            if (it != store.entities_.end()) return it->second;
            Entity e{id, label};
            store.entities_.emplace(id, e);
            return e;
        };
        const auto rel = [&](const std::string& id, const std::string& desc) -> Relation {
            const auto it = store.relations_.find(id);
            if (it != store.relations_.end()) return it->second;
            Relation r{id, desc};
            store.relations_.emplace(id, r);
            return r;
        };

        Triple t;
        t.head = ent(head_id, head_label);
        t.relation = rel(rel_id, rel_desc);
        t.tail = ent(tail_id, tail_label);
        store.triples_.push_back(std::move(t));
        ++local.triples_added;
    }

    std::sort(store.triples_.begin(), store.triples_.end(), triple_less);
    for (std::uint32_t i = 0; i < store.triples_.size(); ++i) {
        store.adjacency_[store.triples_[i].head.id].push_back(i);
    }

    if (stats) *stats = local;
    return store;
}

TripleStore TripleStore::load_tsv(const std::string& path, IngestStats* stats) {
    return from_text(read_file(path), stats);
}

const std::vector<std::uint32_t>& TripleStore::outgoing(const std::string& head_id) const {
    static const std::vector<std::uint32_t> kEmpty;
    const auto it = adjacency_.find(head_id);
    return it == adjacency_.end() ? kEmpty : it->second;
}

std::vector<Triple> TripleStore::sample_triples(std::size_t count, std::uint64_t seed) const {
    if (count > triples_.size()) {
        throw CapacityError("sample_triples: requested " + std::to_string(count) +
                            " triples from a store of " + std::to_string(triples_.size()));
    }
    std::mt19937_64 rng(seed);
    const auto indices = sample_indices(rng, triples_.size(), count);
    std::vector<Triple> out;
    out.reserve(count);
    for (const auto i : indices) out.push_back(triples_[i]);
    return out;
}

std::vector<Path> TripleStore::extract_paths(std::size_t n, std::size_t max_paths,
                                             std::uint64_t seed) const {
    if (n < 2 || n > 4) {
        throw ConfigError("extract_paths: hop count must be 2, 3 or 4, got " + std::to_string(n));
    }
    if (max_paths == 0) return {};

    std::vector<Path> out;
    std::vector<Triple> hops;
    std::set<std::string> visited;

    // Depth-first enumeration in canonical triple order; truncated once
    // max_paths chains have been collected.
    const std::function<bool(const std::string&)> extend = [&](const std::string& frontier) {
        for (const auto idx : outgoing(frontier)) {
            const Triple& t = triples_[idx];
            if (visited.count(t.tail.id)) continue;
            hops.push_back(t);
            visited.insert(t.tail.id);
            if (hops.size() == n) {
                out.push_back(make_path(hops));
            } else if (!extend(t.tail.id)) {
                return false;
            }
            visited.erase(t.tail.id);
            hops.pop_back();
            if (out.size() >= max_paths) return false;
        }
        return true;
    };

    for (const Triple& first : triples_) {
        hops.assign(1, first);
        visited = {first.head.id, first.tail.id};
        if (!extend(first.tail.id)) break;
    }

    std::mt19937_64 rng(seed);
    deterministic_shuffle(out, rng);
    return out;
}

std::string TripleStore::summary_json() const {
    nlohmann::ordered_json j;
    j["entity_count"] = entity_count();
    j["relation_count"] = relation_count();
    j["triple_count"] = triple_count();
    return j.dump();
}

std::string TripleStore::serialize_text() const {
    std::string out;
    for (const Triple& t : triples_) {
        out += t.head.label;
        out += '\t';
        out += t.relation.id;
        out += '\t';
        out += t.relation.description;
        out += '\t';
        out += t.tail.label;
        out += '\n';
    }
    return out;
}

void TripleStore::serialize_tsv(const std::string& path) const { write_file(path, serialize_text()); }

Triple substitute_counterfactual(const Triple& triple, const Entity& cf_tail) {
    if (cf_tail.id == triple.tail.id) {
        throw Error("counterfactual tail equals the original tail '" + triple.tail.id + "'");
    }
    Triple out = triple;
    out.tail = cf_tail;
    return out;
}

Path substitute_counterfactual(const Path& path, const Entity& cf_tail) {
    if (cf_tail.id == path.answer.id) {
        throw Error("counterfactual tail equals the original answer '" + path.answer.id + "'");
    }
    std::vector<Triple> hops = path.hops;
    hops.back().tail = cf_tail;
    return make_path(std::move(hops));  // re-checks the no-repeat invariant
}

StoreCfSource::StoreCfSource(const TripleStore& store) : store_(&store) {
    std::map<std::string, std::set<std::string>> tails;
    for (const Triple& t : store.triples()) tails[t.relation.id].insert(t.tail.id);
    for (auto& [rel, ids] : tails) {
        tails_by_relation_[rel].assign(ids.begin(), ids.end());
    }
}

std::string StoreCfSource::propose(const Triple& triple, std::uint64_t seed) {
    const auto it = tails_by_relation_.find(triple.relation.id);
    if (it == tails_by_relation_.end()) {
        throw CapacityError("no tails recorded for relation " + triple.relation.id);
    }
    std::vector<std::string> candidates;
    candidates.reserve(it->second.size());
    for (const auto& id : it->second) {
        if (id != triple.tail.id) candidates.push_back(id);
    }
    if (candidates.empty()) {
        throw CapacityError("relation " + triple.relation.id +
                            " has no alternative tail for counterfactual substitution");
    }
    std::mt19937_64 rng(seed);
    const std::string& id = candidates[bounded_uint(rng, candidates.size())];
    return store_->entities().at(id).label;
}

}  // namespace canoe::kg
