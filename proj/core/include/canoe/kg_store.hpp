#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace canoe::kg {

struct Entity {
    std::string id;     // normalized label: trimmed, case-folded, whitespace-collapsed
    std::string label;  // surface form from the first occurrence in the input

    friend bool operator==(const Entity& a, const Entity& b) { return a.id == b.id; }
    friend bool operator!=(const Entity& a, const Entity& b) { return !(a == b); }
};

struct Relation {
    std::string id;           // e.g. "P495"
    std::string description;  // e.g. "country of origin"

    friend bool operator==(const Relation& a, const Relation& b) { return a.id == b.id; }
    friend bool operator!=(const Relation& a, const Relation& b) { return !(a == b); }
};

struct Triple {
    Entity head;
    Relation relation;
    Entity tail;

    friend bool operator==(const Triple& a, const Triple& b) {
        return a.head == b.head && a.relation == b.relation && a.tail == b.tail;
    }
    friend bool operator!=(const Triple& a, const Triple& b) { return !(a == b); }
};

// Canonical order: by (head.id, relation.id, tail.id).
bool triple_less(const Triple& a, const Triple& b);

struct Path {
    std::vector<Triple> hops;  // length in [2,4]; hops[i].tail == hops[i+1].head
    Entity answer;             // tail of the last hop
};

// Builds `answer` and checks the chaining / no-repeated-entity invariants.
// Throws Error on violation.
Path make_path(std::vector<Triple> hops);

struct IngestStats {
    std::size_t lines_read = 0;
    std::size_t triples_added = 0;
    std::size_t duplicates_skipped = 0;
    std::size_t self_loops_skipped = 0;
};

// Immutable triple store. Read-only after construction; safe for concurrent
// readers.
class TripleStore {
public:
    // TSV, one triple per line: head \t relation_id \t relation_desc \t tail.
    // Blank lines and lines starting with '#' are skipped. Malformed lines
    // raise ParseError with the line number; self-loops (head == tail after
    // normalization) are skipped and counted in stats.
    static TripleStore from_text(const std::string& text, IngestStats* stats = nullptr);
    static TripleStore load_tsv(const std::string& path, IngestStats* stats = nullptr);

    std::size_t entity_count() const { return entities_.size(); }
    std::size_t relation_count() const { return relations_.size(); }
    std::size_t triple_count() const { return triples_.size(); }

    // Canonical order: sorted by (head, relation, tail).
    const std::vector<Triple>& triples() const { return triples_; }
    const std::map<std::string, Entity>& entities() const { return entities_; }
    const std::map<std::string, Relation>& relations() const { return relations_; }

    bool has_entity(const std::string& id) const { return entities_.count(id) != 0; }

    // Indices into triples() of all triples whose head is `head_id`.
    const std::vector<std::uint32_t>& outgoing(const std::string& head_id) const;

    // Uniform sample without replacement; pure function of (store, count, seed).
    // count > triple_count() -> CapacityError.
    std::vector<Triple> sample_triples(std::size_t count, std::uint64_t seed) const;

    // All simple n-hop chains (no repeated entity), enumerated in canonical
    // order, truncated to max_paths, then shuffled with `seed`. n must be in
    // {2,3,4}. A graph with no n-hop chain yields an empty list.
    std::vector<Path> extract_paths(std::size_t n, std::size_t max_paths, std::uint64_t seed) const;

    // Single-line JSON summary: entity_count / relation_count / triple_count.
    std::string summary_json() const;

    // Canonical TSV serialization; from_text(serialize_text()) round-trips.
    std::string serialize_text() const;
    void serialize_tsv(const std::string& path) const;

private:
    std::vector<Triple> triples_;
    std::map<std::string, Entity> entities_;
    std::map<std::string, Relation> relations_;
    std::map<std::string, std::vector<std::uint32_t>> adjacency_;
};

// Returns (triple.head, triple.relation, cf_tail); the input is not modified.
// cf_tail equal to triple.tail -> Error (the substitution must change the fact).
Triple substitute_counterfactual(const Triple& triple, const Entity& cf_tail);

// Replaces the final tail of the path with cf_tail (and the answer with it).
Path substitute_counterfactual(const Path& path, const Entity& cf_tail);

// Source of "similar but different" entities for counterfactual substitution.
class CounterfactualSource {
public:
    virtual ~CounterfactualSource() = default;
    // Proposes an entity label to replace `original_tail` in the given triple.
    // Implementations should make a fresh proposal per (triple, seed).
    virtual std::string propose(const Triple& triple, std::uint64_t seed) = 0;
};

// Offline fallback: picks a random tail of the same relation, different from
// the original tail. Throws CapacityError when the relation has no other tail.
class StoreCfSource : public CounterfactualSource {
public:
    explicit StoreCfSource(const TripleStore& store);
    std::string propose(const Triple& triple, std::uint64_t seed) override;

private:
    // relation id -> distinct tail entity ids in canonical order
    std::map<std::string, std::vector<std::string>> tails_by_relation_;
    const TripleStore* store_;
};

}  // namespace canoe::kg
