#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace canoe {

// 64-bit FNV-1a. Used wherever a hash feeds an output (mock backends, seed
// derivation) so results do not depend on the standard library's std::hash.
uint64_t fnv1a64(std::string_view data, uint64_t seed = 1469598103934665603ULL);

// Derives an independent sub-seed from (base seed, purpose tag, index).
// All randomness in the library flows through explicit seeds; this keeps
// unrelated sampling streams decoupled without global state.
uint64_t derive_seed(uint64_t base, std::string_view tag, uint64_t index = 0);

// Unbiased draw from [0, n) via rejection sampling. std::uniform_int_distribution
// is implementation-defined, so it cannot back reproducible artifacts.
uint64_t bounded_uint(std::mt19937_64& rng, uint64_t n);

// Uniform double in [0, 1) with 53 random bits.
double uniform01(std::mt19937_64& rng);

// Deterministic Fisher-Yates shuffle built on bounded_uint.
template <typename T>
void deterministic_shuffle(std::vector<T>& items, std::mt19937_64& rng) {
    for (size_t i = items.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(bounded_uint(rng, i));
        std::swap(items[i - 1], items[j]);
    }
}

// Uniform sample without replacement of k indices from [0, n), in random order.
std::vector<size_t> sample_indices(std::mt19937_64& rng, size_t n, size_t k);

// SHA-256 as a lowercase hex string (OpenSSL-backed).
std::string sha256_hex(std::string_view data);

// String helpers shared across modules.
std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
bool contains(std::string_view haystack, std::string_view needle);
size_t count_occurrences(std::string_view haystack, std::string_view needle);
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

// Whitespace token count; the length bookkeeping unit for dataset stats.
size_t word_count(std::string_view s);

// Fixed-precision decimal formatting for CSV output ("%.10g").
std::string format_double(double v);

}  // namespace canoe
