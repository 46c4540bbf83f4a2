#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sniforge {

// Unrecoverable problem with an input file or byte stream.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::uint64_t splitmix64(std::uint64_t& state);

// Mixes a base seed with tag words into an independent stream seed.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags);

// Deterministic RNG wrapper. All draws go through explicit algorithms so
// results do not depend on the standard library's distribution internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Unbiased draw in [0, bound).
    std::uint64_t below(std::uint64_t bound);

    // [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller.
    double normal(double mean, double stddev);

    std::vector<std::uint8_t> bytes(std::size_t n);

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Runs fn(0..n-1) on up to `jobs` threads. jobs <= 1 runs inline.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

std::vector<std::string> split(std::string_view line, char delim);

// Shortest round-trip representation (std::to_chars).
std::string format_double(double v);
double parse_double(std::string_view s);
long long parse_int(std::string_view s);

std::string read_file(const std::string& path);
std::vector<std::uint8_t> read_file_bytes(const std::string& path);

// Writes to a temp file in the same directory, then renames into place.
void write_file_atomic(const std::string& path, std::string_view content);
void write_file_atomic(const std::string& path, const std::vector<std::uint8_t>& content);

}  // namespace sniforge
