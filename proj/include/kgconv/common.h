#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace kgconv {

// Error hierarchy. Every fallible operation in the library throws one of
// these; callers that want to continue (reject logs, retries) catch the
// specific subtype.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

class ContractViolation : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::string raw)
        : Error(what), raw_(std::move(raw)) {}
    const std::string& raw() const { return raw_; }

private:
    std::string raw_;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Lowercase hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view data);

/// Same digest of a file's bytes, streamed. Throws IoError.
std::string sha256_file(const std::string& path);

/// Seed derivation used everywhere randomness is keyed by an item:
/// the first 8 bytes of sha256("<seed>/<key>").
std::uint64_t derive_seed(std::uint64_t seed, std::string_view key);

// Seeded generator with a portable bounded draw. std::uniform_int_distribution
// is implementation-defined, which would make datasets differ across
// standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform integer in [0, n). n must be positive.
    std::size_t below(std::size_t n);

    std::uint64_t next() { return engine_(); }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[below(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
};

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
bool starts_with_ci(std::string_view s, std::string_view prefix);

/// Runs fn(0..n-1) on up to `threads` workers. The first exception thrown
/// by any call is rethrown after all workers finish.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

/// Reads a whole file; throws IoError if it cannot be opened.
std::string read_file(const std::string& path);
/// Writes atomically (temp file + rename).
void write_file(const std::string& path, std::string_view content);

}  // namespace kgconv
