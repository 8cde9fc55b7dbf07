#pragma once

#include <cstdint>
#include <cstdio>
#include <functional>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace rcas {

inline constexpr std::string_view kToolVersion = "0.1.0";

/// Violation of an operation precondition or an internal invariant.
class ContractError : public std::logic_error {
public:
    explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

/// Malformed input file. Carries the offending line when known.
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
    ParseError(const std::string& path, std::size_t line, const std::string& msg)
        : std::runtime_error(path + ":" + std::to_string(line) + ": " + msg) {}
};

/// Requested problem size exceeds the configured memory budget.
class CapacityError : public std::runtime_error {
public:
    explicit CapacityError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ContractError(msg);
}

namespace detail {

template <typename T>
void write_raw(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is, const char* what) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw ParseError(std::string("unexpected end of file reading ") + what);
    return v;
}

}  // namespace detail

/// FNV-1a, used for config hashes and reach-set fingerprints.
inline std::uint64_t fnv1a_bytes(const void* data, std::size_t n,
                                 std::uint64_t h = 14695981039346656037ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 14695981039346656037ull) {
    return fnv1a_bytes(s.data(), s.size(), h);
}

/// Runs fn(begin..end) chunked over `threads` workers. Chunk boundaries are a
/// pure function of (n, threads), so per-chunk outputs can be merged in index
/// order to give results independent of scheduling.
inline void parallel_chunks(std::size_t n, unsigned threads,
                            const std::function<void(std::size_t chunk, std::size_t begin, std::size_t end)>& fn) {
    if (threads <= 1 || n < 2) {
        fn(0, 0, n);
        return;
    }
    const std::size_t nchunks = std::min<std::size_t>(threads, n);
    std::vector<std::thread> pool;
    pool.reserve(nchunks);
    for (std::size_t c = 0; c < nchunks; ++c) {
        const std::size_t b = n * c / nchunks;
        const std::size_t e = n * (c + 1) / nchunks;
        pool.emplace_back([&fn, c, b, e] { fn(c, b, e); });
    }
    for (auto& t : pool) t.join();
}

/// Shortest decimal form that round-trips a double exactly.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    double back = 0;
    std::sscanf(buf, "%lf", &back);
    if (back == v) {
        for (int prec = 1; prec < 17; ++prec) {
            char shorter[40];
            std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
            std::sscanf(shorter, "%lf", &back);
            if (back == v) return shorter;
        }
    }
    return buf;
}

}  // namespace rcas
