#pragma once

#include <cstdint>
#include <cstring>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace chanform {

inline constexpr double kSpeedOfLight = 299792458.0;          // m/s
inline constexpr double kVacuumPermittivity = 8.8541878128e-12; // F/m

// Error taxonomy shared by all modules. CLI maps kinds to exit codes, tests
// assert on them.
enum class ErrorKind {
    validation,
    placement_failure,
    grid_too_large,
    out_of_bounds,
    invalid_endpoint,
    missing_modality,
    schema_mismatch,
    no_path,
    degenerate_link,
    divergence,
    io,
    usage,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
    throw Error(kind, msg);
}

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
    if (!cond) fail(kind, msg);
}

// FNV-1a, used for content hashes (datasets, parameter blocks, reports).
inline std::uint64_t fnv1a(const void* data, std::size_t n,
                           std::uint64_t h = 1469598103934665603ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t hash_doubles(const std::vector<double>& v,
                                  std::uint64_t h = 1469598103934665603ull) {
    if (v.empty()) return h;
    return fnv1a(v.data(), v.size() * sizeof(double), h);
}

inline std::uint64_t hash_string(const std::string& s,
                                 std::uint64_t h = 1469598103934665603ull) {
    return fnv1a(s.data(), s.size(), h);
}

// Global worker-count knob (CLI --parallel). Results never depend on it:
// parallel loops write to pre-sized slots and reduce sequentially.
int max_workers();
void set_max_workers(int n);

// Runs fn(i) for i in [0, n). Chunked static schedule over index slots.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    int workers = max_workers();
    if (workers <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::size_t nthreads = std::min<std::size_t>(workers, n);
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    std::exception_ptr first_error;
    std::mutex mtx;
    for (std::size_t t = 0; t < nthreads; ++t) {
        pool.emplace_back([&, t]() {
            try {
                for (std::size_t i = t; i < n; i += nthreads) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mtx);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace chanform
