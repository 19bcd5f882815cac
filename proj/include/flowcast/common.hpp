#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace flowcast {

// ============================================================================
// Errors
// ============================================================================

// Every module failure carries a short machine-readable kind ("MissingColumn",
// "ShapeMismatch", ...) next to the human message so callers and the CLI can
// branch on it without string-parsing the message.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(kind + ": " + message), kind_(std::move(kind)) {}

    const std::string& kind() const { return kind_; }

private:
    std::string kind_;
};

// ============================================================================
// Deterministic RNG
// ============================================================================

// xoshiro-free wrapper around a 64-bit splitmix core. All draws are derived
// arithmetically from the state so the same seed yields the same stream on
// every platform (std::<distribution> output is implementation-defined).
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {
        // warm up so that small seeds diverge immediately
        next_u64();
        next_u64();
    }

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform in [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    uint64_t uniform_index(uint64_t n) {
        // rejection sampling keeps the draw exactly uniform
        const uint64_t limit = std::numeric_limits<uint64_t>::max() - std::numeric_limits<uint64_t>::max() % n;
        uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return x % n;
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (size_t i = items.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(uniform_index(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Derive an independent child seed from (seed, stream index); used so that
// parallel or per-candidate work gets stable per-slot randomness.
inline uint64_t derive_seed(uint64_t seed, uint64_t stream) {
    uint64_t z = seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// ============================================================================
// Dense row-major matrix
// ============================================================================

struct Mat {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(size_t r, size_t c) : rows(r), cols(c), v(r * c, 0.0) {}

    double& at(size_t r, size_t c) { return v[r * cols + c]; }
    double at(size_t r, size_t c) const { return v[r * cols + c]; }
    double* row(size_t r) { return v.data() + r * cols; }
    const double* row(size_t r) const { return v.data() + r * cols; }
    size_t size() const { return v.size(); }
    void zero() { std::fill(v.begin(), v.end(), 0.0); }
    void resize(size_t r, size_t c) {
        rows = r;
        cols = c;
        v.assign(r * c, 0.0);
    }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }
};

// Non-owning views over contiguous row blocks; GEMM kernels work on these so
// per-timestep slices of a sequence buffer multiply without copies.
struct MatRef {
    size_t rows = 0, cols = 0;
    double* p = nullptr;
    MatRef() = default;
    MatRef(Mat& m) : rows(m.rows), cols(m.cols), p(m.v.data()) {}
    MatRef(size_t r, size_t c, double* ptr) : rows(r), cols(c), p(ptr) {}
    double* row(size_t r) const { return p + r * cols; }
};

struct CMatRef {
    size_t rows = 0, cols = 0;
    const double* p = nullptr;
    CMatRef() = default;
    CMatRef(const Mat& m) : rows(m.rows), cols(m.cols), p(m.v.data()) {}
    CMatRef(const MatRef& m) : rows(m.rows), cols(m.cols), p(m.p) {}
    CMatRef(size_t r, size_t c, const double* ptr) : rows(r), cols(c), p(ptr) {}
    const double* row(size_t r) const { return p + r * cols; }
};

inline MatRef slice_rows(Mat& m, size_t r0, size_t n) { return {n, m.cols, m.v.data() + r0 * m.cols}; }
inline CMatRef slice_rows(const Mat& m, size_t r0, size_t n) {
    return {n, m.cols, m.v.data() + r0 * m.cols};
}

// C (+)= A * B
void gemm_nn(CMatRef a, CMatRef b, MatRef c, bool accumulate);
// C (+)= A * B^T
void gemm_nt(CMatRef a, CMatRef b, MatRef c, bool accumulate);
// C (+)= A^T * B
void gemm_tn(CMatRef a, CMatRef b, MatRef c, bool accumulate);

Mat transpose(const Mat& m);

// ============================================================================
// Hashing / encoding
// ============================================================================

inline uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t fnv1a64(const std::string& s, uint64_t h = 0xcbf29ce484222325ULL) {
    return fnv1a64(s.data(), s.size(), h);
}

std::string to_hex(uint64_t x);

std::string base64_encode(const void* data, size_t len);
std::vector<unsigned char> base64_decode(const std::string& text);

// ============================================================================
// Number formatting
// ============================================================================

// Shortest decimal string that round-trips; canonical CSV output depends on it.
inline std::string format_double(double x) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

inline bool parse_double(const std::string& s, double& out) {
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    auto res = std::from_chars(begin, end, out);
    return res.ec == std::errc() && res.ptr == end;
}

}  // namespace flowcast
