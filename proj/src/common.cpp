#include "flowcast/common.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace flowcast {

namespace {

constexpr size_t kParallelFlopCutoff = 1u << 19;

// Inner kernels use streaming row updates (ikj order) so the compiler can
// vectorize the contiguous accumulation. Each output row is owned by exactly
// one thread, keeping results bit-identical regardless of thread count.

void gemm_nn_rows(CMatRef a, CMatRef b, MatRef c, size_t r0, size_t r1) {
    const size_t n = b.cols;
    const size_t k = a.cols;
    for (size_t i = r0; i < r1; ++i) {
        double* crow = c.row(i);
        const double* arow = a.row(i);
        for (size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b.row(p);
            for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void gemm_nt_rows(CMatRef a, CMatRef b, MatRef c, size_t r0, size_t r1) {
    const size_t n = b.rows;
    const size_t k = a.cols;
    for (size_t i = r0; i < r1; ++i) {
        double* crow = c.row(i);
        const double* arow = a.row(i);
        for (size_t j = 0; j < n; ++j) {
            const double* brow = b.row(j);
            double acc = 0.0;
            for (size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

void gemm_tn_rows(CMatRef a, CMatRef b, MatRef c, size_t r0, size_t r1) {
    // C(a.cols x b.cols) += A^T B; i indexes columns of A.
    const size_t n = b.cols;
    const size_t m = a.rows;
    for (size_t i = r0; i < r1; ++i) {
        double* crow = c.row(i);
        for (size_t p = 0; p < m; ++p) {
            const double av = a.row(p)[i];
            if (av == 0.0) continue;
            const double* brow = b.row(p);
            for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename RowFn>
void run_rows(size_t rows, size_t flops, RowFn&& fn) {
#ifdef _OPENMP
    if (flops >= kParallelFlopCutoff && rows > 1) {
#pragma omp parallel
        {
            const int nt = omp_get_num_threads();
            const int tid = omp_get_thread_num();
            const size_t chunk = (rows + nt - 1) / nt;
            const size_t r0 = std::min(rows, chunk * static_cast<size_t>(tid));
            const size_t r1 = std::min(rows, r0 + chunk);
            if (r0 < r1) fn(r0, r1);
        }
        return;
    }
#else
    (void)flops;
#endif
    fn(0, rows);
}

}  // namespace

void gemm_nn(CMatRef a, CMatRef b, MatRef c, bool accumulate) {
    if (a.cols != b.rows || c.rows != a.rows || c.cols != b.cols)
        throw Error("ShapeMismatch", "gemm_nn operand shapes disagree");
    if (!accumulate)
        for (size_t i = 0; i < c.rows * c.cols; ++i) c.p[i] = 0.0;
    run_rows(a.rows, a.rows * a.cols * b.cols,
             [&](size_t r0, size_t r1) { gemm_nn_rows(a, b, c, r0, r1); });
}

void gemm_nt(CMatRef a, CMatRef b, MatRef c, bool accumulate) {
    if (a.cols != b.cols || c.rows != a.rows || c.cols != b.rows)
        throw Error("ShapeMismatch", "gemm_nt operand shapes disagree");
    if (!accumulate)
        for (size_t i = 0; i < c.rows * c.cols; ++i) c.p[i] = 0.0;
    run_rows(a.rows, a.rows * a.cols * b.rows,
             [&](size_t r0, size_t r1) { gemm_nt_rows(a, b, c, r0, r1); });
}

void gemm_tn(CMatRef a, CMatRef b, MatRef c, bool accumulate) {
    if (a.rows != b.rows || c.rows != a.cols || c.cols != b.cols)
        throw Error("ShapeMismatch", "gemm_tn operand shapes disagree");
    if (!accumulate)
        for (size_t i = 0; i < c.rows * c.cols; ++i) c.p[i] = 0.0;
    run_rows(a.cols, a.rows * a.cols * b.cols,
             [&](size_t r0, size_t r1) { gemm_tn_rows(a, b, c, r0, r1); });
}

Mat transpose(const Mat& m) {
    Mat out(m.cols, m.rows);
    for (size_t i = 0; i < m.rows; ++i)
        for (size_t j = 0; j < m.cols; ++j) out.at(j, i) = m.at(i, j);
    return out;
}

std::string to_hex(uint64_t x) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[x & 0xF];
        x >>= 4;
    }
    return out;
}

static const char* kB64Alphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const void* data, size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::string out;
    out.reserve((len + 2) / 3 * 4);
    size_t i = 0;
    for (; i + 3 <= len; i += 3) {
        const uint32_t n = (p[i] << 16) | (p[i + 1] << 8) | p[i + 2];
        out.push_back(kB64Alphabet[(n >> 18) & 63]);
        out.push_back(kB64Alphabet[(n >> 12) & 63]);
        out.push_back(kB64Alphabet[(n >> 6) & 63]);
        out.push_back(kB64Alphabet[n & 63]);
    }
    if (i + 1 == len) {
        const uint32_t n = p[i] << 16;
        out.push_back(kB64Alphabet[(n >> 18) & 63]);
        out.push_back(kB64Alphabet[(n >> 12) & 63]);
        out.append("==");
    } else if (i + 2 == len) {
        const uint32_t n = (p[i] << 16) | (p[i + 1] << 8);
        out.push_back(kB64Alphabet[(n >> 18) & 63]);
        out.push_back(kB64Alphabet[(n >> 12) & 63]);
        out.push_back(kB64Alphabet[(n >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
    auto value_of = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    std::vector<unsigned char> out;
    out.reserve(text.size() / 4 * 3);
    uint32_t acc = 0;
    int bits = 0;
    for (char c : text) {
        if (c == '=' || c == '\n' || c == '\r') continue;
        const int val = value_of(c);
        if (val < 0) throw Error("MalformedBase64", "unexpected character in base64 payload");
        acc = (acc << 6) | static_cast<uint32_t>(val);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<unsigned char>((acc >> bits) & 0xFF));
        }
    }
    return out;
}

}  // namespace flowcast
