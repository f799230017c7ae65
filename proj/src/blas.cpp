#include "jmsac/blas.hpp"

#include <atomic>
#include <condition_variable>
#include <mutex>
#include <thread>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace jmsac::blas {

namespace {

// Large tensors are allocated and freed every training step; keep them in the
// arena instead of round-tripping through mmap.
[[maybe_unused]] const bool malloc_tuned = [] {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
    return true;
}();

// Minimal persistent pool. Jobs are static range partitions; worker i always
// gets the same slice, so numeric results never depend on scheduling.
class Pool {
public:
    static Pool& instance() {
        static Pool p;
        return p;
    }

    void set_threads(int n) {
        std::lock_guard<std::mutex> lk(api_mutex_);
        if (n < 1) n = 1;
        shutdown_workers();
        want_ = n;
        for (int i = 1; i < n; ++i) workers_.emplace_back([this, i] { worker_loop(i); });
    }

    int threads() const { return want_; }

    void run(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
        std::lock_guard<std::mutex> lk(api_mutex_);
        const int nt = (n < want_) ? static_cast<int>(n > 0 ? n : 1) : want_;
        if (nt <= 1 || workers_.empty()) {
            fn(0, n);
            return;
        }
        {
            std::unique_lock<std::mutex> lk2(m_);
            job_fn_ = &fn;
            job_n_ = n;
            job_nt_ = nt;
            pending_ = nt - 1;
            ++generation_;
        }
        cv_.notify_all();
        run_slice(0, n, nt, fn);
        {
            std::unique_lock<std::mutex> lk2(m_);
            done_cv_.wait(lk2, [this] { return pending_ == 0; });
            job_fn_ = nullptr;
        }
    }

private:
    ~Pool() { shutdown_workers(); }

    static void run_slice(int idx, int64_t n, int nt, const std::function<void(int64_t, int64_t)>& fn) {
        const int64_t chunk = (n + nt - 1) / nt;
        const int64_t b = idx * chunk;
        const int64_t e = std::min<int64_t>(n, b + chunk);
        if (b < e) fn(b, e);
    }

    void worker_loop(int idx) {
        uint64_t seen = 0;
        for (;;) {
            const std::function<void(int64_t, int64_t)>* fn = nullptr;
            int64_t n = 0;
            int nt = 0;
            {
                std::unique_lock<std::mutex> lk(m_);
                cv_.wait(lk, [&] { return stop_ || (generation_ != seen && job_fn_ && idx < job_nt_); });
                if (stop_) return;
                seen = generation_;
                fn = job_fn_;
                n = job_n_;
                nt = job_nt_;
            }
            run_slice(idx, n, nt, *fn);
            {
                std::lock_guard<std::mutex> lk(m_);
                if (--pending_ == 0) done_cv_.notify_one();
            }
        }
    }

    void shutdown_workers() {
        {
            std::lock_guard<std::mutex> lk(m_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& w : workers_) w.join();
        workers_.clear();
        stop_ = false;
    }

    std::mutex api_mutex_;
    std::mutex m_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    std::vector<std::thread> workers_;
    const std::function<void(int64_t, int64_t)>* job_fn_ = nullptr;
    int64_t job_n_ = 0;
    int job_nt_ = 1;
    int pending_ = 0;
    uint64_t generation_ = 0;
    bool stop_ = false;
    int want_ = 1;
};

// Packs op(X) into a contiguous rows x cols row-major buffer.
template <typename S>
void pack(bool trans, const S* x, int64_t ldx, int64_t rows, int64_t cols, std::vector<S>& out) {
    out.resize(static_cast<size_t>(rows * cols));
    if (!trans) {
        for (int64_t i = 0; i < rows; ++i) {
            const S* src = x + i * ldx;
            S* dst = out.data() + i * cols;
            for (int64_t j = 0; j < cols; ++j) dst[j] = src[j];
        }
    } else {
        for (int64_t i = 0; i < rows; ++i) {
            S* dst = out.data() + i * cols;
            for (int64_t j = 0; j < cols; ++j) dst[j] = x[j * ldx + i];
        }
    }
}

// Dot-product kernel for narrow outputs (n small): B is packed transposed
// [n, k]; each C entry is one vectorizable reduction with a fixed lane
// structure, so results are bit-stable across runs and thread counts.
template <typename S>
void gemm_narrow(int64_t m, int64_t n, int64_t k, S alpha, const S* a, const S* bt, S beta, S* c,
                 int64_t ldc) {
    Pool::instance().run(m, [&](int64_t i0, int64_t i1) {
        for (int64_t i = i0; i < i1; ++i) {
            const S* __restrict arow = a + i * k;
            S* crow = c + i * ldc;
            for (int64_t j = 0; j < n; ++j) {
                const S* __restrict brow = bt + j * k;
                S lanes[16] = {};
                int64_t p = 0;
                for (; p + 16 <= k; p += 16)
                    for (int l = 0; l < 16; ++l) lanes[l] += arow[p + l] * brow[p + l];
                S acc = S(0);
                for (int l = 0; l < 16; ++l) acc += lanes[l];
                for (; p < k; ++p) acc += arow[p] * brow[p];
                const S v = alpha * acc;
                crow[j] = beta == S(0) ? v : beta * crow[j] + v;
            }
        }
    });
}

// Core kernel on packed row-major panels. Accumulation over k runs in k order
// per output element regardless of blocking or threading.
template <typename S>
void gemm_packed(int64_t m, int64_t n, int64_t k, S alpha, const S* a, const S* b, S beta, S* c,
                 int64_t ldc) {
    constexpr int64_t kc = 256;
    Pool::instance().run(m, [&](int64_t i0, int64_t i1) {
        for (int64_t i = i0; i < i1; ++i) {
            S* crow = c + i * ldc;
            if (beta == S(0)) {
                for (int64_t j = 0; j < n; ++j) crow[j] = S(0);
            } else if (beta != S(1)) {
                for (int64_t j = 0; j < n; ++j) crow[j] *= beta;
            }
        }
        for (int64_t k0 = 0; k0 < k; k0 += kc) {
            const int64_t k1 = std::min(k, k0 + kc);
            for (int64_t i = i0; i < i1; ++i) {
                S* __restrict crow = c + i * ldc;
                const S* arow = a + i * k;
                int64_t p = k0;
                for (; p + 4 <= k1; p += 4) {
                    const S a0 = alpha * arow[p + 0];
                    const S a1 = alpha * arow[p + 1];
                    const S a2 = alpha * arow[p + 2];
                    const S a3 = alpha * arow[p + 3];
                    const S* __restrict b0 = b + (p + 0) * n;
                    const S* __restrict b1 = b + (p + 1) * n;
                    const S* __restrict b2 = b + (p + 2) * n;
                    const S* __restrict b3 = b + (p + 3) * n;
                    for (int64_t j = 0; j < n; ++j)
                        crow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
                }
                for (; p < k1; ++p) {
                    const S ap = alpha * arow[p];
                    const S* __restrict brow = b + p * n;
                    for (int64_t j = 0; j < n; ++j) crow[j] += ap * brow[j];
                }
            }
        }
    });
}

thread_local std::vector<float> tls_pack_af, tls_pack_bf;
thread_local std::vector<double> tls_pack_ad, tls_pack_bd;

template <typename S>
void gemm_impl(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, S alpha, const S* a,
               int64_t lda, const S* b, int64_t ldb, S beta, S* c, int64_t ldc,
               std::vector<S>& pa, std::vector<S>& pb) {
    if (m == 0 || n == 0) return;
    const S* ap = a;
    if (trans_a || lda != k) {
        pack(trans_a, a, lda, m, k, pa);
        ap = pa.data();
    }
    // Narrow outputs with a long reduction run much faster as packed dots.
    if (n <= 16 && k >= 32) {
        // Need op(B) transposed, i.e. [n, k].
        pack(!trans_b, b, ldb, n, k, pb);
        gemm_narrow(m, n, k, alpha, ap, pb.data(), beta, c, ldc);
        return;
    }
    const S* bp = b;
    if (trans_b || ldb != n) {
        pack(trans_b, b, ldb, k, n, pb);
        bp = pb.data();
    }
    gemm_packed(m, n, k, alpha, ap, bp, beta, c, ldc);
}

} // namespace

void set_threads(int n) { Pool::instance().set_threads(n); }
int threads() { return Pool::instance().threads(); }

void parallel_ranges(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
    Pool::instance().run(n, fn);
}

void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, float alpha, const float* a,
          int64_t lda, const float* b, int64_t ldb, float beta, float* c, int64_t ldc) {
    gemm_impl(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc, tls_pack_af,
              tls_pack_bf);
}

void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, double alpha,
          const double* a, int64_t lda, const double* b, int64_t ldb, double beta, double* c,
          int64_t ldc) {
    gemm_impl(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc, tls_pack_ad,
              tls_pack_bd);
}

} // namespace jmsac::blas
