#pragma once

// Deterministic random streams keyed by a tuple of integers. A stream's seed
// depends only on the key, so work can be scheduled in any order.

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <random>

namespace phasekit {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Mixes a root seed with a sequence of counters into a stream id.
inline std::uint64_t derive_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> counters) {
    std::uint64_t h = splitmix64(seed ^ 0x243f6a8885a308d3ULL);
    for (std::uint64_t c : counters) h = splitmix64(h ^ splitmix64(c + 0x13198a2e03707344ULL));
    return h;
}

class GaussianStream {
public:
    explicit GaussianStream(std::uint64_t stream_id) : engine_(stream_id), id_(stream_id) {}

    std::uint64_t id() const { return id_; }

    double next() { return normal_(engine_); }

    // Column-major order. Accepts blocks and maps (Eigen's const-cast idiom).
    template <typename Derived>
    void fill(const Eigen::DenseBase<Derived>& target) {
        auto& out = const_cast<Eigen::DenseBase<Derived>&>(target);
        for (Eigen::Index j = 0; j < out.cols(); ++j)
            for (Eigen::Index i = 0; i < out.rows(); ++i) out(i, j) = next();
    }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_;
    std::uint64_t id_;
};

}  // namespace phasekit
