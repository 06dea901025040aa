#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string_view>

namespace specfid {

/// Deterministic random stream keyed by (seed, stream_id).
///
/// Words come from std::mt19937_64 initialised through std::seed_seq with the
/// four 32-bit halves of seed and stream_id. Both algorithms are fully pinned
/// by the C++ standard, so the word sequence is identical on every conforming
/// platform. Derived views:
///   uniform(): top 53 bits of one word scaled by 2^-53, in [0, 1).
///   normal():  Marsaglia polar method on pairs of uniform() draws mapped to
///              (-1, 1); the second variate of each pair is cached.
///
/// Single consumer. Parallel work takes one stream per stream_id.
class RandomStream {
public:
    static constexpr std::string_view algorithm_name = "mt19937_64/seed_seq/polar";

    RandomStream(std::uint64_t seed, std::uint64_t stream_id);

    [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
    [[nodiscard]] std::uint64_t stream_id() const noexcept { return stream_id_; }

    std::uint64_t next_u64() { return engine_(); }
    double uniform();
    double normal();

    void fill_normal(std::span<double> out);

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::mt19937_64 engine_;
    std::optional<double> cached_normal_;
};

inline RandomStream make_stream(std::uint64_t seed, std::uint64_t stream_id) {
    return RandomStream(seed, stream_id);
}

}  // namespace specfid
