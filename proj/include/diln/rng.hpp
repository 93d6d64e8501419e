#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace diln {

// Seeded random stream. All sampling in the library goes through this
// wrapper so that a (seed, stream) pair fully determines a run.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed), seed_mix_(seed) {}

    // Independent child stream; splitmix64 keeps unrelated streams
    // decorrelated even for adjacent ids.
    Rng derive(std::uint64_t stream_id) const {
        std::uint64_t x = seed_mix_ + 0x9e3779b97f4a7c15ULL * (stream_id + 1);
        x = splitmix64(x);
        return Rng(x, x);
    }

    double uniform() { return unit_(engine_); }

    // Uniform integer in [0, n).
    std::size_t uniform_index(std::size_t n) {
        std::uniform_int_distribution<std::size_t> d(0, n - 1);
        return d(engine_);
    }

    double normal(double mean = 0.0, double stddev = 1.0) {
        std::normal_distribution<double> d(mean, stddev);
        return d(engine_);
    }

    // Gamma with density b^a z^{a-1} e^{-bz} / Gamma(a): shape a, rate b.
    double gamma(double shape, double rate) {
        std::gamma_distribution<double> d(shape, 1.0 / rate);
        return d(engine_);
    }

    // Beta(1, alpha) by inverse CDF: F(v) = 1 - (1-v)^alpha.
    double beta_one(double alpha) {
        double u = unit_(engine_);
        return 1.0 - std::pow(u, 1.0 / alpha);
    }

    std::vector<double> dirichlet_symmetric(double concentration, std::size_t dim) {
        std::vector<double> x(dim);
        double sum = 0.0;
        for (auto& xi : x) {
            xi = gamma(concentration, 1.0);
            sum += xi;
        }
        for (auto& xi : x) xi /= sum;
        return x;
    }

    // Fisher-Yates; used instead of std::shuffle so splits are
    // reproducible independent of the standard library.
    template <typename T>
    void shuffle(std::vector<T>& values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(values[i - 1], values[j]);
        }
    }

    std::mt19937_64& engine() { return engine_; }

  private:
    Rng(std::uint64_t seed, std::uint64_t mix) : engine_(seed), seed_mix_(mix) {}

    static std::uint64_t splitmix64(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    std::mt19937_64 engine_;
    std::uint64_t seed_mix_ = 0;
    std::uniform_real_distribution<double> unit_{0.0, 1.0};
};

}  // namespace diln
