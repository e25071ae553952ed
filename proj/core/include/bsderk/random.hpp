#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>

namespace bsderk {

using Engine = boost::random::mt19937_64;

/// Engine for the stream identified by (seed, ids...). Distinct id tuples give
/// statistically independent streams; equal tuples give identical streams.
inline Engine make_engine(std::uint64_t seed, std::initializer_list<std::uint64_t> ids = {}) {
  std::vector<std::uint32_t> words;
  words.reserve(2 * (ids.size() + 1));
  auto push = [&words](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (auto id : ids) push(id);
  std::seed_seq seq(words.begin(), words.end());
  Engine engine;
  engine.seed(seq);
  return engine;
}

/// Standard normal draws (ziggurat).
class Gaussian {
 public:
  explicit Gaussian(Engine engine) : engine_(std::move(engine)) {}

  double operator()() { return dist_(engine_); }
  Engine& engine() { return engine_; }

 private:
  Engine engine_;
  boost::random::normal_distribution<double> dist_{0.0, 1.0};
};

}  // namespace bsderk
