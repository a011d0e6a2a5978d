#pragma once

// Hand-rolled generators and fixture builders shared by the test binaries.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cotscope/cotscope.hpp"

namespace fixture {

using namespace cotscope;

inline std::string data_path(const std::string& name) {
  return std::string(COTSCOPE_TEST_DATA) + "/" + name;
}

// Random probability vector of the given size. Some entries are zeroed so the
// 0 ln 0 path gets exercised.
inline std::vector<double> random_distribution(std::mt19937_64& rng, std::size_t n) {
  std::exponential_distribution<double> expo(1.0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<double> p(n);
  double sum = 0.0;
  for (auto& v : p) {
    v = coin(rng) < 0.1 ? 0.0 : expo(rng);
    sum += v;
  }
  if (sum == 0.0) {
    p[0] = 1.0;
    return p;
  }
  for (auto& v : p) v /= sum;
  return p;
}

inline std::vector<double> random_values(std::mt19937_64& rng, std::size_t n,
                                         double lo = 0.0, double hi = 3.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

inline Trajectory make_trajectory(std::vector<double> values, std::string chain_id = "c",
                                  std::string problem_id = "p",
                                  Correctness correct = Correctness::unknown,
                                  std::int64_t token_count = 100,
                                  Source source = Source::llm,
                                  Domain domain = Domain::algebra) {
  Trajectory t;
  t.chain_id = std::move(chain_id);
  t.problem_id = std::move(problem_id);
  t.metric = Metric::entropy;
  t.step_count = values.empty() ? 0 : values.size() - 1;
  t.values = std::move(values);
  t.correct = correct;
  t.source = source;
  t.domain = domain;
  t.token_count = token_count;
  return t;
}

// Valid chain with K steps and an answer span of `span` tokens. Per-token
// entropies at step k are drawn freely; optional top-k slices and pooled
// vectors.
struct ChainSpec {
  std::size_t steps = 2;
  std::size_t span = 2;
  bool topk = true;
  bool vectors = false;
  std::size_t dim = 3;
};

inline ChainTrace random_chain(std::mt19937_64& rng, const ChainSpec& spec,
                               const std::string& id = "chain-0") {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ChainTrace c;
  c.problem_id = "prob-" + id;
  c.chain_id = id;
  c.source = unit(rng) < 0.5 ? Source::llm : Source::human;
  c.model_name = "fixture-model";
  c.domain = kAllDomains[rng() % kAllDomains.size()];
  if (unit(rng) < 0.7) c.difficulty_level = 1 + static_cast<std::int64_t>(rng() % 5);
  const auto r = rng() % 3;
  c.correct = r == 0 ? Correctness::correct
                     : (r == 1 ? Correctness::incorrect : Correctness::unknown);
  c.question_text = "What is 1+1? \"quoted\" \\ tab\té";
  for (std::size_t k = 0; k < spec.steps; ++k) {
    c.steps_text.push_back("step " + std::to_string(k + 1));
  }
  c.answer_text = "\\frac{1}{2}";
  c.vocab_size = 1000;
  for (std::size_t i = 0; i < spec.span; ++i) {
    c.answer_token_ids.push_back(static_cast<std::int64_t>(rng() % 1000));
  }
  c.token_count = 10 + static_cast<std::int64_t>(rng() % 5000);
  if (spec.vectors) {
    std::vector<double> v(spec.dim);
    for (auto& x : v) x = unit(rng) * 2.0 - 1.0;
    c.answer_pooled_vec = v;
  }
  const double max_h = std::log(static_cast<double>(c.vocab_size));
  for (std::size_t k = 0; k <= spec.steps; ++k) {
    StepRecord s;
    s.step_index = static_cast<std::int64_t>(k);
    for (std::size_t t = 0; t < spec.span; ++t) {
      TokenRecord rec;
      rec.pos = static_cast<std::int64_t>(t);
      rec.gold_token_id = c.answer_token_ids[t];
      rec.gold_logprob = -unit(rng) * 5.0;
      rec.entropy_nats = unit(rng) * max_h;
      if (spec.topk) {
        std::vector<TopKEntry> tk;
        double p = 0.5 * unit(rng) + 0.01;
        for (std::int64_t id = 0; id < 4; ++id) {
          tk.push_back({id * 7 + 1, p});
          p *= 0.5;
        }
        rec.topk = tk;
      }
      s.token_records.push_back(rec);
    }
    if (spec.vectors) {
      std::vector<double> v(spec.dim);
      for (auto& x : v) x = unit(rng) * 2.0 - 1.0;
      s.context_pooled_vec = v;
    }
    c.step_records.push_back(std::move(s));
  }
  return c;
}

// Chain whose sequence entropy at step k equals entropies[k] exactly (one
// answer token).
inline ChainTrace chain_with_entropies(const std::vector<double>& entropies,
                                       const std::string& id = "c",
                                       const std::string& problem = "p",
                                       Correctness correct = Correctness::unknown,
                                       std::int64_t token_count = 100) {
  ChainTrace c;
  c.problem_id = problem;
  c.chain_id = id;
  c.model_name = "fixture-model";
  c.domain = Domain::algebra;
  c.correct = correct;
  c.question_text = "q";
  c.answer_text = "1";
  c.answer_token_ids = {5};
  c.vocab_size = 100;
  c.token_count = token_count;
  for (std::size_t k = 0; k < entropies.size(); ++k) {
    if (k > 0) c.steps_text.push_back("s" + std::to_string(k));
    StepRecord s;
    s.step_index = static_cast<std::int64_t>(k);
    s.token_records.push_back({0, 5, -entropies[k] / 2.0, entropies[k], std::nullopt});
    c.step_records.push_back(s);
  }
  return c;
}

}  // namespace fixture
