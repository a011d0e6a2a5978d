#pragma once

// End-to-end analysis over trace files: load and validate records, build
// trajectories, align them per (domain, source), aggregate, compute length
// statistics and slopes, simulate pruning, and write plot-ready CSV files
// plus a manifest with content digests.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cotscope/aggregate.hpp"
#include "cotscope/csv.hpp"
#include "cotscope/digest.hpp"
#include "cotscope/entropy.hpp"
#include "cotscope/error.hpp"
#include "cotscope/prune.hpp"
#include "cotscope/reference.hpp"
#include "cotscope/resample.hpp"
#include "cotscope/similarity.hpp"
#include "cotscope/trace.hpp"
#include "cotscope/trace_io.hpp"
#include "cotscope/version.hpp"

namespace cotscope {

using DomainSource = std::pair<Domain, Source>;

struct PipelineConfig {
  std::vector<std::string> inputs;
  Metric metric = Metric::entropy;
  /// Applies to every (domain, source) without a specific override; 0 means
  /// derive from the data.
  std::size_t target_len = 0;
  std::map<DomainSource, std::size_t> target_len_overrides;
  /// Take default alignment lengths from the published MATH statistics
  /// instead of the loaded data.
  bool reference_target_len = false;
  double tau = 0.0;
  std::size_t top_k = 1;
  SlopeMode slope_mode = SlopeMode::ols;
  bool drop_step0 = false;
  /// Label human curves with the model's correctness on the same problem.
  bool pair_human = false;
  std::string out_dir;
  std::string format = "csv";
  /// Threads for input parsing and bundle pruning. Outputs do not depend on
  /// it, so it is not echoed into the manifest.
  std::size_t workers = 1;

  bool operator==(const PipelineConfig&) const = default;
};

inline void validate_config(const PipelineConfig& cfg, bool need_out = true) {
  auto bad = [](const std::string& m) { fail(ErrorCode::bad_config, m); };
  if (cfg.inputs.empty()) bad("at least one --input is required");
  for (const auto& p : cfg.inputs) {
    if (p.empty()) bad("input path must be non-empty");
  }
  if (cfg.target_len == 1) bad("target length must be at least 2");
  for (const auto& [key, len] : cfg.target_len_overrides) {
    if (len < 2) bad("target length must be at least 2");
  }
  if (cfg.top_k < 1) bad("top-k must be at least 1");
  if (std::isnan(cfg.tau) || cfg.tau < 0.0) bad("tau must be >= 0");
  if (cfg.workers < 1) bad("jobs must be at least 1");
  if (cfg.format != "csv") bad("unsupported export format '" + cfg.format + "'");
  if (need_out && cfg.out_dir.empty()) bad("--out is required");
}

// ---------------------------------------------------------------------------
// Loading

struct InputSummary {
  std::string path;
  std::string sha256;
  std::size_t bytes = 0;
  std::size_t records = 0;
  std::size_t accepted = 0;
};

struct Dataset {
  std::vector<ChainTrace> chains;
  std::vector<RecordError> rejected;
  std::vector<InputSummary> inputs;
};

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot read '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  if (in.bad()) fail(ErrorCode::io, "error while reading '" + path + "'");
  return bytes;
}

/// Loads every record of every input. Invalid records and repeated
/// chain_ids are collected in `rejected`; throws only on I/O failure. Files
/// are parsed on up to `workers` threads and merged in argument order.
inline Dataset load_dataset(const std::vector<std::string>& paths,
                            std::size_t workers = 1) {
  struct Loaded {
    InputSummary summary;
    TraceFile traces;
  };
  std::vector<Loaded> loaded(paths.size());
  std::vector<std::exception_ptr> errors(paths.size());
  auto load_one = [&](std::size_t i) {
    try {
      const std::string bytes = read_file_bytes(paths[i]);
      std::istringstream in(bytes);
      loaded[i].traces = read_traces(in, paths[i]);
      loaded[i].summary = {paths[i], sha256_hex(bytes), bytes.size(),
                           loaded[i].traces.records, 0};
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, paths.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < paths.size(); ++i) load_one(i);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < paths.size(); i += workers) load_one(i);
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  Dataset ds;
  std::set<std::string> seen;
  for (auto& [summary, tf] : loaded) {
    for (auto& e : tf.errors) ds.rejected.push_back(std::move(e));
    for (auto& c : tf.chains) {
      if (!seen.insert(c.chain_id).second) {
        ds.rejected.push_back({summary.path, 0, 0, ErrorCode::invalid_input,
                               "duplicate chain_id '" + c.chain_id + "'"});
        continue;
      }
      ++summary.accepted;
      ds.chains.push_back(std::move(c));
    }
    ds.inputs.push_back(std::move(summary));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Trajectories and alignment

struct SkippedChain {
  std::string chain_id;
  std::string reason;
};

inline Trajectory metric_trajectory(const ChainTrace& chain, Metric metric) {
  return metric == Metric::cosine ? similarity_trajectory(chain)
                                  : entropy_trajectory(chain, metric);
}

/// Drops the question-only point k = 0.
inline Trajectory without_step0(Trajectory t) {
  if (t.values.size() < 2) {
    fail(ErrorCode::insufficient_data,
         "chain '" + t.chain_id + "' has no reasoning steps left after dropping step 0");
  }
  t.values.erase(t.values.begin());
  return t;
}

inline std::vector<Trajectory> build_trajectories(
    const std::vector<ChainTrace>& chains, Metric metric, bool drop_step0,
    std::vector<SkippedChain>& skipped) {
  std::vector<Trajectory> out;
  out.reserve(chains.size());
  for (const auto& c : chains) {
    try {
      Trajectory t = metric_trajectory(c, metric);
      out.push_back(drop_step0 ? without_step0(std::move(t)) : std::move(t));
    } catch (const Error& e) {
      skipped.push_back({c.chain_id, e.what()});
    }
  }
  return out;
}

struct AxisPlan {
  std::size_t target_len = 2;
  double axis_steps = 1.0;
};

/// Per (domain, source): the shared axis spans the rounded mean step count
/// K-bar, sampled at K-bar points unless overridden.
inline std::map<DomainSource, AxisPlan> plan_axes(
    const std::vector<ChainTrace>& chains, const PipelineConfig& cfg) {
  std::map<DomainSource, std::pair<double, std::size_t>> sums;
  for (const auto& c : chains) {
    auto& [total, n] = sums[{c.domain, c.source}];
    total += static_cast<double>(c.step_count());
    ++n;
  }
  std::map<DomainSource, AxisPlan> plans;
  for (const auto& [key, acc] : sums) {
    const long kbar =
        cfg.reference_target_len
            ? reference::mean_steps(key.first, key.second)
            : std::lround(acc.first / static_cast<double>(acc.second));
    AxisPlan plan;
    plan.axis_steps = static_cast<double>(std::max(1L, kbar));
    plan.target_len = static_cast<std::size_t>(std::max(2L, kbar));
    if (cfg.target_len >= 2) plan.target_len = cfg.target_len;
    if (auto it = cfg.target_len_overrides.find(key);
        it != cfg.target_len_overrides.end()) {
      plan.target_len = it->second;
    }
    plans[key] = plan;
  }
  return plans;
}

/// Majority-free consensus of labeled model chains per problem: correct or
/// incorrect only when every labeled chain agrees.
inline std::map<std::string, Correctness> model_consensus(
    const std::vector<ChainTrace>& chains) {
  std::map<std::string, std::set<Correctness>> labels;
  for (const auto& c : chains) {
    if (c.source == Source::llm && c.correct != Correctness::unknown) {
      labels[c.problem_id].insert(c.correct);
    }
  }
  std::map<std::string, Correctness> out;
  for (const auto& [pid, set] : labels) {
    out[pid] = set.size() == 1 ? *set.begin() : Correctness::unknown;
  }
  return out;
}

inline std::vector<AlignedCurve> align_trajectories(
    const std::vector<Trajectory>& trajs,
    const std::map<DomainSource, AxisPlan>& plans) {
  std::vector<AlignedCurve> out;
  out.reserve(trajs.size());
  for (const auto& t : trajs) {
    const auto it = plans.find({t.domain, t.source});
    const AxisPlan plan = it != plans.end() ? it->second : AxisPlan{};
    AlignedCurve c = resample(t, plan.target_len);
    c.axis_steps = plan.axis_steps;
    out.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV writers

inline void export_curves(const std::vector<AggregateCurve>& curves,
                          std::ostream& os) {
  if (curves.empty()) fail(ErrorCode::nothing_to_export, "no aggregate curves");
  std::vector<const AggregateCurve*> order;
  for (const auto& c : curves) order.push_back(&c);
  std::stable_sort(order.begin(), order.end(),
                   [](const auto* a, const auto* b) { return a->key < b->key; });
  csv::write_row(os, {"domain", "source", "correct", "metric", "step_index",
                      "x", "mean", "std", "n"});
  for (const auto* c : order) {
    for (std::size_t j = 0; j < c->target_len; ++j) {
      const double x = static_cast<double>(j) * c->axis_steps /
                       static_cast<double>(c->target_len - 1);
      csv::write_row(os, {std::string(to_string(c->key.domain)),
                          std::string(to_string(c->key.source)),
                          std::string(to_string(c->key.correct)),
                          std::string(to_string(c->key.metric)),
                          std::to_string(j), csv::format_double(x),
                          csv::format_double(c->mean[j]),
                          csv::format_double(c->std[j]), std::to_string(c->n)});
    }
  }
}

inline void write_stats_csv(const StatsTable& table, std::ostream& os) {
  csv::write_row(os, {"domain", "source", "correct", "chains",
                      "mean_token_count", "mean_step_count", "labeled_llm",
                      "accuracy"});
  for (const auto& r : table.rows) {
    csv::write_row(os, {std::string(to_string(r.domain)),
                        std::string(to_string(r.source)),
                        std::string(stats_correct_label(r.correct)),
                        std::to_string(r.chains),
                        csv::format_double(r.mean_token_count),
                        csv::format_double(r.mean_step_count),
                        std::to_string(r.labeled_llm),
                        csv::format_optional(r.accuracy)});
  }
}

inline void write_trajectories_csv(const std::vector<Trajectory>& trajs,
                                   std::ostream& os) {
  csv::write_row(os, {"problem_id", "chain_id", "domain", "source", "correct",
                      "metric", "step_index", "value"});
  for (const auto& t : trajs) {
    for (std::size_t k = 0; k < t.values.size(); ++k) {
      csv::write_row(os, {t.problem_id, t.chain_id,
                          std::string(to_string(t.domain)),
                          std::string(to_string(t.source)),
                          std::string(to_string(t.correct)),
                          std::string(to_string(t.metric)), std::to_string(k),
                          csv::format_double(t.values[k])});
    }
  }
}

inline void write_aligned_csv(const std::vector<AlignedCurve>& curves,
                              std::ostream& os) {
  csv::write_row(os, {"problem_id", "chain_id", "domain", "source", "correct",
                      "metric", "method", "step_index", "x", "value"});
  for (const auto& c : curves) {
    for (std::size_t j = 0; j < c.values.size(); ++j) {
      const double x = static_cast<double>(j) * c.axis_steps /
                       static_cast<double>(c.target_len - 1);
      csv::write_row(os, {c.problem_id, c.chain_id,
                          std::string(to_string(c.domain)),
                          std::string(to_string(c.source)),
                          std::string(to_string(c.correct)),
                          std::string(to_string(c.metric)),
                          std::string(to_string(c.method)), std::to_string(j),
                          csv::format_double(x), csv::format_double(c.values[j])});
    }
  }
}

/// One row per chain with its entropy trend statistics, sorted by
/// (problem_id, chain_id). Single-point trajectories leave slope fields empty.
inline void write_slopes_csv(std::vector<Trajectory> trajs, std::ostream& os) {
  std::sort(trajs.begin(), trajs.end(), [](const auto& a, const auto& b) {
    return std::tie(a.problem_id, a.chain_id) < std::tie(b.problem_id, b.chain_id);
  });
  csv::write_row(os, {"problem_id", "chain_id", "domain", "source", "correct",
                      "metric", "step_count", "token_count", "ols_slope",
                      "net_change", "mutual_information", "first", "last"});
  for (const auto& t : trajs) {
    const bool has_trend = t.values.size() >= 2;
    std::string mi;
    if (t.metric == Metric::entropy) {
      mi = csv::format_double(mutual_information_estimate(t));
    }
    csv::write_row(
        os, {t.problem_id, t.chain_id, std::string(to_string(t.domain)),
             std::string(to_string(t.source)), std::string(to_string(t.correct)),
             std::string(to_string(t.metric)), std::to_string(t.step_count),
             std::to_string(t.token_count),
             has_trend ? csv::format_double(slope(t.values)) : "",
             has_trend ? csv::format_double(net_change(t.values)) : "", mi,
             csv::format_double(t.values.front()),
             csv::format_double(t.values.back())});
  }
}

inline std::string join_ids(const std::vector<std::string>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out += ';';
    out += ids[i];
  }
  return out;
}

inline void write_prune_csv(const PolicyEvaluation& eval, std::ostream& os) {
  csv::write_row(os, {"problem_id", "n_chains", "kept", "pruned",
                      "accuracy_retained", "compute_saved", "tokens_total",
                      "tokens_pruned", "fallback"});
  for (const auto& r : eval.reports) {
    csv::write_row(os, {r.problem_id,
                        std::to_string(r.kept.size() + r.pruned.size()),
                        join_ids(r.kept), join_ids(r.pruned),
                        csv::format_optional(r.accuracy_retained),
                        csv::format_double(r.compute_saved),
                        std::to_string(r.tokens_total),
                        std::to_string(r.tokens_pruned),
                        r.fallback ? "true" : "false"});
  }
}

/// Correct-vs-incorrect separation per domain for labeled model chains: AUC
/// of entropy slopes, and a Mann-Whitney test that incorrect chains are
/// longer (in tokens).
inline void write_separability_csv(const std::vector<Trajectory>& entropy_trajs,
                                   std::ostream& os) {
  struct Split {
    std::vector<double> slope_ok, slope_bad, tokens_ok, tokens_bad;
  };
  std::map<std::string, Split> by_domain;
  for (const auto& t : entropy_trajs) {
    if (t.source != Source::llm || t.correct == Correctness::unknown) continue;
    const bool ok = t.correct == Correctness::correct;
    for (const std::string& key : {std::string(to_string(t.domain)), std::string("all")}) {
      auto& s = by_domain[key];
      (ok ? s.tokens_ok : s.tokens_bad).push_back(static_cast<double>(t.token_count));
      if (t.values.size() >= 2) {
        (ok ? s.slope_ok : s.slope_bad).push_back(slope(t.values));
      }
    }
  }
  csv::write_row(os, {"domain", "n_correct", "n_incorrect", "slope_auc",
                      "length_u", "length_z", "length_p"});
  for (const auto& [domain, s] : by_domain) {
    std::string auc, u, z, p;
    if (!s.slope_ok.empty() && !s.slope_bad.empty()) {
      auc = csv::format_double(separability(s.slope_ok, s.slope_bad));
    }
    if (!s.tokens_ok.empty() && !s.tokens_bad.empty()) {
      const auto mw = mann_whitney_u(s.tokens_bad, s.tokens_ok);
      u = csv::format_double(mw.u);
      z = csv::format_double(mw.z);
      p = csv::format_double(mw.p_value);
    }
    csv::write_row(os, {domain, std::to_string(s.tokens_ok.size()),
                        std::to_string(s.tokens_bad.size()), auc, u, z, p});
  }
}

// ---------------------------------------------------------------------------
// Full run

struct PipelineResult {
  std::vector<std::string> files;  // written, relative to out_dir
  std::size_t chains = 0;
  std::size_t rejected = 0;
  std::size_t skipped = 0;
  nlohmann::ordered_json manifest;
};

inline nlohmann::ordered_json config_to_json(const PipelineConfig& cfg) {
  nlohmann::ordered_json j;
  j["inputs"] = cfg.inputs;
  j["metric"] = std::string(to_string(cfg.metric));
  j["target_len"] = cfg.target_len;
  nlohmann::ordered_json overrides = nlohmann::ordered_json::object();
  for (const auto& [key, len] : cfg.target_len_overrides) {
    overrides[std::string(to_string(key.first)) + ":" +
              std::string(to_string(key.second))] = len;
  }
  j["target_len_overrides"] = std::move(overrides);
  j["reference_target_len"] = cfg.reference_target_len;
  if (std::isinf(cfg.tau)) {
    j["tau"] = "inf";
  } else {
    j["tau"] = cfg.tau;
  }
  j["top_k"] = cfg.top_k;
  j["slope_mode"] = std::string(to_string(cfg.slope_mode));
  j["drop_step0"] = cfg.drop_step0;
  j["pair_human"] = cfg.pair_human;
  j["out"] = cfg.out_dir;
  j["format"] = cfg.format;
  return j;
}

namespace detail {

inline std::string write_output(const std::filesystem::path& dir,
                                 const std::string& name,
                                 const std::string& content) {
  const auto path = dir / name;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot write '" + path.string() + "'");
  out << content;
  out.close();
  if (!out) fail(ErrorCode::io, "error while writing '" + path.string() + "'");
  return sha256_hex(content);
}

}  // namespace detail

inline PipelineResult run_pipeline(const PipelineConfig& cfg) {
  validate_config(cfg);
  Dataset ds = load_dataset(cfg.inputs, cfg.workers);
  if (ds.chains.empty()) {
    fail(ErrorCode::empty_dataset,
         "no valid chains in input (" + std::to_string(ds.rejected.size()) +
             " rejected records)");
  }

  std::vector<SkippedChain> skipped;
  std::vector<Trajectory> curves_src =
      build_trajectories(ds.chains, cfg.metric, cfg.drop_step0, skipped);
  std::vector<SkippedChain> entropy_skipped;
  std::vector<Trajectory> entropy =
      cfg.metric == Metric::entropy && !cfg.drop_step0
          ? curves_src
          : build_trajectories(ds.chains, Metric::entropy, false, entropy_skipped);

  const auto plans = plan_axes(ds.chains, cfg);
  std::vector<AlignedCurve> aligned = align_trajectories(curves_src, plans);
  if (cfg.pair_human) {
    const auto consensus = model_consensus(ds.chains);
    for (auto& c : aligned) {
      if (c.source != Source::human) continue;
      const auto it = consensus.find(c.problem_id);
      c.correct = it != consensus.end() ? it->second : Correctness::unknown;
    }
  }
  const auto aggregates = aggregate_curves(aligned);

  std::vector<Trajectory> prunable;
  std::size_t not_prunable = 0;
  for (const auto& t : entropy) {
    if (t.source != Source::llm) continue;
    if (t.values.size() < 2) {
      ++not_prunable;
      continue;
    }
    prunable.push_back(t);
  }
  const PruneOptions popt{cfg.top_k, cfg.tau, cfg.slope_mode};
  const PolicyEvaluation policy = evaluate_policy(prunable, popt, cfg.workers);

  std::ostringstream curves_csv, stats_csv, slopes_csv, prune_csv, sep_csv;
  export_curves(aggregates, curves_csv);
  write_stats_csv(length_stats(ds.chains), stats_csv);
  write_slopes_csv(entropy, slopes_csv);
  write_prune_csv(policy, prune_csv);
  write_separability_csv(entropy, sep_csv);

  const std::filesystem::path dir(cfg.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::io, "cannot create output directory '" + cfg.out_dir + "'");

  PipelineResult result;
  result.chains = ds.chains.size();
  result.rejected = ds.rejected.size();
  result.skipped = skipped.size();

  using ojson = nlohmann::ordered_json;
  ojson outputs = ojson::array();
  const std::vector<std::pair<std::string, std::string>> files = {
      {"curves.csv", curves_csv.str()},      {"stats.csv", stats_csv.str()},
      {"slopes.csv", slopes_csv.str()},      {"prune_report.csv", prune_csv.str()},
      {"separability.csv", sep_csv.str()},
  };
  for (const auto& [name, content] : files) {
    const auto digest = detail::write_output(dir, name, content);
    outputs.push_back({{"file", name}, {"sha256", digest}, {"bytes", content.size()}});
    result.files.push_back(name);
  }

  ojson m;
  m["tool"] = "cotscope";
  m["version"] = std::string(kVersion);
  m["config"] = config_to_json(cfg);
  ojson inputs = ojson::array();
  for (const auto& in : ds.inputs) {
    inputs.push_back({{"path", in.path},
                      {"sha256", in.sha256},
                      {"bytes", in.bytes},
                      {"records", in.records},
                      {"accepted", in.accepted}});
  }
  m["inputs"] = std::move(inputs);
  ojson rejected = ojson::array();
  for (const auto& r : ds.rejected) {
    rejected.push_back({{"file", r.file},
                        {"line", r.line},
                        {"byte_offset", r.byte_offset},
                        {"code", std::string(to_string(r.code))},
                        {"message", r.message}});
  }
  m["rejected_records"] = std::move(rejected);
  ojson skipped_json = ojson::array();
  for (const auto& s : skipped) {
    skipped_json.push_back({{"chain_id", s.chain_id}, {"reason", s.reason}});
  }
  m["skipped_chains"] = std::move(skipped_json);
  m["chains"] = ds.chains.size();
  m["aggregate_groups"] = aggregates.size();
  ojson axes = ojson::array();
  for (const auto& [key, plan] : plans) {
    axes.push_back({{"domain", std::string(to_string(key.first))},
                    {"source", std::string(to_string(key.second))},
                    {"target_len", plan.target_len},
                    {"axis_steps", plan.axis_steps}});
  }
  m["axes"] = std::move(axes);
  ojson prune;
  prune["bundles_evaluated"] = policy.bundles_evaluated;
  prune["bundles_skipped_unlabeled"] = policy.bundles_skipped;
  prune["chains_without_trend"] = not_prunable;
  prune["bundles_with_correct"] = policy.bundles_with_correct;
  if (policy.accuracy_retained) {
    prune["accuracy_retained"] = *policy.accuracy_retained;
  } else {
    prune["accuracy_retained"] = nullptr;
  }
  prune["baseline_accuracy"] = policy.baseline_accuracy;
  prune["pruned_accuracy"] = policy.pruned_accuracy;
  prune["compute_saved"] = policy.compute_saved;
  m["prune_summary"] = std::move(prune);
  m["outputs"] = std::move(outputs);
  detail::write_output(dir, "run_manifest.json", m.dump(2) + "\n");
  result.files.push_back("run_manifest.json");
  result.manifest = std::move(m);
  return result;
}

}  // namespace cotscope
