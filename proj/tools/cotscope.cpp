// cotscope command-line driver.
//
// Exit codes: 0 ok, 1 internal error, 2 bad input, 3 bad config. Failures
// print a one-line JSON summary on stderr.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cotscope/cotscope.hpp"

namespace {

using namespace cotscope;
using json = nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitBadInput = 2;
constexpr int kExitBadConfig = 3;

// Raw flag values; merged over the config file and defaults in resolve().
struct Flags {
  std::string config_path;
  std::vector<std::string> inputs;
  std::string metric;
  std::vector<std::string> target_len;
  std::string tau;
  std::size_t top_k = 0;
  std::string slope_mode;
  bool drop_step0 = false;
  bool pair_human = false;
  bool reference_target_len = false;
  std::string out;
  std::string format;
  std::size_t jobs = 0;
};

void print_error(std::string_view code, const std::string& message) {
  json j;
  j["status"] = "error";
  j["code"] = code;
  j["message"] = message;
  std::cerr << j.dump() << '\n';
}

double parse_tau(const std::string& s) {
  if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size()) {
    fail(ErrorCode::bad_config, "tau: not a number '" + s + "'");
  }
  return v;
}

std::size_t parse_len(const std::string& s, const std::string& what) {
  std::size_t v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || end != s.data() + s.size()) {
    fail(ErrorCode::bad_config, what + ": not a non-negative integer '" + s + "'");
  }
  return v;
}

// "N" or "domain:source:N".
void apply_target_len(PipelineConfig& cfg, const std::string& spec) {
  const auto c1 = spec.find(':');
  if (c1 == std::string::npos) {
    cfg.target_len = parse_len(spec, "--target-len");
    if (cfg.target_len < 2) fail(ErrorCode::bad_config, "target length must be at least 2");
    return;
  }
  const auto c2 = spec.find(':', c1 + 1);
  if (c2 == std::string::npos) {
    fail(ErrorCode::bad_config, "--target-len expects N or domain:source:N, got '" + spec + "'");
  }
  const auto domain = parse_domain(spec.substr(0, c1));
  const auto source = parse_source(spec.substr(c1 + 1, c2 - c1 - 1));
  if (!domain) fail(ErrorCode::bad_config, "unknown domain in '" + spec + "'");
  if (!source) fail(ErrorCode::bad_config, "unknown source in '" + spec + "'");
  cfg.target_len_overrides[{*domain, *source}] = parse_len(spec.substr(c2 + 1), "--target-len");
}

void set_metric(PipelineConfig& cfg, const std::string& s) {
  const auto m = parse_metric(s);
  if (!m) fail(ErrorCode::bad_config, "unknown metric '" + s + "'");
  cfg.metric = *m;
}

void set_slope_mode(PipelineConfig& cfg, const std::string& s) {
  const auto m = parse_slope_mode(s);
  if (!m) fail(ErrorCode::bad_config, "unknown slope mode '" + s + "'");
  cfg.slope_mode = *m;
}

// Config documents use the flag names with underscores.
void apply_config_file(PipelineConfig& cfg, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::bad_config, "cannot read config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::bad_config, "config '" + path + "': " + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::bad_config, "config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "inputs") {
        cfg.inputs = v.get<std::vector<std::string>>();
      } else if (key == "metric") {
        set_metric(cfg, v.get<std::string>());
      } else if (key == "target_len") {
        if (v.is_array()) {
          for (const auto& e : v) apply_target_len(cfg, e.get<std::string>());
        } else if (v.is_string()) {
          apply_target_len(cfg, v.get<std::string>());
        } else {
          apply_target_len(cfg, std::to_string(v.get<std::size_t>()));
        }
      } else if (key == "tau") {
        cfg.tau = v.is_string() ? parse_tau(v.get<std::string>()) : v.get<double>();
      } else if (key == "top_k") {
        cfg.top_k = v.get<std::size_t>();
      } else if (key == "slope_mode") {
        set_slope_mode(cfg, v.get<std::string>());
      } else if (key == "drop_step0") {
        cfg.drop_step0 = v.get<bool>();
      } else if (key == "pair_human") {
        cfg.pair_human = v.get<bool>();
      } else if (key == "reference_target_len") {
        cfg.reference_target_len = v.get<bool>();
      } else if (key == "out") {
        cfg.out_dir = v.get<std::string>();
      } else if (key == "format") {
        cfg.format = v.get<std::string>();
      } else if (key == "jobs") {
        cfg.workers = v.get<std::size_t>();
      } else {
        fail(ErrorCode::bad_config, "config: unknown key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::bad_config, "config '" + path + "': " + e.what());
  }
}

PipelineConfig resolve(const Flags& f, const CLI::App& app) {
  PipelineConfig cfg;
  if (!f.config_path.empty()) apply_config_file(cfg, f.config_path);
  auto given = [&](const char* name) {
    const CLI::Option* opt = app.get_option_no_throw(name);
    return opt != nullptr && opt->count() > 0;
  };
  if (given("--input")) cfg.inputs = f.inputs;
  if (given("--metric")) set_metric(cfg, f.metric);
  if (given("--target-len")) {
    for (const auto& s : f.target_len) apply_target_len(cfg, s);
  }
  if (given("--tau")) cfg.tau = parse_tau(f.tau);
  if (given("--top-k")) cfg.top_k = f.top_k;
  if (given("--slope-mode")) set_slope_mode(cfg, f.slope_mode);
  if (given("--drop-step0")) cfg.drop_step0 = true;
  if (given("--pair-human")) cfg.pair_human = true;
  if (given("--reference-target-len")) cfg.reference_target_len = true;
  if (given("--out")) cfg.out_dir = f.out;
  if (given("--format")) cfg.format = f.format;
  if (given("--jobs")) cfg.workers = f.jobs;
  return cfg;
}

void add_common(CLI::App* sub, Flags& f, bool analysis) {
  sub->add_option("--config", f.config_path, "JSON config document; flags win");
  sub->add_option("--input", f.inputs, "Trace file (JSON Lines), repeatable");
  sub->add_option("--jobs", f.jobs, "Worker threads");
  if (!analysis) return;
  sub->add_option("--metric", f.metric, "entropy | cross-entropy | cosine");
  sub->add_flag("--drop-step0", f.drop_step0, "Drop the question-only point k=0");
  sub->add_option("--out", f.out, "Output directory (default: stdout where possible)");
  sub->add_option("--format", f.format, "Export format (csv)");
}

void add_alignment(CLI::App* sub, Flags& f) {
  sub->add_option("--target-len", f.target_len, "N, or domain:source:N; repeatable");
  sub->add_flag("--reference-target-len", f.reference_target_len,
                "Default lengths from the published MATH step averages");
  sub->add_flag("--pair-human", f.pair_human,
                "Label human curves by the model's outcome on the same problem");
}

void add_pruning(CLI::App* sub, Flags& f) {
  sub->add_option("--tau", f.tau, "Slope tolerance >= 0 (or inf)");
  sub->add_option("--top-k", f.top_k, "Chains kept per problem");
  sub->add_option("--slope-mode", f.slope_mode, "ols | net");
}

// Writes to <out>/<name> when an output directory is set, else stdout.
template <typename Fn>
void emit(const PipelineConfig& cfg, const std::string& name, Fn&& write) {
  std::ostringstream buf;
  write(buf);
  if (cfg.out_dir.empty()) {
    std::cout << buf.str();
    return;
  }
  std::error_code ec;
  std::filesystem::create_directories(cfg.out_dir, ec);
  if (ec) fail(ErrorCode::io, "cannot create output directory '" + cfg.out_dir + "'");
  const auto path = std::filesystem::path(cfg.out_dir) / name;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot write '" + path.string() + "'");
  out << buf.str();
  if (!out.flush()) fail(ErrorCode::io, "error while writing '" + path.string() + "'");
}

void warn_rejected(const Dataset& ds) {
  for (const auto& r : ds.rejected) {
    std::cerr << "warning: " << r.file << ':' << r.line << ": "
              << to_string(r.code) << ": " << r.message << '\n';
  }
}

Dataset load_or_fail(const PipelineConfig& cfg) {
  Dataset ds = load_dataset(cfg.inputs, cfg.workers);
  warn_rejected(ds);
  if (ds.chains.empty()) {
    fail(ErrorCode::empty_dataset, "no valid chains in input (" +
                                       std::to_string(ds.rejected.size()) +
                                       " rejected records)");
  }
  return ds;
}

std::vector<Trajectory> trajectories_or_warn(const Dataset& ds, const PipelineConfig& cfg) {
  std::vector<SkippedChain> skipped;
  auto trajs = build_trajectories(ds.chains, cfg.metric, cfg.drop_step0, skipped);
  for (const auto& s : skipped) {
    std::cerr << "warning: skipped chain '" << s.chain_id << "': " << s.reason << '\n';
  }
  if (trajs.empty()) fail(ErrorCode::empty_dataset, "no chain yields a trajectory");
  return trajs;
}

int cmd_validate(const PipelineConfig& cfg) {
  validate_config(cfg, false);
  const Dataset ds = load_dataset(cfg.inputs, cfg.workers);
  json summary;
  summary["status"] = ds.rejected.empty() ? "ok" : "invalid";
  summary["valid"] = ds.chains.size();
  summary["rejected"] = ds.rejected.size();
  json errors = json::array();
  for (const auto& r : ds.rejected) {
    errors.push_back({{"file", r.file},
                      {"line", r.line},
                      {"byte_offset", r.byte_offset},
                      {"code", to_string(r.code)},
                      {"message", r.message}});
  }
  summary["errors"] = std::move(errors);
  std::cout << summary.dump(2) << '\n';
  return ds.rejected.empty() ? kExitOk : kExitBadInput;
}

int cmd_segment(const std::string& path, const std::string& source_name,
                const std::optional<std::string>& reference) {
  const auto source = parse_source(source_name);
  if (!source) fail(ErrorCode::bad_config, "unknown source '" + source_name + "'");
  const std::string text = read_file_bytes(path);
  const SegmentedSolution seg = segment_steps(text, *source);
  nlohmann::ordered_json j;
  j["source"] = to_string(seg.source);
  j["segmentation_rule"] = to_string(seg.segmentation_rule);
  j["steps"] = seg.steps;
  j["answer_found"] = seg.answer_found;
  if (seg.answer_found) {
    j["answer"] = seg.answer;
  } else {
    j["answer"] = nullptr;
  }
  if (reference) {
    const auto label = seg.answer_found ? label_correct(seg.answer, *reference)
                                        : Correctness::unknown;
    if (label == Correctness::unknown) {
      j["correct"] = nullptr;
    } else {
      j["correct"] = label == Correctness::correct;
    }
  }
  std::cout << j.dump(2) << '\n';
  return kExitOk;
}

int cmd_trajectory(const PipelineConfig& cfg) {
  validate_config(cfg, false);
  const auto ds = load_or_fail(cfg);
  const auto trajs = trajectories_or_warn(ds, cfg);
  emit(cfg, "trajectories.csv", [&](std::ostream& os) { write_trajectories_csv(trajs, os); });
  return kExitOk;
}

std::vector<AlignedCurve> aligned_curves(const Dataset& ds, const PipelineConfig& cfg) {
  const auto trajs = trajectories_or_warn(ds, cfg);
  auto curves = align_trajectories(trajs, plan_axes(ds.chains, cfg));
  if (cfg.pair_human) {
    const auto consensus = model_consensus(ds.chains);
    for (auto& c : curves) {
      if (c.source != Source::human) continue;
      const auto it = consensus.find(c.problem_id);
      c.correct = it != consensus.end() ? it->second : Correctness::unknown;
    }
  }
  return curves;
}

int cmd_align(const PipelineConfig& cfg) {
  validate_config(cfg, false);
  const auto ds = load_or_fail(cfg);
  const auto curves = aligned_curves(ds, cfg);
  emit(cfg, "aligned.csv", [&](std::ostream& os) { write_aligned_csv(curves, os); });
  return kExitOk;
}

int cmd_aggregate(const PipelineConfig& cfg) {
  validate_config(cfg, false);
  const auto ds = load_or_fail(cfg);
  const auto aggregates = aggregate_curves(aligned_curves(ds, cfg));
  emit(cfg, "curves.csv", [&](std::ostream& os) { export_curves(aggregates, os); });
  return kExitOk;
}

int cmd_prune(PipelineConfig cfg) {
  validate_config(cfg, false);
  cfg.metric = Metric::entropy;
  cfg.drop_step0 = false;
  const auto ds = load_or_fail(cfg);
  std::vector<Trajectory> prunable;
  for (auto& t : trajectories_or_warn(ds, cfg)) {
    if (t.source == Source::llm && t.values.size() >= 2) prunable.push_back(std::move(t));
  }
  if (prunable.empty()) fail(ErrorCode::empty_dataset, "no model chains with a trend to prune");
  const auto eval = evaluate_policy(prunable, {cfg.top_k, cfg.tau, cfg.slope_mode}, cfg.workers);
  emit(cfg, "prune_report.csv", [&](std::ostream& os) { write_prune_csv(eval, os); });
  json s;
  s["bundles_evaluated"] = eval.bundles_evaluated;
  s["bundles_skipped_unlabeled"] = eval.bundles_skipped;
  if (eval.accuracy_retained) {
    s["accuracy_retained"] = *eval.accuracy_retained;
  } else {
    s["accuracy_retained"] = nullptr;
  }
  s["baseline_accuracy"] = eval.baseline_accuracy;
  s["pruned_accuracy"] = eval.pruned_accuracy;
  s["compute_saved"] = eval.compute_saved;
  std::cerr << s.dump() << '\n';
  return kExitOk;
}

int cmd_stats(const PipelineConfig& cfg) {
  validate_config(cfg, false);
  const auto ds = load_or_fail(cfg);
  emit(cfg, "stats.csv", [&](std::ostream& os) { write_stats_csv(length_stats(ds.chains), os); });
  return kExitOk;
}

int cmd_run(const PipelineConfig& cfg) {
  const auto result = run_pipeline(cfg);
  for (const auto& r : result.manifest["rejected_records"]) {
    std::cerr << "warning: " << r["file"].get<std::string>() << ':'
              << r["line"].get<std::size_t>() << ": "
              << r["message"].get<std::string>() << '\n';
  }
  json s;
  s["status"] = "ok";
  s["chains"] = result.chains;
  s["rejected"] = result.rejected;
  s["skipped"] = result.skipped;
  s["files"] = result.files;
  std::cout << s.dump() << '\n';
  return kExitOk;
}

int exit_code_for(ErrorCode code) {
  return code == ErrorCode::bad_config ? kExitBadConfig : kExitBadInput;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entropy-trajectory analysis of reasoning-chain traces"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  Flags f;
  auto* validate = app.add_subcommand("validate", "Check trace files against the schema");
  add_common(validate, f, false);

  std::string seg_input;
  std::string seg_source = "llm";
  std::optional<std::string> seg_reference;
  auto* segment = app.add_subcommand("segment", "Split a solution text into steps and answer");
  segment->add_option("--input", seg_input, "Solution text file")->required();
  segment->add_option("--source", seg_source, "llm | human");
  segment->add_option("--reference", seg_reference, "Reference answer to label against");

  auto* trajectory = app.add_subcommand("trajectory", "Per-chain metric trajectories");
  add_common(trajectory, f, true);
  auto* align = app.add_subcommand("align", "Trajectories resampled to a shared axis");
  add_common(align, f, true);
  add_alignment(align, f);
  auto* aggregate = app.add_subcommand("aggregate", "Mean/std curves per group");
  add_common(aggregate, f, true);
  add_alignment(aggregate, f);
  auto* prune = app.add_subcommand("prune", "Simulate entropy-slope pruning");
  add_common(prune, f, false);
  add_pruning(prune, f);
  prune->add_option("--out", f.out, "Output directory (default: stdout)");
  auto* stats = app.add_subcommand("stats", "Length and accuracy statistics");
  add_common(stats, f, false);
  stats->add_option("--out", f.out, "Output directory (default: stdout)");
  auto* run = app.add_subcommand("run", "Full pipeline into --out");
  add_common(run, f, true);
  add_alignment(run, f);
  add_pruning(run, f);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("bad_config", e.what());
    return kExitBadConfig;
  }

  try {
    if (*segment) return cmd_segment(seg_input, seg_source, seg_reference);
    CLI::App* sub = app.get_subcommands().front();
    const PipelineConfig cfg = resolve(f, *sub);
    if (*validate) return cmd_validate(cfg);
    if (*trajectory) return cmd_trajectory(cfg);
    if (*align) return cmd_align(cfg);
    if (*aggregate) return cmd_aggregate(cfg);
    if (*prune) return cmd_prune(cfg);
    if (*stats) return cmd_stats(cfg);
    if (*run) return cmd_run(cfg);
  } catch (const ParseError& e) {
    print_error(to_string(e.code()), e.what());
    return exit_code_for(e.code());
  } catch (const Error& e) {
    print_error(to_string(e.code()), e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return kExitInternal;
  }
  return kExitInternal;
}
