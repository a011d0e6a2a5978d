#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "support.hpp"

using namespace cotscope;
namespace fs = std::filesystem;

namespace {

const std::string kSynthetic = fixture::data_path("synthetic_traces.jsonl");

std::string golden(const std::string& name) {
  return read_file_bytes(std::string(COTSCOPE_GOLDEN) + "/" + name);
}

std::vector<std::vector<std::string>> read_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> row;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(cell);
    if (!line.empty() && line.back() == ',') row.emplace_back();
    rows.push_back(row);
  }
  return rows;
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("cotscope_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  return dir;
}

PipelineConfig synthetic_config(const fs::path& out) {
  PipelineConfig cfg;
  cfg.inputs = {kSynthetic};
  cfg.out_dir = out.string();
  return cfg;
}

}  // namespace

TEST(Dataset, SyntheticLoadsCleanly) {
  const auto ds = load_dataset({kSynthetic});
  EXPECT_EQ(ds.chains.size(), 12u);
  EXPECT_TRUE(ds.rejected.empty());
  ASSERT_EQ(ds.inputs.size(), 1u);
  EXPECT_EQ(ds.inputs[0].records, 12u);
  EXPECT_EQ(ds.inputs[0].sha256.size(), 64u);
}

TEST(Dataset, DuplicateChainAcrossFilesRejected) {
  const auto ds = load_dataset({kSynthetic, kSynthetic}, 2);
  EXPECT_EQ(ds.chains.size(), 12u);
  ASSERT_EQ(ds.rejected.size(), 12u);
  EXPECT_EQ(ds.rejected[0].code, ErrorCode::invalid_input);
}

TEST(Dataset, ParallelLoadKeepsArgumentOrder) {
  const auto a = load_dataset({kSynthetic}, 1);
  const auto b = load_dataset({kSynthetic}, 4);
  EXPECT_EQ(a.chains, b.chains);
}

TEST(Stats, SyntheticMatchesHandCounts) {
  const auto ds = load_dataset({kSynthetic});
  const auto t = length_stats(ds.chains);
  const auto* pc = t.find(Domain::precalculus, Source::llm);
  ASSERT_NE(pc, nullptr);
  EXPECT_EQ(pc->chains, 4u);
  EXPECT_EQ(pc->mean_token_count, 625.0);   // (400+900+500+700)/4
  EXPECT_EQ(pc->mean_step_count, 4.25);     // (4+6+5+2)/4
  EXPECT_EQ(pc->labeled_llm, 3u);           // pc2-b unlabeled
  EXPECT_EQ(pc->accuracy, 2.0 / 3.0);
  const auto* nt = t.find(Domain::number_theory, Source::llm);
  ASSERT_NE(nt, nullptr);
  EXPECT_EQ(nt->mean_token_count, 437.5);   // (350+650+600+150)/4
  EXPECT_EQ(nt->mean_step_count, 3.25);     // (3+4+6+0)/4
  EXPECT_EQ(nt->accuracy, 0.5);
  const auto* ph = t.find(Domain::precalculus, Source::human);
  ASSERT_NE(ph, nullptr);
  EXPECT_EQ(ph->mean_token_count, 275.0);
  EXPECT_EQ(ph->mean_step_count, 2.5);
  EXPECT_FALSE(ph->accuracy.has_value());
  const auto* nh = t.find(Domain::number_theory, Source::human);
  ASSERT_NE(nh, nullptr);
  EXPECT_EQ(nh->mean_token_count, 310.0);
  const auto* wrong = t.find(Domain::precalculus, Source::llm, Correctness::incorrect);
  ASSERT_NE(wrong, nullptr);
  EXPECT_EQ(wrong->mean_token_count, 900.0);
  EXPECT_EQ(t.find(Domain::algebra, Source::llm), nullptr);
}

TEST(Axes, RoundedMeanStepsAndOverrides) {
  const auto ds = load_dataset({kSynthetic});
  PipelineConfig cfg;
  auto plans = plan_axes(ds.chains, cfg);
  EXPECT_EQ(plans.at({Domain::precalculus, Source::llm}).target_len, 4u);  // 4.25
  EXPECT_EQ(plans.at({Domain::number_theory, Source::llm}).target_len, 3u);  // 3.25
  EXPECT_EQ(plans.at({Domain::precalculus, Source::human}).target_len, 3u);  // 2.5 rounds up
  cfg.target_len = 7;
  cfg.target_len_overrides[{Domain::number_theory, Source::human}] = 5;
  plans = plan_axes(ds.chains, cfg);
  EXPECT_EQ(plans.at({Domain::precalculus, Source::llm}).target_len, 7u);
  EXPECT_EQ(plans.at({Domain::number_theory, Source::human}).target_len, 5u);
  EXPECT_EQ(plans.at({Domain::number_theory, Source::human}).axis_steps, 3.0);
}

TEST(Consensus, OnlyUnanimousLabels) {
  const auto ds = load_dataset({kSynthetic});
  const auto c = model_consensus(ds.chains);
  EXPECT_EQ(c.at("pc2"), Correctness::correct);     // one labeled chain
  EXPECT_EQ(c.at("pc1"), Correctness::unknown);     // split
}

TEST(ExportCurves, RowsAndOrder) {
  const auto ds = load_dataset({kSynthetic});
  std::vector<SkippedChain> skipped;
  const auto trajs = build_trajectories(ds.chains, Metric::entropy, false, skipped);
  EXPECT_TRUE(skipped.empty());
  const auto aggs = aggregate_curves(align_trajectories(trajs, plan_axes(ds.chains, PipelineConfig{})));
  std::ostringstream os;
  export_curves(aggs, os);
  const auto rows = read_csv(os.str());
  std::size_t expected = 1;
  for (const auto& a : aggs) expected += a.target_len;
  ASSERT_EQ(rows.size(), expected);
  for (std::size_t i = 2; i < rows.size(); ++i) {
    const std::vector<std::string> prev(rows[i - 1].begin(), rows[i - 1].begin() + 4);
    const std::vector<std::string> cur(rows[i].begin(), rows[i].begin() + 4);
    ASSERT_LE(prev, cur);
  }
  std::ostringstream empty;
  try {
    export_curves({}, empty);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::nothing_to_export);
  }
}

TEST(DropStep0, SkipsChainsThatBecomeEmpty) {
  const auto ds = load_dataset({kSynthetic});
  std::vector<SkippedChain> skipped;
  const auto trajs = build_trajectories(ds.chains, Metric::entropy, true, skipped);
  ASSERT_EQ(skipped.size(), 1u);
  EXPECT_EQ(skipped[0].chain_id, "nt2-b");
  EXPECT_EQ(trajs.size(), 11u);
}

TEST(RunPipeline, MatchesGoldenBytes) {
  const auto dir = fresh_dir("golden");
  const auto r = run_pipeline(synthetic_config(dir));
  EXPECT_EQ(r.chains, 12u);
  for (const char* name : {"curves.csv", "stats.csv", "slopes.csv", "prune_report.csv", "separability.csv"}) {
    EXPECT_EQ(read_file_bytes((dir / name).string()), golden(name)) << name;
  }
  fs::remove_all(dir);
}

TEST(RunPipeline, DeterministicAcrossRunsAndWorkers) {
  const auto a = fresh_dir("det_a");
  auto cfg = synthetic_config(a);
  run_pipeline(cfg);
  const std::string first = read_file_bytes((a / "run_manifest.json").string());
  cfg.workers = 4;
  run_pipeline(cfg);
  EXPECT_EQ(read_file_bytes((a / "run_manifest.json").string()), first);
  const auto m = nlohmann::json::parse(first);
  for (const auto& o : m["outputs"]) {
    const auto bytes = read_file_bytes((a / o["file"].get<std::string>()).string());
    EXPECT_EQ(o["sha256"], sha256_hex(bytes));
    EXPECT_EQ(o["bytes"], bytes.size());
  }
  EXPECT_EQ(m["inputs"][0]["sha256"], sha256_hex(read_file_bytes(kSynthetic)));
  fs::remove_all(a);
}

TEST(RunPipeline, CurvesAgreeWithIndependentOracle) {
  // oracle_curves.csv comes from scipy's natural spline and numpy moments.
  const auto oracle = read_csv(golden("oracle_curves.csv"));
  const auto ours = read_csv(golden("curves.csv"));
  ASSERT_EQ(oracle.size(), ours.size());
  for (std::size_t i = 1; i < ours.size(); ++i) {
    // ours: domain,source,correct,metric,step_index,x,mean,std,n
    // oracle: domain,source,correct,step_index,x,mean,std,n
    EXPECT_EQ(ours[i][0], oracle[i][0]);
    EXPECT_EQ(ours[i][1], oracle[i][1]);
    EXPECT_EQ(ours[i][2], oracle[i][2]);
    EXPECT_EQ(ours[i][4], oracle[i][3]);
    EXPECT_EQ(ours[i][8], oracle[i][7]);
    for (int c = 0; c < 3; ++c) {
      EXPECT_NEAR(std::stod(ours[i][5 + c]), std::stod(oracle[i][4 + c]), 1e-12) << "row " << i;
    }
  }
}

TEST(RunPipeline, PruneSummaryHandCounts) {
  const auto dir = fresh_dir("prune");
  const auto r = run_pipeline(synthetic_config(dir));
  const auto& p = r.manifest["prune_summary"];
  EXPECT_EQ(p["bundles_evaluated"], 4u);
  EXPECT_EQ(p["chains_without_trend"], 1u);   // nt2-b has a single point
  // Dropped tokens: 650 + 900 + 700 over 1000 + 600 + 1300 + 1200.
  EXPECT_EQ(p["compute_saved"].get<double>(), 2250.0 / 4100.0);
  EXPECT_EQ(p["accuracy_retained"].get<double>(), 1.0);
  fs::remove_all(dir);
}

TEST(RunPipeline, EmptyDatasetFails) {
  const auto dir = fresh_dir("empty");
  fs::create_directories(dir);
  const auto in = dir / "empty.jsonl";
  std::ofstream(in).close();
  auto cfg = synthetic_config(dir / "out");
  cfg.inputs = {in.string()};
  try {
    run_pipeline(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::empty_dataset);
  }
  fs::remove_all(dir);
}

TEST(Config, Validation) {
  PipelineConfig cfg;
  cfg.inputs = {kSynthetic};
  cfg.out_dir = "x";
  EXPECT_NO_THROW(validate_config(cfg));
  auto code = [](PipelineConfig c) {
    try {
      validate_config(c);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::io;
  };
  auto bad = cfg;
  bad.top_k = 0;
  EXPECT_EQ(code(bad), ErrorCode::bad_config);
  bad = cfg;
  bad.tau = -0.5;
  EXPECT_EQ(code(bad), ErrorCode::bad_config);
  bad = cfg;
  bad.target_len = 1;
  EXPECT_EQ(code(bad), ErrorCode::bad_config);
  bad = cfg;
  bad.inputs.clear();
  EXPECT_EQ(code(bad), ErrorCode::bad_config);
  bad = cfg;
  bad.format = "xml";
  EXPECT_EQ(code(bad), ErrorCode::bad_config);
}
