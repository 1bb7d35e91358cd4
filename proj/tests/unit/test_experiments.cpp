#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "gebm/bench/experiments.hpp"
#include "gebm/error.hpp"
#include "gebm/io/csv.hpp"

using namespace gebm;
using namespace gebm::bench;
using nlohmann::json;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("gebm_exp_" + name);
  std::filesystem::remove_all(d);
  return d;
}

const json kSmallAmortized = {{"seeds", {0, 1, 2, 3, 4}}, {"updates", 1000}, {"mc_samples", 100000}};

}  // namespace

TEST_CASE("unknown experiment names list the registered ones") {
  try {
    run_benchmark("no-such-experiment");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    for (const auto& n : registered_experiments()) CHECK(msg.find(n) != std::string::npos);
  }
  CHECK(registered_experiments().size() == 8);
}

TEST_CASE("unknown and malformed experiment keys are rejected") {
  CHECK_THROWS_AS(run_benchmark("w1-decay", {{"chainz", 10}}), ConfigError);
  CHECK_THROWS_AS(run_benchmark("w1-decay", {{"chains", "many"}}), ConfigError);
  CHECK_THROWS_AS(run_benchmark("w1-decay", {{"seeds", json::array()}}), ConfigError);
  CHECK_THROWS_AS(run_benchmark("line-gebm", {{"train", {{"bogus", 1}}}}), ConfigError);
}

TEST_CASE("five seeds give five per-seed reports of each metric") {
  const auto r = run_benchmark("amortized-vs-batch", kSmallAmortized);
  for (const char* m : {"amortized_rel_error", "batch_rel_error_median", "A_true"}) {
    const auto reps = r.metric(m);
    REQUIRE(reps.size() == 5);
    for (std::size_t i = 0; i < reps.size(); ++i) CHECK(*reps[i].seed == i);
  }
  REQUIRE(r.metric("amortized_rel_error_seed_median").size() == 1);
  CHECK_FALSE(r.metric("amortized_rel_error_seed_median")[0].seed.has_value());
  CHECK(r.config.at("updates") == 1000);
  CHECK(r.config.at("lr_A") == 0.01);
  CHECK(r.reports[0].config == r.config);
}

TEST_CASE("amortized A beats per-batch estimates on a small run") {
  const auto r = run_benchmark("amortized-vs-batch", kSmallAmortized);
  CHECK(r.passed());
}

TEST_CASE("outputs are written and identical across reruns except timing") {
  const auto a = fresh_dir("a"), b = fresh_dir("b");
  const json cfg = {{"seeds", {3, 4}}, {"chains", 500}, {"steps", 200}, {"checkpoint_every", 20},
                    {"exact_samples", 20000}};
  const auto ra = run_benchmark("w1-decay", cfg, a);
  run_benchmark("w1-decay", cfg, b);
  for (const char* f : {"summary.json", "3/report.json", "4/report.json", "3/w1.csv", "4/w1.csv"}) {
    REQUIRE(std::filesystem::exists(a / "w1-decay" / f));
    CHECK(io::read_text(a / "w1-decay" / f) == io::read_text(b / "w1-decay" / f));
  }
  CHECK(std::filesystem::exists(a / "w1-decay" / "timing.json"));
  const json summary = json::parse(io::read_text(a / "w1-decay" / "summary.json"));
  CHECK(summary.at("experiment") == "w1-decay");
  CHECK(summary.at("passed") == ra.passed());
  CHECK(summary.at("config").at("chains") == 500);
  const json rep = json::parse(io::read_text(a / "w1-decay" / "3" / "report.json"));
  CHECK(rep.at("seed") == 3);
  CHECK_FALSE(rep.at("reports")[0].contains("wall_time"));
  const std::string text = io::read_text(a / "w1-decay" / "3" / "w1.csv");
  CHECK(text.substr(0, text.find('\n')) == "step,w1");
  const auto w1 = io::parse_matrix_csv(text.substr(text.find('\n') + 1));
  CHECK(w1.rows() == 11);
  CHECK(w1(0, 1) > w1(10, 1));
}

TEST_CASE("sampler moments on a short run report every covariance entry") {
  const auto r = run_benchmark("sampler-moments", {{"chains", 200}, {"steps", 2000}, {"snapshot_every", 100},
                                                   {"step_size", 1e-2}, {"gamma", 2.0}, {"tail_fraction", 0.5}, {"tolerance", 0.1}});
  for (const char* m : {"ula_cov_00", "ula_cov_01", "ula_cov_11", "kla_cov_00", "kla_cov_01", "kla_cov_11"})
    CHECK(r.metric(m).size() == 1);
  CHECK(r.passed());
}

TEST_CASE("KALE between Gaussians on a short run") {
  const auto r = run_benchmark("kale-gaussian", {{"seeds", {0}}, {"n", 500}, {"kale", {{"steps", 200}}},
                                                 {"min_value", 0.0}, {"null_tolerance", 0.1}});
  REQUIRE(r.metric("kale").size() == 1);
  CHECK(r.metric("kl_true")[0].value == doctest::Approx(0.5));
  CHECK(r.metric("kale")[0].std_error > 0.0);
  CHECK(r.config.at("kale").at("steps") == 200);
  CHECK(r.config.at("kale").at("lr") == 2e-3);
}

TEST_CASE("rate experiment on a coarse grid") {
  const auto r = run_benchmark("rkhs-rate", {{"seeds", {0, 1, 2, 3, 4, 5, 6, 7, 8, 9}}, {"n_grid", {50, 100, 200, 400}}});
  CHECK(r.metric("slope").size() == 1);
  CHECK(r.metric("abs_error_N100").size() == 10);
  CHECK(r.metric("median_abs_error_N200").size() == 1);
}

TEST_CASE("line and temper experiments run end to end on tiny budgets") {
  const json train = {{"base_steps", 20}, {"eval_every", 10}, {"val_base_samples", 100}};
  const json sampler = {{"steps", 20}};
  const auto line = run_benchmark("line-gebm", {{"n", 500},
                                                {"train", train},
                                                {"sampler", sampler},
                                                {"samples", 100},
                                                {"progress_seeds", {0}},
                                                {"progress_steps", 20},
                                                {"progress_early_step", 10}});
  CHECK(line.metric("mmd_ratio").size() == 1);
  CHECK(line.metric("progress_val_kale_change_median").size() == 1);
  CHECK_THROWS_AS(run_benchmark("line-gebm", {{"train", train}, {"progress_early_step", 15}}), ConfigError);

  const auto temper = run_benchmark("temper-sweep", {{"n", 500},
                                                     {"train", train},
                                                     {"sampler", sampler},
                                                     {"samples", 100},
                                                     {"betas", {0.0, 1.0}},
                                                     {"continuity_betas", {1.0}},
                                                     {"continuity_deltas", {0.1}}});
  CHECK(temper.metric("p_value_beta0").size() == 1);
  CHECK(temper.metric("continuity_beta1_delta0.1").size() == 1);
}

TEST_CASE("density parity runs end to end on tiny budgets") {
  const auto r = run_benchmark("density-parity", {{"n", 400},
                                                  {"flow_layers", 2},
                                                  {"flow_hidden", {8}},
                                                  {"ml", {{"steps", 20}, {"eval_every", 10}}},
                                                  {"cd", {{"steps", 5}, {"eval_every", 5}, {"langevin_steps", 5}}},
                                                  {"train", {{"base_steps", 10}, {"eval_every", 5},
                                                             {"val_base_samples", 100}}},
                                                  {"mc_samples", 10000}});
  for (const char* m : {"nll_gebm", "nll_ml", "nll_cd", "nll_true"}) CHECK(r.metric(m).size() == 1);
  CHECK(std::isfinite(r.metric("nll_gebm")[0].value));
}
