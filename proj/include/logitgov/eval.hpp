#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "logitgov/audit.hpp"
#include "logitgov/backend.hpp"
#include "logitgov/calibration.hpp"
#include "logitgov/governance.hpp"

namespace logitgov {

enum class Label { Toxic, Benign };

struct LabeledPrompt {
  std::string id;
  std::string prompt;
  Label label = Label::Benign;
};

// JSON Lines {"id", "prompt", "label"}; label is "toxic" or "benign".
std::vector<LabeledPrompt> parse_dataset(std::string_view jsonl);
std::vector<LabeledPrompt> load_dataset(const std::filesystem::path& path);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct BootstrapInterval {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t resamples = 0;
  std::uint64_t seed = 0;
};

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t total() const noexcept { return tp + fp + tn + fn; }
};

Confusion tally(std::span<const std::uint8_t> predictions, std::span<const std::uint8_t> truth);
// 2PR/(P+R), or 0 when P+R == 0.
double f1_score(const Confusion& c);

struct MetricsReport {
  Confusion counts;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  Interval wilson_ci_recall;
  Interval wilson_ci_precision;
  BootstrapInterval bootstrap_f1_ci;
};

// Wilson score interval. Throws InvalidCounts unless 0 <= successes <= trials
// and trials > 0.
Interval wilson_ci(std::uint64_t successes, std::uint64_t trials, double confidence = 0.95);

// Percentile bootstrap (2.5th / 97.5th) of F1. Resample r draws its indices
// from its own stream seeded by (seed, r), so the serial and parallel kernels
// agree bit for bit.
Interval bootstrap_f1_ci_serial(std::span<const std::uint8_t> predictions,
                                std::span<const std::uint8_t> truth,
                                std::size_t resamples, std::uint64_t seed);
Interval bootstrap_f1_ci_parallel(std::span<const std::uint8_t> predictions,
                                  std::span<const std::uint8_t> truth,
                                  std::size_t resamples, std::uint64_t seed);
Interval bootstrap_f1_ci(std::span<const std::uint8_t> predictions,
                         std::span<const std::uint8_t> truth,
                         std::size_t resamples = 10000, std::uint64_t seed = 42);

// Linear-interpolation quantile of sorted data.
double quantile_sorted(std::span<const double> sorted, double q);

// Exact two-sided binomial McNemar test on the discordant counts.
double mcnemar_exact(std::uint64_t b, std::uint64_t c);
// b = A right / B wrong, c = A wrong / B right.
double mcnemar(std::span<const std::uint8_t> pred_a, std::span<const std::uint8_t> pred_b,
               std::span<const std::uint8_t> truth);

MetricsReport compute_metrics(std::span<const std::uint8_t> predictions,
                              std::span<const std::uint8_t> truth,
                              std::size_t resamples = 10000, std::uint64_t seed = 42);

enum class PositiveRule {
  PureLogit,  // calibrated P(positive) > 0.5, no prefilter or boost
  Pipeline,   // full govern(); positive iff decision != Allow
};

struct EvalConfig {
  PolicyConfig policy = PolicyConfig::defaults();
  PositiveRule rule = PositiveRule::PureLogit;
  std::size_t resamples = 10000;
  std::uint64_t seed = 42;
};

struct Prediction {
  bool positive = false;
  double p_harmful = 0.0;
};

std::vector<Prediction> classify_dataset(Session& session, const CalibrationProfile& profile,
                                         std::span<const LabeledPrompt> dataset,
                                         const EvalConfig& config, AuditLog* audit = nullptr);
// Pure-logit mode only: one session per OpenMP thread.
std::vector<Prediction> classify_dataset_parallel(const Backend& backend,
                                                  const CalibrationProfile& profile,
                                                  std::span<const LabeledPrompt> dataset,
                                                  const EvalConfig& config);

std::vector<std::uint8_t> truth_vector(std::span<const LabeledPrompt> dataset);

MetricsReport run_eval(Session& session, const CalibrationProfile& profile,
                       std::span<const LabeledPrompt> dataset, const EvalConfig& config,
                       AuditLog* audit = nullptr);

struct AlphaRow {
  double alpha = 0.0;
  MetricsReport report;
};

std::vector<AlphaRow> alpha_sweep(Session& session, const CalibrationProfile& profile,
                                  std::span<const LabeledPrompt> dataset,
                                  std::span<const double> alphas, const EvalConfig& config,
                                  AuditLog* audit = nullptr);

nlohmann::json to_json(const MetricsReport& report);

}  // namespace logitgov
