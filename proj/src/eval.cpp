#include "logitgov/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/normal.hpp>

#include "logitgov/error.hpp"
#include "logitgov/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace logitgov {

namespace {

void require_same_length(std::size_t a, std::size_t b) {
  if (a != b) {
    throw Error(ErrorCode::LengthMismatch,
                std::to_string(a) + " predictions vs " + std::to_string(b) + " labels");
  }
}

std::uint64_t resample_stream(std::uint64_t seed, std::size_t r) {
  std::uint64_t s = seed ^ (0xd1b54a32d192ed03ull * (r + 1));
  return splitmix64(s);
}

// Multiply-shift mapping of a 64-bit draw onto [0, n).
std::size_t bounded(std::uint64_t& state, std::size_t n) {
  return static_cast<std::size_t>(
      (static_cast<unsigned __int128>(splitmix64(state)) * n) >> 64);
}

double resample_f1(std::span<const std::uint8_t> predictions,
                   std::span<const std::uint8_t> truth, std::uint64_t stream) {
  Confusion c;
  const std::size_t n = predictions.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = bounded(stream, n);
    const bool p = predictions[k] != 0;
    const bool t = truth[k] != 0;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return f1_score(c);
}

Interval percentile_interval(std::vector<double>& values) {
  std::sort(values.begin(), values.end());
  return {quantile_sorted(values, 0.025), quantile_sorted(values, 0.975)};
}

void check_bootstrap_inputs(std::span<const std::uint8_t> predictions,
                            std::span<const std::uint8_t> truth, std::size_t resamples) {
  require_same_length(predictions.size(), truth.size());
  if (predictions.empty() || resamples == 0) {
    throw Error(ErrorCode::InvalidCounts, "bootstrap needs data and at least one resample");
  }
}

}  // namespace

std::vector<LabeledPrompt> parse_dataset(std::string_view jsonl) {
  std::vector<LabeledPrompt> out;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      LabeledPrompt p;
      p.id = j.at("id").get<std::string>();
      p.prompt = j.at("prompt").get<std::string>();
      const std::string label = j.at("label").get<std::string>();
      if (label == "toxic") {
        p.label = Label::Toxic;
      } else if (label == "benign") {
        p.label = Label::Benign;
      } else {
        throw Error(ErrorCode::InvalidConfig,
                    "dataset line " + std::to_string(lineno) + ": unknown label '" +
                        label + "'");
      }
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::InvalidConfig,
                  "dataset line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<LabeledPrompt> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_dataset(ss.str());
}

Confusion tally(std::span<const std::uint8_t> predictions, std::span<const std::uint8_t> truth) {
  require_same_length(predictions.size(), truth.size());
  Confusion c;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool p = predictions[i] != 0;
    const bool t = truth[i] != 0;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double f1_score(const Confusion& c) {
  const double precision = c.tp + c.fp ? static_cast<double>(c.tp) / (c.tp + c.fp) : 0.0;
  const double recall = c.tp + c.fn ? static_cast<double>(c.tp) / (c.tp + c.fn) : 0.0;
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

Interval wilson_ci(std::uint64_t successes, std::uint64_t trials, double confidence) {
  if (trials == 0 || successes > trials) {
    throw Error(ErrorCode::InvalidCounts, std::to_string(successes) + "/" +
                                              std::to_string(trials));
  }
  if (!(confidence > 0.0 && confidence < 1.0)) {
    throw Error(ErrorCode::InvalidCounts, "confidence must be in (0, 1)");
  }
  const double z = boost::math::quantile(boost::math::normal(), 0.5 + confidence / 2.0);
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  Interval ci{std::max(0.0, center - half), std::min(1.0, center + half)};
  if (successes == 0) ci.lo = 0.0;
  if (successes == trials) ci.hi = 1.0;
  return ci;
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

Interval bootstrap_f1_ci_serial(std::span<const std::uint8_t> predictions,
                                std::span<const std::uint8_t> truth,
                                std::size_t resamples, std::uint64_t seed) {
  check_bootstrap_inputs(predictions, truth, resamples);
  std::vector<double> f1(resamples);
  for (std::size_t r = 0; r < resamples; ++r) {
    f1[r] = resample_f1(predictions, truth, resample_stream(seed, r));
  }
  return percentile_interval(f1);
}

Interval bootstrap_f1_ci_parallel(std::span<const std::uint8_t> predictions,
                                  std::span<const std::uint8_t> truth,
                                  std::size_t resamples, std::uint64_t seed) {
  check_bootstrap_inputs(predictions, truth, resamples);
  std::vector<double> f1(resamples);
  const auto count = static_cast<std::ptrdiff_t>(resamples);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < count; ++r) {
    f1[r] = resample_f1(predictions, truth, resample_stream(seed, static_cast<std::size_t>(r)));
  }
  return percentile_interval(f1);
}

Interval bootstrap_f1_ci(std::span<const std::uint8_t> predictions,
                         std::span<const std::uint8_t> truth, std::size_t resamples,
                         std::uint64_t seed) {
  return kernels::max_threads() > 1
             ? bootstrap_f1_ci_parallel(predictions, truth, resamples, seed)
             : bootstrap_f1_ci_serial(predictions, truth, resamples, seed);
}

double mcnemar_exact(std::uint64_t b, std::uint64_t c) {
  const std::uint64_t n = b + c;
  if (n == 0) return 1.0;
  const boost::math::binomial_distribution<double> dist(static_cast<double>(n), 0.5);
  const double tail = boost::math::cdf(dist, static_cast<double>(std::min(b, c)));
  return std::min(1.0, 2.0 * tail);
}

double mcnemar(std::span<const std::uint8_t> pred_a, std::span<const std::uint8_t> pred_b,
               std::span<const std::uint8_t> truth) {
  require_same_length(pred_a.size(), truth.size());
  require_same_length(pred_b.size(), truth.size());
  std::uint64_t b = 0, c = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool a_right = (pred_a[i] != 0) == (truth[i] != 0);
    const bool b_right = (pred_b[i] != 0) == (truth[i] != 0);
    if (a_right && !b_right) ++b;
    if (!a_right && b_right) ++c;
  }
  return mcnemar_exact(b, c);
}

MetricsReport compute_metrics(std::span<const std::uint8_t> predictions,
                              std::span<const std::uint8_t> truth, std::size_t resamples,
                              std::uint64_t seed) {
  if (predictions.empty()) throw Error(ErrorCode::DatasetEmpty, "no predictions");
  MetricsReport r;
  r.counts = tally(predictions, truth);
  const Confusion& c = r.counts;
  r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  r.precision = c.tp + c.fp ? static_cast<double>(c.tp) / (c.tp + c.fp) : 0.0;
  r.recall = c.tp + c.fn ? static_cast<double>(c.tp) / (c.tp + c.fn) : 0.0;
  r.f1 = f1_score(c);
  // An empty denominator carries no information: report the whole unit interval.
  r.wilson_ci_recall = c.tp + c.fn ? wilson_ci(c.tp, c.tp + c.fn) : Interval{0.0, 1.0};
  r.wilson_ci_precision = c.tp + c.fp ? wilson_ci(c.tp, c.tp + c.fp) : Interval{0.0, 1.0};
  const Interval boot = bootstrap_f1_ci(predictions, truth, resamples, seed);
  r.bootstrap_f1_ci = {boot.lo, boot.hi, resamples, seed};
  return r;
}

std::vector<std::uint8_t> truth_vector(std::span<const LabeledPrompt> dataset) {
  std::vector<std::uint8_t> truth;
  truth.reserve(dataset.size());
  for (const LabeledPrompt& p : dataset) truth.push_back(p.label == Label::Toxic);
  return truth;
}

std::vector<Prediction> classify_dataset(Session& session, const CalibrationProfile& profile,
                                         std::span<const LabeledPrompt> dataset,
                                         const EvalConfig& config, AuditLog* audit) {
  if (dataset.empty()) throw Error(ErrorCode::DatasetEmpty, "dataset has no prompts");
  std::vector<Prediction> out;
  out.reserve(dataset.size());
  if (config.rule == PositiveRule::Pipeline) {
    AuditLog scratch;
    Governor governor(config.policy, audit ? *audit : scratch);
    for (const LabeledPrompt& item : dataset) {
      const Verdict v = governor.govern(session, profile, item.prompt);
      out.push_back({v.decision != Decision::Allow, v.p_harmful});
    }
    return out;
  }
  for (const LabeledPrompt& item : dataset) {
    const ProbeResult r = calibrated_decision(session, profile, config.policy.alpha, item.prompt);
    const double p = r.find(profile.pair.positive_label)->probability;
    out.push_back({p > 0.5, p});
  }
  return out;
}

std::vector<Prediction> classify_dataset_parallel(const Backend& backend,
                                                  const CalibrationProfile& profile,
                                                  std::span<const LabeledPrompt> dataset,
                                                  const EvalConfig& config) {
  if (config.rule != PositiveRule::PureLogit) {
    throw Error(ErrorCode::InvalidConfig,
                "parallel classification only supports the pure-logit rule");
  }
  if (dataset.empty()) throw Error(ErrorCode::DatasetEmpty, "dataset has no prompts");
  std::vector<Prediction> out(dataset.size());
  const auto count = static_cast<std::ptrdiff_t>(dataset.size());
  std::exception_ptr failure;
#pragma omp parallel
  {
    std::unique_ptr<Session> session = backend.new_session();
#pragma omp for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      try {
        const ProbeResult r =
            calibrated_decision(*session, profile, config.policy.alpha, dataset[i].prompt);
        const double p = r.find(profile.pair.positive_label)->probability;
        out[i] = {p > 0.5, p};
      } catch (...) {
#pragma omp critical(logitgov_eval_failure)
        if (!failure) failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

MetricsReport run_eval(Session& session, const CalibrationProfile& profile,
                       std::span<const LabeledPrompt> dataset, const EvalConfig& config,
                       AuditLog* audit) {
  const auto predictions = classify_dataset(session, profile, dataset, config, audit);
  std::vector<std::uint8_t> predicted;
  predicted.reserve(predictions.size());
  for (const Prediction& p : predictions) predicted.push_back(p.positive);
  return compute_metrics(predicted, truth_vector(dataset), config.resamples, config.seed);
}

std::vector<AlphaRow> alpha_sweep(Session& session, const CalibrationProfile& profile,
                                  std::span<const LabeledPrompt> dataset,
                                  std::span<const double> alphas, const EvalConfig& config,
                                  AuditLog* audit) {
  std::vector<AlphaRow> rows;
  rows.reserve(alphas.size());
  for (double alpha : alphas) {
    EvalConfig c = config;
    c.policy.alpha = PolicyAlpha(alpha);
    rows.push_back({alpha, run_eval(session, profile, dataset, c, audit)});
  }
  return rows;
}

nlohmann::json to_json(const MetricsReport& r) {
  return {
      {"tp", r.counts.tp},
      {"fp", r.counts.fp},
      {"tn", r.counts.tn},
      {"fn", r.counts.fn},
      {"accuracy", r.accuracy},
      {"precision", r.precision},
      {"recall", r.recall},
      {"f1", r.f1},
      {"wilson_ci_recall", {{"lo", r.wilson_ci_recall.lo}, {"hi", r.wilson_ci_recall.hi}}},
      {"wilson_ci_precision",
       {{"lo", r.wilson_ci_precision.lo}, {"hi", r.wilson_ci_precision.hi}}},
      {"bootstrap_f1_ci",
       {{"lo", r.bootstrap_f1_ci.lo},
        {"hi", r.bootstrap_f1_ci.hi},
        {"resamples", r.bootstrap_f1_ci.resamples},
        {"seed", r.bootstrap_f1_ci.seed}}},
  };
}

}  // namespace logitgov
