#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "logitgov/audit.hpp"
#include "logitgov/backend.hpp"
#include "logitgov/calibration.hpp"

namespace logitgov {

struct PatternRule {
  std::string name;
  std::string text;
  double weight = 1.0;
  bool strip = false;  // also removed by sanitize()
};

struct BandThresholds {
  double block = 0.9;
  double warn = 0.7;
  double log = 0.5;
};

struct PrivacyConfig {
  std::vector<std::string> keywords;
  double boost = 0.25;
};

struct PolicyConfig {
  PolicyAlpha alpha{0.5};
  BandThresholds bands;
  std::vector<PatternRule> patterns;
  double prefilter_threshold = 1.0;
  PrivacyConfig privacy;

  static PolicyConfig defaults();
  // Throws InvalidConfig unless 0.5 <= log < warn < block <= 1.
  void validate() const;
};

PolicyConfig policy_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PolicyConfig& config);
PolicyConfig load_policy(const std::filesystem::path& path);

struct PatternMatch {
  std::string name;
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct RiskReport {
  double score = 0.0;
  std::vector<PatternMatch> matched_patterns;
  bool triggered = false;
};

// Case-insensitive (ASCII) multi-pattern matcher: one pass over the input,
// Aho-Corasick automaton over lowercased bytes.
class PatternMatcher {
 public:
  explicit PatternMatcher(const std::vector<std::string>& patterns);

  struct Hit {
    std::size_t pattern;
    std::size_t begin;
    std::size_t end;
  };
  // Every occurrence, in order of end position.
  std::vector<Hit> find_all(std::string_view text) const;
  bool any(std::string_view text) const;

 private:
  struct Node {
    std::array<std::int32_t, 256> next;
    std::int32_t fail = 0;
    std::vector<std::size_t> outputs;
  };
  std::vector<Node> nodes_;
  std::vector<std::size_t> lengths_;
};

RiskReport prefilter(std::string_view action, const PolicyConfig& config);

// Drops C0 controls other than \n and \t, DEL, UTF-8 encoded C1 controls, and
// strip-flagged pattern text, repeating until nothing changes.
std::string sanitize(std::string_view action, const PolicyConfig& config);
std::string sanitize(std::string_view action);

double privacy_boost(std::string_view action, double p_harmful, const PolicyConfig& config);

// Strictly-greater band edges.
Decision band_decision(double p_harmful, const BandThresholds& bands);

enum class Stage { Prefilter, Probe, Error };
std::string_view stage_name(Stage stage);

struct Verdict {
  Decision decision = Decision::Block;
  double p_harmful = 1.0;
  Stage stage = Stage::Error;
  std::uint64_t audit_id = 0;
  RiskReport risk;
  std::string error;  // set when stage == Error
};

// Prefilter -> sanitize -> calibrated probe + privacy boost -> band. Every
// call appends exactly one audit entry. Backend failures yield Block.
Verdict govern(Session& session, const CalibrationProfile& profile,
               std::string_view action, const PolicyConfig& config, AuditLog& audit);

// Same pipeline with the policy's matchers built once.
class Governor {
 public:
  Governor(PolicyConfig config, AuditLog& audit);

  Verdict govern(Session& session, const CalibrationProfile& profile,
                 std::string_view action);
  RiskReport prefilter(std::string_view action) const;
  std::string sanitize(std::string_view action) const;
  double privacy_boost(std::string_view action, double p_harmful) const;

  const PolicyConfig& config() const noexcept { return config_; }

 private:
  PolicyConfig config_;
  AuditLog* audit_;
  PatternMatcher prefilter_matcher_;
  PatternMatcher strip_matcher_;
  PatternMatcher privacy_matcher_;
  std::vector<std::size_t> strip_lengths_;
};

}  // namespace logitgov
