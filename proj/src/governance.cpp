#include "logitgov/governance.hpp"

#include <algorithm>
#include <fstream>
#include <queue>
#include <sstream>

#include "logitgov/error.hpp"

namespace logitgov {

namespace {

unsigned char lower(unsigned char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<unsigned char>(c + 32) : c;
}

std::vector<std::string> pattern_texts(const std::vector<PatternRule>& rules, bool strip_only) {
  std::vector<std::string> out;
  for (const PatternRule& r : rules) {
    if (!strip_only || r.strip) out.push_back(r.text);
  }
  return out;
}

// One pass of control-character removal. C1 controls are only recognized in
// their UTF-8 form (C2 80..C2 9F).
std::string strip_controls(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto c = static_cast<unsigned char>(s[i]);
    if ((c < 0x20 && c != '\n' && c != '\t') || c == 0x7f) continue;
    if (c == 0xc2 && i + 1 < s.size()) {
      const auto next = static_cast<unsigned char>(s[i + 1]);
      if (next >= 0x80 && next <= 0x9f) {
        ++i;
        continue;
      }
    }
    out.push_back(static_cast<char>(c));
  }
  return out;
}

std::string strip_patterns(std::string_view s, const PatternMatcher& matcher) {
  const auto hits = matcher.find_all(s);
  if (hits.empty()) return std::string(s);
  std::vector<bool> drop(s.size(), false);
  for (const auto& h : hits) {
    std::fill(drop.begin() + h.begin, drop.begin() + h.end, true);
  }
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!drop[i]) out.push_back(s[i]);
  }
  return out;
}

std::string sanitize_with(std::string_view action, const PatternMatcher& strip_matcher) {
  std::string current(action);
  while (true) {
    std::string next = strip_patterns(strip_controls(current), strip_matcher);
    if (next == current) return current;
    current = std::move(next);
  }
}

RiskReport prefilter_with(std::string_view action, const PolicyConfig& config,
                          const PatternMatcher& matcher) {
  RiskReport report;
  std::vector<bool> seen(config.patterns.size(), false);
  for (const auto& hit : matcher.find_all(action)) {
    if (seen[hit.pattern]) continue;
    seen[hit.pattern] = true;
    const PatternRule& rule = config.patterns[hit.pattern];
    report.matched_patterns.push_back({rule.name, hit.begin, hit.end});
    report.score += rule.weight;
  }
  report.triggered = report.score >= config.prefilter_threshold;
  return report;
}

double boost_with(std::string_view action, double p, const PolicyConfig& config,
                  const PatternMatcher& matcher) {
  if (!matcher.any(action)) return p;
  return std::min(1.0, p + config.privacy.boost);
}

}  // namespace

// ---------------------------------------------------------------------------
// PolicyConfig

PolicyConfig PolicyConfig::defaults() {
  PolicyConfig c;
  c.patterns = {
      {"instruction_override", "ignore previous", 1.0, true},
      {"instruction_override", "disregard your instructions", 1.0, true},
      {"injection", "system prompt", 1.0, true},
      {"encoding", "base64", 1.0, false},
      {"encoding", "rot13", 1.0, false},
      {"authority", "ADMIN OVERRIDE", 1.0, false},
      {"authority", "sudo mode", 1.0, false},
      {"authority", "developer mode", 1.0, false},
  };
  c.privacy.keywords = {"surveil", "track location", "exfiltrate", "keylog"};
  return c;
}

void PolicyConfig::validate() const {
  if (!(0.5 <= bands.log && bands.log < bands.warn && bands.warn < bands.block &&
        bands.block <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig,
                "band thresholds must satisfy 0.5 <= log < warn < block <= 1");
  }
  if (!(privacy.boost >= 0.0 && privacy.boost <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "privacy boost must be in [0, 1]");
  }
  for (const PatternRule& p : patterns) {
    if (p.text.empty()) throw Error(ErrorCode::InvalidConfig, "empty pattern text");
    if (!(p.weight >= 0.0)) {
      throw Error(ErrorCode::InvalidConfig, "pattern weight must be >= 0");
    }
  }
  for (const std::string& k : privacy.keywords) {
    if (k.empty()) throw Error(ErrorCode::InvalidConfig, "empty privacy keyword");
  }
}

PolicyConfig policy_from_json(const nlohmann::json& j) {
  PolicyConfig c = PolicyConfig::defaults();
  try {
    if (j.contains("alpha")) c.alpha = PolicyAlpha(j["alpha"].get<double>());
    if (j.contains("thresholds")) {
      const auto& t = j["thresholds"];
      c.bands.block = t.value("block", c.bands.block);
      c.bands.warn = t.value("warn", c.bands.warn);
      c.bands.log = t.value("log", c.bands.log);
    }
    if (j.contains("patterns")) {
      c.patterns.clear();
      for (const auto& p : j["patterns"]) {
        PatternRule rule;
        rule.name = p.at("name").get<std::string>();
        rule.text = p.at("text").get<std::string>();
        rule.weight = p.value("weight", 1.0);
        rule.strip = p.value("strip", rule.name == "instruction_override" ||
                                          rule.name == "injection");
        c.patterns.push_back(std::move(rule));
      }
    }
    c.prefilter_threshold = j.value("prefilter_threshold", c.prefilter_threshold);
    if (j.contains("privacy")) {
      const auto& p = j["privacy"];
      if (p.contains("keywords")) {
        c.privacy.keywords = p["keywords"].get<std::vector<std::string>>();
      }
      c.privacy.boost = p.value("boost", c.privacy.boost);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("policy JSON: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json to_json(const PolicyConfig& c) {
  nlohmann::json patterns = nlohmann::json::array();
  for (const PatternRule& p : c.patterns) {
    patterns.push_back({{"name", p.name}, {"text", p.text}, {"weight", p.weight},
                        {"strip", p.strip}});
  }
  return {
      {"alpha", c.alpha.value()},
      {"thresholds", {{"block", c.bands.block}, {"warn", c.bands.warn}, {"log", c.bands.log}}},
      {"patterns", patterns},
      {"prefilter_threshold", c.prefilter_threshold},
      {"privacy", {{"keywords", c.privacy.keywords}, {"boost", c.privacy.boost}}},
  };
}

PolicyConfig load_policy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  try {
    return policy_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("policy JSON: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// PatternMatcher

PatternMatcher::PatternMatcher(const std::vector<std::string>& patterns) {
  nodes_.emplace_back();
  nodes_[0].next.fill(-1);
  for (std::size_t p = 0; p < patterns.size(); ++p) {
    std::int32_t state = 0;
    for (char ch : patterns[p]) {
      const unsigned char c = lower(static_cast<unsigned char>(ch));
      if (nodes_[state].next[c] < 0) {
        nodes_[state].next[c] = static_cast<std::int32_t>(nodes_.size());
        nodes_.emplace_back();
        nodes_.back().next.fill(-1);
      }
      state = nodes_[state].next[c];
    }
    nodes_[state].outputs.push_back(p);
    lengths_.push_back(patterns[p].size());
  }

  // BFS to fill failure links and turn the trie into a full goto table.
  std::queue<std::int32_t> queue;
  for (auto& child : nodes_[0].next) {
    if (child < 0) {
      child = 0;
    } else {
      nodes_[child].fail = 0;
      queue.push(child);
    }
  }
  while (!queue.empty()) {
    const std::int32_t state = queue.front();
    queue.pop();
    const std::int32_t fail = nodes_[state].fail;
    const auto& inherited = nodes_[fail].outputs;
    nodes_[state].outputs.insert(nodes_[state].outputs.end(), inherited.begin(),
                                 inherited.end());
    for (std::size_t c = 0; c < 256; ++c) {
      std::int32_t& child = nodes_[state].next[c];
      if (child < 0) {
        child = nodes_[fail].next[c];
      } else {
        nodes_[child].fail = nodes_[fail].next[c];
        queue.push(child);
      }
    }
  }
}

std::vector<PatternMatcher::Hit> PatternMatcher::find_all(std::string_view text) const {
  std::vector<Hit> hits;
  std::int32_t state = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    state = nodes_[state].next[lower(static_cast<unsigned char>(text[i]))];
    for (std::size_t p : nodes_[state].outputs) {
      hits.push_back({p, i + 1 - lengths_[p], i + 1});
    }
  }
  return hits;
}

bool PatternMatcher::any(std::string_view text) const {
  std::int32_t state = 0;
  for (char ch : text) {
    state = nodes_[state].next[lower(static_cast<unsigned char>(ch))];
    if (!nodes_[state].outputs.empty()) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Stages

RiskReport prefilter(std::string_view action, const PolicyConfig& config) {
  return prefilter_with(action, config, PatternMatcher(pattern_texts(config.patterns, false)));
}

std::string sanitize(std::string_view action, const PolicyConfig& config) {
  return sanitize_with(action, PatternMatcher(pattern_texts(config.patterns, true)));
}

std::string sanitize(std::string_view action) {
  return sanitize(action, PolicyConfig::defaults());
}

double privacy_boost(std::string_view action, double p_harmful, const PolicyConfig& config) {
  return boost_with(action, p_harmful, config, PatternMatcher(config.privacy.keywords));
}

Decision band_decision(double p, const BandThresholds& bands) {
  if (p > bands.block) return Decision::Block;
  if (p > bands.warn) return Decision::Warn;
  if (p > bands.log) return Decision::Log;
  return Decision::Allow;
}

std::string_view stage_name(Stage stage) {
  switch (stage) {
    case Stage::Prefilter: return "prefilter";
    case Stage::Probe: return "probe";
    case Stage::Error: return "error";
  }
  return "error";
}

// ---------------------------------------------------------------------------
// Governor

Governor::Governor(PolicyConfig config, AuditLog& audit)
    : config_(std::move(config)),
      audit_(&audit),
      prefilter_matcher_(pattern_texts(config_.patterns, false)),
      strip_matcher_(pattern_texts(config_.patterns, true)),
      privacy_matcher_(config_.privacy.keywords) {
  config_.validate();
}

RiskReport Governor::prefilter(std::string_view action) const {
  return prefilter_with(action, config_, prefilter_matcher_);
}

std::string Governor::sanitize(std::string_view action) const {
  return sanitize_with(action, strip_matcher_);
}

double Governor::privacy_boost(std::string_view action, double p_harmful) const {
  return boost_with(action, p_harmful, config_, privacy_matcher_);
}

Verdict Governor::govern(Session& session, const CalibrationProfile& profile,
                         std::string_view action) {
  Verdict v;
  const std::string clean = sanitize(action);
  std::string note;
  try {
    v.risk = prefilter(action);
    if (v.risk.triggered) {
      v.decision = Decision::Block;
      v.p_harmful = 1.0;
      v.stage = Stage::Prefilter;
      for (const PatternMatch& m : v.risk.matched_patterns) {
        note += note.empty() ? "matched:" : ",";
        note += m.name;
      }
    } else {
      const ProbeResult probe = calibrated_decision(session, profile, config_.alpha, clean);
      const double p = probe.find(profile.pair.positive_label)->probability;
      v.p_harmful = privacy_boost(clean, p);
      v.decision = band_decision(v.p_harmful, config_.bands);
      v.stage = Stage::Probe;
      if (v.p_harmful != p) note = "privacy-boost";
      if (v.decision == Decision::Warn) {
        note += note.empty() ? "notify-operator" : ";notify-operator";
      }
    }
  } catch (const std::exception& e) {
    v = Verdict{};
    v.decision = Decision::Block;
    v.p_harmful = 1.0;
    v.stage = Stage::Error;
    v.error = e.what();
    note = "fail-closed";
  }

  const AuditEntry entry = audit_->append(
      {Blake3::hash(clean), v.decision, v.p_harmful, std::string(stage_name(v.stage)), note});
  v.audit_id = entry.sequence_number;
  return v;
}

Verdict govern(Session& session, const CalibrationProfile& profile,
               std::string_view action, const PolicyConfig& config, AuditLog& audit) {
  return Governor(config, audit).govern(session, profile, action);
}

}  // namespace logitgov
