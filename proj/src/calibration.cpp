#include "logitgov/calibration.hpp"

#include <cmath>

#include "logitgov/error.hpp"

namespace logitgov {

PolicyAlpha::PolicyAlpha(double alpha) : alpha_(alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error(ErrorCode::InvalidAlpha, "alpha " + std::to_string(alpha) +
                                             " outside [0, 1]");
  }
}

const std::vector<std::string>& default_null_prompts() {
  static const std::vector<std::string> kPrompts{
      "", "N/A", "[MASK]", " ", ".", "none", "\xE2\x80\x94"};
  return kPrompts;
}

const std::vector<std::pair<std::string, std::string>>& default_verbalizer_candidates() {
  static const std::vector<std::pair<std::string, std::string>> kCandidates{
      {"Dangerous", "Safe"}, {"Yes", "No"}};
  return kCandidates;
}

std::string format_prompt(std::string_view prompt_template, const VerbalizerPair& pair,
                          std::string_view action) {
  std::string out;
  out.reserve(prompt_template.size() + action.size() + 16);
  std::size_t pos = 0;
  while (pos < prompt_template.size()) {
    const std::size_t open = prompt_template.find('{', pos);
    if (open == std::string_view::npos) {
      out.append(prompt_template.substr(pos));
      break;
    }
    out.append(prompt_template.substr(pos, open - pos));
    const std::size_t close = prompt_template.find('}', open);
    const std::string_view name = close == std::string_view::npos
                                      ? std::string_view{}
                                      : prompt_template.substr(open + 1, close - open - 1);
    if (name == "action") {
      out.append(action);
    } else if (name == "positive") {
      out.append(pair.positive_label);
    } else if (name == "negative") {
      out.append(pair.negative_label);
    } else {
      out.push_back('{');
      pos = open + 1;
      continue;
    }
    pos = close + 1;
  }
  return out;
}

std::size_t token_fertility(const Vocabulary& vocab, std::string_view label) {
  if (vocab.text_to_id(label)) return 1;
  return vocab.encode(label).size();
}

VerbalizerPair token_fertility_check(const Vocabulary& vocab,
                                     std::string_view positive_label,
                                     std::string_view negative_label) {
  if (positive_label == negative_label) {
    throw Error(ErrorCode::DuplicateLabels,
                "verbalizer labels are both '" + std::string(positive_label) + "'");
  }
  auto resolve = [&](std::string_view label) -> TokenId {
    if (auto id = vocab.text_to_id(label)) return *id;
    std::string pieces;
    try {
      for (TokenId t : vocab.encode(label)) {
        if (!pieces.empty()) pieces += ", ";
        pieces += '"' + vocab.text(t) + '"';
      }
    } catch (const Error&) {
      pieces = "unencodable";
    }
    throw Error(ErrorCode::MultiTokenLabel,
                "label '" + std::string(label) + "' is not a single token: [" +
                    pieces + "]");
  };
  VerbalizerPair pair;
  pair.positive_label = positive_label;
  pair.negative_label = negative_label;
  pair.positive_token = resolve(positive_label);
  pair.negative_token = resolve(negative_label);
  return pair;
}

VerbalizerPair select_verbalizer(
    const Vocabulary& vocab,
    std::span<const std::pair<std::string, std::string>> candidates) {
  std::string rejected;
  for (const auto& [pos, neg] : candidates) {
    try {
      return token_fertility_check(vocab, pos, neg);
    } catch (const Error& e) {
      if (!rejected.empty()) rejected += "; ";
      rejected += e.what();
    }
  }
  throw Error(ErrorCode::NoUsableVerbalizer,
              "no candidate verbalizer pair is single-token (" + rejected + ")");
}

CalibrationProfile measure_bias(Session& session, const VerbalizerPair& pair,
                                std::span<const std::string> null_prompts,
                                std::string_view prompt_template) {
  if (null_prompts.empty()) {
    throw Error(ErrorCode::InvalidConfig, "no null prompts given");
  }
  CalibrationProfile profile;
  profile.pair = pair;
  profile.prompt_template = prompt_template;
  profile.null_prompts.assign(null_prompts.begin(), null_prompts.end());
  double sum = 0.0;
  for (const std::string& null_prompt : null_prompts) {
    const LogitVector logits =
        run_prompt(session, format_prompt(prompt_template, pair, null_prompt));
    const double delta = logits[pair.positive_token] - logits[pair.negative_token];
    profile.per_prompt_deltas.push_back(delta);
    sum += delta;
  }
  profile.bias_delta = sum / static_cast<double>(null_prompts.size());
  return profile;
}

std::pair<double, double> read_pair_logits(Session& session,
                                           const CalibrationProfile& profile,
                                           std::string_view action) {
  const LogitVector logits = run_prompt(
      session, format_prompt(profile.prompt_template, profile.pair, action));
  return {logits[profile.pair.positive_token], logits[profile.pair.negative_token]};
}

ProbeResult correct_pair(const CalibrationProfile& profile, PolicyAlpha alpha,
                         double logit_pos, double logit_neg, ProbeOptions options) {
  const std::string labels[2] = {profile.pair.positive_label, profile.pair.negative_label};
  const TokenId tokens[2] = {profile.pair.positive_token, profile.pair.negative_token};
  const double corrected[2] = {logit_pos - alpha.value() * profile.bias_delta, logit_neg};
  const double raw[2] = {logit_pos, logit_neg};
  return rank_classes(labels, tokens, corrected, raw, options);
}

ProbeResult calibrated_decision(Session& session, const CalibrationProfile& profile,
                                PolicyAlpha alpha, std::string_view action,
                                ProbeOptions options) {
  const auto [pos, neg] = read_pair_logits(session, profile, action);
  return correct_pair(profile, alpha, pos, neg, options);
}

nlohmann::json to_json(const CalibrationProfile& profile) {
  return {
      {"pair",
       {{"positive_label", profile.pair.positive_label},
        {"negative_label", profile.pair.negative_label},
        {"positive_token", profile.pair.positive_token},
        {"negative_token", profile.pair.negative_token}}},
      {"bias_delta", profile.bias_delta},
      {"per_prompt_deltas", profile.per_prompt_deltas},
      {"null_prompts", profile.null_prompts},
      {"template", profile.prompt_template},
  };
}

CalibrationProfile profile_from_json(const nlohmann::json& j) {
  try {
    CalibrationProfile p;
    const auto& pair = j.at("pair");
    p.pair.positive_label = pair.at("positive_label").get<std::string>();
    p.pair.negative_label = pair.at("negative_label").get<std::string>();
    p.pair.positive_token = pair.at("positive_token").get<TokenId>();
    p.pair.negative_token = pair.at("negative_token").get<TokenId>();
    p.bias_delta = j.at("bias_delta").get<double>();
    p.per_prompt_deltas = j.at("per_prompt_deltas").get<std::vector<double>>();
    if (j.contains("null_prompts")) {
      p.null_prompts = j["null_prompts"].get<std::vector<std::string>>();
    }
    p.prompt_template = j.value("template", std::string(kSafetyTemplate));
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("profile JSON: ") + e.what());
  }
}

const CalibrationProfile& CalibrationCache::get_or_measure(
    Session& session, const VerbalizerPair& pair,
    std::span<const std::string> null_prompts) {
  std::lock_guard lock(mu_);
  Key key{session.model().name, pair.positive_label, pair.negative_label};
  auto it = profiles_.find(key);
  if (it != profiles_.end()) return it->second;
  return profiles_.emplace(key, measure_bias(session, pair, null_prompts)).first->second;
}

const CalibrationProfile& CalibrationCache::recalibrate(
    Session& session, const VerbalizerPair& pair,
    std::span<const std::string> null_prompts) {
  std::lock_guard lock(mu_);
  Key key{session.model().name, pair.positive_label, pair.negative_label};
  return profiles_.insert_or_assign(key, measure_bias(session, pair, null_prompts))
      .first->second;
}

std::size_t CalibrationCache::size() const {
  std::lock_guard lock(mu_);
  return profiles_.size();
}

}  // namespace logitgov
