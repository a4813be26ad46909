// logitgov: command-line front end over the library. Every subcommand is a
// thin wrapper; --json switches to machine-readable output.
//
// Exit codes: 0 ok, 2 usage, 3 domain error, 4 tamper detected.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "logitgov/audit.hpp"
#include "logitgov/backend.hpp"
#include "logitgov/calibration.hpp"
#include "logitgov/error.hpp"
#include "logitgov/eval.hpp"
#include "logitgov/governance.hpp"
#include "logitgov/grammar.hpp"
#include "logitgov/kvstate.hpp"
#include "logitgov/probe.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace logitgov;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitDomain = 3;
constexpr int kExitTamper = 4;

struct Options {
  std::string fixture_path;
  std::string toy_corpus_path;
  std::uint32_t toy_order = 1;
  std::string policy_path;
  std::string profile_path;
  std::uint64_t seed = 42;
  bool json_output = false;
  std::optional<std::int64_t> clock_ms;
};

// Raised for argument combinations CLI11 cannot express.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

std::unique_ptr<Backend> open_backend(const Options& opt) {
  if (opt.fixture_path.empty() == opt.toy_corpus_path.empty()) {
    throw UsageError("select exactly one of --backend-fixture or --toy-corpus");
  }
  if (!opt.fixture_path.empty()) {
    return std::make_unique<FixtureBackend>(FixtureBackend::load(opt.fixture_path));
  }
  ToyLmOptions toy;
  toy.order = opt.toy_order;
  return std::make_unique<ToyLm>(ToyLm::load(opt.toy_corpus_path, toy));
}

PolicyConfig open_policy(const Options& opt) {
  return opt.policy_path.empty() ? PolicyConfig::defaults() : load_policy(opt.policy_path);
}

CalibrationProfile measure_default_profile(Session& session) {
  const VerbalizerPair pair =
      select_verbalizer(session.vocab(), default_verbalizer_candidates());
  return measure_bias(session, pair, default_null_prompts());
}

// Profile from --profile when given, otherwise measured on the spot.
CalibrationProfile open_profile(const Options& opt, Session& session) {
  if (opt.profile_path.empty()) return measure_default_profile(session);
  try {
    CalibrationProfile profile = profile_from_json(json::parse(read_text(opt.profile_path)));
    // Re-resolve the verbalizers against this backend's vocabulary.
    profile.pair = token_fertility_check(session.vocab(), profile.pair.positive_label,
                                         profile.pair.negative_label);
    return profile;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("profile JSON: ") + e.what());
  }
}

AuditLog::Clock make_clock(const Options& opt) {
  if (!opt.clock_ms) return {};
  // Pinned start, one millisecond per entry, for reproducible logs.
  return [t = *opt.clock_ms]() mutable { return t++; };
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) out.push_back(item);
  return out;
}

void emit(const Options& opt, const json& j, const std::string& human) {
  if (opt.json_output) {
    std::cout << j.dump(2) << '\n';
  } else {
    std::cout << human;
  }
}

json probe_json(const ProbeResult& r) {
  json results = json::array();
  for (const ClassResult& c : r.results) {
    results.push_back({{"label", c.label},
                       {"token", c.token},
                       {"probability", c.probability},
                       {"raw_logit", c.raw_logit}});
  }
  return {{"results", results},
          {"winner", r.winner},
          {"confidence", r.confidence},
          {"degenerate", r.degenerate}};
}

json verdict_json(std::string_view action, const Verdict& v) {
  json matched = json::array();
  for (const PatternMatch& m : v.risk.matched_patterns) matched.push_back(m.name);
  json j{{"action", action},
         {"decision", decision_name(v.decision)},
         {"p_harmful", v.p_harmful},
         {"stage", stage_name(v.stage)},
         {"audit_id", v.audit_id},
         {"matched_patterns", matched}};
  if (!v.error.empty()) j["error"] = v.error;
  return j;
}

std::string format_fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// --- subcommands -----------------------------------------------------------

int cmd_probe(const Options& opt, const std::string& prompt, const std::string& labels_arg) {
  auto backend = open_backend(opt);
  const std::vector<std::string> labels = split_list(labels_arg);
  validate_labels(labels);
  for (const std::string& label : labels) {
    if (const std::size_t n = token_fertility(backend->vocab(), label); n != 1) {
      throw Error(ErrorCode::MultiTokenLabel,
                  "label '" + label + "' has fertility " + std::to_string(n));
    }
  }
  auto session = backend->new_session();
  const auto result = probe_classify(*session, prompt, labels);
  if (!result) throw Error(ErrorCode::MultiTokenLabel, "label is not a single token");
  std::string human;
  for (const ClassResult& c : result->results) {
    human += c.label + "\t" + format_fixed(c.probability, 6) + "\n";
  }
  json j = probe_json(*result);
  j["prompt"] = prompt;
  emit(opt, j, human);
  return kExitOk;
}

int cmd_calibrate(const Options& opt, const std::string& positive, const std::string& negative,
                  const std::string& out_path) {
  auto backend = open_backend(opt);
  auto session = backend->new_session();
  CalibrationProfile profile;
  if (positive.empty() != negative.empty()) {
    throw UsageError("--positive and --negative must be given together");
  }
  if (positive.empty()) {
    profile = measure_default_profile(*session);
  } else {
    profile = measure_bias(*session, token_fertility_check(backend->vocab(), positive, negative),
                           default_null_prompts());
  }
  const json j = to_json(profile);
  if (!out_path.empty()) write_text(out_path, j.dump(2) + "\n");
  emit(opt, j,
       "verbalizer " + profile.pair.positive_label + "/" + profile.pair.negative_label +
           "  bias_delta " + format_fixed(profile.bias_delta) + " over " +
           std::to_string(profile.null_prompt_count()) + " null prompts\n");
  return kExitOk;
}

int cmd_govern(const Options& opt, std::vector<std::string> actions,
               const std::string& actions_file, const std::string& audit_path) {
  if (!actions_file.empty()) {
    std::istringstream in(read_text(actions_file));
    for (std::string line; std::getline(in, line);) {
      if (!line.empty()) actions.push_back(line);
    }
  }
  if (actions.empty()) throw UsageError("no actions given");

  auto backend = open_backend(opt);
  auto session = backend->new_session();
  const CalibrationProfile profile = open_profile(opt, *session);
  AuditLog audit(AuditLog::kDefaultCapacity, make_clock(opt));
  if (!audit_path.empty() && fs::exists(audit_path)) {
    audit.resume(import_jsonl(read_text(audit_path)));
  }

  Governor governor(open_policy(opt), audit);
  json verdicts = json::array();
  std::string human;
  for (const std::string& action : actions) {
    const Verdict v = governor.govern(*session, profile, action);
    verdicts.push_back(verdict_json(action, v));
    human += std::string(decision_name(v.decision)) + "\t" + format_fixed(v.p_harmful) + "\t" +
             std::string(stage_name(v.stage)) + "\t" + action + "\n";
  }
  if (!audit_path.empty()) write_text(audit_path, export_jsonl(audit.snapshot()));
  emit(opt, json{{"verdicts", verdicts}, {"audit_head", to_hex(audit.head())}}, human);
  return kExitOk;
}

int cmd_entropy(const Options& opt, const std::string& prompt) {
  auto backend = open_backend(opt);
  auto session = backend->new_session();
  const EntropyReading r = logit_entropy(run_prompt(*session, prompt));
  emit(opt, {{"prompt", prompt}, {"nats", r.nats}, {"max_nats", r.max_nats}},
       format_fixed(r.nats, 6) + " nats (max " + format_fixed(r.max_nats, 6) + ")\n");
  return kExitOk;
}

int cmd_decode(const Options& opt, const std::string& prompt, const std::string& choices_arg) {
  auto backend = open_backend(opt);
  auto session = backend->new_session();
  const std::vector<std::string> choices = split_list(choices_arg);
  const std::string choice = decode_choice(*session, prompt, choices);
  emit(opt, {{"prompt", prompt}, {"choice", choice}}, choice + "\n");
  return kExitOk;
}

json checkpoint_json(const KvCheckpoint& c) {
  return {{"model_name", c.model_name},
          {"layer_count", c.layer_count},
          {"bytes_per_position", c.bytes_per_position},
          {"position", c.position},
          {"payload_bytes", c.payload.size()}};
}

std::string argmax_text(const Vocabulary& vocab, const LogitVector& logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return vocab.text(static_cast<TokenId>(best));
}

// checkpoint: run PROMPT, save to FILE. restore: load FILE, feed CONTINUE,
// report the next-token argmax. fork: load FILE, feed CONTINUE, save to OUT.
int cmd_kv(const Options& opt, const std::string& mode, const std::string& file,
           const std::string& prompt, const std::string& continuation, const std::string& out) {
  auto backend = open_backend(opt);
  auto session = backend->new_session();
  json j{{"mode", mode}};
  std::string human;
  if (mode == "checkpoint") {
    if (prompt.empty()) throw UsageError("kv checkpoint needs --prompt");
    run_prompt(*session, prompt);
    const KvCheckpoint c = kv_checkpoint(*session);
    write_checkpoint_file(file, c);
    j["checkpoint"] = checkpoint_json(c);
    human = "wrote " + file + " at position " + std::to_string(c.position) + "\n";
  } else if (mode == "restore" || mode == "fork") {
    const KvCheckpoint c = read_checkpoint_file(file);
    kv_restore(*session, c);
    j["checkpoint"] = checkpoint_json(c);
    LogitVector last;
    for (TokenId t : session->encode(continuation)) last = session->forward_one(t);
    j["position"] = session->kv_position();
    if (!last.empty()) j["next_token"] = argmax_text(session->vocab(), last);
    human = "restored position " + std::to_string(c.position) + ", now " +
            std::to_string(session->kv_position()) + "\n";
    if (mode == "fork") {
      if (out.empty()) throw UsageError("kv fork needs --out");
      const KvCheckpoint child = kv_fork(*session);
      write_checkpoint_file(out, child);
      j["fork"] = checkpoint_json(child);
      human += "wrote " + out + "\n";
    }
  } else {
    throw UsageError("kv mode must be checkpoint, restore or fork");
  }
  emit(opt, j, human);
  return kExitOk;
}

int cmd_eval(const Options& opt, const std::string& dataset_path, const std::string& alphas_arg,
             bool pipeline, std::size_t resamples) {
  auto backend = open_backend(opt);
  auto session = backend->new_session();
  const CalibrationProfile profile = open_profile(opt, *session);
  const std::vector<LabeledPrompt> dataset = load_dataset(dataset_path);

  std::vector<double> alphas;
  for (const std::string& a : split_list(alphas_arg)) {
    try {
      alphas.push_back(PolicyAlpha(std::stod(a)).value());
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::InvalidAlpha, "cannot parse alpha '" + a + "'");
    }
  }
  if (alphas.empty()) throw UsageError("--alphas is empty");

  EvalConfig config;
  config.policy = open_policy(opt);
  config.rule = pipeline ? PositiveRule::Pipeline : PositiveRule::PureLogit;
  config.resamples = resamples;
  config.seed = opt.seed;
  AuditLog audit(AuditLog::kDefaultCapacity, make_clock(opt));
  const auto rows = alpha_sweep(*session, profile, dataset, alphas, config, &audit);

  json table = json::array();
  std::string human = "alpha   prec    recall  f1      f1_ci\n";
  for (const AlphaRow& row : rows) {
    json r = to_json(row.report);
    r["alpha"] = row.alpha;
    table.push_back(std::move(r));
    const MetricsReport& m = row.report;
    human += format_fixed(row.alpha, 2) + "    " + format_fixed(m.precision) + "  " +
             format_fixed(m.recall) + "  " + format_fixed(m.f1) + "  [" +
             format_fixed(m.bootstrap_f1_ci.lo) + ", " + format_fixed(m.bootstrap_f1_ci.hi) +
             "]\n";
  }
  emit(opt,
       {{"dataset_size", dataset.size()},
        {"rule", pipeline ? "pipeline" : "pure-logit"},
        {"rows", table}},
       human);
  return kExitOk;
}

int cmd_audit_verify(const Options& opt, const std::string& path) {
  const VerifyResult r = verify_jsonl(read_text(path));
  json j{{"ok", r.ok}};
  std::string human = "ok\n";
  if (!r.ok) {
    j["tamper_index"] = *r.tamper_index;
    j["reason"] = r.reason;
    human = "TamperDetected(" + std::to_string(*r.tamper_index) + "): " + r.reason + "\n";
  }
  emit(opt, j, human);
  return r.ok ? kExitOk : kExitTamper;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Logit-level classification, calibration and governance tools"};
  app.require_subcommand(1);
  app.fallthrough();

  Options opt;
  app.add_option("--backend-fixture", opt.fixture_path, "Fixture backend JSON file");
  app.add_option("--toy-corpus", opt.toy_corpus_path, "Corpus for the character toy model");
  app.add_option("--toy-order", opt.toy_order, "Context length of the toy model")
      ->check(CLI::Range(1, 8));
  app.add_option("--policy", opt.policy_path, "Policy JSON file");
  app.add_option("--profile", opt.profile_path, "Calibration profile JSON file");
  app.add_option("--seed", opt.seed, "Seed for resampling");
  app.add_flag("--json", opt.json_output, "Machine-readable output");
  app.add_option("--clock-ms", opt.clock_ms,
                 "Pin audit timestamps: start value, +1 ms per entry");

  std::string prompt, labels, positive, negative, out_path, actions_file, audit_path;
  std::string choices, kv_mode, kv_file, kv_prompt, kv_continue, dataset, alphas = "0.5";
  std::string verify_path;
  std::vector<std::string> actions;
  bool pipeline = false;
  std::size_t resamples = 10000;

  auto* probe = app.add_subcommand("probe", "Classify PROMPT over single-token labels");
  probe->add_option("prompt", prompt)->required();
  probe->add_option("--labels", labels, "Comma-separated labels")->required();

  auto* calibrate = app.add_subcommand("calibrate", "Measure verbalizer bias on null prompts");
  calibrate->add_option("--positive", positive);
  calibrate->add_option("--negative", negative);
  calibrate->add_option("--out", out_path, "Write the profile JSON here");

  auto* govern = app.add_subcommand("govern", "Run the governance pipeline on actions");
  govern->add_option("actions", actions);
  govern->add_option("--actions-file", actions_file, "One action per line");
  govern->add_option("--audit", audit_path, "Audit JSONL to continue and rewrite");

  auto* entropy = app.add_subcommand("entropy", "Next-token entropy after PROMPT");
  entropy->add_option("prompt", prompt)->required();

  auto* decode = app.add_subcommand("decode", "Grammar-constrained choice after PROMPT");
  decode->add_option("prompt", prompt)->required();
  decode->add_option("--choices", choices, "Comma-separated choices")->required();

  auto* kv = app.add_subcommand("kv", "KV checkpoint file operations");
  kv->add_option("mode", kv_mode, "checkpoint | restore | fork")
      ->required()
      ->check(CLI::IsMember({"checkpoint", "restore", "fork"}));
  kv->add_option("file", kv_file, "AKVC file")->required();
  kv->add_option("--prompt", kv_prompt);
  kv->add_option("--continue", kv_continue);
  kv->add_option("--out", out_path);

  auto* eval = app.add_subcommand("eval", "Metrics over a labeled JSONL dataset");
  eval->add_option("dataset", dataset)->required();
  eval->add_option("--alphas", alphas, "Comma-separated calibration strengths");
  eval->add_flag("--pipeline", pipeline, "Positive iff the full pipeline does not Allow");
  eval->add_option("--resamples", resamples, "Bootstrap resamples")->check(CLI::PositiveNumber);

  auto* verify = app.add_subcommand("audit-verify", "Verify an exported audit chain");
  verify->add_option("file", verify_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*probe) return cmd_probe(opt, prompt, labels);
    if (*calibrate) return cmd_calibrate(opt, positive, negative, out_path);
    if (*govern) return cmd_govern(opt, actions, actions_file, audit_path);
    if (*entropy) return cmd_entropy(opt, prompt);
    if (*decode) return cmd_decode(opt, prompt, choices);
    if (*kv) return cmd_kv(opt, kv_mode, kv_file, kv_prompt, kv_continue, out_path);
    if (*eval) return cmd_eval(opt, dataset, alphas, pipeline, resamples);
    if (*verify) return cmd_audit_verify(opt, verify_path);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDomain;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDomain;
  }
  return kExitUsage;
}
