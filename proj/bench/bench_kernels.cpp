// Serial reference vs OpenMP kernels at production vocabulary sizes.

#include <random>
#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "logitgov/eval.hpp"
#include "logitgov/kernels.hpp"

namespace {

using namespace logitgov;

constexpr std::size_t kVocab = 152064;

std::vector<double> random_logits(std::size_t n) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> dist(0.0, 4.0);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

// Synthetic BPE-sized vocabulary of short lowercase pieces.
const Vocabulary& large_vocab() {
  static const Vocabulary vocab = [] {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> len(1, 8);
    std::uniform_int_distribution<int> ch('a', 'z');
    std::vector<std::string> texts;
    texts.reserve(kVocab);
    for (std::size_t i = 0; i < kVocab; ++i) {
      std::string s(len(rng), ' ');
      for (char& c : s) c = static_cast<char>(ch(rng));
      texts.push_back(s + "#" + std::to_string(i));
    }
    return Vocabulary(std::move(texts));
  }();
  return vocab;
}

const std::vector<std::string> kChoices{"safe", "sandbox", "dangerous", "deny", "allow"};

void BM_EntropySerial(benchmark::State& state) {
  const auto logits = random_logits(kVocab);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::entropy_serial(logits));
}
void BM_EntropyParallel(benchmark::State& state) {
  const auto logits = random_logits(kVocab);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::entropy_parallel(logits));
}

void BM_ChoiceMaskSerial(benchmark::State& state) {
  const Vocabulary& vocab = large_vocab();
  std::vector<std::uint8_t> mask(vocab.size());
  for (auto _ : state) {
    kernels::choice_mask_serial(vocab, "sa", kChoices, mask);
    benchmark::DoNotOptimize(mask.data());
  }
}
void BM_ChoiceMaskParallel(benchmark::State& state) {
  const Vocabulary& vocab = large_vocab();
  std::vector<std::uint8_t> mask(vocab.size());
  for (auto _ : state) {
    kernels::choice_mask_parallel(vocab, "sa", kChoices, mask);
    benchmark::DoNotOptimize(mask.data());
  }
}

std::vector<std::uint8_t> sparse_mask() {
  std::vector<std::uint8_t> mask(kVocab, 0);
  for (std::size_t i = 0; i < kVocab; i += 7) mask[i] = 1;
  return mask;
}

void BM_MaskedArgmaxSerial(benchmark::State& state) {
  const auto logits = random_logits(kVocab);
  const auto mask = sparse_mask();
  for (auto _ : state) benchmark::DoNotOptimize(kernels::masked_argmax_serial(logits, mask));
}
void BM_MaskedArgmaxParallel(benchmark::State& state) {
  const auto logits = random_logits(kVocab);
  const auto mask = sparse_mask();
  for (auto _ : state) benchmark::DoNotOptimize(kernels::masked_argmax_parallel(logits, mask));
}

void bootstrap_inputs(std::vector<std::uint8_t>& preds, std::vector<std::uint8_t>& truth) {
  std::mt19937_64 rng(3);
  preds.resize(1000);
  truth.resize(1000);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    truth[i] = i < 362;
    preds[i] = rng() % 6 == 0 ? 1 - truth[i] : truth[i];
  }
}

void BM_BootstrapSerial(benchmark::State& state) {
  std::vector<std::uint8_t> preds, truth;
  bootstrap_inputs(preds, truth);
  for (auto _ : state) {
    benchmark::DoNotOptimize(bootstrap_f1_ci_serial(preds, truth, 10000, 42));
  }
}
void BM_BootstrapParallel(benchmark::State& state) {
  std::vector<std::uint8_t> preds, truth;
  bootstrap_inputs(preds, truth);
  for (auto _ : state) {
    benchmark::DoNotOptimize(bootstrap_f1_ci_parallel(preds, truth, 10000, 42));
  }
}

}  // namespace

BENCHMARK(BM_EntropySerial)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_EntropyParallel)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ChoiceMaskSerial)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ChoiceMaskParallel)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_MaskedArgmaxSerial)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_MaskedArgmaxParallel)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_BootstrapSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BootstrapParallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
