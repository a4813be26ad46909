#include "logitgov/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace logitgov::kernels {

namespace {

constexpr std::size_t kKahanThreshold = 10000;

struct Kahan {
  long double sum = 0.0L;
  long double carry = 0.0L;

  void add(long double x) {
    const long double y = x - carry;
    const long double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
};

double clamp_entropy(long double h, std::size_t n) {
  const double max_nats = std::log(static_cast<double>(n));
  return std::clamp(static_cast<double>(h), 0.0, max_nats);
}

bool token_allowed(const std::string& text, std::string_view prefix,
                   std::span<const std::string> remaining) {
  for (const std::string& choice : remaining) {
    if (choice.size() < prefix.size() + text.size()) continue;
    if (choice.compare(prefix.size(), text.size(), text) == 0 &&
        choice.compare(0, prefix.size(), prefix) == 0) {
      return true;
    }
  }
  return false;
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

SoftmaxOutput restricted_softmax(std::span<const double> logits, GuardMode guard) {
  SoftmaxOutput out;
  const std::size_t n = logits.size();
  out.probabilities.assign(n, 0.0);
  if (n == 0) return out;

  const double max_logit = *std::max_element(logits.begin(), logits.end());
  std::vector<double> e(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    e[i] = std::exp(logits[i] - max_logit);
    sum += e[i];
  }

  double guarded = sum;
  if (guard == GuardMode::Raw) {
    guarded = 0.0;
    for (double l : logits) guarded += std::exp(l);
  }
  // Negated comparison so a NaN sum also takes the fallback.
  if (!(guarded > kUnderflowGuard)) {
    std::fill(out.probabilities.begin(), out.probabilities.end(),
              1.0 / static_cast<double>(n));
    out.degenerate = true;
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) out.probabilities[i] = e[i] / sum;
  return out;
}

double entropy_serial(std::span<const double> logits) {
  const std::size_t n = logits.size();
  if (n <= 1) return 0.0;
  const double m = *std::max_element(logits.begin(), logits.end());
  const bool kahan = n > kKahanThreshold;

  Kahan z;
  for (double l : logits) {
    // Exponentials in double, accumulation in long double.
    const long double e = std::exp(l - m);
    if (kahan) z.add(e); else z.sum += e;
  }
  const long double log_z = std::log(z.sum);

  Kahan h;
  for (double l : logits) {
    const double shifted = l - m;
    const long double p = std::exp(shifted) / z.sum;
    if (p < kUnderflowGuard) continue;
    const long double term = -p * (shifted - log_z);
    if (kahan) h.add(term); else h.sum += term;
  }
  return clamp_entropy(h.sum, n);
}

double entropy_parallel(std::span<const double> logits) {
  const std::size_t n = logits.size();
  if (n <= 1) return 0.0;
  const double* data = logits.data();
  const std::ptrdiff_t count = static_cast<std::ptrdiff_t>(n);

  double m = -std::numeric_limits<double>::infinity();
#pragma omp parallel for reduction(max : m) schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) m = std::max(m, data[i]);

  // Per-thread Kahan partials combined in thread order so the result only
  // depends on the thread count.
  const int threads = max_threads();
  std::vector<Kahan> z_parts(threads);
#pragma omp parallel num_threads(threads)
  {
#ifdef _OPENMP
    Kahan& part = z_parts[omp_get_thread_num()];
#else
    Kahan& part = z_parts[0];
#endif
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      part.add(std::exp(data[i] - m));
    }
  }
  Kahan z;
  for (const Kahan& part : z_parts) z.add(part.sum - part.carry);
  const long double z_sum = z.sum;
  const long double log_z = std::log(z_sum);

  std::vector<Kahan> h_parts(threads);
#pragma omp parallel num_threads(threads)
  {
#ifdef _OPENMP
    Kahan& part = h_parts[omp_get_thread_num()];
#else
    Kahan& part = h_parts[0];
#endif
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      const double shifted = data[i] - m;
      const long double p = std::exp(shifted) / z_sum;
      if (p >= kUnderflowGuard) part.add(-p * (shifted - log_z));
    }
  }
  Kahan h;
  for (const Kahan& part : h_parts) h.add(part.sum - part.carry);
  return clamp_entropy(h.sum, n);
}

double entropy(std::span<const double> logits) {
  return logits.size() >= kParallelThreshold && max_threads() > 1
             ? entropy_parallel(logits)
             : entropy_serial(logits);
}

void choice_mask_serial(const Vocabulary& vocab, std::string_view prefix,
                        std::span<const std::string> remaining,
                        std::span<std::uint8_t> mask) {
  const auto texts = vocab.texts();
  for (std::size_t i = 0; i < texts.size(); ++i) {
    mask[i] = !vocab.is_special(static_cast<TokenId>(i)) &&
              token_allowed(texts[i], prefix, remaining);
  }
}

void choice_mask_parallel(const Vocabulary& vocab, std::string_view prefix,
                          std::span<const std::string> remaining,
                          std::span<std::uint8_t> mask) {
  const auto texts = vocab.texts();
  const std::ptrdiff_t count = static_cast<std::ptrdiff_t>(texts.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    mask[i] = !vocab.is_special(static_cast<TokenId>(i)) &&
              token_allowed(texts[i], prefix, remaining);
  }
}

void choice_mask(const Vocabulary& vocab, std::string_view prefix,
                 std::span<const std::string> remaining,
                 std::span<std::uint8_t> mask) {
  if (vocab.size() >= kParallelThreshold && max_threads() > 1) {
    choice_mask_parallel(vocab, prefix, remaining, mask);
  } else {
    choice_mask_serial(vocab, prefix, remaining, mask);
  }
}

std::optional<TokenId> masked_argmax_serial(std::span<const double> logits,
                                            std::span<const std::uint8_t> mask) {
  std::optional<TokenId> best;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (mask[i] && (!best || logits[i] > logits[*best])) {
      best = static_cast<TokenId>(i);
    }
  }
  return best;
}

std::optional<TokenId> masked_argmax_parallel(std::span<const double> logits,
                                              std::span<const std::uint8_t> mask) {
  const int threads = max_threads();
  const std::ptrdiff_t count = static_cast<std::ptrdiff_t>(logits.size());
  std::vector<std::ptrdiff_t> best(threads, -1);
#pragma omp parallel num_threads(threads)
  {
#ifdef _OPENMP
    std::ptrdiff_t& local = best[omp_get_thread_num()];
#else
    std::ptrdiff_t& local = best[0];
#endif
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      if (mask[i] && (local < 0 || logits[i] > logits[local])) local = i;
    }
  }
  std::optional<TokenId> result;
  for (std::ptrdiff_t i : best) {
    if (i < 0) continue;
    if (!result || logits[i] > logits[*result] ||
        (logits[i] == logits[*result] && static_cast<TokenId>(i) < *result)) {
      result = static_cast<TokenId>(i);
    }
  }
  return result;
}

std::optional<TokenId> masked_argmax(std::span<const double> logits,
                                     std::span<const std::uint8_t> mask) {
  return logits.size() >= kParallelThreshold && max_threads() > 1
             ? masked_argmax_parallel(logits, mask)
             : masked_argmax_serial(logits, mask);
}

}  // namespace logitgov::kernels
