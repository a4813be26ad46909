#pragma once

// Data-parallel kernels. Every OpenMP kernel has a *_serial twin that is the
// reference implementation used by the tests and the benchmarks; the
// unsuffixed entry points pick one by problem size.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "logitgov/backend.hpp"

namespace logitgov::kernels {

inline constexpr double kUnderflowGuard = 1e-10;

// Shifted: the guard sees exponentials taken after max-subtraction (so the
// sum is >= 1 for any finite input). Raw: the guard sees exp(l_i) directly.
enum class GuardMode { Shifted, Raw };

struct SoftmaxOutput {
  std::vector<double> probabilities;
  bool degenerate = false;  // uniform fallback fired
};

// Softmax restricted to the given target logits.
SoftmaxOutput restricted_softmax(std::span<const double> logits,
                                 GuardMode guard = GuardMode::Shifted);

// Shannon entropy (nats) of softmax(logits), clamped to [0, ln n].
double entropy_serial(std::span<const double> logits);
double entropy_parallel(std::span<const double> logits);
double entropy(std::span<const double> logits);

// mask[i] = 1 iff token i's text appended to `prefix` is still a prefix of
// some string in `remaining`. Special tokens are always masked.
void choice_mask_serial(const Vocabulary& vocab, std::string_view prefix,
                        std::span<const std::string> remaining,
                        std::span<std::uint8_t> mask);
void choice_mask_parallel(const Vocabulary& vocab, std::string_view prefix,
                          std::span<const std::string> remaining,
                          std::span<std::uint8_t> mask);
void choice_mask(const Vocabulary& vocab, std::string_view prefix,
                 std::span<const std::string> remaining,
                 std::span<std::uint8_t> mask);

// Highest unmasked logit; ties go to the lowest token id.
std::optional<TokenId> masked_argmax_serial(std::span<const double> logits,
                                            std::span<const std::uint8_t> mask);
std::optional<TokenId> masked_argmax_parallel(std::span<const double> logits,
                                              std::span<const std::uint8_t> mask);
std::optional<TokenId> masked_argmax(std::span<const double> logits,
                                     std::span<const std::uint8_t> mask);

// Below this size the parallel kernels are not worth the fork/join.
inline constexpr std::size_t kParallelThreshold = 1 << 14;

int max_threads();

}  // namespace logitgov::kernels
