#pragma once

// The aid's copy of the operator reliance model and its ABC rejection refit.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "ada/reliance.hpp"

namespace ada {

struct IndicatorState {
  OperatorParams params;
  RelianceState state;
};

struct Observation {
  int d = 0;
  Agreement agreement = Agreement::Agree;
  double capability = 0.0;
  // Reliance was not observable; still replayed, optionally left out of the statistics.
  bool ambiguous = false;
};

// Append-only, chronological.
class ObservationLog {
 public:
  void append(const Observation& o) { entries_.push_back(o); }
  std::span<const Observation> entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  void clear() { entries_.clear(); }

 private:
  std::vector<Observation> entries_;
};

// Population moments: variance m2 = sum (x-m)^2 / N, skew = m3 / m2^{3/2}
// (0 when m2 = 0).
struct SummaryStats {
  double mean = 0.0;
  double variance = 0.0;
  double skew = 0.0;
};

SummaryStats summary_stats(std::span<const int> d_sequence);
// Same moments for a binary sequence with `ones` ones out of n.
SummaryStats binary_summary_stats(std::size_t ones, std::size_t n);

struct AbcConfig {
  std::size_t accepted_target = 10'000;
  std::size_t batch_size = 100'000;
  double threshold = 0.5;
  std::size_t max_batches = 50;
  // Simulate candidates with the indicator's noise instead of sigma = 0.
  bool simulate_noise = false;
  // Adds agreement-conditioned means of d and the switch rate to the statistics.
  bool extended_stats = false;
  // Drop observations flagged ambiguous (live sessions) from the observed data.
  bool exclude_ambiguous = true;

  void validate() const;
};

struct PosteriorSample {
  double b1 = 0.0;
  double b2 = 0.0;
  double s = 0.0;
  double theta = 0.0;
  double distance = 0.0;
  std::uint64_t draw_index = 0;
};

struct AbcResult {
  // Sorted by (distance, draw_index).
  std::vector<PosteriorSample> samples;
  std::uint64_t drawn = 0;
  std::uint64_t accepted = 0;
  std::size_t batches = 0;
  bool fallback = false;

  double acceptance_rate() const { return drawn == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(drawn); }
};

// Replays the logged (capability, agreement) inputs through the reliance
// dynamics from a fresh state; noise is drawn from noise_rng when given,
// otherwise zero.
std::vector<int> simulate_trace(const OperatorParams& candidate, std::span<const Observation> log,
                                Rng* noise_rng = nullptr);

// Statistic vector used as the ABC distance space (3 entries, or 6 with
// extended statistics).
std::vector<double> abc_statistics(std::span<const int> d_sequence, std::span<const Observation> log,
                                   bool extended, bool exclude_ambiguous = true);

// Candidates draw b1, b2, s, theta from priors; every other parameter comes
// from `fixed`. Accepts distance < threshold, stops once accepted_target is
// reached at a batch boundary (keeping the first accepted_target in draw
// order) or after max_batches, when the accepted_target closest candidates
// seen are returned with fallback set.
AbcResult abc_rejection(std::span<const Observation> log, const PriorSpec& priors, const OperatorParams& fixed,
                        const AbcConfig& config, Rng& rng);

// Component-wise posterior mean clamped to legal ranges; other fields from base.
OperatorParams point_estimate(std::span<const PosteriorSample> posterior, const OperatorParams& base);

enum class IndicatorInit : std::uint8_t { Perturb, PriorDraw };

// Perturb: each of b0, b1, b2, s, theta gets independent Normal(0, sigma^2)
// noise, clamped. PriorDraw: fresh draw from priors (truth may be null).
IndicatorState init_indicator(const OperatorParams* truth, IndicatorInit mode, double perturb_sigma,
                              const PriorSpec& priors, const OperatorParams& base, Rng& rng);

// Steps the indicator with the same kernels as the operator, without noise.
void step_indicator(IndicatorState& indicator, double capability, Agreement agreement);

}  // namespace ada
