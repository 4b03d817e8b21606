#include "ada/indicator_abc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ada {

SummaryStats summary_stats(std::span<const int> d_sequence) {
  if (d_sequence.empty()) throw std::invalid_argument("summary_stats: empty sequence");
  const double n = static_cast<double>(d_sequence.size());
  double mean = 0.0;
  for (int x : d_sequence) mean += x;
  mean /= n;
  double m2 = 0.0, m3 = 0.0;
  for (int x : d_sequence) {
    const double dev = x - mean;
    m2 += dev * dev;
    m3 += dev * dev * dev;
  }
  m2 /= n;
  m3 /= n;
  return SummaryStats{mean, m2, m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0};
}

SummaryStats binary_summary_stats(std::size_t ones, std::size_t n) {
  if (n == 0) throw std::invalid_argument("binary_summary_stats: empty sequence");
  const double m = static_cast<double>(ones) / static_cast<double>(n);
  const double var = m * (1.0 - m);
  return SummaryStats{m, var, var > 0.0 ? (1.0 - 2.0 * m) / std::sqrt(var) : 0.0};
}

void AbcConfig::validate() const {
  if (accepted_target == 0) throw std::invalid_argument("abc.accepted_target must be >= 1");
  if (batch_size == 0) throw std::invalid_argument("abc.batch_size must be >= 1");
  if (max_batches == 0) throw std::invalid_argument("abc.max_batches must be >= 1");
  if (std::isnan(threshold)) throw std::invalid_argument("abc.threshold must be a number");
}

namespace {

// Sufficient counters of a binary reliance sequence for every statistic.
struct Counters {
  double ones = 0;
  double ones_agree = 0;
  double ones_disagree = 0;
  double switches = 0;
};

struct LogShape {
  std::size_t n = 0;
  std::size_t n_agree = 0;
  std::size_t n_disagree = 0;
};

bool counted(const Observation& o, bool exclude_ambiguous) { return !(exclude_ambiguous && o.ambiguous); }

LogShape shape_of(std::span<const Observation> log, bool exclude_ambiguous) {
  LogShape s;
  for (const auto& o : log) {
    if (!counted(o, exclude_ambiguous)) continue;
    ++s.n;
    (o.agreement == Agreement::Agree ? s.n_agree : s.n_disagree)++;
  }
  return s;
}

std::vector<double> statistics_from_counters(const Counters& c, const LogShape& shape, bool extended) {
  const auto base = binary_summary_stats(static_cast<std::size_t>(c.ones), shape.n);
  std::vector<double> v{base.mean, base.variance, base.skew};
  if (extended) {
    v.push_back(shape.n_agree ? c.ones_agree / static_cast<double>(shape.n_agree) : 0.0);
    v.push_back(shape.n_disagree ? c.ones_disagree / static_cast<double>(shape.n_disagree) : 0.0);
    v.push_back(shape.n > 1 ? c.switches / static_cast<double>(shape.n - 1) : 0.0);
  }
  return v;
}

double euclidean(const std::vector<double>& x, const std::vector<double>& y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += (x[i] - y[i]) * (x[i] - y[i]);
  return std::sqrt(acc);
}

struct Batch {
  std::vector<double> b1, b2, s, theta;
  std::vector<double> belief, preference;
  std::vector<double> ones, ones_agree, ones_disagree, switches, previous;

  explicit Batch(std::size_t n)
      : b1(n), b2(n), s(n), theta(n), belief(n), preference(n), ones(n), ones_agree(n), ones_disagree(n),
        switches(n), previous(n) {}
};

// Structure-of-arrays replay of the log for every candidate of a batch.
// Mirrors simulate_trace: emit the current decision, then step.
template <bool Extended>
void simulate_block(Batch& batch, std::size_t offset, std::size_t count, std::span<const Observation> log,
                    const OperatorParams& fixed, bool exclude_ambiguous) {
  double* __restrict b1 = batch.b1.data() + offset;
  double* __restrict b2 = batch.b2.data() + offset;
  double* __restrict s = batch.s.data() + offset;
  double* __restrict theta = batch.theta.data() + offset;
  double* __restrict belief = batch.belief.data() + offset;
  double* __restrict pref = batch.preference.data() + offset;
  double* __restrict ones = batch.ones.data() + offset;
  double* __restrict ones_agree = batch.ones_agree.data() + offset;
  double* __restrict ones_disagree = batch.ones_disagree.data() + offset;
  double* __restrict switches = batch.switches.data() + offset;
  double* __restrict previous = batch.previous.data() + offset;
  const bool hidden = fixed.info_mode == InfoMode::CapabilityHidden;

  for (std::size_t i = 0; i < count; ++i) {
    belief[i] = fixed.belief_initial;
    pref[i] = fixed.preference_initial;
    ones[i] = ones_agree[i] = ones_disagree[i] = switches[i] = 0.0;
    previous[i] = 0.0;
  }
  bool first = true;
  for (const Observation& o : log) {
    const double capability = o.capability;
    const double agreement = to_double(o.agreement);
    const bool agree = o.agreement == Agreement::Agree;
    const double weight = counted(o, exclude_ambiguous) ? 1.0 : 0.0;
    if constexpr (Extended) {
      if (weight > 0.0) {
        for (std::size_t i = 0; i < count; ++i) {
          const double d = pref[i] >= theta[i] ? 1.0 : 0.0;
          ones[i] += d;
          if (agree) ones_agree[i] += d;
          else ones_disagree[i] += d;
          if (!first) switches[i] += d != previous[i] ? 1.0 : 0.0;
          previous[i] = d;
        }
        first = false;
      }
    } else {
      if (!hidden) {
        // Fused decide-and-step; the hot loop of every refit.
        for (std::size_t i = 0; i < count; ++i) {
          ones[i] += pref[i] >= theta[i] ? weight : 0.0;
          belief[i] = kernel::belief_visible(belief[i], b1[i], b2[i], capability, agreement);
          pref[i] = kernel::preference(pref[i], s[i], belief[i], 0.0);
        }
        continue;
      }
      for (std::size_t i = 0; i < count; ++i) ones[i] += pref[i] >= theta[i] ? weight : 0.0;
    }
    if (hidden) {
      for (std::size_t i = 0; i < count; ++i) {
        belief[i] = kernel::belief_hidden(belief[i], fixed.b0, fixed.belief_initial);
        pref[i] = kernel::preference(pref[i], s[i], belief[i], 0.0);
      }
    } else {
      for (std::size_t i = 0; i < count; ++i) {
        belief[i] = kernel::belief_visible(belief[i], b1[i], b2[i], capability, agreement);
        pref[i] = kernel::preference(pref[i], s[i], belief[i], 0.0);
      }
    }
  }
}

// Candidates are processed in cache-sized blocks, each replaying the whole log.
template <bool Extended>
void simulate_batch_deterministic(Batch& batch, std::size_t count, std::span<const Observation> log,
                                  const OperatorParams& fixed, bool exclude_ambiguous) {
  constexpr std::size_t kBlock = 512;
  for (std::size_t offset = 0; offset < count; offset += kBlock)
    simulate_block<Extended>(batch, offset, std::min(kBlock, count - offset), log, fixed, exclude_ambiguous);
}

Counters counters_of(std::span<const int> d, std::span<const Observation> log, bool exclude_ambiguous) {
  Counters c;
  bool first = true;
  int previous = 0;
  for (std::size_t t = 0; t < d.size(); ++t) {
    if (!counted(log[t], exclude_ambiguous)) continue;
    c.ones += d[t];
    if (log[t].agreement == Agreement::Agree) c.ones_agree += d[t];
    else c.ones_disagree += d[t];
    if (!first && d[t] != previous) c.switches += 1;
    previous = d[t];
    first = false;
  }
  return c;
}

OperatorParams candidate_params(const OperatorParams& fixed, double b1, double b2, double s, double theta) {
  OperatorParams p = fixed;
  p.b1 = b1;
  p.b2 = b2;
  p.s = s;
  p.theta = theta;
  return p;
}

bool closer(const PosteriorSample& x, const PosteriorSample& y) {
  return x.distance != y.distance ? x.distance < y.distance : x.draw_index < y.draw_index;
}

}  // namespace

std::vector<int> simulate_trace(const OperatorParams& candidate, std::span<const Observation> log, Rng* noise_rng) {
  std::vector<int> d;
  d.reserve(log.size());
  RelianceState state = RelianceState::initial(candidate);
  for (const Observation& o : log) {
    d.push_back(state.reliance);
    const double belief = step_belief(state, candidate, o.capability, o.agreement);
    state = noise_rng ? step_preference(state, candidate, belief, *noise_rng)
                      : step_preference(state, candidate, belief, 0.0);
  }
  return d;
}

std::vector<double> abc_statistics(std::span<const int> d_sequence, std::span<const Observation> log, bool extended,
                                   bool exclude_ambiguous) {
  if (d_sequence.size() != log.size()) throw std::invalid_argument("abc_statistics: sequence/log length mismatch");
  const LogShape shape = shape_of(log, exclude_ambiguous);
  if (shape.n == 0) throw std::invalid_argument("abc_statistics: no usable observations");
  return statistics_from_counters(counters_of(d_sequence, log, exclude_ambiguous), shape, extended);
}

AbcResult abc_rejection(std::span<const Observation> log, const PriorSpec& priors, const OperatorParams& fixed,
                        const AbcConfig& config, Rng& rng) {
  if (log.empty()) throw std::invalid_argument("abc_rejection: empty observation log");
  config.validate();
  priors.validate();

  std::vector<int> observed_d;
  observed_d.reserve(log.size());
  for (const auto& o : log) observed_d.push_back(o.d);
  const LogShape shape = shape_of(log, config.exclude_ambiguous);
  const auto observed = abc_statistics(observed_d, log, config.extended_stats, config.exclude_ambiguous);

  AbcResult result;
  std::vector<PosteriorSample> accepted;
  std::vector<PosteriorSample> closest;
  Batch batch(config.batch_size);
  std::vector<PosteriorSample> drawn(config.batch_size);

  for (std::size_t b = 0; b < config.max_batches; ++b) {
    const std::size_t n = config.batch_size;
    for (std::size_t i = 0; i < n; ++i) {
      batch.b1[i] = priors.b1.sample(rng);
      batch.b2[i] = priors.b2.sample(rng);
      batch.s[i] = priors.s.sample(rng);
      batch.theta[i] = priors.theta.sample(rng);
    }

    if (config.simulate_noise) {
      Rng noise(rng());
      for (std::size_t i = 0; i < n; ++i) {
        const auto cand = candidate_params(fixed, batch.b1[i], batch.b2[i], batch.s[i], batch.theta[i]);
        const auto d = simulate_trace(cand, log, &noise);
        const auto c = counters_of(d, log, config.exclude_ambiguous);
        batch.ones[i] = c.ones;
        batch.ones_agree[i] = c.ones_agree;
        batch.ones_disagree[i] = c.ones_disagree;
        batch.switches[i] = c.switches;
      }
    } else if (config.extended_stats) {
      simulate_batch_deterministic<true>(batch, n, log, fixed, config.exclude_ambiguous);
    } else {
      simulate_batch_deterministic<false>(batch, n, log, fixed, config.exclude_ambiguous);
    }

    for (std::size_t i = 0; i < n; ++i) {
      const Counters c{batch.ones[i], batch.ones_agree[i], batch.ones_disagree[i], batch.switches[i]};
      const double dist = euclidean(statistics_from_counters(c, shape, config.extended_stats), observed);
      drawn[i] = PosteriorSample{batch.b1[i], batch.b2[i], batch.s[i], batch.theta[i], dist, result.drawn + i};
      if (dist < config.threshold) accepted.push_back(drawn[i]);
    }
    result.drawn += n;
    result.batches = b + 1;

    closest.insert(closest.end(), drawn.begin(), drawn.begin() + static_cast<std::ptrdiff_t>(n));
    if (closest.size() > config.accepted_target) {
      std::nth_element(closest.begin(), closest.begin() + static_cast<std::ptrdiff_t>(config.accepted_target),
                       closest.end(), closer);
      closest.resize(config.accepted_target);
    }

    if (accepted.size() >= config.accepted_target) break;
  }

  result.accepted = accepted.size();
  if (accepted.size() >= config.accepted_target) {
    accepted.resize(config.accepted_target);
    result.samples = std::move(accepted);
  } else {
    result.fallback = true;
    result.samples = std::move(closest);
  }
  std::sort(result.samples.begin(), result.samples.end(), closer);
  return result;
}

OperatorParams point_estimate(std::span<const PosteriorSample> posterior, const OperatorParams& base) {
  if (posterior.empty()) throw std::invalid_argument("point_estimate: empty posterior");
  double b1 = 0, b2 = 0, s = 0, theta = 0;
  for (const auto& p : posterior) {
    b1 += p.b1;
    b2 += p.b2;
    s += p.s;
    theta += p.theta;
  }
  const double n = static_cast<double>(posterior.size());
  OperatorParams out = base;
  out.b1 = std::clamp(b1 / n, 0.0, 1.0);
  out.b2 = std::clamp(b2 / n, 0.0, 1.0);
  out.s = std::clamp(s / n, 0.0, 1.0);
  out.theta = std::max(theta / n, 0.0);
  return out;
}

IndicatorState init_indicator(const OperatorParams* truth, IndicatorInit mode, double perturb_sigma,
                              const PriorSpec& priors, const OperatorParams& base, Rng& rng) {
  OperatorParams params;
  if (mode == IndicatorInit::Perturb) {
    if (!truth) throw std::invalid_argument("init_indicator: perturb mode needs the true parameters");
    if (!(perturb_sigma >= 0.0)) throw std::invalid_argument("init_indicator: perturb sigma must be >= 0");
    std::normal_distribution<double> standard(0.0, 1.0);
    const auto jitter = [&](double v) { return v + perturb_sigma * standard(rng); };
    params = *truth;
    params.b0 = std::clamp(jitter(truth->b0), 0.0, 1.0);
    params.b1 = std::clamp(jitter(truth->b1), 0.0, 1.0);
    params.b2 = std::clamp(jitter(truth->b2), 0.0, 1.0);
    params.s = std::clamp(jitter(truth->s), 0.0, 1.0);
    params.theta = std::max(jitter(truth->theta), 0.0);
  } else {
    params = sample_operator_params(priors, rng, truth ? *truth : base);
  }
  return IndicatorState{params, RelianceState::initial(params)};
}

void step_indicator(IndicatorState& indicator, double capability, Agreement agreement) {
  const double belief = step_belief(indicator.state, indicator.params, capability, agreement);
  indicator.state = step_preference(indicator.state, indicator.params, belief, 0.0);
}

}  // namespace ada
