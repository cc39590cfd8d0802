#include "sudoku/probe.h"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "sudoku/error.h"

namespace sudoku {
namespace {

template <typename T>
double Median(std::vector<T> v) {
  if (v.empty()) return 0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  const double upper = static_cast<double>(v[mid]);
  if (v.size() % 2 == 1) return upper;
  const double lower =
      static_cast<double>(*std::max_element(v.begin(), v.begin() + mid));
  return (lower + upper) / 2;
}

double MadSigma(const std::vector<double>& values, double center) {
  std::vector<double> dev;
  dev.reserve(values.size());
  for (double v : values) dev.push_back(std::fabs(v - center));
  return 1.4826 * Median(std::move(dev));
}

bool SameRowOf(const DramAddressMapping& m, PhysAddr x, PhysAddr y) {
  return SameBank(m, x, y) && SameComponent(m, x, y, ComponentClass::kRow);
}

}  // namespace

SimulatorOracle::SimulatorOracle(DramAddressMapping truth, SimConfig config,
                                 std::uint64_t seed)
    : sim_(std::move(truth), std::move(config)),
      space_(sim_.mapping().BitUniverse()),
      rng_(seed) {}

void SimulatorOracle::Reset() {
  sim_.CloseAllBanks();
  std::uniform_int_distribution<Cycles> idle(0, 2 * sim_.config().timing.tREFI);
  sim_.AdvanceTime(idle(rng_));
}

LatencySeries SimulatorOracle::TimePair(PhysAddr a, PhysAddr b,
                                        std::size_t rounds, Cycles gap) {
  Reset();
  sim_.Access(a, gap);
  sim_.Access(b, gap);
  LatencySeries series;
  series.samples.reserve(2 * rounds);
  for (std::size_t i = 0; i < rounds; ++i) {
    for (PhysAddr x : {a, b}) {
      const Cycles latency = sim_.Access(x, gap);
      series.samples.push_back({sim_.last_issue(), latency});
    }
  }
  accesses_ += 2 * (rounds + 1);
  return series;
}

LatencySeries SimulatorOracle::TimeStreams(std::span<const PhysAddr> a,
                                           std::span<const PhysAddr> b,
                                           std::size_t rounds) {
  if (a.empty() || b.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "empty stream");
  }
  Reset();
  const std::size_t warm = std::max(a.size(), b.size());
  for (std::size_t i = 0; i < warm; ++i) {
    sim_.Access(a[i % a.size()], 0);
    sim_.Access(b[i % b.size()], 0);
  }
  LatencySeries series;
  series.samples.reserve(2 * rounds);
  for (std::size_t i = 0; i < rounds; ++i) {
    for (PhysAddr x : {a[i % a.size()], b[i % b.size()]}) {
      const Cycles latency = sim_.Access(x, 0);
      series.samples.push_back({sim_.last_issue(), latency});
    }
  }
  accesses_ += 2 * (rounds + warm);
  return series;
}

PhysAddr RandomAddress(BitMask space, std::mt19937_64& rng) {
  return rng() & space.bits;
}

ThresholdFit FitThresholdValues(std::span<const double> values,
                                double min_separation) {
  if (values.empty()) {
    throw Error(ErrorKind::kDegenerateDistribution, "no calibration samples");
  }
  double lo = *std::min_element(values.begin(), values.end());
  double hi = *std::max_element(values.begin(), values.end());
  for (int iter = 0; iter < 100 && lo < hi; ++iter) {
    const double mid = (lo + hi) / 2;
    double sum_lo = 0, sum_hi = 0;
    std::size_t n_lo = 0, n_hi = 0;
    for (double v : values) {
      if (v <= mid) {
        sum_lo += v;
        ++n_lo;
      } else {
        sum_hi += v;
        ++n_hi;
      }
    }
    const double new_lo = sum_lo / static_cast<double>(n_lo);
    const double new_hi = sum_hi / static_cast<double>(n_hi);
    if (new_lo == lo && new_hi == hi) break;
    lo = new_lo;
    hi = new_hi;
  }
  ThresholdFit fit;
  fit.low_center = lo;
  fit.high_center = hi;
  fit.threshold = (lo + hi) / 2;
  std::vector<double> residuals;
  residuals.reserve(values.size());
  for (double v : values) {
    residuals.push_back(v <= fit.threshold ? v - lo : v - hi);
  }
  fit.jitter = MadSigma(residuals, 0.0);
  if (hi - lo < std::max(4 * fit.jitter, min_separation)) {
    throw Error(ErrorKind::kDegenerateDistribution,
                "latency clusters at " + std::to_string(lo) + " and " +
                    std::to_string(hi) + " are not separable");
  }
  return fit;
}

ThresholdFit FitThreshold(AccessOracle& oracle,
                          std::span<const std::pair<PhysAddr, PhysAddr>> pairs,
                          const ProbeOptions& options) {
  std::vector<double> medians;
  medians.reserve(pairs.size());
  for (const auto& [a, b] : pairs) {
    medians.push_back(Median(
        oracle.TimePair(a, b, options.calibration_rounds, options.pair_gap)
            .Latencies()));
  }
  return FitThresholdValues(medians, options.min_separation);
}

ConflictVerdict MeasureConflict(AccessOracle& oracle, PhysAddr a, PhysAddr b,
                                double threshold, const ProbeOptions& options) {
  const LatencySeries series =
      oracle.TimePair(a, b, options.conflict_rounds, options.pair_gap);
  std::size_t above = 0;
  for (const auto& s : series.samples) {
    if (static_cast<double>(s.latency) > threshold) ++above;
  }
  const std::size_t n = series.size();
  ConflictVerdict v;
  v.verdict = 2 * above > n ? Verdict::kConflict : Verdict::kHit;
  v.confidence =
      n == 0 ? 0.0
             : static_cast<double>(std::max(above, n - above)) /
                   static_cast<double>(n);
  if (v.confidence < options.min_confidence) {
    throw Error(ErrorKind::kLowConfidence,
                "pair " + FormatMask(BitMask(a)) + "/" + FormatMask(BitMask(b)) +
                    " voted " + std::to_string(v.confidence));
  }
  return v;
}

std::vector<Cycles> DetectSpikes(const LatencySeries& series, double k_sigma,
                                 Cycles min_excess, Cycles merge_window) {
  if (series.size() < 100) {
    throw Error(ErrorKind::kInvalidArgument,
                "spike detection needs at least 100 samples");
  }
  std::vector<double> lat;
  lat.reserve(series.size());
  for (const auto& s : series.samples) lat.push_back(static_cast<double>(s.latency));
  const double median = Median(lat);
  const double sigma = MadSigma(lat, median);
  const double threshold =
      median + std::max(k_sigma * sigma, static_cast<double>(min_excess));
  std::vector<Cycles> events;
  bool have_last = false;
  Cycles last_spike = 0;
  for (const auto& s : series.samples) {
    if (static_cast<double>(s.latency) <= threshold) continue;
    if (!have_last || s.timestamp - last_spike >= merge_window) {
      events.push_back(s.timestamp);
    }
    last_spike = s.timestamp;
    have_last = true;
  }
  return events;
}

RefreshVerdict ClassifyRefreshSeries(const LatencySeries& series,
                                     double reference,
                                     const ProbeOptions& options) {
  const std::vector<Cycles> events = DetectSpikes(
      series, options.k_sigma, options.min_spike_excess, options.merge_window);
  if (events.size() < 2) {
    throw Error(ErrorKind::kNoSpikesDetected,
                std::to_string(events.size()) + " refresh events in " +
                    std::to_string(series.size()) + " samples");
  }
  RefreshVerdict v;
  v.spike_count = events.size();
  v.interval_estimate = static_cast<double>(events.back() - events.front()) /
                        static_cast<double>(events.size() - 1);
  v.reference = reference;
  v.classification = v.interval_estimate < options.reduced_ratio * reference
                         ? RefreshClass::kReduced
                         : RefreshClass::kNormal;
  return v;
}

RefreshVerdict ClassifyRefreshInterval(AccessOracle& oracle, PhysAddr a,
                                       PhysAddr b,
                                       std::optional<double> reference,
                                       const ProbeOptions& options) {
  if (!reference) {
    const LatencySeries self =
        oracle.TimePair(a, a, options.refresh_rounds, options.pair_gap);
    reference = ClassifyRefreshSeries(self, 1.0, options).interval_estimate;
  }
  return ClassifyRefreshSeries(
      oracle.TimePair(a, b, options.refresh_rounds, options.pair_gap),
      *reference, options);
}

StreamDistribution HistogramOf(const LatencySeries& series,
                               const ProbeOptions& options) {
  std::vector<Cycles> events;
  if (series.size() >= 100) {
    events = DetectSpikes(series, options.k_sigma, options.min_spike_excess,
                          options.merge_window);
  }
  std::vector<Cycles> kept;
  kept.reserve(series.size());
  std::size_t next_event = 0;
  for (const auto& s : series.samples) {
    while (next_event < events.size() &&
           events[next_event] + options.merge_window < s.timestamp) {
      ++next_event;
    }
    if (next_event < events.size() &&
        std::llabs(events[next_event] - s.timestamp) <= options.merge_window) {
      continue;
    }
    kept.push_back(s.latency);
  }
  StreamDistribution dist;
  dist.samples_used = kept.size();
  if (kept.empty()) return dist;
  const auto [min_it, max_it] = std::minmax_element(kept.begin(), kept.end());
  const Cycles lo = *min_it;
  std::vector<std::size_t> counts(static_cast<std::size_t>(*max_it - lo + 1), 0);
  for (Cycles l : kept) ++counts[static_cast<std::size_t>(l - lo)];
  std::size_t best = 0;
  std::size_t best_score = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const std::size_t score = counts[i] + (i > 0 ? counts[i - 1] : 0) +
                              (i + 1 < counts.size() ? counts[i + 1] : 0);
    if (score > best_score) {
      best_score = score;
      best = i;
    }
    if (counts[i] != 0) {
      dist.histogram.emplace_back(lo + static_cast<Cycles>(i), counts[i]);
    }
  }
  // The mode of a 1-cycle histogram wobbles by a bin under jitter; the mean
  // of the bins around it does not.
  const std::size_t from = best >= 3 ? best - 3 : 0;
  const std::size_t to = std::min(counts.size(), best + 4);
  double weight = 0, sum = 0;
  for (std::size_t i = from; i < to; ++i) {
    weight += static_cast<double>(counts[i]);
    sum += static_cast<double>(counts[i]) * static_cast<double>(i);
  }
  dist.peak = lo + static_cast<Cycles>(std::lround(sum / weight));
  return dist;
}

StreamDistribution MeasureStreamDistribution(AccessOracle& oracle,
                                             std::span<const PhysAddr> a,
                                             std::span<const PhysAddr> b,
                                             const DramAddressMapping* working,
                                             const ProbeOptions& options) {
  if (a.empty() || b.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "empty stream");
  }
  if (working != nullptr) {
    for (auto stream : {a, b}) {
      for (PhysAddr x : stream) {
        if (!SameRowOf(*working, stream.front(), x)) {
          throw Error(ErrorKind::kStreamsNotRowHit,
                      FormatMask(BitMask(x)) + " leaves the stream's row");
        }
      }
    }
    if (SameBank(*working, a.front(), b.front()) &&
        !SameComponent(*working, a.front(), b.front(), ComponentClass::kRow)) {
      throw Error(ErrorKind::kStreamsNotRowHit,
                  "streams share a bank but not a row");
    }
  }
  return HistogramOf(oracle.TimeStreams(a, b, options.stream_rounds), options);
}

void WriteHistogramCsv(const StreamDistribution& dist, std::ostream& out) {
  out << "latency_cycles,count\n";
  for (const auto& [latency, count] : dist.histogram) {
    out << latency << ',' << count << '\n';
  }
}

}  // namespace sudoku
