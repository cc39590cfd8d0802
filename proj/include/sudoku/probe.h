#ifndef SUDOKU_PROBE_H_
#define SUDOKU_PROBE_H_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "sudoku/gf2.h"
#include "sudoku/mapping.h"
#include "sudoku/simulator.h"

namespace sudoku {

inline constexpr Cycles kDefaultPairGap = 100;

// Source of timing measurements. Every call is an independent measurement:
// the backend starts from a cold, randomly phased state.
class AccessOracle {
 public:
  virtual ~AccessOracle() = default;

  // Alternates a, b for `rounds` rounds after one unrecorded warm-up round.
  // Returns 2 * rounds samples.
  virtual LatencySeries TimePair(PhysAddr a, PhysAddr b, std::size_t rounds,
                                 Cycles gap = kDefaultPairGap) = 0;
  // Back-to-back accesses interleaving the two streams element-wise,
  // A[0] B[0] A[1] B[1] ..., wrapping around each stream. One unrecorded
  // warm-up pass; returns 2 * rounds samples.
  virtual LatencySeries TimeStreams(std::span<const PhysAddr> a,
                                    std::span<const PhysAddr> b,
                                    std::size_t rounds) = 0;
  // Address bits that reach populated memory.
  virtual BitMask AddressSpace() const = 0;
};

// Oracle backed by the simulator. Before each call it precharges all banks
// and idles for a random interval, so refresh phase differs per call.
class SimulatorOracle : public AccessOracle {
 public:
  SimulatorOracle(DramAddressMapping truth, SimConfig config,
                  std::uint64_t seed);

  LatencySeries TimePair(PhysAddr a, PhysAddr b, std::size_t rounds,
                         Cycles gap = kDefaultPairGap) override;
  LatencySeries TimeStreams(std::span<const PhysAddr> a,
                            std::span<const PhysAddr> b,
                            std::size_t rounds) override;
  BitMask AddressSpace() const override { return space_; }

  const Simulator& simulator() const { return sim_; }
  std::uint64_t accesses() const { return accesses_; }

 private:
  void Reset();

  Simulator sim_;
  BitMask space_;
  std::mt19937_64 rng_;
  std::uint64_t accesses_ = 0;
};

PhysAddr RandomAddress(BitMask space, std::mt19937_64& rng);

struct ProbeOptions {
  std::size_t calibration_rounds = 4;
  std::size_t conflict_rounds = 32;
  double min_confidence = 0.9;
  std::size_t refresh_rounds = 2500;
  Cycles pair_gap = kDefaultPairGap;
  std::size_t stream_rounds = 5000;
  double k_sigma = 4.0;
  // Spikes must also exceed the median by this much. Keeps bank misses
  // after a refresh and small outliers out of the refresh count.
  Cycles min_spike_excess = 200;
  // Spike samples closer than this collapse into one refresh event.
  Cycles merge_window = 650;
  double reduced_ratio = 0.75;
  // Minimum cluster separation for a usable threshold.
  double min_separation = 4.0;
};

struct ThresholdFit {
  double threshold = 0;
  double low_center = 0;
  double high_center = 0;
  double jitter = 0;
};

// Two-means split of `values` (initialised at min and max); the threshold is
// the midpoint of the centers. Jitter is 1.4826 * MAD of the residuals to
// each sample's center. Throws Error(kDegenerateDistribution) when the
// centers are closer than max(4 * jitter, min_separation); two-means on a
// single Gaussian leaves them only about 2.7 jitters apart.
ThresholdFit FitThresholdValues(std::span<const double> values,
                                double min_separation = 4.0);
// Pools the per-pair median latency of each calibration pair.
ThresholdFit FitThreshold(AccessOracle& oracle,
                          std::span<const std::pair<PhysAddr, PhysAddr>> pairs,
                          const ProbeOptions& options = {});

enum class Verdict { kHit, kConflict };

struct ConflictVerdict {
  Verdict verdict = Verdict::kHit;
  double confidence = 1.0;  // fraction of samples on the verdict side
};

// Majority vote of pair latencies against `threshold`. Throws
// Error(kLowConfidence) below options.min_confidence.
ConflictVerdict MeasureConflict(AccessOracle& oracle, PhysAddr a, PhysAddr b,
                                double threshold,
                                const ProbeOptions& options = {});

// Issue times of refresh events: samples above
// median + k_sigma * 1.4826 * MAD (and above median + min_excess), with
// samples closer than merge_window collapsed to the first. Requires at least
// 100 samples (Error(kInvalidArgument)).
std::vector<Cycles> DetectSpikes(const LatencySeries& series, double k_sigma,
                                 Cycles min_excess = 0,
                                 Cycles merge_window = 650);

enum class RefreshClass { kNormal, kReduced };

struct RefreshVerdict {
  double interval_estimate = 0;
  RefreshClass classification = RefreshClass::kNormal;
  std::size_t spike_count = 0;
  double reference = 0;
};

// Interval = average spacing of refresh events while alternating a and b.
// Reduced iff interval < reduced_ratio * reference. With no reference, the
// self pair (a, a) supplies one. Throws Error(kNoSpikesDetected) when fewer
// than two events are seen.
RefreshVerdict ClassifyRefreshInterval(AccessOracle& oracle, PhysAddr a,
                                       PhysAddr b,
                                       std::optional<double> reference,
                                       const ProbeOptions& options = {});
RefreshVerdict ClassifyRefreshSeries(const LatencySeries& series,
                                     double reference,
                                     const ProbeOptions& options = {});

struct StreamDistribution {
  std::vector<std::pair<Cycles, std::size_t>> histogram;  // ascending latency
  Cycles peak = 0;
  std::size_t samples_used = 0;
};

// Histogram of per-access latencies with 1-cycle bins, leaving out samples
// within merge_window of a refresh event; peak is the argmax after a
// width-3 moving average. With `working` set, each stream must stay inside
// one bank and row, and the two streams must not share a bank with
// different rows (Error(kStreamsNotRowHit)).
StreamDistribution MeasureStreamDistribution(
    AccessOracle& oracle, std::span<const PhysAddr> a,
    std::span<const PhysAddr> b, const DramAddressMapping* working,
    const ProbeOptions& options = {});
StreamDistribution HistogramOf(const LatencySeries& series,
                               const ProbeOptions& options = {});

// CSV with header latency_cycles,count.
void WriteHistogramCsv(const StreamDistribution& dist, std::ostream& out);

}  // namespace sudoku

#endif  // SUDOKU_PROBE_H_
