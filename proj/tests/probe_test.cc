#include "sudoku/probe.h"

#include <random>
#include <sstream>

#include "gtest/gtest.h"
#include "sudoku/error.h"
#include "sudoku/ground_truth.h"

namespace sudoku {
namespace {

// Oracle replaying a fixed latency pattern, for exact control of the input.
class ScriptedOracle : public AccessOracle {
 public:
  explicit ScriptedOracle(std::vector<Cycles> pattern)
      : pattern_(std::move(pattern)) {}

  LatencySeries TimePair(PhysAddr, PhysAddr, std::size_t rounds,
                         Cycles) override {
    LatencySeries s;
    for (std::size_t i = 0; i < 2 * rounds; ++i) {
      s.samples.push_back({static_cast<Cycles>(i) * 100,
                           pattern_[i % pattern_.size()]});
    }
    return s;
  }
  LatencySeries TimeStreams(std::span<const PhysAddr>,
                            std::span<const PhysAddr>,
                            std::size_t rounds) override {
    return TimePair(0, 0, rounds, 0);
  }
  BitMask AddressSpace() const override { return BitMask::Range(6, 37); }

 private:
  std::vector<Cycles> pattern_;
};

LatencySeries Series(std::size_t n, Cycles step, Cycles base) {
  LatencySeries s;
  for (std::size_t i = 0; i < n; ++i) {
    s.samples.push_back({static_cast<Cycles>(i) * step, base});
  }
  return s;
}

SimConfig Noisy(double sigma) {
  SimConfig c;
  c.noise.jitter_sigma = sigma;
  c.noise.seed = 3;
  return c;
}

TEST(FitThresholdTest, SplitsTwoClusters) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0, 1.5);
  std::vector<double> v;
  for (int i = 0; i < 900; ++i) v.push_back(50 + n(rng));
  for (int i = 0; i < 100; ++i) v.push_back(82 + n(rng));
  const ThresholdFit fit = FitThresholdValues(v);
  EXPECT_NEAR(fit.low_center, 50, 0.3);
  EXPECT_NEAR(fit.high_center, 82, 0.5);
  EXPECT_NEAR(fit.threshold, 66, 0.5);
  EXPECT_NEAR(fit.jitter, 1.5, 0.3);
}

TEST(FitThresholdTest, DegenerateDistribution) {
  std::vector<double> flat(100, 50.0);
  EXPECT_THROW(FitThresholdValues(flat), Error);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(50, 3);
  std::vector<double> one;
  for (int i = 0; i < 1000; ++i) one.push_back(n(rng));
  try {
    FitThresholdValues(one);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDegenerateDistribution);
  }
  EXPECT_THROW(FitThresholdValues(std::vector<double>{}), Error);
}

TEST(MeasureConflictTest, VotesAndConfidence) {
  ScriptedOracle hits({50, 51, 49, 50});
  const ConflictVerdict h = MeasureConflict(hits, 0, 0, 66);
  EXPECT_EQ(h.verdict, Verdict::kHit);
  EXPECT_DOUBLE_EQ(h.confidence, 1.0);
  ScriptedOracle mostly({82, 82, 82, 82, 82, 82, 82, 82, 82, 50});
  const ConflictVerdict c = MeasureConflict(mostly, 0, 0, 66);
  EXPECT_EQ(c.verdict, Verdict::kConflict);
  EXPECT_NEAR(c.confidence, 0.9, 0.02);
  ScriptedOracle mixed({82, 50});
  try {
    MeasureConflict(mixed, 0, 0, 66);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kLowConfidence);
  }
}

TEST(MeasureConflictTest, OnSimulator) {
  const DramAddressMapping& m = GroundTruth("intel_a_1ch_1dpc");
  SimulatorOracle oracle(m, Noisy(2), 9);
  // Bits 14 and 18 cancel in the one function holding them; 18 is a row bit.
  EXPECT_EQ(MeasureConflict(oracle, 0, 0x44000, 66).verdict,
            Verdict::kConflict);
  // Bit 6 is a column bit: same row.
  EXPECT_EQ(MeasureConflict(oracle, 0, 1ull << 6, 66).verdict, Verdict::kHit);
  // Bit 9 changes the bank group: another bank.
  EXPECT_EQ(MeasureConflict(oracle, 0, 1ull << 9, 66).verdict, Verdict::kHit);
}

TEST(DetectSpikesTest, FindsAndMergesSpikes) {
  LatencySeries s = Series(1000, 100, 50);
  for (std::size_t i : {100u, 101u, 102u, 400u, 800u}) {
    s.samples[i].latency = 700;
  }
  const auto events = DetectSpikes(s, 4.0, 200, 650);
  EXPECT_EQ(events, (std::vector<Cycles>{10000, 40000, 80000}));
  // Without merging, adjacent spike samples count separately.
  EXPECT_EQ(DetectSpikes(s, 4.0, 200, 0).size(), 5u);
  // Small outliers stay under the floor.
  s.samples[600].latency = 150;
  EXPECT_EQ(DetectSpikes(s, 4.0, 200, 650).size(), 3u);
  EXPECT_THROW(DetectSpikes(Series(99, 100, 50), 4.0), Error);
}

TEST(ClassifyRefreshSeriesTest, ReducedAndNormal) {
  LatencySeries s = Series(2000, 100, 50);
  // Spikes every 4700 cycles: half of a 9400 reference.
  for (std::size_t i = 10; i < s.size(); i += 47) s.samples[i].latency = 700;
  const RefreshVerdict r = ClassifyRefreshSeries(s, 9400);
  EXPECT_EQ(r.classification, RefreshClass::kReduced);
  EXPECT_NEAR(r.interval_estimate, 4700, 1e-9);
  EXPECT_EQ(ClassifyRefreshSeries(s, 4700).classification,
            RefreshClass::kNormal);
  LatencySeries none = Series(2000, 100, 50);
  none.samples[5].latency = 700;
  try {
    ClassifyRefreshSeries(none, 9400);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNoSpikesDetected);
  }
}

TEST(ClassifyRefreshIntervalTest, OnSimulator) {
  const DramAddressMapping& m = GroundTruth("intel_a_1ch_1dpc");
  SimulatorOracle oracle(m, Noisy(2), 4);
  ProbeOptions opts;
  opts.min_spike_excess = 325;
  // 0x8000 flips the rank function, which splits the refresh groups.
  const RefreshVerdict cross =
      ClassifyRefreshInterval(oracle, 0, 0x8000, 9360.0, opts);
  EXPECT_EQ(cross.classification, RefreshClass::kReduced);
  EXPECT_NEAR(cross.interval_estimate, 4680, 300);
  const RefreshVerdict same =
      ClassifyRefreshInterval(oracle, 0, 0x200, 9360.0, opts);
  EXPECT_EQ(same.classification, RefreshClass::kNormal);
  EXPECT_NEAR(same.interval_estimate, 9360, 300);
  // Self-pair reference.
  EXPECT_EQ(ClassifyRefreshInterval(oracle, 0, 0x8000, std::nullopt, opts)
                .classification,
            RefreshClass::kReduced);
}

TEST(HistogramTest, PeakAndSpikeExclusion) {
  LatencySeries s = Series(1000, 100, 58);
  for (std::size_t i = 0; i < s.size(); i += 3) s.samples[i].latency = 57;
  for (std::size_t i = 1; i < s.size(); i += 3) s.samples[i].latency = 59;
  s.samples[500].latency = 700;
  s.samples[501].latency = 66;  // right after the refresh: dropped
  const StreamDistribution d = HistogramOf(s);
  EXPECT_EQ(d.peak, 58);
  EXPECT_LT(d.samples_used, 1000u);
  for (const auto& [lat, count] : d.histogram) {
    EXPECT_NE(lat, 700);
    EXPECT_NE(lat, 66);
  }
  std::ostringstream out;
  WriteHistogramCsv(d, out);
  EXPECT_EQ(out.str().rfind("latency_cycles,count\n", 0), 0u);
}

TEST(StreamDistributionTest, PeaksFollowSpacing) {
  const DramAddressMapping& m = GroundTruth("intel_a_1ch_1dpc");
  const TimingConfig t;
  SimulatorOracle oracle(m, Noisy(2), 5);
  const std::vector<PhysAddr> a = {0, 0x40, 0x80};
  // 0x8000 changes rank, 0x200 the bank group.
  for (auto [delta, spacing] : {std::pair<PhysAddr, Cycles>{0x8000, t.tRDRD_dr},
                                {0x200, t.tRDRD_dg},
                                {0x100, t.tRDRD_sg}}) {
    std::vector<PhysAddr> b;
    for (PhysAddr x : a) b.push_back(x ^ delta);
    const StreamDistribution d =
        MeasureStreamDistribution(oracle, a, b, &m);
    EXPECT_EQ(d.peak, t.base_hit_latency + spacing) << std::hex << delta;
  }
}

TEST(StreamDistributionTest, RejectsRowMisses) {
  const DramAddressMapping& m = GroundTruth("intel_a_1ch_1dpc");
  SimulatorOracle oracle(m, SimConfig{}, 5);
  const std::vector<PhysAddr> row_change = {0, 0x44000};
  const std::vector<PhysAddr> other = {0x200};
  try {
    MeasureStreamDistribution(oracle, row_change, other, &m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kStreamsNotRowHit);
  }
  const std::vector<PhysAddr> a = {0};
  const std::vector<PhysAddr> same_bank_other_row = {0x44000};
  EXPECT_THROW(MeasureStreamDistribution(oracle, a, same_bank_other_row, &m),
               Error);
  EXPECT_THROW(MeasureStreamDistribution(oracle, {}, a, &m), Error);
}

TEST(SimulatorOracleTest, SeededRepeatability) {
  const DramAddressMapping& m = GroundTruth("intel_a_1ch_1dpc");
  SimulatorOracle a(m, Noisy(2), 77), b(m, Noisy(2), 77);
  EXPECT_EQ(a.TimePair(0, 0x200, 300), b.TimePair(0, 0x200, 300));
  EXPECT_EQ(a.TimePair(0, 0x200, 300).size(), 600u);
  EXPECT_EQ(a.accesses(), 2u * 301u * 2u);
  EXPECT_EQ(a.AddressSpace(), m.BitUniverse());
}

}  // namespace
}  // namespace sudoku
