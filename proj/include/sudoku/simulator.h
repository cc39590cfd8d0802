#ifndef SUDOKU_SIMULATOR_H_
#define SUDOKU_SIMULATOR_H_

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sudoku/gf2.h"
#include "sudoku/mapping.h"

namespace sudoku {

using Cycles = std::int64_t;

struct TimingConfig {
  double clock_period_ns = 1.0 / 2.4;  // 2400 MHz controller clock
  Cycles tRCD = 16;
  Cycles tRP = 16;
  Cycles tRFC = 650;
  Cycles tREFI = 9360;
  Cycles base_hit_latency = 50;
  Cycles tRDRD_sg = 8;
  Cycles tRDRD_dg = 4;
  Cycles tRDRD_dr = 6;
  Cycles tRDRD_dd = 7;
  Cycles tRDRD_dc = 4;

  friend bool operator==(const TimingConfig&, const TimingConfig&) = default;

  // Throws Error(kInvalidArgument).
  void Validate() const;
};

enum class RefreshKind { kAllBank, kFineGrained };

struct RefreshMode {
  RefreshKind kind = RefreshKind::kAllBank;
  // Functions of these classes split the refresh domains.
  std::vector<ComponentClass> group_classes = {ComponentClass::kChannel,
                                               ComponentClass::kSubChannel,
                                               ComponentClass::kDimmRank};
  // FineGrained only: further bank-level functions that split the domains.
  std::vector<BitMask> extra_functions;

  friend bool operator==(const RefreshMode&, const RefreshMode&) = default;
};

struct NoiseModel {
  double jitter_sigma = 0.0;
  double outlier_prob = 0.0;
  Cycles outlier_magnitude = 100;
  std::uint64_t seed = 0;

  friend bool operator==(const NoiseModel&, const NoiseModel&) = default;
};

// Everything besides the mapping that shapes simulated timing.
struct SimConfig {
  TimingConfig timing;
  RefreshMode refresh;
  NoiseModel noise;
  // DimmRank functions that select the DIMM rather than the rank within it.
  // A difference in one of them costs tRDRD_dd instead of tRDRD_dr.
  std::vector<BitMask> dimm_functions;

  friend bool operator==(const SimConfig&, const SimConfig&) = default;
};

struct LatencySample {
  Cycles timestamp = 0;  // issue time
  Cycles latency = 0;

  friend bool operator==(const LatencySample&, const LatencySample&) = default;
};

struct LatencySeries {
  std::vector<LatencySample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  std::vector<Cycles> Latencies() const;

  friend bool operator==(const LatencySeries&, const LatencySeries&) = default;
};

struct TraceEntry {
  PhysAddr addr = 0;
  Cycles gap = 0;
};

class Simulator {
 public:
  // Throws Error(kInvalidMapping) unless the mapping is structurally valid
  // and injective, Error(kInvalidArgument) on a bad timing/refresh config.
  Simulator(DramAddressMapping mapping, SimConfig config);

  // Issues a read `gap` cycles after the previous access completed and
  // returns its latency.
  Cycles Access(PhysAddr addr, Cycles gap);
  LatencySeries RunTrace(std::span<const TraceEntry> trace);

  // Precharges every bank and forgets the previous access, so the next access
  // pays no spacing penalty.
  void CloseAllBanks();
  void AdvanceTime(Cycles idle) { now_ += idle; }

  Cycles now() const { return now_; }
  std::size_t refresh_group_count() const {
    return std::size_t{1} << refresh_fns_.size();
  }
  // Issue time of the most recent access.
  Cycles last_issue() const { return last_issue_; }
  std::size_t RefreshGroup(PhysAddr addr) const;
  // Start of refresh number `n` (n >= 0) of `group`.
  Cycles RefreshStart(std::size_t group, std::int64_t n) const;

  const DramAddressMapping& mapping() const { return mapping_; }
  const SimConfig& config() const { return config_; }

 private:
  enum class Relation { kSameBankGroup, kDiffBankGroup, kDiffRank, kDiffDimm,
                        kDiffChannel };

  // A bank is open only when its epoch matches the simulator's; bumping the
  // epoch closes every bank at once.
  struct Bank {
    std::uint64_t row = 0;
    Cycles opened_at = 0;
    std::uint64_t epoch = 0;
  };

  std::uint64_t BankIndex(PhysAddr addr) const;
  Relation RelationTo(PhysAddr addr) const;
  Cycles SpacingFor(Relation r) const;
  // Waiting time for an access issued at `t` to refresh group `g`, and the
  // start of the latest refresh that began at or before the service time.
  Cycles RefreshWait(std::size_t g, Cycles t, Cycles* last_start) const;
  Cycles Noise();

  DramAddressMapping mapping_;
  SimConfig config_;
  std::vector<BitMask> bank_fns_;
  std::vector<BitMask> refresh_fns_;
  std::vector<BitMask> channel_fns_;
  std::vector<BitMask> dimm_fns_;
  std::vector<BitMask> rank_fns_;
  std::vector<BitMask> group_fns_;
  std::vector<Bank> banks_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> jitter_;
  std::uniform_real_distribution<double> unit_;
  Cycles now_ = 0;
  Cycles last_issue_ = 0;
  std::uint64_t epoch_ = 1;
  bool has_last_ = false;
  PhysAddr last_addr_ = 0;
};

// Key = value text mirroring the SimConfig fields. Unknown keys and
// malformed values raise ParseError with the line number.
SimConfig LoadSimConfig(std::string_view text);
std::string StoreSimConfig(const SimConfig& config);
SimConfig LoadSimConfigFile(const std::string& path);

// CSV with header index,timestamp_cycles,latency_cycles.
void WriteTraceCsv(const LatencySeries& series, std::ostream& out);

}  // namespace sudoku

#endif  // SUDOKU_SIMULATOR_H_
