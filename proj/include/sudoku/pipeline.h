#ifndef SUDOKU_PIPELINE_H_
#define SUDOKU_PIPELINE_H_

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "sudoku/gf2.h"
#include "sudoku/mapping.h"
#include "sudoku/probe.h"
#include "sudoku/simulator.h"

namespace sudoku {

// Consecutive-read spacing kinds, ordered from the finest to the coarsest
// component boundary an access pair can cross.
enum class Spacing { kSameBankGroup, kDiffBankGroup, kDiffRank, kDiffDimm,
                     kDiffChannel };

std::string_view SpacingName(Spacing s);
ComponentClass ClassOfSpacing(Spacing s);
// 1 (same bank group) .. 5 (different channel).
int LevelOf(Spacing s);

struct RdrdHints {
  Cycles sg = 8;
  Cycles dg = 4;
  Cycles dr = 6;
  Cycles dd = 7;
  Cycles dc = 4;

  Cycles Value(Spacing s) const;
  static RdrdHints From(const TimingConfig& t);
};

struct PipelineConfig {
  unsigned addr_width = kDefaultAddrWidth;
  unsigned offset_bits = kDefaultOffsetBits;
  // Channel functions known from platform documentation. They replace the
  // measured channel representatives and are unioned into the recovered set.
  std::vector<BitMask> known_channel_functions;
  std::optional<RdrdHints> rdrd_hints = RdrdHints{};
  std::optional<Cycles> tREFI_hint = 9360;
  std::optional<Cycles> tRFC_hint = 650;
  // Number of row bits of the device, when known from its geometry.
  std::optional<unsigned> row_bits;
  // Classes that own separate refresh commands on the target.
  std::vector<ComponentClass> refresh_scope = {ComponentClass::kChannel,
                                               ComponentClass::kSubChannel,
                                               ComponentClass::kDimmRank};
  ProbeOptions probe;
  std::size_t calibration_pairs = 4096;
  std::size_t screen_rounds = 4;
  // Recovery stops after this many confirmed conflicts add no new delta.
  std::size_t stall_limit = 16;
  std::size_t max_candidates = 400000;
  std::size_t stream_elements = 4;
  std::size_t baseline_rounds = 500;
  double peak_tolerance = 1.0;
  // Refresh-count estimation; 0 pairs skips it inside Decompose.
  std::size_t refresh_count_pairs = 0;
  std::size_t refresh_count_rounds = 1000;
  std::uint64_t seed = 1;

  // Probe options with spike thresholds derived from the tRFC hint.
  ProbeOptions EffectiveProbe() const;
  BitMask UsableBits() const {
    return BitMask::Range(offset_bits, addr_width);
  }
};

// Key = value text; see README for keys. Throws ParseError.
PipelineConfig LoadPipelineConfig(std::string_view text);
PipelineConfig LoadPipelineConfigFile(const std::string& path);

enum class Evidence { kConflict, kRefresh, kConsecutive, kHint, kRepair };
std::string_view EvidenceName(Evidence e);

struct FunctionProvenance {
  Evidence recovered_by = Evidence::kConflict;
  std::vector<Evidence> labeled_by;
  double confidence = 0;
  std::string notes;
};

struct RefreshCountEstimate {
  std::size_t pairs = 0;     // pairs that produced a verdict
  std::size_t reduced = 0;
  std::size_t failed = 0;    // pairs without enough refresh events
  double p = 0;
  double p_low = 0;          // 95% Wilson interval
  double p_high = 0;
  int k = 0;
  int k_low = 0;
  int k_high = 0;
};

struct RecoveredMapping {
  DramAddressMapping mapping;
  std::vector<FunctionProvenance> provenance;  // parallel to mapping.functions
  std::optional<ThresholdFit> threshold;
  std::optional<RefreshCountEstimate> refresh_estimate;
  std::vector<SubsystemReport> injectivity;
  std::vector<std::string> notes;
  std::uint64_t accesses = 0;

  bool FullyLabeled() const;
};

ThresholdFit CalibrateThreshold(AccessOracle& oracle,
                                const PipelineConfig& config);

// Bank-determining functions: the annihilator, inside the address space, of
// the deltas of confirmed same-bank conflict pairs, returned as a
// minimum-weight basis. Throws Error(kInsufficientSamples) when the candidate
// budget runs out before the delta span settles.
Gf2System RecoverBankFunctions(AccessOracle& oracle,
                               const PipelineConfig& config, double threshold);

struct RowColMasks {
  BitMask row;
  BitMask col;
};

// Tests same-bank deltas (one per free bit of the function system, single
// unused bits first) for conflicts. Hit deltas span the same-row subspace;
// its support holds the column bits and the remaining free bits are rows.
// Throws Error(kUnresolvableBit) when a delta never gives a confident verdict.
RowColMasks IdentifyRowColBits(AccessOracle& oracle, const Gf2System& functions,
                               const PipelineConfig& config, double threshold);

// Makes `candidate` injective over its bit universe plus `universe` by
// promoting single bits of nullspace deltas: the highest bit to the rows when
// it lies above the row/column boundary, otherwise the lowest bit to the
// columns. Throws Error(kIrreparableSystem) on duplicate functions.
DramAddressMapping ValidateAndRepair(DramAddressMapping candidate,
                                     BitMask universe = BitMask());

enum class RefreshScope { kInScope, kOutOfScope, kUnknown };

struct RefreshGrouping {
  RefreshScope scope = RefreshScope::kUnknown;
  std::optional<RefreshVerdict> verdict;
  std::string notes;
};

// One verdict per function of `mapping`, from a pair differing only in that
// function.
std::vector<RefreshGrouping> GroupByRefresh(AccessOracle& oracle,
                                            const DramAddressMapping& mapping,
                                            const PipelineConfig& config);

struct ConsecutiveLabel {
  ComponentClass label = ComponentClass::kUnassigned;
  std::vector<Spacing> candidates;
  double peak_offset = 0;
  bool ambiguous = false;
  std::vector<Evidence> evidence;
  double confidence = 0;
  std::string notes;
};

// Labels every function of `mapping` from the latency peak of two streams
// that differ only in that function. `refresh` (parallel to the functions)
// narrows equal-peak candidates to or away from the refresh scope.
std::vector<ConsecutiveLabel> ClassifyByConsecutive(
    AccessOracle& oracle, const DramAddressMapping& mapping,
    const PipelineConfig& config,
    const std::vector<RefreshGrouping>* refresh = nullptr);

// Full pipeline. With `supplied` set, function recovery is skipped.
RecoveredMapping Decompose(AccessOracle& oracle, const PipelineConfig& config,
                           const std::vector<BitMask>* supplied = nullptr);

RefreshCountEstimate EstimateRefreshFunctionCount(AccessOracle& oracle,
                                                  const PipelineConfig& config,
                                                  std::size_t pairs);

// Per-class span comparison against ground truth, plus exact row/column
// masks.
struct ClassComparison {
  ComponentClass cls;
  bool equal = false;
};
struct MappingComparison {
  std::vector<ClassComparison> classes;
  bool row_equal = false;
  bool col_equal = false;
  bool AllEqual() const;
};
MappingComparison CompareMappings(const DramAddressMapping& recovered,
                                  const DramAddressMapping& truth);

}  // namespace sudoku

#endif  // SUDOKU_PIPELINE_H_
