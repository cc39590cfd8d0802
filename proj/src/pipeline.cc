#include "sudoku/pipeline.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>

#include "sudoku/error.h"
#include "kv.h"

namespace sudoku {
namespace {

constexpr Spacing kAllSpacings[] = {
    Spacing::kSameBankGroup, Spacing::kDiffBankGroup, Spacing::kDiffRank,
    Spacing::kDiffDimm, Spacing::kDiffChannel};

// Stage seeds are derived from the config seed so stages do not share draws.
std::mt19937_64 StageRng(const PipelineConfig& config, std::uint64_t stage) {
  std::seed_seq seq{config.seed, stage};
  return std::mt19937_64(seq);
}

double MedianLatency(const LatencySeries& s) {
  std::vector<Cycles> v = s.Latencies();
  if (v.empty()) return 0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  return static_cast<double>(v[mid]);
}

BitMask AddressSpaceOf(const AccessOracle& oracle,
                       const PipelineConfig& config) {
  return oracle.AddressSpace() & config.UsableBits();
}

Error StageError(std::string_view stage, const Error& e) {
  return Error(e.kind(), std::string(stage) + ": " + e.what());
}

// Delta that flips exactly function `index` of `fns` and leaves all other
// functions and, where possible, every row bit unchanged. A function that is
// a combination of row bits can only flip with the row; the bank changes too,
// so such a pair still never conflicts.
std::optional<BitMask> DualDelta(const std::vector<BitMask>& fns,
                                 std::size_t index, BitMask row_mask) {
  std::vector<Constraint> cs;
  for (std::size_t j = 0; j < fns.size(); ++j) {
    cs.push_back({fns[j], j == index ? 1u : 0u});
  }
  const std::size_t function_count = cs.size();
  for (unsigned b : row_mask.Indices()) cs.push_back({BitMask::Bit(b), 0});
  if (auto d = SolveDelta(cs)) return d;
  cs.resize(function_count);
  return SolveDelta(cs);
}

// Deltas that keep bank and row; used to spread each stream over columns.
std::vector<BitMask> HitDeltas(const DramAddressMapping& m, std::size_t count) {
  std::vector<BitMask> out = {BitMask()};
  const std::vector<BitMask> fns = m.FunctionMasks();
  for (unsigned c : m.col_mask.Indices()) {
    if (out.size() >= count) break;
    std::vector<Constraint> cs;
    for (BitMask f : fns) cs.push_back({f, 0});
    for (unsigned b : m.row_mask.Indices()) cs.push_back({BitMask::Bit(b), 0});
    cs.push_back({BitMask::Bit(c), 1});
    if (auto d = SolveDelta(cs)) out.push_back(*d);
  }
  return out;
}

struct Signature {
  double peak_offset = 0;
  std::vector<Spacing> candidates;
  std::optional<RefreshClass> refresh;
  int level = 0;
  bool ambiguous = false;
  bool refresh_used = false;
  double confidence = 0;
  std::string notes;

  ComponentClass Label() const {
    if (ambiguous || candidates.empty()) return ComponentClass::kUnassigned;
    return ClassOfSpacing(candidates.front());
  }
};

bool InScope(const PipelineConfig& config, Spacing s) {
  const ComponentClass c = ClassOfSpacing(s);
  return std::find(config.refresh_scope.begin(), config.refresh_scope.end(),
                   c) != config.refresh_scope.end();
}

void AppendNote(std::string& notes, const std::string& note) {
  if (notes.find(note) != std::string::npos) return;
  if (!notes.empty()) notes += "; ";
  notes += note;
}

// Turns a peak offset plus optional refresh evidence into label candidates.
Signature Interpret(double offset, std::optional<RefreshClass> refresh,
                    const PipelineConfig& config) {
  Signature sig;
  sig.peak_offset = offset;
  sig.refresh = refresh;
  std::vector<Spacing> cands;
  double nearest = 0;
  if (!config.rdrd_hints) {
    cands.assign(std::begin(kAllSpacings), std::end(kAllSpacings));
    AppendNote(sig.notes, "no tRDRD hints");
  } else {
    const RdrdHints& h = *config.rdrd_hints;
    nearest = 1e18;
    for (Spacing s : kAllSpacings) {
      nearest = std::min(nearest,
                         std::fabs(offset - static_cast<double>(h.Value(s))));
    }
    const double slack = nearest > config.peak_tolerance
                             ? nearest + config.peak_tolerance
                             : nearest;
    std::set<Cycles> values;
    for (Spacing s : kAllSpacings) {
      if (std::fabs(offset - static_cast<double>(h.Value(s))) <= slack + 1e-9) {
        cands.push_back(s);
        values.insert(h.Value(s));
      }
    }
    if (values.size() > 1) {
      AppendNote(sig.notes, "AmbiguousPeak: offset " + kv::FormatReal(offset) +
                                " between distinct tRDRD hints");
    } else if (nearest > config.peak_tolerance) {
      AppendNote(sig.notes, "peak offset " + kv::FormatReal(offset) +
                                " outside hint tolerance");
    }
  }
  if (refresh) {
    std::vector<Spacing> kept;
    for (Spacing s : cands) {
      if (InScope(config, s) == (*refresh == RefreshClass::kReduced)) {
        kept.push_back(s);
      }
    }
    std::set<ComponentClass> before, after;
    for (Spacing s : cands) before.insert(ClassOfSpacing(s));
    for (Spacing s : kept) after.insert(ClassOfSpacing(s));
    if (kept.empty()) {
      AppendNote(sig.notes,
                 std::string("refresh verdict ") +
                     (*refresh == RefreshClass::kReduced ? "reduced" : "normal") +
                     " conflicts with consecutive-access peak; kept the peak");
    } else {
      sig.refresh_used = after.size() < before.size();
      cands = std::move(kept);
    }
  }
  std::set<ComponentClass> classes;
  for (Spacing s : cands) {
    classes.insert(ClassOfSpacing(s));
    sig.level = std::max(sig.level, LevelOf(s));
  }
  if (classes.size() > 1 && config.rdrd_hints) {
    std::string names;
    for (ComponentClass c : classes) {
      names += (names.empty() ? "" : "/") + std::string(ClassName(c));
    }
    AppendNote(sig.notes, "equal tRDRD hints leave " + names);
  }
  sig.candidates = std::move(cands);
  sig.ambiguous = classes.size() != 1 || nearest > config.peak_tolerance;
  sig.confidence = sig.ambiguous
                       ? 0.0
                       : 1.0 - std::min(1.0, nearest / (config.peak_tolerance + 1));
  return sig;
}

// Measures stream peaks and refresh verdicts for address deltas against a
// working mapping.
class DeltaProber {
 public:
  DeltaProber(AccessOracle& oracle, const PipelineConfig& config,
              const DramAddressMapping& working, std::mt19937_64& rng)
      : oracle_(oracle),
        config_(config),
        probe_(config.EffectiveProbe()),
        working_(working),
        rng_(rng),
        space_(AddressSpaceOf(oracle, config)),
        hits_(HitDeltas(working, std::max<std::size_t>(1, config.stream_elements))) {
    const PhysAddr a = RandomAddress(space_, rng_);
    baseline_ = static_cast<double>(
        HistogramOf(oracle_.TimePair(a, a, config.baseline_rounds, probe_.pair_gap),
                    probe_)
            .peak);
  }

  double PeakOffset(BitMask d) {
    const PhysAddr a = RandomAddress(space_, rng_);
    std::vector<PhysAddr> sa, sb;
    for (BitMask h : hits_) {
      sa.push_back(a ^ h.bits);
      sb.push_back(a ^ d.bits ^ h.bits);
    }
    const StreamDistribution dist =
        MeasureStreamDistribution(oracle_, sa, sb, &working_, probe_);
    return static_cast<double>(dist.peak) - baseline_;
  }

  std::optional<RefreshClass> Refresh(BitMask d, std::string* notes) {
    const PhysAddr a = RandomAddress(space_, rng_);
    std::optional<double> reference;
    if (config_.tREFI_hint) reference = static_cast<double>(*config_.tREFI_hint);
    try {
      return ClassifyRefreshInterval(oracle_, a, a ^ d.bits, reference, probe_)
          .classification;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kNoSpikesDetected) throw;
      if (notes) AppendNote(*notes, e.what());
      return std::nullopt;
    }
  }

  Signature Measure(BitMask d) {
    std::string notes;
    const std::optional<RefreshClass> refresh = Refresh(d, &notes);
    Signature sig = Interpret(PeakOffset(d), refresh, config_);
    if (!notes.empty()) AppendNote(sig.notes, notes);
    return sig;
  }

  double baseline() const { return baseline_; }

 private:
  AccessOracle& oracle_;
  const PipelineConfig& config_;
  ProbeOptions probe_;
  const DramAddressMapping& working_;
  std::mt19937_64& rng_;
  BitMask space_;
  std::vector<BitMask> hits_;
  double baseline_ = 0;
};

// Columns of `basis` restricted to bit `b`, packed as a vector over the basis.
BitMask CoordinateColumn(const std::vector<BitMask>& basis, unsigned b) {
  BitMask col;
  for (std::size_t i = 0; i < basis.size(); ++i) {
    if (basis[i].test(b)) col |= BitMask::Bit(static_cast<unsigned>(i));
  }
  return col;
}

// Bits from `order` whose coordinate columns over `basis` are independent,
// up to `limit` of them.
BitMask GreedyBits(const std::vector<BitMask>& basis,
                   const std::vector<unsigned>& order, std::size_t limit) {
  EchelonBasis cols;
  BitMask chosen;
  for (unsigned b : order) {
    if (cols.rank() >= limit) break;
    if (cols.Insert(CoordinateColumn(basis, b))) chosen |= BitMask::Bit(b);
  }
  return chosen;
}

ConflictVerdict ConfidentConflict(AccessOracle& oracle, BitMask space,
                                  BitMask delta, double threshold,
                                  const ProbeOptions& probe,
                                  std::mt19937_64& rng) {
  for (int attempt = 0; attempt < 4; ++attempt) {
    const PhysAddr a = RandomAddress(space, rng);
    try {
      return MeasureConflict(oracle, a, a ^ delta.bits, threshold, probe);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kLowConfidence) throw;
    }
  }
  throw Error(ErrorKind::kUnresolvableBit,
              "delta " + FormatMask(delta) + " gave no confident verdict");
}

int KFromP(double p) {
  if (p <= 0) return 0;
  if (p >= 1) return 16;
  return static_cast<int>(std::lround(-std::log2(1 - p)));
}

}  // namespace

std::string_view SpacingName(Spacing s) {
  switch (s) {
    case Spacing::kSameBankGroup: return "sg";
    case Spacing::kDiffBankGroup: return "dg";
    case Spacing::kDiffRank: return "dr";
    case Spacing::kDiffDimm: return "dd";
    case Spacing::kDiffChannel: return "dc";
  }
  return "sg";
}

ComponentClass ClassOfSpacing(Spacing s) {
  switch (s) {
    case Spacing::kSameBankGroup: return ComponentClass::kBankAddress;
    case Spacing::kDiffBankGroup: return ComponentClass::kBankGroup;
    case Spacing::kDiffRank:
    case Spacing::kDiffDimm: return ComponentClass::kDimmRank;
    case Spacing::kDiffChannel: return ComponentClass::kChannel;
  }
  return ComponentClass::kUnassigned;
}

int LevelOf(Spacing s) { return static_cast<int>(s) + 1; }

Cycles RdrdHints::Value(Spacing s) const {
  switch (s) {
    case Spacing::kSameBankGroup: return sg;
    case Spacing::kDiffBankGroup: return dg;
    case Spacing::kDiffRank: return dr;
    case Spacing::kDiffDimm: return dd;
    case Spacing::kDiffChannel: return dc;
  }
  return sg;
}

RdrdHints RdrdHints::From(const TimingConfig& t) {
  return {t.tRDRD_sg, t.tRDRD_dg, t.tRDRD_dr, t.tRDRD_dd, t.tRDRD_dc};
}

ProbeOptions PipelineConfig::EffectiveProbe() const {
  ProbeOptions p = probe;
  if (tRFC_hint) {
    p.min_spike_excess = *tRFC_hint / 2;
    p.merge_window = *tRFC_hint;
  }
  return p;
}

std::string_view EvidenceName(Evidence e) {
  switch (e) {
    case Evidence::kConflict: return "conflict";
    case Evidence::kRefresh: return "refresh";
    case Evidence::kConsecutive: return "consecutive";
    case Evidence::kHint: return "hint";
    case Evidence::kRepair: return "repair";
  }
  return "conflict";
}

bool RecoveredMapping::FullyLabeled() const {
  return std::none_of(mapping.functions.begin(), mapping.functions.end(),
                      [](const AddressingFunction& f) {
                        return f.label == ComponentClass::kUnassigned;
                      });
}

ThresholdFit CalibrateThreshold(AccessOracle& oracle,
                                const PipelineConfig& config) {
  std::mt19937_64 rng = StageRng(config, 1);
  const BitMask space = AddressSpaceOf(oracle, config);
  std::vector<std::pair<PhysAddr, PhysAddr>> pairs;
  for (int i = 0; i < 64; ++i) {
    const PhysAddr a = RandomAddress(space, rng);
    pairs.emplace_back(a, a);
  }
  for (std::size_t i = 0; i < config.calibration_pairs; ++i) {
    const PhysAddr a = RandomAddress(space, rng);
    pairs.emplace_back(a, RandomAddress(space, rng));
  }
  return FitThreshold(oracle, pairs, config.EffectiveProbe());
}

Gf2System RecoverBankFunctions(AccessOracle& oracle,
                               const PipelineConfig& config, double threshold) {
  std::mt19937_64 rng = StageRng(config, 2);
  const ProbeOptions probe = config.EffectiveProbe();
  const BitMask space = AddressSpaceOf(oracle, config);
  const PhysAddr base = RandomAddress(space, rng);
  EchelonBasis deltas;
  std::size_t stall = 0;
  std::size_t candidates = 0;
  while (stall < config.stall_limit) {
    if (candidates++ >= config.max_candidates) {
      throw Error(ErrorKind::kInsufficientSamples,
                  "delta span still growing after " +
                      std::to_string(config.max_candidates) + " candidates");
    }
    const PhysAddr b = RandomAddress(space, rng);
    if (b == base) continue;
    if (MedianLatency(oracle.TimePair(base, b, config.screen_rounds,
                                      probe.pair_gap)) <= threshold) {
      continue;
    }
    ConflictVerdict v;
    try {
      v = MeasureConflict(oracle, base, b, threshold, probe);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kLowConfidence) throw;
      continue;
    }
    if (v.verdict != Verdict::kConflict) continue;
    if (deltas.Insert(BitMask(base ^ b))) {
      stall = 0;
    } else {
      ++stall;
    }
  }
  std::vector<BitMask> annihilator = NullspaceBasis(deltas.rows(), space);
  std::vector<BitMask> fns = MinimumWeightCompletion({}, annihilator);
  EchelonBasis span;
  for (BitMask f : fns) span.Insert(f);
  for (BitMask h : config.known_channel_functions) {
    if (span.Insert(h & space)) fns.push_back(h & space);
  }
  return Gf2System(std::move(fns));
}

RowColMasks IdentifyRowColBits(AccessOracle& oracle, const Gf2System& functions,
                               const PipelineConfig& config, double threshold) {
  std::mt19937_64 rng = StageRng(config, 3);
  const ProbeOptions probe = config.EffectiveProbe();
  const BitMask space = AddressSpaceOf(oracle, config);
  std::vector<BitMask> null = NullspaceBasis(functions.functions(), space);
  // Single unused bits first, then the rest; each by its free bit.
  std::stable_partition(null.begin(), null.end(),
                        [](BitMask d) { return d.popcount() == 1; });

  EchelonBasis hit_span;
  std::vector<BitMask> hits;
  std::vector<BitMask> conflicts;
  for (BitMask d : null) {
    const ConflictVerdict v =
        ConfidentConflict(oracle, space, d, threshold, probe, rng);
    if (v.verdict == Verdict::kHit) {
      hits.push_back(d);
      hit_span.Insert(d);
    } else {
      conflicts.push_back(d);
    }
  }
  for (std::size_t i = 0; i < conflicts.size(); ++i) {
    for (std::size_t j = i + 1; j < conflicts.size(); ++j) {
      const BitMask d = conflicts[i] ^ conflicts[j];
      if (hit_span.Contains(d)) continue;
      const ConflictVerdict v =
          ConfidentConflict(oracle, space, d, threshold, probe, rng);
      if (v.verdict == Verdict::kHit) {
        hits.push_back(d);
        hit_span.Insert(d);
      }
    }
  }

  const std::vector<BitMask>& h_basis = hit_span.rows();
  BitMask support;
  for (BitMask h : h_basis) support |= h;
  RowColMasks out;
  out.col = GreedyBits(h_basis, support.Indices(), h_basis.size());

  std::vector<unsigned> outside = (space & ~support).Indices();
  std::reverse(outside.begin(), outside.end());
  const std::size_t row_rank = null.size() - h_basis.size();
  out.row = GreedyBits(null, outside, row_rank);
  if (config.row_bits) {
    for (unsigned b : outside) {
      if (static_cast<unsigned>(out.row.popcount()) >= *config.row_bits) break;
      if (!out.row.test(b)) out.row |= BitMask::Bit(b);
    }
  }
  return out;
}

DramAddressMapping ValidateAndRepair(DramAddressMapping candidate,
                                     BitMask universe) {
  const std::vector<BitMask> masks = candidate.FunctionMasks();
  for (std::size_t i = 0; i < masks.size(); ++i) {
    for (std::size_t j = i + 1; j < masks.size(); ++j) {
      if (masks[i] == masks[j]) {
        throw Error(ErrorKind::kIrreparableSystem,
                    "function " + FormatMask(masks[i]) + " appears twice");
      }
    }
  }
  const BitMask usable = candidate.UsableBits();
  universe &= usable;
  // Fixed from the incoming masks so the outcome does not depend on the
  // order of the suggestions.
  const unsigned col_top = candidate.col_mask.empty()
                               ? candidate.offset_bits
                               : candidate.col_mask.highest();
  const unsigned row_bottom = candidate.row_mask.empty()
                                  ? candidate.addr_width
                                  : candidate.row_mask.lowest();
  const double boundary = (static_cast<double>(col_top) + row_bottom) / 2;
  const std::size_t max_steps = 64;
  for (std::size_t step = 0; step <= max_steps; ++step) {
    std::vector<BitMask> deficits;
    for (const SubsystemReport& r : InjectivityCheck(candidate, universe)) {
      if (r.injective) continue;
      for (BitMask d : SuggestMissing(r)) deficits.push_back(d);
    }
    if (deficits.empty()) return candidate;
    const BitMask d = deficits.front();
    if (static_cast<double>(d.highest()) >= boundary) {
      candidate.row_mask |= BitMask::Bit(d.highest());
    } else {
      candidate.col_mask |= BitMask::Bit(d.lowest());
    }
  }
  throw Error(ErrorKind::kIrreparableSystem,
              "suggestions exhausted without reaching injectivity");
}

std::vector<RefreshGrouping> GroupByRefresh(AccessOracle& oracle,
                                            const DramAddressMapping& mapping,
                                            const PipelineConfig& config) {
  std::mt19937_64 rng = StageRng(config, 4);
  const ProbeOptions probe = config.EffectiveProbe();
  const BitMask space = AddressSpaceOf(oracle, config);
  const std::vector<BitMask> fns = mapping.FunctionMasks();
  std::optional<double> reference;
  if (config.tREFI_hint) reference = static_cast<double>(*config.tREFI_hint);
  std::vector<RefreshGrouping> out(fns.size());
  for (std::size_t i = 0; i < fns.size(); ++i) {
    const auto d = DualDelta(fns, i, mapping.row_mask);
    if (!d) {
      out[i].notes = "function depends on the others or on row bits";
      continue;
    }
    for (std::size_t j = 0; j < fns.size(); ++j) {
      if (j != i && !(fns[i] & fns[j]).empty()) {
        AppendNote(out[i].notes, "shares bits with " + FormatMask(fns[j]) +
                                     "; tested singly");
        break;
      }
    }
    const PhysAddr a = RandomAddress(space, rng);
    try {
      out[i].verdict =
          ClassifyRefreshInterval(oracle, a, a ^ d->bits, reference, probe);
      out[i].scope = out[i].verdict->classification == RefreshClass::kReduced
                         ? RefreshScope::kInScope
                         : RefreshScope::kOutOfScope;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kNoSpikesDetected) throw;
      AppendNote(out[i].notes, e.what());
    }
  }
  return out;
}

std::vector<ConsecutiveLabel> ClassifyByConsecutive(
    AccessOracle& oracle, const DramAddressMapping& mapping,
    const PipelineConfig& config, const std::vector<RefreshGrouping>* refresh) {
  std::mt19937_64 rng = StageRng(config, 5);
  DeltaProber prober(oracle, config, mapping, rng);
  const std::vector<BitMask> fns = mapping.FunctionMasks();
  std::vector<ConsecutiveLabel> out(fns.size());
  for (std::size_t i = 0; i < fns.size(); ++i) {
    const auto d = DualDelta(fns, i, mapping.row_mask);
    if (!d) {
      out[i].notes = "function depends on the others or on row bits";
      continue;
    }
    std::optional<RefreshClass> verdict;
    if (refresh != nullptr && i < refresh->size() && (*refresh)[i].verdict) {
      verdict = (*refresh)[i].verdict->classification;
    }
    const Signature sig = Interpret(prober.PeakOffset(*d), verdict, config);
    ConsecutiveLabel& l = out[i];
    l.label = sig.Label();
    l.candidates = sig.candidates;
    l.peak_offset = sig.peak_offset;
    l.ambiguous = sig.ambiguous;
    l.confidence = sig.confidence;
    l.notes = sig.notes;
    l.evidence.push_back(Evidence::kConsecutive);
    if (sig.refresh_used) l.evidence.push_back(Evidence::kRefresh);
  }
  return out;
}

RefreshCountEstimate EstimateRefreshFunctionCount(AccessOracle& oracle,
                                                  const PipelineConfig& config,
                                                  std::size_t pairs) {
  std::mt19937_64 rng = StageRng(config, 6);
  ProbeOptions probe = config.EffectiveProbe();
  probe.refresh_rounds = config.refresh_count_rounds;
  const BitMask space = AddressSpaceOf(oracle, config);
  std::optional<double> reference;
  if (config.tREFI_hint) reference = static_cast<double>(*config.tREFI_hint);
  RefreshCountEstimate est;
  for (std::size_t i = 0; i < pairs; ++i) {
    const PhysAddr a = RandomAddress(space, rng);
    const PhysAddr b = RandomAddress(space, rng);
    try {
      const RefreshVerdict v =
          ClassifyRefreshInterval(oracle, a, b, reference, probe);
      ++est.pairs;
      if (v.classification == RefreshClass::kReduced) ++est.reduced;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kNoSpikesDetected) throw;
      ++est.failed;
    }
  }
  if (est.pairs == 0) return est;
  const double n = static_cast<double>(est.pairs);
  const double p = static_cast<double>(est.reduced) / n;
  const double z = 1.96;
  const double denom = 1 + z * z / n;
  const double center = (p + z * z / (2 * n)) / denom;
  const double half =
      z * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom;
  est.p = p;
  est.p_low = std::max(0.0, center - half);
  est.p_high = std::min(1.0, center + half);
  est.k = KFromP(p);
  est.k_low = KFromP(est.p_low);
  est.k_high = KFromP(est.p_high);
  return est;
}

RecoveredMapping Decompose(AccessOracle& oracle, const PipelineConfig& config,
                           const std::vector<BitMask>* supplied) {
  RecoveredMapping result;
  const BitMask space = AddressSpaceOf(oracle, config);

  ThresholdFit fit;
  try {
    fit = CalibrateThreshold(oracle, config);
  } catch (const Error& e) {
    throw StageError("fit_threshold", e);
  }
  result.threshold = fit;

  Gf2System functions;
  Evidence recovered_by = Evidence::kConflict;
  if (supplied != nullptr) {
    functions = Gf2System(*supplied);
    recovered_by = Evidence::kHint;
  } else {
    try {
      functions = RecoverBankFunctions(oracle, config, fit.threshold);
    } catch (const Error& e) {
      throw StageError("recover_bank_functions", e);
    }
  }

  RowColMasks rc;
  try {
    rc = IdentifyRowColBits(oracle, functions, config, fit.threshold);
  } catch (const Error& e) {
    throw StageError("identify_row_col_bits", e);
  }

  DramAddressMapping working;
  working.addr_width = config.addr_width;
  working.offset_bits = config.offset_bits;
  working.row_mask = rc.row;
  working.col_mask = rc.col;
  for (BitMask f : functions.functions()) {
    working.functions.push_back({f, ComponentClass::kUnassigned});
  }
  try {
    const BitMask before = working.row_mask | working.col_mask;
    working = ValidateAndRepair(std::move(working), space);
    const BitMask added = (working.row_mask | working.col_mask) & ~before;
    if (!added.empty()) {
      result.notes.push_back("repair promoted bits " + FormatMask(added));
    }
  } catch (const Error& e) {
    throw StageError("validate_and_repair", e);
  }

  // Learn the flag of component levels from the dual deltas of the working
  // functions. Each stored vector carries its measured level; a new vector
  // that reduces to a lower level against same-level vectors is replaced by
  // that reduction.
  std::mt19937_64 rng = StageRng(config, 7);
  const std::vector<BitMask> fns = working.FunctionMasks();
  struct FlagVector {
    BitMask delta;
    Signature sig;
  };
  std::vector<FlagVector> flag;
  try {
    DeltaProber prober(oracle, config, working, rng);
    std::function<void(BitMask, Signature)> insert = [&](BitMask d,
                                                         Signature sig) {
      std::vector<BitMask> same;
      for (const FlagVector& v : flag) {
        if (v.sig.level == sig.level && same.size() < 4) same.push_back(v.delta);
      }
      for (std::uint32_t s = 1; s < (1u << same.size()); ++s) {
        BitMask c = d;
        for (std::size_t k = 0; k < same.size(); ++k) {
          if (s >> k & 1) c ^= same[k];
        }
        Signature sc = prober.Measure(c);
        if (sc.level < sig.level) {
          insert(c, std::move(sc));
          return;
        }
      }
      flag.push_back({d, std::move(sig)});
    };
    for (std::size_t i = 0; i < fns.size(); ++i) {
      const auto d = DualDelta(fns, i, working.row_mask);
      if (!d) {
        throw Error(ErrorKind::kIrreparableSystem,
                    "no delta isolates " + FormatMask(fns[i]));
      }
      insert(*d, prober.Measure(*d));
    }
  } catch (const Error& e) {
    throw StageError("decompose", e);
  }

  // V_{>=l}: combinations of the working functions vanishing on every flag
  // vector below level l.
  std::set<int, std::greater<>> levels;
  for (const FlagVector& v : flag) levels.insert(v.sig.level);
  auto span_at_least = [&](int level) {
    std::vector<BitMask> rows;
    for (const FlagVector& v : flag) {
      if (v.sig.level >= level) continue;
      BitMask coords;
      for (std::size_t j = 0; j < fns.size(); ++j) {
        if (Parity(fns[j], v.delta.bits)) coords |= BitMask::Bit(j);
      }
      rows.push_back(coords);
    }
    std::vector<BitMask> out;
    for (BitMask c : NullspaceBasis(
             rows, BitMask::Range(0, static_cast<unsigned>(fns.size())))) {
      BitMask f;
      for (unsigned j : c.Indices()) f ^= fns[j];
      out.push_back(f);
    }
    return out;
  };

  DramAddressMapping final_map = working;
  final_map.functions.clear();
  std::vector<BitMask> higher;
  for (int level : levels) {
    const std::vector<BitMask> at_least = span_at_least(level);
    std::vector<BitMask> reps = MinimumWeightCompletion(higher, at_least);
    std::set<ComponentClass> classes;
    bool ambiguous = false;
    bool refresh_used = false;
    double confidence = 1.0;
    std::string notes;
    for (const FlagVector& v : flag) {
      if (v.sig.level != level) continue;
      classes.insert(v.sig.Label());
      ambiguous = ambiguous || v.sig.ambiguous;
      refresh_used = refresh_used || v.sig.refresh_used;
      confidence = std::min(confidence, v.sig.confidence);
      if (!v.sig.notes.empty()) AppendNote(notes, v.sig.notes);
    }
    ComponentClass label = (ambiguous || classes.size() != 1)
                               ? ComponentClass::kUnassigned
                               : *classes.begin();
    Evidence rec = recovered_by;
    if (label == ComponentClass::kChannel &&
        !config.known_channel_functions.empty()) {
      if (SpanEqual(config.known_channel_functions, at_least)) {
        reps = config.known_channel_functions;
        rec = Evidence::kHint;
      } else {
        AppendNote(notes, "channel hints do not match the measured channel span");
      }
    }
    for (BitMask r : reps) {
      final_map.functions.push_back({r, label});
      FunctionProvenance p;
      p.recovered_by = rec;
      if (label != ComponentClass::kUnassigned) {
        p.labeled_by.push_back(Evidence::kConsecutive);
        if (refresh_used) p.labeled_by.push_back(Evidence::kRefresh);
        if (rec == Evidence::kHint) p.labeled_by.push_back(Evidence::kHint);
      }
      p.confidence = label == ComponentClass::kUnassigned ? 0.0 : confidence;
      p.notes = notes;
      result.provenance.push_back(std::move(p));
    }
    higher = at_least;
  }

  if (!IsInjective(final_map)) {
    result.notes.push_back("decomposed basis lost rank; kept the working set");
    final_map = working;
    result.provenance.assign(final_map.functions.size(),
                             FunctionProvenance{recovered_by, {}, 0.0, ""});
  }
  result.mapping = std::move(final_map);
  result.injectivity = InjectivityCheck(result.mapping);

  if (config.refresh_count_pairs > 0) {
    result.refresh_estimate =
        EstimateRefreshFunctionCount(oracle, config, config.refresh_count_pairs);
  }
  return result;
}

bool MappingComparison::AllEqual() const {
  return row_equal && col_equal &&
         std::all_of(classes.begin(), classes.end(),
                     [](const ClassComparison& c) { return c.equal; });
}

MappingComparison CompareMappings(const DramAddressMapping& recovered,
                                  const DramAddressMapping& truth) {
  auto channel_like = [](const DramAddressMapping& m) {
    std::vector<BitMask> out = m.FunctionsOf(ComponentClass::kChannel);
    for (BitMask f : m.FunctionsOf(ComponentClass::kSubChannel)) out.push_back(f);
    return out;
  };
  MappingComparison cmp;
  cmp.classes.push_back(
      {ComponentClass::kChannel, SpanEqual(channel_like(recovered),
                                           channel_like(truth))});
  for (ComponentClass c :
       {ComponentClass::kDimmRank, ComponentClass::kBankGroup,
        ComponentClass::kBankAddress, ComponentClass::kUnassigned}) {
    cmp.classes.push_back(
        {c, SpanEqual(recovered.FunctionsOf(c), truth.FunctionsOf(c))});
  }
  cmp.row_equal = recovered.row_mask == truth.row_mask;
  cmp.col_equal = recovered.col_mask == truth.col_mask;
  return cmp;
}

PipelineConfig LoadPipelineConfig(std::string_view text) {
  PipelineConfig c;
  RdrdHints hints;
  bool hints_off = false;
  bool scope_set = false;
  auto count = [](const kv::Entry& e) {
    const std::int64_t v = kv::Int(e);
    if (v < 0) throw ParseError(e.line, e.key, "must not be negative");
    return static_cast<std::size_t>(v);
  };
  auto optional_cycles = [](const kv::Entry& e) -> std::optional<Cycles> {
    if (e.value == "none") return std::nullopt;
    const Cycles v = kv::Int(e);
    if (v <= 0) throw ParseError(e.line, e.key, "must be positive");
    return v;
  };
  for (const kv::Entry& e : kv::Parse(text)) {
    const std::string& k = e.key;
    if (k == "addr_width") {
      c.addr_width = static_cast<unsigned>(count(e));
    } else if (k == "offset_bits") {
      c.offset_bits = static_cast<unsigned>(count(e));
    } else if (k == "known_channel[]") {
      c.known_channel_functions.push_back(kv::Mask(e));
    } else if (k == "hint_tRDRD") {
      if (e.value != "none") throw ParseError(e.line, k, "only 'none' allowed");
      hints_off = true;
    } else if (k == "hint_tRDRD_sg") {
      hints.sg = kv::Int(e);
    } else if (k == "hint_tRDRD_dg") {
      hints.dg = kv::Int(e);
    } else if (k == "hint_tRDRD_dr") {
      hints.dr = kv::Int(e);
    } else if (k == "hint_tRDRD_dd") {
      hints.dd = kv::Int(e);
    } else if (k == "hint_tRDRD_dc") {
      hints.dc = kv::Int(e);
    } else if (k == "hint_tREFI") {
      c.tREFI_hint = optional_cycles(e);
    } else if (k == "hint_tRFC") {
      c.tRFC_hint = optional_cycles(e);
    } else if (k == "row_bits") {
      c.row_bits = static_cast<unsigned>(count(e));
    } else if (k == "refresh_scope") {
      if (scope_set) throw ParseError(e.line, k, "repeated key");
      scope_set = true;
      c.refresh_scope.clear();
      for (const std::string& name : kv::SplitList(e.value)) {
        const auto cls = ClassFromName(name);
        if (!cls) throw ParseError(e.line, k, "unknown class '" + name + "'");
        c.refresh_scope.push_back(*cls);
      }
    } else if (k == "calibration_pairs") {
      c.calibration_pairs = count(e);
    } else if (k == "screen_rounds") {
      c.screen_rounds = count(e);
    } else if (k == "stall_limit") {
      c.stall_limit = count(e);
    } else if (k == "max_candidates") {
      c.max_candidates = count(e);
    } else if (k == "conflict_rounds") {
      c.probe.conflict_rounds = count(e);
    } else if (k == "refresh_rounds") {
      c.probe.refresh_rounds = count(e);
    } else if (k == "stream_rounds") {
      c.probe.stream_rounds = count(e);
    } else if (k == "stream_elements") {
      c.stream_elements = count(e);
    } else if (k == "min_confidence") {
      c.probe.min_confidence = kv::Real(e);
    } else if (k == "k_sigma") {
      c.probe.k_sigma = kv::Real(e);
    } else if (k == "peak_tolerance") {
      c.peak_tolerance = kv::Real(e);
    } else if (k == "refresh_count_pairs") {
      c.refresh_count_pairs = count(e);
    } else if (k == "refresh_count_rounds") {
      c.refresh_count_rounds = count(e);
    } else if (k == "seed") {
      c.seed = kv::Uint(e);
    } else {
      throw ParseError(e.line, k, "unknown key");
    }
  }
  if (c.addr_width == 0 || c.addr_width > 64 || c.offset_bits >= c.addr_width) {
    throw ParseError(0, "addr_width", "inconsistent width/offset");
  }
  for (BitMask h : c.known_channel_functions) {
    if (h.empty() || !(h & ~c.UsableBits()).empty()) {
      throw ParseError(0, "known_channel[]",
                       "hint " + FormatMask(h) + " outside usable bits");
    }
  }
  c.rdrd_hints = hints_off ? std::nullopt : std::optional<RdrdHints>(hints);
  return c;
}

PipelineConfig LoadPipelineConfigFile(const std::string& path) {
  return LoadPipelineConfig(kv::ReadFile(path));
}

}  // namespace sudoku
