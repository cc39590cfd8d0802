#include "sudoku/simulator.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "sudoku/error.h"
#include "kv.h"

namespace sudoku {
namespace {

constexpr Cycles kNoRefreshYet = std::numeric_limits<Cycles>::min() / 2;
constexpr std::size_t kMaxBankFunctions = 22;

bool AnyOdd(const std::vector<BitMask>& fns, PhysAddr diff) {
  for (BitMask f : fns) {
    if (Parity(f, diff)) return true;
  }
  return false;
}

}  // namespace

void TimingConfig::Validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorKind::kInvalidArgument, what);
  };
  need(clock_period_ns > 0, "clock_period_ns must be positive");
  need(tRCD > 0 && tRP > 0 && tRFC > 0 && tREFI > 0 && base_hit_latency > 0,
       "timing values must be positive");
  need(tRDRD_sg > 0 && tRDRD_dg > 0 && tRDRD_dr > 0 && tRDRD_dd > 0 &&
           tRDRD_dc > 0,
       "tRDRD values must be positive");
  need(tREFI > tRFC, "tREFI must exceed tRFC");
  need(tRDRD_dg <= tRDRD_sg, "tRDRD_dg must not exceed tRDRD_sg");
}

std::vector<Cycles> LatencySeries::Latencies() const {
  std::vector<Cycles> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.latency);
  return out;
}

Simulator::Simulator(DramAddressMapping mapping, SimConfig config)
    : mapping_(std::move(mapping)),
      config_(std::move(config)),
      rng_(config_.noise.seed),
      jitter_(0.0, 1.0),
      unit_(0.0, 1.0) {
  ValidateStructure(mapping_);
  if (!IsInjective(mapping_)) {
    throw Error(ErrorKind::kInvalidMapping, "mapping is not injective");
  }
  config_.timing.Validate();
  const NoiseModel& noise = config_.noise;
  if (!(noise.jitter_sigma >= 0) || !(noise.outlier_prob >= 0) ||
      noise.outlier_prob > 1 || noise.outlier_magnitude < 0) {
    throw Error(ErrorKind::kInvalidArgument, "bad noise model");
  }
  const RefreshMode& refresh = config_.refresh;
  if (refresh.group_classes.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "refresh_group_classes is empty");
  }
  if (refresh.kind == RefreshKind::kAllBank && !refresh.extra_functions.empty()) {
    throw Error(ErrorKind::kInvalidArgument,
                "extra refresh functions need fine-grained refresh");
  }

  for (const auto& f : mapping_.functions) {
    bank_fns_.push_back(f.mask);
    if (std::find(refresh.group_classes.begin(), refresh.group_classes.end(),
                  f.label) != refresh.group_classes.end()) {
      refresh_fns_.push_back(f.mask);
    }
    switch (f.label) {
      case ComponentClass::kChannel:
      case ComponentClass::kSubChannel:
        channel_fns_.push_back(f.mask);
        break;
      case ComponentClass::kDimmRank:
        if (std::find(config_.dimm_functions.begin(),
                      config_.dimm_functions.end(),
                      f.mask) != config_.dimm_functions.end()) {
          dimm_fns_.push_back(f.mask);
        } else {
          rank_fns_.push_back(f.mask);
        }
        break;
      case ComponentClass::kBankGroup:
        group_fns_.push_back(f.mask);
        break;
      default:
        break;
    }
  }
  if (dimm_fns_.size() != config_.dimm_functions.size()) {
    throw Error(ErrorKind::kInvalidArgument,
                "dimm_functions must name dimm_rank functions of the mapping");
  }
  for (BitMask f : refresh.extra_functions) {
    if (f.empty() || !(f & ~mapping_.UsableBits()).empty()) {
      throw Error(ErrorKind::kInvalidArgument, "bad extra refresh function");
    }
    refresh_fns_.push_back(f);
  }
  if (bank_fns_.size() > kMaxBankFunctions || refresh_fns_.size() > 16) {
    throw Error(ErrorKind::kInvalidArgument, "too many functions to simulate");
  }
  banks_.assign(std::size_t{1} << bank_fns_.size(), Bank{});
}

std::uint64_t Simulator::BankIndex(PhysAddr addr) const {
  std::uint64_t index = 0;
  for (std::size_t i = 0; i < bank_fns_.size(); ++i) {
    index |= std::uint64_t{Parity(bank_fns_[i], addr)} << i;
  }
  return index;
}

std::size_t Simulator::RefreshGroup(PhysAddr addr) const {
  std::size_t group = 0;
  for (std::size_t i = 0; i < refresh_fns_.size(); ++i) {
    group |= std::size_t{Parity(refresh_fns_[i], addr)} << i;
  }
  return group;
}

Cycles Simulator::RefreshStart(std::size_t group, std::int64_t n) const {
  const auto groups = static_cast<Cycles>(refresh_group_count());
  const Cycles trefi = config_.timing.tREFI;
  const Cycles phase = trefi * (static_cast<Cycles>(group) + 1) / groups;
  return phase + n * trefi;
}

Cycles Simulator::RefreshWait(std::size_t g, Cycles t,
                              Cycles* last_start) const {
  const Cycles first = RefreshStart(g, 0);
  if (t < first) {
    *last_start = kNoRefreshYet;
    return 0;
  }
  const std::int64_t n = (t - first) / config_.timing.tREFI;
  const Cycles start = RefreshStart(g, n);
  *last_start = start;
  const Cycles end = start + config_.timing.tRFC;
  return t < end ? end - t : 0;
}

Simulator::Relation Simulator::RelationTo(PhysAddr addr) const {
  const PhysAddr diff = addr ^ last_addr_;
  if (AnyOdd(channel_fns_, diff)) return Relation::kDiffChannel;
  if (AnyOdd(dimm_fns_, diff)) return Relation::kDiffDimm;
  if (AnyOdd(rank_fns_, diff)) return Relation::kDiffRank;
  if (AnyOdd(group_fns_, diff)) return Relation::kDiffBankGroup;
  return Relation::kSameBankGroup;
}

Cycles Simulator::SpacingFor(Relation r) const {
  const TimingConfig& t = config_.timing;
  switch (r) {
    case Relation::kSameBankGroup: return t.tRDRD_sg;
    case Relation::kDiffBankGroup: return t.tRDRD_dg;
    case Relation::kDiffRank: return t.tRDRD_dr;
    case Relation::kDiffDimm: return t.tRDRD_dd;
    case Relation::kDiffChannel: return t.tRDRD_dc;
  }
  return t.tRDRD_sg;
}

Cycles Simulator::Noise() {
  const NoiseModel& noise = config_.noise;
  Cycles extra = 0;
  if (noise.jitter_sigma > 0) {
    extra += static_cast<Cycles>(std::llround(jitter_(rng_) * noise.jitter_sigma));
  }
  if (noise.outlier_prob > 0 && unit_(rng_) < noise.outlier_prob) {
    extra += noise.outlier_magnitude;
  }
  return extra;
}

Cycles Simulator::Access(PhysAddr addr, Cycles gap) {
  const TimingConfig& timing = config_.timing;
  gap = std::max<Cycles>(gap, 0);
  const Cycles issue = now_ + gap;

  const Cycles spacing =
      has_last_ ? std::max<Cycles>(0, SpacingFor(RelationTo(addr)) - gap) : 0;

  Cycles last_refresh = kNoRefreshYet;
  const Cycles wait = RefreshWait(RefreshGroup(addr), issue, &last_refresh);
  const Cycles service = issue + wait;

  Bank& bank = banks_[BankIndex(addr)];
  const std::uint64_t row = CompactBits(addr, mapping_.row_mask);
  Cycles array = 0;
  if (bank.epoch != epoch_ || bank.opened_at < last_refresh) {
    array = timing.tRCD;
  } else if (bank.row != row) {
    array = timing.tRP + timing.tRCD;
  }
  bank.epoch = epoch_;
  bank.row = row;
  bank.opened_at = service;

  const Cycles latency = std::max<Cycles>(
      1, timing.base_hit_latency + array + spacing + wait + Noise());
  last_issue_ = issue;
  now_ = issue + latency;
  last_addr_ = addr;
  has_last_ = true;
  return latency;
}

LatencySeries Simulator::RunTrace(std::span<const TraceEntry> trace) {
  LatencySeries series;
  series.samples.reserve(trace.size());
  for (const TraceEntry& e : trace) {
    const Cycles latency = Access(e.addr, e.gap);
    series.samples.push_back({last_issue_, latency});
  }
  return series;
}

void Simulator::CloseAllBanks() {
  ++epoch_;
  has_last_ = false;
}

SimConfig LoadSimConfig(std::string_view text) {
  SimConfig c;
  TimingConfig& t = c.timing;
  bool classes_set = false;
  for (const kv::Entry& e : kv::Parse(text)) {
    const std::string& k = e.key;
    if (k == "clock_period_ns") {
      t.clock_period_ns = kv::Real(e);
    } else if (k == "tRCD") {
      t.tRCD = kv::Int(e);
    } else if (k == "tRP") {
      t.tRP = kv::Int(e);
    } else if (k == "tRFC") {
      t.tRFC = kv::Int(e);
    } else if (k == "tREFI") {
      t.tREFI = kv::Int(e);
    } else if (k == "base_hit_latency") {
      t.base_hit_latency = kv::Int(e);
    } else if (k == "tRDRD_sg") {
      t.tRDRD_sg = kv::Int(e);
    } else if (k == "tRDRD_dg") {
      t.tRDRD_dg = kv::Int(e);
    } else if (k == "tRDRD_dr") {
      t.tRDRD_dr = kv::Int(e);
    } else if (k == "tRDRD_dd") {
      t.tRDRD_dd = kv::Int(e);
    } else if (k == "tRDRD_dc") {
      t.tRDRD_dc = kv::Int(e);
    } else if (k == "refresh_mode") {
      if (e.value == "all_bank") {
        c.refresh.kind = RefreshKind::kAllBank;
      } else if (e.value == "fine_grained") {
        c.refresh.kind = RefreshKind::kFineGrained;
      } else {
        throw ParseError(e.line, k, "expected all_bank or fine_grained");
      }
    } else if (k == "refresh_classes") {
      if (classes_set) throw ParseError(e.line, k, "repeated key");
      classes_set = true;
      c.refresh.group_classes.clear();
      for (const std::string& name : kv::SplitList(e.value)) {
        const auto cls = ClassFromName(name);
        if (!cls || *cls == ComponentClass::kRow ||
            *cls == ComponentClass::kColumn) {
          throw ParseError(e.line, k, "unknown class '" + name + "'");
        }
        c.refresh.group_classes.push_back(*cls);
      }
      if (c.refresh.group_classes.empty()) {
        throw ParseError(e.line, k, "at least one class required");
      }
    } else if (k == "refresh_extra[]") {
      c.refresh.extra_functions.push_back(kv::Mask(e));
    } else if (k == "dimm_function[]") {
      c.dimm_functions.push_back(kv::Mask(e));
    } else if (k == "jitter_sigma") {
      c.noise.jitter_sigma = kv::Real(e);
    } else if (k == "outlier_prob") {
      c.noise.outlier_prob = kv::Real(e);
    } else if (k == "outlier_magnitude") {
      c.noise.outlier_magnitude = kv::Int(e);
    } else if (k == "noise_seed") {
      c.noise.seed = kv::Uint(e);
    } else {
      throw ParseError(e.line, k, "unknown key");
    }
  }
  try {
    c.timing.Validate();
  } catch (const Error& err) {
    throw ParseError(0, "timing", err.what());
  }
  return c;
}

std::string StoreSimConfig(const SimConfig& c) {
  const TimingConfig& t = c.timing;
  std::ostringstream out;
  out << "clock_period_ns = " << kv::FormatReal(t.clock_period_ns) << "\n"
      << "tRCD = " << t.tRCD << "\n"
      << "tRP = " << t.tRP << "\n"
      << "tRFC = " << t.tRFC << "\n"
      << "tREFI = " << t.tREFI << "\n"
      << "base_hit_latency = " << t.base_hit_latency << "\n"
      << "tRDRD_sg = " << t.tRDRD_sg << "\n"
      << "tRDRD_dg = " << t.tRDRD_dg << "\n"
      << "tRDRD_dr = " << t.tRDRD_dr << "\n"
      << "tRDRD_dd = " << t.tRDRD_dd << "\n"
      << "tRDRD_dc = " << t.tRDRD_dc << "\n";
  out << "refresh_mode = "
      << (c.refresh.kind == RefreshKind::kAllBank ? "all_bank" : "fine_grained")
      << "\n";
  out << "refresh_classes = ";
  for (std::size_t i = 0; i < c.refresh.group_classes.size(); ++i) {
    out << (i ? "," : "") << ClassName(c.refresh.group_classes[i]);
  }
  out << "\n";
  for (BitMask f : c.refresh.extra_functions) {
    out << "refresh_extra[] = " << FormatMask(f) << "\n";
  }
  for (BitMask f : c.dimm_functions) {
    out << "dimm_function[] = " << FormatMask(f) << "\n";
  }
  out << "jitter_sigma = " << kv::FormatReal(c.noise.jitter_sigma) << "\n"
      << "outlier_prob = " << kv::FormatReal(c.noise.outlier_prob) << "\n"
      << "outlier_magnitude = " << c.noise.outlier_magnitude << "\n"
      << "noise_seed = " << c.noise.seed << "\n";
  return out.str();
}

SimConfig LoadSimConfigFile(const std::string& path) {
  return LoadSimConfig(kv::ReadFile(path));
}

void WriteTraceCsv(const LatencySeries& series, std::ostream& out) {
  out << "index,timestamp_cycles,latency_cycles\n";
  for (std::size_t i = 0; i < series.samples.size(); ++i) {
    out << i << ',' << series.samples[i].timestamp << ','
        << series.samples[i].latency << '\n';
  }
}

}  // namespace sudoku
