// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance_test [--runs N] [--only C]
//
// --runs scales the seeded repetitions down from 100 for quick checks; the
// pass bars scale with it. The exit status is 0 when every criterion passes
// or fails only for a proven mathematical reason (reported as such).

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "sudoku/error.h"
#include "sudoku/gf2.h"
#include "sudoku/ground_truth.h"
#include "sudoku/mapping.h"
#include "sudoku/pipeline.h"
#include "sudoku/probe.h"
#include "sudoku/simulator.h"

namespace sudoku {
namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  // Fails, but only where the requirement contradicts proven algebra.
  bool known_limitation = false;
  std::string detail;
};

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

// Pass bar of `per100` successes out of 100, scaled to `runs`.
std::size_t Bar(std::size_t per100, std::size_t runs) {
  return (per100 * runs + 99) / 100;
}

SimConfig Noise2(std::uint64_t seed) {
  SimConfig c;
  c.noise.jitter_sigma = 2;
  c.noise.seed = seed;
  return c;
}

PipelineConfig ConfigFor(const DramAddressMapping& truth, std::uint64_t seed) {
  PipelineConfig c;
  c.row_bits = static_cast<unsigned>(truth.row_mask.popcount());
  c.seed = seed;
  return c;
}

ComponentClass Merged(ComponentClass c) {
  return c == ComponentClass::kSubChannel ? ComponentClass::kChannel : c;
}

// The DIMM select of a 2DPC configuration: its first DimmRank function.
std::vector<BitMask> DimmFunctions(const DramAddressMapping& m) {
  const std::vector<BitMask> dr = m.FunctionsOf(ComponentClass::kDimmRank);
  if (dr.size() < 2) return {};
  return {dr.front()};
}

Outcome RoundTrip(std::size_t runs) {
  Outcome o;
  o.pass = true;
  double slowest = 0;
  std::size_t worst = runs;
  std::ostringstream detail;
  for (const NamedMapping& nm : GroundTruthMappings()) {
    std::size_t ok = 0;
    for (std::uint64_t seed = 1; seed <= runs; ++seed) {
      const auto start = Clock::now();
      try {
        SimulatorOracle oracle(nm.mapping, Noise2(seed), seed);
        const RecoveredMapping r =
            Decompose(oracle, ConfigFor(nm.mapping, seed));
        if (CompareMappings(r.mapping, nm.mapping).AllEqual()) ++ok;
      } catch (const Error&) {
      }
      slowest = std::max(slowest, Seconds(start));
    }
    worst = std::min(worst, ok);
    if (ok < Bar(95, runs)) {
      o.pass = false;
      detail << nm.name << " " << ok << "/" << runs << "; ";
    }
  }
  if (slowest > 60) o.pass = false;
  detail << "worst configuration " << worst << "/" << runs << "; slowest run "
         << slowest << " s";
  o.detail = detail.str();
  return o;
}

Outcome Injectivity() {
  const auto start = Clock::now();
  Outcome o;
  std::size_t deletions = 0, detected = 0, repaired = 0;
  std::vector<std::string> redundant;
  bool all_injective = true, all_redundant = true;
  for (const NamedMapping& nm : GroundTruthMappings()) {
    all_injective = all_injective && IsInjective(nm.mapping);
    const BitMask universe = nm.mapping.BitUniverse();
    for (std::size_t i = 0; i < nm.mapping.functions.size(); ++i) {
      ++deletions;
      DramAddressMapping m = nm.mapping;
      const BitMask removed = m.functions[i].mask;
      m.functions.erase(m.functions.begin() + static_cast<long>(i));
      bool found = false;
      for (const SubsystemReport& r : InjectivityCheck(m, universe)) {
        if (r.injective) continue;
        bool annihilated = !(r.bits & removed).empty();
        for (BitMask d : SuggestMissing(r)) {
          for (BitMask f : r.subsystem.functions()) {
            annihilated = annihilated && Parity(f, d.bits) == 0;
          }
        }
        found = found || annihilated;
      }
      if (found) {
        ++detected;
      } else {
        EchelonBasis rest;
        for (BitMask f : InjectivitySystem(m).functions()) rest.Insert(f);
        if (rest.Contains(removed)) {
          redundant.push_back(nm.name + " without " + FormatMask(removed));
        } else {
          all_redundant = false;
        }
      }
      try {
        if (IsInjective(ValidateAndRepair(m, universe), universe)) ++repaired;
      } catch (const Error&) {
      }
    }
  }
  const double secs = Seconds(start);
  o.pass = all_injective && detected == deletions && repaired == deletions &&
           secs <= 10;
  o.known_limitation = !o.pass && all_injective && repaired == deletions &&
                       secs <= 10 && all_redundant;
  std::ostringstream detail;
  detail << "12 mappings " << (all_injective ? "injective" : "NOT injective")
         << "; " << detected << "/" << deletions
         << " deletions detected; " << repaired << "/" << deletions
         << " repaired; " << secs << " s";
  for (const std::string& r : redundant) {
    detail << "; still injective: " << r
           << " (the mask lies in the span of the remaining functions and "
              "row/column bits, so no deletion verdict exists)";
  }
  o.detail = detail.str();
  return o;
}

Outcome RefreshClassification() {
  const DramAddressMapping& truth = GroundTruth("intel_a_1ch_1dpc");
  SimConfig c = Noise2(31);
  c.refresh.kind = RefreshKind::kFineGrained;
  c.refresh.group_classes = {ComponentClass::kChannel};
  const BitMask split(0x2A00);
  c.refresh.extra_functions = {split};
  SimulatorOracle oracle(truth, c, 31);
  const ProbeOptions probe = PipelineConfig{}.EffectiveProbe();
  std::mt19937_64 rng(31);
  std::size_t same_ok = 0, cross_ok = 0;
  for (int cross = 0; cross < 2; ++cross) {
    for (int i = 0; i < 200; ++i) {
      const PhysAddr a = RandomAddress(truth.BitUniverse(), rng);
      PhysAddr b = RandomAddress(truth.BitUniverse(), rng);
      if (Parity(split, a ^ b) != static_cast<unsigned>(cross)) b ^= 0x200;
      try {
        const RefreshVerdict v =
            ClassifyRefreshInterval(oracle, a, b, 9360.0, probe);
        const bool reduced = v.classification == RefreshClass::kReduced;
        if (cross == 1 && reduced) ++cross_ok;
        if (cross == 0 && !reduced) ++same_ok;
      } catch (const Error&) {
      }
    }
  }
  Outcome o;
  o.pass = same_ok >= 198 && cross_ok >= 198;
  o.detail = "same-group Normal " + std::to_string(same_ok) +
             "/200, cross-group Reduced " + std::to_string(cross_ok) + "/200";
  return o;
}

Outcome RefreshCount(std::size_t runs) {
  const DramAddressMapping& truth = GroundTruth("intel_a_1ch_1dpc");
  const std::vector<BitMask> pool = {BitMask(0x88000), BitMask(0x2A00),
                                     BitMask(0x124044000)};
  Outcome o;
  o.pass = true;
  std::ostringstream detail;
  for (int k = 0; k <= 3; ++k) {
    std::size_t ok = 0;
    for (std::uint64_t seed = 1; seed <= runs; ++seed) {
      SimConfig c = Noise2(seed);
      c.refresh.group_classes = {ComponentClass::kChannel};
      if (k > 0) {
        c.refresh.kind = RefreshKind::kFineGrained;
        c.refresh.extra_functions.assign(pool.begin(), pool.begin() + k);
      }
      SimulatorOracle oracle(truth, c, seed);
      PipelineConfig config = ConfigFor(truth, seed);
      config.refresh_count_rounds = 400;
      try {
        if (EstimateRefreshFunctionCount(oracle, config, 500).k == k) ++ok;
      } catch (const Error&) {
      }
    }
    if (ok < Bar(95, runs)) o.pass = false;
    detail << "k=" << k << " " << ok << "/" << runs << (k < 3 ? "; " : "");
  }
  o.detail = detail.str();
  return o;
}

Outcome ConsecutiveSeparation(std::size_t runs) {
  Outcome o;
  o.pass = true;
  std::ostringstream detail;
  std::size_t worst = runs;
  for (const NamedMapping& nm : GroundTruthMappings()) {
    std::size_t ok = 0;
    for (std::uint64_t seed = 1; seed <= runs; ++seed) {
      SimConfig c = Noise2(seed);
      c.dimm_functions = DimmFunctions(nm.mapping);
      SimulatorOracle oracle(nm.mapping, c, seed);
      const PipelineConfig config = ConfigFor(nm.mapping, seed);
      try {
        const auto groups = GroupByRefresh(oracle, nm.mapping, config);
        const auto labels =
            ClassifyByConsecutive(oracle, nm.mapping, config, &groups);
        bool all = true;
        for (std::size_t i = 0; i < labels.size(); ++i) {
          all = all && labels[i].label == Merged(nm.mapping.functions[i].label);
        }
        if (all) ++ok;
      } catch (const Error&) {
      }
    }
    worst = std::min(worst, ok);
    if (ok < Bar(95, runs)) {
      o.pass = false;
      detail << nm.name << " " << ok << "/" << runs << "; ";
    }
  }
  detail << "worst mapping " << worst << "/" << runs;

  // dr == dd: both DIMM and rank functions collapse into DimmRank.
  std::size_t merged_ok = 0, merged_total = 0;
  bool repeatable = true;
  for (const NamedMapping& nm : GroundTruthMappings()) {
    if (DimmFunctions(nm.mapping).empty()) continue;
    for (std::uint64_t seed = 1; seed <= std::max<std::size_t>(runs / 10, 2);
         ++seed) {
      auto labels_for = [&] {
        SimConfig c = Noise2(seed);
        c.timing.tRDRD_dd = c.timing.tRDRD_dr;
        c.dimm_functions = DimmFunctions(nm.mapping);
        SimulatorOracle oracle(nm.mapping, c, seed);
        PipelineConfig config = ConfigFor(nm.mapping, seed);
        config.rdrd_hints->dd = config.rdrd_hints->dr;
        const auto groups = GroupByRefresh(oracle, nm.mapping, config);
        std::vector<ComponentClass> out;
        for (const auto& l :
             ClassifyByConsecutive(oracle, nm.mapping, config, &groups)) {
          out.push_back(l.label);
        }
        return out;
      };
      ++merged_total;
      try {
        const auto labels = labels_for();
        repeatable = repeatable && labels == labels_for();
        bool all = true;
        for (std::size_t i = 0; i < labels.size(); ++i) {
          if (nm.mapping.functions[i].label == ComponentClass::kDimmRank) {
            all = all && labels[i] == ComponentClass::kDimmRank;
          }
        }
        if (all) ++merged_ok;
      } catch (const Error&) {
      }
    }
  }
  if (merged_ok != merged_total || !repeatable) o.pass = false;
  detail << "; dr=dd merged DimmRank " << merged_ok << "/" << merged_total
         << (repeatable ? ", repeatable" : ", NOT repeatable");
  o.detail = detail.str();
  return o;
}

struct CoordHash {
  std::size_t operator()(const DramCoordinate& c) const {
    std::uint64_t h = c.row * 0x9E3779B97F4A7C15ull;
    for (std::uint64_t v : {c.column, c.channel, c.subchannel, c.dimm_rank,
                            c.bank_group, c.bank_address, c.unassigned}) {
      h = (h ^ v) * 0x100000001B3ull + 0x7F4A7C15ull;
    }
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

// Distinct sampled addresses that decode to one coordinate.
bool ScanFindsCollision(const DramAddressMapping& m, BitMask universe,
                        std::mt19937_64& rng) {
  std::unordered_set<PhysAddr> seen_addr;
  std::unordered_set<DramCoordinate, CoordHash> seen;
  seen_addr.reserve(1 << 21);
  seen.reserve(1 << 21);
  for (std::size_t i = 0; i < (std::size_t{1} << 20); ++i) {
    const PhysAddr a = RandomAddress(universe, rng);
    if (!seen_addr.insert(a).second) continue;
    if (!seen.insert(Decode(m, a)).second) return true;
  }
  return false;
}

Outcome BruteForceDecode() {
  Outcome o;
  o.pass = true;
  std::mt19937_64 rng(61);
  std::size_t scanned = 0, exhibited = 0, non_injective = 0;
  double slowest = 0;
  for (const NamedMapping& nm : GroundTruthMappings()) {
    const BitMask universe = nm.mapping.BitUniverse();
    std::vector<DramAddressMapping> cases = {nm.mapping};
    for (std::size_t i = 0; i < nm.mapping.functions.size(); ++i) {
      DramAddressMapping m = nm.mapping;
      m.functions.erase(m.functions.begin() + static_cast<long>(i));
      cases.push_back(m);
    }
    for (const DramAddressMapping& m : cases) {
      const auto start = Clock::now();
      if (IsInjective(m, universe)) {
        ++scanned;
        if (ScanFindsCollision(m, universe, rng)) o.pass = false;
      } else {
        ++non_injective;
        for (const SubsystemReport& r : InjectivityCheck(m, universe)) {
          if (r.injective) continue;
          const BitMask d = SuggestMissing(r).front();
          const PhysAddr a = RandomAddress(universe, rng);
          if (d.empty() || Decode(m, a) != Decode(m, a ^ d.bits)) {
            o.pass = false;
          } else {
            ++exhibited;
          }
          break;
        }
      }
      slowest = std::max(slowest, Seconds(start));
    }
  }
  if (exhibited != non_injective || slowest > 30) o.pass = false;
  o.detail = std::to_string(scanned) +
             " injective mappings scanned with 2^20 samples; colliding pair "
             "exhibited for " +
             std::to_string(exhibited) + "/" + std::to_string(non_injective) +
             " non-injective; slowest " + std::to_string(slowest) + " s";
  return o;
}

// Every vector of the universe by Gray code: kernel size of `rows` and
// whether some vector hits `target` parities.
void Enumerate(const std::vector<BitMask>& rows, BitMask universe,
               std::uint64_t target, std::uint64_t* kernel, bool* hits) {
  const std::vector<unsigned> bits = universe.Indices();
  std::vector<std::uint64_t> syndrome(bits.size(), 0);
  for (std::size_t j = 0; j < bits.size(); ++j) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].test(bits[j])) syndrome[j] |= std::uint64_t{1} << i;
    }
  }
  std::uint64_t s = 0;
  *kernel = 1;
  *hits = target == 0;
  const std::uint64_t n = std::uint64_t{1} << bits.size();
  for (std::uint64_t g = 1; g < n; ++g) {
    s ^= syndrome[static_cast<std::size_t>(std::countr_zero(g))];
    if (s == 0) ++*kernel;
    if (s == target) *hits = true;
  }
}

Outcome Gf2Properties() {
  std::mt19937_64 rng(71);
  std::size_t failures = 0;
  const std::size_t cases = 10000;
  for (std::size_t t = 0; t < cases; ++t) {
    const unsigned n = 1 + static_cast<unsigned>(rng() % 20);
    const unsigned lo = static_cast<unsigned>(rng() % (64 - n));
    BitMask universe;
    // A scattered universe of n bits inside [lo, 64).
    while (universe.popcount() < static_cast<int>(n)) {
      universe |= BitMask(std::uint64_t{1} << (lo + rng() % (64 - lo)));
    }
    const std::size_t m = rng() % (n + 3);
    std::vector<BitMask> rows;
    for (std::size_t i = 0; i < m; ++i) {
      // Sparse or dense at random.
      std::uint64_t v = rng() & universe.bits;
      if (rng() % 2) v &= rng();
      rows.push_back(BitMask(v));
    }
    bool ok = true;

    const PhysAddr a = rng() & universe.bits, b = rng() & universe.bits;
    for (BitMask f : rows) {
      ok = ok && Parity(f, a ^ b) == (Parity(f, a) ^ Parity(f, b));
    }

    const std::size_t rank = Rank(rows);
    const std::vector<BitMask> null = NullspaceBasis(rows, universe);
    ok = ok && rank + null.size() == n && Rank(null) == null.size();
    for (BitMask d : null) {
      ok = ok && (d & ~universe).empty();
      for (BitMask f : rows) ok = ok && Parity(f, d.bits) == 0;
    }

    std::vector<Constraint> constraints;
    std::uint64_t target = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const unsigned want = static_cast<unsigned>(rng() % 2);
      constraints.push_back({rows[i], want});
      target |= std::uint64_t{want} << i;
    }
    std::uint64_t kernel = 0;
    bool hits = false;
    Enumerate(rows, universe, target, &kernel, &hits);
    ok = ok && kernel == (std::uint64_t{1} << (n - rank));
    const std::optional<BitMask> sol = SolveDelta(constraints);
    ok = ok && sol.has_value() == hits;
    if (sol) {
      for (const Constraint& c : constraints) {
        ok = ok && Parity(c.mask, sol->bits) == c.target;
      }
    }

    // Another basis of the same span, then a third; plus one extra vector.
    std::vector<BitMask> other = rows, third;
    for (std::size_t i = 0; i + 1 < other.size(); ++i) {
      if (rng() % 2) other[i] ^= other[i + 1];
    }
    std::reverse(other.begin(), other.end());
    third = other;
    if (!third.empty()) third.push_back(third.front() ^ third.back());
    ok = ok && SpanEqual(rows, rows) && SpanEqual(rows, other) &&
         SpanEqual(other, rows) && SpanEqual(other, third) &&
         SpanEqual(rows, third);
    if (!null.empty() && rank < n) {
      // A vector outside the row space: not annihilated by some null vector.
      for (unsigned bit : universe.Indices()) {
        const BitMask e(std::uint64_t{1} << bit);
        bool outside = false;
        for (BitMask d : null) outside = outside || Parity(e, d.bits) == 1;
        if (!outside) continue;
        std::vector<BitMask> grown = rows;
        grown.push_back(e);
        ok = ok && !SpanEqual(rows, grown) && !SpanEqual(grown, rows);
        break;
      }
    }
    if (!ok) ++failures;
  }
  Outcome o;
  o.pass = failures == 0;
  o.detail = std::to_string(cases - failures) + "/" + std::to_string(cases) +
             " randomized cases, exhaustive enumeration up to 20 bits";
  return o;
}

std::string Slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome CliDeterminism() {
  namespace fs = std::filesystem;
  const fs::path dir =
      fs::temp_directory_path() / ("sudoku_accept_" + std::to_string(getpid()));
  fs::create_directories(dir);
  const std::string map =
      std::string(SUDOKU_DATA_DIR) + "/mappings/intel_a_2ch_2dpc.map";
  std::ofstream(dir / "t.tim") << "jitter_sigma = 2\noutlier_prob = 0.001\n";
  std::ofstream(dir / "c.cfg") << "row_bits = 17\nrefresh_count_pairs = 20\n";
  const std::string tim = (dir / "t.tim").string();
  const std::string cfg = (dir / "c.cfg").string();
  const std::string rep = (dir / "r.json").string();
  const std::vector<std::string> commands = {
      "simulate --mapping " + map + " --timing " + tim +
          " --trace pair:0x0,0x210000,2000 --seed 7",
      "simulate --mapping " + map + " --timing " + tim +
          " --trace streams:0x0+0x40,0x5400+0x5440,3000 --seed 7",
      "recover --mapping " + map + " --timing " + tim + " --config " + cfg +
          " --seed 7",
      "decompose --mapping " + map + " --timing " + tim + " --config " + cfg +
          " --seed 7",
      "decompose --mapping " + map + " --timing " + tim + " --config " + cfg +
          " --seed 7 --format csv",
      "decompose --mapping " + map + " --timing " + tim + " --config " + cfg +
          " --seed 7 --out " + rep,
      "verify --report " + rep + " --mapping " + map,
      "report --report " + rep + " --format csv",
  };
  std::size_t same = 0;
  for (const std::string& args : commands) {
    std::string outputs[2];
    for (std::string& out : outputs) {
      const std::string cmd = std::string(SUDOKU_CLI) + " " + args + " > " +
                              (dir / "stdout").string() + " 2>&1";
      const int status = std::system(cmd.c_str());
      out = std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : -1) +
            "\n" + Slurp(dir / "stdout");
      if (args.find("--out") != std::string::npos) out += Slurp(rep);
    }
    if (outputs[0] == outputs[1] && outputs[0].size() > 2) ++same;
  }
  fs::remove_all(dir);
  Outcome o;
  o.pass = same == commands.size();
  o.detail = std::to_string(same) + "/" + std::to_string(commands.size()) +
             " commands byte-identical on repeat";
  return o;
}

}  // namespace
}  // namespace sudoku

int main(int argc, char** argv) {
  using namespace sudoku;
  std::size_t runs = 100;
  int only = 0;
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--runs") runs = std::strtoul(argv[i + 1], nullptr, 10);
    if (flag == "--only") only = std::atoi(argv[i + 1]);
  }
  if (runs == 0) runs = 1;
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, [&] { return RoundTrip(runs); }},
      {2, Injectivity},
      {3, RefreshClassification},
      {4, [&] { return RefreshCount(runs); }},
      {5, [&] { return ConsecutiveSeparation(runs); }},
      {6, BruteForceDecode},
      {7, Gf2Properties},
      {8, CliDeterminism},
  };
  int status = 0;
  for (const auto& [id, run] : criteria) {
    if (only != 0 && only != id) continue;
    const auto start = Clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.detail = std::string("exception: ") + e.what();
    }
    std::cout << "criterion " << id << " " << (o.pass ? "PASS" : "FAIL")
              << (o.known_limitation ? " (known limitation)" : "") << ": "
              << o.detail << " [" << Seconds(start) << " s]" << std::endl;
    if (!o.pass && !o.known_limitation) status = 1;
  }
  return status;
}
