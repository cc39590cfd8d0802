// Command-line front end for the simulator and the recovery pipeline.
//
// Exit codes: 0 success, 1 partial result (functions left unassigned, or a
// verify mismatch), 2 usage or parse error, 3 the pipeline itself failed.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sudoku/error.h"
#include "sudoku/mapping.h"
#include "sudoku/pipeline.h"
#include "sudoku/probe.h"
#include "sudoku/report.h"
#include "sudoku/simulator.h"

namespace {

using namespace sudoku;

constexpr int kExitOk = 0;
constexpr int kExitPartial = 1;
constexpr int kExitUsage = 2;
constexpr int kExitFailed = 3;

struct Options {
  std::string mapping;
  std::string timing;
  std::string config;
  std::string functions;
  std::string report;
  std::string trace;
  std::string histogram;
  std::string out;
  std::string format = "json";
  std::uint64_t seed = 1;
};

std::string ReadText(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(0, path, "cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteText(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kInvalidArgument, "cannot write " + path);
  out << text;
}

SimConfig LoadTiming(const Options& o) {
  SimConfig c = o.timing.empty() ? SimConfig{} : LoadSimConfigFile(o.timing);
  c.noise.seed ^= o.seed;
  return c;
}

PipelineConfig LoadConfig(const Options& o) {
  PipelineConfig c =
      o.config.empty() ? PipelineConfig{} : LoadPipelineConfigFile(o.config);
  c.seed = o.seed;
  return c;
}

PhysAddr ParseAddr(const std::string& text) {
  const auto m = ParseMask(text);
  if (!m) throw ParseError(0, "trace", "bad address '" + text + "'");
  return m->bits;
}

std::size_t ParseCount(const std::string& text) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(text, &used);
    if (used == text.size()) return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
  }
  throw ParseError(0, "trace", "bad count '" + text + "'");
}

std::vector<std::string> Split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

std::vector<PhysAddr> ParseStream(const std::string& text) {
  std::vector<PhysAddr> out;
  for (const std::string& a : Split(text, '+')) out.push_back(ParseAddr(a));
  if (out.empty()) throw ParseError(0, "trace", "empty stream");
  return out;
}

// pair:A,B,ROUNDS[,GAP] | streams:A1+A2..,B1+B2..,ROUNDS | file:PATH
LatencySeries RunTraceSpec(SimulatorOracle& oracle, const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) {
    throw ParseError(0, "trace", "expected pair:, streams: or file:");
  }
  const std::string kind = spec.substr(0, colon);
  const std::string body = spec.substr(colon + 1);
  if (kind == "pair") {
    const auto parts = Split(body, ',');
    if (parts.size() != 3 && parts.size() != 4) {
      throw ParseError(0, "trace", "pair:A,B,ROUNDS[,GAP]");
    }
    const Cycles gap = parts.size() == 4
                           ? static_cast<Cycles>(ParseCount(parts[3]))
                           : kDefaultPairGap;
    return oracle.TimePair(ParseAddr(parts[0]), ParseAddr(parts[1]),
                           ParseCount(parts[2]), gap);
  }
  if (kind == "streams") {
    const auto parts = Split(body, ',');
    if (parts.size() != 3) {
      throw ParseError(0, "trace", "streams:A1+A2..,B1+B2..,ROUNDS");
    }
    const std::vector<PhysAddr> a = ParseStream(parts[0]);
    const std::vector<PhysAddr> b = ParseStream(parts[1]);
    return oracle.TimeStreams(a, b, ParseCount(parts[2]));
  }
  if (kind == "file") {
    // One access per line: ADDR[,GAP]; gap defaults to 0.
    std::vector<TraceEntry> trace;
    std::stringstream in(ReadText(body));
    std::string line;
    while (std::getline(in, line)) {
      if (const auto hash = line.find('#'); hash != std::string::npos) {
        line.resize(hash);
      }
      line.erase(0, line.find_first_not_of(" \t\r"));
      line.erase(line.find_last_not_of(" \t\r") + 1);
      if (line.empty()) continue;
      const auto parts = Split(line, ',');
      TraceEntry e;
      e.addr = ParseAddr(parts[0]);
      if (parts.size() > 1) e.gap = static_cast<Cycles>(ParseCount(parts[1]));
      trace.push_back(e);
    }
    Simulator sim = oracle.simulator();
    return sim.RunTrace(trace);
  }
  throw ParseError(0, "trace", "unknown trace kind '" + kind + "'");
}

int Simulate(const Options& o) {
  const DramAddressMapping truth = LoadMappingFile(o.mapping);
  SimulatorOracle oracle(truth, LoadTiming(o), o.seed);
  const LatencySeries series = RunTraceSpec(oracle, o.trace);
  std::ostringstream csv;
  WriteTraceCsv(series, csv);
  WriteText(o.out, csv.str());
  if (!o.histogram.empty()) {
    std::ostringstream hist;
    WriteHistogramCsv(HistogramOf(series), hist);
    WriteText(o.histogram, hist.str());
  }
  return kExitOk;
}

void Emit(const Options& o, const RecoveredMapping& result) {
  if (o.format == "csv") {
    std::ostringstream csv;
    WriteReportCsv(result, csv);
    WriteText(o.out, csv.str());
  } else {
    WriteText(o.out, ReportToJson(result));
  }
}

int Recover(const Options& o) {
  const DramAddressMapping truth = LoadMappingFile(o.mapping);
  const PipelineConfig config = LoadConfig(o);
  SimulatorOracle oracle(truth, LoadTiming(o), o.seed);
  RecoveredMapping result;
  const ThresholdFit fit = CalibrateThreshold(oracle, config);
  const Gf2System fns = RecoverBankFunctions(oracle, config, fit.threshold);
  const RowColMasks rc = IdentifyRowColBits(oracle, fns, config, fit.threshold);
  DramAddressMapping m;
  m.addr_width = config.addr_width;
  m.offset_bits = config.offset_bits;
  m.row_mask = rc.row;
  m.col_mask = rc.col;
  for (BitMask f : fns.functions()) {
    m.functions.push_back({f, ComponentClass::kUnassigned});
  }
  result.mapping = ValidateAndRepair(std::move(m),
                                     oracle.AddressSpace() & config.UsableBits());
  result.provenance.assign(result.mapping.functions.size(),
                           FunctionProvenance{});
  result.threshold = fit;
  result.injectivity = InjectivityCheck(result.mapping);
  result.accesses = oracle.accesses();
  Emit(o, result);
  return kExitOk;
}

int DecomposeCmd(const Options& o) {
  const DramAddressMapping truth = LoadMappingFile(o.mapping);
  const PipelineConfig config = LoadConfig(o);
  const SimConfig timing = LoadTiming(o);
  std::vector<BitMask> supplied;
  if (!o.functions.empty()) supplied = LoadMappingFile(o.functions).FunctionMasks();
  SimulatorOracle oracle(truth, timing, o.seed);
  RecoveredMapping result =
      Decompose(oracle, config, o.functions.empty() ? nullptr : &supplied);
  result.accesses = oracle.accesses();
  Emit(o, result);
  if (!result.FullyLabeled()) {
    for (std::size_t i = 0; i < result.mapping.functions.size(); ++i) {
      const AddressingFunction& f = result.mapping.functions[i];
      if (f.label != ComponentClass::kUnassigned) continue;
      std::cerr << "unassigned " << FormatMask(f.mask);
      if (i < result.provenance.size() && !result.provenance[i].notes.empty()) {
        std::cerr << ": " << result.provenance[i].notes;
      }
      std::cerr << '\n';
    }
    return kExitPartial;
  }
  return kExitOk;
}

int Verify(const Options& o) {
  const RecoveredMapping recovered = LoadReportFile(o.report);
  const DramAddressMapping truth = LoadMappingFile(o.mapping);
  const MappingComparison cmp = CompareMappings(recovered.mapping, truth);
  std::ostringstream text;
  for (const ClassComparison& c : cmp.classes) {
    text << ClassName(c.cls) << ' ' << (c.equal ? "PASS" : "FAIL") << '\n';
  }
  text << "row " << (cmp.row_equal ? "PASS" : "FAIL") << '\n';
  text << "column " << (cmp.col_equal ? "PASS" : "FAIL") << '\n';
  WriteText(o.out, text.str());
  return cmp.AllEqual() ? kExitOk : kExitPartial;
}

int Report(const Options& o) {
  Emit(o, LoadReportFile(o.report));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DRAM address mapping simulator and recovery pipeline"};
  app.require_subcommand(1, 1);
  Options o;

  auto add_common = [&o](CLI::App* cmd) {
    cmd->add_option("--seed", o.seed, "Seed for every random choice");
    cmd->add_option("--out", o.out, "Output file (stdout when omitted)");
  };
  auto add_format = [&o](CLI::App* cmd) {
    cmd->add_option("--format", o.format, "Report format")
        ->check(CLI::IsMember({"json", "csv"}));
  };

  CLI::App* sim = app.add_subcommand("simulate", "Run a trace on a mapping");
  sim->add_option("--mapping", o.mapping, "Ground-truth mapping")->required();
  sim->add_option("--timing", o.timing, "Timing/refresh/noise config");
  sim->add_option("--trace", o.trace,
                  "pair:A,B,ROUNDS[,GAP] | streams:A1+A2,B1+B2,ROUNDS | "
                  "file:PATH")
      ->required();
  sim->add_option("--histogram", o.histogram, "Also write a latency histogram");
  add_common(sim);

  CLI::App* rec = app.add_subcommand("recover", "Recover functions and rows");
  CLI::App* dec = app.add_subcommand("decompose", "Full pipeline");
  for (CLI::App* cmd : {rec, dec}) {
    cmd->add_option("--mapping", o.mapping, "Simulator ground truth")
        ->required();
    cmd->add_option("--timing", o.timing, "Timing/refresh/noise config");
    cmd->add_option("--config", o.config, "Pipeline config");
    add_common(cmd);
    add_format(cmd);
  }
  dec->add_option("--functions", o.functions,
                  "Mapping file whose functions replace recovery");

  CLI::App* ver = app.add_subcommand("verify", "Compare a report to truth");
  ver->add_option("--report", o.report, "Pipeline report")->required();
  ver->add_option("--mapping", o.mapping, "Ground-truth mapping")->required();
  ver->add_option("--out", o.out, "Output file (stdout when omitted)");

  CLI::App* rep = app.add_subcommand("report", "Re-emit a pipeline report");
  rep->add_option("--report", o.report, "Pipeline report")->required();
  rep->add_option("--out", o.out, "Output file (stdout when omitted)");
  add_format(rep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (sim->parsed()) return Simulate(o);
    if (rec->parsed()) return Recover(o);
    if (dec->parsed()) return DecomposeCmd(o);
    if (ver->parsed()) return Verify(o);
    return Report(o);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.kind() == ErrorKind::kInvalidMapping ||
                   e.kind() == ErrorKind::kInvalidArgument
               ? kExitUsage
               : kExitFailed;
  }
}
