#include "sudoku/report.h"

#include <ostream>

#include "json.hpp"
#include "kv.h"
#include "sudoku/error.h"

namespace sudoku {
namespace {

using Json = nlohmann::ordered_json;

std::optional<Evidence> EvidenceFromName(std::string_view name) {
  for (Evidence e : {Evidence::kConflict, Evidence::kRefresh,
                     Evidence::kConsecutive, Evidence::kHint,
                     Evidence::kRepair}) {
    if (EvidenceName(e) == name) return e;
  }
  return std::nullopt;
}

BitMask MaskField(const Json& j, const char* field) {
  const std::string text = j.at(field).get<std::string>();
  const auto m = ParseMask(text);
  if (!m) throw ParseError(0, field, "bad hex mask '" + text + "'");
  return *m;
}

std::string LabeledBy(const FunctionProvenance& p) {
  std::string out;
  for (Evidence e : p.labeled_by) {
    if (!out.empty()) out += '+';
    out += EvidenceName(e);
  }
  return out;
}

}  // namespace

std::string ReportToJson(const RecoveredMapping& result) {
  const DramAddressMapping& m = result.mapping;
  Json doc;
  doc["schema_version"] = kReportSchemaVersion;
  doc["addr_width"] = m.addr_width;
  doc["offset_bits"] = m.offset_bits;
  Json functions = Json::array();
  for (std::size_t i = 0; i < m.functions.size(); ++i) {
    const AddressingFunction& f = m.functions[i];
    Json jf;
    jf["mask"] = FormatMask(f.mask);
    jf["label"] = ClassName(f.label);
    FunctionProvenance p;
    if (i < result.provenance.size()) p = result.provenance[i];
    jf["recovered_by"] = EvidenceName(p.recovered_by);
    Json labeled = Json::array();
    for (Evidence e : p.labeled_by) labeled.push_back(EvidenceName(e));
    jf["labeled_by"] = labeled;
    jf["confidence"] = p.confidence;
    jf["notes"] = p.notes;
    functions.push_back(std::move(jf));
  }
  doc["functions"] = std::move(functions);
  doc["row_mask"] = FormatMask(m.row_mask);
  doc["column_mask"] = FormatMask(m.col_mask);
  Json inj = Json::array();
  for (const SubsystemReport& r : result.injectivity) {
    Json jr;
    jr["bits"] = FormatMask(r.bits);
    jr["functions"] = r.subsystem.size();
    jr["bit_count"] = r.bit_count;
    jr["rank"] = r.rank;
    jr["injective"] = r.injective;
    inj.push_back(std::move(jr));
  }
  doc["injectivity"] = std::move(inj);
  if (result.threshold) {
    const ThresholdFit& t = *result.threshold;
    doc["threshold"] = {{"threshold", t.threshold},
                        {"low_center", t.low_center},
                        {"high_center", t.high_center},
                        {"jitter", t.jitter}};
  } else {
    doc["threshold"] = nullptr;
  }
  if (result.refresh_estimate) {
    const RefreshCountEstimate& e = *result.refresh_estimate;
    doc["refresh_estimate"] = {
        {"pairs", e.pairs},   {"reduced", e.reduced}, {"failed", e.failed},
        {"p", e.p},           {"p_low", e.p_low},     {"p_high", e.p_high},
        {"k", e.k},           {"k_low", e.k_low},     {"k_high", e.k_high}};
  } else {
    doc["refresh_estimate"] = nullptr;
  }
  doc["notes"] = result.notes;
  doc["accesses"] = result.accesses;
  return doc.dump(2) + "\n";
}

void WriteReportCsv(const RecoveredMapping& result, std::ostream& out) {
  out << "mask,label,recovered_by,labeled_by,confidence\n";
  const DramAddressMapping& m = result.mapping;
  for (std::size_t i = 0; i < m.functions.size(); ++i) {
    FunctionProvenance p;
    if (i < result.provenance.size()) p = result.provenance[i];
    out << FormatMask(m.functions[i].mask) << ','
        << ClassName(m.functions[i].label) << ','
        << EvidenceName(p.recovered_by) << ',' << LabeledBy(p) << ','
        << kv::FormatReal(p.confidence) << '\n';
  }
  out << FormatMask(m.row_mask) << ",row,,,\n";
  out << FormatMask(m.col_mask) << ",column,,,\n";
}

RecoveredMapping ParseReport(std::string_view json) {
  Json doc;
  try {
    doc = Json::parse(json);
  } catch (const Json::parse_error& e) {
    throw ParseError(0, "", std::string("malformed JSON: ") + e.what());
  }
  try {
    if (doc.at("schema_version").get<int>() != kReportSchemaVersion) {
      throw ParseError(0, "schema_version", "unsupported version");
    }
    RecoveredMapping r;
    DramAddressMapping& m = r.mapping;
    m.addr_width = doc.at("addr_width").get<unsigned>();
    m.offset_bits = doc.at("offset_bits").get<unsigned>();
    for (const Json& jf : doc.at("functions")) {
      const std::string label = jf.at("label").get<std::string>();
      const auto cls = ClassFromName(label);
      if (!cls || *cls == ComponentClass::kRow ||
          *cls == ComponentClass::kColumn) {
        throw ParseError(0, "label", "unknown function class '" + label + "'");
      }
      m.functions.push_back({MaskField(jf, "mask"), *cls});
      FunctionProvenance p;
      const std::string rec = jf.value("recovered_by", "conflict");
      const auto e = EvidenceFromName(rec);
      if (!e) throw ParseError(0, "recovered_by", "unknown evidence '" + rec + "'");
      p.recovered_by = *e;
      for (const Json& jl : jf.value("labeled_by", Json::array())) {
        const std::string name = jl.get<std::string>();
        const auto l = EvidenceFromName(name);
        if (!l) throw ParseError(0, "labeled_by", "unknown evidence '" + name + "'");
        p.labeled_by.push_back(*l);
      }
      p.confidence = jf.value("confidence", 0.0);
      p.notes = jf.value("notes", "");
      r.provenance.push_back(std::move(p));
    }
    m.row_mask = MaskField(doc, "row_mask");
    m.col_mask = MaskField(doc, "column_mask");
    try {
      ValidateStructure(m);
    } catch (const Error& e) {
      throw ParseError(0, "functions", e.what());
    }
    if (const auto it = doc.find("threshold"); it != doc.end() && !it->is_null()) {
      r.threshold = ThresholdFit{it->at("threshold").get<double>(),
                                 it->at("low_center").get<double>(),
                                 it->at("high_center").get<double>(),
                                 it->at("jitter").get<double>()};
    }
    if (const auto it = doc.find("refresh_estimate");
        it != doc.end() && !it->is_null()) {
      RefreshCountEstimate e;
      e.pairs = it->at("pairs").get<std::size_t>();
      e.reduced = it->at("reduced").get<std::size_t>();
      e.failed = it->at("failed").get<std::size_t>();
      e.p = it->at("p").get<double>();
      e.p_low = it->at("p_low").get<double>();
      e.p_high = it->at("p_high").get<double>();
      e.k = it->at("k").get<int>();
      e.k_low = it->at("k_low").get<int>();
      e.k_high = it->at("k_high").get<int>();
      r.refresh_estimate = e;
    }
    r.notes = doc.value("notes", std::vector<std::string>{});
    r.accesses = doc.value("accesses", std::uint64_t{0});
    r.injectivity = InjectivityCheck(m);
    return r;
  } catch (const Json::exception& e) {
    throw ParseError(0, "", std::string("bad report: ") + e.what());
  }
}

RecoveredMapping LoadReportFile(const std::string& path) {
  return ParseReport(kv::ReadFile(path));
}

}  // namespace sudoku
