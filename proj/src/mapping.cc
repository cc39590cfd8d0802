#include "sudoku/mapping.h"

#include <algorithm>
#include <sstream>

#include "sudoku/error.h"
#include "kv.h"

namespace sudoku {

std::string_view ClassName(ComponentClass c) {
  switch (c) {
    case ComponentClass::kChannel: return "channel";
    case ComponentClass::kSubChannel: return "subchannel";
    case ComponentClass::kDimmRank: return "dimm_rank";
    case ComponentClass::kBankGroup: return "bank_group";
    case ComponentClass::kBankAddress: return "bank_address";
    case ComponentClass::kRow: return "row";
    case ComponentClass::kColumn: return "column";
    case ComponentClass::kUnassigned: return "unassigned";
  }
  return "unassigned";
}

std::optional<ComponentClass> ClassFromName(std::string_view name) {
  for (ComponentClass c :
       {ComponentClass::kChannel, ComponentClass::kSubChannel,
        ComponentClass::kDimmRank, ComponentClass::kBankGroup,
        ComponentClass::kBankAddress, ComponentClass::kRow,
        ComponentClass::kColumn, ComponentClass::kUnassigned}) {
    if (ClassName(c) == name) return c;
  }
  return std::nullopt;
}

std::vector<BitMask> DramAddressMapping::FunctionMasks() const {
  std::vector<BitMask> out;
  out.reserve(functions.size());
  for (const auto& f : functions) out.push_back(f.mask);
  return out;
}

std::vector<BitMask> DramAddressMapping::FunctionsOf(ComponentClass c) const {
  std::vector<BitMask> out;
  for (const auto& f : functions) {
    if (f.label == c) out.push_back(f.mask);
  }
  return out;
}

BitMask DramAddressMapping::BitUniverse() const {
  BitMask u = row_mask | col_mask;
  for (const auto& f : functions) u |= f.mask;
  return u;
}

void ValidateStructure(const DramAddressMapping& mapping) {
  if (mapping.addr_width > 64 || mapping.offset_bits >= mapping.addr_width) {
    throw Error(ErrorKind::kInvalidMapping, "bad addr_width/offset_bits");
  }
  const BitMask usable = mapping.UsableBits();
  for (const auto& f : mapping.functions) {
    if (f.mask.empty()) {
      throw Error(ErrorKind::kInvalidMapping, "zero function mask");
    }
    if (f.label == ComponentClass::kRow || f.label == ComponentClass::kColumn) {
      throw Error(ErrorKind::kInvalidMapping,
                  "row/column are masks, not function labels");
    }
    if (!(f.mask & ~usable).empty()) {
      throw Error(ErrorKind::kInvalidMapping,
                  "function " + FormatMask(f.mask) + " outside usable bits");
    }
  }
  if (!((mapping.row_mask | mapping.col_mask) & ~usable).empty()) {
    throw Error(ErrorKind::kInvalidMapping, "row/column bits outside usable bits");
  }
  if (!(mapping.row_mask & mapping.col_mask).empty()) {
    throw Error(ErrorKind::kInvalidMapping, "row and column masks overlap");
  }
}

std::uint64_t DramCoordinate::Index(ComponentClass c) const {
  switch (c) {
    case ComponentClass::kChannel: return channel;
    case ComponentClass::kSubChannel: return subchannel;
    case ComponentClass::kDimmRank: return dimm_rank;
    case ComponentClass::kBankGroup: return bank_group;
    case ComponentClass::kBankAddress: return bank_address;
    case ComponentClass::kRow: return row;
    case ComponentClass::kColumn: return column;
    case ComponentClass::kUnassigned: return unassigned;
  }
  return 0;
}

std::uint64_t CompactBits(PhysAddr addr, BitMask mask) {
  std::uint64_t out = 0;
  unsigned pos = 0;
  for (std::uint64_t rest = mask.bits; rest != 0; rest &= rest - 1, ++pos) {
    out |= ((addr >> std::countr_zero(rest)) & 1) << pos;
  }
  return out;
}

DramCoordinate Decode(const DramAddressMapping& mapping, PhysAddr addr) {
  DramCoordinate coord;
  std::array<unsigned, 8> next_bit{};
  for (const auto& f : mapping.functions) {
    const auto slot = static_cast<std::size_t>(f.label);
    const std::uint64_t bit = Parity(f.mask, addr);
    const std::uint64_t shifted = bit << next_bit[slot]++;
    switch (f.label) {
      case ComponentClass::kChannel: coord.channel |= shifted; break;
      case ComponentClass::kSubChannel: coord.subchannel |= shifted; break;
      case ComponentClass::kDimmRank: coord.dimm_rank |= shifted; break;
      case ComponentClass::kBankGroup: coord.bank_group |= shifted; break;
      case ComponentClass::kBankAddress: coord.bank_address |= shifted; break;
      default: coord.unassigned |= shifted; break;
    }
  }
  coord.row = CompactBits(addr, mapping.row_mask);
  coord.column = CompactBits(addr, mapping.col_mask);
  return coord;
}

bool SameComponent(const DramAddressMapping& mapping, PhysAddr a, PhysAddr b,
                   ComponentClass c) {
  if (c == ComponentClass::kRow) {
    return CompactBits(a, mapping.row_mask) == CompactBits(b, mapping.row_mask);
  }
  if (c == ComponentClass::kColumn) {
    return CompactBits(a, mapping.col_mask) == CompactBits(b, mapping.col_mask);
  }
  const PhysAddr diff = a ^ b;
  for (const auto& f : mapping.functions) {
    if (f.label == c && Parity(f.mask, diff) != 0) return false;
  }
  return true;
}

bool SameBank(const DramAddressMapping& mapping, PhysAddr a, PhysAddr b) {
  const PhysAddr diff = a ^ b;
  return std::none_of(
      mapping.functions.begin(), mapping.functions.end(),
      [diff](const AddressingFunction& f) { return Parity(f.mask, diff) != 0; });
}

Gf2System InjectivitySystem(const DramAddressMapping& mapping) {
  std::vector<BitMask> rows;
  auto add = [&rows](BitMask m) {
    // A repeated row adds nothing to the rank; keeping one copy preserves the
    // deficit the duplicate represents.
    if (std::find(rows.begin(), rows.end(), m) == rows.end()) rows.push_back(m);
  };
  for (const auto& f : mapping.functions) add(f.mask);
  for (unsigned b : mapping.row_mask.Indices()) add(BitMask::Bit(b));
  for (unsigned b : mapping.col_mask.Indices()) add(BitMask::Bit(b));
  return Gf2System(std::move(rows));
}

std::vector<SubsystemReport> InjectivityCheck(const DramAddressMapping& mapping,
                                              BitMask universe) {
  std::vector<SubsystemReport> out;
  const Gf2System system = InjectivitySystem(mapping);
  for (Gf2System& sub : DisjointPartition(system)) {
    SubsystemReport report;
    report.bits = sub.bit_universe();
    report.bit_count = static_cast<std::size_t>(report.bits.popcount());
    report.rank = Rank(sub);
    report.injective = report.rank == report.bit_count;
    report.subsystem = std::move(sub);
    out.push_back(std::move(report));
  }
  // Address bits nothing decodes: each one is a deficit on its own.
  for (unsigned b : (universe & ~system.bit_universe()).Indices()) {
    SubsystemReport report;
    report.bits = BitMask::Bit(b);
    report.bit_count = 1;
    out.push_back(std::move(report));
  }
  return out;
}

bool IsInjective(const DramAddressMapping& mapping, BitMask universe) {
  const auto reports = InjectivityCheck(mapping, universe);
  return std::all_of(reports.begin(), reports.end(),
                     [](const SubsystemReport& r) { return r.injective; });
}

std::vector<BitMask> SuggestMissing(const SubsystemReport& report) {
  if (report.injective) {
    throw Error(ErrorKind::kAlreadyInjective,
                "subsystem over " + FormatMask(report.bits) +
                    " already has full rank");
  }
  return NullspaceBasis(report.subsystem.functions(), report.bits);
}

DramAddressMapping LoadMapping(std::string_view text) {
  DramAddressMapping mapping;
  std::vector<std::size_t> function_lines;
  std::size_t row_line = 0;
  std::size_t col_line = 0;
  std::size_t last_line = 0;
  bool saw_row = false;
  bool saw_col = false;
  for (const kv::Entry& e : kv::Parse(text)) {
    last_line = e.line;
    const std::string_view key = e.key;
    if (key == "addr_width" || key == "offset_bits") {
      const std::int64_t v = kv::Int(e);
      if (v < 0 || v > 64) throw ParseError(e.line, e.key, "out of range");
      (key == "addr_width" ? mapping.addr_width : mapping.offset_bits) =
          static_cast<unsigned>(v);
    } else if (key == "row") {
      if (saw_row) throw ParseError(e.line, e.key, "repeated key");
      mapping.row_mask = kv::Mask(e);
      saw_row = true;
      row_line = e.line;
    } else if (key == "column") {
      if (saw_col) throw ParseError(e.line, e.key, "repeated key");
      mapping.col_mask = kv::Mask(e);
      saw_col = true;
      col_line = e.line;
    } else if (key.size() > 2 && key.ends_with("[]")) {
      const auto cls = ClassFromName(key.substr(0, key.size() - 2));
      if (!cls || *cls == ComponentClass::kRow ||
          *cls == ComponentClass::kColumn) {
        throw ParseError(e.line, e.key, "unknown function class");
      }
      const BitMask m = kv::Mask(e);
      if (m.empty()) throw ParseError(e.line, e.key, "zero mask");
      for (std::size_t i = 0; i < mapping.functions.size(); ++i) {
        if (mapping.functions[i].mask == m) {
          throw ParseError(e.line, e.key,
                           "duplicate function mask (first on line " +
                               std::to_string(function_lines[i]) + ")");
        }
      }
      mapping.functions.push_back({m, *cls});
      function_lines.push_back(e.line);
    } else {
      throw ParseError(e.line, e.key, "unknown key");
    }
  }
  if (mapping.addr_width == 0 || mapping.offset_bits >= mapping.addr_width) {
    throw ParseError(last_line, "addr_width", "inconsistent width/offset");
  }
  if (!(mapping.row_mask & mapping.col_mask).empty()) {
    throw ParseError(std::max(row_line, col_line), "column",
                     "row and column masks overlap");
  }
  const BitMask usable = mapping.UsableBits();
  for (std::size_t i = 0; i < mapping.functions.size(); ++i) {
    if (!(mapping.functions[i].mask & ~usable).empty()) {
      throw ParseError(function_lines[i],
                       std::string(ClassName(mapping.functions[i].label)) + "[]",
                       "mask outside [offset_bits, addr_width)");
    }
  }
  if (!(mapping.row_mask & ~usable).empty()) {
    throw ParseError(row_line, "row", "mask outside [offset_bits, addr_width)");
  }
  if (!(mapping.col_mask & ~usable).empty()) {
    throw ParseError(col_line, "column",
                     "mask outside [offset_bits, addr_width)");
  }
  return mapping;
}

std::string StoreMapping(const DramAddressMapping& mapping) {
  std::ostringstream out;
  out << "addr_width = " << mapping.addr_width << "\n";
  out << "offset_bits = " << mapping.offset_bits << "\n";
  for (const auto& f : mapping.functions) {
    out << ClassName(f.label) << "[] = " << FormatMask(f.mask) << "\n";
  }
  out << "row = " << FormatMask(mapping.row_mask) << "\n";
  out << "column = " << FormatMask(mapping.col_mask) << "\n";
  return out.str();
}

DramAddressMapping LoadMappingFile(const std::string& path) {
  return LoadMapping(kv::ReadFile(path));
}

}  // namespace sudoku
