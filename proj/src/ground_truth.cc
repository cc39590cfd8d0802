#include "sudoku/ground_truth.h"

#include <cstdint>
#include <initializer_list>
#include <utility>

#include "sudoku/error.h"

namespace sudoku {
namespace {

using C = ComponentClass;

struct Row {
  const char* name;
  std::initializer_list<std::pair<std::uint64_t, ComponentClass>> functions;
  std::uint64_t row;
  std::uint64_t column;
};

std::vector<NamedMapping> Build() {
  const Row rows[] = {
      {"intel_a_1ch_1dpc",
       {{0x0000088000ULL, C::kDimmRank},
        {0x0000002a00ULL, C::kBankGroup},
        {0x0124044000ULL, C::kBankGroup},
        {0x0249910000ULL, C::kBankAddress},
        {0x0492620000ULL, C::kBankAddress}},
       0x07fffc0000ULL,
       0x0000001fc0ULL},
      {"intel_a_1ch_2dpc",
       {{0x0000108000ULL, C::kDimmRank},
        {0x0000420000ULL, C::kDimmRank},
        {0x0000002a00ULL, C::kBankGroup},
        {0x0924084000ULL, C::kBankGroup},
        {0x0249210000ULL, C::kBankAddress},
        {0x0492840000ULL, C::kBankAddress}},
       0x0ffff80000ULL,
       0x0000001fc0ULL},
      {"intel_a_2ch_1dpc",
       {{0x0000082600ULL, C::kChannel},
        {0x0000110000ULL, C::kDimmRank},
        {0x0000005400ULL, C::kBankGroup},
        {0x0248088000ULL, C::kBankGroup},
        {0x0493220000ULL, C::kBankAddress},
        {0x0924c40000ULL, C::kBankAddress}},
       0x0ffff80000ULL,
       0x0000001fc0ULL},
      {"intel_a_2ch_2dpc",
       {{0x0000082600ULL, C::kChannel},
        {0x0000210000ULL, C::kDimmRank},
        {0x0000840000ULL, C::kDimmRank},
        {0x0000005400ULL, C::kBankGroup},
        {0x1248108000ULL, C::kBankGroup},
        {0x0492420000ULL, C::kBankAddress},
        {0x0925080000ULL, C::kBankAddress}},
       0x1ffff00000ULL,
       0x0000001fc0ULL},
      {"intel_bc_1ch_1dpc",
       {{0x00000c3200ULL, C::kChannel},
        {0x0000410000ULL, C::kDimmRank},
        {0x0000081100ULL, C::kBankGroup},
        {0x0222104000ULL, C::kBankGroup},
        {0x0442080000ULL, C::kBankGroup},
        {0x0088820000ULL, C::kBankAddress},
        {0x0111040000ULL, C::kBankAddress}},
       0x07fff80000ULL,
       0x0000000fc0ULL},
      {"intel_bc_1ch_2dpc",
       {{0x00000c3200ULL, C::kChannel},
        {0x0000810000ULL, C::kDimmRank},
        {0x0001040000ULL, C::kDimmRank},
        {0x0000081100ULL, C::kBankGroup},
        {0x0222104000ULL, C::kBankGroup},
        {0x0444408000ULL, C::kBankGroup},
        {0x0114100000ULL, C::kBankAddress},
        {0x088a020000ULL, C::kBankAddress}},
       0x0fffe80000ULL,
       0x0000000fc0ULL},
      {"intel_bc_2ch_1dpc",
       {{0x0000104200ULL, C::kChannel},
        {0x0000186400ULL, C::kChannel},
        {0x0000820000ULL, C::kDimmRank},
        {0x0000102100ULL, C::kBankGroup},
        {0x0444208000ULL, C::kBankGroup},
        {0x0888410000ULL, C::kBankGroup},
        {0x0111040000ULL, C::kBankAddress},
        {0x0222080000ULL, C::kBankAddress}},
       0x0ffff00000ULL,
       0x0000001bc0ULL},
      {"intel_bc_2ch_2dpc",
       {{0x0000104200ULL, C::kChannel},
        {0x0000186400ULL, C::kChannel},
        {0x0001020000ULL, C::kDimmRank},
        {0x0002080000ULL, C::kDimmRank},
        {0x0000102100ULL, C::kBankGroup},
        {0x0444408000ULL, C::kBankGroup},
        {0x0888810000ULL, C::kBankGroup},
        {0x0228200000ULL, C::kBankAddress},
        {0x1114040000ULL, C::kBankAddress}},
       0x1fffd00000ULL,
       0x0000001bc0ULL},
      {"amd_a_1ch_1dpc",
       {{0x07fff80040ULL, C::kChannel},
        {0x0000040000ULL, C::kDimmRank},
        {0x0084200100ULL, C::kBankGroup},
        {0x0108400200ULL, C::kBankGroup},
        {0x0210801000ULL, C::kBankGroup},
        {0x0042100800ULL, C::kBankAddress},
        {0x0421080400ULL, C::kBankAddress}},
       0x07fff80000ULL,
       0x000003e080ULL},
      {"amd_a_1ch_2dpc",
       {{0x0ffff00040ULL, C::kChannel},
        {0x0000040000ULL, C::kDimmRank},
        {0x0000080000ULL, C::kDimmRank},
        {0x0108400100ULL, C::kBankGroup},
        {0x0210800200ULL, C::kBankGroup},
        {0x0421001000ULL, C::kBankGroup},
        {0x0084200800ULL, C::kBankAddress},
        {0x0842100400ULL, C::kBankAddress}},
       0x0ffff00000ULL,
       0x000003e080ULL},
      {"amd_a_2ch_1dpc",
       {{0x0000000100ULL, C::kChannel},
        {0x0ffff00040ULL, C::kChannel},
        {0x0000080000ULL, C::kDimmRank},
        {0x0108400200ULL, C::kBankGroup},
        {0x0210800400ULL, C::kBankGroup},
        {0x0421002000ULL, C::kBankGroup},
        {0x0084201000ULL, C::kBankAddress},
        {0x0842100800ULL, C::kBankAddress}},
       0x0ffff00000ULL,
       0x000007c080ULL},
      {"amd_a_2ch_2dpc",
       {{0x0000000100ULL, C::kChannel},
        {0x1fffe00040ULL, C::kChannel},
        {0x0000080000ULL, C::kDimmRank},
        {0x0000100000ULL, C::kDimmRank},
        {0x0210800200ULL, C::kBankGroup},
        {0x0421000400ULL, C::kBankGroup},
        {0x0842002000ULL, C::kBankGroup},
        {0x0108401000ULL, C::kBankAddress},
        {0x1084200800ULL, C::kBankAddress}},
       0x1fffe00000ULL,
       0x000007c080ULL},
  };
  std::vector<NamedMapping> out;
  for (const Row& r : rows) {
    DramAddressMapping m;
    for (const auto& [mask, label] : r.functions) {
      m.functions.push_back({BitMask(mask), label});
    }
    m.row_mask = BitMask(r.row);
    m.col_mask = BitMask(r.column);
    out.push_back({r.name, std::move(m)});
  }
  return out;
}

}  // namespace

const std::vector<NamedMapping>& GroundTruthMappings() {
  static const std::vector<NamedMapping> kMappings = Build();
  return kMappings;
}

const DramAddressMapping& GroundTruth(std::string_view name) {
  for (const auto& nm : GroundTruthMappings()) {
    if (nm.name == name) return nm.mapping;
  }
  throw Error(ErrorKind::kInvalidArgument,
              "unknown mapping '" + std::string(name) + "'");
}

}  // namespace sudoku
